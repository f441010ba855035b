#pragma once

// Separable unraveling of a density operator over single-qubit stabilizer product states,
// solved as simplex-constrained least squares in the Pauli basis.

#include <algorithm>
#include <numeric>

#include "thermal.hpp"

namespace qthermal {

/// Six single-qubit stabilizer states in the order |0>, |1>, |+>, |->, |+i>, |-i>.
inline QubitState stabilizer_qubit(int s) {
    const double r = 1.0 / std::sqrt(2.0);
    switch (s) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, 1.0};
        case 2: return {r, r};
        case 3: return {r, -r};
        case 4: return {r, cplx(0, r)};
        case 5: return {r, cplx(0, -r)};
        default: throw ValidationError("stabilizer state index must be in [0,6)");
    }
}

/// Decode a base-6 product index (site 0 = least significant digit).
inline std::vector<QubitState> stabilizer_product_sites(std::uint64_t index, int num_qubits) {
    std::vector<QubitState> sites;
    for (int q = 0; q < num_qubits; ++q) {
        sites.push_back(stabilizer_qubit(static_cast<int>(index % 6)));
        index /= 6;
    }
    return sites;
}

inline StateVector stabilizer_product_state(std::uint64_t index, int num_qubits) {
    return product_state(stabilizer_product_sites(index, num_qubits));
}

inline std::uint64_t ipow(std::uint64_t base, int e) {
    std::uint64_t r = 1;
    while (e-- > 0) r *= base;
    return r;
}

namespace detail {

/// Applies the same small matrix along every mode of a tensor stored with mode 0 fastest.
inline std::vector<double> kron_apply(const Eigen::MatrixXd& m, const std::vector<double>& in, int modes) {
    std::vector<double> cur = in;
    const auto rows = static_cast<std::size_t>(m.rows()), cols = static_cast<std::size_t>(m.cols());
    std::size_t inner = 1;  // product of already-transformed mode sizes (rows)
    std::size_t outer = cur.size() / cols;
    for (int q = 0; q < modes; ++q) {
        std::vector<double> next(outer * rows * inner, 0.0);
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t c = 0; c < cols; ++c) {
                const double* src = &cur[(o * cols + c) * inner];
                for (std::size_t r = 0; r < rows; ++r) {
                    const double w = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
                    if (w == 0.0) continue;
                    double* dst = &next[(o * rows + r) * inner];
                    for (std::size_t i = 0; i < inner; ++i) dst[i] += w * src[i];
                }
            }
        cur.swap(next);
        inner *= rows;
        if (q + 1 < modes) outer /= cols;
    }
    return cur;
}

/// Euclidean projection onto the probability simplex.
inline void project_simplex(std::vector<double>& v) {
    std::vector<double> u = v;
    std::sort(u.begin(), u.end(), std::greater<>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        cum += u[k];
        const double t = (cum - 1.0) / static_cast<double>(k + 1);
        if (u[k] - t > 0) theta = t;
    }
    for (auto& x : v) x = std::max(x - theta, 0.0);
}

}  // namespace detail

/// Rows I, X, Y, Z; columns the six stabilizer states: entries tr(P |s><s|).
inline Eigen::MatrixXd stabilizer_design_block() {
    Eigen::MatrixXd a(4, 6);
    a << 1, 1, 1, 1, 1, 1,
         0, 0, 1, -1, 0, 0,
         0, 0, 0, 0, 1, -1,
         1, -1, 0, 0, 0, 0;
    return a;
}

/// tr(rho P) for all 4^N Pauli strings, base-4 digit q holding the letter on site q (I,X,Y,Z = 0..3).
inline std::vector<double> pauli_coefficients(const DenseOperator& rho) {
    const int n = qubits_of_dim(rho.rows());
    const std::uint64_t count = ipow(4, n);
    std::vector<double> t(count);
    for (std::uint64_t code = 0; code < count; ++code) {
        PauliMasks m;
        std::uint64_t c = code;
        for (int q = 0; q < n; ++q, c /= 4) {
            const auto p = static_cast<Pauli>(c % 4);
            if (p == Pauli::X || p == Pauli::Y) m.x |= std::uint64_t{1} << q;
            if (p == Pauli::Z || p == Pauli::Y) m.z |= std::uint64_t{1} << q;
            if (p == Pauli::Y) ++m.num_y;
        }
        t[code] = detail::local_expectation(rho, m);
    }
    return t;
}

struct UnravelingResult {
    int num_qubits = 0;
    std::vector<std::pair<std::uint64_t, double>> probabilities;  // (product index, weight), weight > 0
    double residual = 0.0;                                         // Frobenius norm of sum p psi - rho
    bool feasible = false;
    std::size_t iterations = 0;

    /// sum_psi p_psi |psi><psi|.
    DenseOperator mixture() const {
        const auto d = static_cast<Eigen::Index>(hilbert_dim(num_qubits));
        DenseOperator rho = DenseOperator::Zero(d, d);
        for (const auto& [idx, p] : probabilities) {
            const auto psi = stabilizer_product_state(idx, num_qubits);
            rho.noalias() += p * (psi * psi.adjoint());
        }
        return rho;
    }
};

struct UnravelOptions {
    int max_qubits = 6;
    std::size_t max_iterations = 100000;
    double feasibility_tolerance = 1e-6;
    double stop_residual = 1e-14;
};

inline constexpr double kUnravelWeightCutoff = 1e-15;

/// min ||sum_psi p_psi psi - rho||_F over the simplex, accelerated projected gradient with restarts.
inline UnravelingResult unravel(const DenseOperator& rho, const UnravelOptions& opt = {}) {
    const int n = qubits_of_dim(rho.rows());
    if (n > opt.max_qubits)
        throw ResourceError("unraveling over 6^N product states capped at N=" + std::to_string(opt.max_qubits));
    const Eigen::MatrixXd a = stabilizer_design_block();
    const Eigen::MatrixXd at = a.transpose();
    const std::vector<double> target = pauli_coefficients(rho);
    const std::size_t cols = ipow(6, n);
    const double lipschitz = static_cast<double>(cols);  // ||a||^2 = 6 per mode
    const double norm = std::ldexp(1.0, -n);

    auto residual_vec = [&](const std::vector<double>& p) {
        auto r = detail::kron_apply(a, p, n);
        for (std::size_t i = 0; i < r.size(); ++i) r[i] -= target[i];
        return r;
    };
    auto objective = [&](const std::vector<double>& r) {
        double s = 0;
        for (double v : r) s += v * v;
        return s;
    };

    std::vector<double> x(cols, 1.0 / static_cast<double>(cols)), y = x, x_next(cols);
    std::vector<double> rx = residual_vec(x);
    double fx = objective(rx);
    double t = 1.0;
    std::size_t it = 0, stalled = 0;
    for (; it < opt.max_iterations && std::sqrt(fx * norm) > opt.stop_residual; ++it) {
        const auto ry = residual_vec(y);
        const auto grad = detail::kron_apply(at, ry, n);
        for (std::size_t i = 0; i < cols; ++i) x_next[i] = y[i] - grad[i] / lipschitz;
        detail::project_simplex(x_next);
        auto rn = residual_vec(x_next);
        const double fn = objective(rn);
        double change = 0.0;
        for (std::size_t i = 0; i < cols; ++i) change = std::max(change, std::abs(x_next[i] - x[i]));
        if (fn > fx) {
            // Restart momentum from the current iterate.
            t = 1.0;
            y = x;
            ++stalled;
            if (stalled > 20) break;
            continue;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        for (std::size_t i = 0; i < cols; ++i) y[i] = x_next[i] + ((t - 1.0) / t_next) * (x_next[i] - x[i]);
        t = t_next;
        stalled = change < 1e-16 ? stalled + 1 : 0;
        x.swap(x_next);
        rx = std::move(rn);
        fx = fn;
        if (stalled > 20) break;
    }
    UnravelingResult res;
    res.num_qubits = n;
    res.iterations = it;
    double total = 0;
    for (std::size_t i = 0; i < cols; ++i)
        if (x[i] > kUnravelWeightCutoff) {
            res.probabilities.emplace_back(i, x[i]);
            total += x[i];
        }
    for (auto& [idx, p] : res.probabilities) p /= total;
    std::vector<double> dense(cols, 0.0);
    for (const auto& [idx, p] : res.probabilities) dense[idx] = p;
    res.residual = std::sqrt(objective(residual_vec(dense)) * norm);
    res.feasible = res.residual <= opt.feasibility_tolerance;
    return res;
}

inline UnravelingResult unravel_gibbs(const GibbsState& g, const UnravelOptions& opt = {}) {
    const int n = qubits_of_dim(static_cast<Eigen::Index>(g.dim()));
    if (n > opt.max_qubits)
        throw ResourceError("unraveling over 6^N product states capped at N=" + std::to_string(opt.max_qubits));
    return unravel(g.density(), opt);
}

}  // namespace qthermal

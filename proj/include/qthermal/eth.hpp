#pragma once

// Weak-ETH diagnostics: eigenstate expectation tables, deviation tails and concentration checks.

#include "dynamics.hpp"

namespace qthermal {

/// Observable on a region, stored as a 2^{N_A} matrix in the region's qubit order.
struct LocalObservable {
    std::string descriptor;
    LatticeSpec lattice;
    Region region;
    ComplexMatrix matrix;

    static LocalObservable pauli(const LatticeSpec& lattice, const PauliString& p) {
        const Region r(lattice, p.support());
        return {p.to_string(), lattice, r, local_pauli_matrix(p, r)};
    }
};

struct EigenstateExpectationTable {
    std::string descriptor;
    RealVector energies;
    RealVector values;   // <E_j|O_A|E_j>
    RealVector weights;  // p_j = <E_j|g|E_j>
    double thermal_value = 0.0;
    std::vector<std::string> warnings;
};

inline EigenstateExpectationTable eigenstate_expectations(const Spectrum& spec, const LocalObservable& o, const GibbsState& g,
                                                          int workers = 1) {
    require(!o.region.empty(), "observable region must be nonempty");
    require(o.matrix.rows() == static_cast<Eigen::Index>(hilbert_dim(static_cast<int>(o.region.size()))),
            "observable matrix does not match its region");
    require(is_hermitian(o.matrix), "observable must be Hermitian");
    EigenstateExpectationTable t;
    t.descriptor = o.descriptor;
    if (!is_geometrically_local(o.lattice, o.region))
        t.warnings.push_back("observable support is not geometrically local; theorem hypotheses not met");
    const double op_norm = Eigen::SelfAdjointEigenSolver<ComplexMatrix>(o.matrix).eigenvalues().cwiseAbs().maxCoeff();
    if (op_norm > 1 + 1e-12) t.warnings.push_back("observable operator norm exceeds 1");
    const int n = qubits_of_dim(static_cast<Eigen::Index>(spec.dim()));
    const Bipartition part(n, o.region);
    t.energies = spec.energies;
    t.weights = g.weights;
    t.values.resize(static_cast<Eigen::Index>(spec.dim()));
    parallel_for(spec.dim(), workers, [&](std::size_t j) {
        t.values[static_cast<Eigen::Index>(j)] = (o.matrix * part.reduce_pure(spec.vectors.col(static_cast<Eigen::Index>(j)))).trace().real();
    });
    t.thermal_value = (o.matrix * g.reduced(part)).trace().real();
    return t;
}

/// ||(|E_j><E_j| - g)_A||_1 for every eigenstate.
inline std::vector<double> eigenstate_deviation_norms(const Spectrum& spec, const GibbsState& g, const Bipartition& part,
                                                      int workers = 1) {
    const ComplexMatrix g_a = g.reduced(part);
    std::vector<double> out(spec.dim());
    parallel_for(spec.dim(), workers, [&](std::size_t j) {
        out[j] = trace_norm_hermitian(part.reduce_pure(spec.vectors.col(static_cast<Eigen::Index>(j))) - g_a);
    });
    return out;
}

inline constexpr int kWeakEthMaxQubits = 14;

inline double weighted_deviation_sum(const Spectrum& spec, const GibbsState& g, const Region& a, int workers = 1) {
    require(!a.empty(), "region A must be nonempty");
    const int n = qubits_of_dim(static_cast<Eigen::Index>(spec.dim()));
    if (n > kWeakEthMaxQubits)
        throw ResourceError("weighted deviation sum over 2^N eigenstates capped at N=" + std::to_string(kWeakEthMaxQubits));
    const auto norms = eigenstate_deviation_norms(spec, g, Bipartition(n, a), workers);
    double s = 0;
    for (std::size_t j = 0; j < norms.size(); ++j) s += g.weights[static_cast<Eigen::Index>(j)] * norms[j];
    return s;
}

struct WeakEthReport {
    std::vector<double> epsilons;
    std::vector<double> tail;  // P_{j ~ p}[deviation_j >= eps]
    double weighted_sum = 0.0;
};

inline WeakEthReport deviation_tail(const std::vector<double>& deviations, const RealVector& weights,
                                    const std::vector<double>& epsilons) {
    require(deviations.size() == static_cast<std::size_t>(weights.size()), "deviation and weight counts differ");
    WeakEthReport r;
    r.epsilons = epsilons;
    for (double eps : epsilons) {
        double p = 0;
        for (std::size_t j = 0; j < deviations.size(); ++j)
            if (deviations[j] >= eps) p += weights[static_cast<Eigen::Index>(j)];
        r.tail.push_back(std::min(p, 1.0));
    }
    for (std::size_t j = 0; j < deviations.size(); ++j) r.weighted_sum += weights[static_cast<Eigen::Index>(j)] * deviations[j];
    return r;
}

/// Tail of |<E_j|O|E_j> - tr(g O)| under the Gibbs weights.
inline WeakEthReport deviation_tail(const EigenstateExpectationTable& t, const std::vector<double>& epsilons) {
    std::vector<double> dev;
    for (Eigen::Index j = 0; j < t.values.size(); ++j) dev.push_back(std::abs(t.values[j] - t.thermal_value));
    return deviation_tail(dev, t.weights, epsilons);
}

struct TailSample {
    int num_sites;
    double epsilon;
    double tail;
};

struct TailExponentFit {
    double nu = 0.0;
    double rate = 0.0;  // log tail ~ intercept - rate * N^nu eps
    double r2 = 0.0;
    std::size_t used = 0;
};

/// Grid search over nu in [0.01, 1] for the best linear fit of log tail against N^nu eps.
inline TailExponentFit fit_tail_exponent(const std::vector<TailSample>& samples) {
    std::vector<TailSample> pos;
    for (const auto& s : samples)
        if (s.tail > 0) pos.push_back(s);
    if (pos.size() < 3) throw ValidationError("tail-exponent fit needs >= 3 positive tail values");
    TailExponentFit best;
    best.r2 = -std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 100; ++k) {
        const double nu = k / 100.0;
        std::vector<double> x, y;
        for (const auto& s : pos) {
            x.push_back(std::pow(static_cast<double>(s.num_sites), nu) * s.epsilon);
            y.push_back(std::log(s.tail));
        }
        const auto f = linear_fit(x, y);
        if (f.r2 > best.r2) best = {nu, -f.slope, f.r2, pos.size()};
    }
    return best;
}

inline double ensemble_equivalence_distance(const DiagonalEnsemble& diag, const GibbsState& g, const Bipartition& part) {
    return trace_norm_hermitian(diag.reduced(part) - g.reduced(part));
}

// ---------------------------------------------------------------------------
// Concentration inequality

struct ConcentrationRow {
    double tau = 0.0, lhs = 0.0, rhs = 0.0;
    double margin() const { return rhs - lhs; }
};

/// (8 e^3 g k)^{-1} with g the largest per-site sum of term norms of H and F, and k the largest term support.
inline double concentration_beta_c(const PauliTermSet& h, const PauliTermSet& f) {
    const int n = h.num_qubits();
    require(f.num_qubits() == n, "F and H live on different lattices");
    std::vector<double> load_h(static_cast<std::size_t>(n), 0.0), load_f(static_cast<std::size_t>(n), 0.0);
    std::size_t k = 1;
    for (const auto& [set, load] : {std::pair{&h, &load_h}, std::pair{&f, &load_f}})
        for (const auto& t : set->expanded()) {
            k = std::max(k, t.string.support().size());
            for (auto s : t.string.support()) (*load)[s.index] += std::abs(t.coeff);
        }
    const double g = std::max(*std::max_element(load_h.begin(), load_h.end()), *std::max_element(load_f.begin(), load_f.end()));
    return 1.0 / (8 * std::pow(std::numbers::e, 3) * g * static_cast<double>(k));
}

/// Inverse of 8 e^3 max{N_A^2, d K max_i ||h_i||}: the high-temperature weak-ETH threshold.
inline double weak_eth_threshold_beta(const PauliTermSet& h, int region_size) {
    const int n = h.num_qubits();
    std::vector<int> degree(static_cast<std::size_t>(n), 0);
    std::size_t kmax = 1;
    double hmax = 0;
    for (const auto& t : h.expanded()) {
        kmax = std::max(kmax, t.string.support().size());
        hmax = std::max(hmax, std::abs(t.coeff));
        for (auto s : t.string.support()) ++degree[s.index];
    }
    const double dk = *std::max_element(degree.begin(), degree.end()) * static_cast<double>(kmax) * hmax;
    return 1.0 / (8 * std::pow(std::numbers::e, 3) * std::max(static_cast<double>(region_size * region_size), dk));
}

/// LHS = log tr(e^{tau F} g) and RHS = tau tr(F g) + tau^2 B / (beta_c - beta - |tau|), B = sum of term norms of F.
inline std::vector<ConcentrationRow> concentration_inequality_check(const GibbsState& g, const PauliTermSet& f,
                                                                    const std::vector<double>& taus, double beta_c) {
    const int n = f.num_qubits();
    require(static_cast<std::size_t>(hilbert_dim(n)) == g.dim(), "F and Gibbs state sizes differ");
    double b = 0;
    for (const auto& t : f.expanded()) b += std::abs(t.coeff);
    std::vector<ConcentrationRow> out;
    if (b == 0) {
        for (double tau : taus) out.push_back({tau, 0.0, 0.0});
        return out;
    }
    const DenseOperator fd = build_hamiltonian(f);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(fd);
    const DenseOperator rho = g.density();
    const RealVector pops = (es.eigenvectors().adjoint() * rho * es.eigenvectors()).diagonal().real();
    const double mean_f = (fd * rho).trace().real();
    for (double tau : taus) {
        if (!(std::abs(tau) < beta_c - g.beta))
            throw ValidationError("|tau| must be below beta_c - beta for the concentration inequality");
        double top = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < pops.size(); ++k) top = std::max(top, tau * es.eigenvalues()[k]);
        double acc = 0;
        for (Eigen::Index k = 0; k < pops.size(); ++k) acc += std::max(pops[k], 0.0) * std::exp(tau * es.eigenvalues()[k] - top);
        const double lhs = top + std::log(acc);
        const double rhs = tau * mean_f + tau * tau * b / (beta_c - g.beta - std::abs(tau));
        out.push_back({tau, lhs, rhs});
    }
    return out;
}

}  // namespace qthermal

#pragma once

// Gibbs and generalized Gibbs states, reduced states, local trace norms, purity and correlations.

#include <cmath>
#include <memory>
#include <numbers>

#include "spectral.hpp"

namespace qthermal {

// ---------------------------------------------------------------------------
// Bipartitions and reduced states

/// Index split b -> (a, r) for region A and its complement. Bit order inside each part follows site order.
class Bipartition {
public:
    Bipartition(int num_qubits, const Region& region) : n_(num_qubits), region_(region) {
        for (auto s : region.sites()) require(static_cast<int>(s.index) < num_qubits, "region site outside the system");
        const std::uint64_t mask = region.mask();
        na_ = static_cast<int>(region.size());
        const std::size_t d = hilbert_dim(n_);
        a_of_.resize(d);
        r_of_.resize(d);
        for (std::uint64_t b = 0; b < d; ++b) {
            std::uint32_t a = 0, r = 0;
            int ia = 0, ir = 0;
            for (int s = 0; s < n_; ++s) {
                const std::uint32_t bit = (b >> s) & 1U;
                if ((mask >> s) & 1U) a |= bit << ia++;
                else r |= bit << ir++;
            }
            a_of_[b] = a;
            r_of_[b] = r;
        }
    }

    int num_qubits() const noexcept { return n_; }
    int region_qubits() const noexcept { return na_; }
    const Region& region() const noexcept { return region_; }
    Eigen::Index dim_a() const noexcept { return Eigen::Index{1} << na_; }
    Eigen::Index dim_rest() const noexcept { return Eigen::Index{1} << (n_ - na_); }

    /// psi reshaped to M(a, r).
    ComplexMatrix reshape(const StateVector& psi) const {
        require(psi.size() == static_cast<Eigen::Index>(a_of_.size()), "state dimension mismatch");
        ComplexMatrix m(dim_a(), dim_rest());
        for (std::size_t b = 0; b < a_of_.size(); ++b) m(a_of_[b], r_of_[b]) = psi[static_cast<Eigen::Index>(b)];
        return m;
    }

    /// tr_rest |psi><psi|.
    ComplexMatrix reduce_pure(const StateVector& psi) const {
        const ComplexMatrix m = reshape(psi);
        return m * m.adjoint();
    }

    /// tr_rest rho for a dense operator.
    ComplexMatrix reduce(const ComplexMatrix& rho) const {
        require(rho.rows() == static_cast<Eigen::Index>(a_of_.size()) && rho.cols() == rho.rows(), "operator dimension mismatch");
        ComplexMatrix out = ComplexMatrix::Zero(dim_a(), dim_a());
        // Group indices by complement configuration.
        std::vector<std::vector<std::uint32_t>> by_rest(static_cast<std::size_t>(dim_rest()));
        for (std::size_t b = 0; b < a_of_.size(); ++b) by_rest[r_of_[b]].push_back(static_cast<std::uint32_t>(b));
        for (const auto& group : by_rest)
            for (auto x : group)
                for (auto y : group) out(a_of_[x], a_of_[y]) += rho(x, y);
        return out;
    }

private:
    int n_;
    Region region_;
    int na_ = 0;
    std::vector<std::uint32_t> a_of_, r_of_;
};

inline int qubits_of_dim(Eigen::Index d) {
    int n = 0;
    while ((Eigen::Index{1} << n) < d) ++n;
    require((Eigen::Index{1} << n) == d, "dimension is not a power of two");
    return n;
}

inline DenseOperator partial_trace(const DenseOperator& rho, const Region& a) {
    return Bipartition(qubits_of_dim(rho.rows()), a).reduce(rho);
}

/// Sum of |eigenvalues| of a Hermitian matrix (its trace norm).
inline double trace_norm_hermitian(const ComplexMatrix& m) {
    const ComplexMatrix h = (m + m.adjoint()) / 2.0;
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().sum();
}

inline double local_trace_norm(const DenseOperator& rho, const DenseOperator& sigma, const Region& a) {
    require(rho.rows() == sigma.rows() && rho.cols() == sigma.cols(), "operator dimensions differ");
    return trace_norm_hermitian(partial_trace(rho - sigma, a));
}

inline double purity_of(const ComplexMatrix& rho_a) { return (rho_a * rho_a).trace().real(); }

/// sum_j w_j |v_j><v_j| for the columns of a spectrum, built densely.
inline DenseOperator spectral_density(const Spectrum& s, const RealVector& w) {
    return s.vectors * w.cast<cplx>().asDiagonal() * s.vectors.adjoint();
}

/// Reduced state of sum_j w_j |v_j><v_j| without forming the full operator.
inline ComplexMatrix reduce_mixture(const Spectrum& s, const RealVector& w, const Bipartition& part, double cutoff = 0.0) {
    ComplexMatrix out = ComplexMatrix::Zero(part.dim_a(), part.dim_a());
    for (Eigen::Index j = 0; j < w.size(); ++j) {
        if (w[j] <= cutoff) continue;
        const ComplexMatrix m = part.reshape(s.vectors.col(j));
        out.noalias() += w[j] * (m * m.adjoint());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gibbs state

struct GibbsState {
    double beta = 0.0;
    std::shared_ptr<const Spectrum> spectrum;
    RealVector weights;        // p_j = e^{-beta E_j} / Z
    double log_partition = 0;  // log Z
    double energy = 0;         // tr(g H)

    double partition() const { return std::exp(log_partition); }
    std::size_t dim() const { return spectrum->dim(); }
    DenseOperator density() const { return spectral_density(*spectrum, weights); }
    ComplexMatrix reduced(const Bipartition& part) const { return reduce_mixture(*spectrum, weights, part); }
};

inline RealVector boltzmann_weights(const RealVector& e, double beta, double* log_z = nullptr) {
    const double shift = beta >= 0 ? e.minCoeff() : e.maxCoeff();
    RealVector w = (-beta * (e.array() - shift)).exp().matrix();
    const double z = w.sum();
    if (log_z) *log_z = std::log(z) - beta * shift;
    return w / z;
}

inline GibbsState gibbs_state(std::shared_ptr<const Spectrum> s, double beta, bool allow_negative = false) {
    require(std::isfinite(beta), "beta must be finite");
    if (beta < 0 && !allow_negative) throw ValidationError("negative beta rejected; only nonnegative temperatures are considered");
    GibbsState g;
    g.beta = beta;
    g.spectrum = std::move(s);
    g.weights = boltzmann_weights(g.spectrum->energies, beta, &g.log_partition);
    g.energy = g.weights.dot(g.spectrum->energies);
    return g;
}

inline GibbsState gibbs_state(const DenseOperator& h, double beta, bool allow_negative = false) {
    return gibbs_state(std::make_shared<const Spectrum>(diagonalize(h)), beta, allow_negative);
}

inline double thermal_energy(const Spectrum& s, double beta) {
    return boltzmann_weights(s.energies, beta).dot(s.energies);
}

/// Nonnegative beta with tr(g_beta H) = target, by bisection on the monotone energy map.
inline double solve_beta_for_energy(const Spectrum& s, double target) {
    const double e_inf = s.energies.mean();
    const double e_min = s.min();
    const double tol = 1e-10 * std::max(s.width(), 1e-300);
    if (std::abs(target - e_inf) <= tol) return 0.0;
    if (!(target > e_min && target < e_inf))
        throw ValidationError("target energy " + std::to_string(target) + " outside attainable interval (" +
                              std::to_string(e_min) + ", " + std::to_string(e_inf) + "]");
    double lo = 0.0, hi = 1.0;
    while (thermal_energy(s, hi) > target) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e300) throw ConvergenceError("beta bracket diverged");
    }
    for (int it = 0; it < 400; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double e = thermal_energy(s, mid);
        if (std::abs(e - target) <= tol) return mid;
        (e > target ? lo : hi) = mid;
        if (hi - lo <= 1e-16 * hi) break;
    }
    const double mid = 0.5 * (lo + hi);
    if (std::abs(thermal_energy(s, mid) - target) > tol) throw ConvergenceError("beta bisection did not reach tolerance");
    return mid;
}

inline double subsystem_purity(const GibbsState& g, const Region& a) {
    return purity_of(g.reduced(Bipartition(qubits_of_dim(static_cast<Eigen::Index>(g.dim())), a)));
}

inline double subsystem_purity(const DenseOperator& rho, const Region& a) { return purity_of(partial_trace(rho, a)); }

// ---------------------------------------------------------------------------
// Correlations

namespace detail {

/// tr(rho P) on a local register, with P given by masks in that register's bit order.
inline double local_expectation(const ComplexMatrix& rho, const PauliMasks& m) {
    cplx acc = 0.0;
    for (Eigen::Index b = 0; b < rho.rows(); ++b)
        acc += rho(b, static_cast<Eigen::Index>(static_cast<std::uint64_t>(b) ^ m.x)) * m.phase(static_cast<std::uint64_t>(b));
    return acc.real();
}

inline std::vector<PauliMasks> local_pauli_masks(int offset, int count) {
    std::vector<PauliMasks> out;
    const std::size_t total = std::size_t{1} << (2 * count);
    for (std::size_t code = 1; code < total; ++code) {
        PauliMasks m;
        for (int q = 0; q < count; ++q) {
            const auto p = static_cast<Pauli>((code >> (2 * q)) & 3U);
            const std::uint64_t bit = std::uint64_t{1} << (offset + q);
            if (p == Pauli::X || p == Pauli::Y) m.x |= bit;
            if (p == Pauli::Z || p == Pauli::Y) m.z |= bit;
            if (p == Pauli::Y) ++m.num_y;
        }
        out.push_back(m);
    }
    return out;
}

inline PauliString masks_to_string(const PauliMasks& m, const std::vector<Site>& sites) {
    std::vector<std::pair<Site, Pauli>> letters;
    for (std::size_t q = 0; q < sites.size(); ++q) {
        const bool x = (m.x >> q) & 1U, z = (m.z >> q) & 1U;
        const Pauli p = x && z ? Pauli::Y : x ? Pauli::X : z ? Pauli::Z : Pauli::I;
        letters.emplace_back(sites[q], p);
    }
    return PauliString(std::move(letters));
}

}  // namespace detail

struct CorrelationValue {
    double value = 0.0;
    PauliString observable_a, observable_b;
};

inline constexpr int kCorrelationRegionCap = 2;

/// max over non-identity Pauli strings P_A, P_B of |<P_A P_B> - <P_A><P_B>| from the reduced state on A u B.
/// rho_ab is ordered by the sites of A u B (ascending site index).
inline CorrelationValue correlation_from_reduced(const ComplexMatrix& rho_ab, const LatticeSpec& lattice, const Region& a,
                                                 const Region& b) {
    const Region ab = region_union(lattice, a, b);
    std::vector<int> pos_a, pos_b;
    for (std::size_t q = 0; q < ab.sites().size(); ++q) (a.contains(ab.sites()[q]) ? pos_a : pos_b).push_back(static_cast<int>(q));
    auto embed = [](const PauliMasks& local, const std::vector<int>& pos) {
        PauliMasks m;
        m.num_y = local.num_y;
        for (std::size_t q = 0; q < pos.size(); ++q) {
            m.x |= ((local.x >> q) & 1U) << pos[q];
            m.z |= ((local.z >> q) & 1U) << pos[q];
        }
        return m;
    };
    const auto la = detail::local_pauli_masks(0, static_cast<int>(a.size()));
    const auto lb = detail::local_pauli_masks(0, static_cast<int>(b.size()));
    std::vector<PauliMasks> ea, eb;
    std::vector<double> va, vb;
    for (const auto& m : la) {
        ea.push_back(embed(m, pos_a));
        va.push_back(detail::local_expectation(rho_ab, ea.back()));
    }
    for (const auto& m : lb) {
        eb.push_back(embed(m, pos_b));
        vb.push_back(detail::local_expectation(rho_ab, eb.back()));
    }
    CorrelationValue best;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < ea.size(); ++i)
        for (std::size_t j = 0; j < eb.size(); ++j) {
            PauliMasks joint{ea[i].x | eb[j].x, ea[i].z | eb[j].z, ea[i].num_y + eb[j].num_y};
            const double c = std::abs(detail::local_expectation(rho_ab, joint) - va[i] * vb[j]);
            if (c > best.value) {
                best.value = c;
                bi = i, bj = j;
            }
        }
    best.observable_a = detail::masks_to_string(la.empty() ? PauliMasks{} : la[bi], a.sites());
    best.observable_b = detail::masks_to_string(lb.empty() ? PauliMasks{} : lb[bj], b.sites());
    return best;
}

inline void check_correlation_regions(const Region& a, const Region& b, int cap) {
    require(!a.empty() && !b.empty(), "correlation regions must be nonempty");
    if (!disjoint(a, b)) throw ValidationError("correlation regions overlap");
    require(static_cast<int>(a.size()) <= cap && static_cast<int>(b.size()) <= cap,
            "Pauli search restricted to regions of at most " + std::to_string(cap) + " sites");
}

inline CorrelationValue correlation(const DenseOperator& rho, const LatticeSpec& lattice, const Region& a, const Region& b,
                                    int cap = kCorrelationRegionCap) {
    check_correlation_regions(a, b, cap);
    return correlation_from_reduced(partial_trace(rho, region_union(lattice, a, b)), lattice, a, b);
}

inline CorrelationValue correlation(const GibbsState& g, const LatticeSpec& lattice, const Region& a, const Region& b,
                                    int cap = kCorrelationRegionCap) {
    check_correlation_regions(a, b, cap);
    const Bipartition part(lattice.num_sites(), region_union(lattice, a, b));
    return correlation_from_reduced(g.reduced(part), lattice, a, b);
}

struct CorrelationPoint {
    int distance = 0;
    int size_a = 1, size_b = 1;
    double value = 0.0;
};

struct CorrelationProfile {
    std::vector<CorrelationPoint> points;
    double xi = 0.0;         // 0 means no measurable correlations
    double prefactor = 0.0;  // exp(intercept) of the log fit
    double residual = 0.0;   // rms residual of log Corr
    double r2 = 0.0;
    std::size_t used_points = 0;
};

inline constexpr double kNumericalZeroCorrelation = 1e-12;

inline CorrelationProfile fit_correlation_length(std::vector<CorrelationPoint> points) {
    require(points.size() >= 3, "correlation fit needs >= 3 points");
    for (std::size_t i = 0; i < points.size(); ++i) {
        require(points[i].value >= 0.0 && points[i].value <= 2.0 + 1e-12, "correlation values must lie in [0,2]");
        if (i > 0) require(points[i].distance > points[i - 1].distance, "distances must be strictly increasing");
    }
    CorrelationProfile prof;
    prof.points = points;
    std::vector<double> x, y;
    for (const auto& p : points)
        if (p.value >= kNumericalZeroCorrelation) {
            x.push_back(p.distance);
            y.push_back(std::log(p.value));
        }
    prof.used_points = x.size();
    if (x.empty()) return prof;
    require(x.size() >= 2, "correlation fit needs >= 2 numerically nonzero points");
    const auto fit = linear_fit(x, y);
    if (!(fit.slope < -1e-12)) throw ValidationError("correlation profile is not decaying; no finite correlation length");
    prof.xi = -1.0 / fit.slope;
    prof.prefactor = std::exp(fit.intercept);
    prof.residual = fit.residual;
    prof.r2 = fit.r2;
    return prof;
}

/// beta* = log(1 + sqrt(1 + 4/alpha)) / (2 max||h_i||), alpha = ((2R+1)^D - 1) e, with R = k.
inline double corr_threshold_beta(int k, int dimension, double max_term_norm) {
    require(k >= 2 && dimension >= 1 && max_term_norm > 0, "invalid threshold arguments");
    const double alpha = (std::pow(2.0 * k + 1.0, dimension) - 1.0) * std::numbers::e;
    return std::log(1.0 + std::sqrt(1.0 + 4.0 / alpha)) / (2.0 * max_term_norm);
}

// ---------------------------------------------------------------------------
// Generalized Gibbs state

struct GeneralizedGibbsState {
    std::vector<DenseOperator> charges;
    std::vector<double> potentials;
    std::shared_ptr<const Spectrum> generator_spectrum;  // spectrum of G = sum_i lambda_i Q_i
    RealVector weights;
    std::vector<double> charge_expectations;  // W_i = tr(g Q_i)
    double tilt_beta = 0.0;                   // max |lambda_i|

    DenseOperator density() const { return spectral_density(*generator_spectrum, weights); }
    /// H~ = (sum lambda_i Q_i) / max|lambda_i|; identity-free zero operator when all lambda vanish.
    DenseOperator tilt_hamiltonian() const {
        const auto d = static_cast<Eigen::Index>(generator_spectrum->dim());
        DenseOperator g = DenseOperator::Zero(d, d);
        for (std::size_t i = 0; i < charges.size(); ++i) g += potentials[i] * charges[i];
        return tilt_beta > 0 ? DenseOperator(g / tilt_beta) : g;
    }
};

inline constexpr double kCommutationTolerance = 1e-9;

inline GeneralizedGibbsState gge_state(const DenseOperator& h, const std::vector<DenseOperator>& charges,
                                       const std::vector<double>& lambda) {
    require(!charges.empty() && charges.size() == lambda.size(), "need one potential per charge");
    for (const auto& q : charges) {
        require(q.rows() == h.rows() && q.cols() == h.cols(), "charge dimension mismatch");
        require(is_hermitian(q), "charges must be Hermitian");
        if (commutator_norm(q, h) > kCommutationTolerance)
            throw HypothesisError("charge does not commute with H; a generalized Gibbs state requires conserved charges");
    }
    for (std::size_t i = 0; i < charges.size(); ++i)
        for (std::size_t j = i + 1; j < charges.size(); ++j)
            if (commutator_norm(charges[i], charges[j]) > kCommutationTolerance)
                throw HypothesisError("charges do not commute; non-commuting charges are incompatible with nondegenerate gaps");
    GeneralizedGibbsState g;
    g.charges = charges;
    g.potentials = lambda;
    for (double l : lambda) g.tilt_beta = std::max(g.tilt_beta, std::abs(l));
    const auto d = static_cast<Eigen::Index>(h.rows());
    DenseOperator gen = DenseOperator::Zero(d, d);
    for (std::size_t i = 0; i < charges.size(); ++i) gen += lambda[i] * charges[i];
    // exp(-G) / tr exp(-G) straight from the summed generator.
    g.generator_spectrum = std::make_shared<const Spectrum>(diagonalize(gen));
    g.weights = boltzmann_weights(g.generator_spectrum->energies, 1.0);
    const DenseOperator rho = g.density();
    for (const auto& q : charges) g.charge_expectations.push_back((rho * q).trace().real());
    return g;
}

/// Von Neumann entropy -tr(rho log rho).
inline double von_neumann_entropy(const ComplexMatrix& rho) {
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es((rho + rho.adjoint()) / 2.0, Eigen::EigenvaluesOnly);
    double s = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double p = es.eigenvalues()[i];
        if (p > 1e-300) s -= p * std::log(p);
    }
    return s;
}

}  // namespace qthermal

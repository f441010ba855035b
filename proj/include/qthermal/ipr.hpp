#pragma once

// Inverse participation ratios, approximate periodicity and the bounds built on them.

#include <map>

#include "ensembles.hpp"
#include "momentum.hpp"
#include "spectral.hpp"

namespace qthermal {

inline constexpr double kOrthonormalityTolerance = 1e-8;

/// Throws when max |V^dagger V - I| exceeds the tolerance.
inline void require_orthonormal(const ComplexMatrix& v) {
    require(v.rows() == v.cols(), "basis must be square (complete)");
    const double dev = max_abs(ComplexMatrix(v.adjoint() * v) - ComplexMatrix::Identity(v.rows(), v.cols()));
    if (dev > kOrthonormalityTolerance)
        throw ValidationError("basis is not orthonormal: Gram deviation " + std::to_string(dev));
}

/// sum_alpha |<alpha|psi>|^4 for the columns of `basis`.
inline double ipr_in_basis(const StateVector& psi, const ComplexMatrix& basis, bool verify = true) {
    require(basis.rows() == psi.size(), "state and basis dimensions differ");
    if (verify) require_orthonormal(basis);
    return (basis.adjoint() * psi).cwiseAbs2().squaredNorm();
}

inline double ipr_in_basis(const StateVector& psi, const Spectrum& spec, bool verify = true) {
    return ipr_in_basis(psi, spec.vectors, verify);
}

inline double ipr_in_basis(const StateVector& psi, const MomentumBasis& basis) {
    return basis.overlap_probabilities(psi).squaredNorm();
}

// ---------------------------------------------------------------------------
// Ensemble averages

enum class IprBasis { Energy, Momentum, Custom };

inline std::string to_string(IprBasis b) {
    switch (b) {
        case IprBasis::Energy: return "energy";
        case IprBasis::Momentum: return "momentum";
        case IprBasis::Custom: return "custom";
    }
    return "unknown";
}

struct IprReport {
    IprBasis basis = IprBasis::Momentum;
    std::vector<double> values;  // per sampled state (empty in exact mode)
    MeanStat average;
    double min = 0.0, max = 0.0;
    bool exact = false;
    std::optional<Rational> exact_average;  // momentum basis on computational-basis ensembles
};

/// Exact mean of sum_v |<v|b>|^4 over all bitstrings, in rational arithmetic through the basis overlaps.
inline Rational exact_computational_momentum_ipr(const MomentumBasis& basis) {
    std::vector<std::vector<std::size_t>> by_orbit(basis.orbits().size());
    for (std::size_t v = 0; v < basis.size(); ++v) by_orbit[basis.vectors()[v].orbit].push_back(v);
    Rational total(0);
    for (std::uint64_t b = 0; b < basis.dim(); ++b) {
        Rational ipr(0);
        for (auto v : by_orbit[basis.orbit_of(b)]) {
            const Rational p = basis.overlap_sq_exact(v, b);
            ipr += p * p;
        }
        total += ipr;
    }
    return total / Rational(static_cast<std::int64_t>(basis.dim()));
}

namespace detail {

inline IprReport summarize_ipr(IprBasis basis, std::vector<double> values) {
    IprReport r;
    r.basis = basis;
    r.average = values.size() >= 2 ? mean_and_stderr(values) : MeanStat{values.at(0), 0.0, 1};
    r.min = *std::min_element(values.begin(), values.end());
    r.max = *std::max_element(values.begin(), values.end());
    r.values = std::move(values);
    return r;
}

}  // namespace detail

/// Momentum-basis average IPR; exact rational for computational-basis ensembles.
inline IprReport average_ipr(const Ensemble& ens, const MomentumBasis& basis, int workers = 1) {
    require(basis.lattice().num_sites() == ens.num_qubits(), "basis and ensemble sizes differ");
    if (ens.spec().kind == EnsembleKind::ComputationalBasis) {
        IprReport r;
        r.basis = IprBasis::Momentum;
        r.exact = true;
        r.exact_average = exact_computational_momentum_ipr(basis);
        r.average = {boost::rational_cast<double>(*r.exact_average), 0.0, basis.dim()};
        r.min = 1.0 / basis.group_order();
        r.max = 1.0;
        return r;
    }
    std::vector<double> values(ens.spec().samples);
    parallel_for(values.size(), workers, [&](std::size_t i) { values[i] = ipr_in_basis(ens.sample(i).psi, basis); });
    return detail::summarize_ipr(IprBasis::Momentum, std::move(values));
}

/// Energy-basis average IPR; exact enumeration for finite enumerable supports.
inline IprReport average_ipr(const Ensemble& ens, const Spectrum& spec, int workers = 1) {
    require_orthonormal(spec.vectors);
    if (ens.has_exact_support()) {
        IprReport r;
        r.basis = IprBasis::Energy;
        r.exact = true;
        double acc = 0, lo = 1, hi = 0;
        std::size_t count = 0;
        ens.for_each_support_state([&](const StateVector& psi, double w) {
            const double v = ipr_in_basis(psi, spec, false);
            acc += w * v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            ++count;
        });
        r.average = {acc, 0.0, count};
        r.min = lo;
        r.max = hi;
        return r;
    }
    std::vector<double> values(ens.spec().samples);
    parallel_for(values.size(), workers, [&](std::size_t i) { values[i] = ipr_in_basis(ens.sample(i).psi, spec, false); });
    return detail::summarize_ipr(IprBasis::Energy, std::move(values));
}

/// Independent oracle: mean of 1 / |orbit| over all bitstrings, orbits by direct lattice shifts.
inline Rational necklace_average_ipr_exact(const LatticeSpec& lattice) {
    const int n = lattice.num_sites();
    require(n <= 24, "necklace oracle enumerates 2^N bitstrings; N > 24 refused");
    std::vector<std::vector<int>> shifted(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n)));
    for (int z = 0; z < n; ++z)
        for (int x = 0; x < n; ++x)
            shifted[static_cast<std::size_t>(z)][static_cast<std::size_t>(x)] =
                static_cast<int>(lattice.add(Site{static_cast<std::uint32_t>(x)}, Site{static_cast<std::uint32_t>(z)}).index);
    const std::uint64_t count = std::uint64_t{1} << n;
    Rational total(0);
    for (std::uint64_t b = 0; b < count; ++b) {
        std::vector<std::uint64_t> images;
        for (int z = 0; z < n; ++z) {
            std::uint64_t img = 0;
            for (int x = 0; x < n; ++x)
                if ((b >> x) & 1U) img |= std::uint64_t{1} << shifted[static_cast<std::size_t>(z)][static_cast<std::size_t>(x)];
            images.push_back(img);
        }
        std::sort(images.begin(), images.end());
        const auto orbit = std::unique(images.begin(), images.end()) - images.begin();
        total += Rational(1, orbit);
    }
    return total / Rational(static_cast<std::int64_t>(count));
}

// ---------------------------------------------------------------------------
// Approximate periodicity

/// <psi|T^z|psi> by permutation of amplitudes.
inline cplx translation_overlap(const StateVector& psi, int z, const TranslationTable& table) {
    require(psi.size() == static_cast<Eigen::Index>(table.dim()), "state dimension mismatch");
    cplx acc = 0.0;
    for (std::uint64_t b = 0; b < table.dim(); ++b) acc += std::conj(psi[table.image(z, b)]) * psi[static_cast<Eigen::Index>(b)];
    return acc;
}

struct PeriodicityScanConfig {
    double r = 1.0;
    double delta = 0.9;
    double a = 0.0, b = 0.0, nu = 0.0;
    int ell = 1;               // side of the hypercube A, round(L^a) clamped to >= 1
    int num_translates = 0;    // M from separated_sites
    std::vector<int> periods;  // one representative per +-n pair with ||n||_1 >= L^delta

    double epsilon() const { return std::exp2(-r / 2); }
};

/// Validates 0 < b < aD < delta and nu < a; unset exponents get a = 0.6 delta / D, b = aD / 2, nu = a / 2.
inline PeriodicityScanConfig make_scan_config(const LatticeSpec& lattice, double r, double delta,
                                              std::optional<double> a = std::nullopt, std::optional<double> b = std::nullopt,
                                              std::optional<double> nu = std::nullopt) {
    require(r >= 0, "periodicity exponent r must be nonnegative");
    require(delta > 0 && delta < 1, "delta must lie in (0,1)");
    const int dim = lattice.dimension();
    PeriodicityScanConfig c;
    c.r = r;
    c.delta = delta;
    c.a = a ? *a : 0.6 * delta / dim;
    c.b = b ? *b : c.a * dim / 2;
    c.nu = nu ? *nu : c.a / 2;
    if (!(0 < c.b && c.b < c.a * dim && c.a * dim < delta))
        throw ValidationError("scan exponents must satisfy 0 < b < aD < delta");
    if (!(c.nu < c.a)) throw ValidationError("scan exponents must satisfy nu < a");
    c.ell = std::max(1, static_cast<int>(std::lround(std::pow(lattice.side(), c.a))));
    c.num_translates = static_cast<int>(separated_sites(lattice, delta).size());
    const double threshold = std::pow(static_cast<double>(lattice.side()), delta);
    for (int z = 1; z < lattice.num_sites(); ++z) {
        const Site s{static_cast<std::uint32_t>(z)};
        const int neg = static_cast<int>(lattice.negate(s).index);
        if (neg < z) continue;
        if (manhattan_norm(lattice, s) >= threshold - 1e-12) c.periods.push_back(z);
    }
    return c;
}

struct StatePeriodicity {
    double max_overlap_sq = 0.0;
    int argmax_period = -1;
    bool in_p = false;
    std::vector<int> flagged;  // periods n with |<T^n>|^2 >= 2^{-r}
};

inline StatePeriodicity classify_approx_periodic(const StateVector& psi, const PeriodicityScanConfig& cfg,
                                                 const TranslationTable& table) {
    StatePeriodicity out;
    const double threshold = std::exp2(-cfg.r);
    for (int z : cfg.periods) {
        const double v = std::norm(translation_overlap(psi, z, table));
        if (v > out.max_overlap_sq) {
            out.max_overlap_sq = v;
            out.argmax_period = z;
        }
        if (v >= threshold * (1 - 1e-12)) out.flagged.push_back(z);
    }
    out.max_overlap_sq = std::min(out.max_overlap_sq, 1.0);
    out.in_p = !out.flagged.empty();
    return out;
}

struct PeriodicityReport {
    std::vector<StatePeriodicity> states;
    std::size_t in_p = 0, total = 0;
    double probability = 0.0;
    std::pair<double, double> interval{0.0, 1.0};  // Wilson 95%
    std::map<int, double> per_period;              // P[psi in P_n]
    bool exact = false;
    double num_translates = 0;
    double assembled_ipr_bound = 0.0;                   // 1/M + 2^{-r/2} + P
};

inline PeriodicityReport periodicity_probability(const Ensemble& ens, const PeriodicityScanConfig& cfg,
                                                 const TranslationTable& table, int workers = 1) {
    PeriodicityReport rep;
    std::vector<double> weights;
    if (ens.spec().kind == EnsembleKind::ComputationalBasis && ens.has_exact_support()) {
        rep.exact = true;
        ens.for_each_support_state([&](const StateVector& psi, double w) {
            rep.states.push_back(classify_approx_periodic(psi, cfg, table));
            weights.push_back(w);
        });
    } else {
        rep.states.resize(ens.spec().samples);
        parallel_for(rep.states.size(), workers,
                     [&](std::size_t i) { rep.states[i] = classify_approx_periodic(ens.sample(i).psi, cfg, table); });
        weights.assign(rep.states.size(), 1.0 / static_cast<double>(rep.states.size()));
    }
    rep.total = rep.states.size();
    for (std::size_t i = 0; i < rep.states.size(); ++i) {
        const auto& s = rep.states[i];
        if (s.in_p) {
            ++rep.in_p;
            rep.probability += weights[i];
        }
        for (int z : s.flagged) rep.per_period[z] += weights[i];
    }
    rep.interval = rep.exact ? std::pair{rep.probability, rep.probability} : wilson_interval(rep.in_p, rep.total);
    rep.num_translates = cfg.num_translates;
    rep.assembled_ipr_bound = 1.0 / cfg.num_translates + cfg.epsilon() + rep.probability;
    return rep;
}

/// 2^{r + 2CD ell^{D-1}} (2^{ell^D} f_corr e^{-(||n||_1 - D ell)/xi} + purity).
inline double periodicity_probability_rhs(double r, int complexity, int ell, int dim, double xi, double f_corr, double purity, double n_norm) {
    require(ell >= 1 && dim >= 1 && complexity >= 0, "ell, D >= 1 and C >= 0 required");
    require(xi > 0 && f_corr >= 0 && purity >= 0, "xi > 0, f_corr >= 0 and purity >= 0 required");
    const double gap = n_norm - dim * static_cast<double>(ell);
    if (!(gap > 2.0 * complexity))
        throw ValidationError("hypothesis ||n||_1 - D*ell > 2C violated (" + std::to_string(gap) + " <= " +
                              std::to_string(2 * complexity) + ")");
    const double boundary = std::pow(static_cast<double>(ell), dim - 1);
    const double volume = std::pow(static_cast<double>(ell), dim);
    return std::exp2(r + 2.0 * complexity * dim * boundary) * (std::exp2(volume) * f_corr * std::exp(-gap / xi) + purity);
}

}  // namespace qthermal

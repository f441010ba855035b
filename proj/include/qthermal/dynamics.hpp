#pragma once

// Unitary evolution in the eigenbasis, diagonal ensembles, time-averaged local distances and bounds.

#include "ensembles.hpp"
#include "spectral.hpp"

namespace qthermal {

/// Amplitudes <E_j|psi>.
inline StateVector eigen_amplitudes(const StateVector& psi, const Spectrum& spec) {
    require(spec.vectors.rows() == psi.size(), "state and spectrum dimensions differ");
    return spec.vectors.adjoint() * psi;
}

inline StateVector evolve(const StateVector& psi, const Spectrum& spec, double t) {
    StateVector c = eigen_amplitudes(psi, spec);
    for (Eigen::Index j = 0; j < c.size(); ++j) c[j] *= std::polar(1.0, -spec.energies[j] * t);
    return spec.vectors * c;
}

/// Columns psi(t_m) for all times at once.
inline ComplexMatrix evolve_batch(const StateVector& amplitudes, const Spectrum& spec, const std::vector<double>& times) {
    const auto d = amplitudes.size();
    ComplexMatrix phased(d, static_cast<Eigen::Index>(times.size()));
    for (std::size_t m = 0; m < times.size(); ++m)
        for (Eigen::Index j = 0; j < d; ++j)
            phased(j, static_cast<Eigen::Index>(m)) = amplitudes[j] * std::polar(1.0, -spec.energies[j] * times[m]);
    return spec.vectors * phased;
}

// ---------------------------------------------------------------------------
// Diagonal ensemble

struct DiagonalEnsemble {
    std::shared_ptr<const Spectrum> spectrum;
    RealVector populations;  // |<E_j|psi>|^2
    double ipr = 0.0;

    DenseOperator density() const { return spectral_density(*spectrum, populations); }
    ComplexMatrix reduced(const Bipartition& part) const { return reduce_mixture(*spectrum, populations, part); }
};

/// Throws when two consecutive levels lie within tau.
inline void require_nondegenerate_levels(const Spectrum& spec, double tau) {
    for (Eigen::Index j = 1; j < spec.energies.size(); ++j)
        if (spec.energies[j] - spec.energies[j - 1] <= tau)
            throw HypothesisError("diagonal ensemble needs a degeneracy-free spectrum; levels " + std::to_string(j - 1) + " and " +
                                  std::to_string(j) + " coincide within tau");
}

inline DiagonalEnsemble diagonal_ensemble(const StateVector& psi, std::shared_ptr<const Spectrum> spec,
                                          std::optional<double> tau = std::nullopt) {
    require(spec != nullptr, "null spectrum");
    require_nondegenerate_levels(*spec, tau ? *tau : default_tau(*spec));
    DiagonalEnsemble de;
    de.spectrum = spec;
    de.populations = eigen_amplitudes(psi, *spec).cwiseAbs2();
    const double total = de.populations.sum();
    if (std::abs(total - 1.0) > 1e-10) throw ValidationError("state is not normalized: populations sum to " + std::to_string(total));
    de.ipr = de.populations.squaredNorm();
    return de;
}

// ---------------------------------------------------------------------------
// Time sampling

enum class TimeSampling { Uniform, Stratified };

inline constexpr std::uint64_t kTimeStream = 0x74696d65;

/// Sample times in [0, T], deterministic per (seed, state index, time index).
inline std::vector<double> sample_times(double horizon, std::size_t count, std::uint64_t seed, std::uint64_t state_index,
                                        TimeSampling mode = TimeSampling::Uniform) {
    require(horizon > 0, "time horizon must be positive");
    require(count >= 2, "need >= 2 time samples");
    std::vector<double> t(count);
    for (std::size_t m = 0; m < count; ++m) {
        auto rng = make_rng(seed, {kTimeStream, state_index, m});
        const double u = uniform01(rng);
        t[m] = mode == TimeSampling::Uniform ? horizon * u : horizon * (static_cast<double>(m) + u) / static_cast<double>(count);
    }
    return t;
}

/// Default horizon 10^3 / median level spacing.
inline double default_horizon(const Spectrum& spec) {
    const double s = spec.median_spacing();
    require(s > 0, "median level spacing vanishes; supply an explicit horizon");
    return 1e3 / s;
}

struct TimeAverage {
    MeanStat stat;
    std::vector<double> times;
    std::vector<double> values;
};

/// E_{t in [0,T]} ||ref - psi(t)||_A with ref the reduced reference state on A.
inline TimeAverage time_avg_local_distance(const StateVector& psi, const Spectrum& spec, const ComplexMatrix& ref_a,
                                           const Bipartition& part, double horizon, std::size_t samples, std::uint64_t seed,
                                           std::uint64_t state_index = 0, TimeSampling mode = TimeSampling::Uniform) {
    require(ref_a.rows() == part.dim_a(), "reference state does not live on region A");
    TimeAverage out;
    out.times = sample_times(horizon, samples, seed, state_index, mode);
    const ComplexMatrix states = evolve_batch(eigen_amplitudes(psi, spec), spec, out.times);
    for (std::size_t m = 0; m < samples; ++m)
        out.values.push_back(trace_norm_hermitian(ref_a - part.reduce_pure(states.col(static_cast<Eigen::Index>(m)))));
    out.stat = mean_and_stderr(out.values);
    return out;
}

// ---------------------------------------------------------------------------
// Bounds

inline double equilibration_bound(double ipr, int region_size) {
    require(ipr > 0 && ipr <= 1 + 1e-12, "IPR must lie in (0, 1]");
    require(region_size >= 0, "region size must be nonnegative");
    return std::ldexp(std::sqrt(ipr), region_size);
}

inline double finite_time_bound(double ipr, int region_size, int num_sites, double g_min, double horizon) {
    if (!(g_min > 0)) throw ValidationError("finite-time bound needs G_min > 0 (nondegenerate gaps)");
    require(horizon > 0, "time horizon must be positive");
    require(ipr > 0 && ipr <= 1 + 1e-12, "IPR must lie in (0, 1]");
    return std::ldexp(std::sqrt(ipr * (1.0 + 8.0 * num_sites / (g_min * horizon))), region_size);
}

/// c N^{-gamma} + 2 eps_GE + 2^{N_A} sqrt(eps_ED).
inline double edge_bound_rhs(double eps_ge, double eps_ed, int region_size, int num_sites, double gamma, double c = 1.0) {
    require(eps_ge >= 0 && eps_ed >= 0 && c >= 0, "EDGE inputs must be nonnegative");
    require(gamma > 0 && gamma <= 0.5, "gamma must lie in (0, 1/2]");
    require(num_sites >= 1, "num_sites must be positive");
    return c * std::pow(static_cast<double>(num_sites), -gamma) + 2 * eps_ge + std::ldexp(std::sqrt(eps_ed), region_size);
}

// ---------------------------------------------------------------------------
// Thermalization experiment

struct ThermalizationConfig {
    double beta = 0.0;
    std::vector<Site> region;                    // A
    std::optional<double> horizon;               // default 10^3 / median spacing
    std::size_t time_samples = 200;
    std::uint64_t seed = 0;
    TimeSampling sampling = TimeSampling::Uniform;
    int workers = 1;
    ResonanceOptions resonance{};
    bool require_nondegenerate_gaps = true;
    double edge_constant = 1.0;
    std::optional<double> gamma;                 // default 1 / (2 (D + 1))
    int eps_ge_max_qubits = 10;
    double triangle_tolerance = 1e-9;
};

struct StateRecord {
    double ipr = 0.0;
    MeanStat thermalization;  // E_t ||g - psi(t)||_A
    MeanStat equilibration;   // E_t ||rho_inf - psi(t)||_A
    double equivalence = 0.0; // ||rho_inf - g||_A
    double equilibration_bound = 0.0;
    double finite_time_bound = 0.0;
    double triangle_slack = 0.0;  // min over t of rhs - lhs of the pointwise triangle inequality
};

struct TimeRecord {
    std::size_t state = 0, time_index = 0;
    double time = 0.0, thermalization = 0.0, equilibration = 0.0;
};

struct ThermalizationReport {
    int num_sites = 0, region_size = 0;
    double beta = 0.0, horizon = 0.0, tau = 0.0, g_min = 0.0, gamma = 0.0, edge_constant = 1.0;
    std::size_t time_samples = 0;
    std::uint64_t seed = 0;
    std::vector<StateRecord> states;
    std::vector<TimeRecord> rows;

    MeanStat thermalization, equilibration, equivalence, ipr;
    std::optional<double> eps_ge;  // 2^N ||E psi - g||_1 when N is small enough
    double eps_ed = 0.0;           // average IPR
    std::optional<double> edge_rhs;

    bool triangle_pointwise = true;
    bool triangle_average = true;  // thermalization <= equilibration + equivalence + 3 s.e.
    bool equilibration_dominance = true;
    bool finite_time_dominance = true;
};

/// Runs the three-distance decomposition on given states. g_min/tau from the resonance check.
inline ThermalizationReport run_thermalization_experiment(const ThermalizationConfig& cfg, const LatticeSpec& lattice,
                                                          std::shared_ptr<const Spectrum> spec,
                                                          const std::vector<StateVector>& states,
                                                          std::optional<double> eps_ge = std::nullopt) {
    require(spec != nullptr && spec->vectors.cols() == static_cast<Eigen::Index>(spec->dim()), "experiment needs eigenvectors");
    require(!states.empty(), "experiment needs at least one state");
    const int n = lattice.num_sites();
    const Region region(lattice, cfg.region);
    require(!region.empty(), "region A must be nonempty");
    const Bipartition part(n, region);

    ThermalizationReport r;
    r.num_sites = n;
    r.region_size = static_cast<int>(region.size());
    r.beta = cfg.beta;
    r.seed = cfg.seed;
    r.time_samples = cfg.time_samples;
    r.edge_constant = cfg.edge_constant;
    r.gamma = cfg.gamma ? *cfg.gamma : 1.0 / (2.0 * (lattice.dimension() + 1));
    if (cfg.require_nondegenerate_gaps) {
        const auto res = check_nondegenerate_gaps(*spec, cfg.resonance);
        if (!res.nondegenerate_gaps)
            throw HypothesisError("refusing to run: the Hamiltonian violates the nondegenerate-gaps requirement (" + std::to_string(res.degenerate_pair_count) +
                                  " degenerate pairs, " + std::to_string(res.quadruple_count) + " gap coincidences)");
        r.tau = res.tau;
        r.g_min = res.g_min;
    } else {
        r.tau = cfg.resonance.tau ? *cfg.resonance.tau : default_tau(*spec, cfg.resonance.policy);
        r.g_min = std::numeric_limits<double>::quiet_NaN();
    }
    r.horizon = cfg.horizon ? *cfg.horizon : default_horizon(*spec);

    const auto gibbs = gibbs_state(spec, cfg.beta);
    const ComplexMatrix g_a = gibbs.reduced(part);

    std::vector<StateRecord> recs(states.size());
    std::vector<std::vector<TimeRecord>> rows(states.size());
    parallel_for(states.size(), cfg.workers, [&](std::size_t s) {
        const auto de = diagonal_ensemble(states[s], spec, r.tau);
        const ComplexMatrix inf_a = de.reduced(part);
        auto& rec = recs[s];
        rec.ipr = de.ipr;
        rec.equivalence = trace_norm_hermitian(inf_a - g_a);
        const auto times = sample_times(r.horizon, cfg.time_samples, cfg.seed, s, cfg.sampling);
        const ComplexMatrix evolved = evolve_batch(eigen_amplitudes(states[s], *spec), *spec, times);
        std::vector<double> th, eq;
        rec.triangle_slack = std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < times.size(); ++m) {
            const ComplexMatrix rho_t = part.reduce_pure(evolved.col(static_cast<Eigen::Index>(m)));
            th.push_back(trace_norm_hermitian(g_a - rho_t));
            eq.push_back(trace_norm_hermitian(inf_a - rho_t));
            rec.triangle_slack = std::min(rec.triangle_slack, eq.back() + rec.equivalence - th.back());
            rows[s].push_back({s, m, times[m], th.back(), eq.back()});
        }
        rec.thermalization = mean_and_stderr(th);
        rec.equilibration = mean_and_stderr(eq);
        rec.equilibration_bound = equilibration_bound(std::min(de.ipr, 1.0), r.region_size);
        rec.finite_time_bound = std::isfinite(r.g_min) && r.g_min > 0
                                    ? finite_time_bound(std::min(de.ipr, 1.0), r.region_size, n, r.g_min, r.horizon)
                                    : std::numeric_limits<double>::infinity();
    });

    std::vector<double> th, eq, ev, ip;
    for (std::size_t s = 0; s < states.size(); ++s) {
        const auto& rec = recs[s];
        th.push_back(rec.thermalization.mean);
        eq.push_back(rec.equilibration.mean);
        ev.push_back(rec.equivalence);
        ip.push_back(rec.ipr);
        if (rec.triangle_slack < -cfg.triangle_tolerance) r.triangle_pointwise = false;
        if (rec.equilibration.mean > rec.equilibration_bound + 3 * rec.equilibration.sem) r.equilibration_dominance = false;
        if (rec.equilibration.mean > rec.finite_time_bound + 3 * rec.equilibration.sem) r.finite_time_dominance = false;
        r.rows.insert(r.rows.end(), rows[s].begin(), rows[s].end());
    }
    const auto stat = [](const std::vector<double>& v) { return v.size() >= 2 ? mean_and_stderr(v) : MeanStat{v[0], 0.0, 1}; };
    r.thermalization = stat(th);
    r.equilibration = stat(eq);
    r.equivalence = stat(ev);
    r.ipr = stat(ip);
    r.eps_ed = r.ipr.mean;
    r.triangle_average = r.thermalization.mean <=
                         r.equilibration.mean + r.equivalence.mean + 3 * (r.equilibration.sem + r.equivalence.sem + r.thermalization.sem) +
                             cfg.triangle_tolerance;
    r.eps_ge = eps_ge;
    if (eps_ge) r.edge_rhs = edge_bound_rhs(*eps_ge, r.eps_ed, r.region_size, n, r.gamma, cfg.edge_constant);
    r.states = std::move(recs);
    return r;
}

/// Samples the ensemble, measures eps_GE when N is small enough, and runs the decomposition.
inline ThermalizationReport run_thermalization_experiment(const ThermalizationConfig& cfg, const Ensemble& ensemble,
                                                          std::shared_ptr<const Spectrum> spec) {
    const std::size_t m = ensemble.spec().samples;
    std::vector<StateVector> states(m);
    parallel_for(m, cfg.workers, [&](std::size_t i) { states[i] = ensemble.sample(i).psi; });
    std::optional<double> eps_ge;
    if (ensemble.num_qubits() <= cfg.eps_ge_max_qubits && m >= 2) {
        const DenseOperator h = spec->vectors * spec->energies.cast<cplx>().asDiagonal() * spec->vectors.adjoint();
        eps_ge = ensemble_stats(ensemble, h, gibbs_state(spec, cfg.beta), {.workers = cfg.workers}).eps_ge;
    }
    return run_thermalization_experiment(cfg, ensemble.lattice(), spec, states, eps_ge);
}

}  // namespace qthermal

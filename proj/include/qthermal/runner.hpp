#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qthermal/dynamics.hpp"
#include "qthermal/ensembles.hpp"
#include "qthermal/errors.hpp"
#include "qthermal/eth.hpp"
#include "qthermal/io.hpp"
#include "qthermal/ipr.hpp"
#include "qthermal/models.hpp"
#include "qthermal/spectral.hpp"
#include "qthermal/thermal.hpp"
#include "qthermal/unravel.hpp"

namespace qthermal {

inline constexpr const char* kArtifactVersion = "1.0.0";

using nlohmann::json;

/// Command-line overrides applied on top of the config document.
struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<int> cap_n;
};

struct RunOutcome {
    int exit_code = 0;
    std::string message;
    std::vector<std::string> files;
};

namespace detail {

/// View of one config object that records every default it hands out.
class Section {
public:
    Section(json& node, std::string path, std::set<std::string> allowed) : node_(node), path_(std::move(path)) {
        if (node_.is_null()) node_ = json::object();
        if (!node_.is_object()) throw ValidationError(path_ + " must be a JSON object");
        for (const auto& [key, value] : node_.items())
            if (!allowed.count(key)) throw ValidationError("unknown key '" + key + "' in " + path_);
    }

    template <class T>
    T get(const std::string& key, T fallback) {
        if (!node_.contains(key) || node_[key].is_null()) node_[key] = fallback;
        return convert<T>(key);
    }

    template <class T>
    T required(const std::string& key) {
        if (!node_.contains(key) || node_[key].is_null()) throw ValidationError(path_ + "." + key + " is required");
        return convert<T>(key);
    }

    template <class T>
    std::optional<T> optional(const std::string& key) {
        if (!node_.contains(key) || node_[key].is_null()) {
            node_[key] = nullptr;
            return std::nullopt;
        }
        return convert<T>(key);
    }

    bool has(const std::string& key) const { return node_.contains(key) && !node_[key].is_null(); }
    json& raw(const std::string& key) { return node_[key]; }
    const std::string& path() const { return path_; }

private:
    template <class T>
    T convert(const std::string& key) {
        try {
            return node_[key].get<T>();
        } catch (const json::exception&) {
            throw ValidationError(path_ + "." + key + " has the wrong type");
        }
    }

    json& node_;
    std::string path_;
};

inline ComplexMatrix haar_unitary_dynamic(Eigen::Index d, Rng& rng) {
    ComplexMatrix z(d, d);
    for (Eigen::Index c = 0; c < d; ++c)
        for (Eigen::Index r = 0; r < d; ++r) {
            const double re = normal01(rng);
            z(r, c) = cplx(re, normal01(rng)) / std::sqrt(2.0);
        }
    Eigen::HouseholderQR<ComplexMatrix> qr(z);
    ComplexMatrix q = qr.householderQ();
    const ComplexMatrix rmat = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index c = 0; c < d; ++c) {
        const cplx diag = rmat(c, c);
        q.col(c) *= std::abs(diag) > 0 ? diag / std::abs(diag) : cplx(1.0);
    }
    return q;
}

inline json mean_stat_json(const MeanStat& m) { return {{"mean", m.mean}, {"sem", m.sem}, {"count", m.count}}; }

inline std::string rational_string(const Rational& r) {
    return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

inline double rational_value(const Rational& r) {
    return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

}  // namespace detail

/// One experiment run: parses the config, builds the model lazily and persists outputs.
class Runner {
public:
    Runner(std::string command, json config, std::filesystem::path out_dir, RunOverrides overrides = {})
        : command_(std::move(command)), cfg_(std::move(config)), out_(std::move(out_dir)), overrides_(overrides) {}

    RunOutcome run() {
        static const std::map<std::string, void (Runner::*)()> commands = {
            {"spectrum", &Runner::cmd_spectrum},       {"thermalize", &Runner::cmd_thermalize},
            {"ipr-scan", &Runner::cmd_ipr_scan},       {"weak-eth", &Runner::cmd_weak_eth},
            {"correlations", &Runner::cmd_correlations}, {"unravel", &Runner::cmd_unravel},
            {"gge", &Runner::cmd_gge}};
        const auto it = commands.find(command_);
        if (it == commands.end()) throw ValidationError("unknown subcommand '" + command_ + "'");
        const auto start = std::chrono::steady_clock::now();
        std::filesystem::create_directories(out_);
        try {
            parse_common();
            (this->*(it->second))();
        } catch (const std::exception& e) {
            outcome_.message = e.what();
            write_manifest(start, error_code(e));
            throw;
        }
        write_manifest(start, outcome_.exit_code);
        return outcome_;
    }

    const json& materialized_config() const { return cfg_; }

    static int error_code(const std::exception& e) {
        if (dynamic_cast<const HypothesisError*>(&e)) return 1;
        if (dynamic_cast<const ResourceError*>(&e)) return 3;
        return 2;
    }

private:
    // ----------------------------------------------------------------- config

    void parse_common() {
        if (!cfg_.is_object()) throw ValidationError("config must be a JSON object");
        detail::Section top(cfg_, "config",
                            {"lattice", "hamiltonian", "beta", "seed", "workers", "cap_n", "ensemble", "region", "resonance",
                             "spectrum", "dynamics", "ipr", "weak_eth", "correlations", "unravel", "gge"});
        if (overrides_.seed) cfg_["seed"] = *overrides_.seed;
        if (overrides_.workers) cfg_["workers"] = *overrides_.workers;
        if (overrides_.cap_n) cfg_["cap_n"] = *overrides_.cap_n;
        seed_ = top.get<std::uint64_t>("seed", 0);
        workers_ = top.get<int>("workers", 1);
        require(workers_ >= 1, "workers must be >= 1");
        cap_n_ = top.get<int>("cap_n", kDefaultDenseCap);
        require(cap_n_ >= 1, "cap_n must be >= 1");
        beta_ = top.get<double>("beta", 0.0);
        require(std::isfinite(beta_), "beta must be finite");

        detail::Section lat(top.raw("lattice"), "lattice", {"D", "L"});
        lattice_ = LatticeSpec(lat.get<int>("D", 1), lat.required<int>("L"));
        if (lattice_.num_sites() > cap_n_)
            throw ResourceError("N=" + std::to_string(lattice_.num_sites()) + " exceeds cap_n=" + std::to_string(cap_n_));

        detail::Section res(top.raw("resonance"), "resonance", {"tau", "policy", "max_listed"});
        resonance_.tau = res.optional<double>("tau");
        const auto policy = res.get<std::string>("policy", "resolution");
        if (policy == "resolution") resonance_.policy = TauPolicy::Resolution;
        else if (policy == "relative") resonance_.policy = TauPolicy::Relative;
        else throw ValidationError("resonance.policy must be 'resolution' or 'relative'");
        resonance_.max_listed = res.get<std::size_t>("max_listed", 100);

        parse_region(top.raw("region"));
        parse_hamiltonian(top.raw("hamiltonian"));
    }

    void parse_region(json& node) {
        if (node.is_null()) node = json::array({json(Coords(static_cast<std::size_t>(lattice_.dimension()), 0))});
        if (!node.is_array() || node.empty()) throw ValidationError("region must be a nonempty list of coordinate tuples");
        std::vector<Site> sites;
        for (const auto& c : node) {
            if (c.is_number_integer()) {
                const int idx = c.get<int>();
                require(idx >= 0 && idx < lattice_.num_sites(), "region site " + std::to_string(idx) + " out of range");
                sites.push_back(Site{static_cast<std::uint32_t>(idx)});
            } else if (c.is_array()) {
                sites.push_back(lattice_.site(c.get<Coords>()));
            } else {
                throw ValidationError("region entries must be coordinate tuples");
            }
        }
        region_ = Region(lattice_, sites).sites();
    }

    void parse_hamiltonian(json& node) {
        if (node.is_null()) node = json::object();
        if (!node.is_object()) throw ValidationError("hamiltonian must be a JSON object");
        const std::string kind = node.value("kind", std::string("reference"));
        node["kind"] = kind;
        const int n = lattice_.num_sites();
        const std::uint64_t ham_seed = derive_seed(seed_, {0x68616dULL});
        if (kind == "reference") {
            detail::Section s(node, "hamiltonian", {"kind", "zz", "x", "z", "xy"});
            ReferenceCouplings c;
            c.zz = s.get("zz", c.zz);
            c.x = s.get("x", c.x);
            c.z = s.get("z", c.z);
            c.xy = s.get("xy", c.xy);
            terms_ = reference_chain(lattice_, c);
        } else if (kind == "xxz") {
            detail::Section s(node, "hamiltonian", {"kind", "anisotropy", "field"});
            terms_ = xxz_chain(lattice_, s.get("anisotropy", 0.6), s.get("field", 0.3));
        } else if (kind == "sum_z") {
            detail::Section s(node, "hamiltonian", {"kind"});
            terms_ = total_z(lattice_);
        } else if (kind == "random_ti") {
            detail::Section s(node, "hamiltonian", {"kind", "k", "seed"});
            terms_ = random_ti_hamiltonian(lattice_, s.get("k", 2), s.get<std::uint64_t>("seed", ham_seed));
        } else if (kind == "terms") {
            detail::Section s(node, "hamiltonian", {"kind", "k", "terms"});
            terms_ = term_set_from_json(node, lattice_);
        } else if (kind == "file") {
            detail::Section s(node, "hamiltonian", {"kind", "path"});
            std::filesystem::path p = s.required<std::string>("path");
            terms_ = term_set_from_json(parse_json(read_file(p), p.string()), lattice_);
        } else if (kind == "diagonal") {
            detail::Section s(node, "hamiltonian", {"kind", "energies"});
            const auto e = s.required<std::vector<double>>("energies");
            require(e.size() == hilbert_dim(n), "diagonal Hamiltonian needs 2^N energies");
            dense_ = DenseOperator(Eigen::Map<const RealVector>(e.data(), static_cast<Eigen::Index>(e.size())).cast<cplx>().asDiagonal());
        } else if (kind == "planted_hidden_qubit") {
            detail::Section s(node, "hamiltonian", {"kind", "a", "b", "c", "filler_width", "seed"});
            const double a = s.required<double>("a"), b = s.required<double>("b"), c = s.required<double>("c");
            const double w = s.get("filler_width", 3.0);
            auto rng = make_rng(s.get<std::uint64_t>("seed", ham_seed));
            require(n >= 2, "planted Hamiltonian needs N >= 2");
            std::vector<double> e = {a + b + c, a - b + c, -a + b + c, -a - b + c};
            while (e.size() < hilbert_dim(n)) e.push_back(uniform(rng, -w, w));
            const auto d = static_cast<Eigen::Index>(e.size());
            const ComplexMatrix u = detail::haar_unitary_dynamic(d, rng);
            const RealVector ev = Eigen::Map<const RealVector>(e.data(), d);
            DenseOperator h = u * ev.cast<cplx>().asDiagonal() * u.adjoint();
            dense_ = (h + h.adjoint()) / 2.0;
            planted_ = json{{"a", std::max(std::abs(a), std::abs(b))}, {"b", std::min(std::abs(a), std::abs(b))}, {"c", c}};
        } else {
            throw ValidationError("unknown hamiltonian kind '" + kind + "'");
        }
    }

    std::shared_ptr<const Spectrum> spectrum() {
        if (!spectrum_) {
            stage("diagonalize", [&] {
                if (terms_) spectrum_ = std::make_shared<const Spectrum>(diagonalize_ti(*terms_, cap_n_));
                else spectrum_ = std::make_shared<const Spectrum>(diagonalize(dense_));
            });
        }
        return spectrum_;
    }

    DenseOperator hamiltonian_dense() {
        if (terms_) return build_hamiltonian(*terms_, cap_n_);
        return dense_;
    }

    GibbsState gibbs() { return gibbs_state(spectrum(), beta_); }

    Ensemble make_ensemble(EnsembleKind default_kind, std::size_t default_samples) {
        detail::Section s(cfg_["ensemble"], "ensemble",
                          {"kind", "samples", "complexity", "circuit_depth", "base", "seed", "window", "retry_cap", "tilt_beta",
                           "gibbs_sweeps", "target_energy"});
        EnsembleSpec spec;
        spec.kind = ensemble_kind_from_string(s.get("kind", to_string(default_kind)));
        spec.samples = s.get("samples", default_samples);
        spec.circuit_depth = s.get("circuit_depth", 0);
        spec.complexity = s.get("complexity", spec.circuit_depth);
        const bool thermal_base = spec.kind == EnsembleKind::MicrocanonicalProduct || spec.kind == EnsembleKind::CanonicalProduct;
        spec.base_product = ensemble_kind_from_string(s.get("base", to_string(EnsembleKind::StabilizerProduct)));
        spec.seed = s.get<std::uint64_t>("seed", derive_seed(seed_, {0x656e73ULL}));
        spec.window = s.optional<double>("window");
        spec.retry_cap = s.get("retry_cap", spec.retry_cap);
        spec.tilt_beta = s.optional<double>("tilt_beta");
        spec.gibbs_sweeps = s.get("gibbs_sweeps", spec.gibbs_sweeps);
        spec.target_energy = s.optional<double>("target_energy");
        if (thermal_base && !spec.target_energy && !spec.tilt_beta) {
            spec.target_energy = thermal_energy(*spectrum(), beta_);
            s.raw("target_energy") = *spec.target_energy;
        }
        if (spec.kind == EnsembleKind::UnravelingWeighted)
            spec.unraveling = std::make_shared<const UnravelingResult>(unravel_gibbs(gibbs(), unravel_options()));
        return Ensemble(spec, lattice_, terms_);
    }

    UnravelOptions unravel_options() {
        detail::Section s(cfg_["unravel"], "unravel", {"max_qubits", "max_iterations", "feasibility_tolerance", "stop_residual"});
        UnravelOptions o;
        o.max_qubits = s.get("max_qubits", o.max_qubits);
        o.max_iterations = s.get("max_iterations", o.max_iterations);
        o.feasibility_tolerance = s.get("feasibility_tolerance", o.feasibility_tolerance);
        o.stop_residual = s.get("stop_residual", o.stop_residual);
        return o;
    }

    PauliString parse_pauli(const json& node, const std::string& what) {
        if (!node.is_object() || node.empty()) throw ValidationError(what + " must map site indices to Pauli letters");
        std::vector<std::pair<Site, Pauli>> letters;
        for (const auto& [key, value] : node.items()) {
            int idx = -1;
            try {
                std::size_t pos = 0;
                idx = std::stoi(key, &pos);
                if (pos != key.size()) idx = -1;
            } catch (const std::exception&) {
                idx = -1;
            }
            require(idx >= 0 && idx < lattice_.num_sites(), what + ": site key '" + key + "' out of range");
            require(value.is_string() && value.get<std::string>().size() == 1, what + ": Pauli letters are single characters");
            const Pauli p = pauli_from_char(value.get<std::string>()[0]);
            require(p != Pauli::I, what + ": identity letters are not allowed");
            letters.emplace_back(Site{static_cast<std::uint32_t>(idx)}, p);
        }
        return PauliString(std::move(letters));
    }

    // ---------------------------------------------------------------- outputs

    void emit(const std::string& name, const std::string& bytes) {
        std::lock_guard<std::mutex> lock(files_mutex_);
        write_file(out_ / name, bytes);
        files_[name] = {bytes.size(), fnv1a64(bytes)};
        outcome_.files.push_back(name);
    }

    void emit_pair(const json& report, const CsvTable& table) {
        std::string base = command_;
        std::replace(base.begin(), base.end(), '-', '_');
        emit(base + ".json", json_text(report));
        emit(base + ".csv", table.str());
    }

    template <class Fn>
    void stage(const std::string& name, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        stages_.push_back({name, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
    }

    void write_manifest(std::chrono::steady_clock::time_point start, int exit_code) {
        json m;
        m["artifact"] = "qthermal";
        m["version"] = kArtifactVersion;
        m["command"] = command_;
        m["config"] = cfg_;
        m["config_hash"] = hex64(fnv1a64(cfg_.dump()));
        m["exit_code"] = exit_code;
        if (!outcome_.message.empty()) m["message"] = outcome_.message;
        m["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        m["stages"] = json::array();
        for (const auto& [name, sec] : stages_) m["stages"].push_back({{"name", name}, {"seconds", sec}});
        m["files"] = json::array();
        {
            std::lock_guard<std::mutex> lock(files_mutex_);
            for (const auto& [name, info] : files_)
                m["files"].push_back({{"name", name}, {"bytes", info.first}, {"fnv1a64", hex64(info.second)}});
        }
        write_file(out_ / "manifest.json", json_text(m));
    }

    json system_json() const {
        return {{"D", lattice_.dimension()}, {"L", lattice_.side()}, {"N", lattice_.num_sites()}, {"beta", beta_}};
    }

    // --------------------------------------------------------------- commands

    void cmd_spectrum() {
        detail::Section s(cfg_["spectrum"], "spectrum", {"dump_vectors", "hidden_qubits_max"});
        const bool dump = s.get("dump_vectors", false);
        const auto max_hidden = s.get<std::size_t>("hidden_qubits_max", 10);
        const auto spec = spectrum();
        ResonanceReport rep;
        stage("resonance", [&] { rep = check_nondegenerate_gaps(*spec, resonance_); });

        json r = system_json();
        r["dim"] = spec->dim();
        r["min"] = spec->min();
        r["max"] = spec->max();
        r["width"] = spec->width();
        r["median_spacing"] = spec->dim() >= 2 ? json(spec->median_spacing()) : json(nullptr);
        r["tau"] = rep.tau;
        r["nondegenerate_gaps"] = rep.nondegenerate_gaps;
        r["g_min"] = std::isfinite(rep.g_min) ? json(rep.g_min) : json(nullptr);
        r["degenerate_pair_count"] = rep.degenerate_pair_count;
        r["degenerate_pairs"] = json::array();
        for (const auto& [i, j] : rep.degenerate_pairs) r["degenerate_pairs"].push_back({i, j});
        r["quadruple_count"] = rep.quadruple_count;
        r["quadruples"] = json::array();
        for (const auto& q : rep.quadruples)
            r["quadruples"].push_back({{"i", q.i}, {"j", q.j}, {"m", q.m}, {"l", q.l}, {"difference", q.difference}});
        r["chunked"] = rep.chunked;
        r["hidden_qubits"] = json::array();
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < rep.quadruples.size() && k < max_hidden; ++k) {
            try {
                const auto h = canonical_hidden_qubits(*spec, rep.quadruples[k], rep.tau);
                r["hidden_qubits"].push_back({{"m", h.m}, {"i", h.i}, {"j", h.j}, {"l", h.l}, {"a", h.a}, {"b", h.b},
                                              {"c", h.c}, {"max_reconstruction_error", h.max_reconstruction_error}});
                if (planted_)
                    best = std::min(best, std::max({std::abs(h.a - (*planted_)["a"].get<double>()),
                                                    std::abs(h.b - (*planted_)["b"].get<double>()),
                                                    std::abs(h.c - (*planted_)["c"].get<double>())}));
            } catch (const ValidationError& e) {
                r["hidden_qubits"].push_back({{"quadruple", k}, {"skipped", e.what()}});
            }
        }
        if (planted_) {
            r["planted"] = *planted_;
            r["planted_recovery_error"] = std::isfinite(best) ? json(best) : json(nullptr);
        }
        CsvTable t({"index", "energy", "momentum"});
        for (std::size_t j = 0; j < spec->dim(); ++j)
            t.add({static_cast<std::int64_t>(j), spec->energies[static_cast<Eigen::Index>(j)],
                   spec->momenta.empty() ? CsvCell(std::string()) : CsvCell(static_cast<std::int64_t>(spec->momenta[j]))});
        if (dump && spec->vectors.size() > 0) {
            emit("eigenvectors.bin", complex_matrix_bytes(spec->vectors));
            emit("eigenvectors.json", json_text(complex_matrix_sidecar(spec->vectors, "eigenvectors.bin")));
        }
        emit_pair(r, t);
        if (!rep.nondegenerate_gaps) {
            outcome_.exit_code = 1;
            outcome_.message = "spectrum violates the nondegenerate-gaps condition at tau=" + format_double(rep.tau);
        }
    }

    void cmd_thermalize() {
        detail::Section s(cfg_["dynamics"], "dynamics",
                          {"horizon", "time_samples", "sampling", "edge_constant", "gamma", "require_nondegenerate_gaps",
                           "eps_ge_max_qubits", "triangle_tolerance"});
        ThermalizationConfig tc;
        tc.beta = beta_;
        tc.region = region_;
        tc.horizon = s.optional<double>("horizon");
        tc.time_samples = s.get("time_samples", tc.time_samples);
        const auto sampling = s.get<std::string>("sampling", "uniform");
        if (sampling == "uniform") tc.sampling = TimeSampling::Uniform;
        else if (sampling == "stratified") tc.sampling = TimeSampling::Stratified;
        else throw ValidationError("dynamics.sampling must be 'uniform' or 'stratified'");
        tc.seed = derive_seed(seed_, {0x64796eULL});
        tc.workers = workers_;
        tc.resonance = resonance_;
        tc.require_nondegenerate_gaps = s.get("require_nondegenerate_gaps", true);
        tc.edge_constant = s.get("edge_constant", tc.edge_constant);
        tc.gamma = s.get("gamma", 1.0 / (2.0 * (lattice_.dimension() + 1)));
        tc.eps_ge_max_qubits = s.get("eps_ge_max_qubits", tc.eps_ge_max_qubits);
        tc.triangle_tolerance = s.get("triangle_tolerance", tc.triangle_tolerance);

        const auto spec = spectrum();
        const Ensemble ens = make_ensemble(EnsembleKind::StabilizerProduct, 20);
        ThermalizationReport rep;
        stage("experiment", [&] { rep = run_thermalization_experiment(tc, ens, spec); });

        json r = system_json();
        r["region_size"] = rep.region_size;
        r["horizon"] = rep.horizon;
        r["tau"] = rep.tau;
        r["g_min"] = rep.g_min;
        r["gamma"] = rep.gamma;
        r["edge_constant"] = rep.edge_constant;
        r["time_samples"] = rep.time_samples;
        r["thermalization"] = detail::mean_stat_json(rep.thermalization);
        r["equilibration"] = detail::mean_stat_json(rep.equilibration);
        r["equivalence"] = detail::mean_stat_json(rep.equivalence);
        r["ipr"] = detail::mean_stat_json(rep.ipr);
        r["eps_ge"] = rep.eps_ge ? json(*rep.eps_ge) : json(nullptr);
        r["eps_ed"] = rep.eps_ed;
        r["edge_rhs"] = rep.edge_rhs ? json(*rep.edge_rhs) : json(nullptr);
        r["checks"] = {{"triangle_pointwise", rep.triangle_pointwise},
                       {"triangle_average", rep.triangle_average},
                       {"equilibration_dominance", rep.equilibration_dominance},
                       {"finite_time_dominance", rep.finite_time_dominance}};
        r["states"] = json::array();
        for (const auto& st : rep.states)
            r["states"].push_back({{"ipr", st.ipr},
                                   {"thermalization", detail::mean_stat_json(st.thermalization)},
                                   {"equilibration", detail::mean_stat_json(st.equilibration)},
                                   {"equivalence", st.equivalence},
                                   {"equilibration_bound", st.equilibration_bound},
                                   {"finite_time_bound", st.finite_time_bound},
                                   {"triangle_slack", st.triangle_slack}});
        CsvTable t({"state", "time_index", "time", "thermalization", "equilibration"});
        for (const auto& row : rep.rows)
            t.add({static_cast<std::int64_t>(row.state), static_cast<std::int64_t>(row.time_index), row.time, row.thermalization,
                   row.equilibration});
        emit_pair(r, t);
    }

    void cmd_ipr_scan() {
        detail::Section s(cfg_["ipr"], "ipr", {"basis", "periodicity", "r", "delta", "a", "b", "nu"});
        const auto basis = s.get<std::string>("basis", "momentum");
        require(basis == "momentum" || basis == "energy", "ipr.basis must be 'momentum' or 'energy'");
        const bool periodicity = s.get("periodicity", true);
        const double r_exp = s.get("r", 1.0), delta = s.get("delta", 0.5);
        const auto a = s.optional<double>("a"), b = s.optional<double>("b"), nu = s.optional<double>("nu");
        const Ensemble ens = make_ensemble(EnsembleKind::ComputationalBasis, 100);
        const int n = lattice_.num_sites();

        IprReport ipr;
        stage("ipr", [&] {
            if (basis == "momentum") ipr = average_ipr(ens, MomentumBasis(lattice_), workers_);
            else ipr = average_ipr(ens, *spectrum(), workers_);
        });
        json r = system_json();
        r["basis"] = basis;
        r["ensemble"] = to_string(ens.spec().kind);
        r["exact"] = ipr.exact;
        r["average"] = detail::mean_stat_json(ipr.average);
        r["min"] = ipr.min;
        r["max"] = ipr.max;
        r["exact_average"] = ipr.exact_average ? json(detail::rational_string(*ipr.exact_average)) : json(nullptr);
        if (ens.spec().kind == EnsembleKind::ComputationalBasis && basis == "momentum")
            r["computational_basis_bound"] = 1.0 / n + std::exp2(-n / 2.0 + 2);

        std::optional<PeriodicityReport> per;
        if (periodicity) {
            const auto pc = make_scan_config(lattice_, r_exp, delta, a, b, nu);
            const TranslationTable table(lattice_);
            stage("periodicity", [&] { per = periodicity_probability(ens, pc, table, workers_); });
            json p = {{"r", pc.r},           {"delta", pc.delta},      {"a", pc.a},
                      {"b", pc.b},           {"nu", pc.nu},            {"ell", pc.ell},
                      {"epsilon", pc.epsilon()}, {"num_translates", pc.num_translates}, {"periods", pc.periods},
                      {"in_p", per->in_p},   {"total", per->total},    {"probability", per->probability},
                      {"interval", {per->interval.first, per->interval.second}},
                      {"exact", per->exact}, {"assembled_ipr_bound", per->assembled_ipr_bound}};
            p["per_period"] = json::object();
            for (const auto& [z, prob] : per->per_period) p["per_period"][std::to_string(z)] = prob;
            r["periodicity"] = p;
            r["bound_holds"] = ipr.average.mean <= per->assembled_ipr_bound + 3 * ipr.average.sem;
        } else {
            r["periodicity"] = nullptr;
        }
        CsvTable t({"state", "ipr", "max_overlap_sq", "argmax_period", "in_p"});
        const std::size_t rows = std::max(ipr.values.size(), per ? per->states.size() : std::size_t{0});
        for (std::size_t i = 0; i < rows; ++i) {
            std::vector<CsvCell> row{static_cast<std::int64_t>(i)};
            row.push_back(i < ipr.values.size() ? CsvCell(ipr.values[i]) : CsvCell(std::string()));
            if (per && i < per->states.size()) {
                const auto& st = per->states[i];
                row.push_back(st.max_overlap_sq);
                row.push_back(static_cast<std::int64_t>(st.argmax_period));
                row.push_back(static_cast<std::int64_t>(st.in_p));
            } else {
                row.insert(row.end(), {std::string(), std::string(), std::string()});
            }
            t.add(std::move(row));
        }
        emit_pair(r, t);
    }

    void cmd_weak_eth() {
        detail::Section s(cfg_["weak_eth"], "weak_eth", {"epsilons", "observable"});
        const auto eps = s.get<std::vector<double>>("epsilons", {0.05, 0.1, 0.2, 0.4});
        if (!s.has("observable")) s.raw("observable") = json{{"0", "Z"}};
        const auto obs = LocalObservable::pauli(lattice_, parse_pauli(s.raw("observable"), "weak_eth.observable"));
        const auto spec = spectrum();
        const auto g = gibbs();
        const Region region(lattice_, region_);
        std::vector<double> dev;
        EigenstateExpectationTable table;
        stage("deviations", [&] {
            dev = eigenstate_deviation_norms(*spec, g, Bipartition(lattice_.num_sites(), region), workers_);
            table = eigenstate_expectations(*spec, obs, g, workers_);
        });
        const auto norms = deviation_tail(dev, g.weights, eps);
        const auto values = deviation_tail(table, eps);
        json r = system_json();
        r["region_size"] = region.size();
        r["weighted_deviation_sum"] = norms.weighted_sum;
        r["epsilons"] = eps;
        r["deviation_tail"] = norms.tail;
        r["observable"] = {{"descriptor", table.descriptor},
                           {"thermal_value", table.thermal_value},
                           {"weighted_abs_deviation", values.weighted_sum},
                           {"tail", values.tail},
                           {"warnings", table.warnings}};
        r["threshold_beta"] = terms_ ? json(weak_eth_threshold_beta(*terms_, static_cast<int>(region.size()))) : json(nullptr);
        CsvTable t({"index", "energy", "weight", "deviation_norm", "observable_value"});
        for (std::size_t j = 0; j < spec->dim(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            t.add({static_cast<std::int64_t>(j), spec->energies[jj], g.weights[jj], dev[j], table.values[jj]});
        }
        emit_pair(r, t);
    }

    void cmd_correlations() {
        detail::Section s(cfg_["correlations"], "correlations", {"max_distance", "region_size", "max_purity_size"});
        const int n = lattice_.num_sites(), side = lattice_.side();
        const int size = s.get("region_size", 1);
        require(size >= 1 && size <= kCorrelationRegionCap, "correlations.region_size must be 1 or 2");
        const int reach = (side - 2 * size + 2) / 2;  // largest d whose wrap-around distance is still >= d
        const int dmax = s.get("max_distance", reach);
        require(dmax >= 1 && dmax <= reach, "correlations.max_distance exceeds half the lattice side");
        const int pmax = s.get("max_purity_size", std::min(5, n - 1));
        require(pmax >= 0 && pmax < n, "correlations.max_purity_size must lie in [0, N)");
        const auto g = gibbs();
        auto block = [&](int origin, int extent) {
            std::vector<Coords> cs;
            for (int x = 0; x < extent; ++x) {
                Coords c(static_cast<std::size_t>(lattice_.dimension()), 0);
                c[0] = (origin + x) % side;
                cs.push_back(c);
            }
            return Region::from_coords(lattice_, cs);
        };
        std::vector<CorrelationPoint> points;
        std::vector<std::string> observables;
        stage("correlations", [&] {
            for (int d = 1; d <= dmax; ++d) {
                const auto v = correlation(g, lattice_, block(0, size), block(size - 1 + d, size));
                points.push_back({d, size, size, v.value});
                observables.push_back(v.observable_a.to_string() + " " + v.observable_b.to_string());
            }
        });
        std::vector<double> purities;
        stage("purity", [&] {
            for (int na = 1; na <= pmax; ++na) purities.push_back(subsystem_purity(g, block(0, na)));
        });
        json r = system_json();
        r["region_size"] = size;
        r["correlations"] = json::array();
        for (std::size_t i = 0; i < points.size(); ++i)
            r["correlations"].push_back({{"distance", points[i].distance}, {"value", points[i].value}, {"observables", observables[i]}});
        try {
            const auto prof = fit_correlation_length(points);
            r["fit"] = {{"xi", prof.xi}, {"prefactor", prof.prefactor}, {"residual", prof.residual}, {"r2", prof.r2},
                        {"used_points", prof.used_points}};
        } catch (const ValidationError& e) {
            r["fit"] = {{"error", e.what()}};
        }
        r["purities"] = purities;
        if (purities.size() >= 2) {
            std::vector<double> x, y;
            for (std::size_t i = 0; i < purities.size(); ++i) {
                x.push_back(static_cast<double>(i + 1));
                y.push_back(std::log(purities[i]));
            }
            r["log_purity_slope"] = linear_fit(x, y).slope;
        }
        r["threshold_beta"] = terms_ ? json(corr_threshold_beta(std::max(2, terms_->locality()), lattice_.dimension(),
                                                                max_local_term_norm(*terms_)))
                                     : json(nullptr);
        CsvTable t({"quantity", "x", "value"});
        for (const auto& p : points) t.add({std::string("correlation"), static_cast<std::int64_t>(p.distance), p.value});
        for (std::size_t i = 0; i < purities.size(); ++i)
            t.add({std::string("purity"), static_cast<std::int64_t>(i + 1), purities[i]});
        emit_pair(r, t);
    }

    void cmd_unravel() {
        const auto opt = unravel_options();
        const auto g = gibbs();
        UnravelingResult u;
        stage("unravel", [&] { u = unravel_gibbs(g, opt); });
        json r = system_json();
        r["residual"] = u.residual;
        r["feasible"] = u.feasible;
        r["iterations"] = u.iterations;
        r["support_size"] = u.probabilities.size();
        if (!u.probabilities.empty()) {
            EnsembleSpec es;
            es.kind = EnsembleKind::UnravelingWeighted;
            es.unraveling = std::make_shared<const UnravelingResult>(u);
            es.seed = derive_seed(seed_, {0x656e73ULL});
            const Ensemble ens(es, lattice_, terms_);
            EnsembleStats st;
            stage("ensemble", [&] { st = ensemble_stats(ens, hamiltonian_dense(), g, {.workers = workers_}); });
            r["ensemble"] = {{"exact", st.exact},
                             {"eps_ge", st.eps_ge},
                             {"eps_ge_sem", st.eps_ge_sem},
                             {"mean_energy", st.mean_energy},
                             {"thermal_energy", st.thermal_energy}};
        }
        CsvTable t({"index", "stabilizer_digits", "weight"});
        for (const auto& [idx, p] : u.probabilities) {
            std::string digits;
            for (int q : decode_base6(idx, lattice_.num_sites())) digits += static_cast<char>('0' + q);
            t.add({static_cast<std::int64_t>(idx), digits, p});
        }
        emit_pair(r, t);
    }

    void cmd_gge() {
        detail::Section s(cfg_["gge"], "gge", {"charges", "lambda"});
        if (!s.has("charges")) s.raw("charges") = json::array({"hamiltonian", "total_z"});
        const json charge_spec = s.raw("charges");
        require(charge_spec.is_array() && !charge_spec.empty(), "gge.charges must be a nonempty list");
        std::vector<DenseOperator> charges;
        std::vector<std::string> names;
        const DenseOperator h = hamiltonian_dense();
        for (const auto& c : charge_spec) {
            if (c == "hamiltonian") {
                charges.push_back(h);
                names.push_back("hamiltonian");
            } else if (c == "total_z") {
                charges.push_back(build_hamiltonian(total_z(lattice_), cap_n_));
                names.push_back("total_z");
            } else if (c.is_object()) {
                charges.push_back(build_hamiltonian(term_set_from_json(c, lattice_), cap_n_));
                names.push_back("terms");
            } else {
                throw ValidationError("gge charges are 'hamiltonian', 'total_z' or term-set objects");
            }
        }
        std::vector<double> lambda(charges.size(), 0.0);
        lambda[0] = beta_;
        lambda = s.get("lambda", lambda);
        require(lambda.size() == charges.size(), "gge.lambda needs one potential per charge");
        GeneralizedGibbsState gs;
        stage("gge", [&] { gs = gge_state(h, charges, lambda); });
        const DenseOperator rho = gs.density();
        double tilt_error = 0.0;
        if (gs.tilt_beta > 0) tilt_error = max_abs(rho - gibbs_state(gs.tilt_hamiltonian(), gs.tilt_beta).density());
        json r = system_json();
        r["lambda"] = lambda;
        r["tilt_beta"] = gs.tilt_beta;
        r["charge_expectations"] = gs.charge_expectations;
        r["tilt_identity_error"] = tilt_error;
        r["entropy"] = von_neumann_entropy(rho);
        CsvTable t({"charge", "name", "lambda", "expectation"});
        for (std::size_t i = 0; i < charges.size(); ++i)
            t.add({static_cast<std::int64_t>(i), names[i], lambda[i], gs.charge_expectations[i]});
        emit_pair(r, t);
    }

    std::string command_;
    json cfg_;
    std::filesystem::path out_;
    RunOverrides overrides_;

    std::uint64_t seed_ = 0;
    int workers_ = 1, cap_n_ = kDefaultDenseCap;
    double beta_ = 0.0;
    LatticeSpec lattice_;
    std::vector<Site> region_;
    ResonanceOptions resonance_;
    std::optional<PauliTermSet> terms_;
    DenseOperator dense_;
    std::optional<json> planted_;
    std::shared_ptr<const Spectrum> spectrum_;

    RunOutcome outcome_;
    std::mutex files_mutex_;
    std::map<std::string, std::pair<std::size_t, std::uint64_t>> files_;
    std::vector<std::pair<std::string, double>> stages_;
};

}  // namespace qthermal

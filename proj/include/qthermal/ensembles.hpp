#pragma once

// Pure-state ensembles with tracked preparation complexity, and ensemble statistics.

#include <optional>
#include <string>

#include "parallel.hpp"
#include "unravel.hpp"

namespace qthermal {

// ---------------------------------------------------------------------------
// Shallow circuits

struct TwoQubitGate {
    Site low, high;       // `low` is the less significant qubit of the 4x4 matrix
    Eigen::Matrix4cd matrix;
};

/// Per-layer brickwork of Haar-random 2-qubit gates. Layer t acts along axis t mod D on
/// nearest-neighbour pairs whose coordinate along that axis has parity (t / D) mod 2.
class ShallowCircuit {
public:
    ShallowCircuit() = default;
    explicit ShallowCircuit(std::vector<std::vector<TwoQubitGate>> layers) : layers_(std::move(layers)) { validate(); }

    int depth() const noexcept { return static_cast<int>(layers_.size()); }
    const std::vector<std::vector<TwoQubitGate>>& layers() const noexcept { return layers_; }

    void validate() const {
        for (const auto& layer : layers_) {
            std::uint64_t used = 0;
            for (const auto& g : layer) {
                require(g.low != g.high, "gate acts twice on one qubit");
                const std::uint64_t m = (std::uint64_t{1} << g.low.index) | (std::uint64_t{1} << g.high.index);
                if (used & m) throw ValidationError("gate supports overlap within a layer");
                used |= m;
                if (!g.matrix.isUnitary(1e-10)) throw ValidationError("circuit gate is not unitary");
            }
        }
    }

    StateVector apply(StateVector psi) const {
        for (const auto& layer : layers_)
            for (const auto& g : layer) apply_gate(g, psi);
        return psi;
    }

    static void apply_gate(const TwoQubitGate& g, StateVector& psi) {
        const std::uint64_t bl = std::uint64_t{1} << g.low.index, bh = std::uint64_t{1} << g.high.index;
        const auto d = static_cast<std::uint64_t>(psi.size());
        for (std::uint64_t b = 0; b < d; ++b) {
            if (b & (bl | bh)) continue;
            const std::uint64_t idx[4] = {b, b | bl, b | bh, b | bl | bh};
            Eigen::Vector4cd v;
            for (int k = 0; k < 4; ++k) v[k] = psi[static_cast<Eigen::Index>(idx[k])];
            const Eigen::Vector4cd w = g.matrix * v;
            for (int k = 0; k < 4; ++k) psi[static_cast<Eigen::Index>(idx[k])] = w[k];
        }
    }

private:
    std::vector<std::vector<TwoQubitGate>> layers_;
};

/// Haar-random unitary from the QR decomposition of a complex Ginibre matrix with phase correction.
template <int Dim>
Eigen::Matrix<cplx, Dim, Dim> haar_unitary(Rng& rng) {
    Eigen::Matrix<cplx, Dim, Dim> g;
    for (int c = 0; c < Dim; ++c)
        for (int r = 0; r < Dim; ++r) {
            const double re = normal01(rng);
            g(r, c) = cplx(re, normal01(rng));
        }
    Eigen::HouseholderQR<Eigen::Matrix<cplx, Dim, Dim>> qr(g);
    Eigen::Matrix<cplx, Dim, Dim> q = qr.householderQ();
    const auto& r = qr.matrixQR();
    for (int k = 0; k < Dim; ++k) {
        const cplx d = r(k, k);
        q.col(k) *= std::abs(d) > 0 ? d / std::abs(d) : cplx(1.0);
    }
    return q;
}

/// Disjoint nearest-neighbour pairs used by brickwork layer t.
inline std::vector<std::pair<Site, Site>> brickwork_pairs(const LatticeSpec& lattice, int layer) {
    const int dim = lattice.dimension(), side = lattice.side();
    const int axis = layer % dim;
    const int parity = (layer / dim) % 2;
    std::vector<std::pair<Site, Site>> out;
    for (int i = 0; i < lattice.num_sites(); ++i) {
        const Site s{static_cast<std::uint32_t>(i)};
        const int x = lattice.coords(s)[static_cast<std::size_t>(axis)];
        if (x % 2 != parity) continue;
        if (x + 1 >= side && side % 2 == 1) continue;  // odd sides cannot close the brick at the seam
        if (side == 2 && x == 1) continue;              // the wrap-around pair duplicates (0,1)
        out.emplace_back(s, lattice.add(s, lattice.unit(axis)));
    }
    return out;
}

inline ShallowCircuit brickwork_circuit(const LatticeSpec& lattice, int depth, Rng& rng) {
    require(depth >= 0, "circuit depth must be nonnegative");
    std::vector<std::vector<TwoQubitGate>> layers;
    for (int t = 0; t < depth; ++t) {
        std::vector<TwoQubitGate> layer;
        for (auto [a, b] : brickwork_pairs(lattice, t)) layer.push_back({a, b, haar_unitary<4>(rng)});
        layers.push_back(std::move(layer));
    }
    return ShallowCircuit(std::move(layers));
}

// ---------------------------------------------------------------------------
// Ensemble specification and sampling

enum class EnsembleKind {
    ComputationalBasis,
    StabilizerProduct,
    ProductHaar,
    ShallowCircuit,
    UnravelingWeighted,
    MicrocanonicalProduct,
    CanonicalProduct,
};

inline std::string to_string(EnsembleKind k) {
    switch (k) {
        case EnsembleKind::ComputationalBasis: return "computational_basis_uniform";
        case EnsembleKind::StabilizerProduct: return "stabilizer_product";
        case EnsembleKind::ProductHaar: return "product_haar";
        case EnsembleKind::ShallowCircuit: return "shallow_circuit";
        case EnsembleKind::UnravelingWeighted: return "unraveling_weighted";
        case EnsembleKind::MicrocanonicalProduct: return "microcanonical_product";
        case EnsembleKind::CanonicalProduct: return "canonical_product";
    }
    return "unknown";
}

inline EnsembleKind ensemble_kind_from_string(const std::string& s) {
    for (auto k : {EnsembleKind::ComputationalBasis, EnsembleKind::StabilizerProduct, EnsembleKind::ProductHaar,
                   EnsembleKind::ShallowCircuit, EnsembleKind::UnravelingWeighted, EnsembleKind::MicrocanonicalProduct,
                   EnsembleKind::CanonicalProduct})
        if (to_string(k) == s) return k;
    throw ValidationError("unknown ensemble kind '" + s + "'");
}

struct EnsembleSpec {
    EnsembleKind kind = EnsembleKind::ComputationalBasis;
    int complexity = 0;  // budget C(N)
    std::uint64_t seed = 0;
    std::size_t samples = 100;

    int circuit_depth = 0;                                      // shallow_circuit
    EnsembleKind base_product = EnsembleKind::StabilizerProduct;  // shallow_circuit / microcanonical base states
    std::shared_ptr<const UnravelingResult> unraveling;          // unraveling_weighted
    std::optional<double> target_energy;                         // microcanonical / canonical: E_beta
    std::optional<double> window;                                // microcanonical Delta(N)
    std::size_t retry_cap = 100000;                              // microcanonical rejection attempts
    std::optional<double> tilt_beta;                             // canonical beta'; solved when absent
    int gibbs_sweeps = 64;                                       // canonical heat-bath sweeps per sample
};

/// Emitted state with the data needed to certify its complexity.
struct SampledState {
    StateVector psi;
    std::vector<QubitState> product;  // base product state before any circuit
    ShallowCircuit circuit;
    double product_energy = 0.0;      // <H> for microcanonical / canonical draws

    int depth() const noexcept { return circuit.depth(); }
};

inline constexpr std::size_t kExactSupportLimit = std::size_t{1} << 16;

namespace detail {

inline QubitState haar_qubit(Rng& rng) {
    Eigen::Vector2cd v;
    for (int k = 0; k < 2; ++k) {
        const double re = normal01(rng);
        v[k] = cplx(re, normal01(rng));
    }
    return v / v.norm();
}

inline std::uint64_t kind_tag(EnsembleKind k) { return 0x656e73ULL + static_cast<std::uint64_t>(k); }

/// Per-site Bloch table for the six stabilizer states: bloch[s][p] = <s|P|s>, p in I,X,Y,Z.
inline const Eigen::MatrixXd& stabilizer_bloch() {
    static const Eigen::MatrixXd a = stabilizer_design_block();
    return a;
}

}  // namespace detail

using BlochVector = Eigen::Vector3d;

inline BlochVector bloch_of(const QubitState& q) {
    BlochVector n;
    for (int p = 1; p <= 3; ++p) n[p - 1] = q.dot(pauli_matrix(static_cast<Pauli>(p)) * q).real();
    return n;
}

/// Qubit state with the given unit Bloch vector.
inline QubitState qubit_from_bloch(const BlochVector& n) {
    const double theta = std::acos(std::clamp(n[2], -1.0, 1.0));
    const double phi = std::atan2(n[1], n[0]);
    QubitState q;
    q << std::cos(theta / 2), std::polar(std::sin(theta / 2), phi);
    return q;
}

/// Product-state energies are multilinear in the site Bloch vectors: <H> = sum_t c_t prod_{q in t} n_q[P_q].
class ProductEnergy {
public:
    explicit ProductEnergy(const PauliTermSet& terms) : n_(terms.num_qubits()), terms_(terms.expanded()) {
        touching_.resize(static_cast<std::size_t>(n_));
        for (std::size_t i = 0; i < terms_.size(); ++i)
            for (auto s : terms_[i].string.support()) touching_[s.index].push_back(i);
    }

    int num_qubits() const noexcept { return n_; }

    double energy(const std::vector<BlochVector>& config) const {
        double e = 0;
        for (const auto& t : terms_) {
            double v = t.coeff;
            for (const auto& [site, p] : t.string.letters()) v *= config[site.index][static_cast<int>(p) - 1];
            e += v;
        }
        return e;
    }

    /// Effective field h at `site`: the energy is h . n_site plus a term independent of n_site.
    BlochVector local_field(const std::vector<BlochVector>& config, int site) const {
        BlochVector h = BlochVector::Zero();
        for (auto i : touching_[static_cast<std::size_t>(site)]) {
            const auto& t = terms_[i];
            double v = t.coeff;
            int own = 0;
            for (const auto& [s, p] : t.string.letters()) {
                if (static_cast<int>(s.index) == site) own = static_cast<int>(p) - 1;
                else v *= config[s.index][static_cast<int>(p) - 1];
            }
            h[own] += v;
        }
        return h;
    }

private:
    int n_;
    std::vector<PauliTerm> terms_;
    std::vector<std::vector<std::size_t>> touching_;
};

inline const std::array<BlochVector, 6>& stabilizer_blochs() {
    static const std::array<BlochVector, 6> b = [] {
        std::array<BlochVector, 6> out;
        for (int s = 0; s < 6; ++s) out[static_cast<std::size_t>(s)] = bloch_of(stabilizer_qubit(s));
        return out;
    }();
    return b;
}

inline std::vector<int> decode_base6(std::uint64_t idx, int n) {
    std::vector<int> c(static_cast<std::size_t>(n));
    for (auto& x : c) {
        x = static_cast<int>(idx % 6);
        idx /= 6;
    }
    return c;
}

inline std::vector<BlochVector> stabilizer_config(std::uint64_t idx, int n) {
    std::vector<BlochVector> out;
    for (int s : decode_base6(idx, n)) out.push_back(stabilizer_blochs()[static_cast<std::size_t>(s)]);
    return out;
}

/// Exact draw of n on the sphere with density proportional to exp(-b h . n).
inline BlochVector von_mises_fisher(const BlochVector& h, double b, Rng& rng) {
    const double kappa = b * h.norm();
    const double u = uniform01(rng), phi = uniform(rng, 0.0, 2 * std::numbers::pi);
    const double w = kappa < 1e-12 ? 2 * u - 1 : 1 + std::log(u + (1 - u) * std::exp(-2 * kappa)) / kappa;
    BlochVector mu = kappa < 1e-12 ? BlochVector(0, 0, 1) : BlochVector(-h / h.norm());
    const BlochVector helper = std::abs(mu[0]) < 0.9 ? BlochVector(1, 0, 0) : BlochVector(0, 1, 0);
    const BlochVector e1 = mu.cross(helper).normalized(), e2 = mu.cross(e1);
    const double r = std::sqrt(std::max(0.0, 1 - w * w));
    return w * mu + r * (std::cos(phi) * e1 + std::sin(phi) * e2);
}

class Ensemble {
public:
    Ensemble(EnsembleSpec spec, LatticeSpec lattice, std::optional<PauliTermSet> hamiltonian = std::nullopt)
        : spec_(std::move(spec)), lattice_(lattice), hamiltonian_(std::move(hamiltonian)) {
        const int n = lattice_.num_sites();
        require(spec_.samples >= 1, "ensemble needs at least one sample");
        require(spec_.complexity >= 0, "complexity budget must be nonnegative");
        switch (spec_.kind) {
            case EnsembleKind::ShallowCircuit:
                require(spec_.circuit_depth >= 0, "circuit depth must be nonnegative");
                require(spec_.circuit_depth <= spec_.complexity, "circuit depth exceeds the ensemble complexity budget");
                require(spec_.base_product == EnsembleKind::ComputationalBasis || spec_.base_product == EnsembleKind::StabilizerProduct ||
                            spec_.base_product == EnsembleKind::ProductHaar,
                        "shallow-circuit base must be a product ensemble");
                break;
            case EnsembleKind::UnravelingWeighted:
                require(spec_.unraveling != nullptr, "unraveling_weighted needs an unraveling result");
                require(spec_.unraveling->num_qubits == n, "unraveling size does not match the lattice");
                require(!spec_.unraveling->probabilities.empty(), "unraveling has no weights");
                for (const auto& [idx, p] : spec_.unraveling->probabilities) cumulative_.push_back((cumulative_.empty() ? 0.0 : cumulative_.back()) + p);
                break;
            case EnsembleKind::MicrocanonicalProduct:
                require(hamiltonian_.has_value(), "microcanonical ensemble needs a Hamiltonian");
                require(spec_.target_energy.has_value(), "microcanonical ensemble needs a target energy");
                require(spec_.base_product == EnsembleKind::StabilizerProduct || spec_.base_product == EnsembleKind::ProductHaar,
                        "microcanonical base must be stabilizer_product or product_haar");
                window_ = spec_.window ? *spec_.window : std::sqrt(static_cast<double>(n)) * max_local_term_norm(*hamiltonian_);
                require(window_ > 0, "microcanonical window must be positive");
                expanded_ = hamiltonian_->expanded();
                break;
            case EnsembleKind::CanonicalProduct:
                require(hamiltonian_.has_value(), "canonical ensemble needs a Hamiltonian");
                require(spec_.tilt_beta.has_value() || spec_.target_energy.has_value(), "canonical ensemble needs beta' or a target energy");
                require(spec_.base_product == EnsembleKind::StabilizerProduct || spec_.base_product == EnsembleKind::ProductHaar,
                        "canonical base must be stabilizer_product or product_haar");
                energy_model_.emplace(*hamiltonian_);
                tilt_ = spec_.tilt_beta ? *spec_.tilt_beta : solve_tilt(*spec_.target_energy);
                if (canonical_enumerable()) build_canonical_table();
                break;
            default: break;
        }
    }

    const EnsembleSpec& spec() const noexcept { return spec_; }
    const LatticeSpec& lattice() const noexcept { return lattice_; }
    int num_qubits() const noexcept { return lattice_.num_sites(); }
    double window() const noexcept { return window_; }
    double tilt_beta() const noexcept { return tilt_; }

    SampledState sample(std::size_t index) const {
        require(index < spec_.samples, "sample index beyond the ensemble's sample count");
        auto rng = make_rng(spec_.seed, {detail::kind_tag(spec_.kind), index});
        return draw(rng);
    }

    /// Exact support (state, weight) when the ensemble is finite and small enough; empty otherwise.
    bool has_exact_support() const {
        const int n = num_qubits();
        switch (spec_.kind) {
            case EnsembleKind::ComputationalBasis: return hilbert_dim(n) <= kExactSupportLimit;
            case EnsembleKind::StabilizerProduct: return ipow(6, n) <= kExactSupportLimit;
            case EnsembleKind::UnravelingWeighted: return spec_.unraveling->probabilities.size() <= kExactSupportLimit;
            case EnsembleKind::CanonicalProduct: return !canonical_weights_.empty();
            default: return false;
        }
    }

    /// Calls fn(psi, weight) for every support state in a fixed order.
    template <class Fn>
    void for_each_support_state(Fn&& fn) const {
        require(has_exact_support(), "ensemble has no enumerable exact support");
        const int n = num_qubits();
        switch (spec_.kind) {
            case EnsembleKind::ComputationalBasis: {
                const double w = 1.0 / static_cast<double>(hilbert_dim(n));
                for (std::uint64_t b = 0; b < hilbert_dim(n); ++b) fn(basis_state(n, b), w);
                break;
            }
            case EnsembleKind::StabilizerProduct: {
                const std::uint64_t count = ipow(6, n);
                for (std::uint64_t i = 0; i < count; ++i) fn(stabilizer_product_state(i, n), 1.0 / static_cast<double>(count));
                break;
            }
            case EnsembleKind::UnravelingWeighted:
                for (const auto& [idx, p] : spec_.unraveling->probabilities) fn(stabilizer_product_state(idx, n), p);
                break;
            case EnsembleKind::CanonicalProduct:
                for (std::size_t i = 0; i < canonical_weights_.size(); ++i)
                    if (canonical_weights_[i] > 0) fn(stabilizer_product_state(i, n), canonical_weights_[i]);
                break;
            default: break;
        }
    }

    /// Mean product-state energy of the canonical ensemble at tilt b (exact for enumerable supports).
    double canonical_mean_energy(double b) const {
        const int n = num_qubits();
        if (canonical_enumerable()) {
            const std::uint64_t count = ipow(6, n);
            std::vector<double> e(count);
            double lo = std::numeric_limits<double>::infinity();
            for (std::uint64_t i = 0; i < count; ++i) {
                e[i] = energy_model_->energy(stabilizer_config(i, n));
                lo = std::min(lo, e[i]);
            }
            double z = 0, acc = 0;
            for (double x : e) {
                const double w = std::exp(-b * (x - lo));
                z += w;
                acc += w * x;
            }
            return acc / z;
        }
        // Common random numbers across tilts keep the bisection deterministic.
        constexpr std::size_t kChains = 64;
        double acc = 0;
        for (std::size_t c = 0; c < kChains; ++c) {
            auto rng = make_rng(spec_.seed, {0x63616eULL, c});
            acc += energy_model_->energy(heat_bath(rng, b));
        }
        return acc / kChains;
    }

private:
    SampledState draw(Rng& rng) const {
        const int n = num_qubits();
        SampledState out;
        switch (spec_.kind) {
            case EnsembleKind::ComputationalBasis:
            case EnsembleKind::StabilizerProduct:
            case EnsembleKind::ProductHaar:
                out.product = draw_product(spec_.kind, rng);
                out.psi = product_state(out.product);
                break;
            case EnsembleKind::ShallowCircuit:
                out.product = draw_product(spec_.base_product, rng);
                out.circuit = brickwork_circuit(lattice_, spec_.circuit_depth, rng);
                out.psi = out.circuit.apply(product_state(out.product));
                break;
            case EnsembleKind::UnravelingWeighted: {
                const double u = uniform01(rng) * cumulative_.back();
                const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
                const auto pos = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
                out.product = stabilizer_product_sites(spec_.unraveling->probabilities[pos].first, n);
                out.psi = product_state(out.product);
                break;
            }
            case EnsembleKind::MicrocanonicalProduct: {
                for (std::size_t attempt = 0; attempt < spec_.retry_cap; ++attempt) {
                    auto sites = draw_product(spec_.base_product, rng);
                    const double e = product_energy(expanded_, sites);
                    if (std::abs(e - *spec_.target_energy) <= window_) {
                        out.product = std::move(sites);
                        out.product_energy = e;
                        out.psi = product_state(out.product);
                        return out;
                    }
                }
                throw ValidationError("microcanonical window empty after " + std::to_string(spec_.retry_cap) +
                                      " attempts; use a larger window Delta");
            }
            case EnsembleKind::CanonicalProduct: {
                std::vector<BlochVector> config;
                if (!canonical_weights_.empty()) {
                    const double u = uniform01(rng);
                    const auto it = std::upper_bound(canonical_cumulative_.begin(), canonical_cumulative_.end(), u);
                    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - canonical_cumulative_.begin()),
                                                           canonical_cumulative_.size() - 1);
                    config = stabilizer_config(idx, n);
                    out.product = stabilizer_product_sites(idx, n);
                } else {
                    config = heat_bath(rng, tilt_);
                    for (const auto& b : config) out.product.push_back(qubit_from_bloch(b));
                }
                out.product_energy = energy_model_->energy(config);
                out.psi = product_state(out.product);
                break;
            }
        }
        return out;
    }

    std::vector<QubitState> draw_product(EnsembleKind kind, Rng& rng) const {
        const int n = num_qubits();
        std::vector<QubitState> sites;
        for (int q = 0; q < n; ++q) {
            switch (kind) {
                case EnsembleKind::ComputationalBasis: sites.push_back(stabilizer_qubit(static_cast<int>(uniform_index(rng, 2)))); break;
                case EnsembleKind::StabilizerProduct: sites.push_back(stabilizer_qubit(static_cast<int>(uniform_index(rng, 6)))); break;
                case EnsembleKind::ProductHaar: sites.push_back(detail::haar_qubit(rng)); break;
                default: throw ValidationError("not a product ensemble kind");
            }
        }
        return sites;
    }

    bool canonical_enumerable() const {
        return spec_.base_product == EnsembleKind::StabilizerProduct && ipow(6, num_qubits()) <= kExactSupportLimit;
    }

    /// Heat-bath chain on the product manifold; sites are resampled from their exact conditionals.
    std::vector<BlochVector> heat_bath(Rng& rng, double b) const {
        const int n = num_qubits();
        const bool stabilizer = spec_.base_product == EnsembleKind::StabilizerProduct;
        const auto& six = stabilizer_blochs();
        std::vector<BlochVector> config(static_cast<std::size_t>(n));
        for (auto& c : config)
            c = stabilizer ? six[uniform_index(rng, 6)] : von_mises_fisher(BlochVector::Zero(), 0.0, rng);
        for (int sweep = 0; sweep < spec_.gibbs_sweeps; ++sweep)
            for (int site = 0; site < n; ++site) {
                const BlochVector h = energy_model_->local_field(config, site);
                if (!stabilizer) {
                    config[static_cast<std::size_t>(site)] = von_mises_fisher(h, b, rng);
                    continue;
                }
                std::array<double, 6> e{};
                for (int s = 0; s < 6; ++s) e[static_cast<std::size_t>(s)] = h.dot(six[static_cast<std::size_t>(s)]);
                const double lo = *std::min_element(e.begin(), e.end());
                std::array<double, 6> w{};
                double z = 0;
                for (int s = 0; s < 6; ++s) z += (w[static_cast<std::size_t>(s)] = std::exp(-b * (e[static_cast<std::size_t>(s)] - lo)));
                double u = uniform01(rng) * z;
                int pick = 5;
                for (int s = 0; s < 6; ++s) {
                    u -= w[static_cast<std::size_t>(s)];
                    if (u < 0) {
                        pick = s;
                        break;
                    }
                }
                config[static_cast<std::size_t>(site)] = six[static_cast<std::size_t>(pick)];
            }
        return config;
    }

    /// beta' >= 0 with canonical mean energy equal to the target, by bisection.
    double solve_tilt(double target) const {
        const double e0 = canonical_mean_energy(0.0);
        if (target >= e0) return 0.0;
        double lo = 0.0, hi = 1.0;
        while (canonical_mean_energy(hi) > target) {
            lo = hi;
            hi *= 2;
            if (hi > 1e4) throw ValidationError("target energy below the reach of the canonical product ensemble");
        }
        for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            (canonical_mean_energy(mid) > target ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }

    void build_canonical_table() {
        const int n = num_qubits();
        const std::uint64_t count = ipow(6, n);
        std::vector<double> e(count);
        double lo = std::numeric_limits<double>::infinity();
        for (std::uint64_t i = 0; i < count; ++i) {
            e[i] = energy_model_->energy(stabilizer_config(i, n));
            lo = std::min(lo, e[i]);
        }
        canonical_weights_.resize(count);
        double z = 0;
        for (std::uint64_t i = 0; i < count; ++i) z += (canonical_weights_[i] = std::exp(-tilt_ * (e[i] - lo)));
        double acc = 0;
        canonical_cumulative_.resize(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            canonical_weights_[i] /= z;
            acc += canonical_weights_[i];
            canonical_cumulative_[i] = acc;
        }
    }

    EnsembleSpec spec_;
    LatticeSpec lattice_;
    std::optional<PauliTermSet> hamiltonian_;
    std::vector<PauliTerm> expanded_;
    std::optional<ProductEnergy> energy_model_;
    std::vector<double> cumulative_;
    std::vector<double> canonical_weights_, canonical_cumulative_;
    double window_ = 0.0;
    double tilt_ = 0.0;
};

// ---------------------------------------------------------------------------
// Complexity certification

/// Schmidt rank of psi across A | complement.
inline int schmidt_rank(const StateVector& psi, const Bipartition& part, double rel_tol = 1e-10) {
    const ComplexMatrix m = part.reshape(psi);
    Eigen::JacobiSVD<ComplexMatrix> svd(m);
    const auto& s = svd.singularValues();
    int rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s[i] > rel_tol * s[0]) ++rank;
    return rank;
}

inline constexpr double kLightConeTolerance = 1e-10;

/// Returns the circuit depth C after checking rank(psi_A) <= 2^{|d_C A|} on translated blocks and
/// zero correlations between single sites farther apart than 2C.
inline int certify_complexity(const SampledState& s, const LatticeSpec& lattice) {
    const int c = s.depth();
    const int n = lattice.num_sites();
    for (int extent = 1; extent < lattice.side(); ++extent) {
        for (int shift = 0; shift < std::min(n, 3); ++shift) {
            const Region a = Region::block(lattice, Site{static_cast<std::uint32_t>(shift)}, extent);
            if (static_cast<int>(a.size()) >= n) continue;
            const int boundary = boundary_size(lattice, a, c);
            const int rank = schmidt_rank(s.psi, Bipartition(n, a));
            if (boundary < 31 && rank > (1 << boundary))
                throw ConsistencyError("Schmidt rank " + std::to_string(rank) + " exceeds 2^" + std::to_string(boundary) +
                                       " for a depth-" + std::to_string(c) + " state");
        }
    }
    for (int x = 0; x < std::min(n, 4); ++x)
        for (int y = 0; y < n; ++y) {
            const Site sx{static_cast<std::uint32_t>(x)}, sy{static_cast<std::uint32_t>(y)};
            if (site_distance(lattice, sx, sy) <= 2 * c) continue;
            const Region a(lattice, {sx}), b(lattice, {sy});
            const Bipartition part(n, region_union(lattice, a, b));
            const double corr = correlation_from_reduced(part.reduce_pure(s.psi), lattice, a, b).value;
            if (corr > kLightConeTolerance)
                throw ConsistencyError("correlation " + std::to_string(corr) + " beyond the light cone of a depth-" +
                                       std::to_string(c) + " state");
        }
    return c;
}

// ---------------------------------------------------------------------------
// Ensemble statistics

struct EnsembleStats {
    DenseOperator mean_state;
    double eps_ge = 0.0;         // 2^N ||mean - g||_1
    double eps_ge_sem = 0.0;     // bootstrap standard error (0 in exact mode)
    double mean_energy = 0.0;
    double mean_energy_sem = 0.0;
    double thermal_energy = 0.0;  // tr(g H)
    std::size_t samples = 0;
    bool exact = false;
};

struct EnsembleStatsOptions {
    bool allow_exact = true;
    std::size_t bootstrap = 16;
    int workers = 1;
};

inline EnsembleStats ensemble_stats(const Ensemble& ens, const DenseOperator& h, const GibbsState& g,
                                   const EnsembleStatsOptions& opt = {}) {
    const auto d = static_cast<Eigen::Index>(hilbert_dim(ens.num_qubits()));
    require(h.rows() == d && static_cast<Eigen::Index>(g.dim()) == d, "Hamiltonian / Gibbs dimension mismatch");
    EnsembleStats st;
    st.thermal_energy = g.energy;
    const DenseOperator rho_g = g.density();
    st.mean_state = DenseOperator::Zero(d, d);
    if (opt.allow_exact && ens.has_exact_support()) {
        st.exact = true;
        double e = 0;
        ens.for_each_support_state([&](const StateVector& psi, double w) {
            st.mean_state.noalias() += w * (psi * psi.adjoint());
            e += w * psi.dot(h * psi).real();
            ++st.samples;
        });
        st.mean_energy = e;
        st.eps_ge = std::ldexp(trace_norm_hermitian(st.mean_state - rho_g), ens.num_qubits());
        return st;
    }
    const std::size_t m = ens.spec().samples;
    require(m >= 2, "ensemble statistics need >= 2 samples");
    std::vector<StateVector> states(m);
    parallel_for(m, opt.workers, [&](std::size_t i) { states[i] = ens.sample(i).psi; });
    std::vector<double> energies(m);
    for (std::size_t i = 0; i < m; ++i) {
        st.mean_state.noalias() += states[i] * states[i].adjoint();
        energies[i] = states[i].dot(h * states[i]).real();
    }
    st.mean_state /= static_cast<double>(m);
    st.samples = m;
    const auto es = mean_and_stderr(energies);
    st.mean_energy = es.mean;
    st.mean_energy_sem = es.sem;
    st.eps_ge = std::ldexp(trace_norm_hermitian(st.mean_state - rho_g), ens.num_qubits());
    if (opt.bootstrap >= 2) {
        auto rng = make_rng(ens.spec().seed, {0x626f6f74ULL});
        std::vector<double> boot;
        for (std::size_t b = 0; b < opt.bootstrap; ++b) {
            DenseOperator mean = DenseOperator::Zero(d, d);
            for (std::size_t i = 0; i < m; ++i) {
                const auto& psi = states[uniform_index(rng, m)];
                mean.noalias() += psi * psi.adjoint();
            }
            mean /= static_cast<double>(m);
            boot.push_back(std::ldexp(trace_norm_hermitian(mean - rho_g), ens.num_qubits()));
        }
        st.eps_ge_sem = mean_and_stderr(boot).sem * std::sqrt(static_cast<double>(boot.size()));
    }
    return st;
}

}  // namespace qthermal

#pragma once

// Pauli-string algebra, translation-invariant term sets, dense operators and state vectors.
// Basis convention: computational basis index b with site i stored in bit i (site 0 = LSB).

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <complex>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "lattice.hpp"
#include "rng.hpp"

namespace qthermal {

using cplx = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using StateVector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
/// Dense 2^N x 2^N operator; stored full (not packed).
using DenseOperator = ComplexMatrix;

inline constexpr int kDefaultDenseCap = 14;
inline constexpr int kDefaultLocalityCap = 3;

enum class Pauli : std::uint8_t { I = 0, X = 1, Y = 2, Z = 3 };

inline char pauli_char(Pauli p) { return "IXYZ"[static_cast<int>(p)]; }

inline Pauli pauli_from_char(char c) {
    switch (c) {
        case 'I': return Pauli::I;
        case 'X': return Pauli::X;
        case 'Y': return Pauli::Y;
        case 'Z': return Pauli::Z;
        default: throw ValidationError(std::string("invalid Pauli letter '") + c + "'");
    }
}

/// 2x2 matrix of a single-qubit Pauli in the {|0>,|1>} basis.
inline Eigen::Matrix2cd pauli_matrix(Pauli p) {
    Eigen::Matrix2cd m;
    switch (p) {
        case Pauli::I: m << 1, 0, 0, 1; break;
        case Pauli::X: m << 0, 1, 1, 0; break;
        case Pauli::Y: m << 0, cplx(0, -1), cplx(0, 1), 0; break;
        case Pauli::Z: m << 1, 0, 0, -1; break;
    }
    return m;
}

/// Bit-mask form of a Pauli string: P = i^{n_y} X^{x_mask} Z^{z_mask}.
struct PauliMasks {
    std::uint64_t x = 0;
    std::uint64_t z = 0;
    int num_y = 0;

    /// P|b> = phase(b) |b ^ x>.
    cplx phase(std::uint64_t b) const noexcept {
        static const cplx ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        const int sign = std::popcount(b & z) & 1;
        return sign ? -ipow[num_y & 3] : ipow[num_y & 3];
    }
};

/// Tensor product of X/Y/Z letters on a set of sites; identity elsewhere.
class PauliString {
public:
    PauliString() = default;

    explicit PauliString(std::vector<std::pair<Site, Pauli>> letters) : letters_(std::move(letters)) {
        std::erase_if(letters_, [](const auto& l) { return l.second == Pauli::I; });
        std::sort(letters_.begin(), letters_.end());
        for (std::size_t i = 1; i < letters_.size(); ++i)
            require(letters_[i].first != letters_[i - 1].first, "Pauli string has repeated site");
    }

    static PauliString single(Site s, Pauli p) { return PauliString({{s, p}}); }

    const std::vector<std::pair<Site, Pauli>>& letters() const noexcept { return letters_; }
    bool is_identity() const noexcept { return letters_.empty(); }
    std::size_t weight() const noexcept { return letters_.size(); }

    Pauli at(Site s) const {
        for (const auto& [site, p] : letters_)
            if (site == s) return p;
        return Pauli::I;
    }

    std::vector<Site> support() const {
        std::vector<Site> s;
        for (const auto& l : letters_) s.push_back(l.first);
        return s;
    }

    PauliMasks masks() const {
        PauliMasks m;
        for (const auto& [site, p] : letters_) {
            const std::uint64_t bit = std::uint64_t{1} << site.index;
            if (p == Pauli::X || p == Pauli::Y) m.x |= bit;
            if (p == Pauli::Z || p == Pauli::Y) m.z |= bit;
            if (p == Pauli::Y) ++m.num_y;
        }
        return m;
    }

    PauliString translated(const LatticeSpec& lattice, Site shift) const {
        std::vector<std::pair<Site, Pauli>> out;
        out.reserve(letters_.size());
        for (const auto& [s, p] : letters_) out.emplace_back(lattice.add(s, shift), p);
        return PauliString(std::move(out));
    }

    std::string to_string() const {
        std::string s;
        for (const auto& [site, p] : letters_) {
            s += pauli_char(p);
            s += std::to_string(site.index);
        }
        return s.empty() ? "I" : s;
    }

    friend bool operator==(const PauliString&, const PauliString&) = default;
    friend auto operator<=>(const PauliString&, const PauliString&) = default;

private:
    std::vector<std::pair<Site, Pauli>> letters_;
};

struct PauliTerm {
    PauliString string;
    double coeff = 0.0;
};

/// Does the support of `s` fit inside some translate of the hypercube [0,k)^D?
inline bool fits_in_cell(const LatticeSpec& lattice, const std::vector<Site>& support, int k) {
    if (support.empty()) return true;
    const int side = lattice.side();
    for (int axis = 0; axis < lattice.dimension(); ++axis) {
        std::vector<int> xs;
        for (auto s : support) xs.push_back(lattice.coords(s)[static_cast<std::size_t>(axis)]);
        bool ok = false;
        for (int start = 0; start < side && !ok; ++start) {
            ok = std::all_of(xs.begin(), xs.end(), [&](int x) { return ((x - start) % side + side) % side < k; });
        }
        if (!ok) return false;
    }
    return true;
}

/// Translation-invariant Hamiltonian: H = sum over lattice translates of the base terms.
class PauliTermSet {
public:
    PauliTermSet() = default;

    PauliTermSet(LatticeSpec lattice, int locality, std::vector<PauliTerm> base, int locality_cap = kDefaultLocalityCap)
        : lattice_(lattice), locality_(locality), base_(std::move(base)) {
        require(locality >= 1, "locality k must be >= 1");
        require(locality <= locality_cap, "locality k=" + std::to_string(locality) + " exceeds cap " +
                                              std::to_string(locality_cap));
        for (const auto& t : base_) {
            for (auto s : t.string.support()) require(lattice_.contains(s), "term site out of range");
            require(fits_in_cell(lattice_, t.string.support(), locality_),
                    "term " + t.string.to_string() + " does not fit in a k-site cell");
        }
    }

    const LatticeSpec& lattice() const noexcept { return lattice_; }
    int locality() const noexcept { return locality_; }
    const std::vector<PauliTerm>& base_terms() const noexcept { return base_; }
    int num_qubits() const noexcept { return lattice_.num_sites(); }

    /// All translates, ordered by shift index then base-term index.
    std::vector<PauliTerm> expanded() const {
        std::vector<PauliTerm> out;
        out.reserve(base_.size() * static_cast<std::size_t>(lattice_.num_sites()));
        for (int z = 0; z < lattice_.num_sites(); ++z)
            for (const auto& t : base_)
                out.push_back({t.string.translated(lattice_, Site{static_cast<std::uint32_t>(z)}), t.coeff});
        return out;
    }

    PauliTermSet scaled(double factor) const {
        auto copy = *this;
        for (auto& t : copy.base_) t.coeff *= factor;
        return copy;
    }

private:
    LatticeSpec lattice_;
    int locality_ = 1;
    std::vector<PauliTerm> base_;
};

inline std::size_t hilbert_dim(int num_qubits) { return std::size_t{1} << num_qubits; }

inline void check_dense_cap(int num_qubits, int cap) {
    if (num_qubits > cap)
        throw ResourceError("dense storage for N=" + std::to_string(num_qubits) + " exceeds cap N<=" +
                            std::to_string(cap));
}

/// Dense matrix of sum_terms coeff * P, accumulated in term order.
inline DenseOperator dense_from_terms(const std::vector<PauliTerm>& terms, int num_qubits, int cap = kDefaultDenseCap) {
    check_dense_cap(num_qubits, cap);
    const std::size_t d = hilbert_dim(num_qubits);
    DenseOperator h = DenseOperator::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (const auto& t : terms) {
        const auto m = t.string.masks();
        for (std::uint64_t b = 0; b < d; ++b)
            h(static_cast<Eigen::Index>(b ^ m.x), static_cast<Eigen::Index>(b)) += t.coeff * m.phase(b);
    }
    return h;
}

inline DenseOperator build_hamiltonian(const PauliTermSet& terms, int cap = kDefaultDenseCap) {
    return dense_from_terms(terms.expanded(), terms.num_qubits(), cap);
}

inline DenseOperator pauli_dense(const PauliString& p, int num_qubits, int cap = kDefaultDenseCap) {
    return dense_from_terms({{p, 1.0}}, num_qubits, cap);
}

/// sum_terms coeff * P |psi>, applied term-by-term without densification.
inline StateVector apply_terms(const std::vector<PauliTerm>& terms, const StateVector& psi) {
    StateVector out = StateVector::Zero(psi.size());
    const auto d = static_cast<std::uint64_t>(psi.size());
    for (const auto& t : terms) {
        const auto m = t.string.masks();
        require((m.x | m.z) < d || d == 0, "Pauli term acts outside the state's qubits");
        for (std::uint64_t b = 0; b < d; ++b)
            out[static_cast<Eigen::Index>(b ^ m.x)] += t.coeff * m.phase(b) * psi[static_cast<Eigen::Index>(b)];
    }
    return out;
}

inline StateVector apply_operator(const PauliTermSet& terms, const StateVector& psi) {
    require(psi.size() == static_cast<Eigen::Index>(hilbert_dim(terms.num_qubits())), "state dimension mismatch");
    return apply_terms(terms.expanded(), psi);
}

inline StateVector apply_operator(const DenseOperator& op, const StateVector& psi) {
    require(op.cols() == psi.size() && op.rows() == op.cols(), "operator/state dimension mismatch");
    return op * psi;
}

inline StateVector apply_pauli(const PauliString& p, const StateVector& psi) { return apply_terms({{p, 1.0}}, psi); }

inline double max_abs(const ComplexMatrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool is_hermitian(const ComplexMatrix& m, double rel_tol = 1e-12) {
    if (m.rows() != m.cols()) return false;
    const double scale = std::max(max_abs(m), 1e-300);
    return max_abs(m - m.adjoint()) <= rel_tol * scale;
}

/// ||[A,B]||_max.
inline double commutator_norm(const ComplexMatrix& a, const ComplexMatrix& b) { return max_abs(a * b - b * a); }

// ---------------------------------------------------------------------------
// Translations

/// Permutation tables for all lattice translations acting on basis indices.
/// image(z, b) is the index of T^z|b>: the bit at site x moves to site x+z.
class TranslationTable {
public:
    TranslationTable() = default;
    explicit TranslationTable(const LatticeSpec& lattice, int cap = 20) : lattice_(lattice) {
        const int n = lattice.num_sites();
        if (n > cap) throw ResourceError("translation table for N=" + std::to_string(n) + " exceeds cap");
        const std::size_t d = hilbert_dim(n);
        site_map_.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
        for (int z = 0; z < n; ++z)
            for (int x = 0; x < n; ++x)
                site_map_[static_cast<std::size_t>(z * n + x)] =
                    lattice.add(Site{static_cast<std::uint32_t>(x)}, Site{static_cast<std::uint32_t>(z)}).index;
        images_.resize(static_cast<std::size_t>(n) * d);
        for (int z = 0; z < n; ++z)
            for (std::uint64_t b = 0; b < d; ++b) images_[static_cast<std::size_t>(z) * d + b] = shift_bits(z, b);
    }

    const LatticeSpec& lattice() const noexcept { return lattice_; }
    int num_shifts() const noexcept { return lattice_.num_sites(); }
    std::size_t dim() const noexcept { return hilbert_dim(lattice_.num_sites()); }

    std::uint32_t image(int z, std::uint64_t b) const { return images_[static_cast<std::size_t>(z) * dim() + b]; }

    std::uint32_t shift_bits(int z, std::uint64_t b) const {
        const int n = lattice_.num_sites();
        std::uint32_t out = 0;
        for (int x = 0; x < n; ++x)
            if ((b >> x) & 1U) out |= std::uint32_t{1} << site_map_[static_cast<std::size_t>(z * n + x)];
        return out;
    }

    /// T^z |psi>.
    StateVector apply(int z, const StateVector& psi) const {
        StateVector out(psi.size());
        for (std::uint64_t b = 0; b < dim(); ++b)
            out[static_cast<Eigen::Index>(image(z, b))] = psi[static_cast<Eigen::Index>(b)];
        return out;
    }

private:
    LatticeSpec lattice_;
    std::vector<std::uint32_t> site_map_;
    std::vector<std::uint32_t> images_;
};

/// Dense permutation matrix of T^z.
inline DenseOperator translation_operator(const LatticeSpec& lattice, Site z, int cap = kDefaultDenseCap) {
    require(lattice.contains(z), "translation vector out of range");
    check_dense_cap(lattice.num_sites(), cap);
    const TranslationTable table(lattice, cap);
    const std::size_t d = table.dim();
    DenseOperator t = DenseOperator::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::uint64_t b = 0; b < d; ++b)
        t(static_cast<Eigen::Index>(table.image(static_cast<int>(z.index), b)), static_cast<Eigen::Index>(b)) = 1.0;
    return t;
}

/// max_z ||T^z H T^-z - H||_max over all translations.
inline double translation_invariance_defect(const DenseOperator& h, const LatticeSpec& lattice) {
    const TranslationTable table(lattice);
    const std::size_t d = table.dim();
    double worst = 0.0;
    for (int z = 0; z < lattice.num_sites(); ++z) {
        for (std::uint64_t c = 0; c < d; ++c)
            for (std::uint64_t r = 0; r < d; ++r) {
                const auto tr = static_cast<Eigen::Index>(table.image(z, r));
                const auto tc = static_cast<Eigen::Index>(table.image(z, c));
                worst = std::max(worst, std::abs(h(tr, tc) - h(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))));
            }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Random translation-invariant Hamiltonians

/// k-site base cell: offsets in [0,k)^D ordered by (Manhattan norm, index), first k kept.
/// In 1D this is the segment {0,...,k-1}; in 2D with k=3 the corner {(0,0),(1,0),(0,1)}.
inline std::vector<Site> base_cell(const LatticeSpec& lattice, int k) {
    require(k >= 1 && k <= lattice.num_sites(), "cell size out of range");
    std::vector<std::pair<int, Site>> candidates;
    for (int i = 0; i < lattice.num_sites(); ++i) {
        const Site s{static_cast<std::uint32_t>(i)};
        const auto c = lattice.coords(s);
        if (std::all_of(c.begin(), c.end(), [&](int x) { return x < k; })) {
            int norm = 0;
            for (int x : c) norm += x;
            candidates.emplace_back(norm, s);
        }
    }
    std::sort(candidates.begin(), candidates.end());
    std::vector<Site> cell;
    for (int i = 0; i < k && i < static_cast<int>(candidates.size()); ++i) cell.push_back(candidates[static_cast<std::size_t>(i)].second);
    std::sort(cell.begin(), cell.end());
    return cell;
}

/// All 4^|cell| - 1 non-identity Pauli strings on the cell, in base-4 digit order.
inline std::vector<PauliString> cell_pauli_strings(const std::vector<Site>& cell) {
    std::vector<PauliString> out;
    const std::size_t count = std::size_t{1} << (2 * cell.size());
    for (std::size_t code = 1; code < count; ++code) {
        std::vector<std::pair<Site, Pauli>> letters;
        for (std::size_t j = 0; j < cell.size(); ++j)
            letters.emplace_back(cell[j], static_cast<Pauli>((code >> (2 * j)) & 3U));
        out.emplace_back(std::move(letters));
    }
    return out;
}

/// One coefficient J_P ~ U[-1,1] per non-identity Pauli string on the k-site cell.
inline PauliTermSet random_ti_hamiltonian(const LatticeSpec& lattice, int k, std::uint64_t seed,
                                          int locality_cap = kDefaultLocalityCap) {
    require(k >= 2, "random TI Hamiltonians need k >= 2");
    auto rng = make_rng(seed, {0x7469ULL});
    std::vector<PauliTerm> base;
    const auto cell = base_cell(lattice, k);
    for (auto& p : cell_pauli_strings(cell)) base.push_back({std::move(p), uniform(rng, -1.0, 1.0)});
    return PauliTermSet(lattice, k, std::move(base), locality_cap);
}

// ---------------------------------------------------------------------------
// Local operators

/// Matrix of a Pauli string restricted to region A (region site order, first site = LSB).
inline ComplexMatrix local_pauli_matrix(const PauliString& p, const Region& region) {
    ComplexMatrix m = ComplexMatrix::Ones(1, 1);
    for (auto s : p.support()) require(region.contains(s), "Pauli string not supported in region");
    // Kronecker with the first site as least significant bit: M = P_{last} (x) ... (x) P_{first}.
    for (auto s : region.sites()) {
        const Eigen::Matrix2cd q = pauli_matrix(p.at(s));
        ComplexMatrix next(2 * m.rows(), 2 * m.cols());
        for (Eigen::Index a = 0; a < 2; ++a)
            for (Eigen::Index b = 0; b < 2; ++b) next.block(a * m.rows(), b * m.cols(), m.rows(), m.cols()) = q(a, b) * m;
        m = std::move(next);
    }
    return m;
}

/// Operator norm of the base-cell operator h_0 = sum of base terms.
inline double max_local_term_norm(const PauliTermSet& terms) {
    if (terms.base_terms().empty()) return 0.0;
    std::vector<Site> support;
    for (const auto& t : terms.base_terms())
        for (auto s : t.string.support()) support.push_back(s);
    std::sort(support.begin(), support.end());
    support.erase(std::unique(support.begin(), support.end()), support.end());
    const Region cell(terms.lattice(), support);
    const auto dim = static_cast<Eigen::Index>(std::size_t{1} << cell.size());
    ComplexMatrix h = ComplexMatrix::Zero(dim, dim);
    for (const auto& t : terms.base_terms()) h += t.coeff * local_pauli_matrix(t.string, cell);
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h, Eigen::EigenvaluesOnly);
    return std::max(std::abs(es.eigenvalues().minCoeff()), std::abs(es.eigenvalues().maxCoeff()));
}

// ---------------------------------------------------------------------------
// Term-set JSON: {"k": int, "terms": [{"string": {"0":"Z","1":"X"}, "coeff": -0.25}, ...]}

inline nlohmann::json term_set_to_json(const PauliTermSet& terms) {
    nlohmann::json j;
    j["k"] = terms.locality();
    j["terms"] = nlohmann::json::array();
    for (const auto& t : terms.base_terms()) {
        nlohmann::json s = nlohmann::json::object();
        for (const auto& [site, p] : t.string.letters()) s[std::to_string(site.index)] = std::string(1, pauli_char(p));
        j["terms"].push_back({{"string", s}, {"coeff", t.coeff}});
    }
    return j;
}

inline double parse_real_coefficient(const nlohmann::json& c) {
    if (c.is_number()) return c.get<double>();
    if (c.is_array() && c.size() == 2 && c[0].is_number() && c[1].is_number()) {
        if (c[1].get<double>() != 0.0) throw ValidationError("term coefficient must be real (Hermitian Hamiltonian)");
        return c[0].get<double>();
    }
    if (c.is_object() && c.contains("re")) {
        if (c.value("im", 0.0) != 0.0) throw ValidationError("term coefficient must be real (Hermitian Hamiltonian)");
        return c["re"].get<double>();
    }
    throw ValidationError("term coefficient must be a number");
}

inline PauliTermSet term_set_from_json(const nlohmann::json& j, const LatticeSpec& lattice,
                                       int locality_cap = kDefaultLocalityCap) {
    require(j.is_object() && j.contains("k") && j.contains("terms"), "term set JSON needs 'k' and 'terms'");
    std::vector<PauliTerm> base;
    for (const auto& t : j.at("terms")) {
        require(t.contains("string") && t.contains("coeff"), "term needs 'string' and 'coeff'");
        std::vector<std::pair<Site, Pauli>> letters;
        for (const auto& [key, value] : t.at("string").items()) {
            std::size_t pos = 0;
            int idx = -1;
            try {
                idx = std::stoi(key, &pos);
            } catch (const std::exception&) {
                throw ValidationError("site key '" + key + "' is not an integer");
            }
            require(pos == key.size() && idx >= 0 && idx < lattice.num_sites(), "site key '" + key + "' out of range");
            const auto letter = value.get<std::string>();
            require(letter.size() == 1, "Pauli letter must be a single character");
            const Pauli p = pauli_from_char(letter[0]);
            require(p != Pauli::I, "identity letters are not allowed in term strings");
            letters.emplace_back(Site{static_cast<std::uint32_t>(idx)}, p);
        }
        base.push_back({PauliString(std::move(letters)), parse_real_coefficient(t.at("coeff"))});
    }
    return PauliTermSet(lattice, j.at("k").get<int>(), std::move(base), locality_cap);
}

// ---------------------------------------------------------------------------
// Product states

/// Single-qubit amplitudes (amp0, amp1).
using QubitState = Eigen::Vector2cd;

/// |s_{N-1}> (x) ... (x) |s_0>, site 0 least significant.
inline StateVector product_state(const std::vector<QubitState>& sites) {
    StateVector psi = StateVector::Ones(1);
    for (const auto& q : sites) {
        StateVector next(2 * psi.size());
        next.head(psi.size()) = q[0] * psi;
        next.tail(psi.size()) = q[1] * psi;
        psi = std::move(next);
    }
    return psi;
}

inline StateVector basis_state(int num_qubits, std::uint64_t index) {
    StateVector psi = StateVector::Zero(static_cast<Eigen::Index>(hilbert_dim(num_qubits)));
    psi[static_cast<Eigen::Index>(index)] = 1.0;
    return psi;
}

/// <psi|P|psi> for a product state: product of single-site Bloch components.
inline double product_expectation(const PauliString& p, const std::vector<QubitState>& sites) {
    cplx e = 1.0;
    for (const auto& [s, letter] : p.letters()) {
        const auto& q = sites[s.index];
        e *= q.dot(pauli_matrix(letter) * q);
    }
    return e.real();
}

inline double product_energy(const std::vector<PauliTerm>& expanded_terms, const std::vector<QubitState>& sites) {
    double e = 0.0;
    for (const auto& t : expanded_terms) e += t.coeff * product_expectation(t.string, sites);
    return e;
}

}  // namespace qthermal

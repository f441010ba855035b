#pragma once

// Eigendecomposition, resonance (gap-degeneracy) diagnostics and hidden-qubit extraction.

#include <algorithm>
#include <cstdio>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <queue>

#include "momentum.hpp"
#include "stats.hpp"

namespace qthermal {

struct Spectrum {
    RealVector energies;     // ascending
    ComplexMatrix vectors;   // columns |E_j>
    std::vector<int> momenta;  // per-eigenvector momentum label when built from translation sectors

    std::size_t dim() const noexcept { return static_cast<std::size_t>(energies.size()); }
    double width() const { return dim() == 0 ? 0.0 : energies[energies.size() - 1] - energies[0]; }
    double min() const { return energies[0]; }
    double max() const { return energies[energies.size() - 1]; }
    StateVector vector(std::size_t j) const { return vectors.col(static_cast<Eigen::Index>(j)); }

    /// Spectrum of eigenvalues only (no eigenvectors), e.g. toy spectra for gap analysis.
    static Spectrum from_values(std::vector<double> values) {
        std::sort(values.begin(), values.end());
        Spectrum s;
        s.energies = Eigen::Map<RealVector>(values.data(), static_cast<Eigen::Index>(values.size()));
        return s;
    }

    /// Median spacing between consecutive levels.
    double median_spacing() const {
        require(dim() >= 2, "median spacing needs >= 2 levels");
        std::vector<double> gaps;
        for (Eigen::Index j = 1; j < energies.size(); ++j) gaps.push_back(energies[j] - energies[j - 1]);
        std::nth_element(gaps.begin(), gaps.begin() + static_cast<long>(gaps.size() / 2), gaps.end());
        return gaps[gaps.size() / 2];
    }
};

inline Spectrum diagonalize(const DenseOperator& h) {
    require(h.rows() == h.cols(), "operator must be square");
    if (!is_hermitian(h)) throw ValidationError("diagonalize: operator is not Hermitian");
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
    if (es.info() != Eigen::Success) throw ConvergenceError("Hermitian eigensolver did not converge");
    Spectrum s;
    s.energies = es.eigenvalues();
    s.vectors = es.eigenvectors();
    return s;
}

/// ||H - V diag(E) V^dagger||_max.
inline double reconstruction_error(const DenseOperator& h, const Spectrum& s) {
    return max_abs(h - s.vectors * s.energies.asDiagonal() * s.vectors.adjoint());
}

/// Hamiltonian block in momentum sector k, indexed by the sector's orbits.
inline ComplexMatrix sector_hamiltonian(const PauliTermSet& terms, const MomentumBasis& basis, int k) {
    const auto begin = basis.sector_begin(k);
    const auto n = static_cast<Eigen::Index>(basis.sector_size(k));
    std::vector<std::int64_t> position(basis.orbits().size(), -1);
    for (Eigen::Index a = 0; a < n; ++a) position[basis.vectors()[begin + static_cast<std::size_t>(a)].orbit] = a;

    const auto expanded = terms.expanded();
    std::vector<PauliMasks> masks;
    for (const auto& t : expanded) masks.push_back(t.string.masks());

    ComplexMatrix m = ComplexMatrix::Zero(n, n);
    for (Eigen::Index row = 0; row < n; ++row) {
        const auto& orbit_row = basis.orbits()[basis.vectors()[begin + static_cast<std::size_t>(row)].orbit];
        const std::uint64_t rep = orbit_row.representative;
        const double s_row = static_cast<double>(orbit_row.stabilizer.size());
        for (std::size_t t = 0; t < expanded.size(); ++t) {
            const std::uint64_t b = rep ^ masks[t].x;
            const auto col = position[basis.orbit_of(b)];
            if (col < 0) continue;
            // <b|H|rep> = coeff * phase(rep); the block entry uses its conjugate.
            const cplx hb = expanded[t].coeff * masks[t].phase(rep);
            const double s_col = static_cast<double>(basis.orbits()[basis.orbit_of(b)].stabilizer.size());
            m(row, col) += std::sqrt(s_col / s_row) * std::conj(basis.character(k, basis.element_of(b))) * std::conj(hb);
        }
    }
    return m;
}

/// Full spectrum of a translation-invariant H by block diagonalization over momentum sectors.
/// Eigenvectors are returned in the computational basis; momenta[j] labels each.
inline Spectrum diagonalize_ti(const PauliTermSet& terms, const MomentumBasis& basis, int cap = kDefaultDenseCap) {
    require(basis.lattice() == terms.lattice(), "momentum basis built for a different lattice");
    check_dense_cap(terms.num_qubits(), cap);
    const auto d = static_cast<Eigen::Index>(basis.dim());
    struct Level {
        double e;
        int k;
        Eigen::Index idx;
    };
    std::vector<Level> levels;
    std::vector<Eigen::SelfAdjointEigenSolver<ComplexMatrix>> solvers(static_cast<std::size_t>(basis.group_order()));
    for (int k = 0; k < basis.group_order(); ++k) {
        if (basis.sector_size(k) == 0) continue;
        const ComplexMatrix block = sector_hamiltonian(terms, basis, k);
        if (!is_hermitian(block, 1e-10)) throw ConsistencyError("sector block is not Hermitian; H is not translation invariant");
        auto& es = solvers[static_cast<std::size_t>(k)];
        es.compute(block);
        if (es.info() != Eigen::Success) throw ConvergenceError("sector eigensolver did not converge");
        for (Eigen::Index a = 0; a < es.eigenvalues().size(); ++a) levels.push_back({es.eigenvalues()[a], k, a});
    }
    std::sort(levels.begin(), levels.end(), [](const Level& x, const Level& y) {
        if (x.e != y.e) return x.e < y.e;
        if (x.k != y.k) return x.k < y.k;
        return x.idx < y.idx;
    });
    Spectrum s;
    s.energies.resize(d);
    s.vectors = ComplexMatrix::Zero(d, d);
    s.momenta.resize(static_cast<std::size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) {
        const auto& lv = levels[static_cast<std::size_t>(j)];
        s.energies[j] = lv.e;
        s.momenta[static_cast<std::size_t>(j)] = lv.k;
        const auto& es = solvers[static_cast<std::size_t>(lv.k)];
        const auto begin = basis.sector_begin(lv.k);
        for (std::size_t a = 0; a < basis.sector_size(lv.k); ++a) {
            const cplx c = es.eigenvectors()(static_cast<Eigen::Index>(a), lv.idx);
            const auto& orbit = basis.orbits()[basis.vectors()[begin + a].orbit];
            const double norm = std::sqrt(static_cast<double>(orbit.stabilizer.size()) / basis.group_order());
            for (auto b : orbit.members)
                s.vectors(b, j) = c * norm * std::conj(basis.character(lv.k, basis.element_of(b)));
        }
    }
    return s;
}

inline Spectrum diagonalize_ti(const PauliTermSet& terms, int cap = kDefaultDenseCap) {
    return diagonalize_ti(terms, MomentumBasis(terms.lattice()), cap);
}

// ---------------------------------------------------------------------------
// Resonance diagnostics

enum class TauPolicy { Relative, Resolution };

/// Relative: 1e-9 * width. Resolution: 8 d eps * width, the attainable accuracy of
/// eigenvalue sums from a dense Hermitian eigensolver.
inline double default_tau(const Spectrum& s, TauPolicy policy = TauPolicy::Resolution) {
    const double w = s.width();
    if (policy == TauPolicy::Relative) return 1e-9 * w;
    return 8.0 * static_cast<double>(s.dim()) * std::numeric_limits<double>::epsilon() * w;
}

/// A collision E_i + E_j ~ E_m + E_l between two distinct unordered pairs, i <= j, m <= l, (i,j) < (m,l).
struct GapQuadruple {
    std::uint32_t i = 0, j = 0, m = 0, l = 0;
    double difference = 0.0;
    friend bool operator==(const GapQuadruple& a, const GapQuadruple& b) {
        return a.i == b.i && a.j == b.j && a.m == b.m && a.l == b.l;
    }
};

struct ResonanceReport {
    double tau = 0.0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> degenerate_pairs;
    std::size_t degenerate_pair_count = 0;
    std::vector<GapQuadruple> quadruples;  // first max_listed, in sorted-sum order
    std::size_t quadruple_count = 0;
    double g_min = std::numeric_limits<double>::infinity();
    bool nondegenerate_gaps = true;
    bool chunked = false;
};

struct ResonanceOptions {
    std::optional<double> tau;
    TauPolicy policy = TauPolicy::Resolution;
    std::size_t in_memory_max_dim = std::size_t{1} << 12;
    std::size_t chunked_max_dim = std::size_t{1} << 13;
    std::size_t chunk_elements = std::size_t{1} << 24;
    std::size_t max_listed = 10000;
};

namespace detail {

struct PairSum {
    double s;
    std::uint32_t i, j;
    friend bool operator<(const PairSum& a, const PairSum& b) {
        if (a.s != b.s) return a.s < b.s;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    }
};

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using TempFile = std::unique_ptr<std::FILE, FileCloser>;

/// Sorted run stored in an anonymous temporary file, read back in fixed-size blocks.
class RunReader {
public:
    RunReader(std::FILE* f, std::size_t count, std::size_t block) : file_(f), remaining_(count), buffer_(block) {
        std::rewind(file_);
        refill();
    }
    bool empty() const noexcept { return pos_ == filled_; }
    const PairSum& head() const noexcept { return buffer_[pos_]; }
    void pop() {
        if (++pos_ == filled_) refill();
    }

private:
    void refill() {
        const std::size_t want = std::min(remaining_, buffer_.size());
        filled_ = want == 0 ? 0 : std::fread(buffer_.data(), sizeof(PairSum), want, file_);
        if (filled_ != want) throw ResourceError("short read from temporary sort run");
        remaining_ -= filled_;
        pos_ = 0;
    }
    std::FILE* file_;
    std::size_t remaining_;
    std::vector<PairSum> buffer_;
    std::size_t pos_ = 0, filled_ = 0;
};

/// Window scan over the sorted pair-sum stream.
class SumScanner {
public:
    SumScanner(double tau, std::size_t max_listed, ResonanceReport& out) : tau_(tau), max_listed_(max_listed), out_(out) {}

    void push(const PairSum& x) {
        while (!pending_.empty() && x.s - pending_.front().s > tau_) {
            out_.g_min = std::min(out_.g_min, x.s - pending_.front().s);
            pending_.pop_front();
        }
        for (const auto& y : pending_) {
            ++out_.quadruple_count;
            if (out_.quadruples.size() < max_listed_) {
                GapQuadruple q;
                const bool y_first = std::pair(y.i, y.j) < std::pair(x.i, x.j);
                const auto& a = y_first ? y : x;
                const auto& b = y_first ? x : y;
                q.i = a.i, q.j = a.j, q.m = b.i, q.l = b.j;
                q.difference = x.s - y.s;
                out_.quadruples.push_back(q);
            }
        }
        pending_.push_back(x);
    }

private:
    double tau_;
    std::size_t max_listed_;
    ResonanceReport& out_;
    std::deque<PairSum> pending_;
};

}  // namespace detail

/// Enumerate all sums E_i + E_j (i <= j), sort them, and flag collisions within tau.
/// G_min is the smallest difference > tau between sums of distinct pairs.
inline ResonanceReport check_nondegenerate_gaps(const Spectrum& spec, const ResonanceOptions& opt = {}) {
    const std::size_t d = spec.dim();
    if (d > opt.chunked_max_dim)
        throw ResourceError("gap-sum enumeration for d=" + std::to_string(d) + " exceeds cap " +
                            std::to_string(opt.chunked_max_dim));
    for (Eigen::Index j = 1; j < spec.energies.size(); ++j)
        require(spec.energies[j] >= spec.energies[j - 1], "spectrum must be sorted ascending");
    ResonanceReport rep;
    rep.tau = opt.tau ? *opt.tau : default_tau(spec, opt.policy);
    require(rep.tau >= 0.0, "tau must be nonnegative");
    const double tau = rep.tau;

    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d && spec.energies[static_cast<Eigen::Index>(j)] - spec.energies[static_cast<Eigen::Index>(i)] <= tau; ++j) {
            ++rep.degenerate_pair_count;
            if (rep.degenerate_pairs.size() < opt.max_listed)
                rep.degenerate_pairs.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
        }

    const std::size_t total = d * (d + 1) / 2;
    const std::size_t chunk = std::max<std::size_t>(opt.chunk_elements, 1);
    detail::SumScanner scanner(tau, opt.max_listed, rep);
    std::vector<detail::PairSum> buffer;
    buffer.reserve(std::min(chunk, total));
    auto for_each_pair = [&](auto&& sink) {
        for (std::uint32_t i = 0; i < d; ++i)
            for (std::uint32_t j = i; j < d; ++j)
                sink(detail::PairSum{spec.energies[i] + spec.energies[j], i, j});
    };

    if (d <= opt.in_memory_max_dim && total <= chunk) {
        for_each_pair([&](const detail::PairSum& p) { buffer.push_back(p); });
        std::sort(buffer.begin(), buffer.end());
        for (const auto& p : buffer) scanner.push(p);
    } else {
        rep.chunked = true;
        std::vector<detail::TempFile> files;
        std::vector<std::size_t> counts;
        auto flush = [&] {
            std::sort(buffer.begin(), buffer.end());
            detail::TempFile f(std::tmpfile());
            if (!f) throw ResourceError("cannot create temporary file for external sort");
            if (std::fwrite(buffer.data(), sizeof(detail::PairSum), buffer.size(), f.get()) != buffer.size())
                throw ResourceError("short write to temporary sort run");
            counts.push_back(buffer.size());
            files.push_back(std::move(f));
            buffer.clear();
        };
        for_each_pair([&](const detail::PairSum& p) {
            buffer.push_back(p);
            if (buffer.size() == chunk) flush();
        });
        if (!buffer.empty()) flush();
        buffer.shrink_to_fit();

        const std::size_t block = std::max<std::size_t>(1, std::min<std::size_t>(chunk / std::max<std::size_t>(files.size(), 1), 1 << 16));
        std::vector<detail::RunReader> runs;
        runs.reserve(files.size());
        for (std::size_t r = 0; r < files.size(); ++r) runs.emplace_back(files[r].get(), counts[r], block);
        auto greater = [&](std::size_t a, std::size_t b) { return runs[b].head() < runs[a].head(); };
        std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(greater)> heap(greater);
        for (std::size_t r = 0; r < runs.size(); ++r)
            if (!runs[r].empty()) heap.push(r);
        while (!heap.empty()) {
            const std::size_t r = heap.top();
            heap.pop();
            scanner.push(runs[r].head());
            runs[r].pop();
            if (!runs[r].empty()) heap.push(r);
        }
    }
    rep.nondegenerate_gaps = rep.degenerate_pair_count == 0 && rep.quadruple_count == 0;
    return rep;
}

/// Groups of consecutive eigenvalues whose neighbours lie within tau.
inline std::vector<std::vector<std::uint32_t>> degeneracy_clusters(const Spectrum& spec, double tau) {
    std::vector<std::vector<std::uint32_t>> out;
    for (std::uint32_t j = 0; j < spec.dim(); ++j) {
        if (j == 0 || spec.energies[j] - spec.energies[j - 1] > tau) out.emplace_back();
        out.back().push_back(j);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Hidden qubits

/// E_m = a+b+c, E_i = a-b+c, E_j = -a+b+c, E_l = -a-b+c.
struct HiddenQubitDecomposition {
    std::uint32_t m = 0, i = 0, j = 0, l = 0;
    double a = 0.0, b = 0.0, c = 0.0;
    double max_reconstruction_error = 0.0;
};

/// Requires E_i + E_j = E_m + E_l within tau and four pairwise non-degenerate levels.
inline HiddenQubitDecomposition extract_hidden_qubits(const Spectrum& spec, std::uint32_t i, std::uint32_t j,
                                                      std::uint32_t m, std::uint32_t l, double tau) {
    const std::uint32_t idx[4] = {m, i, j, l};
    for (auto x : idx) require(x < spec.dim(), "quadruple index out of range");
    const auto e = [&](std::uint32_t x) { return spec.energies[static_cast<Eigen::Index>(x)]; };
    for (int p = 0; p < 4; ++p)
        for (int q = p + 1; q < 4; ++q) {
            if (idx[p] == idx[q]) throw ValidationError("hidden-qubit quadruple indices must be distinct");
            if (std::abs(e(idx[p]) - e(idx[q])) <= tau)
                throw ValidationError("hidden-qubit quadruple contains degenerate levels");
        }
    if (std::abs(e(i) + e(j) - e(m) - e(l)) > tau) throw ValidationError("quadruple is not resonant: E_i + E_j != E_m + E_l");
    HiddenQubitDecomposition h{m, i, j, l, (e(m) - e(j)) / 2, (e(j) - e(l)) / 2, (e(l) + e(m)) / 2, 0.0};
    const double rec[4] = {h.a + h.b + h.c, h.a - h.b + h.c, -h.a + h.b + h.c, -h.a - h.b + h.c};
    for (int p = 0; p < 4; ++p) h.max_reconstruction_error = std::max(h.max_reconstruction_error, std::abs(rec[p] - e(idx[p])));
    if (h.max_reconstruction_error > tau + 1e-14 * (1.0 + std::abs(h.c)))
        throw ConsistencyError("hidden-qubit reconstruction exceeds tolerance");
    return h;
}

/// Canonical labels for a collision: m is the highest level, l its partner, j the lower middle level,
/// which gives a >= b >= 0.
inline HiddenQubitDecomposition canonical_hidden_qubits(const Spectrum& spec, const GapQuadruple& q, double tau) {
    std::uint32_t p1a = q.i, p1b = q.j, p2a = q.m, p2b = q.l;
    const auto e = [&](std::uint32_t x) { return spec.energies[static_cast<Eigen::Index>(x)]; };
    const std::uint32_t top = std::max({p1a, p1b, p2a, p2b}, [&](auto x, auto y) { return e(x) < e(y); });
    std::uint32_t m = top, l, mid1, mid2;
    if (top == p1a || top == p1b) {
        l = top == p1a ? p1b : p1a;
        mid1 = p2a, mid2 = p2b;
    } else {
        l = top == p2a ? p2b : p2a;
        mid1 = p1a, mid2 = p1b;
    }
    const std::uint32_t j = e(mid1) <= e(mid2) ? mid1 : mid2;
    const std::uint32_t i = j == mid1 ? mid2 : mid1;
    return extract_hidden_qubits(spec, i, j, m, l, tau);
}

// ---------------------------------------------------------------------------
// Gap-of-gaps scale model

/// Mean of the minimum of M uniform draws on [0, W].
inline double expected_min_gap_model(int m, double w) {
    require(m >= 1 && w > 0, "expected_min_gap_model needs M >= 1, W > 0");
    return w / (m + 1);
}

inline MeanStat expected_min_gap_monte_carlo(int m, double w, std::size_t trials, std::uint64_t seed) {
    require(m >= 1 && w > 0 && trials >= 2, "invalid Monte-Carlo min-gap arguments");
    auto rng = make_rng(seed, {0x6d67ULL});
    std::vector<double> mins(trials);
    for (auto& out : mins) {
        double lo = w;
        for (int s = 0; s < m; ++s) lo = std::min(lo, w * uniform01(rng));
        out = lo;
    }
    return mean_and_stderr(mins);
}

}  // namespace qthermal

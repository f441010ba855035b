#pragma once

// Periodic hypercubic lattice {0..L-1}^D: sites, translations, regions, distances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "errors.hpp"

namespace qthermal {

/// Lattice site stored as a flat index i = sum_j x_j L^j.
struct Site {
    std::uint32_t index = 0;
    friend auto operator<=>(const Site&, const Site&) = default;
};

using Coords = std::vector<int>;

class LatticeSpec {
public:
    LatticeSpec() = default;
    LatticeSpec(int dimension, int side) : dimension_(dimension), side_(side) {
        require(dimension >= 1, "lattice dimension must be >= 1");
        require(side >= 2, "lattice side must be >= 2");
        std::uint64_t n = 1;
        for (int j = 0; j < dimension; ++j) {
            n *= static_cast<std::uint64_t>(side);
            require(n <= 64, "lattice has more than 64 sites");
        }
        sites_ = static_cast<int>(n);
    }

    int dimension() const noexcept { return dimension_; }
    int side() const noexcept { return side_; }
    int num_sites() const noexcept { return sites_; }

    Coords coords(Site s) const {
        Coords c(static_cast<std::size_t>(dimension_));
        std::uint32_t i = s.index;
        for (int j = 0; j < dimension_; ++j) {
            c[static_cast<std::size_t>(j)] = static_cast<int>(i % static_cast<std::uint32_t>(side_));
            i /= static_cast<std::uint32_t>(side_);
        }
        return c;
    }

    /// Validating constructor from coordinates; each coordinate must lie in [0, L).
    Site site(const Coords& c) const {
        require(static_cast<int>(c.size()) == dimension_, "coordinate tuple has wrong length");
        std::uint32_t idx = 0;
        for (int j = dimension_ - 1; j >= 0; --j) {
            const int x = c[static_cast<std::size_t>(j)];
            require(x >= 0 && x < side_, "coordinate " + std::to_string(x) + " out of range [0," +
                                             std::to_string(side_) + ")");
            idx = idx * static_cast<std::uint32_t>(side_) + static_cast<std::uint32_t>(x);
        }
        return Site{idx};
    }

    /// Coordinates reduced modulo L (accepts any integers).
    Site wrap(Coords c) const {
        for (auto& x : c) x = ((x % side_) + side_) % side_;
        return site(c);
    }

    bool contains(Site s) const noexcept { return s.index < static_cast<std::uint32_t>(sites_); }

    Site add(Site a, Site b) const {
        auto ca = coords(a);
        const auto cb = coords(b);
        for (std::size_t j = 0; j < ca.size(); ++j) ca[j] += cb[j];
        return wrap(std::move(ca));
    }

    Site subtract(Site a, Site b) const {
        auto ca = coords(a);
        const auto cb = coords(b);
        for (std::size_t j = 0; j < ca.size(); ++j) ca[j] -= cb[j];
        return wrap(std::move(ca));
    }

    Site negate(Site a) const { return subtract(Site{0}, a); }

    /// Unit vector along axis j.
    Site unit(int axis) const {
        Coords c(static_cast<std::size_t>(dimension_), 0);
        c[static_cast<std::size_t>(axis)] = 1;
        return site(c);
    }

    friend bool operator==(const LatticeSpec&, const LatticeSpec&) = default;

private:
    int dimension_ = 1;
    int side_ = 2;
    int sites_ = 2;
};

/// sum_j min{x_j, L - x_j}.
inline int manhattan_norm(const LatticeSpec& lattice, Site x) {
    require(lattice.contains(x), "site index out of range");
    int total = 0;
    for (int c : lattice.coords(x)) total += std::min(c, lattice.side() - c);
    return total;
}

inline int manhattan_norm(const LatticeSpec& lattice, const Coords& x) {
    return manhattan_norm(lattice, lattice.site(x));
}

inline int site_distance(const LatticeSpec& lattice, Site a, Site b) {
    return manhattan_norm(lattice, lattice.subtract(a, b));
}

/// Ordered set of distinct sites.
class Region {
public:
    Region() = default;

    Region(const LatticeSpec& lattice, std::vector<Site> sites) : sites_(std::move(sites)) {
        for (auto s : sites_) require(lattice.contains(s), "region site out of range");
        std::sort(sites_.begin(), sites_.end());
        require(std::adjacent_find(sites_.begin(), sites_.end()) == sites_.end(), "region has duplicate sites");
    }

    static Region from_coords(const LatticeSpec& lattice, const std::vector<Coords>& coords) {
        std::vector<Site> s;
        s.reserve(coords.size());
        for (const auto& c : coords) s.push_back(lattice.site(c));
        return Region(lattice, std::move(s));
    }

    static Region from_indices(const LatticeSpec& lattice, const std::vector<int>& indices) {
        std::vector<Site> s;
        for (int i : indices) {
            require(i >= 0 && i < lattice.num_sites(), "site index out of range");
            s.push_back(Site{static_cast<std::uint32_t>(i)});
        }
        return Region(lattice, std::move(s));
    }

    /// Contiguous segment / hypercube of side `extent` with corner at `origin`.
    static Region block(const LatticeSpec& lattice, Site origin, int extent) {
        require(extent >= 1 && extent <= lattice.side(), "block extent out of range");
        std::vector<Site> s;
        const int d = lattice.dimension();
        std::vector<int> offset(static_cast<std::size_t>(d), 0);
        const auto oc = lattice.coords(origin);
        while (true) {
            Coords c = oc;
            for (int j = 0; j < d; ++j) c[static_cast<std::size_t>(j)] += offset[static_cast<std::size_t>(j)];
            s.push_back(lattice.wrap(c));
            int j = 0;
            while (j < d && ++offset[static_cast<std::size_t>(j)] == extent) offset[static_cast<std::size_t>(j++)] = 0;
            if (j == d) break;
        }
        return Region(lattice, std::move(s));
    }

    const std::vector<Site>& sites() const noexcept { return sites_; }
    std::size_t size() const noexcept { return sites_.size(); }
    bool empty() const noexcept { return sites_.empty(); }

    bool contains(Site s) const { return std::binary_search(sites_.begin(), sites_.end(), s); }

    /// Bit mask over site indices.
    std::uint64_t mask() const noexcept {
        std::uint64_t m = 0;
        for (auto s : sites_) m |= std::uint64_t{1} << s.index;
        return m;
    }

    Region translated(const LatticeSpec& lattice, Site shift) const {
        std::vector<Site> s;
        for (auto x : sites_) s.push_back(lattice.add(x, shift));
        return Region(lattice, std::move(s));
    }

    friend bool operator==(const Region&, const Region&) = default;

private:
    std::vector<Site> sites_;
};

inline Region region_union(const LatticeSpec& lattice, const Region& a, const Region& b) {
    std::vector<Site> s = a.sites();
    for (auto x : b.sites())
        if (!a.contains(x)) s.push_back(x);
    return Region(lattice, std::move(s));
}

inline bool disjoint(const Region& a, const Region& b) { return (a.mask() & b.mask()) == 0; }

inline int region_diameter(const LatticeSpec& lattice, const Region& a) {
    int d = 0;
    for (auto x : a.sites())
        for (auto y : a.sites()) d = std::max(d, site_distance(lattice, x, y));
    return d;
}

/// Default diameter bound for "geometrically local" regions.
inline constexpr int kDefaultLocalDiameter = 2;

inline bool is_geometrically_local(const LatticeSpec& lattice, const Region& a, int max_diameter = kDefaultLocalDiameter) {
    return region_diameter(lattice, a) <= max_diameter;
}

/// min over pairs of the Manhattan distance.
inline int region_distance(const LatticeSpec& lattice, const Region& a, const Region& b) {
    require(!a.empty() && !b.empty(), "region_distance needs nonempty regions");
    int best = lattice.num_sites() * lattice.dimension();
    for (auto x : a.sites())
        for (auto y : b.sites()) best = std::min(best, site_distance(lattice, x, y));
    return best;
}

/// |d_C A|: sites of A within distance C of the complement.
inline int boundary_size(const LatticeSpec& lattice, const Region& a, int depth) {
    require(!a.empty(), "boundary_size needs a nonempty region");
    require(depth >= 0, "boundary depth must be nonnegative");
    if (static_cast<int>(a.size()) == lattice.num_sites()) throw ValidationError("region covers the whole lattice; no complement");
    int count = 0;
    for (auto x : a.sites()) {
        for (int j = 0; j < lattice.num_sites(); ++j) {
            const Site y{static_cast<std::uint32_t>(j)};
            if (!a.contains(y) && site_distance(lattice, x, y) <= depth) {
                ++count;
                break;
            }
        }
    }
    return count;
}

/// |dA|: number of nearest-neighbour pairs with one site inside A and one outside.
inline int contiguous_boundary_size(const LatticeSpec& lattice, const Region& a) {
    require(!a.empty(), "boundary needs a nonempty region");
    if (static_cast<int>(a.size()) == lattice.num_sites()) throw ValidationError("region covers the whole lattice; no complement");
    std::set<std::pair<std::uint32_t, std::uint32_t>> pairs;
    for (auto x : a.sites()) {
        for (int axis = 0; axis < lattice.dimension(); ++axis) {
            for (int sign : {+1, -1}) {
                const Site e = lattice.unit(axis);
                const Site y = sign > 0 ? lattice.add(x, e) : lattice.subtract(x, e);
                if (!a.contains(y)) pairs.insert({x.index, y.index});
            }
        }
    }
    return static_cast<int>(pairs.size());
}

/// Exact ceil(L^delta). Values within 1e-9 relative of an integer are treated as that integer.
inline int ceil_power(int side, double delta) {
    const double v = std::pow(static_cast<double>(side), delta);
    const double nearest = std::round(v);
    if (std::abs(v - nearest) <= 1e-9 * std::max(1.0, v)) return static_cast<int>(nearest);
    return static_cast<int>(std::ceil(v));
}

/// M = (floor(L / ceil(L^delta)) - 1)^D sites on a coarse sublattice, pairwise
/// separated by Manhattan distance >= ceil(L^delta).
inline std::vector<Site> separated_sites(const LatticeSpec& lattice, double delta) {
    require(delta > 0.0 && delta < 1.0, "delta must lie in (0,1)");
    const int spacing = ceil_power(lattice.side(), delta);
    const int per_axis = lattice.side() / spacing - 1;
    if (per_axis <= 0)
        throw ValidationError("lattice side " + std::to_string(lattice.side()) + " too small for delta=" +
                              std::to_string(delta) + " (no separated sites); use a larger L");
    std::vector<Site> out;
    const int d = lattice.dimension();
    std::vector<int> digit(static_cast<std::size_t>(d), 0);
    while (true) {
        Coords c(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) c[static_cast<std::size_t>(j)] = digit[static_cast<std::size_t>(j)] * spacing;
        out.push_back(lattice.site(c));
        int j = 0;
        while (j < d && ++digit[static_cast<std::size_t>(j)] == per_axis) digit[static_cast<std::size_t>(j++)] = 0;
        if (j == d) break;
    }
    return out;
}

}  // namespace qthermal

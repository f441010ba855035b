#pragma once

// Translation-eigenbasis (necklace / momentum) construction on Z_L^D.
//
// For an orbit with representative r and stabilizer S_r, the vector with momentum k is
//   v_{r,k} = sqrt(|S_r|/|G|) * sum_{b in orbit} conj(chi_k(g_b)) |b>,
// where g_b is any group element with T^{g_b} r = b and chi_k(g) = exp(2 pi i k.g / L).
// It exists iff chi_k is trivial on S_r, and T^z v_{r,k} = chi_k(z) v_{r,k}.

#include <boost/rational.hpp>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "operators.hpp"

namespace qthermal {

using Rational = boost::rational<std::int64_t>;

class MomentumBasis {
public:
    struct Orbit {
        std::uint32_t representative = 0;  // minimal index in the orbit
        std::uint32_t size = 0;            // p = |G| / |S_r|
        std::vector<int> stabilizer;       // shifts z with T^z r = r
        std::vector<std::uint32_t> members;
    };

    struct Vector {
        std::uint32_t orbit = 0;
        int momentum = 0;  // flat index of k in Z_L^D, same digit layout as sites
    };

    MomentumBasis() = default;

    explicit MomentumBasis(const LatticeSpec& lattice, int cap = 20) : lattice_(lattice), table_(lattice, cap) {
        const std::size_t d = table_.dim();
        const int g = lattice.num_sites();
        orbit_of_.assign(d, kUnassigned);
        element_of_.assign(d, 0);
        for (std::uint64_t b = 0; b < d; ++b) {
            if (orbit_of_[b] != kUnassigned) continue;
            Orbit orb;
            orb.representative = static_cast<std::uint32_t>(b);
            const auto id = static_cast<std::uint32_t>(orbits_.size());
            for (int z = 0; z < g; ++z) {
                const std::uint32_t img = table_.image(z, b);
                if (img == b) orb.stabilizer.push_back(z);
                if (orbit_of_[img] == kUnassigned) {
                    orbit_of_[img] = id;
                    element_of_[img] = static_cast<std::uint32_t>(z);
                    orb.members.push_back(img);
                }
            }
            orb.size = static_cast<std::uint32_t>(orb.members.size());
            std::sort(orb.members.begin(), orb.members.end());
            orbits_.push_back(std::move(orb));
        }
        momentum_coords_.resize(static_cast<std::size_t>(g));
        for (int k = 0; k < g; ++k) momentum_coords_[static_cast<std::size_t>(k)] = lattice.coords(Site{static_cast<std::uint32_t>(k)});
        characters_.resize(static_cast<std::size_t>(g) * static_cast<std::size_t>(g));
        for (int k = 0; k < g; ++k)
            for (int z = 0; z < g; ++z) {
                const auto& kc = momentum_coords_[static_cast<std::size_t>(k)];
                const auto& zc = momentum_coords_[static_cast<std::size_t>(z)];
                long dot = 0;
                for (std::size_t j = 0; j < kc.size(); ++j) dot += static_cast<long>(kc[j]) * zc[j];
                dot %= lattice.side();
                // Exact values at the quarter turns keep real sectors real.
                const double angle = 2.0 * std::numbers::pi * static_cast<double>(dot) / lattice.side();
                cplx c(std::cos(angle), std::sin(angle));
                if (4 * dot % lattice.side() == 0) c = cplx(std::round(c.real()), std::round(c.imag()));
                characters_[static_cast<std::size_t>(k * g + z)] = c;
            }
        for (std::uint32_t o = 0; o < orbits_.size(); ++o)
            for (int k = 0; k < g; ++k)
                if (compatible(o, k)) vectors_.push_back({o, k});
        std::stable_sort(vectors_.begin(), vectors_.end(),
                         [](const Vector& a, const Vector& b) { return a.momentum < b.momentum; });
        sector_start_.assign(static_cast<std::size_t>(g) + 1, 0);
        for (const auto& v : vectors_) ++sector_start_[static_cast<std::size_t>(v.momentum) + 1];
        for (int k = 0; k < g; ++k) sector_start_[static_cast<std::size_t>(k) + 1] += sector_start_[static_cast<std::size_t>(k)];
    }

    const LatticeSpec& lattice() const noexcept { return lattice_; }
    const TranslationTable& translations() const noexcept { return table_; }
    std::size_t dim() const noexcept { return table_.dim(); }
    int group_order() const noexcept { return lattice_.num_sites(); }

    const std::vector<Orbit>& orbits() const noexcept { return orbits_; }
    const std::vector<Vector>& vectors() const noexcept { return vectors_; }
    std::size_t size() const noexcept { return vectors_.size(); }

    std::uint32_t orbit_of(std::uint64_t b) const { return orbit_of_[b]; }
    /// Shift g with T^g (representative) = b.
    int element_of(std::uint64_t b) const { return static_cast<int>(element_of_[b]); }
    std::uint32_t period(std::uint64_t b) const { return orbits_[orbit_of_[b]].size; }

    /// Vectors with momentum k occupy [sector_begin(k), sector_begin(k+1)).
    std::size_t sector_begin(int k) const { return sector_start_[static_cast<std::size_t>(k)]; }
    std::size_t sector_size(int k) const { return sector_begin(k + 1) - sector_begin(k); }

    /// chi_k(z) = exp(2 pi i k.z / L).
    cplx character(int k, int z) const {
        return characters_[static_cast<std::size_t>(k) * static_cast<std::size_t>(group_order()) + static_cast<std::size_t>(z)];
    }

    bool compatible(std::uint32_t orbit, int k) const {
        for (int s : orbits_[orbit].stabilizer) {
            const auto& kc = momentum_coords_[static_cast<std::size_t>(k)];
            const auto& sc = momentum_coords_[static_cast<std::size_t>(s)];
            long dot = 0;
            for (std::size_t j = 0; j < kc.size(); ++j) dot += static_cast<long>(kc[j]) * sc[j];
            if (dot % lattice_.side() != 0) return false;
        }
        return true;
    }

    /// Translation eigenvalue of vector v under T^z.
    cplx eigenvalue(std::size_t v, int z) const { return character(vectors_[v].momentum, z); }

    double normalization(std::uint32_t orbit) const {
        return std::sqrt(static_cast<double>(orbits_[orbit].stabilizer.size()) / group_order());
    }

    /// <b|v>.
    cplx amplitude(std::size_t v, std::uint64_t b) const {
        const auto& vec = vectors_[v];
        if (orbit_of_[b] != vec.orbit) return 0.0;
        return normalization(vec.orbit) * std::conj(character(vec.momentum, element_of(b)));
    }

    StateVector vector(std::size_t v) const {
        StateVector out = StateVector::Zero(static_cast<Eigen::Index>(dim()));
        for (auto b : orbits_[vectors_[v].orbit].members) out[b] = amplitude(v, b);
        return out;
    }

    /// <v|psi>.
    cplx overlap(std::size_t v, const StateVector& psi) const {
        const auto& vec = vectors_[v];
        cplx acc = 0.0;
        for (auto b : orbits_[vec.orbit].members) acc += character(vec.momentum, element_of(b)) * psi[b];
        return normalization(vec.orbit) * acc;
    }

    /// Exact |<v|b>|^2 for a computational basis state b.
    Rational overlap_sq_exact(std::size_t v, std::uint64_t b) const {
        const auto& vec = vectors_[v];
        if (orbit_of_[b] != vec.orbit) return Rational(0);
        return Rational(static_cast<std::int64_t>(orbits_[vec.orbit].stabilizer.size()), group_order());
    }

    /// Vectors whose orbit is the orbit of b.
    std::vector<std::size_t> vectors_of_orbit(std::uint32_t orbit) const {
        std::vector<std::size_t> out;
        for (std::size_t v = 0; v < vectors_.size(); ++v)
            if (vectors_[v].orbit == orbit) out.push_back(v);
        return out;
    }

    /// Dense unitary with the basis vectors as columns (sector-ordered).
    ComplexMatrix matrix(int cap = kDefaultDenseCap) const {
        check_dense_cap(lattice_.num_sites(), cap);
        const auto d = static_cast<Eigen::Index>(dim());
        ComplexMatrix m = ComplexMatrix::Zero(d, d);
        for (std::size_t v = 0; v < vectors_.size(); ++v)
            for (auto b : orbits_[vectors_[v].orbit].members) m(b, static_cast<Eigen::Index>(v)) = amplitude(v, b);
        return m;
    }

    /// All overlaps |<v|psi>|^2, one pass per orbit.
    RealVector overlap_probabilities(const StateVector& psi) const {
        require(psi.size() == static_cast<Eigen::Index>(dim()), "state dimension mismatch");
        RealVector out(static_cast<Eigen::Index>(vectors_.size()));
        for (std::size_t v = 0; v < vectors_.size(); ++v) out[static_cast<Eigen::Index>(v)] = std::norm(overlap(v, psi));
        return out;
    }

private:
    static constexpr std::uint32_t kUnassigned = ~std::uint32_t{0};

    LatticeSpec lattice_;
    TranslationTable table_;
    std::vector<std::uint32_t> orbit_of_;
    std::vector<std::uint32_t> element_of_;
    std::vector<Orbit> orbits_;
    std::vector<Vector> vectors_;
    std::vector<Coords> momentum_coords_;
    std::vector<cplx> characters_;
    std::vector<std::size_t> sector_start_;
};

inline MomentumBasis build_momentum_basis(const LatticeSpec& lattice) { return MomentumBasis(lattice); }

}  // namespace qthermal

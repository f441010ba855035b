#pragma once

// Named Hamiltonians used by fixtures, experiments and the CLI.

#include "operators.hpp"

namespace qthermal {

struct ReferenceCouplings {
    double zz = 1.0;
    double x = 0.9045;
    double z = 0.809;
    double xy = 0.4;  // chiral X_i Y_{i+e}: breaks reflection and time reversal, lifting k <-> -k degeneracies
};

/// Mixed-field Ising model with a chiral bond term, on bonds along every axis.
inline PauliTermSet reference_chain(const LatticeSpec& lattice, const ReferenceCouplings& c = {}) {
    std::vector<PauliTerm> base;
    const Site o{0};
    for (int axis = 0; axis < lattice.dimension(); ++axis) {
        const Site e = lattice.add(o, lattice.unit(axis));
        base.push_back({PauliString({{o, Pauli::Z}, {e, Pauli::Z}}), c.zz});
        if (c.xy != 0) base.push_back({PauliString({{o, Pauli::X}, {e, Pauli::Y}}), c.xy});
    }
    base.push_back({PauliString::single(o, Pauli::X), c.x});
    base.push_back({PauliString::single(o, Pauli::Z), c.z});
    return PauliTermSet(lattice, 2, std::move(base));
}

/// XXZ chain in a longitudinal field; conserves total Z.
inline PauliTermSet xxz_chain(const LatticeSpec& lattice, double anisotropy = 0.6, double field = 0.3) {
    std::vector<PauliTerm> base;
    const Site o{0};
    for (int axis = 0; axis < lattice.dimension(); ++axis) {
        const Site e = lattice.add(o, lattice.unit(axis));
        base.push_back({PauliString({{o, Pauli::X}, {e, Pauli::X}}), 1.0});
        base.push_back({PauliString({{o, Pauli::Y}, {e, Pauli::Y}}), 1.0});
        base.push_back({PauliString({{o, Pauli::Z}, {e, Pauli::Z}}), anisotropy});
    }
    if (field != 0) base.push_back({PauliString::single(o, Pauli::Z), field});
    return PauliTermSet(lattice, 2, std::move(base));
}

/// Total magnetization sum_x Z_x.
inline PauliTermSet total_z(const LatticeSpec& lattice) {
    return PauliTermSet(lattice, 1, {{PauliString::single(Site{0}, Pauli::Z), 1.0}});
}

}  // namespace qthermal

#include <gtest/gtest.h>

#include <qthermal/operators.hpp>

#include <unsupported/Eigen/KroneckerProduct>

using namespace qthermal;

namespace {

PauliTermSet single_z(const LatticeSpec& lat) {
    return PauliTermSet(lat, 1, {{PauliString::single(Site{0}, Pauli::Z), 1.0}});
}

StateVector random_state(int n, std::uint64_t seed) {
    auto rng = make_rng(seed);
    StateVector v(static_cast<Eigen::Index>(hilbert_dim(n)));
    for (auto& x : v) {
        const double re = normal01(rng);
        x = cplx(re, normal01(rng));
    }
    return v / v.norm();
}

// Kronecker-product construction, independent of the bit-mask path.
ComplexMatrix kron_pauli(const PauliString& p, int n) {
    ComplexMatrix m = ComplexMatrix::Ones(1, 1);
    for (int s = 0; s < n; ++s) {
        const ComplexMatrix q = pauli_matrix(p.at(Site{static_cast<std::uint32_t>(s)}));
        m = ComplexMatrix(Eigen::kroneckerProduct(q, m));
    }
    return m;
}

}  // namespace

TEST(Operators, SingleZOnTwoSites) {
    const auto h = build_hamiltonian(single_z(LatticeSpec(1, 2)));
    Eigen::Vector4cd diag(2, 0, 0, -2);
    EXPECT_LT(max_abs(h - ComplexMatrix(diag.asDiagonal())), 1e-15);
}

TEST(Operators, EmptyTermsGiveZero) {
    const PauliTermSet empty(LatticeSpec(1, 3), 2, {});
    EXPECT_EQ(max_abs(build_hamiltonian(empty)), 0.0);
}

TEST(Operators, XXOnThreeSiteChain) {
    const LatticeSpec lat(1, 3);
    const PauliTermSet xx(lat, 2, {{PauliString({{Site{0}, Pauli::X}, {Site{1}, Pauli::X}}), 1.0}});
    EXPECT_EQ(xx.expanded().size(), 3u);
    ComplexMatrix x(2, 2), id = ComplexMatrix::Identity(2, 2);
    x << 0, 1, 1, 0;
    auto k3 = [](const ComplexMatrix& a, const ComplexMatrix& b, const ComplexMatrix& c) {
        // a acts on site 2, c on site 0.
        ComplexMatrix out = ComplexMatrix::Zero(8, 8);
        for (int i2 = 0; i2 < 2; ++i2)
            for (int i1 = 0; i1 < 2; ++i1)
                for (int i0 = 0; i0 < 2; ++i0)
                    for (int j2 = 0; j2 < 2; ++j2)
                        for (int j1 = 0; j1 < 2; ++j1)
                            for (int j0 = 0; j0 < 2; ++j0)
                                out(4 * i2 + 2 * i1 + i0, 4 * j2 + 2 * j1 + j0) = a(i2, j2) * b(i1, j1) * c(i0, j0);
        return out;
    };
    const ComplexMatrix expected = k3(id, x, x) + k3(x, x, id) + k3(x, id, x);
    EXPECT_LT(max_abs(build_hamiltonian(xx) - expected), 1e-15);
}

TEST(Operators, DenseCapIsResourceError) {
    const LatticeSpec lat(1, 15);
    EXPECT_THROW(build_hamiltonian(single_z(lat)), ResourceError);
}

TEST(Operators, LocalityValidation) {
    const LatticeSpec lat(1, 8);
    EXPECT_THROW(PauliTermSet(lat, 2, {{PauliString({{Site{0}, Pauli::X}, {Site{2}, Pauli::X}}), 1.0}}),
                 ValidationError);
    EXPECT_THROW(PauliTermSet(lat, 4, {}), ValidationError);
    EXPECT_NO_THROW(PauliTermSet(lat, 2, {{PauliString({{Site{7}, Pauli::X}, {Site{0}, Pauli::X}}), 1.0}}));
}

TEST(Operators, TranslationOperatorExamples) {
    const LatticeSpec l3(1, 3);
    EXPECT_LT(max_abs(translation_operator(l3, Site{0}) - ComplexMatrix::Identity(8, 8)), 1e-15);
    const auto t = translation_operator(l3, Site{1});
    // |100> has site 0 occupied (index 1); it moves to site 1 (index 2).
    const StateVector out = t * basis_state(3, 1);
    EXPECT_EQ(out[2], cplx(1.0));
    EXPECT_TRUE(t.isUnitary(1e-14));

    const LatticeSpec l2(1, 2);
    ComplexMatrix swap = ComplexMatrix::Zero(4, 4);
    swap(0, 0) = swap(3, 3) = swap(1, 2) = swap(2, 1) = 1.0;
    EXPECT_LT(max_abs(translation_operator(l2, Site{1}) - swap), 1e-15);
}

TEST(Operators, TranslationTableMatchesDense2D) {
    const LatticeSpec lat(2, 3);
    const TranslationTable table(lat);
    const auto psi = random_state(9, 5);
    for (int z = 0; z < lat.num_sites(); ++z) {
        const auto dense = translation_operator(lat, Site{static_cast<std::uint32_t>(z)});
        EXPECT_LT((dense * psi - table.apply(z, psi)).norm(), 1e-14);
    }
}

TEST(Operators, RandomTiDeterministicAndBounded) {
    const LatticeSpec lat(1, 6);
    const auto a = random_ti_hamiltonian(lat, 2, 42);
    const auto b = random_ti_hamiltonian(lat, 2, 42);
    ASSERT_EQ(a.base_terms().size(), 15u);
    for (std::size_t i = 0; i < a.base_terms().size(); ++i) {
        EXPECT_EQ(a.base_terms()[i].coeff, b.base_terms()[i].coeff);
        EXPECT_EQ(a.base_terms()[i].string, b.base_terms()[i].string);
        EXPECT_GE(a.base_terms()[i].coeff, -1.0);
        EXPECT_LE(a.base_terms()[i].coeff, 1.0);
    }
    EXPECT_NE(random_ti_hamiltonian(lat, 2, 43).base_terms()[0].coeff, a.base_terms()[0].coeff);
    EXPECT_EQ(random_ti_hamiltonian(lat, 3, 1).base_terms().size(), 63u);
}

TEST(Operators, RandomTiCommutesWithTranslations) {
    for (auto lat : {LatticeSpec(1, 7), LatticeSpec(2, 3)}) {
        const auto h = build_hamiltonian(random_ti_hamiltonian(lat, 2, 3));
        EXPECT_TRUE(is_hermitian(h));
        for (int z = 0; z < lat.num_sites(); ++z) {
            const auto t = translation_operator(lat, Site{static_cast<std::uint32_t>(z)});
            EXPECT_LT(commutator_norm(h, t), 1e-10);
        }
        EXPECT_LT(translation_invariance_defect(h, lat), 1e-10);
    }
}

TEST(Operators, BaseCell2DIsCorner) {
    const LatticeSpec lat(2, 4);
    const auto cell = base_cell(lat, 3);
    ASSERT_EQ(cell.size(), 3u);
    EXPECT_EQ(cell[0], lat.site({0, 0}));
    EXPECT_EQ(cell[1], lat.site({1, 0}));
    EXPECT_EQ(cell[2], lat.site({0, 1}));
}

TEST(Operators, SparseMatchesDense) {
    const LatticeSpec lat(1, 6);
    const auto terms = random_ti_hamiltonian(lat, 3, 11);
    const auto h = build_hamiltonian(terms);
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto psi = random_state(6, seed);
        EXPECT_LT((apply_operator(terms, psi) - h * psi).norm(), 1e-10);
    }
}

TEST(Operators, MaskPathMatchesKronecker) {
    const int n = 4;
    auto rng = make_rng(9);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<std::pair<Site, Pauli>> letters;
        for (int s = 0; s < n; ++s) letters.emplace_back(Site{static_cast<std::uint32_t>(s)}, static_cast<Pauli>(uniform_index(rng, 4)));
        const PauliString p(letters);
        EXPECT_LT(max_abs(pauli_dense(p, n) - kron_pauli(p, n)), 1e-15);
        const Region full = Region::from_indices(LatticeSpec(1, n), {0, 1, 2, 3});
        EXPECT_LT(max_abs(local_pauli_matrix(p, full) - kron_pauli(p, n)), 1e-15);
    }
}

TEST(Operators, TrivialApplications) {
    const auto zero = basis_state(3, 0);
    EXPECT_LT((apply_pauli(PauliString::single(Site{0}, Pauli::Z), zero) - zero).norm(), 1e-15);
    EXPECT_LT((apply_pauli(PauliString::single(Site{0}, Pauli::X), zero) - basis_state(3, 1)).norm(), 1e-15);
    EXPECT_LT((apply_operator(ComplexMatrix::Identity(8, 8), zero) - zero).norm(), 1e-15);
    EXPECT_THROW(apply_operator(ComplexMatrix::Identity(4, 4), zero), ValidationError);
}

TEST(Operators, PauliSquaresToIdentity) {
    const auto psi = random_state(5, 77);
    auto rng = make_rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::pair<Site, Pauli>> letters;
        for (int s = 0; s < 5; ++s) letters.emplace_back(Site{static_cast<std::uint32_t>(s)}, static_cast<Pauli>(uniform_index(rng, 4)));
        const PauliString p(letters);
        EXPECT_LT((apply_pauli(p, apply_pauli(p, psi)) - psi).norm(), 1e-14);
    }
}

TEST(Operators, JsonRoundTripBitExact) {
    const LatticeSpec lat(1, 5);
    const auto terms = random_ti_hamiltonian(lat, 2, 1234);
    const auto j = term_set_to_json(terms);
    const auto back = term_set_from_json(nlohmann::json::parse(j.dump()), lat);
    ASSERT_EQ(back.base_terms().size(), terms.base_terms().size());
    for (std::size_t i = 0; i < terms.base_terms().size(); ++i) {
        EXPECT_EQ(back.base_terms()[i].string, terms.base_terms()[i].string);
        EXPECT_EQ(back.base_terms()[i].coeff, terms.base_terms()[i].coeff);
    }
    EXPECT_EQ(max_abs(build_hamiltonian(back) - build_hamiltonian(terms)), 0.0);
}

TEST(Operators, JsonRejectsComplexAndBadSites) {
    const LatticeSpec lat(1, 4);
    auto mk = [](nlohmann::json coeff) {
        return nlohmann::json{{"k", 1}, {"terms", {{{"string", {{"0", "Z"}}}, {"coeff", coeff}}}}};
    };
    EXPECT_THROW(term_set_from_json(mk({0.5, 0.1}), lat), ValidationError);
    EXPECT_NO_THROW(term_set_from_json(mk({0.5, 0.0}), lat));
    auto bad = nlohmann::json{{"k", 1}, {"terms", {{{"string", {{"9", "Z"}}}, {"coeff", 1.0}}}}};
    EXPECT_THROW(term_set_from_json(bad, lat), ValidationError);
    auto letter = nlohmann::json{{"k", 1}, {"terms", {{{"string", {{"0", "Q"}}}, {"coeff", 1.0}}}}};
    EXPECT_THROW(term_set_from_json(letter, lat), ValidationError);
}

TEST(Operators, MaxLocalTermNorm) {
    const LatticeSpec lat(1, 4);
    // Z0 Z1 + 0.5 X0 has eigenvalues +-sqrt(1 + 0.25).
    const PauliTermSet t(lat, 2, {{PauliString({{Site{0}, Pauli::Z}, {Site{1}, Pauli::Z}}), 1.0},
                                  {PauliString::single(Site{0}, Pauli::X), 0.5}});
    EXPECT_NEAR(max_local_term_norm(t), std::sqrt(1.25), 1e-12);
}

TEST(Operators, ProductExpectation) {
    const double s = 1.0 / std::sqrt(2.0);
    std::vector<QubitState> sites = {QubitState(s, s), QubitState(1, 0), QubitState(s, cplx(0, s))};
    const auto psi = product_state(sites);
    for (auto p : {Pauli::X, Pauli::Y, Pauli::Z})
        for (std::uint32_t site = 0; site < 3; ++site) {
            const PauliString str = PauliString::single(Site{site}, p);
            const double direct = psi.dot(apply_pauli(str, psi)).real();
            EXPECT_NEAR(product_expectation(str, sites), direct, 1e-14);
        }
}

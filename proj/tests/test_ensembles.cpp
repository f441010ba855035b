#include <gtest/gtest.h>

#include <qthermal/ensembles.hpp>

using namespace qthermal;

namespace {

PauliTermSet reference_chain(int n) {
    const LatticeSpec lat(1, n);
    return PauliTermSet(lat, 2,
                        {{PauliString({{Site{0}, Pauli::Z}, {Site{1}, Pauli::Z}}), 1.0},
                         {PauliString::single(Site{0}, Pauli::X), 0.9045},
                         {PauliString::single(Site{0}, Pauli::Z), 0.809}});
}

EnsembleSpec spec_of(EnsembleKind kind, std::size_t samples, std::uint64_t seed = 7) {
    EnsembleSpec s;
    s.kind = kind;
    s.samples = samples;
    s.seed = seed;
    return s;
}

// Per-entry mean and standard error of the sampled one-site reduced states of site 0.
void expect_site_mean_within(const Ensemble& e, const DenseOperator& target, double sigmas) {
    const auto d = target.rows();
    const std::size_t m = e.spec().samples;
    const Bipartition site0(e.num_qubits(), Region(e.lattice(), {Site{0}}));
    std::vector<std::vector<double>> re(static_cast<std::size_t>(d * d)), im(static_cast<std::size_t>(d * d));
    for (std::size_t i = 0; i < m; ++i) {
        const DenseOperator p = site0.reduce_pure(e.sample(i).psi);
        for (Eigen::Index k = 0; k < d * d; ++k) {
            re[static_cast<std::size_t>(k)].push_back(p(k % d, k / d).real());
            im[static_cast<std::size_t>(k)].push_back(p(k % d, k / d).imag());
        }
    }
    for (Eigen::Index k = 0; k < d * d; ++k) {
        const auto r = mean_and_stderr(re[static_cast<std::size_t>(k)]);
        const auto i = mean_and_stderr(im[static_cast<std::size_t>(k)]);
        EXPECT_LE(std::abs(r.mean - target(k % d, k / d).real()), sigmas * r.sem + 1e-12);
        EXPECT_LE(std::abs(i.mean - target(k % d, k / d).imag()), sigmas * i.sem + 1e-12);
    }
}

}  // namespace

TEST(Sample, ComputationalBasisChiSquare) {
    const LatticeSpec lat(1, 2);
    const Ensemble e(spec_of(EnsembleKind::ComputationalBasis, 4000), lat);
    std::array<int, 4> counts{};
    for (std::size_t i = 0; i < 4000; ++i) {
        const auto psi = e.sample(i).psi;
        int hit = -1;
        for (int b = 0; b < 4; ++b)
            if (std::abs(std::abs(psi[b]) - 1.0) < 1e-12) hit = b;
        ASSERT_GE(hit, 0);
        ++counts[static_cast<std::size_t>(hit)];
    }
    double chi2 = 0;
    for (int c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
    EXPECT_LT(chi2, 16.27);  // p = 0.001 with 3 degrees of freedom
}

TEST(Sample, DeterministicPerIndex) {
    const LatticeSpec lat(1, 5);
    auto s = spec_of(EnsembleKind::ShallowCircuit, 10);
    s.complexity = s.circuit_depth = 2;
    const Ensemble a(s, lat), b(s, lat);
    for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(a.sample(i).psi, b.sample(i).psi);
    EXPECT_NE(a.sample(0).psi, a.sample(1).psi);
    EXPECT_THROW(a.sample(10), ValidationError);
}

TEST(Sample, ZeroLayerCircuitIsBaseProduct) {
    const LatticeSpec lat(1, 4);
    auto s = spec_of(EnsembleKind::ShallowCircuit, 5);
    const Ensemble e(s, lat);
    for (std::size_t i = 0; i < 5; ++i) {
        const auto st = e.sample(i);
        EXPECT_EQ(st.depth(), 0);
        EXPECT_LT((st.psi - product_state(st.product)).norm(), 1e-15);
    }
}

TEST(Sample, DepthBudgetEnforced) {
    const LatticeSpec lat(1, 4);
    auto s = spec_of(EnsembleKind::ShallowCircuit, 5);
    s.circuit_depth = 2;
    s.complexity = 1;
    EXPECT_THROW(Ensemble(s, lat), ValidationError);
}

TEST(Sample, StabilizerProductSingleSiteMean) {
    const LatticeSpec lat(1, 2);
    const Ensemble e(spec_of(EnsembleKind::StabilizerProduct, 3000), lat);
    expect_site_mean_within(e, DenseOperator::Identity(2, 2) / 2.0, 3.0);
}

TEST(Sample, SixStateOracleIsMaximallyMixed) {
    DenseOperator avg = DenseOperator::Zero(2, 2);
    for (int s = 0; s < 6; ++s) avg += stabilizer_qubit(s) * stabilizer_qubit(s).adjoint();
    EXPECT_LT(max_abs(avg / 6.0 - DenseOperator::Identity(2, 2) / 2.0), 1e-15);
}

TEST(Sample, ProductHaarSingleSiteMean) {
    const LatticeSpec lat(1, 2);
    const Ensemble e(spec_of(EnsembleKind::ProductHaar, 10000), lat);
    expect_site_mean_within(e, DenseOperator::Identity(2, 2) / 2.0, 3.0);
}

TEST(Sample, MicrocanonicalWindowHolds) {
    const int n = 6;
    const LatticeSpec lat(1, n);
    const auto h = reference_chain(n);
    const auto g = gibbs_state(build_hamiltonian(h), 0.5);
    auto s = spec_of(EnsembleKind::MicrocanonicalProduct, 50);
    s.target_energy = g.energy;
    const Ensemble e(s, lat, h);
    EXPECT_NEAR(e.window(), std::sqrt(6.0) * max_local_term_norm(h), 1e-12);
    const auto hd = build_hamiltonian(h);
    for (std::size_t i = 0; i < 50; ++i) {
        const auto st = e.sample(i);
        EXPECT_LE(std::abs(st.product_energy - g.energy), e.window());
        EXPECT_NEAR(st.psi.dot(hd * st.psi).real(), st.product_energy, 1e-10);
    }
}

TEST(Sample, MicrocanonicalEmptyWindowNamesDelta) {
    const LatticeSpec lat(1, 4);
    auto s = spec_of(EnsembleKind::MicrocanonicalProduct, 2);
    s.target_energy = 100.0;
    s.window = 0.1;
    s.retry_cap = 50;
    const Ensemble e(s, lat, reference_chain(4));
    try {
        e.sample(0);
        FAIL();
    } catch (const ValidationError& err) {
        EXPECT_NE(std::string(err.what()).find("Delta"), std::string::npos);
    }
}

TEST(Sample, CanonicalTiltMatchesTargetEnergy) {
    const int n = 4;
    const LatticeSpec lat(1, n);
    const auto h = reference_chain(n);
    const auto g = gibbs_state(build_hamiltonian(h), 0.2);
    auto s = spec_of(EnsembleKind::CanonicalProduct, 10);
    s.target_energy = g.energy;
    const Ensemble e(s, lat, h);
    EXPECT_GT(e.tilt_beta(), 0.0);
    EXPECT_NEAR(e.canonical_mean_energy(e.tilt_beta()), g.energy, 1e-9);
    ASSERT_TRUE(e.has_exact_support());
    const auto st = ensemble_stats(e, build_hamiltonian(h), g);
    EXPECT_NEAR(st.mean_energy, g.energy, 1e-9);
}

TEST(Sample, CanonicalHeatBathAgreesWithExact) {
    // N=7 exceeds the enumeration limit, so draws come from the heat-bath chain.
    const int n = 7;
    const LatticeSpec lat(1, n);
    const auto h = reference_chain(n);
    auto s = spec_of(EnsembleKind::CanonicalProduct, 400);
    s.tilt_beta = 0.6;
    const Ensemble e(s, lat, h);
    ASSERT_FALSE(e.has_exact_support());
    std::vector<double> es;
    for (std::size_t i = 0; i < 400; ++i) es.push_back(e.sample(i).product_energy);
    const auto m = mean_and_stderr(es);
    // Exact tilted mean over all 6^7 configurations.
    const ProductEnergy model(h);
    double z = 0, acc = 0;
    for (std::uint64_t i = 0; i < ipow(6, n); ++i) {
        const double en = model.energy(stabilizer_config(i, n));
        const double w = std::exp(-0.6 * en);
        z += w;
        acc += w * en;
    }
    EXPECT_LE(std::abs(m.mean - acc / z), 4 * m.sem);
}

TEST(Sample, CanonicalHaarReachesLowerEnergies) {
    const int n = 4;
    const LatticeSpec lat(1, n);
    const auto h = reference_chain(n);
    const auto g = gibbs_state(build_hamiltonian(h), 0.7);
    auto s = spec_of(EnsembleKind::CanonicalProduct, 300);
    s.base_product = EnsembleKind::StabilizerProduct;
    s.target_energy = g.energy;
    EXPECT_THROW(Ensemble(s, lat, h), ValidationError);
    s.base_product = EnsembleKind::ProductHaar;
    const Ensemble e(s, lat, h);
    EXPECT_FALSE(e.has_exact_support());
    std::vector<double> es;
    for (std::size_t i = 0; i < 300; ++i) es.push_back(e.sample(i).product_energy);
    const auto m = mean_and_stderr(es);
    EXPECT_LE(std::abs(m.mean - g.energy), 4 * m.sem + 0.05 * std::abs(g.energy));
}

TEST(Sample, VonMisesFisherMean) {
    // E[n . mu] = coth(kappa) - 1/kappa.
    auto rng = make_rng(5);
    const BlochVector h(0.3, -0.4, 1.2);
    const double b = 1.5, kappa = b * h.norm();
    std::vector<double> proj;
    for (int i = 0; i < 20000; ++i) {
        const auto v = von_mises_fisher(h, b, rng);
        ASSERT_NEAR(v.norm(), 1.0, 1e-12);
        proj.push_back(-v.dot(h) / h.norm());
    }
    const auto m = mean_and_stderr(proj);
    EXPECT_LE(std::abs(m.mean - (1 / std::tanh(kappa) - 1 / kappa)), 4 * m.sem);
}

TEST(Sample, BlochRoundTrip) {
    for (int s = 0; s < 6; ++s) {
        const auto q = qubit_from_bloch(bloch_of(stabilizer_qubit(s)));
        EXPECT_NEAR(std::abs(q.dot(stabilizer_qubit(s))), 1.0, 1e-14);
    }
}

TEST(Certify, ProductStatesHaveRankOne) {
    const LatticeSpec lat(1, 6);
    const Ensemble e(spec_of(EnsembleKind::ProductHaar, 3), lat);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto st = e.sample(i);
        EXPECT_EQ(certify_complexity(st, lat), 0);
        for (int len = 1; len < 6; ++len)
            EXPECT_EQ(schmidt_rank(st.psi, Bipartition(6, Region::block(lat, Site{0}, len))), 1);
    }
}

TEST(Certify, OneLayerHalfChainRank) {
    const LatticeSpec lat(1, 8);
    const Region half = Region::block(lat, Site{1}, 4);
    EXPECT_EQ(boundary_size(lat, half, 1), 2);
    auto s = spec_of(EnsembleKind::ShallowCircuit, 6);
    s.complexity = s.circuit_depth = 1;
    s.base_product = EnsembleKind::ProductHaar;
    const Ensemble e(s, lat);
    for (std::size_t i = 0; i < 6; ++i) {
        const auto st = e.sample(i);
        EXPECT_EQ(certify_complexity(st, lat), 1);
        EXPECT_LE(schmidt_rank(st.psi, Bipartition(8, half)), 4);
    }
}

TEST(Certify, LightConeCorrelations) {
    const LatticeSpec lat(1, 10);
    for (int depth : {1, 2}) {
        auto s = spec_of(EnsembleKind::ShallowCircuit, 3, 11 + static_cast<std::uint64_t>(depth));
        s.complexity = s.circuit_depth = depth;
        s.base_product = EnsembleKind::ProductHaar;
        const Ensemble e(s, lat);
        for (std::size_t i = 0; i < 3; ++i) {
            const auto st = e.sample(i);
            EXPECT_EQ(certify_complexity(st, lat), depth);
            const Region a(lat, {Site{0}}), b(lat, {Site{5}});
            ASSERT_GT(site_distance(lat, Site{0}, Site{5}), 2 * depth);
            const Bipartition part(10, region_union(lat, a, b));
            EXPECT_LE(correlation_from_reduced(part.reduce_pure(st.psi), lat, a, b).value, 1e-10);
        }
    }
}

TEST(Certify, TwoDimensionalBrickwork) {
    const LatticeSpec lat(2, 3);
    auto s = spec_of(EnsembleKind::ShallowCircuit, 2);
    s.complexity = s.circuit_depth = 4;
    s.base_product = EnsembleKind::ProductHaar;
    const Ensemble e(s, lat);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(certify_complexity(e.sample(i), lat), 4);
}

TEST(Certify, CircuitLayersDisjointAndUnitary) {
    const LatticeSpec lat(2, 4);
    auto rng = make_rng(3);
    const auto c = brickwork_circuit(lat, 4, rng);
    EXPECT_EQ(c.depth(), 4);
    for (const auto& layer : c.layers()) {
        EXPECT_EQ(layer.size(), 8u);
        for (const auto& g : layer) EXPECT_EQ(site_distance(lat, g.low, g.high), 1);
    }
    auto bad = c.layers();
    bad[0].push_back(bad[0][0]);
    EXPECT_THROW(ShallowCircuit{bad}, ValidationError);
}

TEST(Stats, ComputationalBasisExact) {
    const int n = 4;
    const LatticeSpec lat(1, n);
    const auto h = build_hamiltonian(reference_chain(n));
    const auto g = gibbs_state(h, 0.0);
    const Ensemble e(spec_of(EnsembleKind::ComputationalBasis, 10), lat);
    const auto st = ensemble_stats(e, h, g);
    EXPECT_TRUE(st.exact);
    EXPECT_EQ(st.samples, 16u);
    EXPECT_LT(max_abs(st.mean_state - DenseOperator::Identity(16, 16) / 16.0), 1e-15);
    EXPECT_LT(st.eps_ge, 1e-12);
    EXPECT_NEAR(st.mean_energy, st.thermal_energy, 1e-12);
}

TEST(Stats, MaximallyMixedWitnessAtInfiniteTemperature) {
    const int n = 3;
    const LatticeSpec lat(1, n);
    const auto h = build_hamiltonian(reference_chain(n));
    const auto g = gibbs_state(h, 0.0);
    const Ensemble stab(spec_of(EnsembleKind::StabilizerProduct, 10), lat);
    EXPECT_LT(ensemble_stats(stab, h, g).eps_ge, 1e-12);
    const Ensemble haar(spec_of(EnsembleKind::ProductHaar, 4000), lat);
    const auto st = ensemble_stats(haar, h, g);
    EXPECT_FALSE(st.exact);
    EXPECT_LT(max_abs(st.mean_state - DenseOperator::Identity(8, 8) / 8.0), 0.05);
    EXPECT_NEAR(std::real(st.mean_state.trace()), 1.0, 1e-12);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<DenseOperator>(st.mean_state).eigenvalues().minCoeff(), -1e-12);
}

TEST(Stats, FeasibleUnravelingIsExactlyThermal) {
    const int n = 3;
    const LatticeSpec lat(1, n);
    const auto h = build_hamiltonian(reference_chain(n));
    const auto g = gibbs_state(h, 0.2);
    auto u = std::make_shared<const UnravelingResult>(unravel_gibbs(g));
    ASSERT_TRUE(u->feasible);
    auto s = spec_of(EnsembleKind::UnravelingWeighted, 100);
    s.unraveling = u;
    const Ensemble e(s, lat);
    const auto st = ensemble_stats(e, h, g);
    EXPECT_TRUE(st.exact);
    EXPECT_LE(st.eps_ge, std::ldexp(1e-6, n));
    EXPECT_NEAR(st.mean_energy, g.energy, 1e-5);
}

TEST(Stats, ErrorsShrinkWithSamples) {
    const int n = 2;
    const LatticeSpec lat(1, n);
    const auto h = build_hamiltonian(reference_chain(n));
    const auto g = gibbs_state(h, 0.0);
    const EnsembleStatsOptions mc{.allow_exact = false};
    const auto small = ensemble_stats(Ensemble(spec_of(EnsembleKind::StabilizerProduct, 200), lat), h, g, mc);
    const auto large = ensemble_stats(Ensemble(spec_of(EnsembleKind::StabilizerProduct, 3200), lat), h, g, mc);
    EXPECT_LT(large.mean_energy_sem, 0.5 * small.mean_energy_sem);
    EXPECT_LT(large.eps_ge, small.eps_ge);
}

TEST(Stats, WorkerCountDoesNotChangeResult) {
    const int n = 4;
    const LatticeSpec lat(1, n);
    const auto h = build_hamiltonian(reference_chain(n));
    const auto g = gibbs_state(h, 0.2);
    auto s = spec_of(EnsembleKind::ShallowCircuit, 64);
    s.complexity = s.circuit_depth = 2;
    const Ensemble e(s, lat);
    const auto a = ensemble_stats(e, h, g, {.workers = 1});
    const auto b = ensemble_stats(e, h, g, {.workers = 3});
    EXPECT_EQ(a.mean_state, b.mean_state);
    EXPECT_EQ(a.eps_ge, b.eps_ge);
    EXPECT_EQ(a.eps_ge_sem, b.eps_ge_sem);
}

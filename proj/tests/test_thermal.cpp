#include <gtest/gtest.h>

#include <qthermal/thermal.hpp>
#include <qthermal/unravel.hpp>

using namespace qthermal;

namespace {

DenseOperator projector(const StateVector& psi) { return psi * psi.adjoint(); }

DenseOperator random_density(int n, std::uint64_t seed) {
    auto rng = make_rng(seed);
    const auto d = static_cast<Eigen::Index>(hilbert_dim(n));
    ComplexMatrix g(d, d);
    for (Eigen::Index c = 0; c < d; ++c)
        for (Eigen::Index r = 0; r < d; ++r) {
            const double re = normal01(rng);
            g(r, c) = cplx(re, normal01(rng));
        }
    DenseOperator rho = g * g.adjoint();
    return rho / rho.trace().real();
}

PauliTermSet reference_chain(int n) {
    const LatticeSpec lat(1, n);
    return PauliTermSet(lat, 2,
                        {{PauliString({{Site{0}, Pauli::Z}, {Site{1}, Pauli::Z}}), 1.0},
                         {PauliString::single(Site{0}, Pauli::X), 0.9045},
                         {PauliString::single(Site{0}, Pauli::Z), 0.809}});
}

DenseOperator single_z() { return pauli_dense(PauliString::single(Site{0}, Pauli::Z), 1); }

}  // namespace

TEST(Gibbs, InfiniteTemperature) {
    const auto h = build_hamiltonian(reference_chain(4));
    const auto g = gibbs_state(h, 0.0);
    EXPECT_LT(max_abs(g.density() - DenseOperator::Identity(16, 16) / 16.0), 1e-14);
    EXPECT_THROW(gibbs_state(h, -0.5), ValidationError);
    EXPECT_NO_THROW(gibbs_state(h, -0.5, true));
}

TEST(Gibbs, SingleQubitClosedForm) {
    const double beta = std::atanh(0.5);
    const auto g = gibbs_state(single_z(), beta);
    EXPECT_NEAR(g.energy, -0.5, 1e-14);
    const auto rho = g.density();
    EXPECT_NEAR(rho.trace().real(), 1.0, 1e-14);
    EXPECT_LT(commutator_norm(rho, single_z()), 1e-14);
}

TEST(Gibbs, EnergyInRangeAndMonotone) {
    const auto s = std::make_shared<const Spectrum>(diagonalize(build_hamiltonian(reference_chain(6))));
    double prev = std::numeric_limits<double>::infinity();
    for (double beta = 0.0; beta <= 5.0; beta += 0.25) {
        const auto g = gibbs_state(s, beta);
        EXPECT_GE(g.energy, s->min() - 1e-12);
        EXPECT_LE(g.energy, s->max() + 1e-12);
        EXPECT_LT(g.energy, prev);
        prev = g.energy;
        EXPECT_NEAR(g.weights.sum(), 1.0, 1e-12);
    }
}

TEST(Gibbs, LargeBetaNoOverflow) {
    const auto g = gibbs_state(build_hamiltonian(reference_chain(4)), 800.0);
    EXPECT_TRUE(std::isfinite(g.log_partition));
    EXPECT_NEAR(g.weights.sum(), 1.0, 1e-12);
}

TEST(SolveBeta, Examples) {
    const auto s = diagonalize(single_z());
    EXPECT_EQ(solve_beta_for_energy(s, 0.0), 0.0);
    EXPECT_NEAR(solve_beta_for_energy(s, -0.5), std::atanh(0.5), 1e-9);
    EXPECT_THROW(solve_beta_for_energy(s, 0.3), ValidationError);
    EXPECT_THROW(solve_beta_for_energy(s, -1.0), ValidationError);

    const auto chain = diagonalize(build_hamiltonian(reference_chain(6)));
    const double target = chain.min() + 1e-3 * chain.width();
    const double beta = solve_beta_for_energy(chain, target);
    EXPECT_GT(beta, 3.0);
    EXPECT_NEAR(thermal_energy(chain, beta), target, 1e-10 * chain.width());
    EXPECT_LT(thermal_energy(chain, beta * 1.01), thermal_energy(chain, beta));
}

TEST(PartialTrace, Examples) {
    const LatticeSpec lat(1, 2);
    // |0><0| on site 0 tensored with I/2 on site 1.
    DenseOperator rho = DenseOperator::Zero(4, 4);
    rho(0, 0) = rho(2, 2) = 0.5;
    const auto a = Region::from_indices(lat, {0});
    DenseOperator expect = DenseOperator::Zero(2, 2);
    expect(0, 0) = 1;
    EXPECT_LT(max_abs(partial_trace(rho, a) - expect), 1e-15);

    StateVector bell = StateVector::Zero(4);
    bell[0] = bell[3] = 1 / std::sqrt(2.0);
    EXPECT_LT(max_abs(partial_trace(projector(bell), a) - DenseOperator::Identity(2, 2) / 2.0), 1e-15);

    const auto r = random_density(4, 1);
    for (auto region : {std::vector<int>{0}, {1, 3}, {0, 1, 2}})
        EXPECT_NEAR(partial_trace(r, Region::from_indices(LatticeSpec(1, 4), region)).trace().real(), 1.0, 1e-12);
}

TEST(PartialTrace, PureAndMixtureMatchDense) {
    const LatticeSpec lat(1, 5);
    const auto s = diagonalize(build_hamiltonian(random_ti_hamiltonian(lat, 2, 4)));
    const auto a = Region::from_indices(lat, {1, 3});
    const Bipartition part(5, a);
    const auto v = s.vector(7);
    EXPECT_LT(max_abs(part.reduce_pure(v) - partial_trace(projector(v), a)), 1e-14);
    const auto g = gibbs_state(std::make_shared<const Spectrum>(s), 0.7);
    EXPECT_LT(max_abs(g.reduced(part) - partial_trace(g.density(), a)), 1e-13);
}

TEST(LocalTraceNorm, Examples) {
    const auto r = random_density(3, 2);
    const auto a = Region::from_indices(LatticeSpec(1, 3), {0});
    EXPECT_NEAR(local_trace_norm(r, r, a), 0.0, 1e-15);
    DenseOperator p0 = DenseOperator::Zero(2, 2), p1 = DenseOperator::Zero(2, 2);
    p0(0, 0) = 1, p1(1, 1) = 1;
    EXPECT_NEAR(local_trace_norm(p0, p1, Region::from_indices(LatticeSpec(1, 2), {0})), 2.0, 1e-15);
}

TEST(LocalTraceNorm, OneSitePauliOracle) {
    // For a traceless-or-not Hermitian 2x2 difference D = (t I + v.sigma)/2, ||D||_1 = max(|t|, |v|).
    const LatticeSpec lat(1, 3);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto rho = random_density(3, 10 + seed), sigma = random_density(3, 50 + seed);
        const auto a = Region::from_indices(lat, {static_cast<int>(seed % 3)});
        const ComplexMatrix delta = partial_trace(rho - sigma, a);
        const double t = delta.trace().real();
        double v2 = 0.0;
        for (auto p : {Pauli::X, Pauli::Y, Pauli::Z}) {
            const double c = (delta * pauli_matrix(p)).trace().real();
            v2 += c * c;
        }
        EXPECT_NEAR(local_trace_norm(rho, sigma, a), std::max(std::abs(t), std::sqrt(v2)), 1e-8);
    }
}

TEST(LocalTraceNorm, DataProcessing) {
    const LatticeSpec lat(1, 4);
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const auto rho = random_density(4, seed), sigma = random_density(4, 100 + seed);
        const double full = trace_norm_hermitian(rho - sigma);
        for (auto region : {std::vector<int>{0}, {0, 1}, {1, 2, 3}})
            EXPECT_LE(local_trace_norm(rho, sigma, Region::from_indices(lat, region)), full + 1e-12);
    }
}

TEST(Purity, Examples) {
    const LatticeSpec lat(1, 5);
    const auto g0 = gibbs_state(build_hamiltonian(reference_chain(5)), 0.0);
    for (int na = 1; na <= 4; ++na) {
        std::vector<int> idx(static_cast<std::size_t>(na));
        std::iota(idx.begin(), idx.end(), 0);
        EXPECT_NEAR(subsystem_purity(g0, Region::from_indices(lat, idx)), std::ldexp(1.0, -na), 1e-14);
    }
    const auto prod = product_state({QubitState(1, 0), QubitState(0.6, 0.8), QubitState(1, 0), QubitState(0, 1), QubitState(1, 0)});
    for (auto region : {std::vector<int>{0}, {1, 2}, {0, 3, 4}})
        EXPECT_NEAR(subsystem_purity(projector(prod), Region::from_indices(lat, region)), 1.0, 1e-14);
}

TEST(Purity, LowerBound) {
    const LatticeSpec lat(1, 4);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto rho = random_density(4, seed);
        EXPECT_GE(subsystem_purity(rho, Region::from_indices(lat, {0, 2})), 0.25 - 1e-14);
    }
}

TEST(Correlation, Examples) {
    const LatticeSpec lat(1, 2);
    StateVector bell = StateVector::Zero(4);
    bell[0] = bell[3] = 1 / std::sqrt(2.0);
    const auto a = Region::from_indices(lat, {0}), b = Region::from_indices(lat, {1});
    const auto c = correlation(projector(bell), lat, a, b);
    EXPECT_NEAR(c.value, 1.0, 1e-14);

    const LatticeSpec l4(1, 4);
    const auto prod = product_state({QubitState(0.6, 0.8), QubitState(1, 0), QubitState(0.8, cplx(0, 0.6)), QubitState(0, 1)});
    EXPECT_NEAR(correlation(projector(prod), l4, Region::from_indices(l4, {0}), Region::from_indices(l4, {2, 3})).value, 0.0, 1e-14);

    const auto g0 = gibbs_state(build_hamiltonian(reference_chain(4)), 0.0);
    EXPECT_NEAR(correlation(g0, l4, Region::from_indices(l4, {0, 1}), Region::from_indices(l4, {3})).value, 0.0, 1e-14);

    EXPECT_THROW(correlation(g0, l4, Region::from_indices(l4, {0, 1}), Region::from_indices(l4, {1})), ValidationError);
}

TEST(Correlation, ZZCorrelatorOnBellIsFound) {
    const LatticeSpec lat(1, 2);
    StateVector bell = StateVector::Zero(4);
    bell[0] = bell[3] = 1 / std::sqrt(2.0);
    const auto c = correlation(projector(bell), lat, Region::from_indices(lat, {0}), Region::from_indices(lat, {1}));
    const double zz = bell.dot(apply_pauli(PauliString({{Site{0}, Pauli::Z}, {Site{1}, Pauli::Z}}), bell)).real();
    EXPECT_NEAR(c.value, std::abs(zz), 1e-14);
}

TEST(CorrelationFit, Synthetic) {
    std::vector<CorrelationPoint> pts;
    for (int d = 1; d <= 5; ++d) pts.push_back({d, 1, 1, std::exp(-d / 2.0)});
    const auto prof = fit_correlation_length(pts);
    EXPECT_NEAR(prof.xi, 2.0, 1e-6);
    EXPECT_NEAR(prof.r2, 1.0, 1e-12);

    std::vector<CorrelationPoint> flat;
    for (int d = 1; d <= 4; ++d) flat.push_back({d, 1, 1, 0.3});
    EXPECT_THROW(fit_correlation_length(flat), ValidationError);

    std::vector<CorrelationPoint> zero;
    for (int d = 1; d <= 4; ++d) zero.push_back({d, 1, 1, 1e-14});
    EXPECT_EQ(fit_correlation_length(zero).xi, 0.0);
}

TEST(CorrThreshold, Values) {
    const double b1 = corr_threshold_beta(2, 1, 1.0);
    EXPECT_NEAR(b1, 0.5 * std::log(1.0 + std::sqrt(1.0 + 1.0 / std::numbers::e)), 1e-15);
    EXPECT_NEAR(b1, 0.387, 5e-4);
    EXPECT_NEAR(corr_threshold_beta(2, 1, 2.0), b1 / 2.0, 1e-15);
    EXPECT_LT(corr_threshold_beta(2, 2, 1.0), b1);
}

TEST(Unravel, InfiniteTemperatureSixStates) {
    for (int n = 1; n <= 3; ++n) {
        const auto d = static_cast<Eigen::Index>(hilbert_dim(n));
        const auto r = unravel(DenseOperator::Identity(d, d) / static_cast<double>(d));
        EXPECT_TRUE(r.feasible);
        EXPECT_LE(r.residual, 1e-10);
        double total = 0;
        for (const auto& [idx, p] : r.probabilities) total += p;
        EXPECT_NEAR(total, 1.0, 1e-12);
        if (n == 1) {
            ASSERT_EQ(r.probabilities.size(), 6u);
            for (const auto& [idx, p] : r.probabilities) EXPECT_NEAR(p, 1.0 / 6.0, 1e-12);
        }
    }
}

TEST(Unravel, SingleQubitZ) {
    const double beta = 0.3;
    const auto g = gibbs_state(single_z(), beta);
    const auto r = unravel_gibbs(g);
    EXPECT_TRUE(r.feasible);
    double p[6] = {0, 0, 0, 0, 0, 0};
    for (const auto& [idx, w] : r.probabilities) p[idx] = w;
    // <Z> = -tanh(beta), so the |1> weight exceeds the |0> weight.
    EXPECT_NEAR(p[0] - p[1], -std::tanh(beta), 1e-7);
    EXPECT_NEAR(p[2] - p[3], 0.0, 1e-7);
    EXPECT_NEAR(p[4] - p[5], 0.0, 1e-7);
    EXPECT_LT(max_abs(r.mixture() - g.density()), 1e-6);
}

TEST(Unravel, EntangledGroundStateInfeasible) {
    const LatticeSpec lat(1, 2);
    const PauliTermSet heis(lat, 2,
                            {{PauliString({{Site{0}, Pauli::X}, {Site{1}, Pauli::X}}), 0.5},
                             {PauliString({{Site{0}, Pauli::Y}, {Site{1}, Pauli::Y}}), 0.5},
                             {PauliString({{Site{0}, Pauli::Z}, {Site{1}, Pauli::Z}}), 0.5}});
    const auto g = gibbs_state(build_hamiltonian(heis), 5.0);
    const auto r = unravel_gibbs(g);
    EXPECT_FALSE(r.feasible);
    EXPECT_GT(r.residual, 1e-6);
}

TEST(Unravel, Cap) {
    EXPECT_THROW(unravel(DenseOperator::Identity(128, 128) / 128.0), ResourceError);
}

TEST(GGE, ReducesToGibbs) {
    const auto h = build_hamiltonian(reference_chain(4));
    const auto g = gge_state(h, {h}, {0.8});
    EXPECT_LT(max_abs(g.density() - gibbs_state(h, 0.8).density()), 1e-12);
    const auto zero = gge_state(h, {h}, {0.0});
    EXPECT_LT(max_abs(zero.density() - DenseOperator::Identity(16, 16) / 16.0), 1e-15);
}

TEST(GGE, RejectsNonCommuting) {
    const auto h = build_hamiltonian(reference_chain(3));
    const auto x = build_hamiltonian(PauliTermSet(LatticeSpec(1, 3), 1, {{PauliString::single(Site{0}, Pauli::X), 1.0}}));
    EXPECT_THROW(gge_state(h, {h, x}, {1.0, 0.5}), HypothesisError);
}

namespace {

// XXZ-type chain with a field: conserves total Z.
PauliTermSet u1_chain(int n, double field) {
    const LatticeSpec lat(1, n);
    return PauliTermSet(lat, 2,
                        {{PauliString({{Site{0}, Pauli::X}, {Site{1}, Pauli::X}}), 1.0},
                         {PauliString({{Site{0}, Pauli::Y}, {Site{1}, Pauli::Y}}), 1.0},
                         {PauliString({{Site{0}, Pauli::Z}, {Site{1}, Pauli::Z}}), 0.6},
                         {PauliString::single(Site{0}, Pauli::Z), field}});
}

}  // namespace

TEST(GGE, TiltIdentityAndCharges) {
    const int n = 5;
    const auto h = build_hamiltonian(u1_chain(n, 0.3));
    const auto q2 = build_hamiltonian(PauliTermSet(LatticeSpec(1, n), 1, {{PauliString::single(Site{0}, Pauli::Z), 1.0}}));
    auto rng = make_rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const std::vector<double> lambda = {uniform(rng, -1, 1), uniform(rng, -1, 1)};
        const auto g = gge_state(h, {h, q2}, lambda);
        const auto tilt = gibbs_state(g.tilt_hamiltonian(), g.tilt_beta);
        EXPECT_LT(max_abs(g.density() - tilt.density()), 1e-12);
        const auto rho = g.density();
        EXPECT_NEAR(g.charge_expectations[0], (rho * h).trace().real(), 1e-10);
        EXPECT_NEAR(g.charge_expectations[1], (rho * q2).trace().real(), 1e-10);
    }
}

TEST(GGE, MaximumEntropyAmongPerturbations) {
    const int n = 4;
    const auto h = build_hamiltonian(u1_chain(n, 0.2));
    const auto q2 = build_hamiltonian(PauliTermSet(LatticeSpec(1, n), 1, {{PauliString::single(Site{0}, Pauli::Z), 1.0}}));
    const auto g = gge_state(h, {h, q2}, {0.7, -0.4});
    const DenseOperator rho = g.density();
    const double s0 = von_neumann_entropy(rho);
    const auto d = rho.rows();
    // Hilbert-Schmidt orthonormal frame for span{I, H, Q2}.
    std::vector<DenseOperator> frame;
    for (const DenseOperator& op : {DenseOperator(DenseOperator::Identity(d, d)), h, q2}) {
        DenseOperator v = op;
        for (const auto& f : frame) v -= (f.adjoint() * v).trace() * f;
        frame.push_back(v / std::sqrt((v.adjoint() * v).trace().real()));
    }
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> base(rho, Eigen::EigenvaluesOnly);
    const double floor = base.eigenvalues().minCoeff();
    ASSERT_GT(floor, 0.0);
    auto rng = make_rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        ComplexMatrix x(d, d);
        for (Eigen::Index c = 0; c < d; ++c)
            for (Eigen::Index r = 0; r < d; ++r) {
                const double re = normal01(rng);
                x(r, c) = cplx(re, normal01(rng));
            }
        DenseOperator pert = (x + x.adjoint()) / 2.0;
        for (const auto& f : frame) pert -= (f.adjoint() * pert).trace() * f;
        // Operator norm below the smallest eigenvalue keeps sigma positive.
        pert *= 0.5 * floor / trace_norm_hermitian(pert);
        const DenseOperator sigma = rho + pert;
        EXPECT_NEAR(sigma.trace().real(), 1.0, 1e-12);
        EXPECT_NEAR((sigma * h).trace().real(), g.charge_expectations[0], 1e-10);
        Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(sigma, Eigen::EigenvaluesOnly);
        ASSERT_GT(es.eigenvalues().minCoeff(), 0.0);
        EXPECT_LE(von_neumann_entropy(sigma), s0 + 1e-12);
    }
}

#include <gtest/gtest.h>

#include "scenes.hpp"

using namespace leoisac;
using namespace leoisac::conic;

namespace {

// Re X_ij as a Hermitian coefficient on an n x n block.
CoefPtr entry(int n, int i, int j) {
    CMat c = CMat::Zero(n, n);
    c(i, j) += 0.5;
    c(j, i) += 0.5;
    return LowRankHermitian::from_dense(c);
}

// X - I >= 0 for a 2 x 2 block as an LMI.
LmiConstraint above_identity(int block) {
    LmiConstraint l(2);
    l.at(0, 0).add_block(block, entry(2, 0, 0)).add_constant(-1.0);
    l.at(0, 1).add_block(block, entry(2, 0, 1));
    l.at(1, 1).add_block(block, entry(2, 1, 1)).add_constant(-1.0);
    return l;
}

Problem min_trace_above_identity() {
    Problem p;
    p.add_block(2);
    p.obj_blocks[0] = CMat::Identity(2, 2);
    p.lmis.push_back(above_identity(0));
    // tr X <= 100 keeps the phase-I sublevel sets bounded.
    p.linears.push_back({LinearForm{}.add_block(0, LowRankHermitian::selector(2, 0, 2, 0.01)).add_constant(-1.0)});
    return p;
}

Point identity_start(const Problem& p, double scale = 1.0) {
    Point x;
    for (int n : p.block_dims) x.x.push_back(scale * CMat::Identity(n, n));
    x.z = VecX::Zero(p.nz);
    return x;
}

}  // namespace

TEST(LowRank, FactorsReproduceDenseAndApply) {
    Rng rng = make_rng(1, {});
    const CMat c = testing_scenes::random_psd(5, 2, rng) - testing_scenes::random_psd(5, 1, rng);
    const auto f = LowRankHermitian::from_dense(c);
    EXPECT_EQ(f->rank(), 3);
    EXPECT_LT((f->dense() - c).norm(), 1e-12 * c.norm());
    const CMat x = testing_scenes::random_psd(5, 5, rng);
    EXPECT_NEAR(f->apply(x), (c * x).trace().real(), 1e-10 * x.norm() * c.norm());
    const auto sel = LowRankHermitian::selector(6, 2, 3, 2.0);
    CMat y = CMat::Identity(6, 6);
    EXPECT_NEAR(sel->apply(y), 6.0, 1e-15);
    EXPECT_EQ(LmiConstraint::packed_index(3, 1, 2), 4);
    EXPECT_EQ(LmiConstraint::packed_index(3, 2, 1), 4);
    EXPECT_EQ(LmiConstraint::packed_index(3, 2, 2), 5);
}

TEST(RealEmbedding, RoundTrip) {
    Rng rng = make_rng(2, {});
    const CMat h = testing_scenes::random_psd(4, 4, rng);
    EXPECT_LT((complexify(realify(h)) - h).norm(), 1e-15);
    Eigen::SelfAdjointEigenSolver<MatX> re(realify(h));
    Eigen::SelfAdjointEigenSolver<CMat> ce(h);
    // Each eigenvalue appears twice in the real form.
    EXPECT_NEAR(re.eigenvalues()(0), ce.eigenvalues()(0), 1e-10);
    EXPECT_NEAR(re.eigenvalues()(1), ce.eigenvalues()(0), 1e-10);
}

TEST(Solver, MinTraceAboveIdentity) {
    const Problem p = min_trace_above_identity();
    const auto r = solve(p, identity_start(p, 3.0));
    ASSERT_TRUE(r.ok()) << r.message;
    EXPECT_NEAR(r.objective, 2.0, 1e-7);
    EXPECT_LT((r.point.x[0] - CMat::Identity(2, 2)).norm(), 1e-6);
}

TEST(Solver, PhaseOneFromInfeasibleStart) {
    const Problem p = min_trace_above_identity();
    const auto r = solve(p, identity_start(p, 0.2));
    ASSERT_TRUE(r.ok()) << r.message;
    EXPECT_NEAR(r.objective, 2.0, 1e-7);
}

TEST(Solver, DetectsInfeasibility) {
    Problem p = min_trace_above_identity();
    p.linears.push_back({LinearForm{}.add_block(0, LowRankHermitian::selector(2, 0, 2, 1.0)).add_constant(-1.0)});
    const auto r = solve(p, identity_start(p, 0.4));
    EXPECT_EQ(r.status, Status::Infeasible);
}

TEST(Solver, LogHypograph) {
    // maximize t s.t. t <= log x, x <= 2 (x a 1 x 1 block).
    Problem p;
    p.add_block(1);
    const int t = p.add_z();
    p.obj_z(t) = -1.0;
    LogHypoConstraint h;
    h.t.add_z(t, 1.0);
    h.s.add_block(0, LowRankHermitian::selector(1, 0, 1, 1.0));
    p.loghypos.push_back(h);
    p.linears.push_back({LinearForm{}.add_block(0, LowRankHermitian::selector(1, 0, 1, 0.5)).add_constant(-1.0)});
    Point x0 = identity_start(p);
    x0.z(t) = -1.0;
    const auto r = solve(p, x0);
    ASSERT_TRUE(r.ok()) << r.message;
    EXPECT_NEAR(r.point.z(t), std::log(2.0), 1e-6);
    EXPECT_NEAR(r.point.x[0](0, 0).real(), 2.0, 1e-6);
}

TEST(Solver, ComplexBlockUsesImaginaryPart) {
    // minimize Im X_01 s.t. X >= 0, X_00, X_11 <= 1: optimum X_01 = -i, value -1.
    Problem p;
    p.add_block(2);
    CMat c = CMat::Zero(2, 2);
    c(0, 1) = cd(0.0, 0.5);
    c(1, 0) = cd(0.0, -0.5);
    p.obj_blocks[0] = c;
    for (int i = 0; i < 2; ++i)
        p.linears.push_back({LinearForm{}.add_block(0, entry(2, i, i)).add_constant(-1.0)});
    const auto r = solve(p, identity_start(p, 0.5));
    ASSERT_TRUE(r.ok()) << r.message;
    EXPECT_NEAR(r.objective, -1.0, 1e-7);
    EXPECT_NEAR(r.point.x[0](0, 1).imag(), -1.0, 1e-5);
}

TEST(Solver, StartValidation) {
    const Problem p = min_trace_above_identity();
    Point bad;
    EXPECT_THROW(solve(p, bad), Error);
    bad.x.push_back(CMat::Identity(3, 3));
    EXPECT_THROW(solve(p, bad), Error);
}

TEST(Solver, ViolationMeasure) {
    const Problem p = min_trace_above_identity();
    EXPECT_NEAR(max_violation(p, identity_start(p, 0.5)), 0.5, 1e-12);
    EXPECT_LT(max_violation(p, identity_start(p, 2.0)), 0.0);
}

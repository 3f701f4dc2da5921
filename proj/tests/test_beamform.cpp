#include <gtest/gtest.h>

#include <map>

#include "scenes.hpp"

using namespace leoisac;
using namespace leoisac::beamform;
using testing_scenes::random_solution;
using testing_scenes::rel_err;

namespace {

Layout layout_for(int m) {
    Layout lay;
    lay.m = m;
    lay.u0 = 0;
    lay.t0 = 6;
    return lay;
}

double min_eig(const MatX& g) {
    Eigen::SelfAdjointEigenSolver<MatX> es(g);
    return es.eigenvalues().minCoeff();
}

double max_abs_eig(const MatX& g) {
    Eigen::SelfAdjointEigenSolver<MatX> es(g);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct Desk {
    SceneSnapshot sc;
    OptimizeResult alg2;
    BeamformingSolution zf;
};

const Desk& desk_run(std::uint64_t seed) {
    static std::map<std::uint64_t, Desk> cache;
    auto it = cache.find(seed);
    if (it == cache.end()) {
        Desk d;
        d.sc = testing_scenes::desk_scene(seed);
        const OptimizerConfig cfg;
        d.alg2 = optimize(d.sc, cfg);
        d.zf = zfbf_baseline(d.sc, cfg);
        it = cache.emplace(seed, std::move(d)).first;
    }
    return it->second;
}

}  // namespace

TEST(Config, DefaultsAndValidation) {
    const OptimizerConfig c;
    EXPECT_DOUBLE_EQ(c.rho0, 10.0);
    EXPECT_DOUBLE_EQ(c.iota, 1.5);
    EXPECT_DOUBLE_EQ(c.delta, 1e-4);
    EXPECT_DOUBLE_EQ(c.eta, 2.0);
    for (auto mutate : std::vector<void (*)(OptimizerConfig&)>{
             [](OptimizerConfig& x) { x.rho0 = 0.0; }, [](OptimizerConfig& x) { x.iota = 1.0; },
             [](OptimizerConfig& x) { x.delta = 0.0; }, [](OptimizerConfig& x) { x.eta = -1.0; },
             [](OptimizerConfig& x) { x.max_outer_iters = 0; }, [](OptimizerConfig& x) { x.eta_crb = 0.0; }}) {
        OptimizerConfig x;
        mutate(x);
        EXPECT_THROW(x.validate(), Error);
    }
    OptimizerConfig per;
    per.eta_per_ue = VecX::Constant(2, 1.0);
    EXPECT_DOUBLE_EQ(per.eta_of(1), 1.0);
    EXPECT_DOUBLE_EQ(per.eta_of(2), 2.0);
    EXPECT_EQ(parse_mode("comm"), Mode::CommCentric);
    EXPECT_THROW(parse_mode("both"), Error);
}

TEST(FimMaps, MatchClosedFormOnRankOneLifts) {
    Rng rng = make_rng(1, {});
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto sc = testing_scenes::desk_scene(seed);
        const auto sol = random_solution(sc.nk(), sc.m(), rng);
        const auto f = crb::fim_blocks(sc, sol, sc.alpha, sc.sigma_n2);
        const MatX j = geometry::angle_jacobian(sc.sats, sc.target);
        const auto maps = assemble_fim_linear_maps(sc, sc.alpha, sc.sigma_n2);
        CMat s = CMat::Zero(sc.nk(), sc.nk());
        for (const auto& x : lift(sol)) s += x;
        const FimValues v = maps.eval(s);
        EXPECT_LT(rel_err(MatX(v.jfj), MatX(j.transpose() * f.f_oo * j)), 1e-10);
        EXPECT_LT(rel_err(MatX(v.jfa), MatX(j.transpose() * f.f_oa)), 1e-10);
        EXPECT_NEAR(v.faa / f.f_aa, 1.0, 1e-10);
        const auto om = assemble_omega_maps(sc, sc.alpha, sc.sigma_n2);
        EXPECT_LT(rel_err(om.eval_xi(s), f.f_xi()), 1e-10);
    }
}

TEST(FimMaps, ZeroCovarianceGivesZero) {
    const auto sc = testing_scenes::desk_scene(2);
    const auto maps = assemble_fim_linear_maps(sc, sc.alpha, sc.sigma_n2);
    const auto v = maps.eval(CMat::Zero(sc.nk(), sc.nk()));
    EXPECT_EQ(v.jfj.norm(), 0.0);
    EXPECT_EQ(v.jfa.norm(), 0.0);
    EXPECT_EQ(v.faa, 0.0);
}

TEST(SchurLmi, TightAtExactBound) {
    Rng rng = make_rng(3, {});
    for (std::uint64_t seed = 3; seed <= 6; ++seed) {
        const auto sc = testing_scenes::desk_scene(seed);
        const auto sol = random_solution(sc.nk(), sc.m(), rng);
        const auto x = lift(sol);
        const auto maps = assemble_fim_linear_maps(sc, sc.alpha, sc.sigma_n2);
        CMat s = CMat::Zero(sc.nk(), sc.nk());
        for (const auto& b : x) s += b;
        const FimValues v = maps.eval(s);
        CrbScaling scale;
        scale.crb0 = v.fp().inverse().trace();
        scale.s_alpha = v.faa;
        const Layout lay = layout_for(sc.m());
        const auto lmi = build_schur_lmi(maps, scale, lay);
        EXPECT_EQ(lmi.dim, 4);
        VecX z = VecX::Zero(12);
        const Eigen::Matrix3d u = v.fp() * scale.crb0;
        for (int a = 0; a < 3; ++a)
            for (int b = a; b < 3; ++b) z(Layout::packed3(a, b)) = u(a, b);
        const MatX g = lmi.eval(x, z);
        EXPECT_LT(std::abs(min_eig(g)), 1e-8 * max_abs_eig(g));
        // U = 0 always satisfies it.
        EXPECT_GE(min_eig(lmi.eval(x, VecX::Zero(12))), -1e-10 * max_abs_eig(g));
    }
}

TEST(InverseLmi, BoundsTraceOfInverse) {
    const Layout lay = layout_for(0);
    const auto lmi = build_inverse_lmi(lay);
    const Eigen::Matrix3d u = Eigen::Vector3d(1.0, 2.0, 4.0).asDiagonal();
    VecX z = VecX::Zero(12);
    for (int a = 0; a < 3; ++a) {
        z(lay.u0 + Layout::packed3(a, a)) = u(a, a);
        z(lay.t0 + Layout::packed3(a, a)) = 1.0 / u(a, a);
    }
    std::vector<CMat> none{CMat::Zero(1, 1)};
    EXPECT_NEAR(min_eig(lmi.eval(none, z)), 0.0, 1e-12);
    z(lay.t0) *= 0.99;
    EXPECT_LT(min_eig(lmi.eval(none, z)), 0.0);
}

TEST(RateConstraint, EquivalentToRateAtAnchor) {
    Rng rng = make_rng(4, {});
    int above = 0, below = 0;
    for (int t = 0; t < 40; ++t) {
        const int m = 3, nk = 8;
        const auto sol = random_solution(nk, m, rng, 0.5);
        const auto x = lift(sol);
        const CVec h = testing_scenes::random_cvec(nk, rng);
        const double s2 = 0.05;
        const Layout lay = layout_for(m);
        for (int i = 0; i < m; ++i) {
            const double rate = ue_rate(sol, h, i, s2);
            const double eta = rate + (t % 2 == 0 ? -0.3 : 0.3);
            const auto c = build_rate_constraint(h, i, s2, eta, x, lay);
            const VecX z = VecX::Zero(12);
            const double slack = std::log(c.s.eval(x, z)) - c.t.eval(x, z);
            EXPECT_NEAR(slack, (rate - eta) * std::log(2.0), 1e-10);
            (slack >= 0.0 ? above : below)++;
        }
    }
    EXPECT_GT(above, 0);
    EXPECT_GT(below, 0);
}

TEST(PowerConstraint, SlackInWatts) {
    const int n = 4;
    const VecX pmax = VecX::Constant(3, 1.0);
    const Layout lay = layout_for(10);
    const auto cons = build_power_constraints(pmax, n, lay);
    ASSERT_EQ(cons.size(), 3u);
    auto zero = lift(BeamformingSolution::zeros(12, 10));
    for (const auto& c : cons) EXPECT_NEAR(-c.lhs.eval(zero, VecX()) * 1.0, 1.0, 1e-15);
    BeamformingSolution full = BeamformingSolution::zeros(12, 10);
    for (auto& w : full.w)
        for (int s = 0; s < 3; ++s) w(s * n) = std::sqrt(0.1);
    const auto x = lift(full);
    for (const auto& c : cons) EXPECT_NEAR(c.lhs.eval(x, VecX()), 0.0, 1e-9);
}

TEST(Penalty, TermsAndInequality) {
    const CVec v = CVec::Unit(2, 0);
    EXPECT_NEAR(penalty_value({CMat::Identity(2, 2)}, {v}), 1.0, 1e-15);
    Rng rng = make_rng(5, {});
    const CVec w = testing_scenes::random_cvec(5, rng);
    EXPECT_NEAR(penalty_value({w * w.adjoint()}, {w.normalized()}), 0.0, 1e-12);
    EXPECT_NEAR(penalty_residual({w * w.adjoint()}), 0.0, 1e-12 * w.squaredNorm());
    for (int t = 0; t < 30; ++t) {
        const CMat x = testing_scenes::random_psd(5, 3, rng);
        const CVec u = testing_scenes::random_cvec(5, rng).normalized();
        const double lin = penalty_value({x}, {u});
        const double res = penalty_residual({x});
        EXPECT_GE(lin, res - 1e-10 * x.norm());
        EXPECT_GE(res, -1e-9);
    }
    const CMat pc = penalty_cost(v, 3.0);
    EXPECT_NEAR((pc * CMat::Identity(2, 2)).trace().real(), 3.0, 1e-15);
}

TEST(Extraction, DominantEigenpairIsDeterministic) {
    Rng rng = make_rng(6, {});
    const CVec w = testing_scenes::random_cvec(4, rng);
    const auto [lam, v] = dominant_eigenpair(w * w.adjoint());
    EXPECT_NEAR(lam, w.squaredNorm(), 1e-12);
    EXPECT_GE(v(0).real(), 0.0);
    EXPECT_NEAR(v(0).imag(), 0.0, 1e-15);
    const auto sol = extract_rank_one({w * w.adjoint(), CMat::Zero(4, 4)}, 1);
    EXPECT_NEAR(std::abs(sol.w[0].dot(w)), w.squaredNorm(), 1e-10);
    EXPECT_LT(sol.r.norm(), 1e-12);
    // Repeated top eigenvalue: identity picks e_1.
    const auto [l2, v2] = dominant_eigenpair(CMat::Identity(3, 3));
    EXPECT_NEAR(std::abs(v2(0)), 1.0, 1e-12);
    (void)l2;
}

TEST(Zfbf, MeetsRatesExactlyAndBudget) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto sc = testing_scenes::desk_scene(seed);
        const OptimizerConfig cfg;
        const auto zf = zfbf_baseline(sc, cfg);
        const VecX rates = ue_rates(zf, sc);
        for (int i = 0; i < sc.m(); ++i) EXPECT_NEAR(rates(i), 2.0, 1e-6);
        for (int k = 0; k < sc.k(); ++k) EXPECT_LE(transmit_power(zf, k, sc.n()), sc.p_max(k) * (1.0 + 1e-12));
        for (const auto& h : sc.h) EXPECT_LT(std::abs(zf.r.dot(h)), 1e-9 * zf.r.norm() * h.norm());
        for (int i = 0; i < sc.m(); ++i)
            for (int j = 0; j < sc.m(); ++j)
                if (i != j) {
                    EXPECT_LT(std::abs(zf.w[i].dot(sc.h[j])), 1e-9 * zf.w[i].norm() * sc.h[j].norm());
                }
    }
}

TEST(Zfbf, SingleUeSingleSatelliteIsMatchedFilter) {
    const auto sc = testing_scenes::desk_scene(4, 1, 2, 1);
    const auto zf = zfbf_baseline(sc, OptimizerConfig{});
    const CVec& h = sc.h[0];
    EXPECT_NEAR(std::abs(zf.w[0].normalized().dot(h.normalized())), 1.0, 1e-12);
}

TEST(Zfbf, InfeasibleWhenTooManyUes) {
    auto spec = testing_scenes::desk_spec(1, 1, 2);
    const auto sc = build_scene(spec, 1, 2);
    try {
        zfbf_baseline(sc, OptimizerConfig{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
    }
}

TEST(Alg2, ConvergesOnDeskScene) {
    const auto& d = desk_run(7);
    const auto& r = d.alg2;
    ASSERT_FALSE(r.objective_trace.empty());
    EXPECT_LE(r.iterations, 20);
    EXPECT_LE(r.penalty_residual, 1e-4);
    EXPECT_TRUE(r.converged);
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
        EXPECT_LE(r.objective_trace[i], r.objective_trace[i - 1] + 10.0 * 1e-8 * std::max(1.0, std::abs(r.objective_trace[i - 1])));
}

TEST(Alg2, ExtractedSolutionIsFeasible) {
    for (std::uint64_t seed : {7u, 8u}) {
        const auto& d = desk_run(seed);
        for (int k = 0; k < d.sc.k(); ++k) EXPECT_LE(transmit_power(d.alg2.solution, k, d.sc.n()), d.sc.p_max(k) + 1e-6);
        const VecX rates = ue_rates(d.alg2.solution, d.sc);
        for (int i = 0; i < d.sc.m(); ++i) EXPECT_GE(rates(i), 2.0 - 0.05);
    }
}

TEST(Alg2, NoWorseThanZeroForcing) {
    for (std::uint64_t seed : {7u, 8u}) {
        const auto& d = desk_run(seed);
        EXPECT_LE(crb::evaluate(d.sc, d.alg2.solution).rcrb_m(), crb::evaluate(d.sc, d.zf).rcrb_m());
    }
}

TEST(Alg2, SensingOnlyBoundsTheIsacDesign) {
    const auto& d = desk_run(7);
    auto spec = testing_scenes::desk_spec(3, 2, 0);
    const auto sc0 = build_scene(spec, derive_seed(7, {1}), derive_seed(7, {2}));
    ASSERT_EQ(sc0.target, d.sc.target);
    const auto r0 = optimize(sc0, OptimizerConfig{});
    EXPECT_LT(crb::evaluate(sc0, r0.solution).rcrb_m(), crb::evaluate(d.sc, d.alg2.solution).rcrb_m());
}

TEST(Alg2, HigherRateTargetsCostAccuracy) {
    const auto sc = testing_scenes::desk_scene(9);
    OptimizerConfig lo, hi;
    lo.eta = 1.0;
    hi.eta = 3.0;
    const double a = crb::evaluate(sc, optimize(sc, lo).solution).rcrb_m();
    const double b = crb::evaluate(sc, optimize(sc, hi).solution).rcrb_m();
    EXPECT_LE(a, b * (1.0 + 1e-3));
}

TEST(CommCentric, DominatesZeroForcingMinRate) {
    const auto sc = testing_scenes::desk_scene(10);
    OptimizerConfig cfg;
    cfg.mode = Mode::CommCentric;
    const auto r = optimize(sc, cfg);
    const auto zf = zfbf_baseline(sc, cfg);
    const double zf_min = ue_rates(zf, sc).minCoeff();
    EXPECT_GE(ue_rates(r.solution, sc).minCoeff(), zf_min - 0.05);
    for (int k = 0; k < sc.k(); ++k) EXPECT_LE(transmit_power(r.solution, k, sc.n()), sc.p_max(k) + 1e-6);
}

TEST(CommCentric, TighterCrbNeverRaisesRate) {
    const auto sc = testing_scenes::desk_scene(11);
    const auto zf = zfbf_baseline(sc, OptimizerConfig{});
    const double crb_zf = crb::evaluate(sc, zf).trace_km2;
    std::vector<double> ups;
    // Half the ZF bound is below what this scene can reach at any rate.
    for (double f : {4.0, 1.0, 0.8}) {
        OptimizerConfig cfg;
        cfg.mode = Mode::CommCentric;
        cfg.eta_crb = f * crb_zf;
        ups.push_back(optimize(sc, cfg).upsilon);
    }
    EXPECT_GE(ups[0], ups[1] - 1e-3);
    EXPECT_GE(ups[1], ups[2] - 1e-3);
}

TEST(CommCentric, UnreachableCrbTargetIsInfeasible) {
    const auto sc = testing_scenes::desk_scene(11);
    OptimizerConfig cfg;
    cfg.mode = Mode::CommCentric;
    cfg.eta_crb = 0.5 * crb::evaluate(sc, zfbf_baseline(sc, cfg)).trace_km2;
    try {
        optimize(sc, cfg);
        ADD_FAILURE() << "expected an infeasible report";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
    }
}

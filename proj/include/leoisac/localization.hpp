// SPDX-License-Identifier: Apache-2.0
//
// leoisac: cooperative communication and location sensing for LEO constellations
// ------------------------------------------------------------------------
//
// Direct position determination: closed-form alpha MLE, the matched-filter
// fitness, particle swarm search with linearly decreasing inertia, and an
// exhaustive lattice search used as its oracle.
#pragma once

#include <limits>
#include <vector>

#include "leoisac/core.hpp"
#include "leoisac/scene.hpp"
#include "leoisac/signal_model.hpp"

namespace leoisac::localization {

struct SearchBox {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();

    static SearchBox cube(const Vec3& center, double side_km) {
        const Vec3 h = Vec3::Constant(side_km / 2.0);
        return {center - h, center + h};
    }
    Vec3 extent() const { return hi - lo; }
    bool valid() const { return (hi.array() >= lo.array()).all() && lo.allFinite() && hi.allFinite(); }
    Vec3 clamp(const Vec3& p) const { return p.cwiseMax(lo).cwiseMin(hi); }
};

/// Everything the estimator knows: receivers, array, gains and the transmitted stack x = V s + r.
struct Problem {
    std::vector<Vec3> sats;
    channel::ArrayGeometry array;
    CMat beta;
    CVec x;
    CVec y;

    static Problem from_scene(const SceneSnapshot& sc, const BeamformingSolution& sol, const CVec& s, const CVec& y) {
        return {sc.sats, sc.array, sc.gains.beta, transmit_stack(sol, s), y};
    }

    /// z(p) = (A(p) (.) B) x.
    CVec model(const Vec3& p) const {
        const auto s = channel::SteeringStack::build(geometry::target_angles(sats, p), array);
        return apply_ab(s, beta, x);
    }
};

/// alpha_hat = z^H y / ||z||^2.
inline cd alpha_mle(const Problem& pr, const Vec3& p) {
    const CVec z = pr.model(p);
    const double den = z.squaredNorm();
    if (!(den > 0.0)) fail(ErrorKind::Signal, "zero matched-filter energy");
    return z.dot(pr.y) / den;
}

/// F(p) = |z^H y|^2 / ||z||^2.
inline double fitness(const Problem& pr, const Vec3& p) {
    const CVec z = pr.model(p);
    const double den = z.squaredNorm();
    if (!(den > 0.0)) fail(ErrorKind::Signal, "zero matched-filter energy");
    return std::norm(z.dot(pr.y)) / den;
}

struct PsoConfig {
    int num_particles = 50;   // I_p
    int max_iters = 40;       // N_p
    double c1 = 1.5;
    double c2 = 1.5;
    double w_max = 0.8;
    double w_min = 0.4;
    double velocity_clamp = 0.2;  // fraction of box extent per axis
    bool frozen_coefficients = false;
    SearchBox box;

    void validate() const {
        if (num_particles < 1) fail(ErrorKind::Config, "num_particles must be >= 1");
        if (max_iters < 0) fail(ErrorKind::Config, "max_iters must be >= 0");
        if (!(w_min >= 0.0 && w_min <= w_max)) fail(ErrorKind::Config, "inertia must satisfy 0 <= w_min <= w_max");
        if (c1 < 0.0 || c2 < 0.0) fail(ErrorKind::Config, "learning factors must be >= 0");
        if (!box.valid()) fail(ErrorKind::Config, "empty search box");
    }
};

struct LocalizationResult {
    Vec3 p_hat = Vec3::Zero();
    double fitness = 0.0;
    cd alpha_hat = 0.0;
    int iterations = 0;
    std::vector<double> fitness_trace;  // global best after each round
};

/// Inertia after iteration n of n_total.
inline double ldw_inertia(double w_max, double w_min, int n, int n_total) {
    if (n_total <= 0) return w_max;
    return w_max - (w_max - w_min) * static_cast<double>(n) / n_total;
}

inline LocalizationResult pso_locate(const Problem& pr, const PsoConfig& cfg, Rng& rng) {
    cfg.validate();
    const int np = cfg.num_particles;
    const Vec3 ext = cfg.box.extent();
    const Vec3 vmax = cfg.velocity_clamp * ext;
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    std::vector<Vec3> pos(static_cast<std::size_t>(np)), vel(static_cast<std::size_t>(np), Vec3::Zero());
    for (auto& p : pos)
        for (int a = 0; a < 3; ++a) p(a) = cfg.box.lo(a) + u01(rng) * ext(a);

    std::vector<Vec3> pbest = pos;
    std::vector<double> pbest_f(static_cast<std::size_t>(np), -std::numeric_limits<double>::infinity());
    Vec3 gbest = pos.front();
    double gbest_f = -std::numeric_limits<double>::infinity();

    double r1 = u01(rng), r2 = u01(rng);
    LocalizationResult res;

    auto evaluate = [&]() {
        for (int i = 0; i < np; ++i) {
            const auto iu = static_cast<std::size_t>(i);
            const double f = fitness(pr, pos[iu]);
            if (f > pbest_f[iu]) {
                pbest_f[iu] = f;
                pbest[iu] = pos[iu];
            }
        }
        // Lowest index wins ties.
        for (int i = 0; i < np; ++i) {
            const auto iu = static_cast<std::size_t>(i);
            if (pbest_f[iu] > gbest_f) {
                gbest_f = pbest_f[iu];
                gbest = pbest[iu];
            }
        }
        res.fitness_trace.push_back(gbest_f);
    };

    evaluate();
    double w = cfg.w_max;
    for (int n = 1; n <= cfg.max_iters; ++n) {
        for (int i = 0; i < np; ++i) {
            const auto iu = static_cast<std::size_t>(i);
            if (!cfg.frozen_coefficients) {
                r1 = u01(rng);
                r2 = u01(rng);
            }
            Vec3 v = w * vel[iu] + cfg.c1 * r1 * (pbest[iu] - pos[iu]) + cfg.c2 * r2 * (gbest - pos[iu]);
            v = v.cwiseMax(-vmax).cwiseMin(vmax);
            Vec3 p = pos[iu] + v;
            for (int a = 0; a < 3; ++a) {
                if (p(a) < cfg.box.lo(a) || p(a) > cfg.box.hi(a)) {
                    p(a) = std::clamp(p(a), cfg.box.lo(a), cfg.box.hi(a));
                    v(a) = 0.0;
                }
            }
            pos[iu] = p;
            vel[iu] = v;
        }
        evaluate();
        w = ldw_inertia(cfg.w_max, cfg.w_min, n, cfg.max_iters);
        res.iterations = n;
    }

    res.p_hat = gbest;
    res.fitness = gbest_f;
    res.alpha_hat = alpha_mle(pr, gbest);
    return res;
}

inline constexpr double kMaxGridPoints = 1e8;

inline LocalizationResult grid_search_locate(const Problem& pr, const SearchBox& box, double resolution_km) {
    if (!box.valid()) fail(ErrorKind::Config, "empty search box");
    if (!(resolution_km > 0.0)) fail(ErrorKind::Parameter, "grid resolution must be > 0");
    std::array<long, 3> counts{};
    double total = 1.0;
    for (int a = 0; a < 3; ++a) {
        counts[static_cast<std::size_t>(a)] = static_cast<long>(std::floor(box.extent()(a) / resolution_km + 1e-9)) + 1;
        total *= static_cast<double>(counts[static_cast<std::size_t>(a)]);
    }
    if (total > kMaxGridPoints) fail(ErrorKind::Resource, "grid search lattice exceeds 1e8 points");

    LocalizationResult res;
    res.fitness = -std::numeric_limits<double>::infinity();
    for (long i = 0; i < counts[0]; ++i)
        for (long j = 0; j < counts[1]; ++j)
            for (long k = 0; k < counts[2]; ++k) {
                const Vec3 p = box.lo + resolution_km * Vec3(static_cast<double>(i), static_cast<double>(j),
                                                              static_cast<double>(k));
                const double f = fitness(pr, p);
                if (f > res.fitness) {
                    res.fitness = f;
                    res.p_hat = p;
                }
            }
    res.iterations = 1;
    res.fitness_trace.push_back(res.fitness);
    res.alpha_hat = alpha_mle(pr, res.p_hat);
    return res;
}

inline double rmse(const std::vector<Vec3>& est, const std::vector<Vec3>& truth) {
    if (est.empty() || est.size() != truth.size()) fail(ErrorKind::Parameter, "rmse needs equal non-empty lists");
    double acc = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) acc += (est[i] - truth[i]).squaredNorm();
    return std::sqrt(acc / static_cast<double>(est.size()));
}

}  // namespace leoisac::localization

// SPDX-License-Identifier: Apache-2.0
//
// leoisac: cooperative communication and location sensing for LEO constellations
// ------------------------------------------------------------------------
//
// Joint communication beamforming and sensing waveform design.
//
// The lifted problem works on W_1..W_M and R (Hermitian PSD, NK x NK). The
// position CRB enters through a 4x4 Schur LMI on U <= J^T F_Omega J and a
// second LMI [[T, I], [I, U]] >= 0 so that tr(T) bounds tr(U^-1). Rate
// constraints are difference-of-logs with the concave part linearized at an
// anchor, and rank one is recovered with a linearized exterior penalty
// rho * (tr X - v^H X v) whose weight grows until the residual is small.
//
// Internally the CRB is normalized by its value at the starting point. The
// penalty weight is rho per watt against the CRB in m^2 (crb_unit_scale).
#pragma once

#include <array>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "leoisac/conic.hpp"
#include "leoisac/core.hpp"
#include "leoisac/crb.hpp"
#include "leoisac/scene.hpp"
#include "leoisac/signal_model.hpp"

namespace leoisac::beamform {

using conic::CoefPtr;
using conic::LinearForm;
using conic::LowRankHermitian;

enum class Mode { SensingCentric, CommCentric };

inline Mode parse_mode(const std::string& s) {
    if (s == "sensing" || s == "sensing_centric") return Mode::SensingCentric;
    if (s == "comm" || s == "comm_centric") return Mode::CommCentric;
    fail(ErrorKind::Config, "unknown optimizer mode '" + s + "'");
}

struct OptimizerConfig {
    double eta = 2.0;          // required rate, bit/s/Hz, shared by all UEs
    VecX eta_per_ue;           // optional override, one entry per UE
    double rho0 = 10.0;
    double iota = 1.5;
    double delta = 1e-4;
    int max_outer_iters = 20;
    double solver_tol = 1e-8;
    double convergence_tol = 1e-3;  // relative Frobenius change between outer iterations
    Mode mode = Mode::SensingCentric;
    double eta_crb = std::numeric_limits<double>::infinity();  // km^2, comm-centric only
    double t_bound = 1e6;
    // Unit of the CRB term when it is weighed against the penalty (watts).
    double crb_unit_scale = 1e6;  // km^2 -> m^2

    void validate() const {
        if (!(rho0 > 0.0)) fail(ErrorKind::Config, "rho0 must be > 0");
        if (!(iota > 1.0)) fail(ErrorKind::Config, "iota must be > 1");
        if (!(delta > 0.0)) fail(ErrorKind::Config, "delta must be > 0");
        if (eta < 0.0) fail(ErrorKind::Config, "eta must be >= 0");
        if (max_outer_iters < 1) fail(ErrorKind::Config, "max_outer_iters must be >= 1");
        if (!(solver_tol > 0.0)) fail(ErrorKind::Config, "solver_tol must be > 0");
        if (!(eta_crb > 0.0)) fail(ErrorKind::Config, "eta_crb must be > 0");
        if (!(crb_unit_scale > 0.0)) fail(ErrorKind::Config, "crb_unit_scale must be > 0");
    }

    double eta_of(int i) const { return eta_per_ue.size() > i ? eta_per_ue(i) : eta; }

    conic::Settings solver_settings() const {
        conic::Settings s;
        s.abs_tol = solver_tol;
        s.rel_tol = solver_tol;
        // The subproblems are badly scaled near the rate boundary; short barrier
        // steps with long line searches take the fewest Newton iterations.
        s.mu = 3.0;
        s.max_extrapolation = 10;
        s.stall_gap = 1e-5;
        return s;
    }
};

// ---------------------------------------------------------------------------
// FIM as linear maps of the transmit covariance S = R + sum_m W_m

struct FimValues {
    Eigen::Matrix3d jfj = Eigen::Matrix3d::Zero();  // J^T F_OO J
    Eigen::Vector3d jfa = Eigen::Vector3d::Zero();  // J^T F_Oa
    double faa = 0.0;

    Eigen::Matrix3d fp() const { return jfj - jfa * jfa.transpose() / faa; }
};

/// Coefficients C with <C, S> equal to each FIM entry, projected on position by J.
struct FimMaps {
    std::array<std::array<CoefPtr, 3>, 3> jfj;
    std::array<CoefPtr, 3> jfa;
    CoefPtr faa;
    CMat trace_map;  // Hermitian map of tr(J^T F_OO J), dense

    FimValues eval(const CMat& s) const {
        FimValues v;
        for (int a = 0; a < 3; ++a) {
            for (int b = a; b < 3; ++b) v.jfj(a, b) = v.jfj(b, a) = jfj[a][b]->apply(s);
            v.jfa(a) = jfa[a]->apply(s);
        }
        v.faa = faa->apply(s);
        return v;
    }
};

inline FimMaps assemble_fim_linear_maps(const SceneSnapshot& sc, double alpha, double sigma2) {
    const auto d = crb::weighted_derivatives(sc);
    const MatX j = geometry::angle_jacobian(sc.sats, sc.target);
    const CMat xt = sc.ab();
    const double c = 2.0 / sigma2;
    const int nk = sc.nk();

    std::array<CMat, 3> e;
    for (int a = 0; a < 3; ++a) {
        e[a] = CMat::Zero(nk, nk);
        for (std::size_t i = 0; i < d.size(); ++i) e[a] += j(static_cast<Eigen::Index>(i), a) * d[i];
    }
    FimMaps m;
    m.trace_map = CMat::Zero(nk, nk);
    for (int a = 0; a < 3; ++a) {
        for (int b = a; b < 3; ++b) {
            const CMat q = c * alpha * alpha * hermitian_part(e[a].adjoint() * e[b]);
            m.jfj[a][b] = m.jfj[b][a] = LowRankHermitian::from_dense(q);
            if (a == b) m.trace_map += q;
        }
        m.jfa[a] = LowRankHermitian::from_dense(c * alpha * hermitian_part(e[a].adjoint() * xt));
    }
    m.faa = LowRankHermitian::from_dense(c * hermitian_part(xt.adjoint() * xt));
    return m;
}

/// Full (2K+1)-dimensional maps, F_Xi entries as <C, S>. Used to cross-check the closed form.
struct OmegaMaps {
    int k2 = 0;
    std::vector<CMat> oo;  // k2 x k2, row-major
    std::vector<CMat> oa;
    CMat aa;

    MatX eval_xi(const CMat& s) const {
        MatX f(k2 + 1, k2 + 1);
        for (int i = 0; i < k2; ++i) {
            for (int j = 0; j < k2; ++j) f(i, j) = (oo[static_cast<std::size_t>(i * k2 + j)] * s).trace().real();
            f(i, k2) = f(k2, i) = (oa[static_cast<std::size_t>(i)] * s).trace().real();
        }
        f(k2, k2) = (aa * s).trace().real();
        return f;
    }
};

inline OmegaMaps assemble_omega_maps(const SceneSnapshot& sc, double alpha, double sigma2) {
    const auto d = crb::weighted_derivatives(sc);
    const CMat xt = sc.ab();
    const double c = 2.0 / sigma2;
    OmegaMaps m;
    m.k2 = static_cast<int>(d.size());
    for (const auto& di : d)
        for (const auto& dj : d) m.oo.push_back(c * alpha * alpha * hermitian_part(di.adjoint() * dj));
    for (const auto& di : d) m.oa.push_back(c * alpha * hermitian_part(di.adjoint() * xt));
    m.aa = c * hermitian_part(xt.adjoint() * xt);
    return m;
}

// ---------------------------------------------------------------------------
// Problem pieces

/// Where the lifted variables live inside the conic problem.
struct Layout {
    int m = 0;                 // number of W blocks, block M is R
    int u0 = -1;               // first of 6 packed entries of U'
    int t0 = -1;               // first of 6 packed entries of T'
    int upsilon = -1;          // rate epigraph variable (comm-centric)
    int num_blocks() const { return m + 1; }
    int r_block() const { return m; }
    static int packed3(int a, int b) { return conic::LmiConstraint::packed_index(3, a, b); }
};

/// Normalization of the CRB part: U = s_u U' with s_u = 1 / crb0 and the alpha row scaled by s_alpha.
struct CrbScaling {
    double crb0 = 1.0;     // km^2
    double s_alpha = 1.0;
    double s_u() const { return 1.0 / crb0; }
};

inline LinearForm sum_over_blocks(const CoefPtr& c, int num_blocks) {
    LinearForm f;
    for (int b = 0; b < num_blocks; ++b) f.add_block(b, c);
    return f;
}

inline CoefPtr scaled(const CoefPtr& c, double s) {
    auto out = std::make_shared<LowRankHermitian>(*c);
    out->sigma *= s;
    return out;
}

/// [[J^T F_OO J / s_u - U', J^T F_Oa / sqrt(s_u s_a)], [., F_aa / s_a]] >= 0.
inline conic::LmiConstraint build_schur_lmi(const FimMaps& maps, const CrbScaling& sc, const Layout& lay) {
    conic::LmiConstraint l(4);
    const int nb = lay.num_blocks();
    const double su = sc.s_u();
    for (int a = 0; a < 3; ++a) {
        for (int b = a; b < 3; ++b) {
            l.at(a, b) = sum_over_blocks(scaled(maps.jfj[a][b], 1.0 / su), nb);
            l.at(a, b).add_z(lay.u0 + Layout::packed3(a, b), -1.0);
        }
        l.at(a, 3) = sum_over_blocks(scaled(maps.jfa[a], 1.0 / std::sqrt(su * sc.s_alpha)), nb);
    }
    l.at(3, 3) = sum_over_blocks(scaled(maps.faa, 1.0 / sc.s_alpha), nb);
    return l;
}

/// [[T', I], [I, U']] >= 0.
inline conic::LmiConstraint build_inverse_lmi(const Layout& lay) {
    conic::LmiConstraint l(6);
    for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b) {
            l.at(a, b).add_z(lay.t0 + Layout::packed3(a, b), 1.0);
            l.at(3 + a, 3 + b).add_z(lay.u0 + Layout::packed3(a, b), 1.0);
        }
    for (int a = 0; a < 3; ++a) l.at(a, 3 + a).add_constant(1.0);
    return l;
}

/// Interference power at UE i: sum_{m != i} tr(W_m H_i) + tr(R H_i).
inline double interference(const std::vector<CMat>& x, const CVec& h, int i, int m) {
    double v = 0.0;
    for (int b = 0; b <= m; ++b)
        if (b != i) v += h.dot(x[static_cast<std::size_t>(b)] * h).real();
    return v;
}

/// Rate constraint for UE i, normalized by c = I# + sigma^2:
///   rate_term + (I(X) - I#) / c <= log((tr(S H_i) + sigma^2) / c)
/// where rate_term is eta ln2 (sensing-centric) or Upsilon ln2 (comm-centric).
inline conic::LogHypoConstraint build_rate_constraint(const CVec& h, int i, double sigma2, double eta,
                                                      const std::vector<CMat>& anchor, const Layout& lay) {
    const double i_anchor = interference(anchor, h, i, lay.m);
    if (!(i_anchor + sigma2 > 0.0)) fail(ErrorKind::Numerical, "non-positive log argument at the anchor");
    const double c = i_anchor + sigma2;
    const CoefPtr hh = LowRankHermitian::outer(h, 1.0 / c);
    conic::LogHypoConstraint r;
    for (int b = 0; b < lay.num_blocks(); ++b) {
        r.s.add_block(b, hh);
        if (b != i) r.t.add_block(b, hh);
    }
    r.s.add_constant(sigma2 / c);
    r.t.add_constant(-i_anchor / c);
    if (lay.upsilon >= 0) r.t.add_z(lay.upsilon, std::log(2.0));
    else r.t.add_constant(eta * std::log(2.0));
    return r;
}

/// tr(Lambda_k S) / P_k - 1 <= 0 for each satellite.
inline std::vector<conic::LinearConstraint> build_power_constraints(const VecX& p_max, int n, const Layout& lay) {
    std::vector<conic::LinearConstraint> out;
    const int nk = n * static_cast<int>(p_max.size());
    for (Eigen::Index k = 0; k < p_max.size(); ++k) {
        const CoefPtr sel = LowRankHermitian::selector(nk, static_cast<int>(k) * n, n, 1.0 / p_max(k));
        conic::LinearConstraint c{sum_over_blocks(sel, lay.num_blocks())};
        c.lhs.add_constant(-1.0);
        out.push_back(c);
    }
    return out;
}

/// Dense cost weight * (I - v v^H) for one block.
inline CMat penalty_cost(const CVec& v, double weight) {
    const auto n = v.size();
    return weight * (CMat::Identity(n, n) - v * v.adjoint());
}

/// sum_b (tr X_b - v_b^H X_b v_b), the linearized rank-one penalty.
inline double penalty_value(const std::vector<CMat>& x, const std::vector<CVec>& v) {
    double s = 0.0;
    for (std::size_t b = 0; b < x.size(); ++b) s += x[b].trace().real() - v[b].dot(x[b] * v[b]).real();
    return s;
}

/// sum_b (tr X_b - lambda_max X_b).
inline double penalty_residual(const std::vector<CMat>& x) {
    double s = 0.0;
    for (const auto& xb : x) {
        Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(xb));
        s += xb.trace().real() - es.eigenvalues().maxCoeff();
    }
    return s;
}

/// Dominant eigenpair. Among (numerically) repeated top eigenvalues, the vector
/// with the largest-magnitude first entry wins; it is rotated so that entry is real >= 0.
inline std::pair<double, CVec> dominant_eigenpair(const CMat& x) {
    Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(x));
    const auto n = x.rows();
    const double top = es.eigenvalues()(n - 1);
    const double tie = 1e-10 * std::max(std::abs(top), 1e-300);
    Eigen::Index best = n - 1;
    for (Eigen::Index i = n - 1; i >= 0; --i) {
        if (top - es.eigenvalues()(i) > tie) break;
        if (std::abs(es.eigenvectors()(0, i)) > std::abs(es.eigenvectors()(0, best)) + 1e-12) best = i;
    }
    CVec v = es.eigenvectors().col(best);
    if (std::abs(v(0)) > 0.0) v *= std::conj(v(0)) / std::abs(v(0));
    return {top, v};
}

/// w = sqrt(lambda_max) v for every block.
inline BeamformingSolution extract_rank_one(const std::vector<CMat>& x, int m) {
    BeamformingSolution sol;
    for (int b = 0; b <= m; ++b) {
        const auto [lam, v] = dominant_eigenpair(x[static_cast<std::size_t>(b)]);
        const CVec w = std::sqrt(std::max(lam, 0.0)) * v;
        if (b < m) sol.w.push_back(w);
        else sol.r = w;
    }
    return sol;
}

inline std::vector<CMat> lift(const BeamformingSolution& sol) {
    auto x = sol.lifted_w();
    x.push_back(sol.lifted_r());
    return x;
}

// ---------------------------------------------------------------------------
// Baseline

/// Zero-forcing beams meeting each rate target exactly, remaining budget on a
/// sensing waveform in the null space of all UE channels.
inline BeamformingSolution zfbf_baseline(const SceneSnapshot& sc, const OptimizerConfig& cfg) {
    const int nk = sc.nk(), m = sc.m(), n = sc.n();
    BeamformingSolution sol = BeamformingSolution::zeros(nk, m);
    CMat proj = CMat::Identity(nk, nk);
    if (m > 0) {
        if (nk < m) fail(ErrorKind::Infeasible, "zero forcing needs NK >= M");
        CMat h(nk, m);
        for (int i = 0; i < m; ++i) h.col(i) = sc.h[static_cast<std::size_t>(i)];
        const CMat gram = h.adjoint() * h;
        Eigen::FullPivLU<CMat> lu(gram);
        if (lu.rank() < m) fail(ErrorKind::Infeasible, "UE channel matrix is rank deficient");
        const CMat f = h * lu.inverse();
        for (int i = 0; i < m; ++i) {
            const double p = (std::pow(2.0, cfg.eta_of(i)) - 1.0) * sc.sigma_ue2(i);
            sol.w[static_cast<std::size_t>(i)] = std::sqrt(p) * f.col(i);
        }
        proj -= h * lu.inverse() * h.adjoint();
    }
    VecX residual = sc.p_max;
    for (int k = 0; k < sc.k(); ++k)
        for (const auto& w : sol.w) residual(k) -= block_energy(w, k, n);
    if ((residual.array() < 0.0).any()) fail(ErrorKind::Infeasible, "rate targets exceed the power budget under zero forcing");

    const FimMaps maps = assemble_fim_linear_maps(sc, sc.alpha, sc.sigma_n2);
    const CMat q = hermitian_part(proj * maps.trace_map * proj);
    const auto [lam, v] = dominant_eigenpair(q);
    const CVec dir = proj * v;
    double c2 = std::numeric_limits<double>::infinity();
    for (int k = 0; k < sc.k(); ++k) {
        const double e = block_energy(dir, k, n);
        if (e > 0.0) c2 = std::min(c2, residual(k) / e);
    }
    if (!std::isfinite(c2)) c2 = 0.0;
    sol.r = std::sqrt(c2) * dir;
    return sol;
}

// ---------------------------------------------------------------------------
// Outer loop

struct OptimizeResult {
    BeamformingSolution solution;
    std::vector<CMat> lifted;
    std::vector<double> objective_trace;  // optimal value of each subproblem (normalized)
    std::vector<double> residual_trace;   // penalty residual / P_ref after each subproblem
    std::vector<double> rcrb_trace_m;     // RCRB of the extracted iterate
    std::vector<double> rho_trace;
    std::vector<double> change_trace;     // relative Frobenius change of (W, R) against the anchor
    int iterations = 0;
    bool converged = false;
    double penalty_residual = 0.0;        // normalized by P_ref
    double upsilon = 0.0;                 // comm-centric epigraph value, bit/s/Hz
    double crb0_km2 = 0.0;
    int newton_steps = 0;
    std::vector<std::string> warnings;
};

namespace detail {

struct Subproblem {
    conic::Problem prob;
    Layout lay;
};

inline Subproblem build_subproblem(const SceneSnapshot& sc, const OptimizerConfig& cfg, const FimMaps& maps,
                                   const CrbScaling& scale, const std::vector<CMat>& anchor,
                                   const std::vector<CVec>& eigvecs, double rho, bool with_crb) {
    Subproblem s;
    auto& p = s.prob;
    s.lay.m = sc.m();
    for (int b = 0; b < s.lay.num_blocks(); ++b) p.add_block(sc.nk());
    if (with_crb) {
        s.lay.u0 = p.add_z(6);
        s.lay.t0 = p.add_z(6);
    }
    if (cfg.mode == Mode::CommCentric) s.lay.upsilon = p.add_z(1);

    // The CRB term is tr(T') = CRB / crb0, so the penalty weight is divided by crb0 in the chosen unit.
    const double weight = cfg.mode == Mode::SensingCentric ? rho / (scale.crb0 * cfg.crb_unit_scale) : rho;
    for (int b = 0; b < s.lay.num_blocks(); ++b)
        p.obj_blocks[static_cast<std::size_t>(b)] = penalty_cost(eigvecs[static_cast<std::size_t>(b)], weight);

    if (with_crb) {
        p.lmis.push_back(build_schur_lmi(maps, scale, s.lay));
        p.lmis.push_back(build_inverse_lmi(s.lay));
        LinearForm tr_t;
        for (int a = 0; a < 3; ++a) tr_t.add_z(s.lay.t0 + Layout::packed3(a, a), 1.0);
        if (cfg.mode == Mode::SensingCentric) {
            for (int a = 0; a < 3; ++a) p.obj_z(s.lay.t0 + Layout::packed3(a, a)) = 1.0;
            LinearForm bound = tr_t;
            for (auto& [i, a] : bound.z) a /= cfg.t_bound;
            p.linears.push_back({bound.add_constant(-1.0)});
        } else {
            // crb0 tr(T') <= eta_crb
            LinearForm bound = tr_t;
            for (auto& [i, a] : bound.z) a *= scale.crb0 / cfg.eta_crb;
            p.linears.push_back({bound.add_constant(-1.0)});
        }
    }
    if (cfg.mode == Mode::CommCentric) {
        p.obj_z(s.lay.upsilon) = -1.0;
        p.linears.push_back({LinearForm{}.add_z(s.lay.upsilon, -1.0).add_constant(-1.0)});  // Upsilon >= -1
    }
    for (int i = 0; i < sc.m(); ++i)
        p.loghypos.push_back(build_rate_constraint(sc.h[static_cast<std::size_t>(i)], i, sc.sigma_ue2(i),
                                                   cfg.eta_of(i), anchor, s.lay));
    for (auto& c : build_power_constraints(sc.p_max, sc.n(), s.lay)) p.linears.push_back(c);
    return s;
}

/// Interior start for the free variables given the block start.
inline VecX initial_z(const Subproblem& s, const FimMaps& maps, const CrbScaling& scale,
                      const std::vector<CMat>& x, const SceneSnapshot& sc) {
    VecX z = VecX::Zero(s.prob.nz);
    if (s.lay.u0 >= 0) {
        CMat total = CMat::Zero(sc.nk(), sc.nk());
        for (const auto& xb : x) total += xb;
        const FimValues v = maps.eval(total);
        Eigen::Matrix3d u = 0.5 * v.fp() * scale.crb0;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(u);
        if (!(es.eigenvalues().minCoeff() > 0.0)) u = 1e-6 * Eigen::Matrix3d::Identity();
        const Eigen::Matrix3d t = 2.0 * u.inverse();
        for (int a = 0; a < 3; ++a)
            for (int b = a; b < 3; ++b) {
                z(s.lay.u0 + Layout::packed3(a, b)) = u(a, b);
                z(s.lay.t0 + Layout::packed3(a, b)) = t(a, b);
            }
    }
    if (s.lay.upsilon >= 0) {
        double mn = std::numeric_limits<double>::infinity();
        for (int i = 0; i < sc.m(); ++i)
            mn = std::min(mn, ue_rate_lifted(x, x.back(), sc.h[static_cast<std::size_t>(i)], i, sc.sigma_ue2(i)));
        z(s.lay.upsilon) = std::isfinite(mn) ? std::max(mn - 0.5, -0.5) : 0.0;
    }
    return z;
}

inline double relative_change(const std::vector<CMat>& a, const std::vector<CMat>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]).squaredNorm();
        den += b[i].squaredNorm();
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

inline void raise_for_status(const conic::Result& r, const std::string& what) {
    switch (r.status) {
    case conic::Status::Infeasible: fail(ErrorKind::Infeasible, what + ": " + r.message);
    case conic::Status::Unbounded: fail(ErrorKind::Numerical, what + ": unbounded");
    default: fail(ErrorKind::Numerical, what + ": " + r.message);
    }
}

}  // namespace detail

/// Penalty/SCA outer loop shared by both modes, started from `start`.
inline constexpr double kWarmStartShrink = 1e-3;

inline OptimizeResult run_outer_loop(const SceneSnapshot& sc, const OptimizerConfig& cfg,
                                     const BeamformingSolution& start) {
    cfg.validate();
    OptimizeResult out;
    const bool with_crb = cfg.mode == Mode::SensingCentric || std::isfinite(cfg.eta_crb);
    const FimMaps maps = assemble_fim_linear_maps(sc, sc.alpha, sc.sigma_n2);
    const double p_ref = sc.p_max.mean();

    std::vector<CMat> anchor = lift(start);
    CrbScaling scale;
    {
        CMat total = CMat::Zero(sc.nk(), sc.nk());
        for (const auto& xb : anchor) total += xb;
        const FimValues v = maps.eval(total);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(v.fp());
        if (v.faa > 0.0 && es.eigenvalues().minCoeff() > 0.0) {
            scale.crb0 = v.fp().inverse().trace();
            scale.s_alpha = v.faa;
        } else if (with_crb) {
            out.warnings.push_back("starting point has a singular position FIM; unit CRB scaling used");
        }
    }
    out.crb0_km2 = scale.crb0;

    double rho = cfg.rho0;
    std::vector<CMat> best = anchor;
    for (int it = 0; it < cfg.max_outer_iters; ++it) {
        std::vector<CVec> eig;
        for (const auto& xb : anchor) eig.push_back(dominant_eigenpair(xb).second);
        auto sub = detail::build_subproblem(sc, cfg, maps, scale, anchor, eig, rho, with_crb);
        // The previous optimum sits on the boundary; start slightly inside it.
        std::vector<CMat> inner = anchor;
        for (auto& xb : inner) xb *= 1.0 - kWarmStartShrink;
        conic::Point x0{inner, detail::initial_z(sub, maps, scale, inner, sc)};
        const conic::Result r = conic::solve(sub.prob, x0, cfg.solver_settings());
        out.newton_steps += r.newton_steps;
        if (!r.ok()) {
            if (it == 0) detail::raise_for_status(r, "subproblem");
            out.warnings.push_back(std::string("subproblem stopped early: ") + r.message +
                                   "; returning the last accepted iterate");
            break;
        }
        const std::vector<CMat>& x = r.point.x;
        const double change = detail::relative_change(x, anchor);
        const double resid = penalty_residual(x) / p_ref;
        out.objective_trace.push_back(r.objective);
        out.residual_trace.push_back(resid);
        out.rho_trace.push_back(rho);
        out.change_trace.push_back(change);
        if (sub.lay.upsilon >= 0) out.upsilon = r.point.z(sub.lay.upsilon);
        try {
            out.rcrb_trace_m.push_back(crb::evaluate(sc, extract_rank_one(x, sc.m()), true).rcrb_m());
        } catch (const Error&) {
            out.rcrb_trace_m.push_back(std::numeric_limits<double>::infinity());
        }
        out.iterations = it + 1;
        best = x;
        anchor = x;
        out.penalty_residual = resid;
        if (resid > cfg.delta) {
            rho *= cfg.iota;
        } else if (change <= cfg.convergence_tol) {
            out.converged = true;
            break;
        }
    }
    if (!out.converged) out.warnings.push_back("outer loop did not converge within max_outer_iters");
    out.lifted = best;
    out.solution = extract_rank_one(best, sc.m());
    return out;
}

/// Comm-centric problem without the CRB constraint, from a small isotropic start.
inline OptimizeResult max_min_rate(const SceneSnapshot& sc, OptimizerConfig cfg) {
    cfg.mode = Mode::CommCentric;
    cfg.eta_crb = std::numeric_limits<double>::infinity();
    BeamformingSolution start = BeamformingSolution::zeros(sc.nk(), sc.m());
    const double p0 = 0.5 * sc.p_max.minCoeff() / static_cast<double>(std::max(1, sc.m() + 1));
    for (int i = 0; i < sc.m(); ++i) {
        const CVec& h = sc.h[static_cast<std::size_t>(i)];
        start.w[static_cast<std::size_t>(i)] = std::sqrt(p0 / sc.k()) * h / h.norm();
    }
    start.r = CVec::Constant(sc.nk(), std::sqrt(p0 / sc.nk()));
    return run_outer_loop(sc, cfg, start);
}

/// Starting point: zero forcing, or the max-min-rate solution when zero forcing fails.
inline BeamformingSolution initial_point(const SceneSnapshot& sc, const OptimizerConfig& cfg,
                                         std::vector<std::string>* warnings = nullptr) {
    try {
        return zfbf_baseline(sc, cfg);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Infeasible) throw;
        if (warnings) warnings->push_back(std::string("zero forcing unavailable (") + e.what() + "); max-min-rate start");
    }
    const auto mm = max_min_rate(sc, cfg);
    const VecX rates = ue_rates(mm.solution, sc);
    for (int i = 0; i < sc.m(); ++i)
        if (rates(i) < cfg.eta_of(i))
            fail(ErrorKind::Infeasible, "rate targets unattainable: best max-min rate " + std::to_string(rates.minCoeff()) +
                                            " bit/s/Hz under the power budget");
    return mm.solution;
}

inline OptimizeResult solve_sensing_centric(const SceneSnapshot& sc, OptimizerConfig cfg) {
    cfg.mode = Mode::SensingCentric;
    OptimizeResult res;
    std::vector<std::string> w;
    const auto start = initial_point(sc, cfg, &w);
    res = run_outer_loop(sc, cfg, start);
    res.warnings.insert(res.warnings.begin(), w.begin(), w.end());
    return res;
}

inline OptimizeResult solve_comm_centric(const SceneSnapshot& sc, OptimizerConfig cfg) {
    cfg.mode = Mode::CommCentric;
    BeamformingSolution start;
    std::vector<std::string> w;
    try {
        start = zfbf_baseline(sc, cfg);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Infeasible) throw;
        w.push_back(std::string("zero forcing unavailable (") + e.what() + ")");
        OptimizerConfig c0 = cfg;
        c0.eta = 0.0;
        c0.eta_per_ue.resize(0);
        start = zfbf_baseline(sc, c0);
    }
    // The rate constraints are linearized around the anchor, so a start far outside
    // the CRB target can leave the first subproblem empty. Start from the
    // sensing-centric design instead; if even that misses the target, give up.
    if (std::isfinite(cfg.eta_crb) && crb::evaluate(sc, start).trace_km2 > cfg.eta_crb) {
        const auto sens = solve_sensing_centric(sc, cfg);
        const double best = crb::evaluate(sc, sens.solution).trace_km2;
        if (best > cfg.eta_crb)
            fail(ErrorKind::Infeasible, "CRB target " + std::to_string(cfg.eta_crb) +
                                            " km^2 below the sensing-centric optimum at the rate targets, " + std::to_string(best) + " km^2");
        w.push_back("zero forcing misses the CRB target; sensing-centric start");
        start = sens.solution;
    }
    auto res = run_outer_loop(sc, cfg, start);
    res.warnings.insert(res.warnings.begin(), w.begin(), w.end());
    return res;
}

inline OptimizeResult optimize(const SceneSnapshot& sc, const OptimizerConfig& cfg) {
    return cfg.mode == Mode::SensingCentric ? solve_sensing_centric(sc, cfg) : solve_comm_centric(sc, cfg);
}

}  // namespace leoisac::beamform

// SPDX-License-Identifier: Apache-2.0
//
// leoisac: cooperative communication and location sensing for LEO constellations
// ------------------------------------------------------------------------
//
// Fisher information for the angle vector Omega = [theta; phi] and the real
// reflection coefficient alpha, nuisance reduction, and the position CRB
// through the angle Jacobian. Positions are in km, so the CRB trace is km^2.
#pragma once

#include <string>
#include <vector>

#include "leoisac/channel.hpp"
#include "leoisac/core.hpp"
#include "leoisac/geometry.hpp"
#include "leoisac/scene.hpp"
#include "leoisac/signal_model.hpp"

namespace leoisac::crb {

/// dA/dOmega_i for i = 0..2K-1 (theta_1..theta_K, then phi_1..phi_K), each NK x NK.
struct SteeringDerivatives {
    std::vector<CMat> dA;
};

inline SteeringDerivatives steering_derivatives(const geometry::AngleSet& ang, const channel::ArrayGeometry& arr) {
    const int k = static_cast<int>(ang.size());
    const int n = arr.size();
    const auto st = channel::SteeringStack::build(ang, arr);
    const CVec v = st.stacked();
    SteeringDerivatives out;
    out.dA.resize(static_cast<std::size_t>(2 * k));
    for (int t = 0; t < k; ++t) {
        const auto [dt, dp] = channel::steering_derivatives(ang.elevation(t), ang.azimuth(t), arr);
        for (int which = 0; which < 2; ++which) {
            CVec dv = CVec::Zero(n * k);
            dv.segment(t * n, n) = which == 0 ? dt : dp;
            out.dA[static_cast<std::size_t>(which * k + t)] = dv * v.adjoint() + v * dv.adjoint();
        }
    }
    return out;
}

/// D_i = dA/dOmega_i (.) B.
inline std::vector<CMat> weighted_derivatives(const SceneSnapshot& sc) {
    const auto d = steering_derivatives(sc.angles, sc.array);
    const CMat b = channel::sensing_matrix_b(sc.gains, sc.n());
    std::vector<CMat> out;
    out.reserve(d.dA.size());
    for (const auto& x : d.dA) out.push_back(x.cwiseProduct(b));
    return out;
}

struct FimBundle {
    MatX f_oo;          // F_OmegaOmega, 2K x 2K
    VecX f_oa;          // F_Omegaalpha, 2K
    double f_aa = 0.0;  // F_alphaalpha
    MatX f_omega;       // nuisance-reduced
    MatX jacobian;      // 2K x 3
    Eigen::Matrix3d crb = Eigen::Matrix3d::Zero();
    double trace_km2 = 0.0;
    std::vector<std::string> warnings;

    double rcrb_km() const { return std::sqrt(trace_km2); }
    double rcrb_m() const { return 1e3 * rcrb_km(); }

    /// Full F_Xi, (2K+1) x (2K+1), alpha last.
    MatX f_xi() const {
        const auto k2 = f_oo.rows();
        MatX f(k2 + 1, k2 + 1);
        f.topLeftCorner(k2, k2) = f_oo;
        f.topRightCorner(k2, 1) = f_oa;
        f.bottomLeftCorner(1, k2) = f_oa.transpose();
        f(k2, k2) = f_aa;
        return f;
    }
};

/// FIM blocks for a transmit covariance S = R + sum_m W_m (the symbol expectation is already taken).
inline FimBundle fim_blocks_from_covariance(const SceneSnapshot& sc, const CMat& s, double alpha, double sigma2) {
    const auto d = weighted_derivatives(sc);
    const CMat x = sc.ab();
    const auto k2 = static_cast<Eigen::Index>(d.size());
    const double c = 2.0 / sigma2;

    std::vector<CMat> sd;  // S D_i^H
    sd.reserve(d.size());
    for (const auto& di : d) sd.push_back(s * di.adjoint());

    FimBundle f;
    f.f_oo.resize(k2, k2);
    f.f_oa.resize(k2);
    for (Eigen::Index i = 0; i < k2; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        for (Eigen::Index j = i; j < k2; ++j) {
            const double v = c * alpha * alpha * (sd[iu] * d[static_cast<std::size_t>(j)]).trace().real();
            f.f_oo(i, j) = v;
            f.f_oo(j, i) = v;
        }
        f.f_oa(i) = c * alpha * (sd[iu] * x).trace().real();
    }
    f.f_aa = c * (s * x.adjoint() * x).trace().real();
    return f;
}

inline FimBundle fim_blocks(const SceneSnapshot& sc, const BeamformingSolution& sol, double alpha, double sigma2) {
    return fim_blocks_from_covariance(sc, sol.covariance(), alpha, sigma2);
}

/// F_Omega = F_OO - F_Oa F_aa^-1 F_Oa^T.
inline MatX fim_omega(const MatX& f_oo, const VecX& f_oa, double f_aa) {
    if (!(f_aa > 0.0)) fail(ErrorKind::Numerical, "singular nuisance block: F_alphaalpha is zero");
    return f_oo - f_oa * f_oa.transpose() / f_aa;
}

/// C = (J^T F_Omega J)^-1 and its trace. With `allow_pinv` a near-singular
/// matrix is inverted on the eigenvalues above 1e-12 lambda_max and a warning is added.
inline std::pair<Eigen::Matrix3d, double> crb_trace(const MatX& f_omega, const MatX& j, bool allow_pinv = false,
                                                    std::vector<std::string>* warnings = nullptr) {
    const MatX fp_dyn = j.transpose() * f_omega * j;
    const Eigen::Matrix3d fp = 0.5 * (fp_dyn + fp_dyn.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(fp);
    const double lmax = es.eigenvalues().maxCoeff();
    const double lmin = es.eigenvalues().minCoeff();
    if (!(lmax > 0.0)) fail(ErrorKind::Geometry, "unobservable geometry: position FIM is zero");
    if (lmin <= 1e-12 * lmax) {
        if (!allow_pinv) fail(ErrorKind::Geometry, "unobservable geometry: position FIM is singular");
        Eigen::Vector3d inv = Eigen::Vector3d::Zero();
        for (int i = 0; i < 3; ++i)
            if (es.eigenvalues()(i) > 1e-12 * lmax) inv(i) = 1.0 / es.eigenvalues()(i);
        if (warnings) warnings->push_back("position FIM near-singular; pseudo-inverse used");
        const Eigen::Matrix3d c = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
        return {c, c.trace()};
    }
    const Eigen::Matrix3d c = fp.inverse();
    return {c, c.trace()};
}

inline FimBundle evaluate_from_covariance(const SceneSnapshot& sc, const CMat& s, bool allow_pinv = false) {
    FimBundle f = fim_blocks_from_covariance(sc, s, sc.alpha, sc.sigma_n2);
    f.f_omega = fim_omega(f.f_oo, f.f_oa, f.f_aa);
    f.jacobian = geometry::angle_jacobian(sc.sats, sc.target);
    const auto [c, tr] = crb_trace(f.f_omega, f.jacobian, allow_pinv, &f.warnings);
    f.crb = c;
    f.trace_km2 = tr;
    return f;
}

/// Full bound for a solution at the scene's true alpha and noise level.
inline FimBundle evaluate(const SceneSnapshot& sc, const BeamformingSolution& sol, bool allow_pinv = false) {
    return evaluate_from_covariance(sc, sol.covariance(), allow_pinv);
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

/// Mean echo with the angles and alpha given explicitly.
inline CVec mean_vector_at(const SceneSnapshot& sc, const VecX& xi, const CVec& x) {
    const auto k2 = xi.size() - 1;
    const auto ang = geometry::AngleSet::from_stacked(xi.head(k2));
    const auto st = channel::SteeringStack::build(ang, sc.array);
    return xi(k2) * apply_ab(st, sc.gains.beta, x);
}

/// F_Xi from central differences of the mean echo. The symbol expectation is
/// exact: the transmit stacks w_1, ..., w_M and r each contribute separately.
inline MatX fim_fd_oracle(const SceneSnapshot& sc, const BeamformingSolution& sol, double alpha, double sigma2,
                          double step) {
    VecX xi(2 * sc.k() + 1);
    xi << sc.angles.stacked(), alpha;
    const auto dim = xi.size();

    std::vector<CVec> stacks(sol.w.begin(), sol.w.end());
    stacks.push_back(sol.r);

    MatX f = MatX::Zero(dim, dim);
    for (const auto& x : stacks) {
        std::vector<CVec> du(static_cast<std::size_t>(dim));
        for (Eigen::Index i = 0; i < dim; ++i) {
            VecX a = xi, b = xi;
            a(i) += step;
            b(i) -= step;
            du[static_cast<std::size_t>(i)] = (mean_vector_at(sc, a, x) - mean_vector_at(sc, b, x)) / (2.0 * step);
        }
        for (Eigen::Index i = 0; i < dim; ++i)
            for (Eigen::Index j = 0; j < dim; ++j)
                f(i, j) += 2.0 / sigma2 * du[static_cast<std::size_t>(i)].dot(du[static_cast<std::size_t>(j)]).real();
    }
    return f;
}

}  // namespace leoisac::crb

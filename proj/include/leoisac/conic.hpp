// SPDX-License-Identifier: Apache-2.0
//
// leoisac: cooperative communication and location sensing for LEO constellations
// ------------------------------------------------------------------------
//
// A small primal barrier interior-point solver for problems of the form
//
//   minimize    sum_b <C_b, X_b> + c^T z
//   subject to  X_b Hermitian PSD                 (native blocks)
//               G_L(X, z) real symmetric PSD      (affine LMIs)
//               f_j(X, z) <= 0                    (affine)
//               t_i(X, z) <= log s_i(X, z)        (log hypograph)
//
// Every affine map is a LinearForm whose block coefficients are stored as
// low-rank Hermitian factors, so the Newton system is reduced to the number
// of forms plus the free variables. Sublevel sets must be bounded.
#pragma once

#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "leoisac/core.hpp"

namespace leoisac::conic {

/// C = U diag(sigma) U^H.
struct LowRankHermitian {
    CMat u;
    VecX sigma;

    int n() const { return static_cast<int>(u.rows()); }
    int rank() const { return static_cast<int>(u.cols()); }

    CMat dense() const { return u * sigma.asDiagonal() * u.adjoint(); }

    /// <C, X> = Re tr(C X).
    double apply(const CMat& x) const {
        double v = 0.0;
        for (int r = 0; r < rank(); ++r) v += sigma(r) * u.col(r).dot(x * u.col(r)).real();
        return v;
    }

    static std::shared_ptr<const LowRankHermitian> from_dense(const CMat& c, double rel_tol = 1e-13) {
        Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(c));
        const VecX& ev = es.eigenvalues();
        const double cut = rel_tol * ev.cwiseAbs().maxCoeff();
        std::vector<int> keep;
        for (int i = 0; i < ev.size(); ++i)
            if (std::abs(ev(i)) > cut) keep.push_back(i);
        auto out = std::make_shared<LowRankHermitian>();
        out->u.resize(c.rows(), static_cast<Eigen::Index>(keep.size()));
        out->sigma.resize(static_cast<Eigen::Index>(keep.size()));
        for (std::size_t j = 0; j < keep.size(); ++j) {
            out->u.col(static_cast<Eigen::Index>(j)) = es.eigenvectors().col(keep[j]);
            out->sigma(static_cast<Eigen::Index>(j)) = ev(keep[j]);
        }
        return out;
    }

    /// scale * v v^H.
    static std::shared_ptr<const LowRankHermitian> outer(const CVec& v, double scale) {
        auto out = std::make_shared<LowRankHermitian>();
        out->u = v;
        out->sigma = VecX::Constant(1, scale);
        return out;
    }

    /// scale * sum_{i in [offset, offset+len)} e_i e_i^T on dimension n.
    static std::shared_ptr<const LowRankHermitian> selector(int n, int offset, int len, double scale) {
        auto out = std::make_shared<LowRankHermitian>();
        out->u = CMat::Zero(n, len);
        for (int i = 0; i < len; ++i) out->u(offset + i, i) = 1.0;
        out->sigma = VecX::Constant(len, scale);
        return out;
    }
};

using CoefPtr = std::shared_ptr<const LowRankHermitian>;

/// sum_b <C_b, X_b> + a^T z + constant.
struct LinearForm {
    std::vector<std::pair<int, CoefPtr>> blocks;
    std::vector<std::pair<int, double>> z;
    double constant = 0.0;

    LinearForm& add_block(int b, CoefPtr c) {
        blocks.emplace_back(b, std::move(c));
        return *this;
    }
    LinearForm& add_z(int i, double a) {
        z.emplace_back(i, a);
        return *this;
    }
    LinearForm& add_constant(double c) {
        constant += c;
        return *this;
    }

    double eval(const std::vector<CMat>& x, const VecX& zz) const {
        double v = constant;
        for (const auto& [b, c] : blocks) v += c->apply(x[static_cast<std::size_t>(b)]);
        for (const auto& [i, a] : z) v += a * zz(i);
        return v;
    }
};

/// Real symmetric LMI, upper-packed row-major entries (0,0), (0,1), ..., (1,1), ...
struct LmiConstraint {
    int dim = 0;
    std::vector<LinearForm> entries;

    explicit LmiConstraint(int d = 0) : dim(d), entries(static_cast<std::size_t>(d * (d + 1) / 2)) {}

    static int packed_index(int dim, int i, int j) {
        if (i > j) std::swap(i, j);
        return i * dim - i * (i - 1) / 2 + (j - i);
    }
    LinearForm& at(int i, int j) { return entries[static_cast<std::size_t>(packed_index(dim, i, j))]; }
    const LinearForm& at(int i, int j) const { return entries[static_cast<std::size_t>(packed_index(dim, i, j))]; }

    MatX eval(const std::vector<CMat>& x, const VecX& z) const {
        MatX g(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (int j = i; j < dim; ++j) g(i, j) = g(j, i) = at(i, j).eval(x, z);
        return g;
    }
};

struct LinearConstraint {
    LinearForm lhs;  // lhs <= 0
};

struct LogHypoConstraint {
    LinearForm t;
    LinearForm s;  // t <= log s
};

struct Problem {
    std::vector<int> block_dims;
    int nz = 0;
    std::vector<CMat> obj_blocks;  // empty matrix means zero cost
    VecX obj_z;
    double obj_const = 0.0;
    std::vector<LmiConstraint> lmis;
    std::vector<LinearConstraint> linears;
    std::vector<LogHypoConstraint> loghypos;

    int add_block(int n) {
        block_dims.push_back(n);
        obj_blocks.emplace_back();
        return static_cast<int>(block_dims.size()) - 1;
    }
    int add_z(int count = 1) {
        const int first = nz;
        nz += count;
        VecX c = VecX::Zero(nz);
        c.head(obj_z.size()) = obj_z;
        obj_z = c;
        return first;
    }

    double objective(const std::vector<CMat>& x, const VecX& z) const {
        double v = obj_const + (nz > 0 ? obj_z.dot(z) : 0.0);
        for (std::size_t b = 0; b < x.size(); ++b)
            if (obj_blocks[b].size() > 0) v += (obj_blocks[b] * x[b]).trace().real();
        return v;
    }
};

struct Point {
    std::vector<CMat> x;
    VecX z;
};

enum class Status { Optimal, Infeasible, Unbounded, MaxIterations, NumericalFailure };

inline const char* to_string(Status s) {
    switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::MaxIterations: return "max_iterations";
    case Status::NumericalFailure: return "numerical_failure";
    }
    return "?";
}

struct Settings {
    double abs_tol = 1e-9;
    double rel_tol = 1e-9;
    double mu = 10.0;
    double t0 = 1.0;
    int max_newton = 600;
    int max_centering = 80;
    double newton_tol = 1e-10;
    double phase1_trace_factor = 1e3;
    double unbounded_threshold = -1e15;
    double stall_gap = 1e-6;      // relative gap accepted when Newton breaks down late
    int max_extrapolation = 0;    // step doublings tried after an accepted full Newton step
    double rescale_ratio = 1e3;   // re-scale when tr Y or tr Y^-1 exceeds this times the block size
    int max_rescales = 50;
};

struct Result {
    Status status = Status::NumericalFailure;
    Point point;
    double objective = std::numeric_limits<double>::quiet_NaN();
    double gap = std::numeric_limits<double>::infinity();
    int newton_steps = 0;
    std::string message;

    bool ok() const { return status == Status::Optimal; }
};

// ---------------------------------------------------------------------------
// Complex <-> real embedding

/// [[Re, -Im], [Im, Re]].
inline MatX realify(const CMat& h) {
    const auto n = h.rows();
    MatX r(2 * n, 2 * n);
    r.topLeftCorner(n, n) = h.real();
    r.topRightCorner(n, n) = -h.imag();
    r.bottomLeftCorner(n, n) = h.imag();
    r.bottomRightCorner(n, n) = h.real();
    return r;
}

inline CMat complexify(const MatX& r) {
    const auto n = r.rows() / 2;
    CMat h(n, n);
    h.real() = r.topLeftCorner(n, n);
    h.imag() = r.bottomLeftCorner(n, n);
    return h;
}

namespace detail {

inline double chol_logdet(const Eigen::LLT<CMat>& llt) {
    double s = 0.0;
    const auto& l = llt.matrixLLT();
    for (Eigen::Index i = 0; i < l.rows(); ++i) s += std::log(l(i, i).real());
    return 2.0 * s;
}

inline bool pd_logdet(const CMat& x, double& logdet) {
    Eigen::LLT<CMat> llt(x);
    if (llt.info() != Eigen::Success) return false;
    const auto& l = llt.matrixLLT();
    for (Eigen::Index i = 0; i < l.rows(); ++i)
        if (!(l(i, i).real() > 0.0) || !std::isfinite(l(i, i).real())) return false;
    logdet = chol_logdet(llt);
    return true;
}

inline bool pd_logdet_real(const MatX& g, double& logdet) {
    Eigen::LLT<MatX> llt(g);
    if (llt.info() != Eigen::Success) return false;
    const auto& l = llt.matrixLLT();
    double s = 0.0;
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
        if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i))) return false;
        s += std::log(l(i, i));
    }
    logdet = 2.0 * s;
    return true;
}

/// Flattened problem: all forms in one list, per-block stacked factors.
class Engine {
public:
    explicit Engine(const Problem& p) : p_(p) {
        for (const auto& l : p.lmis) {
            std::vector<int> idx;
            for (const auto& e : l.entries) idx.push_back(push(e));
            lmi_forms_.push_back(idx);
        }
        for (const auto& l : p.linears) lin_forms_.push_back(push(l.lhs));
        for (const auto& l : p.loghypos) hypo_forms_.push_back({push(l.t), push(l.s)});

        const auto nb = p.block_dims.size();
        fac_u_.resize(nb);
        fac_sigma_.resize(nb);
        fac_owner_.resize(nb);
        for (std::size_t b = 0; b < nb; ++b) {
            int cols = 0;
            for (const auto& [f, c] : block_terms_[b]) cols += c->rank();
            fac_u_[b].resize(p.block_dims[b], cols);
            fac_sigma_[b].resize(cols);
            int at = 0;
            for (const auto& [f, c] : block_terms_[b]) {
                if (c->n() != p.block_dims[b]) fail(ErrorKind::Parameter, "coefficient dimension mismatch");
                fac_u_[b].middleCols(at, c->rank()) = c->u;
                fac_sigma_[b].segment(at, c->rank()) = c->sigma;
                for (int r = 0; r < c->rank(); ++r) fac_owner_[b].push_back(f);
                at += c->rank();
            }
        }
        gz_ = MatX::Zero(q(), p.nz);
        for (int f = 0; f < q(); ++f)
            for (const auto& [i, a] : forms_[static_cast<std::size_t>(f)]->z) gz_(f, i) += a;

        nu_ = 0.0;
        for (int d : p.block_dims) nu_ += d;
        for (const auto& l : p.lmis) nu_ += l.dim;
        nu_ += static_cast<double>(p.linears.size()) + 2.0 * static_cast<double>(p.loghypos.size());
    }

    int q() const { return static_cast<int>(forms_.size()); }
    double nu() const { return nu_; }

    /// All form values at (x, z).
    VecX forms(const std::vector<CMat>& x, const VecX& z) const {
        VecX y(q());
        for (int f = 0; f < q(); ++f) y(f) = forms_[static_cast<std::size_t>(f)]->constant;
        for (std::size_t b = 0; b < x.size(); ++b) {
            if (fac_u_[b].cols() == 0) continue;
            const CMat pm = x[b] * fac_u_[b];
            for (Eigen::Index r = 0; r < fac_u_[b].cols(); ++r)
                y(fac_owner_[b][static_cast<std::size_t>(r)]) +=
                    fac_sigma_[b](r) * fac_u_[b].col(r).dot(pm.col(r)).real();
        }
        if (p_.nz > 0) y += gz_ * z;
        return y;
    }

    /// Barrier of the non-block constraints at form values y; +inf outside the domain.
    double psi(const VecX& y) const {
        double v = 0.0;
        for (std::size_t l = 0; l < lmi_forms_.size(); ++l) {
            double ld = 0.0;
            if (!pd_logdet_real(lmi_matrix(l, y), ld)) return inf();
            v -= ld;
        }
        for (int f : lin_forms_) {
            if (!(y(f) < 0.0)) return inf();
            v -= std::log(-y(f));
        }
        for (const auto& [ft, fs] : hypo_forms_) {
            const double s = y(fs);
            if (!(s > 0.0)) return inf();
            const double g = std::log(s) - y(ft);
            if (!(g > 0.0)) return inf();
            v -= std::log(g) + std::log(s);
        }
        return v;
    }

    /// Gradient and Hessian of psi with respect to the form values.
    void psi_derivatives(const VecX& y, VecX& grad, MatX& hess) const {
        grad = VecX::Zero(q());
        hess = MatX::Zero(q(), q());
        for (std::size_t l = 0; l < lmi_forms_.size(); ++l) {
            const int d = p_.lmis[l].dim;
            const MatX gi = lmi_matrix(l, y).inverse();
            const auto& idx = lmi_forms_[l];
            // Packed coordinates: E_(i,j) = e_i e_j^T + e_j e_i^T off the diagonal.
            std::vector<std::pair<int, int>> ij;
            for (int i = 0; i < d; ++i)
                for (int j = i; j < d; ++j) ij.emplace_back(i, j);
            for (std::size_t a = 0; a < ij.size(); ++a) {
                const auto [i, j] = ij[a];
                grad(idx[a]) += -(i == j ? 1.0 : 2.0) * gi(i, j);
                for (std::size_t c = 0; c < ij.size(); ++c) {
                    const auto [k, m] = ij[c];
                    // tr(G^-1 E_a G^-1 E_c)
                    double h;
                    if (i == j && k == m) h = gi(i, k) * gi(k, i);
                    else if (i == j) h = 2.0 * gi(i, k) * gi(m, i);
                    else if (k == m) h = 2.0 * gi(j, k) * gi(k, i);
                    else h = 2.0 * (gi(j, k) * gi(m, i) + gi(j, m) * gi(k, i));
                    hess(idx[a], idx[c]) += h;
                }
            }
        }
        for (int f : lin_forms_) {
            grad(f) += -1.0 / y(f);
            hess(f, f) += 1.0 / (y(f) * y(f));
        }
        for (const auto& [ft, fs] : hypo_forms_) {
            const double s = y(fs);
            const double g = std::log(s) - y(ft);
            grad(ft) += 1.0 / g;
            grad(fs) += -1.0 / (g * s) - 1.0 / s;
            hess(ft, ft) += 1.0 / (g * g);
            hess(ft, fs) += -1.0 / (g * g * s);
            hess(fs, ft) += -1.0 / (g * g * s);
            hess(fs, fs) += 1.0 / (g * g * s * s) + 1.0 / (g * s * s) + 1.0 / (s * s);
        }
    }

    /// t * objective + barrier, +inf outside the domain.
    double merit(double t, const std::vector<CMat>& x, const VecX& z, const VecX& y) const {
        double v = t * p_.objective(x, z);
        for (const auto& xb : x) {
            double ld = 0.0;
            if (!pd_logdet(xb, ld)) return inf();
            v -= ld;
        }
        const double ps = psi(y);
        if (!std::isfinite(ps)) return inf();
        return v + ps;
    }

    /// Newton direction for t * objective + barrier. Returns the squared decrement.
    bool newton(double t, const std::vector<CMat>& x, const VecX& z, std::vector<CMat>& dx, VecX& dz,
                double& decrement2) const {
        const auto nb = x.size();
        const VecX y = forms(x, z);
        Factor fc;
        psi_derivatives(y, fc.dpsi, fc.hpsi);

        std::vector<CMat> grad(nb);
        fc.xinv.resize(nb);
        fc.pm.resize(nb);
        fc.mm = MatX::Zero(q(), q());
        for (std::size_t b = 0; b < nb; ++b) {
            const int n = p_.block_dims[b];
            Eigen::LLT<CMat> llt(x[b]);
            if (llt.info() != Eigen::Success) return false;
            fc.xinv[b] = llt.solve(CMat::Identity(n, n));
            const CMat& u = fac_u_[b];
            fc.pm[b] = x[b] * u;
            VecX wsig(u.cols());
            for (Eigen::Index r = 0; r < u.cols(); ++r)
                wsig(r) = fac_sigma_[b](r) * fc.dpsi(fac_owner_[b][static_cast<std::size_t>(r)]);
            grad[b] = -fc.xinv[b];
            if (p_.obj_blocks[b].size() > 0) grad[b] += t * p_.obj_blocks[b];
            if (u.cols() > 0) grad[b] += u * wsig.asDiagonal() * u.adjoint();
            grad[b] = hermitian_part(grad[b]);
            if (u.cols() == 0) continue;
            const CMat qm = u.adjoint() * fc.pm[b];
            for (Eigen::Index r = 0; r < u.cols(); ++r) {
                const int fr = fac_owner_[b][static_cast<std::size_t>(r)];
                for (Eigen::Index s = 0; s < u.cols(); ++s) {
                    const int fs = fac_owner_[b][static_cast<std::size_t>(s)];
                    fc.mm(fr, fs) += fac_sigma_[b](r) * fac_sigma_[b](s) * std::norm(qm(r, s));
                }
            }
        }
        const VecX gz = p_.nz > 0 ? VecX(t * p_.obj_z + gz_.transpose() * fc.dpsi) : VecX();

        // With H = L L^T and e' = L^T e the reduced system is symmetric:
        //   (I + L^T M L) e' - L^T G_z dz = -L^T r,   (L^T G_z)^T e' = -g_z.
        // Pivoted LDL^T tolerates the dynamic range of near-active constraints.
        const int nq = q();
        Eigen::LDLT<MatX> hl(fc.hpsi);
        if (hl.info() != Eigen::Success) return false;
        const VecX dsq = hl.vectorD().cwiseMax(0.0).cwiseSqrt();
        fc.l = hl.transpositionsP().transpose() * (MatX(hl.matrixL()) * dsq.asDiagonal());
        MatX kmat = MatX::Identity(nq, nq) + fc.l.transpose() * fc.mm * fc.l;
        kmat = 0.5 * (kmat + kmat.transpose());
        fc.kl.compute(kmat);
        if (fc.kl.info() != Eigen::Success) return false;
        if (p_.nz > 0) {
            fc.bmat = fc.l.transpose() * gz_;
            fc.ki_b = fc.kl.solve(fc.bmat);
            MatX schur = fc.bmat.transpose() * fc.ki_b;
            fc.schur.compute(0.5 * (schur + schur.transpose()));
        }

        if (!solve_reduced(fc, x, grad, gz, dx, dz)) return false;
        // Iterative refinement against the exact Hessian product.
        const double gnorm = residual_norm(grad, gz);
        for (int pass = 0; pass < 3; ++pass) {
            std::vector<CMat> rx;
            VecX rz;
            hessian_product(fc, dx, dz, rx, rz);
            for (std::size_t b = 0; b < nb; ++b) rx[b] += grad[b];
            if (p_.nz > 0) rz += gz;
            if (residual_norm(rx, rz) <= 1e-12 * gnorm) break;
            std::vector<CMat> cx;
            VecX cz;
            if (!solve_reduced(fc, x, rx, rz, cx, cz)) break;
            for (std::size_t b = 0; b < nb; ++b) dx[b] += cx[b];
            if (p_.nz > 0) dz += cz;
        }

        decrement2 = p_.nz > 0 ? -gz.dot(dz) : 0.0;
        for (std::size_t b = 0; b < nb; ++b) decrement2 -= (grad[b] * dx[b]).trace().real();
        return std::isfinite(decrement2);
    }

    /// Change of the forms along (dx, dz).
    VecX form_direction(const std::vector<CMat>& dx, const VecX& dz) const {
        VecX e = forms(dx, dz);
        for (int f = 0; f < q(); ++f) e(f) -= forms_[static_cast<std::size_t>(f)]->constant;
        return e;
    }

private:
    static double inf() { return std::numeric_limits<double>::infinity(); }

    struct Factor {
        VecX dpsi;
        MatX hpsi, mm, l, bmat, ki_b;
        std::vector<CMat> xinv, pm;
        Eigen::LLT<MatX> kl;
        Eigen::LDLT<MatX> schur;
    };

    static double residual_norm(const std::vector<CMat>& gx, const VecX& gzv) {
        double s = gzv.size() > 0 ? gzv.squaredNorm() : 0.0;
        for (const auto& g : gx) s += g.squaredNorm();
        return std::sqrt(s);
    }

    /// Solve H d = -g with the reduced factorization.
    bool solve_reduced(const Factor& fc, const std::vector<CMat>& x, const std::vector<CMat>& g, const VecX& gzv,
                       std::vector<CMat>& dx, VecX& dz) const {
        const auto nb = x.size();
        std::vector<CMat> ymat(nb);
        VecX rhs1 = VecX::Zero(q());
        for (std::size_t b = 0; b < nb; ++b) {
            ymat[b] = hermitian_part(x[b] * g[b] * x[b]);
            const CMat& u = fac_u_[b];
            if (u.cols() == 0) continue;
            const CMat yu = ymat[b] * u;
            for (Eigen::Index r = 0; r < u.cols(); ++r)
                rhs1(fac_owner_[b][static_cast<std::size_t>(r)]) += fac_sigma_[b](r) * u.col(r).dot(yu.col(r)).real();
        }
        const VecX ki_r = fc.kl.solve(VecX(fc.l.transpose() * rhs1));
        VecX ep = -ki_r;
        if (p_.nz > 0) {
            const VecX rz = fc.bmat.transpose() * ki_r - gzv;
            dz = fc.schur.solve(rz);
            if (fc.schur.info() != Eigen::Success || !dz.allFinite()) {
                MatX sm = fc.bmat.transpose() * fc.ki_b;
                dz = sm.completeOrthogonalDecomposition().solve(rz);
            }
            ep += fc.ki_b * dz;
        } else {
            dz = VecX();
        }
        if (!ep.allFinite()) return false;
        const VecX w = fc.l * ep;
        dx.assign(nb, CMat());
        for (std::size_t b = 0; b < nb; ++b) {
            const CMat& u = fac_u_[b];
            dx[b] = -ymat[b];
            if (u.cols() > 0) {
                VecX ws(u.cols());
                for (Eigen::Index r = 0; r < u.cols(); ++r)
                    ws(r) = fac_sigma_[b](r) * w(fac_owner_[b][static_cast<std::size_t>(r)]);
                dx[b] -= fc.pm[b] * ws.asDiagonal() * fc.pm[b].adjoint();
            }
            dx[b] = hermitian_part(dx[b]);
        }
        return true;
    }

    /// Hessian of the merit applied to (dx, dz).
    void hessian_product(const Factor& fc, const std::vector<CMat>& dx, const VecX& dz, std::vector<CMat>& hx,
                         VecX& hz) const {
        const VecX e = form_direction(dx, dz);
        const VecX he = fc.hpsi * e;
        hx.assign(dx.size(), CMat());
        for (std::size_t b = 0; b < dx.size(); ++b) {
            hx[b] = fc.xinv[b] * dx[b] * fc.xinv[b];
            const CMat& u = fac_u_[b];
            if (u.cols() > 0) {
                VecX ws(u.cols());
                for (Eigen::Index r = 0; r < u.cols(); ++r)
                    ws(r) = fac_sigma_[b](r) * he(fac_owner_[b][static_cast<std::size_t>(r)]);
                hx[b] += u * ws.asDiagonal() * u.adjoint();
            }
            hx[b] = hermitian_part(hx[b]);
        }
        hz = p_.nz > 0 ? VecX(gz_.transpose() * he) : VecX();
    }

    int push(const LinearForm& f) {
        const int idx = static_cast<int>(forms_.size());
        forms_.push_back(&f);
        block_terms_.resize(p_.block_dims.size());
        for (const auto& [b, c] : f.blocks) {
            if (b < 0 || b >= static_cast<int>(p_.block_dims.size())) fail(ErrorKind::Parameter, "bad block index");
            block_terms_[static_cast<std::size_t>(b)].emplace_back(idx, c);
        }
        for (const auto& [i, a] : f.z)
            if (i < 0 || i >= p_.nz) fail(ErrorKind::Parameter, "bad free-variable index");
        return idx;
    }

    MatX lmi_matrix(std::size_t l, const VecX& y) const {
        const int d = p_.lmis[l].dim;
        MatX g(d, d);
        int a = 0;
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) g(i, j) = g(j, i) = y(lmi_forms_[l][static_cast<std::size_t>(a++)]);
        return g;
    }

    const Problem& p_;
    std::vector<const LinearForm*> forms_;
    std::vector<std::vector<std::pair<int, CoefPtr>>> block_terms_;
    std::vector<std::vector<int>> lmi_forms_;
    std::vector<int> lin_forms_;
    std::vector<std::pair<int, int>> hypo_forms_;
    std::vector<CMat> fac_u_;
    std::vector<VecX> fac_sigma_;
    std::vector<std::vector<int>> fac_owner_;
    MatX gz_;
    double nu_ = 0.0;
};

// Stalled: the Newton system broke down after at least one completed centering;
// t_out then holds the last completed barrier weight.
enum class StopReason { Converged, EarlyExit, MaxIterations, Numerical, Stalled, Unbounded };

/// Barrier method from a strictly feasible start. `early_exit` is checked after every Newton step.
/// A positive `t_out` on entry resumes at that barrier weight.
template <class EarlyExit>
StopReason barrier(const Problem& p, Point& pt, const Settings& s, int& steps, double& t_out, EarlyExit early_exit) {
    Engine eng(p);
    double t = t_out > 0.0 ? t_out : s.t0;
    while (true) {
        for (int it = 0; it < s.max_centering; ++it) {
            std::vector<CMat> dx;
            VecX dz;
            double lam2 = 0.0;
            if (!eng.newton(t, pt.x, pt.z, dx, dz, lam2)) {
                // A resumed call still counts the centering done before it.
                if (t <= s.t0) return StopReason::Numerical;
                t_out = t / s.mu;
                return StopReason::Stalled;
            }
            if (lam2 / 2.0 <= s.newton_tol) break;
            if (++steps > s.max_newton) return StopReason::MaxIterations;

            const VecX y0 = eng.forms(pt.x, pt.z);
            const VecX e = eng.form_direction(dx, dz);
            const double f0 = eng.merit(t, pt.x, pt.z, y0);
            double step = 1.0;
            bool accepted = false;
            for (int ls = 0; ls < 60; ++ls) {
                std::vector<CMat> xn(pt.x.size());
                for (std::size_t b = 0; b < xn.size(); ++b) xn[b] = pt.x[b] + step * dx[b];
                VecX zn = p.nz > 0 ? VecX(pt.z + step * dz) : pt.z;
                const double f1 = eng.merit(t, xn, zn, y0 + step * e);
                if (std::isfinite(f1) && f1 <= f0 - 0.25 * step * lam2) {
                    // A full step that is accepted may be far from the boundary along a
                    // direction the barrier only lets Newton double; try longer ones.
                    double best = f1;
                    for (int ex = 0; step == 1.0 && ex < s.max_extrapolation; ++ex) {
                        std::vector<CMat> xe(pt.x.size());
                        for (std::size_t b = 0; b < xe.size(); ++b) xe[b] = pt.x[b] + 2.0 * step * dx[b];
                        const VecX ze = p.nz > 0 ? VecX(pt.z + 2.0 * step * dz) : pt.z;
                        const double fe = eng.merit(t, xe, ze, y0 + 2.0 * step * e);
                        if (!(std::isfinite(fe) && fe < best)) break;
                        best = fe;
                        xn = std::move(xe);
                        zn = ze;
                        step *= 2.0;
                        if (ex + 1 == s.max_extrapolation) break;
                    }
                    pt.x = std::move(xn);
                    pt.z = zn;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) break;  // no progress possible at this precision
            if (p.objective(pt.x, pt.z) < s.unbounded_threshold) return StopReason::Unbounded;
            if (early_exit(pt, t, eng.nu())) {
                t_out = t;
                return StopReason::EarlyExit;
            }
        }
        t_out = t;
        const double obj = p.objective(pt.x, pt.z);
        if (eng.nu() / t <= s.abs_tol + s.rel_tol * std::abs(obj)) return StopReason::Converged;
        if (early_exit(pt, t, eng.nu())) return StopReason::EarlyExit;
        t *= s.mu;
    }
}

}  // namespace detail

namespace detail {

/// The same problem in Y_b with X_b = L_b Y_b L_b^H.
inline Problem congruence(const Problem& p, const std::vector<CMat>& l) {
    Problem q = p;
    std::map<std::pair<const LowRankHermitian*, int>, CoefPtr> done;
    auto map_form = [&](LinearForm& f) {
        for (auto& [b, c] : f.blocks) {
            const auto key = std::make_pair(c.get(), b);
            auto it = done.find(key);
            if (it == done.end()) {
                auto m = std::make_shared<LowRankHermitian>();
                m->u = l[static_cast<std::size_t>(b)].adjoint() * c->u;
                m->sigma = c->sigma;
                it = done.emplace(key, std::move(m)).first;
            }
            c = it->second;
        }
    };
    for (auto& lmi : q.lmis)
        for (auto& e : lmi.entries) map_form(e);
    for (auto& c : q.linears) map_form(c.lhs);
    for (auto& h : q.loghypos) {
        map_form(h.t);
        map_form(h.s);
    }
    for (std::size_t b = 0; b < q.obj_blocks.size(); ++b)
        if (q.obj_blocks[b].size() > 0) q.obj_blocks[b] = hermitian_part(l[b].adjoint() * q.obj_blocks[b] * l[b]);
    return q;
}

}  // namespace detail

/// Most negative violation of the non-block constraints (positive means infeasible).
inline double max_violation(const Problem& p, const Point& pt) {
    double v = -std::numeric_limits<double>::infinity();
    for (const auto& l : p.lmis) {
        Eigen::SelfAdjointEigenSolver<MatX> es(l.eval(pt.x, pt.z));
        v = std::max(v, -es.eigenvalues().minCoeff());
    }
    for (const auto& l : p.linears) v = std::max(v, l.lhs.eval(pt.x, pt.z));
    for (const auto& l : p.loghypos) {
        const double s = l.s.eval(pt.x, pt.z);
        v = std::max(v, s > 0.0 ? l.t.eval(pt.x, pt.z) - std::log(s) : std::numeric_limits<double>::infinity());
    }
    return v;
}

/// Solve from `start`. Blocks of the start point are shifted to be positive
/// definite; a phase-I problem finds a strictly feasible point when needed.
inline Result solve(const Problem& p, Point start, const Settings& s = {}) {
    Result res;
    const auto nb = p.block_dims.size();
    if (start.x.size() != nb) fail(ErrorKind::Parameter, "start point has the wrong number of blocks");
    if (p.nz > 0 && start.z.size() != p.nz) start.z = VecX::Zero(p.nz);
    if (p.obj_z.size() != p.nz) fail(ErrorKind::Parameter, "objective length does not match free variables");
    for (std::size_t b = 0; b < nb; ++b) {
        CMat& x = start.x[b];
        const int n = p.block_dims[b];
        if (x.rows() != n || x.cols() != n) fail(ErrorKind::Parameter, "start block has the wrong size");
        x = hermitian_part(x);
        const double scale = std::max(x.trace().real() / n, 1e-300);
        double ld = 0.0;
        for (double eps = 1e-12; !detail::pd_logdet(x, ld); eps *= 10.0) x += eps * scale * CMat::Identity(n, n);
    }

    // Solve in Y_b = L_b^-1 X_b L_b^-H with X_b(start) = L_b L_b^H, so the start is the identity.
    std::vector<CMat> lf(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        lf[b] = Eigen::LLT<CMat>(start.x[b]).matrixL();
        start.x[b] = CMat::Identity(p.block_dims[b], p.block_dims[b]);
    }
    Problem ps = detail::congruence(p, lf);
    auto unscale = [&](std::vector<CMat>& y) {
        for (std::size_t b = 0; b < nb; ++b) y[b] = hermitian_part(lf[b] * y[b] * lf[b].adjoint());
    };

    // Phase I: minimize the slack that relaxes every non-block constraint.
    const double viol = max_violation(ps, start);
    if (!std::isfinite(viol)) {
        res.status = Status::NumericalFailure;
        res.message = "start point outside the log domain";
        return res;
    }
    if (viol >= 0.0) {
        Problem p1 = ps;
        const int sidx = p1.add_z();
        p1.obj_z.setZero();
        p1.obj_z(sidx) = 1.0;
        for (auto& b : p1.obj_blocks) b.resize(0, 0);
        p1.obj_const = 0.0;
        for (auto& l : p1.lmis)
            for (int i = 0; i < l.dim; ++i) l.at(i, i).add_z(sidx, 1.0);
        for (auto& l : p1.linears) l.lhs.add_z(sidx, -1.0);
        for (auto& l : p1.loghypos) l.t.add_z(sidx, -1.0);
        p1.linears.push_back({LinearForm{}.add_z(sidx, -1.0).add_constant(-1.0)});
        double total_trace = 0.0;
        for (const auto& x : start.x) total_trace += x.trace().real();
        for (std::size_t b = 0; b < nb; ++b) {
            const int n = ps.block_dims[b];
            const double tau = s.phase1_trace_factor * std::max(total_trace, 1e-300);
            p1.linears.push_back(
                {LinearForm{}.add_block(static_cast<int>(b), LowRankHermitian::selector(n, 0, n, 1.0 / tau))
                     .add_constant(-1.0)});
        }
        Point pt = start;
        pt.z.conservativeResize(p1.nz);
        pt.z(sidx) = viol + 1.0;
        double t = 0.0;
        const auto why = detail::barrier(p1, pt, s, res.newton_steps, t,
                                         [&](const Point& q, double, double) { return q.z(sidx) < -1e-3; });
        const double sval = pt.z(sidx);
        if (why == detail::StopReason::Numerical || why == detail::StopReason::Stalled ||
            why == detail::StopReason::MaxIterations) {
            if (!(sval < 0.0)) {
                res.status = why == detail::StopReason::MaxIterations ? Status::MaxIterations : Status::NumericalFailure;
                res.message = "phase I did not reach a feasible point";
                return res;
            }
        } else if (!(sval < 0.0)) {
            res.status = Status::Infeasible;
            res.message = "phase I optimum " + std::to_string(sval) + " > 0";
            return res;
        }
        start.x = pt.x;
        start.z = pt.z.head(ps.nz);
    }

    // Re-center the scaling whenever a block drifts far from the identity; the
    // Newton systems lose accuracy long before the iterate stops improving.
    auto drifted = [&](const Point& q) {
        for (std::size_t b = 0; b < nb; ++b) {
            const double n = static_cast<double>(ps.block_dims[b]);
            const Eigen::LLT<CMat> llt(q.x[b]);
            if (llt.info() != Eigen::Success) return false;
            const double inv_tr = llt.solve(CMat::Identity(q.x[b].rows(), q.x[b].cols())).trace().real();
            if (q.x[b].trace().real() > s.rescale_ratio * n || inv_tr > s.rescale_ratio * n) return true;
        }
        return false;
    };
    Point pt = start;
    double t = 0.0;
    detail::StopReason why;
    for (int rescales = 0;; ++rescales) {
        bool rescale = false;
        why = detail::barrier(ps, pt, s, res.newton_steps, t, [&](const Point& q, double, double) {
            rescale = rescales < s.max_rescales && drifted(q);
            return rescale;
        });
        if (!rescale) break;
        for (std::size_t b = 0; b < nb; ++b) {
            lf[b] = Eigen::LLT<CMat>(hermitian_part(lf[b] * pt.x[b] * lf[b].adjoint())).matrixL();
            pt.x[b] = CMat::Identity(ps.block_dims[b], ps.block_dims[b]);
        }
        ps = detail::congruence(p, lf);
    }
    res.objective = ps.objective(pt.x, pt.z);
    unscale(pt.x);
    res.point = pt;
    res.gap = detail::Engine(ps).nu() / std::max(t, 1e-300);
    switch (why) {
    case detail::StopReason::Converged:
    case detail::StopReason::EarlyExit: res.status = Status::Optimal; break;
    case detail::StopReason::MaxIterations: res.status = Status::MaxIterations; break;
    case detail::StopReason::Unbounded: res.status = Status::Unbounded; break;
    case detail::StopReason::Numerical: res.status = Status::NumericalFailure; break;
    case detail::StopReason::Stalled:
        // Accept the last (strictly feasible) iterate when its gap is already small.
        res.status = res.gap <= s.stall_gap * std::max(1.0, std::abs(res.objective)) ? Status::Optimal
                                                                                     : Status::NumericalFailure;
        break;
    }
    res.message = to_string(res.status);
    if (why == detail::StopReason::Stalled) res.message += " (stalled at gap " + std::to_string(res.gap) + ")";
    return res;
}

}  // namespace leoisac::conic

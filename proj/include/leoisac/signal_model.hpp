// SPDX-License-Identifier: Apache-2.0
//
// leoisac: cooperative communication and location sensing for LEO constellations
// ------------------------------------------------------------------------
//
// Dual-function transmit model: per-satellite power, UE rates and the
// aggregated multistatic echo y = alpha (A (.) B)(V s + r) + n.
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "leoisac/core.hpp"
#include "leoisac/scene.hpp"

namespace leoisac {

/// Communication beams w_m (stacked over satellites) and the sensing waveform r.
struct BeamformingSolution {
    std::vector<CVec> w;  // M entries of length NK
    CVec r;

    int nk() const { return static_cast<int>(r.size()); }
    int m() const { return static_cast<int>(w.size()); }

    /// V = [w_1, ..., w_M], NK x M.
    CMat v() const {
        CMat out(r.size(), static_cast<Eigen::Index>(w.size()));
        for (std::size_t i = 0; i < w.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = w[i];
        return out;
    }

    std::vector<CMat> lifted_w() const {
        std::vector<CMat> out;
        for (const auto& x : w) out.push_back(x * x.adjoint());
        return out;
    }
    CMat lifted_r() const { return r * r.adjoint(); }

    /// S = R + sum_m W_m.
    CMat covariance() const {
        CMat s = lifted_r();
        for (const auto& x : w) s += x * x.adjoint();
        return s;
    }

    BeamformingSolution scaled(double c) const {
        BeamformingSolution o = *this;
        for (auto& x : o.w) x *= c;
        o.r *= c;
        return o;
    }

    static BeamformingSolution zeros(int nk, int m) {
        return {std::vector<CVec>(static_cast<std::size_t>(m), CVec::Zero(nk)), CVec::Zero(nk)};
    }
};

/// Sum of squared entries of block k (length n) of v.
inline double block_energy(const CVec& v, int k, int n) { return v.segment(k * n, n).squaredNorm(); }

inline double transmit_power(const BeamformingSolution& sol, int k, int n) {
    if (k < 0 || k * n >= sol.nk()) fail(ErrorKind::Parameter, "satellite index out of range");
    double p = block_energy(sol.r, k, n);
    for (const auto& x : sol.w) p += block_energy(x, k, n);
    return p;
}

/// tr(sum_m Lambda_k W_m Lambda_k^T + Lambda_k R Lambda_k^T).
inline double transmit_power_lifted(const std::vector<CMat>& w, const CMat& r, int k, int n) {
    double p = r.block(k * n, k * n, n, n).trace().real();
    for (const auto& x : w) p += x.block(k * n, k * n, n, n).trace().real();
    return p;
}

inline double ue_sinr(const BeamformingSolution& sol, const CVec& h, int i, double sigma2) {
    if (!(sigma2 > 0.0)) fail(ErrorKind::Parameter, "UE noise power must be > 0");
    double interference = std::norm(sol.r.dot(h)) + sigma2;
    for (int m = 0; m < sol.m(); ++m)
        if (m != i) interference += std::norm(sol.w[static_cast<std::size_t>(m)].dot(h));
    return std::norm(sol.w[static_cast<std::size_t>(i)].dot(h)) / interference;
}

inline double ue_rate(const BeamformingSolution& sol, const CVec& h, int i, double sigma2) {
    return std::log2(1.0 + ue_sinr(sol, h, i, sigma2));
}

/// Trace form: log2(tr(sum_m W_m H) + tr(R H) + s2) - log2(sum_{m != i} tr(W_m H) + tr(R H) + s2), H = h h^H.
inline double ue_rate_lifted(const std::vector<CMat>& w, const CMat& r, const CVec& h, int i, double sigma2) {
    if (!(sigma2 > 0.0)) fail(ErrorKind::Parameter, "UE noise power must be > 0");
    const CMat hh = h * h.adjoint();
    auto tr = [&](const CMat& x) { return (x * hh).trace().real(); };
    double interference = tr(r) + sigma2;
    for (std::size_t m = 0; m < w.size(); ++m)
        if (static_cast<int>(m) != i) interference += tr(w[m]);
    const double total = interference + tr(w[static_cast<std::size_t>(i)]);
    return std::log2(total) - std::log2(interference);
}

inline VecX ue_rates(const BeamformingSolution& sol, const SceneSnapshot& sc) {
    VecX r(sc.m());
    for (int i = 0; i < sc.m(); ++i) r(i) = ue_rate(sol, sc.h[static_cast<std::size_t>(i)], i, sc.sigma_ue2(i));
    return r;
}

// ---------------------------------------------------------------------------
// Symbols and observations

struct SymbolBlock {
    CVec s;
    std::string constellation = "qpsk";
};

inline SymbolBlock draw_symbols(int m, Rng& rng) {
    std::uniform_int_distribution<int> q(0, 3);
    SymbolBlock b;
    b.s.resize(m);
    for (int i = 0; i < m; ++i) b.s(i) = std::polar(1.0, kPi / 4.0 + kPi / 2.0 * q(rng));
    return b;
}

/// Transmitted stack x = V s + r.
inline CVec transmit_stack(const BeamformingSolution& sol, const CVec& s) {
    if (s.size() != sol.m()) fail(ErrorKind::Parameter, "symbol count does not match number of beams");
    CVec x = sol.r;
    for (int m = 0; m < sol.m(); ++m) x += sol.w[static_cast<std::size_t>(m)] * s(m);
    return x;
}

/// u = alpha (A (.) B)(V s + r).
inline CVec mean_vector(const SceneSnapshot& sc, const BeamformingSolution& sol, const CVec& s, double alpha) {
    return alpha * apply_ab(sc.steering, sc.gains.beta, transmit_stack(sol, s));
}

struct SensingObservation {
    CVec y;
    double noise_power = 0.0;
};

inline SensingObservation synthesize_received(const SceneSnapshot& sc, const BeamformingSolution& sol,
                                              const SymbolBlock& s, double alpha, Rng& rng, bool noiseless) {
    SensingObservation obs{mean_vector(sc, sol, s.s, alpha), noiseless ? 0.0 : sc.sigma_n2};
    if (!noiseless) {
        const double sd = std::sqrt(sc.sigma_n2);
        for (Eigen::Index i = 0; i < obs.y.size(); ++i) obs.y(i) += sd * complex_normal(rng);
    }
    return obs;
}

// ---------------------------------------------------------------------------
// Binary dump: "LISY", u32 version, u64 length, then interleaved re/im f64, little-endian.

inline constexpr std::uint32_t kObservationFormatVersion = 1;

inline void write_observation(const std::string& path, const CVec& y) {
    static_assert(std::endian::native == std::endian::little, "binary dump assumes a little-endian host");
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(ErrorKind::Io, "cannot open " + path);
    const std::uint64_t len = static_cast<std::uint64_t>(y.size());
    f.write("LISY", 4);
    f.write(reinterpret_cast<const char*>(&kObservationFormatVersion), 4);
    f.write(reinterpret_cast<const char*>(&len), 8);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const std::array<double, 2> v{y(i).real(), y(i).imag()};
        f.write(reinterpret_cast<const char*>(v.data()), 16);
    }
    if (!f) fail(ErrorKind::Io, "write failed for " + path);
}

inline CVec read_observation(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorKind::Io, "cannot open " + path);
    char magic[4];
    std::uint32_t version = 0;
    std::uint64_t len = 0;
    f.read(magic, 4);
    f.read(reinterpret_cast<char*>(&version), 4);
    f.read(reinterpret_cast<char*>(&len), 8);
    if (!f || std::memcmp(magic, "LISY", 4) != 0) fail(ErrorKind::Io, "bad observation header in " + path);
    if (version != kObservationFormatVersion) fail(ErrorKind::Io, "unsupported observation version");
    CVec y(static_cast<Eigen::Index>(len));
    for (std::uint64_t i = 0; i < len; ++i) {
        std::array<double, 2> v{};
        f.read(reinterpret_cast<char*>(v.data()), 16);
        y(static_cast<Eigen::Index>(i)) = {v[0], v[1]};
    }
    if (!f) fail(ErrorKind::Io, "truncated observation file " + path);
    return y;
}

}  // namespace leoisac

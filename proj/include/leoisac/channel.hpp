// SPDX-License-Identifier: Apache-2.0
//
// leoisac: cooperative communication and location sensing for LEO constellations
// ------------------------------------------------------------------------
//
// Satellite-to-ground Rician channels with free-space loss, rain attenuation
// and a Bessel-pattern antenna, UPA steering vectors, and the multistatic
// sensing matrices A(theta, phi) and B(beta).
#pragma once

#include <limits>
#include <string>
#include <vector>

#include "leoisac/core.hpp"
#include "leoisac/geometry.hpp"

namespace leoisac::channel {

struct ArrayGeometry {
    int nx = 4;
    int nz = 4;
    double spacing_over_wavelength = 0.5;
    double wavelength_m = 3e8 / 35e9;

    int size() const { return nx * nz; }
    void validate() const {
        if (nx < 1 || nz < 1) fail(ErrorKind::Config, "array dimensions must be >= 1");
        if (!(spacing_over_wavelength > 0.0)) fail(ErrorKind::Config, "element spacing must be > 0");
        if (!(wavelength_m > 0.0)) fail(ErrorKind::Config, "wavelength must be > 0");
    }
};

enum class RainModel { Db, Ln, None };

inline RainModel parse_rain_model(const std::string& s) {
    if (s == "db") return RainModel::Db;
    if (s == "ln") return RainModel::Ln;
    if (s == "none") return RainModel::None;
    fail(ErrorKind::Config, "unknown rain model '" + s + "' (expected db, ln or none)");
}

inline std::string to_string(RainModel m) {
    switch (m) {
    case RainModel::Db: return "db";
    case RainModel::Ln: return "ln";
    case RainModel::None: return "none";
    }
    return "?";
}

/// Link-budget and propagation parameters, linear units unless the name says otherwise.
struct ChannelParams {
    double rician_factor_linear = 10.0;
    double carrier_hz = 35e9;
    double bandwidth_hz = 20e6;
    double g_over_t_db_per_k = 34.0;
    double boltzmann = 1.38e-23;
    double noise_power_dbm = -110.0;
    double rain_mu_db = -2.6;
    double rain_sigma2_db = 1.63;
    RainModel rain_model = RainModel::Db;
    bool random_phase = true;
    double antenna_max_gain_dbi = 16.0;
    double half_power_angle_deg = 0.4;
    double antenna_gain_exponent = 3.0;
    double speed_of_light = 3e8;
    double min_distance_km = 550.0;
    double max_distance_km = 2700.0;

    double wavelength_m() const { return speed_of_light / carrier_hz; }

    void validate() const {
        if (rician_factor_linear < 0.0) fail(ErrorKind::Config, "rician factor must be >= 0");
        if (!(carrier_hz > 0.0) || !(bandwidth_hz > 0.0) || !(boltzmann > 0.0) || !(speed_of_light > 0.0))
            fail(ErrorKind::Config, "carrier, bandwidth, boltzmann and speed of light must be > 0");
        if (rain_sigma2_db < 0.0) fail(ErrorKind::Config, "rain variance must be >= 0");
        if (!(half_power_angle_deg > 0.0)) fail(ErrorKind::Config, "half-power angle must be > 0");
        if (!(antenna_gain_exponent > 0.0)) fail(ErrorKind::Config, "antenna gain exponent must be > 0");
    }
};

// ---------------------------------------------------------------------------
// Steering vectors

/// UPA response, element (ix, iz) at index ix * nz + iz, unit norm.
inline CVec steering_vector(double theta, double phi, const ArrayGeometry& arr) {
    const int n = arr.size();
    CVec a(n);
    const double kx = 2.0 * kPi * arr.spacing_over_wavelength * std::cos(phi) * std::sin(theta);
    const double kz = 2.0 * kPi * arr.spacing_over_wavelength * std::cos(theta);
    const double scale = 1.0 / std::sqrt(static_cast<double>(n));
    for (int ix = 0; ix < arr.nx; ++ix)
        for (int iz = 0; iz < arr.nz; ++iz)
            a(ix * arr.nz + iz) = scale * std::exp(kJ * (kx * ix + kz * iz));
    return a;
}

/// Partial derivatives of steering_vector with respect to theta and phi.
inline std::pair<CVec, CVec> steering_derivatives(double theta, double phi, const ArrayGeometry& arr) {
    const CVec a = steering_vector(theta, phi, arr);
    const double c = 2.0 * kPi * arr.spacing_over_wavelength;
    CVec dt(a.size()), dp(a.size());
    for (int ix = 0; ix < arr.nx; ++ix) {
        for (int iz = 0; iz < arr.nz; ++iz) {
            const int i = ix * arr.nz + iz;
            const double gt = c * (ix * std::cos(phi) * std::cos(theta) - iz * std::sin(theta));
            const double gp = -c * ix * std::sin(phi) * std::sin(theta);
            dt(i) = kJ * gt * a(i);
            dp(i) = kJ * gp * a(i);
        }
    }
    return {dt, dp};
}

// ---------------------------------------------------------------------------
// Antenna pattern

/// J1(u)/(2u) + 36 J3(u)/u^3 from the Bessel functions.
inline double pattern_kernel_bessel(double u) {
    return std::cyl_bessel_j(1.0, u) / (2.0 * u) + 36.0 * std::cyl_bessel_j(3.0, u) / (u * u * u);
}

/// Same kernel from its Taylor expansion about u = 0.
inline double pattern_kernel_series(double u) {
    const double u2 = u * u, u4 = u2 * u2, u6 = u4 * u2;
    const double j1 = 0.25 * (1.0 - u2 / 8.0 + u4 / 192.0 - u6 / 9216.0);
    const double j3 = (1.0 / 8.0) * (1.0 / 6.0 - (u2 / 4.0) / 24.0 + (u4 / 16.0) / 240.0 - (u6 / 64.0) / 4320.0);
    return j1 + 36.0 * j3;
}

inline double pattern_kernel(double u) {
    return std::abs(u) < 1e-3 ? pattern_kernel_series(std::abs(u)) : pattern_kernel_bessel(std::abs(u));
}

/// Linear gain at off-boresight angle eps (rad).
inline double antenna_gain_at(double eps, const ChannelParams& p) {
    const double u = 2.071 * std::sin(eps) / std::sin(deg_to_rad(p.half_power_angle_deg));
    const double k = pattern_kernel(u);
    return db_to_linear(p.antenna_max_gain_dbi) * std::pow(std::abs(k), p.antenna_gain_exponent);
}

/// Angle between the satellite nadir and the direction to `ue`.
inline double off_boresight_angle(const Vec3& sat, const Vec3& ue) {
    const Vec3 d = ue - sat;
    if (d.norm() == 0.0) fail(ErrorKind::Geometry, "UE coincides with satellite");
    const Vec3 nadir = -sat.normalized();
    return std::acos(std::clamp(nadir.dot(d.normalized()), -1.0, 1.0));
}

/// Per-element gain vector (all elements share the boresight angle).
inline VecX antenna_gain(const Vec3& sat, const Vec3& ue, const ChannelParams& p, int n,
                         std::vector<std::string>* warnings = nullptr) {
    const double eps = off_boresight_angle(sat, ue);
    if (eps >= kPi / 2.0 && warnings) warnings->push_back("UE outside satellite footprint (eps >= pi/2)");
    return VecX::Constant(n, antenna_gain_at(eps, p));
}

// ---------------------------------------------------------------------------
// Channels

/// Free-space amplitude sqrt((c / (4 pi f d))^2 * (G/T) / (kappa B)), d in km.
inline double free_space_amplitude(double distance_km, const ChannelParams& p) {
    const double d = distance_km * 1e3;
    const double fs = p.speed_of_light / (4.0 * kPi * p.carrier_hz * d);
    return std::sqrt(fs * fs * db_to_linear(p.g_over_t_db_per_k) / (p.boltzmann * p.bandwidth_hz));
}

/// One draw of xi^(1/2).
inline double rain_amplitude(const ChannelParams& p, Rng& rng) {
    if (p.rain_model == RainModel::None) return 1.0;
    std::normal_distribution<double> n(p.rain_mu_db, std::sqrt(p.rain_sigma2_db));
    const double x = n(rng);
    return p.rain_model == RainModel::Db ? std::pow(10.0, x / 20.0) : std::exp(x);
}

inline CVec channel_gain(const Vec3& sat, const Vec3& ue, const ChannelParams& p, int n, Rng& rng,
                         std::vector<std::string>* warnings = nullptr) {
    const double d = (ue - sat).norm();
    if (warnings && (d < p.min_distance_km || d > p.max_distance_km))
        warnings->push_back("satellite-UE distance " + std::to_string(d) + " km outside validity band");
    const double amp = free_space_amplitude(d, p);
    const VecX b = antenna_gain(sat, ue, p, n, warnings);
    std::uniform_real_distribution<double> ph(0.0, 2.0 * kPi);
    CVec g(n);
    for (int i = 0; i < n; ++i) {
        const double xi = rain_amplitude(p, rng);
        const double psi = p.random_phase ? ph(rng) : 0.0;
        g(i) = amp * xi * std::exp(-kJ * psi) * std::sqrt(b(i));
    }
    return g;
}

struct ChannelRealization {
    CVec h;
    CVec gain;
    CVec los;
    CVec nlos;
    VecX antenna;
};

inline ChannelRealization sample_channel(const Vec3& sat, const Vec3& ue, const ArrayGeometry& arr,
                                         const ChannelParams& p, Rng& rng,
                                         std::vector<std::string>* warnings = nullptr) {
    const int n = arr.size();
    ChannelRealization out;
    out.antenna = antenna_gain(sat, ue, p, n);
    out.gain = channel_gain(sat, ue, p, n, rng, warnings);
    const auto [theta, phi] = geometry::target_angles(sat, ue);
    out.los = std::sqrt(static_cast<double>(n)) * steering_vector(theta, phi, arr);
    out.nlos.resize(n);
    for (int i = 0; i < n; ++i) out.nlos(i) = complex_normal(rng);
    const double lam = p.rician_factor_linear;
    double w_los = 1.0, w_nlos = 0.0;
    if (std::isfinite(lam)) {
        w_los = std::sqrt(lam / (lam + 1.0));
        w_nlos = std::sqrt(1.0 / (lam + 1.0));
    }
    out.h = out.gain.cwiseProduct(w_los * out.los + w_nlos * out.nlos);
    return out;
}

// ---------------------------------------------------------------------------
// Sensing

/// beta(k, u): gain of the path transmitter k -> target -> receiver u.
struct SensingGains {
    CMat beta;

    static SensingGains unit(int k) { return {CMat::Ones(k, k)}; }

    /// Two-hop free-space amplitude sqrt(lambda^2 / ((4 pi)^3 d_kp^2 d_pu^2)), distances in metres.
    static SensingGains two_hop(const std::vector<Vec3>& sats, const Vec3& target, double wavelength_m) {
        const auto k = static_cast<Eigen::Index>(sats.size());
        CMat b(k, k);
        for (Eigen::Index t = 0; t < k; ++t)
            for (Eigen::Index r = 0; r < k; ++r) {
                const double dt = (sats[static_cast<std::size_t>(t)] - target).norm() * 1e3;
                const double dr = (sats[static_cast<std::size_t>(r)] - target).norm() * 1e3;
                b(t, r) = std::sqrt(wavelength_m * wavelength_m / (std::pow(4.0 * kPi, 3) * dt * dt * dr * dr));
            }
        return {b};
    }
};

/// Receive/transmit steering stacks for a set of angles. Transmit and receive
/// share the array so a_r = a_t.
struct SteeringStack {
    std::vector<CVec> a;  // one per satellite
    int n = 0;

    static SteeringStack build(const geometry::AngleSet& ang, const ArrayGeometry& arr) {
        SteeringStack s;
        s.n = arr.size();
        for (Eigen::Index k = 0; k < ang.size(); ++k) s.a.push_back(steering_vector(ang.elevation(k), ang.azimuth(k), arr));
        return s;
    }

    int k() const { return static_cast<int>(a.size()); }

    CVec stacked() const {
        CVec v(n * k());
        for (int i = 0; i < k(); ++i) v.segment(i * n, n) = a[static_cast<std::size_t>(i)];
        return v;
    }
};

/// A = [a_r(1); ...; a_r(K)] [a_t(1)^H, ..., a_t(K)^H].
inline CMat sensing_matrix_a(const SteeringStack& s) {
    const CVec v = s.stacked();
    return v * v.adjoint();
}

/// B = [beta_1, ..., beta_K]^T kron 1_{NxN}: block (u, k) is beta(k, u).
inline CMat sensing_matrix_b(const SensingGains& g, int n) {
    const auto k = g.beta.rows();
    CMat b(n * k, n * k);
    for (Eigen::Index u = 0; u < k; ++u)
        for (Eigen::Index t = 0; t < k; ++t) b.block(u * n, t * n, n, n).setConstant(g.beta(t, u));
    return b;
}

inline std::pair<CMat, CMat> sensing_matrices(const std::vector<Vec3>& sats, const Vec3& target,
                                              const ArrayGeometry& arr, const SensingGains& g) {
    if (g.beta.rows() != static_cast<Eigen::Index>(sats.size()) || g.beta.cols() != g.beta.rows())
        fail(ErrorKind::Parameter, "sensing gain matrix must be K x K");
    const auto ang = geometry::target_angles(sats, target);
    const auto s = SteeringStack::build(ang, arr);
    return {sensing_matrix_a(s), sensing_matrix_b(g, arr.size())};
}

}  // namespace leoisac::channel

// SPDX-License-Identifier: Apache-2.0
//
// leoisac: cooperative communication and location sensing for LEO constellations
// ------------------------------------------------------------------------
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace leoisac {

using cd = std::complex<double>;
using Vec3 = Eigen::Vector3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr cd kJ{0.0, 1.0};

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
    Config,       ///< invalid or inconsistent configuration
    Geometry,     ///< degenerate geometry (coincident points, singular Jacobian)
    Group,        ///< serving group cannot be formed
    Parameter,    ///< invalid argument to a numerical routine
    Signal,       ///< degenerate signal (zero matched-filter energy)
    Resource,     ///< requested work exceeds a hard limit
    Infeasible,   ///< optimization instance has no feasible point
    Numerical,    ///< numerical breakdown
    Io,           ///< file or parse failure
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Geometry: return "geometry";
    case ErrorKind::Group: return "group";
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Signal: return "signal";
    case ErrorKind::Resource: return "resource";
    case ErrorKind::Infeasible: return "infeasible";
    case ErrorKind::Numerical: return "numerical";
    case ErrorKind::Io: return "io";
    }
    return "unknown";
}

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watt_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }
inline double deg_to_rad(double d) { return d * kPi / 180.0; }

// ---------------------------------------------------------------------------
// Seeding. Every random quantity is drawn from an engine whose seed is derived
// from the master seed and a path of integer tags, so results do not depend
// on evaluation order.

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = splitmix64(master);
    for (auto p : path) s = splitmix64(s ^ splitmix64(p + 0x632BE59BD9B4E019ULL));
    return s;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    return Rng(derive_seed(master, path));
}

/// Standard circularly-symmetric complex Gaussian, E|z|^2 = 1.
inline cd complex_normal(Rng& rng) {
    std::normal_distribution<double> n(0.0, std::sqrt(0.5));
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

/// Hermitian part, (A + A^H) / 2.
inline CMat hermitian_part(const CMat& a) { return 0.5 * (a + a.adjoint()); }

}  // namespace leoisac

// SPDX-License-Identifier: Apache-2.0
//
// leoisac: cooperative communication and location sensing for LEO constellations
// ------------------------------------------------------------------------
//
// Walker-Delta constellation snapshots, serving-group selection, UE placement
// and the target angle model (elevation/azimuth in the ECEF frame) together
// with its analytic Jacobian with respect to target position.
//
// All positions are ECEF kilometres at a single frozen epoch.
#pragma once

#include <algorithm>
#include <compare>
#include <string>
#include <vector>

#include "leoisac/core.hpp"

namespace leoisac::geometry {

inline constexpr double kEarthRadiusKm = 6371.0;

struct ConstellationConfig {
    double orbital_altitude_km = 550.0;  // H#
    int num_planes = 72;                 // P#
    int sats_per_plane = 22;             // N#
    double inclination_deg = 53.0;       // I#
    int phase_factor = 1;                // F#
    double earth_radius_km = kEarthRadiusKm;
    double max_power_dbm = 30.0;

    void validate() const {
        if (num_planes < 1) fail(ErrorKind::Config, "num_planes must be >= 1");
        if (sats_per_plane < 1) fail(ErrorKind::Config, "sats_per_plane must be >= 1");
        if (phase_factor < 0 || phase_factor >= num_planes)
            fail(ErrorKind::Config, "phase_factor must satisfy 0 <= F < num_planes");
        if (!(orbital_altitude_km > 0.0)) fail(ErrorKind::Config, "orbital_altitude_km must be > 0");
        if (!(earth_radius_km > 0.0)) fail(ErrorKind::Config, "earth_radius_km must be > 0");
    }

    double orbit_radius_km() const { return earth_radius_km + orbital_altitude_km; }
};

struct SatIndex {
    int plane = 0;
    int slot = 0;
    auto operator<=>(const SatIndex&) const = default;
};

struct SatelliteState {
    SatIndex index;
    Vec3 position_km = Vec3::Zero();
    double max_power_dbm = 30.0;
};

enum class CollaborationType { I, II, III };

inline std::string to_string(CollaborationType t) {
    switch (t) {
    case CollaborationType::I: return "I";
    case CollaborationType::II: return "II";
    case CollaborationType::III: return "III";
    }
    return "?";
}

inline CollaborationType parse_collaboration_type(const std::string& s) {
    if (s == "I" || s == "1") return CollaborationType::I;
    if (s == "II" || s == "2") return CollaborationType::II;
    if (s == "III" || s == "3") return CollaborationType::III;
    fail(ErrorKind::Config, "unknown collaboration type '" + s + "'");
}

/// Central satellite plus its auxiliaries, as indices into the constellation list.
struct ServingGroup {
    std::size_t central = 0;
    std::vector<std::size_t> auxiliaries;
    CollaborationType type = CollaborationType::I;

    std::size_t size() const { return 1 + auxiliaries.size(); }
    std::vector<std::size_t> members() const {
        std::vector<std::size_t> m{central};
        m.insert(m.end(), auxiliaries.begin(), auxiliaries.end());
        return m;
    }
};

struct TargetState {
    Vec3 position_km = Vec3::Zero();
    double reflection_coeff = 1.0;  // alpha, real and positive
};

/// Elevation theta_k in [0, pi] and azimuth phi_k in (-pi, pi], one per satellite.
struct AngleSet {
    VecX elevation;
    VecX azimuth;

    Eigen::Index size() const { return elevation.size(); }
    /// Stacked [theta; phi].
    VecX stacked() const {
        VecX o(2 * size());
        o << elevation, azimuth;
        return o;
    }
    static AngleSet from_stacked(const VecX& omega) {
        const Eigen::Index k = omega.size() / 2;
        return AngleSet{omega.head(k), omega.tail(k)};
    }
};

// ---------------------------------------------------------------------------

/// Position of a point on a circular orbit: Rz(raan) * Rx(incl) * (r cos u, r sin u, 0).
inline Vec3 orbit_position(double radius, double raan, double inclination, double arg_latitude) {
    const double cu = std::cos(arg_latitude), su = std::sin(arg_latitude);
    const double co = std::cos(raan), so = std::sin(raan);
    const double ci = std::cos(inclination), si = std::sin(inclination);
    return {radius * (co * cu - so * su * ci), radius * (so * cu + co * su * ci), radius * (su * si)};
}

/// Walker-Delta pattern P#/N#/F# at epoch angle 0, ordered plane-major.
inline std::vector<SatelliteState> build_walker_delta(const ConstellationConfig& cfg) {
    cfg.validate();
    const int planes = cfg.num_planes;
    const int per_plane = cfg.sats_per_plane;
    const double radius = cfg.orbit_radius_km();
    const double incl = deg_to_rad(cfg.inclination_deg);

    std::vector<SatelliteState> sats;
    sats.reserve(static_cast<std::size_t>(planes) * per_plane);
    for (int p = 0; p < planes; ++p) {
        const double raan = 2.0 * kPi * p / planes;
        for (int n = 0; n < per_plane; ++n) {
            const double u = 2.0 * kPi * n / per_plane +
                             2.0 * kPi * cfg.phase_factor * p / (static_cast<double>(planes) * per_plane);
            sats.push_back({{p, n}, orbit_position(radius, raan, incl, u), cfg.max_power_dbm});
        }
    }
    return sats;
}

inline std::size_t find_satellite(const std::vector<SatelliteState>& sats, SatIndex idx) {
    for (std::size_t i = 0; i < sats.size(); ++i)
        if (sats[i].index == idx) return i;
    fail(ErrorKind::Group, "no satellite at plane " + std::to_string(idx.plane) + " slot " +
                               std::to_string(idx.slot));
}

namespace detail {

// Candidates sorted by Euclidean distance to the central satellite, ties by (plane, slot).
inline std::vector<std::size_t> nearest_first(const std::vector<SatelliteState>& sats, std::size_t central,
                                              std::vector<std::size_t> pool) {
    const Vec3& c = sats[central].position_km;
    std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        const double da = (sats[a].position_km - c).norm();
        const double db = (sats[b].position_km - c).norm();
        if (da != db) return da < db;
        return sats[a].index < sats[b].index;
    });
    return pool;
}

inline std::vector<std::size_t> plane_members(const std::vector<SatelliteState>& sats, int plane,
                                              std::size_t exclude) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sats.size(); ++i)
        if (sats[i].index.plane == plane && i != exclude) out.push_back(i);
    return out;
}

}  // namespace detail

/// Choose the serving group around `central`.
///
/// Type I takes the k_total-1 nearest satellites of the central plane. Type II
/// always includes the nearest satellite of each adjacent plane and fills the
/// rest from the central plane. Type III keeps up to two in-plane neighbours
/// and fills the remaining slots with the nearest adjacent-plane satellites,
/// which always contain the type-II picks. Selection inside each category is
/// nearest-by-distance, so every chosen member is no farther than any
/// unchosen candidate of the same category.
inline ServingGroup select_serving_group(const std::vector<SatelliteState>& sats, std::size_t central,
                                         CollaborationType type, int k_total) {
    if (central >= sats.size()) fail(ErrorKind::Group, "central satellite index out of range");
    if (k_total < 1) fail(ErrorKind::Group, "k_total must be >= 1");

    int num_planes = 0;
    for (const auto& s : sats) num_planes = std::max(num_planes, s.index.plane + 1);
    const int plane = sats[central].index.plane;

    const auto in_plane = detail::nearest_first(sats, central, detail::plane_members(sats, plane, central));
    std::vector<std::size_t> adjacent_pool;
    std::vector<std::vector<std::size_t>> per_adjacent;
    if (num_planes > 1) {
        std::vector<int> adj{(plane + num_planes - 1) % num_planes, (plane + 1) % num_planes};
        if (adj[0] == adj[1]) adj.pop_back();
        for (int a : adj) {
            auto m = detail::nearest_first(sats, central, detail::plane_members(sats, a, central));
            per_adjacent.push_back(m);
            adjacent_pool.insert(adjacent_pool.end(), m.begin(), m.end());
        }
        adjacent_pool = detail::nearest_first(sats, central, adjacent_pool);
    }

    const auto need = static_cast<std::size_t>(k_total - 1);
    ServingGroup g{central, {}, type};
    auto take = [&](const std::vector<std::size_t>& from, std::size_t count) {
        for (std::size_t i = 0; i < from.size() && count > 0; ++i) {
            if (std::find(g.auxiliaries.begin(), g.auxiliaries.end(), from[i]) != g.auxiliaries.end()) continue;
            g.auxiliaries.push_back(from[i]);
            --count;
        }
        if (count > 0) fail(ErrorKind::Group, "not enough neighbours for collaboration type " + to_string(type));
    };

    switch (type) {
    case CollaborationType::I:
        take(in_plane, need);
        break;
    case CollaborationType::II: {
        if (per_adjacent.empty()) fail(ErrorKind::Group, "type II needs at least two orbital planes");
        if (need < per_adjacent.size())
            fail(ErrorKind::Group, "type II needs k_total >= " + std::to_string(1 + per_adjacent.size()));
        const std::size_t n_in = need - per_adjacent.size();
        take(in_plane, n_in);
        for (const auto& m : per_adjacent) take(m, 1);
        break;
    }
    case CollaborationType::III: {
        if (per_adjacent.empty()) fail(ErrorKind::Group, "type III needs at least two orbital planes");
        const std::size_t n_in = std::min<std::size_t>(2, in_plane.size());
        if (need < n_in + per_adjacent.size())
            fail(ErrorKind::Group, "type III needs k_total >= " + std::to_string(1 + n_in + per_adjacent.size()));
        take(in_plane, n_in);
        // Nearest on each adjacent plane first, then the next-nearest of the pooled adjacent planes.
        const std::size_t n_adj = need - n_in;
        std::vector<std::size_t> firsts;
        for (const auto& m : per_adjacent)
            if (!m.empty()) firsts.push_back(m.front());
        for (auto f : firsts) take({f}, 1);
        take(adjacent_pool, n_adj - firsts.size());
        break;
    }
    }
    return g;
}

/// Elevation/azimuth of the target p seen from satellite q, measured in the ECEF axes.
inline std::pair<double, double> target_angles(const Vec3& q, const Vec3& p) {
    const Vec3 d = p - q;
    if (d.norm() == 0.0) fail(ErrorKind::Geometry, "target coincides with satellite");
    const double rho = std::hypot(d.x(), d.y());
    // atan(rho / dz) plus pi when dz < 0, written as atan2 to cover dz == 0.
    const double theta = std::atan2(rho, d.z());
    double phi = std::atan2(d.y(), d.x());
    if (phi <= -kPi) phi = kPi;
    return {theta, phi};
}

inline AngleSet target_angles(const std::vector<Vec3>& sats, const Vec3& p) {
    AngleSet a{VecX(static_cast<Eigen::Index>(sats.size())), VecX(static_cast<Eigen::Index>(sats.size()))};
    for (std::size_t k = 0; k < sats.size(); ++k) {
        const auto [t, f] = target_angles(sats[k], p);
        a.elevation(static_cast<Eigen::Index>(k)) = t;
        a.azimuth(static_cast<Eigen::Index>(k)) = f;
    }
    return a;
}

/// Inverse of target_angles given the range D.
inline Vec3 reconstruct_position(const Vec3& q, double theta, double phi, double range) {
    return q + range * Vec3(std::cos(phi) * std::sin(theta), std::sin(phi) * std::sin(theta), std::cos(theta));
}

/// d[theta; phi] / dp, shape 2K x 3, theta rows first.
inline MatX angle_jacobian(const std::vector<Vec3>& sats, const Vec3& p) {
    const auto k_count = static_cast<Eigen::Index>(sats.size());
    MatX jac = MatX::Zero(2 * k_count, 3);
    for (Eigen::Index k = 0; k < k_count; ++k) {
        const Vec3 d = p - sats[static_cast<std::size_t>(k)];
        const double rho2 = d.x() * d.x() + d.y() * d.y();
        if (rho2 == 0.0) fail(ErrorKind::Geometry, "singular angle Jacobian: target on the satellite z-axis");
        const double rho = std::sqrt(rho2);
        const double dd2 = rho2 + d.z() * d.z();
        jac(k, 0) = d.x() * d.z() / (dd2 * rho);
        jac(k, 1) = d.y() * d.z() / (dd2 * rho);
        jac(k, 2) = -rho / dd2;
        jac(k_count + k, 0) = -d.y() / rho2;
        jac(k_count + k, 1) = d.x() / rho2;
        jac(k_count + k, 2) = 0.0;
    }
    return jac;
}

/// Point on the Earth surface directly below `q`.
inline Vec3 subsatellite_point(const Vec3& q, double earth_radius_km = kEarthRadiusKm) {
    return q.normalized() * earth_radius_km;
}

/// Orthonormal (east, north, up)-style frame around the unit vector `up`.
inline Eigen::Matrix3d local_frame(const Vec3& up) {
    const Vec3 u = up.normalized();
    Vec3 ref = std::abs(u.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    const Vec3 e = ref.cross(u).normalized();
    const Vec3 n = u.cross(e);
    Eigen::Matrix3d f;
    f.col(0) = e;
    f.col(1) = n;
    f.col(2) = u;
    return f;
}

/// Uniform draws on the spherical cap of surface radius `footprint_radius_km`
/// centred on the sub-satellite point of the central satellite.
inline std::vector<Vec3> place_ues(const Vec3& central_position, int m, double footprint_radius_km, Rng& rng,
                                   double earth_radius_km = kEarthRadiusKm) {
    if (m < 1) fail(ErrorKind::Config, "number of UEs must be >= 1");
    if (footprint_radius_km < 0.0) fail(ErrorKind::Config, "footprint radius must be >= 0");
    const double cap = footprint_radius_km / earth_radius_km;
    if (cap > kPi / 2.0) fail(ErrorKind::Config, "footprint larger than a hemisphere");
    const Eigen::Matrix3d frame = local_frame(central_position);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double cos_cap = std::cos(cap);
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const double c = 1.0 - unit(rng) * (1.0 - cos_cap);
        const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
        const double az = 2.0 * kPi * unit(rng);
        const Vec3 local(s * std::cos(az), s * std::sin(az), c);
        out.push_back(earth_radius_km * (frame * local));
    }
    return out;
}

}  // namespace leoisac::geometry

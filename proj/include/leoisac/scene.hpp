// SPDX-License-Identifier: Apache-2.0
//
// leoisac: cooperative communication and location sensing for LEO constellations
// ------------------------------------------------------------------------
//
// SceneSnapshot freezes everything the optimizer and the estimator need: the
// serving group, the target, the UEs with their stacked channels, steering
// vectors toward the target, sensing gains and noise levels.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "leoisac/channel.hpp"
#include "leoisac/core.hpp"
#include "leoisac/geometry.hpp"

namespace leoisac {

enum class SensingGainModel { Unit, TwoHop };

struct SceneSpec {
    geometry::ConstellationConfig constellation;
    geometry::SatIndex central{0, 0};
    geometry::CollaborationType collab = geometry::CollaborationType::II;
    int num_sats = 5;  // K
    int num_ues = 10;  // M
    double footprint_radius_km = 50.0;
    double target_radius_km = 5.0;  // target drawn on the cap of this radius around the central nadir
    double target_altitude_km = 0.0;
    channel::ArrayGeometry array;
    channel::ChannelParams channel;
    double alpha = 1e-4;
    double sensing_noise_dbm = -110.0;
    SensingGainModel gain_model = SensingGainModel::Unit;
};

struct SceneSnapshot {
    std::vector<Vec3> sats;         // serving group positions, central first
    std::vector<geometry::SatIndex> sat_index;
    Vec3 target = Vec3::Zero();
    double alpha = 1.0;
    std::vector<Vec3> ues;
    channel::ArrayGeometry array;
    geometry::AngleSet angles;
    channel::SteeringStack steering;
    channel::SensingGains gains;
    std::vector<CVec> h;            // stacked NK channel per UE
    double sigma_n2 = 1e-14;        // sensing noise power, W
    VecX sigma_ue2;                 // per-UE noise power, W
    VecX p_max;                     // per-satellite budget, W
    std::vector<std::string> warnings;

    int k() const { return static_cast<int>(sats.size()); }
    int n() const { return array.size(); }
    int nk() const { return n() * k(); }
    int m() const { return static_cast<int>(h.size()); }

    /// Dense A (.) B.
    CMat ab() const { return channel::sensing_matrix_a(steering).cwiseProduct(channel::sensing_matrix_b(gains, n())); }

    /// Re-point the sensing model at a different target position.
    void set_target(const Vec3& p) {
        target = p;
        angles = geometry::target_angles(sats, p);
        steering = channel::SteeringStack::build(angles, array);
    }
};

/// (A (.) B) x using the block structure: y_u = a_u sum_k beta(k, u) a_k^H x_k.
inline CVec apply_ab(const channel::SteeringStack& s, const CMat& beta, const CVec& x) {
    const int n = s.n, k = s.k();
    CVec proj(k);
    for (int t = 0; t < k; ++t) proj(t) = s.a[static_cast<std::size_t>(t)].dot(x.segment(t * n, n));
    CVec y(n * k);
    for (int u = 0; u < k; ++u) {
        cd acc = 0.0;
        for (int t = 0; t < k; ++t) acc += beta(t, u) * proj(t);
        y.segment(u * n, n) = acc * s.a[static_cast<std::size_t>(u)];
    }
    return y;
}

/// Serving-group positions for a spec.
inline std::vector<geometry::SatelliteState> group_states(const SceneSpec& spec) {
    const auto all = geometry::build_walker_delta(spec.constellation);
    const auto c = geometry::find_satellite(all, spec.central);
    const auto g = geometry::select_serving_group(all, c, spec.collab, spec.num_sats);
    std::vector<geometry::SatelliteState> out;
    for (auto i : g.members()) out.push_back(all[i]);
    return out;
}

/// Build a snapshot. Geometry (UEs, target) comes from `geometry_seed`; channel
/// draws come from `channel_seed`, one independent stream per (satellite, UE).
inline SceneSnapshot build_scene(const SceneSpec& spec, std::uint64_t geometry_seed, std::uint64_t channel_seed) {
    spec.array.validate();
    spec.channel.validate();
    if (spec.num_ues < 0) fail(ErrorKind::Config, "number of UEs must be >= 0");
    if (!(spec.alpha > 0.0)) fail(ErrorKind::Config, "reflection coefficient must be > 0");

    SceneSnapshot sc;
    sc.array = spec.array;
    sc.alpha = spec.alpha;
    sc.sigma_n2 = dbm_to_watt(spec.sensing_noise_dbm);

    for (const auto& s : group_states(spec)) {
        sc.sats.push_back(s.position_km);
        sc.sat_index.push_back(s.index);
    }
    const int k = sc.k();
    const Vec3& central = sc.sats.front();
    sc.p_max = VecX::Constant(k, dbm_to_watt(spec.constellation.max_power_dbm));

    const double re = spec.constellation.earth_radius_km;
    Rng grng = make_rng(geometry_seed, {1});
    if (spec.num_ues > 0) sc.ues = geometry::place_ues(central, spec.num_ues, spec.footprint_radius_km, grng, re);
    Rng trng = make_rng(geometry_seed, {2});
    const Vec3 t = geometry::place_ues(central, 1, spec.target_radius_km, trng, re).front();
    sc.target = t * ((re + spec.target_altitude_km) / re);
    sc.set_target(sc.target);

    sc.gains = spec.gain_model == SensingGainModel::Unit
                   ? channel::SensingGains::unit(k)
                   : channel::SensingGains::two_hop(sc.sats, sc.target, spec.array.wavelength_m);

    const int n = sc.n();
    sc.sigma_ue2 = VecX::Constant(spec.num_ues, dbm_to_watt(spec.channel.noise_power_dbm));
    for (int m = 0; m < spec.num_ues; ++m) {
        CVec hm(n * k);
        for (int s = 0; s < k; ++s) {
            Rng crng = make_rng(channel_seed, {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(m)});
            const auto real = channel::sample_channel(sc.sats[static_cast<std::size_t>(s)],
                                                      sc.ues[static_cast<std::size_t>(m)], spec.array, spec.channel,
                                                      crng, &sc.warnings);
            hm.segment(s * n, n) = real.h;
        }
        sc.h.push_back(hm);
    }
    return sc;
}

}  // namespace leoisac

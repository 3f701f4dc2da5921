// SPDX-License-Identifier: Apache-2.0
//
// leoisac: cooperative communication and location sensing for LEO constellations
// ------------------------------------------------------------------------
//
// Experiment plumbing: strict JSON configuration, seeded Monte Carlo trials,
// one-axis sweeps, and the results.csv / manifest.json writers.
//
// Seeding uses common random numbers. Every stream is derived from the master
// seed and the trial index only, so all sweep points see the same draws and
// the aggregates do not depend on the order in which trials finish.
#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"
#include "leoisac/beamform.hpp"
#include "leoisac/core.hpp"
#include "leoisac/crb.hpp"
#include "leoisac/localization.hpp"
#include "leoisac/scene.hpp"
#include "leoisac/signal_model.hpp"

namespace leoisac::harness {

using json = nlohmann::ordered_json;

inline constexpr const char* kVersionTag = "leoisac-0.1.0";

enum class Method { Alg2, Zfbf };

/// What a Monte Carlo trial redraws. Geometry is the UE layout and the target.
enum class Redraw { Noise, Channel, Geometry };

inline std::string to_string(Method m) { return m == Method::Alg2 ? "alg2" : "zfbf"; }
inline std::string to_string(Redraw r) {
    switch (r) {
    case Redraw::Noise: return "noise";
    case Redraw::Channel: return "channel";
    case Redraw::Geometry: return "geometry";
    }
    return "?";
}

inline Method parse_method(const std::string& s) {
    if (s == "alg2") return Method::Alg2;
    if (s == "zfbf") return Method::Zfbf;
    fail(ErrorKind::Config, "unknown method '" + s + "' (expected alg2 or zfbf)");
}

inline Redraw parse_redraw(const std::string& s) {
    if (s == "noise") return Redraw::Noise;
    if (s == "channel") return Redraw::Channel;
    if (s == "geometry") return Redraw::Geometry;
    fail(ErrorKind::Config, "unknown redraw policy '" + s + "' (expected noise, channel or geometry)");
}

inline const std::vector<std::string>& sweep_axes() {
    static const std::vector<std::string> axes{"pmax_dbm",      "eta",           "collab_type",
                                               "array_size",    "sats_per_plane", "num_planes"};
    return axes;
}

struct SweepSpec {
    std::string axis;         // empty: a single point at the base configuration
    std::vector<json> values;
};

struct PsoSettings {
    int num_particles = 50;
    int max_iters = 40;
    double c1 = 1.5;
    double c2 = 1.5;
    double w_max = 0.8;
    double w_min = 0.4;
    double velocity_clamp = 0.2;
    double box_side_km = 20.0;
    bool frozen_coefficients = false;
};

struct ExperimentConfig {
    SceneSpec scene;
    PsoSettings pso;
    beamform::OptimizerConfig optimizer;
    Method method = Method::Alg2;
    Redraw redraw = Redraw::Channel;
    bool noiseless = false;
    bool locate = true;  // run the estimator and report rmse_m
    std::array<int, 3> k_by_type{3, 5, 7};  // group size used when sweeping collab_type
    SweepSpec sweep;
    int num_trials = 100;
    std::uint64_t master_seed = 1;
    int workers = 1;

    void validate() const {
        scene.constellation.validate();
        scene.array.validate();
        scene.channel.validate();
        optimizer.validate();
        if (num_trials < 1) fail(ErrorKind::Config, "num_trials must be >= 1");
        if (workers < 1) fail(ErrorKind::Config, "workers must be >= 1");
        if (scene.num_sats < 1) fail(ErrorKind::Config, "num_sats must be >= 1");
        if (scene.num_ues < 1) fail(ErrorKind::Config, "num_ues must be >= 1");
        if (!(pso.box_side_km > 0.0)) fail(ErrorKind::Config, "box_side_km must be > 0");
        for (int k : k_by_type)
            if (k < 1) fail(ErrorKind::Config, "k_by_type entries must be >= 1");
        if (!sweep.axis.empty()) {
            const auto& ax = sweep_axes();
            if (std::find(ax.begin(), ax.end(), sweep.axis) == ax.end())
                fail(ErrorKind::Config, "unknown sweep axis '" + sweep.axis + "'");
            if (sweep.values.empty()) fail(ErrorKind::Config, "sweep values must not be empty");
        }
        localization::PsoConfig pc;
        pc.num_particles = pso.num_particles;
        pc.max_iters = pso.max_iters;
        pc.c1 = pso.c1;
        pc.c2 = pso.c2;
        pc.w_max = pso.w_max;
        pc.w_min = pso.w_min;
        pc.box = localization::SearchBox::cube(Vec3::Zero(), pso.box_side_km);
        pc.validate();
    }
};

// ---------------------------------------------------------------------------
// JSON

namespace detail {

/// Reads the keys of one object and rejects anything it did not ask for.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) fail(ErrorKind::Config, where_ + " must be an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Config, where_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) fail(ErrorKind::Config, "unknown key '" + k + "' in " + where_);
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    detail::Reader top(j, "config");

    if (const json* s = top.child("constellation")) {
        detail::Reader r(*s, "constellation");
        auto& k = c.scene.constellation;
        r.get("orbital_altitude_km", k.orbital_altitude_km);
        r.get("num_planes", k.num_planes);
        r.get("sats_per_plane", k.sats_per_plane);
        r.get("inclination_deg", k.inclination_deg);
        r.get("phase_factor", k.phase_factor);
        r.get("earth_radius_km", k.earth_radius_km);
        r.get("pmax_dbm", k.max_power_dbm);
        r.finish();
    }
    if (const json* s = top.child("channel")) {
        detail::Reader r(*s, "channel");
        auto& ch = c.scene.channel;
        double rician_db = linear_to_db(ch.rician_factor_linear);
        r.get("rician_factor_db", rician_db);
        ch.rician_factor_linear = db_to_linear(rician_db);
        double f_ghz = ch.carrier_hz / 1e9, b_mhz = ch.bandwidth_hz / 1e6;
        r.get("frequency_ghz", f_ghz);
        r.get("bandwidth_mhz", b_mhz);
        ch.carrier_hz = f_ghz * 1e9;
        ch.bandwidth_hz = b_mhz * 1e6;
        r.get("g_over_t_db", ch.g_over_t_db_per_k);
        r.get("boltzmann", ch.boltzmann);
        r.get("noise_power_dbm", ch.noise_power_dbm);
        r.get("rain_mu_db", ch.rain_mu_db);
        r.get("rain_sigma2_db", ch.rain_sigma2_db);
        std::string rain = channel::to_string(ch.rain_model);
        r.get("rain_model", rain);
        ch.rain_model = channel::parse_rain_model(rain);
        r.get("random_phase", ch.random_phase);
        r.get("max_antenna_gain_dbi", ch.antenna_max_gain_dbi);
        r.get("angle_3db_deg", ch.half_power_angle_deg);
        r.get("antenna_gain_exponent", ch.antenna_gain_exponent);
        r.get("speed_of_light", ch.speed_of_light);
        r.finish();
    }
    if (const json* s = top.child("array")) {
        detail::Reader r(*s, "array");
        r.get("nx", c.scene.array.nx);
        r.get("nz", c.scene.array.nz);
        r.get("spacing_wavelengths", c.scene.array.spacing_over_wavelength);
        r.finish();
    }
    c.scene.array.wavelength_m = c.scene.channel.wavelength_m();
    if (const json* s = top.child("group")) {
        detail::Reader r(*s, "group");
        r.get("num_sats", c.scene.num_sats);
        std::string t = geometry::to_string(c.scene.collab);
        r.get("collab_type", t);
        c.scene.collab = geometry::parse_collaboration_type(t);
        r.get("central_plane", c.scene.central.plane);
        r.get("central_slot", c.scene.central.slot);
        std::vector<int> kt(c.k_by_type.begin(), c.k_by_type.end());
        r.get("k_by_type", kt);
        if (kt.size() != 3) fail(ErrorKind::Config, "group.k_by_type needs three entries");
        std::copy(kt.begin(), kt.end(), c.k_by_type.begin());
        r.finish();
    }
    if (const json* s = top.child("ue")) {
        detail::Reader r(*s, "ue");
        r.get("num_ues", c.scene.num_ues);
        r.get("footprint_radius_km", c.scene.footprint_radius_km);
        r.finish();
    }
    if (const json* s = top.child("target")) {
        detail::Reader r(*s, "target");
        r.get("radius_km", c.scene.target_radius_km);
        r.get("altitude_km", c.scene.target_altitude_km);
        r.get("alpha", c.scene.alpha);
        r.get("sensing_noise_dbm", c.scene.sensing_noise_dbm);
        std::string g = c.scene.gain_model == SensingGainModel::Unit ? "unit" : "two_hop";
        r.get("gain_model", g);
        if (g == "unit") c.scene.gain_model = SensingGainModel::Unit;
        else if (g == "two_hop") c.scene.gain_model = SensingGainModel::TwoHop;
        else fail(ErrorKind::Config, "unknown gain_model '" + g + "' (expected unit or two_hop)");
        r.finish();
    }
    if (const json* s = top.child("pso")) {
        detail::Reader r(*s, "pso");
        r.get("num_particles", c.pso.num_particles);
        r.get("max_iters", c.pso.max_iters);
        r.get("c1", c.pso.c1);
        r.get("c2", c.pso.c2);
        r.get("w_max", c.pso.w_max);
        r.get("w_min", c.pso.w_min);
        r.get("velocity_clamp", c.pso.velocity_clamp);
        r.get("box_side_km", c.pso.box_side_km);
        r.get("frozen_coefficients", c.pso.frozen_coefficients);
        r.finish();
    }
    if (const json* s = top.child("optimizer")) {
        detail::Reader r(*s, "optimizer");
        auto& o = c.optimizer;
        r.get("eta", o.eta);
        std::vector<double> per;
        r.get("eta_per_ue", per);
        if (!per.empty()) o.eta_per_ue = Eigen::Map<const VecX>(per.data(), static_cast<Eigen::Index>(per.size()));
        r.get("rho0", o.rho0);
        r.get("iota", o.iota);
        r.get("delta", o.delta);
        r.get("max_outer_iters", o.max_outer_iters);
        r.get("solver_tol", o.solver_tol);
        r.get("convergence_tol", o.convergence_tol);
        r.get("crb_unit_scale", o.crb_unit_scale);
        std::string mode = o.mode == beamform::Mode::SensingCentric ? "sensing_centric" : "comm_centric";
        r.get("objective_mode", mode);
        o.mode = beamform::parse_mode(mode);
        if (const json* e = r.child("eta_crb"); e && !e->is_null()) {
            if (!e->is_number()) fail(ErrorKind::Config, "optimizer.eta_crb must be a number or null");
            o.eta_crb = e->get<double>();
        }
        std::string m = to_string(c.method);
        r.get("method", m);
        c.method = parse_method(m);
        r.finish();
    }
    if (const json* s = top.child("sweep")) {
        detail::Reader r(*s, "sweep");
        r.get("axis", c.sweep.axis);
        if (const json* v = r.child("values")) {
            if (!v->is_array()) fail(ErrorKind::Config, "sweep.values must be an array");
            c.sweep.values.assign(v->begin(), v->end());
        }
        r.finish();
    }
    top.get("num_trials", c.num_trials);
    top.get("master_seed", c.master_seed);
    top.get("workers", c.workers);
    top.get("noiseless", c.noiseless);
    top.get("locate", c.locate);
    std::string rd = to_string(c.redraw);
    top.get("redraw", rd);
    c.redraw = parse_redraw(rd);
    top.finish();
    c.validate();
    return c;
}

/// Every setting with its effective value, in the same layout as the input.
inline json config_to_json(const ExperimentConfig& c) {
    const auto& k = c.scene.constellation;
    const auto& ch = c.scene.channel;
    const auto& o = c.optimizer;
    json j;
    j["constellation"] = {{"orbital_altitude_km", k.orbital_altitude_km}, {"num_planes", k.num_planes},
                          {"sats_per_plane", k.sats_per_plane},           {"inclination_deg", k.inclination_deg},
                          {"phase_factor", k.phase_factor},               {"earth_radius_km", k.earth_radius_km},
                          {"pmax_dbm", k.max_power_dbm}};
    j["channel"] = {{"rician_factor_db", linear_to_db(ch.rician_factor_linear)},
                    {"frequency_ghz", ch.carrier_hz / 1e9},
                    {"bandwidth_mhz", ch.bandwidth_hz / 1e6},
                    {"g_over_t_db", ch.g_over_t_db_per_k},
                    {"boltzmann", ch.boltzmann},
                    {"noise_power_dbm", ch.noise_power_dbm},
                    {"rain_mu_db", ch.rain_mu_db},
                    {"rain_sigma2_db", ch.rain_sigma2_db},
                    {"rain_model", channel::to_string(ch.rain_model)},
                    {"random_phase", ch.random_phase},
                    {"max_antenna_gain_dbi", ch.antenna_max_gain_dbi},
                    {"angle_3db_deg", ch.half_power_angle_deg},
                    {"antenna_gain_exponent", ch.antenna_gain_exponent},
                    {"speed_of_light", ch.speed_of_light}};
    j["array"] = {{"nx", c.scene.array.nx},
                  {"nz", c.scene.array.nz},
                  {"spacing_wavelengths", c.scene.array.spacing_over_wavelength}};
    j["group"] = {{"num_sats", c.scene.num_sats},
                  {"collab_type", geometry::to_string(c.scene.collab)},
                  {"central_plane", c.scene.central.plane},
                  {"central_slot", c.scene.central.slot},
                  {"k_by_type", c.k_by_type}};
    j["ue"] = {{"num_ues", c.scene.num_ues}, {"footprint_radius_km", c.scene.footprint_radius_km}};
    j["target"] = {{"radius_km", c.scene.target_radius_km},
                   {"altitude_km", c.scene.target_altitude_km},
                   {"alpha", c.scene.alpha},
                   {"sensing_noise_dbm", c.scene.sensing_noise_dbm},
                   {"gain_model", c.scene.gain_model == SensingGainModel::Unit ? "unit" : "two_hop"}};
    j["pso"] = {{"num_particles", c.pso.num_particles}, {"max_iters", c.pso.max_iters},
                {"c1", c.pso.c1},                       {"c2", c.pso.c2},
                {"w_max", c.pso.w_max},                 {"w_min", c.pso.w_min},
                {"velocity_clamp", c.pso.velocity_clamp}, {"box_side_km", c.pso.box_side_km},
                {"frozen_coefficients", c.pso.frozen_coefficients}};
    json opt = {{"eta", o.eta},
                {"eta_per_ue", std::vector<double>(o.eta_per_ue.data(), o.eta_per_ue.data() + o.eta_per_ue.size())},
                {"rho0", o.rho0},
                {"iota", o.iota},
                {"delta", o.delta},
                {"max_outer_iters", o.max_outer_iters},
                {"solver_tol", o.solver_tol},
                {"convergence_tol", o.convergence_tol},
                {"crb_unit_scale", o.crb_unit_scale},
                {"objective_mode", o.mode == beamform::Mode::SensingCentric ? "sensing_centric" : "comm_centric"},
                {"method", to_string(c.method)}};
    opt["eta_crb"] = std::isfinite(o.eta_crb) ? json(o.eta_crb) : json(nullptr);
    j["optimizer"] = opt;
    j["sweep"] = {{"axis", c.sweep.axis}, {"values", c.sweep.values}};
    j["num_trials"] = c.num_trials;
    j["master_seed"] = c.master_seed;
    j["workers"] = c.workers;
    j["noiseless"] = c.noiseless;
    j["locate"] = c.locate;
    j["redraw"] = to_string(c.redraw);
    return j;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(ErrorKind::Io, "cannot open config " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::Config, "malformed config " + path + ": " + e.what());
    }
    return config_from_json(j);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

/// Hash of the canonical dump; worker count does not change results and is left out.
inline std::string config_hash(const ExperimentConfig& c) {
    json j = config_to_json(c);
    j.erase("workers");
    return hex64(fnv1a(j.dump()));
}

// ---------------------------------------------------------------------------
// Sweep axes

inline std::string sweep_label(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
        return buf;
    }
    return v.dump();
}

/// The configuration at one sweep value.
inline ExperimentConfig apply_axis(ExperimentConfig c, const std::string& axis, const json& v) {
    auto number = [&]() {
        if (!v.is_number()) fail(ErrorKind::Config, "sweep value for " + axis + " must be a number");
        return v.get<double>();
    };
    auto integer = [&]() {
        if (!v.is_number_integer()) fail(ErrorKind::Config, "sweep value for " + axis + " must be an integer");
        return v.get<int>();
    };
    if (axis == "pmax_dbm") {
        c.scene.constellation.max_power_dbm = number();
    } else if (axis == "eta") {
        c.optimizer.eta = number();
        c.optimizer.eta_per_ue.resize(0);
    } else if (axis == "collab_type") {
        const auto t = geometry::parse_collaboration_type(v.is_string() ? v.get<std::string>() : sweep_label(v));
        c.scene.collab = t;
        c.scene.num_sats = c.k_by_type[static_cast<std::size_t>(static_cast<int>(t))];
    } else if (axis == "array_size") {
        if (v.is_number_integer()) {
            c.scene.array.nx = c.scene.array.nz = v.get<int>();
        } else if (v.is_string()) {
            const std::string s = v.get<std::string>();
            const auto x = s.find('x');
            try {
                if (x == std::string::npos) throw std::invalid_argument(s);
                c.scene.array.nx = std::stoi(s.substr(0, x));
                c.scene.array.nz = std::stoi(s.substr(x + 1));
            } catch (const std::logic_error&) {
                fail(ErrorKind::Config, "array_size values look like \"4x4\" or 4, got '" + s + "'");
            }
        } else {
            fail(ErrorKind::Config, "array_size values look like \"4x4\" or 4");
        }
    } else if (axis == "sats_per_plane") {
        c.scene.constellation.sats_per_plane = integer();
    } else if (axis == "num_planes") {
        c.scene.constellation.num_planes = integer();
        if (c.scene.constellation.phase_factor >= c.scene.constellation.num_planes)
            c.scene.constellation.phase_factor = 0;
    } else {
        fail(ErrorKind::Config, "unknown sweep axis '" + axis + "'");
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Trials

struct TrialSeeds {
    std::uint64_t geometry = 0;
    std::uint64_t channel = 0;
    std::uint64_t noise = 0;
    std::uint64_t pso = 0;
};

/// Streams for trial `t`: fixed ones come from the master seed alone.
inline TrialSeeds trial_seeds(std::uint64_t master, Redraw redraw, int t) {
    const auto ti = static_cast<std::uint64_t>(t);
    TrialSeeds s;
    s.geometry = redraw == Redraw::Geometry ? derive_seed(master, {10, ti}) : derive_seed(master, {10});
    s.channel = redraw == Redraw::Noise ? derive_seed(master, {11}) : derive_seed(master, {11, ti});
    s.noise = derive_seed(master, {12, ti});
    s.pso = derive_seed(master, {13, ti});
    return s;
}

struct TrialResult {
    bool ok = false;
    ErrorKind error = ErrorKind::Numerical;
    std::string message;
    double rcrb_m = 0.0;
    double error_m = 0.0;  // estimate error, when located
    double min_rate = 0.0;
    double mean_rate = 0.0;
    int iterations = 0;
    double wall_time_s = 0.0;
    std::vector<std::string> warnings;
};

struct Design {
    BeamformingSolution solution;
    int iterations = 0;
    std::vector<std::string> warnings;
};

inline Design design_beams(const SceneSnapshot& sc, const ExperimentConfig& cfg) {
    Design d;
    if (cfg.method == Method::Zfbf) {
        d.solution = beamform::zfbf_baseline(sc, cfg.optimizer);
        return d;
    }
    const auto r = beamform::optimize(sc, cfg.optimizer);
    d.solution = r.solution;
    d.iterations = r.iterations;
    d.warnings = r.warnings;
    return d;
}

inline localization::PsoConfig pso_config(const ExperimentConfig& cfg, const SceneSnapshot& sc) {
    localization::PsoConfig p;
    p.num_particles = cfg.pso.num_particles;
    p.max_iters = cfg.pso.max_iters;
    p.c1 = cfg.pso.c1;
    p.c2 = cfg.pso.c2;
    p.w_max = cfg.pso.w_max;
    p.w_min = cfg.pso.w_min;
    p.velocity_clamp = cfg.pso.velocity_clamp;
    p.frozen_coefficients = cfg.pso.frozen_coefficients;
    const Vec3 nadir = geometry::subsatellite_point(sc.sats.front(), cfg.scene.constellation.earth_radius_km);
    p.box = localization::SearchBox::cube(nadir, cfg.pso.box_side_km);
    return p;
}

/// Evaluate a fixed design on a scene: bound, rates, then one located echo.
inline TrialResult evaluate_design(const SceneSnapshot& sc, const Design& d, const ExperimentConfig& cfg,
                                   const TrialSeeds& seeds) {
    TrialResult r;
    r.iterations = d.iterations;
    r.warnings = d.warnings;
    r.rcrb_m = crb::evaluate(sc, d.solution).rcrb_m();
    const VecX rates = ue_rates(d.solution, sc);
    r.min_rate = rates.minCoeff();
    r.mean_rate = rates.mean();
    if (cfg.locate) {
        Rng nrng = make_rng(seeds.noise, {});
        const SymbolBlock s = draw_symbols(sc.m(), nrng);
        const auto obs = synthesize_received(sc, d.solution, s, sc.alpha, nrng, cfg.noiseless);
        const auto pr = localization::Problem::from_scene(sc, d.solution, s.s, obs.y);
        Rng prng = make_rng(seeds.pso, {});
        const auto est = localization::pso_locate(pr, pso_config(cfg, sc), prng);
        r.error_m = 1e3 * (est.p_hat - sc.target).norm();
    }
    r.ok = true;
    return r;
}

inline TrialResult run_trial(const ExperimentConfig& cfg, int t, const Design* fixed = nullptr) {
    const auto t0 = std::chrono::steady_clock::now();
    TrialResult r;
    try {
        const TrialSeeds seeds = trial_seeds(cfg.master_seed, cfg.redraw, t);
        const SceneSnapshot sc = build_scene(cfg.scene, seeds.geometry, seeds.channel);
        const Design d = fixed ? *fixed : design_beams(sc, cfg);
        r = evaluate_design(sc, d, cfg, seeds);
        r.warnings.insert(r.warnings.begin(), sc.warnings.begin(), sc.warnings.end());
    } catch (const Error& e) {
        r.ok = false;
        r.error = e.kind();
        r.message = e.what();
    }
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

/// Run `n` jobs on up to `workers` threads; results land at their index.
template <class Job>
void parallel_for(int n, int workers, Job job) {
    const int w = std::max(1, std::min(workers, n));
    if (w == 1) {
        for (int i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int k = 0; k < w; ++k)
        pool.emplace_back([&]() {
            for (int i = next++; i < n; i = next++) job(i);
        });
    for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Aggregation and output

struct ResultRow {
    std::string sweep_value;
    std::string metric;
    double mean = 0.0;
    double std = 0.0;
    int n = 0;

    bool operator==(const ResultRow&) const = default;
};

struct ResultTable {
    std::vector<ResultRow> rows;

    const ResultRow* find(const std::string& sweep_value, const std::string& metric) const {
        for (const auto& r : rows)
            if (r.sweep_value == sweep_value && r.metric == metric) return &r;
        return nullptr;
    }
    double mean(const std::string& sweep_value, const std::string& metric) const {
        const auto* r = find(sweep_value, metric);
        if (!r) fail(ErrorKind::Parameter, "no row for " + sweep_value + "/" + metric);
        return r->mean;
    }
};

struct PointReport {
    std::string sweep_value;
    int completed = 0;
    int failed = 0;
    std::map<std::string, int> failures_by_kind;
    std::vector<std::string> warnings;  // de-duplicated, in first-seen order
    double wall_time_s = 0.0;
};

struct RunManifest {
    std::string config_hash;
    std::uint64_t master_seed = 0;
    std::vector<TrialSeeds> seeds;
    std::string version = kVersionTag;
    std::vector<PointReport> points;
    double wall_time_s = 0.0;
    json config;
};

/// Sample mean and standard deviation (n - 1 denominator, 0 for one sample).
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0};
}

/// Rows for one sweep point. rmse_m reports sqrt(mean e^2) with the spread of e.
inline std::vector<ResultRow> aggregate(const std::string& label, const std::vector<TrialResult>& trials, bool located) {
    std::vector<double> rcrb, err, err2, minr, meanr, iters;
    for (const auto& t : trials) {
        if (!t.ok) continue;
        rcrb.push_back(t.rcrb_m);
        err.push_back(t.error_m);
        err2.push_back(t.error_m * t.error_m);
        minr.push_back(t.min_rate);
        meanr.push_back(t.mean_rate);
        iters.push_back(t.iterations);
    }
    const int n = static_cast<int>(rcrb.size());
    std::vector<ResultRow> rows;
    auto add = [&](const char* name, const std::vector<double>& v) {
        const auto [m, s] = mean_std(v);
        rows.push_back({label, name, m, s, n});
    };
    add("rcrb_m", rcrb);
    if (located) {
        const auto [m2, unused] = mean_std(err2);
        (void)unused;
        rows.push_back({label, "rmse_m", std::sqrt(m2), mean_std(err).second, n});
    }
    add("min_rate", minr);
    add("mean_rate", meanr);
    add("iterations", iters);
    return rows;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// RFC 4180 quoting when needed.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string results_csv(const ResultTable& t) {
    std::string out = "sweep_value,metric,mean,std,n\r\n";
    for (const auto& r : t.rows)
        out += csv_field(r.sweep_value) + "," + csv_field(r.metric) + "," + format_double(r.mean) + "," +
               format_double(r.std) + "," + std::to_string(r.n) + "\r\n";
    return out;
}

/// Parse what results_csv writes (quoted fields included).
inline ResultTable parse_results_csv(const std::string& text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> rec;
    std::string field;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            rec.push_back(field);
            field.clear();
            any = true;
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !field.empty()) {
                rec.push_back(field);
                records.push_back(rec);
            }
            rec.clear();
            field.clear();
            any = false;
        } else {
            field += c;
            any = true;
        }
    }
    if (quoted) fail(ErrorKind::Io, "unterminated quote in results csv");
    if (any || !field.empty()) {
        rec.push_back(field);
        records.push_back(rec);
    }
    if (records.empty() || records.front() != std::vector<std::string>{"sweep_value", "metric", "mean", "std", "n"})
        fail(ErrorKind::Io, "results csv header mismatch");
    ResultTable t;
    for (std::size_t i = 1; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.size() != 5) fail(ErrorKind::Io, "results csv row " + std::to_string(i) + " has wrong arity");
        try {
            t.rows.push_back({r[0], r[1], std::stod(r[2]), std::stod(r[3]), std::stoi(r[4])});
        } catch (const std::logic_error&) {
            fail(ErrorKind::Io, "results csv row " + std::to_string(i) + " is not numeric");
        }
    }
    return t;
}

inline json manifest_json(const RunManifest& m) {
    json j;
    j["version"] = m.version;
    j["config_hash"] = m.config_hash;
    j["master_seed"] = m.master_seed;
    json seeds = json::array();
    for (const auto& s : m.seeds)
        seeds.push_back({{"geometry", s.geometry}, {"channel", s.channel}, {"noise", s.noise}, {"pso", s.pso}});
    j["trial_seeds"] = seeds;
    json pts = json::array();
    for (const auto& p : m.points) {
        json pj = {{"sweep_value", p.sweep_value},
                   {"completed", p.completed},
                   {"failed", p.failed},
                   {"failures", p.failures_by_kind},
                   {"warnings", p.warnings},
                   {"wall_time_s", p.wall_time_s}};
        pts.push_back(pj);
    }
    j["points"] = pts;
    j["wall_time_s"] = m.wall_time_s;
    j["config"] = m.config;
    return j;
}

inline void write_results(const ResultTable& t, const RunManifest& m, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + dir + ": " + ec.message());
    {
        std::ofstream f(std::filesystem::path(dir) / "results.csv", std::ios::binary);
        if (!f) fail(ErrorKind::Io, "cannot write results.csv in " + dir);
        f << results_csv(t);
    }
    std::ofstream f(std::filesystem::path(dir) / "manifest.json", std::ios::binary);
    if (!f) fail(ErrorKind::Io, "cannot write manifest.json in " + dir);
    f << manifest_json(m).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Drivers

struct RunOutput {
    ResultTable table;
    RunManifest manifest;
};

/// All trials at one configuration. With noise-only redraws the beams are
/// designed once and shared, since nothing they depend on changes.
inline std::vector<TrialResult> run_point(const ExperimentConfig& cfg) {
    std::vector<TrialResult> trials(static_cast<std::size_t>(cfg.num_trials));
    if (cfg.redraw == Redraw::Noise) {
        const TrialSeeds s0 = trial_seeds(cfg.master_seed, cfg.redraw, 0);
        Design d;
        try {
            d = design_beams(build_scene(cfg.scene, s0.geometry, s0.channel), cfg);
        } catch (const Error& e) {
            for (auto& t : trials) {
                t.error = e.kind();
                t.message = e.what();
            }
            return trials;
        }
        parallel_for(cfg.num_trials, cfg.workers,
                     [&](int t) { trials[static_cast<std::size_t>(t)] = run_trial(cfg, t, &d); });
    } else {
        parallel_for(cfg.num_trials, cfg.workers,
                     [&](int t) { trials[static_cast<std::size_t>(t)] = run_trial(cfg, t); });
    }
    return trials;
}

inline PointReport report_point(const std::string& label, const std::vector<TrialResult>& trials) {
    PointReport p;
    p.sweep_value = label;
    std::set<std::string> seen;
    for (const auto& t : trials) {
        if (t.ok) ++p.completed;
        else {
            ++p.failed;
            ++p.failures_by_kind[to_string(t.error)];
            if (seen.insert(t.message).second) p.warnings.push_back(std::string(to_string(t.error)) + ": " + t.message);
        }
        for (const auto& w : t.warnings)
            if (seen.insert(w).second) p.warnings.push_back(w);
        p.wall_time_s += t.wall_time_s;
    }
    return p;
}

/// The sweep (or the single base point) with aggregation and the failure rule.
inline RunOutput sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    RunOutput out;
    out.manifest.config_hash = config_hash(cfg);
    out.manifest.master_seed = cfg.master_seed;
    out.manifest.config = config_to_json(cfg);
    for (int t = 0; t < cfg.num_trials; ++t) out.manifest.seeds.push_back(trial_seeds(cfg.master_seed, cfg.redraw, t));

    std::vector<std::pair<std::string, ExperimentConfig>> points;
    if (cfg.sweep.axis.empty()) points.emplace_back("base", cfg);
    else
        for (const auto& v : cfg.sweep.values) points.emplace_back(sweep_label(v), apply_axis(cfg, cfg.sweep.axis, v));

    for (const auto& [label, pc] : points) {
        const auto trials = run_point(pc);
        auto rep = report_point(label, trials);
        if (2 * rep.failed > pc.num_trials) {
            std::string why = "more than half of the trials failed at " + cfg.sweep.axis + "=" + label + " (" +
                              std::to_string(rep.failed) + "/" + std::to_string(pc.num_trials) + ")";
            if (!rep.warnings.empty()) why += "; first: " + rep.warnings.front();
            const bool infeasible = rep.failures_by_kind.count(to_string(ErrorKind::Infeasible)) &&
                                    2 * rep.failures_by_kind[to_string(ErrorKind::Infeasible)] > rep.failed;
            fail(infeasible ? ErrorKind::Infeasible : ErrorKind::Numerical, why);
        }
        for (auto& r : aggregate(label, trials, pc.locate)) out.table.rows.push_back(r);
        out.manifest.points.push_back(std::move(rep));
    }
    out.manifest.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

/// Monte Carlo at the base configuration, ignoring any sweep block.
inline RunOutput run_montecarlo(ExperimentConfig cfg) {
    cfg.sweep = {};
    return sweep(cfg);
}

}  // namespace leoisac::harness

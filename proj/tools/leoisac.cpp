// SPDX-License-Identifier: Apache-2.0
//
// leoisac command line: constellation | crb | locate | optimize | sweep | montecarlo
//
// Exit codes: 0 success, 2 configuration error, 3 infeasible, 4 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "leoisac/leoisac.hpp"

namespace {

using leoisac::ErrorKind;
using json = leoisac::harness::json;

int exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::Config:
    case ErrorKind::Parameter:
    case ErrorKind::Group:
    case ErrorKind::Io: return 2;
    case ErrorKind::Infeasible: return 3;
    default: return 4;
    }
}

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> workers;
    bool paper_scale = false;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON experiment configuration");
    sub->add_option("--seed", c.seed, "master seed (overrides the config)");
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--paper-scale", c.paper_scale, "1000 Monte Carlo trials");
}

leoisac::harness::ExperimentConfig load(const Common& c) {
    auto cfg = c.config.empty() ? leoisac::harness::ExperimentConfig{} : leoisac::harness::load_config(c.config);
    if (c.seed) cfg.master_seed = *c.seed;
    if (c.workers) cfg.workers = *c.workers;
    if (c.paper_scale) cfg.num_trials = 1000;
    if (const char* tol = std::getenv("LEOISAC_SOLVER_TOL")) {
        char* end = nullptr;
        const double v = std::strtod(tol, &end);
        if (end == tol || *end != '\0' || !(v > 0.0))
            leoisac::fail(ErrorKind::Config, std::string("LEOISAC_SOLVER_TOL must be a positive number, got '") + tol + "'");
        cfg.optimizer.solver_tol = v;
    }
    cfg.validate();
    return cfg;
}

json vec3(const leoisac::Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

/// Print to stdout, and to <out>/<name> when an output directory is given.
void emit(const json& j, const Common& c, const std::string& name) {
    const std::string text = j.dump(2);
    std::cout << text << "\n";
    if (c.out.empty()) return;
    std::filesystem::create_directories(c.out);
    std::ofstream f(std::filesystem::path(c.out) / name);
    if (!f) leoisac::fail(ErrorKind::Io, "cannot write " + name + " in " + c.out);
    f << text << "\n";
}

leoisac::SceneSnapshot scene_for(const leoisac::harness::ExperimentConfig& cfg) {
    const auto s = leoisac::harness::trial_seeds(cfg.master_seed, cfg.redraw, 0);
    return leoisac::build_scene(cfg.scene, s.geometry, s.channel);
}

int cmd_constellation(const Common& c) {
    const auto cfg = load(c);
    const auto all = leoisac::geometry::build_walker_delta(cfg.scene.constellation);
    const auto central = leoisac::geometry::find_satellite(all, cfg.scene.central);
    const auto g = leoisac::geometry::select_serving_group(all, central, cfg.scene.collab, cfg.scene.num_sats);
    json members = json::array();
    for (auto i : g.members())
        members.push_back({{"plane", all[i].index.plane}, {"slot", all[i].index.slot}, {"position_km", vec3(all[i].position_km)}});
    emit({{"num_satellites", all.size()},
          {"orbit_radius_km", cfg.scene.constellation.orbit_radius_km()},
          {"collab_type", leoisac::geometry::to_string(g.type)},
          {"serving_group", members}},
         c, "constellation.json");
    return 0;
}

int cmd_crb(const Common& c) {
    const auto cfg = load(c);
    const auto sc = scene_for(cfg);
    const auto d = leoisac::harness::design_beams(sc, cfg);
    const auto f = leoisac::crb::evaluate(sc, d.solution);
    json crb = json::array();
    for (int i = 0; i < 3; ++i) crb.push_back({f.crb(i, 0), f.crb(i, 1), f.crb(i, 2)});
    emit({{"method", leoisac::harness::to_string(cfg.method)},
          {"crb_trace_km2", f.trace_km2},
          {"rcrb_m", f.rcrb_m()},
          {"crb_km2", crb},
          {"f_alpha_alpha", f.f_aa},
          {"warnings", f.warnings}},
         c, "crb.json");
    return 0;
}

int cmd_locate(const Common& c, double box_km, int ip, int np, bool noiseless) {
    auto cfg = load(c);
    if (box_km > 0.0) cfg.pso.box_side_km = box_km;
    if (ip > 0) cfg.pso.num_particles = ip;
    if (np >= 0) cfg.pso.max_iters = np;
    cfg.noiseless = cfg.noiseless || noiseless;
    cfg.validate();
    const auto sc = scene_for(cfg);
    const auto d = leoisac::harness::design_beams(sc, cfg);
    const auto seeds = leoisac::harness::trial_seeds(cfg.master_seed, cfg.redraw, 0);
    leoisac::Rng nrng = leoisac::make_rng(seeds.noise, {});
    const auto s = leoisac::draw_symbols(sc.m(), nrng);
    const auto obs = leoisac::synthesize_received(sc, d.solution, s, sc.alpha, nrng, cfg.noiseless);
    const auto pr = leoisac::localization::Problem::from_scene(sc, d.solution, s.s, obs.y);
    leoisac::Rng prng = leoisac::make_rng(seeds.pso, {});
    const auto est = leoisac::localization::pso_locate(pr, leoisac::harness::pso_config(cfg, sc), prng);
    if (!c.out.empty()) {
        std::filesystem::create_directories(c.out);
        leoisac::write_observation((std::filesystem::path(c.out) / "observation.bin").string(), obs.y);
    }
    emit({{"p_hat", vec3(est.p_hat)},
          {"p_true", vec3(sc.target)},
          {"rmse_vs_truth", 1e3 * (est.p_hat - sc.target).norm()},
          {"alpha_hat", {est.alpha_hat.real(), est.alpha_hat.imag()}},
          {"fitness_trace", est.fitness_trace}},
         c, "locate.json");
    return 0;
}

int cmd_optimize(const Common& c) {
    const auto cfg = load(c);
    const auto sc = scene_for(cfg);
    const auto r = leoisac::beamform::optimize(sc, cfg.optimizer);
    const auto rates = leoisac::ue_rates(r.solution, sc);
    json power = json::array();
    for (int k = 0; k < sc.k(); ++k) power.push_back(leoisac::transmit_power(r.solution, k, sc.n()));
    json j = {{"objective_trace", r.objective_trace},
              {"residual_trace", r.residual_trace},
              {"rcrb_trace_m", r.rcrb_trace_m},
              {"rho_trace", r.rho_trace},
              {"change_trace", r.change_trace},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"rcrb_m", leoisac::crb::evaluate(sc, r.solution).rcrb_m()},
              {"rates", std::vector<double>(rates.data(), rates.data() + rates.size())},
              {"power_w", power},
              {"warnings", r.warnings}};
    try {
        const auto z = leoisac::beamform::zfbf_baseline(sc, cfg.optimizer);
        j["zfbf_rcrb_m"] = leoisac::crb::evaluate(sc, z).rcrb_m();
    } catch (const leoisac::Error& e) {
        j["zfbf_rcrb_m"] = nullptr;
        j["zfbf_error"] = e.what();
    }
    emit(j, c, "optimize.json");
    return 0;
}

int cmd_run(const Common& c, bool montecarlo) {
    const auto cfg = load(c);
    const auto out = montecarlo ? leoisac::harness::run_montecarlo(cfg) : leoisac::harness::sweep(cfg);
    const std::string dir = c.out.empty() ? std::string("out") : c.out;
    leoisac::harness::write_results(out.table, out.manifest, dir);
    std::cout << leoisac::harness::results_csv(out.table);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"leoisac: cooperative LEO communication and location sensing"};
    app.require_subcommand(1);
    Common common;
    double box_km = 0.0;
    int ip = 0, np = -1;
    bool noiseless = false;

    auto* con = app.add_subcommand("constellation", "serving group geometry");
    auto* crb = app.add_subcommand("crb", "position bound of a design");
    auto* loc = app.add_subcommand("locate", "one located echo");
    auto* opt = app.add_subcommand("optimize", "joint beamforming design");
    auto* swp = app.add_subcommand("sweep", "parameter sweep");
    auto* mc = app.add_subcommand("montecarlo", "Monte Carlo at the base configuration");
    for (auto* s : {con, crb, loc, opt, swp, mc}) add_common(s, common);
    loc->add_option("--box-km", box_km, "search cube side");
    loc->add_option("--particles", ip, "swarm size");
    loc->add_option("--iters", np, "PSO iterations");
    loc->add_flag("--noiseless", noiseless, "no receiver noise");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*con) return cmd_constellation(common);
        if (*crb) return cmd_crb(common);
        if (*loc) return cmd_locate(common, box_km, ip, np, noiseless);
        if (*opt) return cmd_optimize(common);
        if (*swp) return cmd_run(common, false);
        if (*mc) return cmd_run(common, true);
    } catch (const leoisac::Error& e) {
        std::cerr << "error (" << leoisac::to_string(e.kind()) << "): " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}

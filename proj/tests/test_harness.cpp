#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "scenes.hpp"

using namespace leoisac;
using namespace leoisac::harness;

namespace {

/// Small fast configuration: desk scene, zero forcing, a short swarm.
ExperimentConfig quick_config() {
    ExperimentConfig c;
    c.scene = testing_scenes::desk_spec();
    c.method = Method::Zfbf;
    c.pso.num_particles = 10;
    c.pso.max_iters = 5;
    c.num_trials = 4;
    c.master_seed = 17;
    return c;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::Numerical;
}

}  // namespace

TEST(Config, EmptyConfigEchoesDefaults) {
    const auto c = config_from_json(json::object());
    const json j = config_to_json(c);
    EXPECT_EQ(j["constellation"]["orbital_altitude_km"], 550.0);
    EXPECT_EQ(j["constellation"]["num_planes"], 72);
    EXPECT_EQ(j["constellation"]["sats_per_plane"], 22);
    EXPECT_EQ(j["constellation"]["inclination_deg"], 53.0);
    EXPECT_EQ(j["constellation"]["phase_factor"], 1);
    EXPECT_EQ(j["constellation"]["pmax_dbm"], 30.0);
    EXPECT_EQ(j["channel"]["rician_factor_db"], 10.0);
    EXPECT_EQ(j["channel"]["rain_mu_db"], -2.6);
    EXPECT_EQ(j["channel"]["rain_sigma2_db"], 1.63);
    EXPECT_EQ(j["channel"]["max_antenna_gain_dbi"], 16.0);
    EXPECT_EQ(j["channel"]["angle_3db_deg"], 0.4);
    EXPECT_EQ(j["channel"]["noise_power_dbm"], -110.0);
    EXPECT_EQ(j["pso"]["num_particles"], 50);
    EXPECT_EQ(j["pso"]["max_iters"], 40);
    EXPECT_EQ(j["optimizer"]["rho0"], 10.0);
    EXPECT_EQ(j["optimizer"]["iota"], 1.5);
    EXPECT_EQ(j["optimizer"]["delta"], 1e-4);
    EXPECT_EQ(j["optimizer"]["eta"], 2.0);
    EXPECT_EQ(j["num_trials"], 100);
    EXPECT_EQ(j["redraw"], "channel");
}

TEST(Config, RoundTripsThroughJson) {
    json in = json::parse(R"({"constellation": {"pmax_dbm": 30}, "group": {"num_sats": 3, "collab_type": "I"},
                               "array": {"nx": 2, "nz": 2}, "ue": {"num_ues": 3},
                               "sweep": {"axis": "eta", "values": [1, 2.5]}, "num_trials": 7, "redraw": "noise"})");
    const auto a = config_from_json(in);
    EXPECT_EQ(config_to_json(a)["constellation"]["pmax_dbm"], 30.0);
    const auto b = config_from_json(config_to_json(a));
    EXPECT_EQ(config_to_json(a).dump(), config_to_json(b).dump());
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(b.redraw, Redraw::Noise);
    EXPECT_EQ(b.num_trials, 7);
    auto w = b;
    w.workers = 8;
    EXPECT_EQ(config_hash(w), config_hash(b));  // thread count does not change results
    w.master_seed = 2;
    EXPECT_NE(config_hash(w), config_hash(b));
}

TEST(Config, UnknownAndMalformedKeysAreErrors) {
    EXPECT_EQ(kind_of([] { config_from_json(json::parse(R"({"num_trail": 3})")); }), ErrorKind::Config);
    EXPECT_EQ(kind_of([] { config_from_json(json::parse(R"({"channel": {"rician_factr_db": 3}})")); }), ErrorKind::Config);
    EXPECT_EQ(kind_of([] { config_from_json(json::parse(R"({"num_trials": "many"})")); }), ErrorKind::Config);
    EXPECT_EQ(kind_of([] { config_from_json(json::parse(R"({"num_trials": 0})")); }), ErrorKind::Config);
    EXPECT_EQ(kind_of([] { config_from_json(json::parse(R"({"sweep": {"axis": "color", "values": [1]}})")); }),
              ErrorKind::Config);
    EXPECT_EQ(kind_of([] { config_from_json(json::parse(R"({"redraw": "all"})")); }), ErrorKind::Config);
    EXPECT_EQ(kind_of([] { load_config("/nonexistent/leoisac.json"); }), ErrorKind::Io);
}

TEST(Config, ShippedPresetsLoad) {
    for (const char* name : {"fig4", "fig5", "fig6", "fig6_array", "fig7", "fig9"}) {
        const auto path = std::filesystem::path(LEOISAC_CONFIG_DIR) / (std::string(name) + ".json");
        EXPECT_NO_THROW(load_config(path.string())) << name;
    }
}

TEST(Axes, ApplyEachAxis) {
    const auto base = quick_config();
    EXPECT_DOUBLE_EQ(apply_axis(base, "pmax_dbm", 40).scene.constellation.max_power_dbm, 40.0);
    EXPECT_DOUBLE_EQ(apply_axis(base, "eta", 2.5).optimizer.eta, 2.5);
    const auto t3 = apply_axis(base, "collab_type", "III");
    EXPECT_EQ(t3.scene.collab, geometry::CollaborationType::III);
    EXPECT_EQ(t3.scene.num_sats, 7);
    EXPECT_EQ(apply_axis(base, "collab_type", "II").scene.num_sats, 5);
    const auto arr = apply_axis(base, "array_size", "4x2");
    EXPECT_EQ(arr.scene.array.nx, 4);
    EXPECT_EQ(arr.scene.array.nz, 2);
    EXPECT_EQ(apply_axis(base, "array_size", 3).scene.array.size(), 9);
    EXPECT_EQ(apply_axis(base, "sats_per_plane", 44).scene.constellation.sats_per_plane, 44);
    EXPECT_EQ(apply_axis(base, "num_planes", 1).scene.constellation.phase_factor, 0);
    EXPECT_THROW(apply_axis(base, "array_size", "big"), Error);
    EXPECT_THROW(apply_axis(base, "sats_per_plane", 2.5), Error);
    EXPECT_THROW(apply_axis(base, "pmax_dbm", "loud"), Error);
    EXPECT_THROW(apply_axis(base, "volume", 1), Error);
    EXPECT_EQ(sweep_label(20), "20");
    EXPECT_EQ(sweep_label(2.5), "2.5");
    EXPECT_EQ(sweep_label("II"), "II");
}

TEST(Seeds, RedrawPolicies) {
    const auto n0 = trial_seeds(5, Redraw::Noise, 0), n1 = trial_seeds(5, Redraw::Noise, 1);
    EXPECT_EQ(n0.geometry, n1.geometry);
    EXPECT_EQ(n0.channel, n1.channel);
    EXPECT_NE(n0.noise, n1.noise);
    EXPECT_NE(n0.pso, n1.pso);
    const auto c0 = trial_seeds(5, Redraw::Channel, 0), c1 = trial_seeds(5, Redraw::Channel, 1);
    EXPECT_EQ(c0.geometry, c1.geometry);
    EXPECT_NE(c0.channel, c1.channel);
    const auto g0 = trial_seeds(5, Redraw::Geometry, 0), g1 = trial_seeds(5, Redraw::Geometry, 1);
    EXPECT_NE(g0.geometry, g1.geometry);
    EXPECT_NE(trial_seeds(6, Redraw::Channel, 0).noise, c0.noise);
}

TEST(Aggregate, MeanStdAndRmse) {
    const auto [m, s] = mean_std({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(m, 2.5);
    EXPECT_NEAR(s, std::sqrt(5.0 / 3.0), 1e-15);
    EXPECT_EQ(mean_std({7.0}).second, 0.0);
    std::vector<TrialResult> t(3);
    for (int i = 0; i < 3; ++i) {
        t[i].ok = true;
        t[i].rcrb_m = 10.0 * (i + 1);
        t[i].error_m = 3.0 * (i + 1);
        t[i].iterations = i;
    }
    t.push_back(TrialResult{});  // failed trial is excluded
    const auto rows = aggregate("x", t, true);
    ResultTable tab{rows};
    EXPECT_DOUBLE_EQ(tab.mean("x", "rcrb_m"), 20.0);
    EXPECT_NEAR(tab.mean("x", "rmse_m"), std::sqrt((9.0 + 36.0 + 81.0) / 3.0), 1e-12);
    EXPECT_EQ(tab.find("x", "rmse_m")->n, 3);
    EXPECT_DOUBLE_EQ(tab.mean("x", "iterations"), 1.0);
    EXPECT_EQ(ResultTable{aggregate("x", t, false)}.find("x", "rmse_m"), nullptr);
    EXPECT_THROW(tab.mean("y", "rcrb_m"), Error);
}

TEST(Csv, RoundTripWithQuoting) {
    ResultTable t;
    t.rows.push_back({"20", "rcrb_m", 123.456789012345678, 0.1, 100});
    t.rows.push_back({"a,\"b\"", "rmse_m", 1e-300, 2.5e10, 3});
    const std::string text = results_csv(t);
    EXPECT_EQ(text.substr(0, 31), "sweep_value,metric,mean,std,n\r\n");
    EXPECT_NE(text.find("\"a,\"\"b\"\"\""), std::string::npos);
    const auto back = parse_results_csv(text);
    ASSERT_EQ(back.rows.size(), 2u);
    EXPECT_EQ(back.rows[0], t.rows[0]);
    EXPECT_EQ(back.rows[1], t.rows[1]);
    EXPECT_THROW(parse_results_csv("a,b\r\n"), Error);
    EXPECT_THROW(parse_results_csv("sweep_value,metric,mean,std,n\r\nx,y,1,2\r\n"), Error);
    EXPECT_THROW(parse_results_csv("sweep_value,metric,mean,std,n\r\nx,y,one,2,3\r\n"), Error);
    EXPECT_THROW(parse_results_csv("sweep_value,metric,mean,std,n\r\n\"x,y,1,2,3\r\n"), Error);
}

TEST(Run, DeterministicAndThreadIndependent) {
    auto c = quick_config();
    c.sweep = {"pmax_dbm", {json(20), json(30)}};
    const auto a = sweep(c);
    const auto b = sweep(c);
    EXPECT_EQ(results_csv(a.table), results_csv(b.table));
    c.workers = 3;
    EXPECT_EQ(results_csv(sweep(c).table), results_csv(a.table));
    EXPECT_EQ(a.table.rows.size(), 2u * 5u);
    EXPECT_LT(a.table.mean("30", "rcrb_m"), a.table.mean("20", "rcrb_m"));
    EXPECT_EQ(a.manifest.points.size(), 2u);
    EXPECT_EQ(a.manifest.seeds.size(), 4u);
}

TEST(Run, ResultsReparseAndManifest) {
    auto c = quick_config();
    const auto out = run_montecarlo(c);
    const auto dir = std::filesystem::temp_directory_path() / "leoisac_harness_test";
    std::filesystem::remove_all(dir);
    write_results(out.table, out.manifest, dir.string());
    const auto back = parse_results_csv(slurp(dir / "results.csv"));
    EXPECT_EQ(back.rows, out.table.rows);
    const json m = json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(m["version"], kVersionTag);
    EXPECT_EQ(m["config_hash"], config_hash(c));
    EXPECT_EQ(m["points"][0]["completed"], 4);
    EXPECT_EQ(m["trial_seeds"].size(), 4u);
    EXPECT_EQ(m["config"]["constellation"]["pmax_dbm"], 30.0);
    std::filesystem::remove_all(dir);
}

TEST(Run, NoiseRedrawDesignsOnce) {
    auto c = quick_config();
    c.redraw = Redraw::Noise;
    const auto trials = run_point(c);
    for (const auto& t : trials) {
        ASSERT_TRUE(t.ok) << t.message;
        EXPECT_DOUBLE_EQ(t.rcrb_m, trials.front().rcrb_m);
    }
    EXPECT_NE(trials[0].error_m, trials[1].error_m);
}

TEST(Run, NoiselessLocatesWithinOneMetre) {
    auto c = quick_config();
    c.num_trials = 1;
    c.noiseless = true;
    c.pso = PsoSettings{};
    c.pso.box_side_km = 10.0;
    const auto trials = run_point(c);
    ASSERT_TRUE(trials[0].ok);
    EXPECT_LE(trials[0].error_m, 1.0);
}

TEST(Run, MostlyInfeasibleAborts) {
    auto c = quick_config();
    c.optimizer.eta = 40.0;
    try {
        sweep(c);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
        EXPECT_NE(std::string(e.what()).find("more than half"), std::string::npos);
    }
    const auto trials = run_point(c);
    EXPECT_FALSE(trials[0].ok);
    EXPECT_EQ(report_point("base", trials).failures_by_kind.at("infeasible"), 4);
}

TEST(Parallel, EveryIndexOnce) {
    std::vector<int> hits(97, 0);
    parallel_for(97, 4, [&](int i) { hits[static_cast<std::size_t>(i)] += 1; });
    for (int h : hits) EXPECT_EQ(h, 1);
}

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include <gtest/gtest.h>

#include "circspace/io/config.hpp"
#include "circspace/io/csv.hpp"
#include "circspace/io/runner.hpp"
#include "circspace/io/store.hpp"

using namespace circspace;
using namespace circspace::io;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("circspace_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  [[nodiscard]] std::string file(const std::string& name) const { return (path_ / name).string(); }
  [[nodiscard]] std::string str() const { return path_.string(); }

 private:
  fs::path path_;
};

void write(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::vector<std::string> validation_items(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.items();
  }
  ADD_FAILURE() << "expected ValidationError";
  return {};
}

bool any_contains(const std::vector<std::string>& items, const std::string& needle) {
  for (const auto& i : items)
    if (i.find(needle) != std::string::npos) return true;
  return false;
}

char* no_env[] = {nullptr};

json minimal_wn() { return json{{"model", "wn_spatial"}, {"priors", {{"rho", {{"lo", 0.1}, {"hi", 3.0}}}}}}; }

}  // namespace

TEST(FormatDouble, ShortestRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 10000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(i % 40) - 20);
    ASSERT_EQ(*parse_double(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(3.0), "3");
  EXPECT_FALSE(parse_double("").has_value());
  EXPECT_FALSE(parse_double("1.5x").has_value());
  EXPECT_EQ(*parse_double(" +2.5 "), 2.5);
}

TEST(Ingest, DegreesRotationAndColumns) {
  TempDir d;
  write(d.file("a.csv"),
        "# wind\nSite_ID,X,Y,direction_deg,speed\ns1,0,0,0,3.1\ns2,1,0,90,2\ns3,\"2\",0,180,1\ns4,3,0,359,0.5\n");
  auto ds = ingest(d.file("a.csv"));
  ASSERT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds.sites.ids[2], "s3");
  EXPECT_NEAR(ds.angles[1].value(), kPi / 2.0, 1e-15);
  EXPECT_EQ(ds.speed[0], 3.1);
  IngestOptions rot;
  rot.rotate_180 = true;
  ds = ingest(d.file("a.csv"), rot);
  EXPECT_EQ(ds.angles[2].value(), 0.0);  // 180 + 180 lands exactly on zero
  EXPECT_NEAR(ds.angles[0].value(), kPi, 1e-15);
  EXPECT_NEAR(ds.angles[3].value(), 179.0 * kPi / 180.0, 1e-14);
}

TEST(Ingest, UnitDetectionAndConflicts) {
  TempDir d;
  write(d.file("deg.csv"), "x,y,direction\n0,0,10\n1,1,200\n");
  const auto items = validation_items([&] { (void)ingest(d.file("deg.csv")); });
  EXPECT_TRUE(any_contains(items, "angle_unit"));
  IngestOptions deg;
  deg.angle_unit = AngleUnit::degrees;
  EXPECT_NEAR(ingest(d.file("deg.csv"), deg).angles[1].value(), 200.0 * kPi / 180.0, 1e-14);

  write(d.file("rad.csv"), "x,y,direction_rad\n0,0,1.0\n1,1,-0.5\n");
  const auto r = ingest(d.file("rad.csv"));
  EXPECT_NEAR(r.angles[1].value(), kTwoPi - 0.5, 1e-15);
  EXPECT_THROW((void)ingest(d.file("rad.csv"), deg), ValidationError);

  write(d.file("big.csv"), "x,y,direction_deg\n0,0,400\n");
  EXPECT_THROW((void)ingest(d.file("big.csv")), ValidationError);
}

TEST(Ingest, CollectsEveryRowError) {
  TempDir d;
  write(d.file("bad.csv"), "id,x,y,direction\na,0,0,\nb,zz,0,1\nc,1,1,1\nd,2,2,nan\n");
  const auto items = validation_items([&] { (void)ingest(d.file("bad.csv")); });
  EXPECT_TRUE(any_contains(items, "line 2: missing direction"));
  EXPECT_TRUE(any_contains(items, "line 3: coordinates"));
  EXPECT_TRUE(any_contains(items, "line 5"));
  write(d.file("ragged.csv"), "x,y,direction\n0,0,1\n0,0\n");
  EXPECT_THROW((void)ingest(d.file("ragged.csv")), ValidationError);
  EXPECT_THROW((void)ingest(d.file("missing.csv")), ValidationError);
  write(d.file("nodir.csv"), "x,y\n0,0\n");
  EXPECT_THROW((void)ingest(d.file("nodir.csv")), ValidationError);
}

TEST(Ingest, LonLatNeedsPlanarFlag) {
  TempDir d;
  write(d.file("ll.csv"), "lon,lat,direction\n10.5,45.1,1\n");
  EXPECT_THROW((void)ingest(d.file("ll.csv")), ValidationError);
  IngestOptions o;
  o.planar = true;
  EXPECT_EQ(ingest(d.file("ll.csv"), o).sites.coords[0].x, 10.5);
}

TEST(Ingest, WriteReadRoundTrip) {
  TempDir d;
  CircularDataset ds;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  for (int i = 0; i < 30; ++i) {
    ds.sites.ids.push_back("p" + std::to_string(i));
    ds.sites.coords.push_back({u(rng), u(rng)});
    ds.sites.times.push_back(i % 3);
    ds.angles.emplace_back(u(rng));
  }
  write_dataset(d.file("rt.csv"), ds);
  const auto back = ingest(d.file("rt.csv"));
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    EXPECT_EQ(back.angles[i].value(), ds.angles[i].value());
    EXPECT_EQ(back.sites.coords[i].x, ds.sites.coords[i].x);
    EXPECT_EQ(back.sites.times[i], ds.sites.times[i]);
    EXPECT_EQ(back.sites.ids[i], ds.sites.ids[i]);
  }
}

TEST(Config, DefaultsForWrappedModel) {
  const auto c = parse_config(minimal_wn(), no_env);
  EXPECT_EQ(c.model, ModelName::wn_spatial);
  EXPECT_EQ(c.spec.family(), Family::exponential);
  EXPECT_EQ(c.wn.sigma2.shape, 3.0);
  EXPECT_EQ(c.wn.sigma2.scale, 0.5);
  EXPECT_EQ(c.mcmc.iters, 20000);
  EXPECT_EQ(c.mcmc.burnin, 10000);
  EXPECT_EQ(c.adapt.window.start, 100);
  EXPECT_EQ(c.adapt.window.end, 10000);
  EXPECT_EQ(c.chains, 2);
  ASSERT_EQ(c.wn.decay.size(), 1u);
  EXPECT_EQ(c.wn.decay[0].hi, 3.0);
}

TEST(Config, ProjectedAndTemporal) {
  json j{{"model", "pn_st"},
         {"priors", {{"rho_sp", {{"lo", 0.1}, {"hi", 2.0}}}, {"rho_t", {{"lo", 0.1}, {"hi", 1.0}}}, {"tau", {{"lo", -0.5}, {"hi", 0.5}}}}},
         {"adapt", {{"sd_prop", {0.1, 0.1, 0.1, 0.1, 0.1}}}},
         {"mcmc", {{"iters", 100}}}};
  const auto c = parse_config(j, no_env);
  EXPECT_EQ(c.spec.family(), Family::gneiting);
  EXPECT_EQ(c.pn.sigma2.scale, 2.0);
  EXPECT_EQ(c.pn.tau.lo, -0.5);
  EXPECT_EQ(c.simulate.n_times, 4);
  EXPECT_EQ(c.mcmc.burnin, 50);
}

TEST(Config, DecayPriorsOptionalOutsideFit) {
  const json j{{"seed", 9}};
  EXPECT_THROW((void)parse_config(j, no_env), ValidationError);
  const auto c = parse_config(j, no_env, false);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_TRUE(c.wn.decay.empty());
  // a half-written prior is still an error
  EXPECT_THROW((void)parse_config(json{{"priors", {{"rho", {{"lo", 0.1}}}}}}, no_env, false), ValidationError);
}

TEST(Config, ReportsEveryProblem) {
  json j{{"model", "wn_spatial"},
         {"correlation", {{"family", "gneiting"}}},
         {"priors", {{"tau", {{"lo", 0}, {"hi", 1}}}}},
         {"mcmc", {{"iters", 10}, {"burnin", 10}}},
         {"bogus", 1}};
  const auto items = validation_items([&] { (void)parse_config(j, no_env); });
  EXPECT_TRUE(any_contains(items, "correlation.family"));
  EXPECT_TRUE(any_contains(items, "priors.rho"));
  EXPECT_TRUE(any_contains(items, "priors.tau"));
  EXPECT_TRUE(any_contains(items, "mcmc.burnin"));
  EXPECT_TRUE(any_contains(items, "bogus: unknown key"));
}

TEST(Config, RejectsBadValues) {
  auto j = minimal_wn();
  j["correlation"] = {{"family", "exponential"}, {"nu", 1.5}};
  EXPECT_THROW((void)parse_config(j, no_env), ValidationError);
  j = minimal_wn();
  j["adapt"] = {{"sd_prop", {0.1, 0.1, 0.1}}};
  EXPECT_THROW((void)parse_config(j, no_env), ValidationError);
  j = minimal_wn();
  j["priors"]["rho"] = {{"lo", 2.0}, {"hi", 1.0}};
  EXPECT_THROW((void)parse_config(j, no_env), ValidationError);
  j = minimal_wn();
  j["mcmc"] = {{"iters", "many"}};
  EXPECT_THROW((void)parse_config(j, no_env), ValidationError);
  EXPECT_THROW((void)parse_json_text("{ \"model\": ", "inline"), ValidationError);
  EXPECT_NO_THROW((void)parse_json_text("// comment\n{ \"model\": \"wn_spatial\" }", "inline"));
}

TEST(Config, EnvironmentOverrides) {
  EXPECT_EQ(io::detail::env_name("/mcmc/iters"), "CIRCSPACE_MCMC_ITERS");
  EXPECT_EQ(io::detail::env_name("/priors/rho_sp/lo"), "CIRCSPACE_PRIORS_RHO_SP_LO");
  std::string a = "CIRCSPACE_MCMC_ITERS=500";
  std::string b = "CIRCSPACE_DATA_PATH=some/file.csv";
  std::string c = "CIRCSPACE_CORRELATION_FAMILY=matern";
  std::string other = "HOME=/root";
  char* env[] = {a.data(), b.data(), c.data(), other.data(), nullptr};
  const auto cfg = parse_config(minimal_wn(), env);
  EXPECT_EQ(cfg.mcmc.iters, 500);
  EXPECT_EQ(cfg.mcmc.burnin, 250);
  EXPECT_EQ(cfg.data_path, "some/file.csv");
  EXPECT_EQ(cfg.spec.family(), Family::matern);
  EXPECT_EQ(cfg.echo["mcmc"]["iters"], 500);

  std::string bad = "CIRCSPACE_MCMC_ITER=5";
  char* env2[] = {bad.data(), nullptr};
  const auto items = validation_items([&] { (void)parse_config(minimal_wn(), env2); });
  EXPECT_TRUE(any_contains(items, "CIRCSPACE_MCMC_ITER"));
}

TEST(Store, DrawTableRoundTripIsExact) {
  TempDir d;
  DrawTable t;
  t.columns = {"a", "b"};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z;
  for (int i = 0; i < 200; ++i) t.rows.push_back({z(rng), std::exp(20.0 * z(rng))});
  write_draw_table(d.file("t.tsv"), t);
  const auto back = read_draw_table(d.file("t.tsv"));
  EXPECT_EQ(back.columns, t.columns);
  EXPECT_EQ(back.rows, t.rows);
}

TEST(Store, ChainStatesRoundTrip) {
  WnChainState s;
  s.alpha = 3.3;
  s.k = {0, -1, 2};
  s.cov_x = Eigen::Vector2d(0.1, -0.7);
  s.adapt = BlockAdaptState::init(s.cov_x, std::vector<double>{0.1, 0.2}, 0.7, 0.234, 5);
  s.adapt.sigma(0, 1) = s.adapt.sigma(1, 0) = 0.01;
  s.iteration = 77;
  s.rng_state = "1 2 3";
  const auto back = wn_state_from_json(json::parse(state_to_json(s).dump()));
  EXPECT_EQ(back.alpha, s.alpha);
  EXPECT_EQ(back.k, s.k);
  EXPECT_EQ(back.cov_x, s.cov_x);
  EXPECT_EQ(back.adapt.sigma, s.adapt.sigma);
  EXPECT_EQ(back.adapt.lambda, s.adapt.lambda);
  EXPECT_EQ(back.adapt.iteration, 5);
  EXPECT_EQ(back.iteration, 77);
  EXPECT_EQ(back.rng_state, "1 2 3");

  PnChainState p;
  p.alpha = Eigen::Vector2d(0.3, -2.0);
  p.r = Eigen::Vector3d(1.0, 2.5, 0.1);
  p.cov_x = Eigen::Vector3d(0.0, 0.2, 0.4);
  p.adapt = BlockAdaptState::init(p.cov_x, std::vector<double>{0.1, 0.1, 0.1}, 0.7, 0.234, 1);
  p.radius = ScalarAdaptState::init(3, 0.5, 50, 0.7, 0.44, 1);
  p.radius.filled = 7;
  p.radius.alpha_sum[1] = 2.5;
  const auto pb = pn_state_from_json(json::parse(state_to_json(p).dump()));
  EXPECT_EQ(pb.alpha, p.alpha);
  EXPECT_EQ(pb.r, p.r);
  EXPECT_EQ(pb.radius.filled, 7);
  EXPECT_EQ(pb.radius.alpha_sum, p.radius.alpha_sum);
  EXPECT_EQ(pb.radius.log_sd, p.radius.log_sd);
}

TEST(Store, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Runner, FitPredictScoreAndChecksumGuard) {
  TempDir d;
  json j = minimal_wn();
  j["mcmc"] = {{"iters", 300}, {"burnin", 100}};
  j["simulate"] = {{"n_sites", 25}, {"n_holdout", 5}, {"rho", 0.3}};
  j["seed"] = 4;
  const auto cfg = parse_config(j, no_env);
  (void)run_simulate(cfg, d.file("sim"));
  const auto fit = run_fit(cfg, FitArgs{d.file("sim/data.csv"), d.file("fit"), ""});
  EXPECT_EQ(fit["stored_draws_per_chain"], 200);
  const auto [draws, manifest] = load_draws(d.file("fit"));
  EXPECT_EQ(draws.chains.size(), 2u);
  EXPECT_EQ(manifest["dataset"]["rows"], 20);

  const auto pm = run_predict(PredictArgs{d.file("fit"), "", d.file("sim/holdout_sites.csv"), d.file("pred"), 1, true});
  EXPECT_EQ(pm["n_targets"], 5);
  EXPECT_EQ(pm["n_samples"], 400);
  const auto sc = run_score(ScoreArgs{d.file("pred"), d.file("sim/holdout.csv"), d.file("score"), std::nullopt,
                                      std::numeric_limits<double>::infinity()});
  EXPECT_EQ(sc["n_sites"], 5);
  EXPECT_GE(sc["ape"].get<double>(), 0.0);
  EXPECT_LE(sc["ape"].get<double>(), 2.0);

  // a changed dataset is refused
  std::ofstream(d.file("sim/data.csv"), std::ios::app) << "extra,1,1,1\n";
  EXPECT_THROW((void)run_predict(PredictArgs{d.file("fit"), "", d.file("sim/holdout_sites.csv"), d.file("pred2"), 1, true}),
               ValidationError);
}

TEST(Runner, WarmStartMatchesLongerRun) {
  TempDir d;
  json j = minimal_wn();
  j["simulate"] = {{"n_sites", 8}};
  j["chains"] = 1;
  j["adapt"] = {{"start", 1}, {"end", 50}};
  j["mcmc"] = {{"iters", 120}, {"burnin", 60}};
  const auto long_cfg = parse_config(j, no_env);
  (void)run_simulate(long_cfg, d.file("sim"));
  (void)run_fit(long_cfg, FitArgs{d.file("sim/data.csv"), d.file("long"), ""});

  j["mcmc"] = {{"iters", 60}, {"burnin", 59}};
  j["adapt"] = {{"start", 1}, {"end", 50}};
  const auto first_cfg = parse_config(j, no_env);
  (void)run_fit(first_cfg, FitArgs{d.file("sim/data.csv"), d.file("first"), ""});
  // burn-in 0 leaves the adaptation window empty; the long run stopped adapting at 50 too
  j["mcmc"] = {{"iters", 60}, {"burnin", 0}};
  j.erase("adapt");
  const auto second_cfg = parse_config(j, no_env);
  (void)run_fit(second_cfg, FitArgs{d.file("sim/data.csv"), d.file("second"), d.file("first")});
  const auto whole = read_draw_table(chain_file(d.file("long"), 0));
  const auto tail = read_draw_table(chain_file(d.file("second"), 0));
  ASSERT_EQ(whole.rows.size(), tail.rows.size());
  EXPECT_EQ(whole.rows, tail.rows);
}

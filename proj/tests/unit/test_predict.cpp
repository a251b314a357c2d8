#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "doctest.h"
#include "helpers.hpp"
#include "rtu/predict.hpp"

using namespace rtu;
using rtu::testing::random_sequence;
using rtu::testing::random_vec;

TEST_CASE("frozen agent: MSRE equals the mean squared return") {
  PredictConfig cfg;
  cfg.adam.lr = 0.0;
  cfg.steps = 5000;
  cfg.msre_window = 100000;
  const auto m = run_online_prediction(cfg, 3);
  // Replay the same environment stream independently.
  TraceConditioning env(cfg.env, make_rng(3, Stream::kEnvironment));
  std::vector<double> us;
  for (int t = 0; t < cfg.steps; ++t) us.push_back(env.next()[1]);
  const int H = return_horizon(cfg.env.discount_gamma);
  const auto G = compute_return_targets(us, cfg.env.discount_gamma, H);
  const std::size_t evaluated = us.size() - static_cast<std::size_t>(H) - 1;
  double sq = 0.0, mean = 0.0;
  for (std::size_t t = 0; t < evaluated; ++t) {
    sq += G[t] * G[t];
    mean += G[t];
  }
  mean /= static_cast<double>(evaluated);
  double var = 0.0;
  for (std::size_t t = 0; t < evaluated; ++t) var += (G[t] - mean) * (G[t] - mean);
  CHECK(m.evaluated == static_cast<std::int64_t>(evaluated));
  CHECK(m.cumulative_msre == doctest::Approx(sq / evaluated).epsilon(1e-12));
  CHECK(m.baseline_msre == doctest::Approx(var / evaluated).epsilon(1e-9));
  CHECK_FALSE(m.diverged);
  for (const auto& r : m.rows) CHECK(r.prediction == 0.0);
}

TEST_CASE("RTRL and T-BPTT cores agree when the window covers the history") {
  for (Architecture a : {Architecture::kRtuLinear, Architecture::kRtuNonlinear}) {
    RecurrentConfig rc;
    rc.architecture = a;
    rc.n = 5;
    rc.activation = Activation::kTanh;
    rc.truncation = 40;
    Rng r1(7, 1), r2(7, 1);
    auto rtrl = make_recurrent_core(rc, 3, r1);
    rc.mode = LearningMode::kTbptt;
    auto tb = make_recurrent_core(rc, 3, r2);
    Rng rng(8, 0);
    for (const Vec& x : random_sequence(rng, 30, 3)) {
      const Vec a1 = rtrl->step(x), a2 = tb->step(x);
      CHECK(a1 == a2);
      const Vec d = random_vec(rng, static_cast<Eigen::Index>(rtrl->feature_size()));
      const auto g1 = rtrl->gradient(d), g2 = tb->gradient(d);
      CHECK(relative_error(std::span<const double>(g1), std::span<const double>(g2)) <=
            1e-10);
    }
  }
}

TEST_CASE("prediction runs are deterministic per seed") {
  PredictConfig cfg;
  cfg.steps = 3000;
  cfg.recurrent.n = 8;
  const auto a = run_online_prediction(cfg, 5);
  const auto b = run_online_prediction(cfg, 5);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].prediction == b.rows[i].prediction);
    CHECK(a.rows[i].windowed_msre == b.rows[i].windowed_msre);
  }
  const auto c = run_online_prediction(cfg, 6);
  CHECK(c.cumulative_msre != a.cumulative_msre);
}

TEST_CASE("every architecture and target mode runs") {
  for (Architecture a : {Architecture::kRtuLinear, Architecture::kRtuNonlinear,
                         Architecture::kLru, Architecture::kBlockDiag}) {
    for (TargetMode t : {TargetMode::kTd, TargetMode::kMonteCarlo}) {
      PredictConfig cfg;
      cfg.recurrent.architecture = a;
      cfg.recurrent.n = 6;
      cfg.target = t;
      cfg.steps = 2000;
      CAPTURE(to_string(a));
      const auto m = run_online_prediction(cfg, 1);
      CHECK_FALSE(m.diverged);
      CHECK(std::isfinite(m.cumulative_msre));
      CHECK(m.steps == 2000);
    }
  }
  PredictConfig cfg;
  cfg.recurrent.architecture = Architecture::kLru;
  cfg.recurrent.mode = LearningMode::kTbptt;
  try {
    run_online_prediction(cfg, 1);
    FAIL("expected unsupported");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnsupported);
  }
}

TEST_CASE("divergence guard stops the run") {
  PredictConfig cfg;
  cfg.steps = 5000;
  cfg.recurrent.n = 4;
  cfg.divergence_threshold = 1e-9;
  const auto m = run_online_prediction(cfg, 1);
  CHECK(m.diverged);
  CHECK(m.failure.find("divergence") != std::string::npos);
  CHECK(m.steps < 5000);
}

TEST_CASE("prediction CSV") {
  PredictConfig cfg;
  cfg.steps = 1000;
  cfg.recurrent.n = 4;
  cfg.log_every = 50;
  const auto m = run_online_prediction(cfg, 2);
  const std::string path = "predict_test.csv";
  write_prediction_csv(path, m);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,windowed_msre,cumulative_msre,prediction,target");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == static_cast<int>(m.rows.size()));
  CHECK(rows > 0);
  std::remove(path.c_str());
  CHECK_THROWS_AS(write_prediction_csv("/nonexistent/dir/x.csv", m), Error);
}

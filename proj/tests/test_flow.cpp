#include <catch2/catch_amalgamated.hpp>

#include "reluflow/flow.hpp"
#include "test_util.hpp"

using namespace reluflow;
using testutil::rel_err;

namespace {

struct Setup {
  Dataset ds;
  TheorySummary summary;
  Params p0;
};

Setup canonical_setup(double lambda, std::size_t m = 16, std::uint64_t seed = 2) {
  Setup s;
  s.ds = make_canonical(2, {2.0, -1.0});
  s.p0 = init_balanced({lambda, m, seed}, 2);
  s.summary = summarize(s.ds);
  attach_init(s.summary, s.p0, s.ds, lambda);
  return s;
}

}  // namespace

TEST_CASE("integrating from the interpolator does not move") {
  auto ds = make_canonical(2, {2.0, -1.0});
  auto [star, mns] = minimal_norm_interpolator(ds);
  auto summary = summarize(ds);
  attach_init(summary, star, ds, 1.0);
  REQUIRE(summary.assumption3_ok);
  FlowConfig cfg;
  cfg.max_time = 0.5;
  cfg.record_stride = 100;
  auto traj = integrate(star, ds, summary, cfg);
  CHECK(traj.loss.back() < 1e-25);
  CHECK(params_dist(traj.final_params(), star) < 1e-10);
}

TEST_CASE("full canonical run: descent, freezing, drift") {
  auto setup = canonical_setup(1e-4);
  FlowConfig cfg;
  cfg.step = 1e-3;
  cfg.max_time = 60.0;
  cfg.record_stride = 20;
  cfg.stop_loss = 1e-8;
  auto traj = integrate(setup.p0, setup.ds, setup.summary, cfg);

  CHECK(traj.loss.back() <= 1e-8);

  // loss is monotone up to the discrete-descent slack
  double tol = traj.mono_tolerance(cfg.step);
  for (std::size_t i = 1; i < traj.loss.size(); ++i)
    CHECK(traj.loss[i] <= traj.loss[i - 1] + tol);

  // times strictly increasing, series same length
  for (std::size_t i = 1; i < traj.times.size(); ++i)
    CHECK(traj.times[i] > traj.times[i - 1]);
  CHECK(traj.loss.size() == traj.times.size());
  CHECK(traj.u_plus.size() == traj.times.size());
  CHECK(traj.dist_star.size() == traj.times.size());

  // exact freezing on basis-vector data: no re-activations, frozen
  // preactivations bit-stable
  CHECK(traj.reactivation_events == 0);
  CHECK(traj.frozen_drift_max == 0.0);

  // balancedness drift bounded and small
  double max_drift = 0.0;
  for (double v : traj.drift) max_drift = std::max(max_drift, v);
  CHECK(max_drift < 1e-2);

  // u_plus approaches n ||D+||, u_minus approaches n ||D-||
  CHECK(rel_err(traj.u_plus.back(), 2.0) < 1e-2);
  CHECK(rel_err(traj.u_minus.back(), 1.0) < 1e-2);

  // distance to the interpolator set shrinks to a small value
  CHECK(traj.dist_star.back() < 0.05);
  CHECK(traj.dist_star.front() > 1.0);
}

TEST_CASE("halving the step halves the balancedness drift") {
  auto toy = preset("toy2");
  auto drift_at = [&](double step) {
    Params p0 = init_balanced({1e-4, 24, 9}, 2);
    auto summary = summarize(toy);
    attach_init(summary, p0, toy, 1e-4);
    FlowConfig cfg;
    cfg.step = step;
    cfg.max_time = 30.0;
    cfg.record_stride = 10;
    cfg.stop_loss = 1e-7;
    auto traj = integrate(p0, toy, summary, cfg);
    double d = 0.0;
    for (double v : traj.drift) d = std::max(d, v);
    return d;
  };
  double d1 = drift_at(2e-3);
  double d2 = drift_at(1e-3);
  CHECK(d2 < d1);
  CHECK(d1 / d2 > 1.5);
  CHECK(d1 / d2 < 3.0);
}

TEST_CASE("short-horizon step refinement converges first order") {
  auto setup = canonical_setup(1e-2, 8, 4);
  auto loss_at = [&](double step) {
    FlowConfig cfg;
    cfg.step = step;
    cfg.max_time = 2.0;
    cfg.record_stride = 1000000;  // only endpoints matter
    auto traj = integrate(setup.p0, setup.ds, setup.summary, cfg);
    return traj.loss.back();
  };
  double ref = loss_at(1.25e-4);
  double e1 = std::abs(loss_at(1e-3) - ref);
  double e2 = std::abs(loss_at(5e-4) - ref);
  CHECK(e2 < e1);
}

TEST_CASE("overflow raises a FlowError with the last finite state") {
  // A single active neuron with an astronomically large hidden weight: the
  // first update inflates |a| so much that the next prediction overflows.
  auto ds = make_canonical(2, {2.0, -1.0});
  Params p0;
  p0.a = {5e-155};
  p0.W = Matrix(1, 2, 0.0);
  p0.W(0, 0) = 2e154;
  auto summary = summarize(ds);
  attach_init(summary, p0, ds, 1.0);
  FlowConfig cfg;
  cfg.step = 1e-3;
  cfg.max_time = 10.0;
  try {
    integrate(p0, ds, summary, cfg);
    FAIL("expected FlowError");
  } catch (const FlowError& ex) {
    CHECK(ex.step_index > 0);
    CHECK(all_finite(ex.last_state.a));
    CHECK(all_finite(ex.last_state.W.data));
    CHECK(std::string(ex.what()).find("step size") != std::string::npos);
  }
}

TEST_CASE("config validation") {
  auto setup = canonical_setup(1e-3, 4, 8);
  FlowConfig bad;
  bad.step = 0.0;
  CHECK_THROWS_AS(integrate(setup.p0, setup.ds, setup.summary, bad),
                  std::invalid_argument);
  FlowConfig bad2;
  bad2.record_stride = 0;
  CHECK_THROWS_AS(integrate(setup.p0, setup.ds, setup.summary, bad2),
                  std::invalid_argument);
  TheorySummary no_init = summarize(setup.ds);
  CHECK_THROWS_AS(integrate(setup.p0, setup.ds, no_init, FlowConfig{}),
                  std::invalid_argument);
}

TEST_CASE("escape time scans") {
  Trajectory traj;
  for (int i = 0; i <= 100; ++i) {
    traj.times.push_back(0.1 * i);
    traj.loss.push_back(i < 30 ? 1.0 : (i < 60 ? 0.5 - (i - 30) * 0.01 : 0.1));
  }
  // crosses 0.4 at i=40 (t=4.0) and stays below: wait, 0.5 - 10*0.01 = 0.4
  // at i=40; first strictly-below record is i=41.
  CHECK(escape_time(traj, 0.4, Escape::First) == Catch::Approx(4.1));

  Trajectory mono;
  for (int i = 0; i <= 50; ++i) {
    mono.times.push_back(0.1 * i);
    mono.loss.push_back(1.0 - 0.02 * i);
  }
  // falls below 0.4 at t = 3.0 + one record (strict), durable
  CHECK(escape_time(mono, 0.4, Escape::Second) ==
        Catch::Approx(mono.times[31]).margin(1e-12));
  CHECK_THROWS_WITH(escape_time(mono, -1.0, Escape::Second),
                    Catch::Matchers::ContainsSubstring("not escaped"));
}

TEST_CASE("logistic fit recovers synthetic parameters") {
  const double a = 1.7, b = 3.1, u0 = 1e-6;
  Trajectory traj;
  TheorySummary s;
  s.n = 2;
  s.dirs.norm_plus = 1.55;  // capacity guess n*||D+|| = 3.1
  double c0 = b / u0 - 1.0;
  for (int i = 0; i <= 4000; ++i) {
    double t = i * 0.01;
    traj.times.push_back(t);
    traj.u_plus.push_back(b / (1.0 + c0 * std::exp(-a * t)));
  }
  auto fit = u_plus_growth_fit(traj, s);
  CHECK(rel_err(fit.rate, a) < 1e-6);
  CHECK(rel_err(fit.capacity, b) < 1e-6);

  Trajectory flat;
  TheorySummary s2;
  s2.n = 2;
  s2.dirs.norm_plus = 1.0;
  for (int i = 0; i < 100; ++i) {
    flat.times.push_back(i * 0.01);
    flat.u_plus.push_back(1e-9);
  }
  CHECK_THROWS_WITH(u_plus_growth_fit(flat, s2),
                    Catch::Matchers::ContainsSubstring("growth window"));
}

TEST_CASE("growth fit on a real canonical run matches the closed form") {
  auto setup = canonical_setup(1e-6, 24, 11);
  FlowConfig cfg;
  cfg.step = 1e-3;
  cfg.max_time = 40.0;
  cfg.record_stride = 5;
  cfg.stop_loss = 1e-9;
  auto traj = integrate(setup.p0, setup.ds, setup.summary, cfg);
  auto fit = u_plus_growth_fit(traj, setup.summary);
  CHECK(rel_err(fit.rate, 2.0 * setup.summary.dirs.norm_plus) < 0.1);
  CHECK(rel_err(fit.capacity,
                static_cast<double>(setup.summary.n) * setup.summary.dirs.norm_plus) <
        0.02);
}

TEST_CASE("snapshots: explicit times and u-level triggers") {
  auto setup = canonical_setup(1e-4);
  FlowConfig cfg;
  cfg.step = 1e-3;
  cfg.max_time = 40.0;
  cfg.record_stride = 50;
  cfg.stop_loss = 1e-8;
  cfg.snapshot_times = {5.0};
  cfg.snapshot_u_plus_level = 1.0;   // half capacity
  cfg.snapshot_u_minus_level = 0.5;  // half capacity
  auto traj = integrate(setup.p0, setup.ds, setup.summary, cfg);
  bool have_time = false, have_up = false, have_um = false, have_final = false;
  double t_up = 0, t_um = 0;
  for (const auto& snap : traj.snapshots) {
    if (snap.tag == "time") {
      have_time = true;
      CHECK(snap.time == Catch::Approx(5.0).margin(2e-3));
    }
    if (snap.tag == "u_plus") {
      have_up = true;
      t_up = snap.time;
    }
    if (snap.tag == "u_minus") {
      have_um = true;
      t_um = snap.time;
    }
    if (snap.tag == "final") have_final = true;
  }
  CHECK(have_time);
  CHECK(have_up);
  CHECK(have_um);
  CHECK(have_final);
  CHECK(t_up < t_um);  // positive mass grows first
}

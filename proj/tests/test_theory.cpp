#include <catch2/catch_amalgamated.hpp>

#include "reluflow/theory.hpp"
#include "test_util.hpp"

using namespace reluflow;
using testutil::rel_err;

TEST_CASE("alignment directions, canonical and toy2") {
  auto ds = make_canonical(2, {2.0, -1.0});
  auto dirs = alignment_directions(ds);
  CHECK(dirs.d_plus == std::vector<double>{1.0, 0.0});
  CHECK(dirs.d_minus == std::vector<double>{0.0, -0.5});
  CHECK(dirs.r == 2.0);

  auto toy = preset("toy2");
  auto dt = alignment_directions(toy);
  CHECK(dt.d_plus == std::vector<double>{1.0, 0.5});
  CHECK(dt.d_minus == std::vector<double>{0.25, -0.5});
  CHECK(rel_err(dt.r, 2.0) < 1e-15);

  CHECK_THROWS_AS(alignment_directions(make_canonical(2, {1.0, 2.0})),
                  AssumptionError);
}

TEST_CASE("epsilon feasibility, closed form vs direct bisection") {
  auto ds = make_canonical(2, {2.0, -1.0});
  auto eb = epsilon_max(ds);
  CHECK(eb.alpha == 2.0);
  CHECK(eb.beta == 2.0);
  CHECK(rel_err(eb.eps_max, 0.2) < 1e-14);

  // independent oracle: bisect the largest eps satisfying the raw inequalities
  auto feasible = [](const Dataset& d, double eps) {
    auto dirs = alignment_directions(d);
    double alpha = 1e300, beta = 1e300;
    for (double y : d.labels) {
      if (y > 0) alpha = std::min(alpha, y * y / (2 * dirs.norm_plus * dirs.norm_plus));
      if (y < 0) beta = std::min(beta, y * y / (2 * dirs.norm_minus * dirs.norm_minus));
    }
    bool a = (1 + 3 * eps) * std::max(1 - alpha, dirs.norm_minus / dirs.norm_plus) <=
             1 - eps;
    bool b = (1 + 3 * dirs.r * eps) * (1 - beta) <= 1 - eps;
    return a && b;
  };
  Rng rng(41);
  for (int trial = 0; trial < 15; ++trial) {
    auto d = testutil::random_orthonormal_dataset(rng, 3, 6);
    auto e = epsilon_max(d);
    double lo = 0.0, hi = 0.5;
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      (feasible(d, mid) ? lo : hi) = mid;
    }
    double oracle = std::min(lo, 0.25);
    CHECK(std::abs(e.eps_max - oracle) < 1e-9);
  }
}

TEST_CASE("epsilon constraint edge cases") {
  // beta == 1 exactly: second constraint vacuous.
  // negatives (-1, -sqrt(7)) in n=4 give beta = 1*16/(2*8) = 1.
  auto ds = make_canonical(4, {3.0, 0.1, -1.0, -std::sqrt(7.0)});
  auto eb = epsilon_max(ds);
  CHECK(rel_err(eb.beta, 1.0) < 1e-14);
  auto dirs = alignment_directions(ds);
  double q = std::max(1.0 - eb.alpha, dirs.norm_minus / dirs.norm_plus);
  CHECK(rel_err(eb.eps_max, (1.0 - q) / (1.0 + 3.0 * q)) < 1e-12);

  // shrinking alpha shrinks eps_max
  double prev = 1.0;
  for (double small : {1.0, 0.5, 0.25, 0.1}) {
    auto d = make_canonical(3, {3.0, small, -1.0});
    auto e = epsilon_max(d);
    CHECK(e.eps_max <= prev + 1e-15);
    prev = e.eps_max;
  }
}

TEST_CASE("fitting sets") {
  auto ds = make_canonical(2, {2.0, -1.0});
  auto dirs = alignment_directions(ds);
  Params p;
  p.a = {1.0};
  p.W = Matrix(1, 2);
  p.W(0, 0) = dirs.d_plus[0];
  p.W(0, 1) = dirs.d_plus[1];
  auto sets = fitting_sets(p, ds);
  CHECK(sets.s_plus1 == std::vector<std::size_t>{0});
  CHECK(sets.s_minus1.empty());
  CHECK_FALSE(sets.both_nonempty);

  // all-positive signs leave S-,1 empty
  InitConfig cfg{1e-3, 8, 5};
  Params q = init_balanced(cfg, 2);
  for (auto& a : q.a) a = std::abs(a);
  CHECK(fitting_sets(q, ds).s_minus1.empty());

  // with width 60 on toy2 both sets are nonempty for every seed tried
  auto toy = preset("toy2");
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Params r = init_balanced({1e-6, 60, seed}, 2);
    CHECK(fitting_sets(r, toy).both_nonempty);
  }
}

TEST_CASE("minimal norm interpolator, canonical values") {
  auto ds = make_canonical(2, {2.0, -1.0});
  auto [star, mns] = minimal_norm_interpolator(ds);
  CHECK(mns == 6.0);
  CHECK(rel_err(star.W(0, 0), std::sqrt(2.0)) < 1e-15);
  CHECK(star.W(0, 1) == 0.0);
  CHECK(rel_err(star.a[0], std::sqrt(2.0)) < 1e-15);
  CHECK(star.W(1, 0) == 0.0);
  CHECK(rel_err(star.W(1, 1), 1.0) < 1e-15);
  CHECK(rel_err(star.a[1], -1.0) < 1e-15);
  CHECK(rel_err(params_norm_sq(star), 6.0) < 1e-14);
  CHECK(loss(star, ds) < 1e-25);

  auto d3 = make_canonical(3, {2.0, -1.0, 1.0});
  auto [s3, m3] = minimal_norm_interpolator(d3);
  CHECK(rel_err(m3, 2.0 * std::sqrt(5.0) + 2.0) < 1e-14);
  CHECK(rel_err(params_norm_sq(s3), m3) < 1e-14);
  CHECK(loss(s3, d3) < 1e-25);

  CHECK_THROWS_WITH(minimal_norm_interpolator(preset("toy2")),
                    Catch::Matchers::ContainsSubstring("orthonormal"));
}

TEST_CASE("minimal norm value on random orthonormal datasets") {
  Rng rng(53);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t d = 2 + static_cast<std::size_t>(rng.uniform01() * 8);
    std::size_t n = 2 + static_cast<std::size_t>(rng.uniform01() * (d - 1));
    auto ds = testutil::random_orthonormal_dataset(rng, n, d);
    auto dirs = alignment_directions(ds);
    auto [star, mns] = minimal_norm_interpolator(ds);
    CHECK(rel_err(params_norm_sq(star), mns) < 1e-12);
    CHECK(rel_err(mns, 2.0 * ds.n() * (dirs.norm_plus + dirs.norm_minus)) < 1e-12);
    double scale = loss(Params{std::vector<double>(1, 0.0), Matrix(1, d, 0.0)}, ds);
    CHECK(loss(star, ds) <= 1e-12 * scale);
  }
}

TEST_CASE("membership in the minimiser set") {
  auto ds = make_canonical(2, {2.0, -1.0});
  auto [star, mns] = minimal_norm_interpolator(ds, 4);
  CHECK(membership_min_norm(star, ds, 1e-10));

  // split the positive neuron into two parallel halves: still a member
  Params split = star;
  double half_sq = dot(star.W.row(0), star.W.row(0)) / 2.0;
  double coef = std::sqrt(half_sq) / nrm2(star.W.row(0));
  for (std::size_t i = 0; i < 2; ++i) {
    split.W(0, i) = star.W(0, i) * coef;
    split.W(2, i) = star.W(0, i) * coef;
  }
  split.a[0] = nrm2(split.W.row(0));
  split.a[2] = nrm2(split.W.row(2));
  CHECK(membership_min_norm(split, ds, 1e-10));

  auto [saddle, sl] = saddle_point(ds);
  CHECK_FALSE(membership_min_norm(saddle, ds, 1e-10));

  Params scaled = star;
  for (auto& v : scaled.W.data) v *= 1.01;
  for (auto& v : scaled.a) v *= 1.01;
  CHECK_FALSE(membership_min_norm(scaled, ds, 1e-10));
  CHECK_THROWS_AS(membership_min_norm(star, preset("toy2"), 1e-10), AssumptionError);

  // any accepted member has the minimal squared norm
  CHECK(rel_err(params_norm_sq(split), mns) < 1e-12);
}

TEST_CASE("saddle point") {
  auto ds = make_canonical(2, {2.0, -1.0});
  auto [saddle, sl] = saddle_point(ds);
  CHECK(sl == 0.25);
  CHECK(rel_err(loss(saddle, ds), 0.25) < 1e-12);

  // full gradient vanishes: residual zero on activated samples, inactive
  // samples sit exactly on the sigma'(0)=0 boundary
  auto g = gradient(saddle, ds);
  for (double v : g.a) CHECK(std::abs(v) <= 1e-10);
  for (double v : g.W.data) CHECK(std::abs(v) <= 1e-10);

  Params zero;
  zero.a.assign(1, 0.0);
  zero.W = Matrix(1, 2, 0.0);
  CHECK(sl < loss(zero, ds));

  CHECK_THROWS_AS(saddle_point(preset("toy2")), AssumptionError);
  CHECK(saddle_loss_level(preset("toy2")) == 0.25);
}

TEST_CASE("time bounds") {
  auto ds = make_canonical(2, {2.0, -1.0});
  auto s = summarize(ds);
  auto tb = time_bounds(1e-4, 0.2, s);
  CHECK(rel_err(tb.t2_max, 1.6 * std::log(1e4)) < 1e-12);  // ||D+|| = 1
  CHECK(rel_err(tb.t1, 0.2 * std::log(1e4) / 0.5) < 1e-12);
  CHECK(tb.plateau_lo < tb.plateau_hi);

  auto tiny = time_bounds(1.0 - 1e-12, 0.2, s);
  CHECK(tiny.t3_max < 1e-9);

  CHECK_THROWS_AS(time_bounds(1.0, 0.2, s), std::invalid_argument);
  CHECK_THROWS_AS(time_bounds(1.5, 0.2, s), std::invalid_argument);
  CHECK_THROWS_AS(time_bounds(1e-4, 0.0, s), std::invalid_argument);

  // plateau window nonempty for any feasible eps on random datasets
  Rng rng(59);
  for (int trial = 0; trial < 20; ++trial) {
    auto d = testutil::random_orthonormal_dataset(rng, 3, 5);
    auto sum = summarize(d);
    auto bounds = time_bounds(1e-5, default_eps(sum), sum);
    CHECK(bounds.plateau_lo < bounds.plateau_hi);
  }
}

TEST_CASE("negating labels swaps the closed-form objects") {
  auto ds = make_canonical(3, {2.0, -1.0, 0.5});
  auto neg = negate_labels(ds);
  auto dirs = alignment_directions(ds);
  auto dirs_neg = alignment_directions(neg);
  for (std::size_t i = 0; i < ds.dim(); ++i) {
    CHECK(dirs_neg.d_plus[i] == -dirs.d_minus[i]);
    CHECK(dirs_neg.d_minus[i] == -dirs.d_plus[i]);
  }
  // the saddle of the negated problem is built from -D- of the original
  auto [saddle_neg, sl_neg] = saddle_point(neg);
  double coef = std::sqrt(static_cast<double>(ds.n()) / dirs.norm_minus);
  for (std::size_t i = 0; i < ds.dim(); ++i)
    CHECK(saddle_neg.W(0, i) == -coef * dirs.d_minus[i]);
  auto [star, mns] = minimal_norm_interpolator(ds);
  auto [star_neg, mns_neg] = minimal_norm_interpolator(neg);
  CHECK(mns == mns_neg);

  // the epsilon bound refuses non-canonical orientation outright
  CHECK_THROWS_AS(epsilon_max(neg), AssumptionError);
}

TEST_CASE("projection distances to the closed-form sets") {
  auto ds = make_canonical(2, {2.0, -1.0});
  auto s = summarize(ds);
  auto [star, mns] = minimal_norm_interpolator(ds);
  attach_init(s, star, ds, 1.0);
  REQUIRE(s.assumption3_ok);
  CHECK(dist_to_star_set(star, s) < 1e-12);

  // saddle set: positive mass in place, no negative mass
  Params near_saddle = star;
  for (std::size_t i = 0; i < 2; ++i) near_saddle.W(1, i) = 0.0;
  near_saddle.a[1] = 0.0;
  CHECK(dist_to_saddle_set(near_saddle, s) < 1e-12);
  CHECK(dist_to_star_set(near_saddle, s) > 1.0);  // negative mass missing
  CHECK(dist_to_saddle_set(star, s) > 1.0);       // negative mass present
}

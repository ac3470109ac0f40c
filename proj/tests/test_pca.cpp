#include <catch2/catch_amalgamated.hpp>

#include "reluflow/pca.hpp"
#include "reluflow/rng.hpp"
#include "test_util.hpp"

using namespace reluflow;

namespace {

// Random orthogonal d x d matrix via Gram-Schmidt on a Gaussian matrix.
Matrix random_rotation(Rng& rng, std::size_t d) {
  Matrix q(d, d);
  for (double& v : q.data) v = rng.gaussian();
  for (std::size_t k = 0; k < d; ++k) {
    auto row = q.row(k);
    for (std::size_t prev = 0; prev < k; ++prev) {
      double proj = dot(row, q.row(prev));
      axpy(-proj, q.row(prev), row);
    }
    scale(1.0 / nrm2(row), row);
  }
  return q;
}

}  // namespace

TEST_CASE("rank-1 matrix: first component explains everything") {
  Rng rng(83);
  std::size_t m = 20, d = 7;
  std::vector<double> dir(d);
  for (double& v : dir) v = rng.gaussian();
  Matrix w(m, d);
  for (std::size_t j = 0; j < m; ++j) {
    double c = rng.gaussian();
    for (std::size_t i = 0; i < d; ++i) w(j, i) = c * dir[i];
  }
  auto pca = pca_top_k(w, 3);
  CHECK(pca.explained_ratio[0] > 1.0 - 1e-12);
  CHECK(pca.explained_ratio[1] < 1e-12);
}

TEST_CASE("explained variance is rotation invariant") {
  Rng rng(89);
  std::size_t m = 15, d = 6;
  Matrix w(m, d);
  for (double& v : w.data) v = rng.gaussian();
  auto base = pca_top_k(w, 4);

  Matrix q = random_rotation(rng, d);
  Matrix wq(m, d, 0.0);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0.0;
      for (std::size_t l = 0; l < d; ++l) s += w(j, l) * q(l, i);
      wq(j, i) = s;
    }
  auto rotated = pca_top_k(wq, 4);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(std::abs(base.explained_ratio[i] - rotated.explained_ratio[i]) < 1e-10);
}

TEST_CASE("both gram paths produce orthonormal components") {
  Rng rng(97);
  for (auto [m, d] : {std::pair<std::size_t, std::size_t>{12, 5}, {4, 9}}) {
    Matrix w(m, d);
    for (double& v : w.data) v = rng.gaussian();
    std::size_t k = 3;
    auto pca = pca_top_k(w, k);
    REQUIRE(pca.components.rows == k);
    double sum = 0.0;
    for (double r : pca.explained_ratio) sum += r;
    CHECK(sum <= 1.0 + 1e-12);
    for (std::size_t i = 0; i < k; ++i) {
      CHECK(std::abs(nrm2(pca.components.row(i)) - 1.0) < 1e-10);
      for (std::size_t j = i + 1; j < k; ++j)
        CHECK(std::abs(dot(pca.components.row(i), pca.components.row(j))) < 1e-10);
    }
    // eigenvalues descending
    for (std::size_t i = 1; i < k; ++i)
      CHECK(pca.eigenvalues[i] <= pca.eigenvalues[i - 1] + 1e-12);
  }
}

TEST_CASE("dense cap and degenerate inputs error") {
  Matrix w(3, 3, 1.0);
  CHECK_THROWS_WITH(pca_top_k(w, 2, 2),
                    Catch::Matchers::ContainsSubstring("smaller instance"));
  Matrix one(1, 3, 1.0);
  CHECK_THROWS_AS(pca_top_k(one, 1), std::invalid_argument);
}

TEST_CASE("polar projection") {
  Matrix w(4, 3, 0.0);
  w(0, 0) = 2.0;
  w(1, 0) = -2.0;
  w(2, 1) = 1.0;
  w(3, 1) = -1.0;
  auto pca = pca_top_k(w, 2);
  std::vector<double> v{3.0, 0.0, 0.0};
  auto polar = project_polar(pca, v);
  CHECK(polar.radius == Catch::Approx(3.0).margin(1e-10));
  std::vector<double> z{0.0, 0.0, 5.0};  // orthogonal to both components
  auto pz = project_polar(pca, z);
  CHECK(pz.radius < 1e-10);
}

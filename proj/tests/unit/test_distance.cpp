#include "doctest.h"

#include "support/fixtures.hpp"
#include "wshape/distance.hpp"

#include <algorithm>

using namespace wshape;
using namespace wshape::testing;

TEST_CASE("cosine distance basics") {
  Vector x(3), y(3);
  x << 1, 0, 0;
  y << 0, 1, 0;
  CHECK(cosine_distance(x, y) == doctest::Approx(1.0));
  CHECK(cosine_distance(x, Vector(-x)) == doctest::Approx(2.0));
  CHECK(cosine_distance(x, Vector(3.5 * x)) == doctest::Approx(0.0).epsilon(1e-15));

  Vector a(2), b(2);
  a << 3, 4;
  b << 4, 3;
  CHECK(cosine_distance(a, b) == doctest::Approx(1.0 - 24.0 / 25.0));
}

TEST_CASE("cosine distance properties on random pairs") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  for (int t = 0; t < 2000; ++t) {
    Vector x(16), y(16);
    for (int i = 0; i < 16; ++i) {
      x(i) = normal(rng);
      y(i) = normal(rng);
    }
    const double d = cosine_distance(x, y);
    CHECK(d >= 0.0);
    CHECK(d <= 2.0);
    CHECK(d == cosine_distance(y, x));
    CHECK(cosine_distance(x, x) == 0.0);
    CHECK(cosine_distance(Vector(scale(rng) * x), y) == doctest::Approx(d).epsilon(1e-12));
  }
}

TEST_CASE("cosine distance errors") {
  Vector x = Vector::Ones(4);
  CHECK(error_of([&] { cosine_distance(x, Vector(Vector::Zero(4))); }) == ErrorCode::ZeroNorm);
  CHECK(error_of([&] { cosine_distance(x, Vector(Vector::Ones(3))); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("pool sizes follow the pairing rule") {
  const auto msvs = random_msvs(16, 16, 3);
  CHECK(pairwise_dsv(msvs[0], msvs[0]).size() == 120);
  CHECK(pairwise_dsv(msvs[0], msvs[1]).size() == 256);
  CHECK(pairwise_dsv(msvs[0], msvs[1]).source == "q-k");
  CHECK(pairwise_dsv(msvs[4], msvs[4]).source == "gate-gate");

  const DsvSamples all = all_pairs_dsv(msvs);
  CHECK(all.size() == 6216);
  CHECK(all.zeros_removed);
  CHECK(all.rank == 16);

  Msv other = msvs[1];
  other.rank = 8;
  CHECK(error_of([&] { pairwise_dsv(msvs[0], other); }) == ErrorCode::RankMismatch);
}

TEST_CASE("all-pairs pool equals brute force over the stacked SV vectors") {
  const auto msvs = random_msvs(5, 6, 8);
  std::vector<Vector> stacked;
  for (const Msv& m : msvs) {
    for (const SvVector& row : m.rows) stacked.push_back(row.values);
  }
  std::vector<double> want;
  for (std::size_t i = 0; i < stacked.size(); ++i) {
    for (std::size_t j = i + 1; j < stacked.size(); ++j) {
      const double d = 1.0 - stacked[i].dot(stacked[j]) / (stacked[i].norm() * stacked[j].norm());
      want.push_back(std::clamp(d, 0.0, 2.0));
    }
  }
  std::vector<double> got = all_pairs_dsv(msvs).values;
  REQUIRE(got.size() == want.size());
  std::sort(got.begin(), got.end());
  std::sort(want.begin(), want.end());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("identical SV vectors give zeros that are removed") {
  auto msvs = random_msvs(4, 5, 2);
  msvs[1] = Msv::from_matrix(ProjectionKind::K, msvs[0].as_matrix());
  const DsvSamples qk = pairwise_dsv(msvs[0], msvs[1]);
  CHECK(std::count(qk.values.begin(), qk.values.end(), 0.0) == 4);
  const DsvSamples cleaned = remove_zeros(qk);
  CHECK(cleaned.size() == 12);
  CHECK(cleaned.zeros_removed);
  CHECK(all_pairs_dsv(msvs).size() == 28 * 27 / 2 - 4);
}

TEST_CASE("similarity matrix is symmetric with a unit diagonal") {
  const auto msvs = random_msvs(3, 4, 6);
  const Matrix s = similarity_matrix(msvs);
  CHECK(s.rows() == 21);
  CHECK((s - s.transpose()).cwiseAbs().maxCoeff() == 0.0);
  for (Eigen::Index i = 0; i < s.rows(); ++i) CHECK(s(i, i) == doctest::Approx(1.0));
  CHECK(s(0, 4) == doctest::Approx(1.0 - cosine_distance(msvs[0].rows[0].values, msvs[1].rows[1].values)));
}

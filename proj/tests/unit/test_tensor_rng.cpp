#include <doctest.h>

#include <cmath>
#include <set>

#include "fpnseg/error.hpp"
#include "fpnseg/rng.hpp"
#include "fpnseg/tensor.hpp"

using namespace fpnseg;

TEST_CASE("tensor construction and indexing") {
  Tensor t({2, 3, 4, 5}, 1.5f);
  CHECK(t.numel() == 120);
  CHECK(t.rank() == 4);
  CHECK(t.at(1, 2, 3, 4) == 1.5f);
  t.at(1, 2, 3, 4) = 7.0f;
  CHECK(t[119] == 7.0f);
  CHECK(t.reshaped({120}).dim(0) == 120);
  CHECK_THROWS_AS(t.reshaped({7}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), ShapeError);
}

TEST_CASE("tensor arithmetic and comparison") {
  Tensor a({2, 2}, std::vector<float>{1, 2, 3, 4});
  Tensor b = a;
  b += a;
  b *= 0.5f;
  CHECK(a == b);
  CHECK(a.sum() == doctest::Approx(10.0));
  Tensor64 d = a.cast<double>();
  CHECK(d[3] == 4.0);
  Tensor c({4});
  CHECK_THROWS_AS(c += a, ShapeError);
  a[0] = std::nanf("");
  CHECK_FALSE(a.all_finite());
}

TEST_CASE("rng streams are pure functions of seed and counter") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream c(42, 50);
  RngStream d(42);
  for (int i = 0; i < 50; ++i) d.next_u64();
  CHECK(c.next_u64() == d.next_u64());
}

TEST_CASE("derived streams ignore the parent counter and differ by key") {
  RngStream a(7);
  RngStream before = a.derive("x", 3);
  a.next_u64();
  RngStream after = a.derive("x", 3);
  CHECK(before.next_u64() == after.next_u64());
  std::set<uint64_t> firsts;
  for (uint64_t i = 0; i < 50; ++i) firsts.insert(RngStream(7).derive("x", i).next_u64());
  firsts.insert(RngStream(7).derive("y", 0).next_u64());
  CHECK(firsts.size() == 51);
}

TEST_CASE("rng distributions have the expected ranges and moments") {
  RngStream r(1);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(r.below(7) < 7);
    const double z = r.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
  CHECK(r.below(1) == 0);
}

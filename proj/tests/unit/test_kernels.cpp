#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <vector>

#include "mstage/clustering.hpp"
#include "mstage/kernels.hpp"
#include "support/test_support.hpp"

using namespace mstage;
namespace k = mstage::kernels;

namespace {

std::vector<k::Isa> vector_isas() {
  std::vector<k::Isa> out;
  for (auto isa : {k::Isa::avx2, k::Isa::neon}) {
    if (k::available(isa)) out.push_back(isa);
  }
  return out;
}

// Restores the startup variant when a test switches it.
struct ActiveGuard {
  k::Isa saved = k::active().isa;
  ~ActiveGuard() { k::set_active(saved); }
};

}  // namespace

TEST_CASE("scalar kernels match the definitions") {
  const auto& s = k::table(k::Isa::scalar);
  const double a[] = {1, 2, 3}, b[] = {4, -5, 6};
  CHECK(s.dot(a, b, 3) == 12.0);
  CHECK(s.squared_distance(a, b, 3) == 9.0 + 49.0 + 9.0);
  double y[] = {1, 1, 1};
  s.axpy(2.0, a, y, 3);
  CHECK(y[0] == 3.0);
  CHECK(y[2] == 7.0);
  CHECK(s.dot(a, b, 0) == 0.0);
}

TEST_CASE("unavailable variants are refused") {
  CHECK(k::available(k::Isa::scalar));
  for (auto isa : {k::Isa::avx2, k::Isa::neon}) {
    if (!k::available(isa)) CHECK_THROWS_AS(k::table(isa), std::invalid_argument);
  }
  CHECK(k::parse_isa("avx2") == k::Isa::avx2);
  CHECK_FALSE(k::parse_isa("sse9"));
}

TEST_CASE("vector variants agree with scalar") {
  const auto isas = vector_isas();
  if (isas.empty()) {
    MESSAGE("no vector variant on this machine; equivalence not exercised");
    return;
  }
  const auto& ref = k::table(k::Isa::scalar);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (auto isa : isas) {
    const auto& t = k::table(isa);
    CAPTURE(k::to_string(isa));
    for (std::size_t n = 0; n <= 67; ++n) {
      std::vector<double> a(n), b(n), y1(n), y2(n);
      double mag = 0.0, sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = u(rng);
        b[i] = u(rng);
        y1[i] = y2[i] = u(rng);
        mag += std::abs(a[i] * b[i]);
        sq += (a[i] - b[i]) * (a[i] - b[i]);
      }
      const double tol = 1e-14 * (mag + 1.0);
      CHECK(std::abs(t.dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= tol);
      CHECK(std::abs(t.squared_distance(a.data(), b.data(), n) -
                     ref.squared_distance(a.data(), b.data(), n)) <= 1e-14 * (sq + 1.0));
      t.axpy(0.37, a.data(), y1.data(), n);
      ref.axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(y1[i] - y2[i]) <= 1e-15 * (std::abs(y2[i]) + 10.0));
      }
    }
  }
}

TEST_CASE("k-means result does not depend on the variant") {
  const auto isas = vector_isas();
  if (isas.empty()) return;
  ActiveGuard guard;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  EmbeddingMatrix m(6);
  for (int i = 0; i < 60; ++i) {
    std::vector<double> row(6);
    for (int j = 0; j < 6; ++j) row[j] = g(rng) + (i % 3) * 5.0;
    m.add("p" + std::to_string(i), row);
  }
  KMeansOptions opts;
  opts.k = 3;
  k::set_active(k::Isa::scalar);
  const auto ref = kmeans(m, opts);
  for (auto isa : isas) {
    k::set_active(isa);
    const auto got = kmeans(m, opts);
    CHECK(got.assignment == ref.assignment);
    CHECK(std::abs(got.inertia - ref.inertia) <= 1e-9 * ref.inertia);
  }
}

TEST_CASE("environment override is honoured at startup") {
  // The active table was chosen before this test ran; if the variable names
  // an available variant, that variant must be the active one.
  if (const char* forced = std::getenv("MSTAGE_SIMD")) {
    if (auto isa = k::parse_isa(forced); isa && k::available(*isa)) {
      CHECK(k::active().isa == *isa);
    }
  }
}

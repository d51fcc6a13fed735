#include <cmath>
#include <set>

#include <doctest.h>

#include "clb/codec.hpp"
#include "clb/numerics.hpp"

using namespace clb;

namespace {

// Entropy-based MI of a (value, bit) count table, independent of plugin_mi.
double entropy_mi(const std::vector<std::array<double, 2>>& counts) {
  double n = 0.0;
  for (auto& r : counts) n += r[0] + r[1];
  auto h = [n](double c) { return c > 0.0 ? -(c / n) * std::log(c / n) : 0.0; };
  double hv = 0.0, hs = 0.0, hj = 0.0, c0 = 0.0, c1 = 0.0;
  for (auto& r : counts) {
    hv += h(r[0] + r[1]);
    hj += h(r[0]) + h(r[1]);
    c0 += r[0];
    c1 += r[1];
  }
  hs = h(c0) + h(c1);
  return hv + hs - hj;
}

// Smallest C1 with exp(a C2) + exp(-a C2 (1 + C1)) <= 2, by bisection.
double c1_by_bisection(double c2, double a) {
  auto excess = [&](double c1) { return std::exp(a * c2) + std::exp(-a * c2 * (1.0 + c1)) - 2.0; };
  double lo = -1.0, hi = 1e6;
  for (int i = 0; i < 400; ++i) {
    double mid = 0.5 * (lo + hi);
    (excess(mid) <= 0.0 ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace

TEST_CASE("binary_kl frozen values") {
  CHECK(binary_kl(0.25, 0.5) == doctest::Approx(0.13081203594113697).epsilon(1e-14));
  CHECK(binary_kl(0.0, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(binary_kl(0.3, 0.3) == 0.0);
  CHECK_THROWS_AS(binary_kl(0.2, 0.0), InfiniteDivergence);
  CHECK_THROWS_AS(binary_kl(1.2, 0.5), std::domain_error);
}

TEST_CASE("binary_kl satisfies Pinsker on a grid") {
  for (int i = 0; i <= 50; ++i)
    for (int j = 1; j < 50; ++j) {
      double p = i / 50.0, q = j / 50.0;
      CHECK(binary_kl(p, q) >= 2.0 * (p - q) * (p - q) - 1e-15);
    }
}

TEST_CASE("invert_binary_kl") {
  CHECK(invert_binary_kl(0.0, 0.1) == doctest::Approx(0.19033).epsilon(1e-4));
  CHECK(invert_binary_kl(0.2, 0.0) == 0.2);
  CHECK(invert_binary_kl(0.0, 10.0) == 1.0);
  CHECK_THROWS_AS(invert_binary_kl(0.1, -1.0), std::domain_error);

  SUBCASE("round trip and monotonicity") {
    RngStream rng(11);
    for (int i = 0; i < 500; ++i) {
      double p = 0.9 * rng.uniform();
      double b = 0.3 * rng.uniform() + 1e-4;
      double l = invert_binary_kl(p, b);
      REQUIRE(l >= p);
      if (l < 1.0) CHECK(std::abs(binary_kl(p, 0.5 * (p + l)) - b) <= 1e-9);
      CHECK(invert_binary_kl(p, b * 1.5) >= l);
    }
  }
}

TEST_CASE("plugin_mi") {
  JointHistogram h({0.0, 1.0}, {{3, 1}, {1, 3}});
  CHECK(plugin_mi(h) == doctest::Approx(0.13081203594113697).epsilon(1e-12));

  JointHistogram indep({0.0, 1.0}, {{5, 5}, {2, 2}});
  CHECK(plugin_mi(indep) == doctest::Approx(0.0));

  JointHistogram empty({0.0, 1.0});
  CHECK_THROWS_AS(plugin_mi(empty), NoObservations);

  SUBCASE("matches entropy identity on random tables") {
    RngStream rng(3);
    for (int t = 0; t < 200; ++t) {
      std::size_t a = 1 + rng.below(5);
      std::vector<double> alphabet(a);
      for (std::size_t v = 0; v < a; ++v) alphabet[v] = static_cast<double>(v);
      JointHistogram hist(alphabet);
      std::vector<std::array<double, 2>> counts(a, {0.0, 0.0});
      for (std::size_t v = 0; v < a; ++v)
        for (int s = 0; s < 2; ++s) {
          auto c = rng.below(20);
          hist.add(v, s, c);
          counts[v][s] = static_cast<double>(c);
        }
      if (hist.total() == 0) continue;
      CHECK(std::abs(plugin_mi(hist) - entropy_mi(counts)) <= 1e-12);
      CHECK(plugin_mi(hist) <= std::log(2.0) + 1e-12);
    }
  }

  SUBCASE("merge adds counts") {
    JointHistogram a({0.0, 1.0}, {{1, 0}, {0, 1}});
    JointHistogram b({0.0, 1.0}, {{2, 1}, {1, 2}});
    a.merge(b);
    CHECK(a.total() == 8);
    CHECK(a.count(0, 0) == 3);
    JointHistogram c({0.0, 2.0});
    CHECK_THROWS(a.merge(c));
  }

  SUBCASE("miller-madow adds the bias term") {
    JointHistogram g({0.0, 1.0}, {{3, 1}, {1, 3}});
    // (2 - 1) + (2 - 1) - (4 - 1) = -1 over 2n
    CHECK(plugin_mi(g, MiCorrection::miller_madow) == doctest::Approx(0.13081203594113697 - 1.0 / 16.0));
  }
}

TEST_CASE("logdet_cov_gram") {
  Eigen::MatrixXd one(1, 2);
  one << 1.0, 1.0;
  CHECK(logdet_cov_gram(one, 1.0) == doctest::Approx(std::log(3.0)).epsilon(1e-14));

  RngStream rng(5);
  for (int t = 0; t < 50; ++t) {
    auto m = 1 + rng.below(12), d = 1 + rng.below(12);
    Eigen::MatrixXd a(m, d);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    double scale = 0.01 + rng.uniform();
    Eigen::MatrixXd dense = Eigen::MatrixXd::Identity(d, d) + scale * a.transpose() * a;
    double expect = std::log(dense.determinant());
    CHECK(std::abs(logdet_cov_gram(a, scale) - expect) <= 1e-8 * std::max(1.0, std::abs(expect)));
  }
  CHECK_THROWS_AS(logdet_cov_gram(Eigen::MatrixXd(0, 3), 1.0), NoObservations);
  CHECK_THROWS_AS(logdet_cov_gram(one, 0.0), std::domain_error);
}

TEST_CASE("min_c1 against its defining constraint") {
  CHECK(min_c1(0.5, ConstantVariant::hypothesis) == doctest::Approx(1.09253).epsilon(1e-4));
  CHECK(min_c1(0.3, ConstantVariant::loss) == doctest::Approx(1.87778).epsilon(1e-4));
  for (int i = 1; i < 40; ++i) {
    double ch = c2_upper(ConstantVariant::hypothesis) * i / 40.0;
    double cl = c2_upper(ConstantVariant::loss) * i / 40.0;
    CHECK(min_c1(ch, ConstantVariant::hypothesis) == doctest::Approx(c1_by_bisection(ch, 1.0)).epsilon(1e-9));
    CHECK(min_c1(cl, ConstantVariant::loss) == doctest::Approx(c1_by_bisection(cl, 2.0)).epsilon(1e-9));
  }
  CHECK_THROWS_AS(min_c1(0.0, ConstantVariant::loss), ConstraintViolated);
  CHECK_THROWS_AS(min_c1(0.4, ConstantVariant::loss), ConstraintViolated);
}

TEST_CASE("RngStream determinism") {
  RngStream a(42, {1, 2}), b(42, {1, 2}), c(42, {1, 3});
  auto x = a.next_u64();
  CHECK(x == b.next_u64());
  CHECK(x != c.next_u64());
  CHECK(RngStream(42).child(1).child(2).next_u64() == RngStream(42, {1, 2}).next_u64());

  auto pick = RngStream(9).sample_without_replacement(20, 7);
  CHECK(pick.size() == 7);
  CHECK(std::set<std::size_t>(pick.begin(), pick.end()).size() == 7);
  for (auto p : pick) CHECK(p < 20);
}

TEST_CASE("fnv1a64 reference") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("codec round trips") {
  std::vector<double> v{0.0, -1.5, 3.25e-300, 1e300};
  CHECK(codec::f64_from_base64(codec::f64_to_base64(v)) == v);
  CHECK(codec::base64_encode(std::vector<std::uint8_t>{'f', 'o', 'o', 'b'}) == "Zm9vYg==");
  std::vector<bool> bits{true, false, true, true, false, false, false, true, true};
  CHECK(codec::unpack_bits(codec::pack_bits(bits), bits.size()) == bits);
}

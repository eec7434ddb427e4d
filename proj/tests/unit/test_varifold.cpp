#include <doctest.h>

#include "arcflow/autodiff/gradcheck.hpp"
#include "arcflow/varifold/varifold.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

using namespace arcflow;
using vf::KernelConfig;
using vf::VarifoldSurface;

namespace {

VarifoldSurface random_surface(std::mt19937_64& rng, int n, double spread = 1.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  VarifoldSurface s;
  s.points.resize(3, n);
  s.normals.resize(3, n);
  s.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    s.points.col(i) = spread * Eigen::Vector3d(g(rng), g(rng), g(rng));
    s.normals.col(i) = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
    s.weights(i) = u(rng);
  }
  return s;
}

VarifoldSurface single(const Eigen::Vector3d& p, const Eigen::Vector3d& n, double w) {
  VarifoldSurface s;
  s.points = p;
  s.normals = n;
  s.weights = Eigen::VectorXd::Constant(1, w);
  return s;
}

// Points on a Fibonacci sphere with equal weights summing to the sphere area.
VarifoldSurface sphere_surface(int n, double radius, const Eigen::Vector3d& centre) {
  VarifoldSurface s;
  s.points.resize(3, n);
  s.normals.resize(3, n);
  s.weights = Eigen::VectorXd::Constant(n, 4.0 * M_PI * radius * radius / n);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / n;
    const double r = std::sqrt(1.0 - z * z);
    const Eigen::Vector3d d(r * std::cos(golden * i), r * std::sin(golden * i), z);
    s.normals.col(i) = d;
    s.points.col(i) = centre + radius * d;
  }
  return s;
}

double naive_product(const VarifoldSurface& x, const VarifoldSurface& y, const KernelConfig& k) {
  long double total = 0.0L;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    for (Eigen::Index j = 0; j < y.size(); ++j) {
      const double dx = (x.points.col(i) - y.points.col(j)).squaredNorm();
      const double dn = (x.normals.col(i) - y.normals.col(j)).squaredNorm();
      total += std::exp(-dx / (2 * k.ell_x * k.ell_x)) * std::exp(-dn / (2 * k.ell_n * k.ell_n)) *
               x.weights(i) * y.weights(j);
    }
  }
  return static_cast<double>(total);
}

}  // namespace

TEST_CASE("gaussian kernel values") {
  const Eigen::Vector3d u(0.1, 0.2, 0.3);
  CHECK(vf::gaussian_kernel(u, u, 0.7) == 1.0);
  const Eigen::Vector3d v = u + Eigen::Vector3d(0.7 * std::sqrt(2.0), 0, 0);
  CHECK(vf::gaussian_kernel(u, v, 0.7) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(vf::gaussian_kernel(u, u + Eigen::Vector3d(0, 0.5, 0), 0.5) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
}

TEST_CASE("inner product and distance examples") {
  const KernelConfig k{1.0, 1.0};
  const auto up = single(Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitZ(), 1.0);
  const auto down = single(Eigen::Vector3d::Zero(), -Eigen::Vector3d::UnitZ(), 1.0);
  CHECK(vf::inner_product(up, up, k) == 1.0);
  CHECK(vf::inner_product(up, down, k) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
  CHECK(vf::distance(up, up, k) == 0.0);
  CHECK(vf::distance(up, down, k) == doctest::Approx(2.0 - 2.0 * std::exp(-2.0)).epsilon(1e-14));
}

TEST_CASE("inner product matches a double loop") {
  std::mt19937_64 rng(1);
  const KernelConfig k{0.8, 0.6};
  const auto x = random_surface(rng, 3);
  const auto y = random_surface(rng, 2);
  CHECK(std::abs(vf::inner_product(x, y, k) - naive_product(x, y, k)) < 1e-12);
}

TEST_CASE("pairwise summation") {
  std::vector<double> v(1000, 0.1);
  CHECK(std::abs(vf::pairwise_sum(v) - 100.0) < 1e-12);
  CHECK(vf::pairwise_sum({}) == 0.0);
  std::vector<double> w{1e16, 1.0, -1e16, 1.0};
  CHECK(vf::pairwise_sum(w) == 1.0 + (1e16 + 1.0 - 1e16));
}

TEST_CASE("property: distance symmetry, permutation and rigid invariance") {
  std::mt19937_64 rng(2);
  const KernelConfig k{0.7, 0.5};
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_surface(rng, 5 + trial % 7);
    const auto y = random_surface(rng, 4 + trial % 5);
    const double dxy = vf::distance(x, y, k);
    CHECK(std::abs(dxy - vf::distance(y, x, k)) < 1e-12);
    CHECK(vf::distance(x, x, k) < 1e-12);
    CHECK(vf::inner_product(x, x, k) > 0.0);

    std::vector<int> perm(static_cast<std::size_t>(x.size()));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    CHECK(std::abs(vf::distance(vf::subset(x, perm), y, k) - dxy) < 1e-12);

    const Eigen::Matrix3d r =
        Eigen::Quaterniond(Eigen::Vector4d::Random().normalized()).toRotationMatrix();
    const Eigen::Vector3d t = Eigen::Vector3d::Random();
    auto move = [&](VarifoldSurface s) {
      s.points = (r * s.points).colwise() + t;
      s.normals = r * s.normals;
      return s;
    };
    CHECK(std::abs(vf::distance(move(x), move(y), k) - dxy) < 1e-10);
  }
}

TEST_CASE("distance gradient matches finite differences") {
  std::mt19937_64 rng(3);
  const KernelConfig k{0.9, 0.7};
  const auto x = random_surface(rng, 10, 0.5);
  const auto y = random_surface(rng, 10, 0.5);
  // Rows 0-2 points, rows 3-5 raw (unnormalised) normals.
  ad::Tensor point(6, 10);
  point.topRows(3) = x.points;
  point.bottomRows(3) = 1.3 * x.normals;
  const ad::Tensor base = x.weights.transpose();
  auto f = [&](ad::Tape&, const ad::Var& v) {
    return vf::varifold_distance(ad::slice(v, 0, 3), ad::slice(v, 3, 3), base, y, k);
  };
  const auto report = ad::check_gradient(f, point, 1e-4);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("leverage scores") {
  const KernelConfig k{0.5, 0.5};
  vf::CompressionConfig cfg;
  cfg.lambda = 1.0;
  const auto one = single(Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitX(), 1.0);
  CHECK(vf::rls_scores(one, k, cfg)(0) == doctest::Approx(0.5).epsilon(1e-14));

  VarifoldSurface two;
  two.points = Eigen::Matrix3Xd::Zero(3, 2);
  two.normals = Eigen::Matrix3Xd::Zero(3, 2);
  two.normals.row(2).setOnes();
  two.weights = Eigen::VectorXd::Ones(2);
  const Eigen::VectorXd s2 = vf::rls_scores(two, k, cfg);
  CHECK(s2(0) == s2(1));

  // Each batch against a dense eigen-decomposition of K (K + lambda I)^-1.
  std::mt19937_64 rng(4);
  const auto y = random_surface(rng, 30, 0.3);
  const Eigen::VectorXd s = vf::rls_scores(y, k, cfg);
  for (const auto& batch : vf::rls_batches(30, cfg.seed)) {
    const auto sub = vf::subset(y, batch);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(vf::kernel_matrix(sub, sub, k));
    const Eigen::ArrayXd d = es.eigenvalues().array();
    const Eigen::MatrixXd h =
        es.eigenvectors() * (d / (d + cfg.lambda)).matrix().asDiagonal() *
        es.eigenvectors().transpose();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      CHECK(std::abs(s(batch[i]) - h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i))) <
            1e-10);
      CHECK(s(batch[i]) > 0.0);
      CHECK(s(batch[i]) < 1.0);
    }
  }
}

TEST_CASE("batches partition the index set") {
  for (int n : {1, 2, 3, 5, 10, 17, 101}) {
    const auto batches = vf::rls_batches(n, 9);
    const int b = static_cast<int>(std::floor(std::sqrt(n)));
    CHECK(static_cast<int>(batches.size()) == n / b);
    std::vector<int> all;
    for (const auto& bt : batches) {
      CHECK(static_cast<int>(bt.size()) >= b);
      CHECK(static_cast<int>(bt.size()) <= b + 1 + (n - (n / b) * b) / (n / b));
      all.insert(all.end(), bt.begin(), bt.end());
    }
    std::sort(all.begin(), all.end());
    for (int i = 0; i < n; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
  }
}

TEST_CASE("score-weighted sampling") {
  const int n = 10;
  const int draws = 100000;
  const auto idx = vf::rls_sample(Eigen::VectorXd::Ones(n), draws, 5);
  std::vector<int> counts(n, 0);
  for (int i : idx) counts[static_cast<std::size_t>(i)]++;
  const double p = 1.0 / n;
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (int c : counts) CHECK(std::abs(c - draws * p) < 3 * sigma);

  Eigen::VectorXd spike = Eigen::VectorXd::Zero(6);
  spike(4) = 1.0;
  for (int i : vf::rls_sample(spike, 50, 6)) CHECK(i == 4);
  CHECK(vf::rls_sample(Eigen::VectorXd::Ones(7), 40, 8) ==
        vf::rls_sample(Eigen::VectorXd::Ones(7), 40, 8));
  CHECK_THROWS_AS(vf::rls_sample(Eigen::VectorXd::Zero(3), 2, 1), vf::VarifoldError);
}

TEST_CASE("compression weights") {
  vf::CompressionConfig cfg;
  SUBCASE("all points selected recovers the original weights") {
    std::mt19937_64 rng(7);
    const auto y = random_surface(rng, 12, 3.0);
    const KernelConfig k{0.3, 0.5};
    std::vector<int> all(12);
    std::iota(all.begin(), all.end(), 0);
    const Eigen::VectorXd beta = vf::compression_weights(y, all, k, cfg);
    CHECK((beta - y.weights).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("one control point out of two") {
    VarifoldSurface y;
    y.points.resize(3, 2);
    y.points << 0, 0.4, 0, 0.1, 0, -0.2;
    y.normals.resize(3, 2);
    y.normals.col(0) = Eigen::Vector3d::UnitZ();
    y.normals.col(1) = Eigen::Vector3d(0, 0.6, 0.8);
    y.weights = Eigen::Vector2d(0.7, 1.9);
    const KernelConfig k{0.5, 0.8};
    auto kk = [&](int a, int b) {
      return vf::gaussian_kernel(y.points.col(a), y.points.col(b), k.ell_x) *
             vf::gaussian_kernel(y.normals.col(a), y.normals.col(b), k.ell_n);
    };
    const double kcc = 1.0 + cfg.jitter;
    const double expect = (kk(1, 0) * 0.7 + kk(1, 1) * 1.9) / kcc;
    CHECK(vf::compression_weights(y, {1}, k, cfg)(0) == doctest::Approx(expect).epsilon(1e-14));
  }
  SUBCASE("empty selection") {
    std::mt19937_64 rng(8);
    CHECK_THROWS_AS(vf::compression_weights(random_surface(rng, 3), {}, {0.5, 0.5}, cfg),
                    vf::VarifoldError);
  }
}

TEST_CASE("compression of a sphere") {
  const KernelConfig k{0.25, 0.5};
  const auto y = sphere_surface(500, 0.5, Eigen::Vector3d::Zero());
  const auto x = sphere_surface(500, 0.45, Eigen::Vector3d(0.05, 0.0, 0.02));
  const double yy = vf::inner_product(y, y, k);
  const double full = vf::distance(x, y, k);
  vf::CompressionConfig cfg;
  cfg.m = 125;
  cfg.seed = 3;
  const auto c = vf::compress(y, k, cfg);
  CHECK(c.surface.size() <= 125);
  CHECK(std::abs(vf::distance(c.surface, y, k)) / yy < 1e-2);
  CHECK(std::abs(vf::distance(x, c.surface, k) - full) / yy < 1e-2);

  const auto again = vf::compress(y, k, cfg);
  CHECK(again.indices == c.indices);
  CHECK(again.surface.weights == c.surface.weights);

  cfg.m = 1;
  const auto one = single(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d::UnitY(), 0.25);
  const auto c1 = vf::compress(one, k, cfg);
  CHECK(c1.surface.points == one.points);
  CHECK(c1.surface.weights(0) == doctest::Approx(0.25).epsilon(1e-7));

  cfg.m = 501;
  CHECK_THROWS_AS(vf::compress(y, k, cfg), vf::VarifoldError);
}

TEST_CASE("compression error shrinks with the budget") {
  const KernelConfig k{0.1, 0.3};
  const auto y = sphere_surface(400, 0.5, Eigen::Vector3d::Zero());
  const auto x = sphere_surface(300, 0.47, Eigen::Vector3d(0.03, -0.02, 0.0));
  const double full = vf::inner_product(x, y, k);
  std::vector<double> medians;
  for (int m : {25, 50, 100, 200}) {
    std::vector<double> errs;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      vf::CompressionConfig cfg;
      cfg.m = m;
      cfg.seed = seed;
      const auto c = vf::compress(y, k, cfg);
      errs.push_back(std::abs(vf::inner_product(x, c.surface, k) - full) / std::abs(full));
    }
    std::nth_element(errs.begin(), errs.begin() + 5, errs.end());
    medians.push_back(errs[5]);
  }
  for (std::size_t i = 1; i < medians.size(); ++i) CHECK(medians[i] < medians[i - 1]);
}

TEST_CASE("compressed file round-trips exactly") {
  std::mt19937_64 rng(10);
  vf::CompressedFile f;
  f.surface = random_surface(rng, 7);
  f.surface.weights(3) = -0.125 / 3.0;
  f.kernel = {0.1, 0.3};
  f.lambda = 1.0;
  f.seed = 1234567890123ULL;
  std::stringstream ss;
  vf::write_compressed(ss, f);
  const auto g = vf::read_compressed(ss);
  CHECK(g.surface.points == f.surface.points);
  CHECK(g.surface.normals == f.surface.normals);
  CHECK(g.surface.weights == f.surface.weights);
  CHECK(g.kernel.ell_x == 0.1);
  CHECK(g.kernel.ell_n == 0.3);
  CHECK(g.seed == f.seed);

  std::stringstream bad("arcflow_varifold 1\ncount 2\nell_x 0.1\nell_n 0.3\nlambda 1\nseed 0\n1 2 3\n");
  CHECK_THROWS_AS(vf::read_compressed(bad), vf::VarifoldError);
}

TEST_CASE("surface validation") {
  std::mt19937_64 rng(11);
  auto s = random_surface(rng, 4);
  CHECK_NOTHROW(s.validate());
  s.weights(2) = -1.0;
  CHECK_THROWS_AS(s.validate(), vf::VarifoldError);
  CHECK_NOTHROW(s.validate(false));
  s.normals(0, 1) += 0.1;
  CHECK_THROWS_AS(s.validate(false), vf::VarifoldError);
}

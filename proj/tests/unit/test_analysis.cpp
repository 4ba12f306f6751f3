#include <gtest/gtest.h>

#include <cmath>

#include "koopkit/analysis.hpp"

using namespace koopkit;
using namespace koopkit::analysis;

namespace {

StateVector vec2(double a, double b) { return StateVector{{a, b}}; }

// Barrier of x^4 - x^2 + x/4 between its two minima: the root of
// 4x^3 - 2x + 1/4 in [0, 0.5], by bisection.
double quartic_saddle() {
  double lo = 0.0, hi = 0.5;
  auto d = [](double x) { return 4 * x * x * x - 2 * x + 0.25; };
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (d(lo) * d(mid) <= 0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(Decomposition, NearOneSelection) {
  ComplexVector v(4);
  v << Complex(1.0, 0.0), Complex(0.99, 0.005), Complex(0.9, 0.0), Complex(-1.0, 0.0);
  EXPECT_EQ(eigenvalues_near_one(v, 0.02), (std::vector<Eigen::Index>{0, 1}));
  EXPECT_EQ(eigenvalues_near_one(v, 0.2), (std::vector<Eigen::Index>{0, 1, 2}));
}

TEST(Decomposition, NoEigenvalueNearOneIsAnError) {
  systems::LinearMap m(RealMatrix::Constant(1, 1, 0.5));
  const auto pairs = systems::sample_pairs(m, systems::UniformBox{StateVector::Constant(1, -1),
                                                                  StateVector::Constant(1, 1)},
                                           50, 0, 1);
  const auto model = edmd::fit(pairs, dictionary::Dictionary::thin_plate(PointSet(0, 1), 1e-3, true, false, 1),
                               edmd::FitMode::Standard);
  EXPECT_THROW(ergodic_decomposition(model, pairs.x, 0.02, 1, 1), AnalysisError);
}

TEST(Decomposition, SingleBasinGivesOneCluster) {
  systems::GradientDescent gd(std::make_shared<systems::QuadraticPotential>(RealMatrix::Identity(2, 2)), 0.1);
  const auto pairs = systems::sample_pairs(gd, systems::UniformBox{vec2(-1, -1), vec2(1, 1)}, 500, 0, 2);
  const auto dict = dictionary::build_dictionary(pairs.x, 30, 1e-3, 3, true, true);
  const auto model = edmd::fit(pairs, dict, edmd::FitMode::Standard);
  const auto dec = ergodic_decomposition(model, pairs.x, 0.02, 1, 4);
  EXPECT_FALSE(dec.selected.empty());
  for (int l : dec.labels) EXPECT_EQ(l, 0);
}

TEST(Decomposition, QuarticBasinsSplitAtSaddle) {
  auto f = std::make_shared<systems::Quartic>();
  systems::GradientDescent gd(f, 0.05);
  const auto pairs = systems::sample_pairs(gd, systems::UniformBox{vec2(-1.5, -1), vec2(1.5, 1)}, 2000, 0, 5);
  const auto dict = dictionary::build_dictionary(pairs.x, 100, 1e-3, 6, true, true);
  const auto model = edmd::fit(pairs, dict, edmd::FitMode::Standard);
  const double saddle = quartic_saddle();
  ASSERT_NEAR(4 * std::pow(saddle, 3) - 2 * saddle + 0.25, 0.0, 1e-12);
  const auto dec = ergodic_decomposition(model, pairs.x, 0.05, 2, 7);
  // Label the two sides by majority and count points away from the saddle
  // that land on the matching side.
  int counts[2][2] = {{0, 0}, {0, 0}};
  for (Eigen::Index i = 0; i < pairs.x.rows(); ++i) {
    if (std::abs(pairs.x(i, 0) - saddle) < 0.3) continue;
    ++counts[pairs.x(i, 0) > saddle][dec.labels[static_cast<std::size_t>(i)]];
  }
  const int agree = std::max(counts[0][0] + counts[1][1], counts[0][1] + counts[1][0]);
  const int total = counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
  EXPECT_GT(static_cast<double>(agree) / total, 0.9);
}

TEST(Decomposition, DeterministicForFixedSeed) {
  systems::GradientDescent gd(std::make_shared<systems::Quartic>(), 0.05);
  const auto pairs = systems::sample_pairs(gd, systems::UniformBox{vec2(-1.5, -1), vec2(1.5, 1)}, 600, 0, 8);
  const auto model = edmd::fit(pairs, dictionary::build_dictionary(pairs.x, 40, 1e-3, 1, true, true),
                               edmd::FitMode::Standard);
  const auto a = ergodic_decomposition(model, pairs.x, 0.05, 2, 9, 3);
  const auto b = ergodic_decomposition(model, pairs.x, 0.05, 2, 9, 3);
  EXPECT_EQ(a.labels, b.labels);
  const auto more = ergodic_decomposition(model, pairs.x, 0.05, 2, 9, 8);
  EXPECT_LE(more.objective, a.objective + 1e-12);
}

TEST(WindowScan, RecordsFailuresAndContinues) {
  RealMatrix M(2, 2);
  M << 0.9, 0.0, 0.0, 0.5;
  systems::LinearMap map(M, 0.1);
  dictionary::DictionaryConfig cfg;
  cfg.n_rbf = 10;
  cfg.seed = 3;
  std::vector<Window> windows = {{vec2(-1, -1), vec2(1, 1)}, {vec2(0.5, 0.5), vec2(0.5, 0.5)},
                                 {vec2(0, 0), vec2(2, 1)}};
  const auto scan = window_spectrum_scan(map, windows, cfg, 200, 4);
  ASSERT_EQ(scan.windows.size(), 3u);
  EXPECT_TRUE(scan.windows[0].ok);
  EXPECT_NEAR(scan.windows[0].max_re_lambda, 1.0, 1e-8);
  EXPECT_EQ(scan.windows[0].pairs, 200u);
  // A degenerate window has a single distinct point: too few for 10 centers.
  EXPECT_FALSE(scan.windows[1].ok);
  EXPECT_FALSE(scan.windows[1].error.empty());
  EXPECT_TRUE(std::isnan(scan.windows[1].max_re_lambda));
  EXPECT_TRUE(scan.windows[2].ok);
  const auto dir = std::filesystem::temp_directory_path() / "koopkit_scan";
  write_window_scan_csv(dir / "scan.csv", scan);
  const auto t = io::read_csv(dir / "scan.csv");
  EXPECT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.header.back(), "ok");
}

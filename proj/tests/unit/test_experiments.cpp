#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "koopkit/experiments.hpp"

using namespace koopkit;
using namespace koopkit::experiments;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Config, EveryExperimentHasValidDefaults) {
  for (const auto& name : experiment_names()) {
    const auto cfg = make_config(name);
    EXPECT_NO_THROW(validate(cfg)) << name;
    const auto back = config_from_json(cfg.to_json());
    EXPECT_EQ(back.params, cfg.params) << name;
  }
  EXPECT_THROW(make_config("lorenz"), ConfigError);
}

TEST(Config, UnknownKeysAreRejected) {
  auto j = make_config("himmelblau").to_json();
  j["colour"] = "red";
  EXPECT_THROW(config_from_json(j), ConfigError);
  auto k = make_config("himmelblau").to_json();
  k["params"]["n_rbfs"] = 10;
  EXPECT_THROW(config_from_json(k), ConfigError);
}

TEST(Config, SchemaVersionIsChecked) {
  auto j = make_config("newton-eigen").to_json();
  j["schema_version"] = 2;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j.erase("schema_version");
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, TypeMismatchIsRejected) {
  auto cfg = make_config("himmelblau");
  EXPECT_THROW(set_param(cfg, "n_rbf", "many"), ConfigError);
  EXPECT_THROW(set_param(cfg, "n_rbf", 2.5), ConfigError);
  EXPECT_NO_THROW(set_param(cfg, "step_size", 1));
  EXPECT_THROW(set_param(cfg, "nope", 1), ConfigError);
}

TEST(Config, TooManyCentersIsAConfigError) {
  auto cfg = make_config("himmelblau");
  set_param(cfg, "n_pairs", 100);
  set_param(cfg, "n_rbf", 101);
  EXPECT_THROW(validate(cfg), ConfigError);
  set_param(cfg, "n_rbf", 95);  // fits the sample count but not the 90 training pairs
  EXPECT_THROW(validate(cfg), ConfigError);
  set_param(cfg, "n_rbf", 90);
  EXPECT_NO_THROW(validate(cfg));
}

TEST(Config, BadRangesAndFitModes) {
  auto cfg = make_config("nesterov-generator");
  set_param(cfg, "t_range", io::Json{-1.0, 1.0});
  EXPECT_THROW(validate(cfg), ConfigError);
  auto j = make_config("euler-spectrum").to_json();
  j["fit_mode"] = "quantum";
  EXPECT_THROW(config_from_json(j), ConfigError);
  j["fit_mode"] = "paper";
  EXPECT_EQ(config_from_json(j).fit_mode, edmd::FitMode::PaperLiteral);
}

TEST(LabelAgreement, PermutationInvariant) {
  const std::vector<int> truth{0, 0, 1, 1, 2, 2};
  EXPECT_DOUBLE_EQ(label_agreement({2, 2, 0, 0, 1, 1}, truth, 3), 1.0);
  EXPECT_DOUBLE_EQ(label_agreement({2, 2, 0, 0, 1, 0}, truth, 3), 5.0 / 6.0);
  EXPECT_THROW(label_agreement({0}, truth, 3), InvalidInput);
}

TEST(Pipeline, EulerSpectrumClassifiesStability) {
  const auto out = run_euler_spectrum(make_config("euler-spectrum"));
  EXPECT_TRUE(out.passed());
  ASSERT_FALSE(out.checks.empty());
}

TEST(Pipeline, ArtifactsAreReproducibleAndListedInManifest) {
  auto cfg = make_config("newton-eigen");
  set_param(cfg, "histogram_length", 20000);
  const fs::path a = fs::temp_directory_path() / "koopkit_exp_a";
  const fs::path b = fs::temp_directory_path() / "koopkit_exp_b";
  fs::remove_all(a);
  fs::remove_all(b);
  const auto ra = run_experiment(cfg, a);
  const auto rb = run_experiment(cfg, b);
  ASSERT_EQ(ra.files, rb.files);
  for (const auto& f : ra.files) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  const auto manifest = io::read_json(a / "manifest.json");
  EXPECT_EQ(manifest.at("files").size(), ra.files.size());
  EXPECT_TRUE(io::Manifest::verify(a, manifest).empty());
  EXPECT_EQ(manifest.at("seeds").at("master"), 1);
  EXPECT_TRUE(manifest.at("timings").contains("wall_seconds"));
  EXPECT_EQ(manifest.at("fit_mode"), "standard");
}

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dryobs/pipeline/config.hpp"

namespace dryobs::pipeline {
namespace {

std::string message_of(const std::string& yaml, const std::string& preset = "paper-5") {
  try {
    load_config_text(yaml, "user.yaml", preset);
  } catch (const ConfigurationError& e) {
    return e.what();
  }
  return "";
}

TEST(Config, ShippedPresetFileMatchesEmbeddedText) {
  std::ifstream in(std::string(DRYOBS_SOURCE_DIR) + "/presets/paper-5.yaml");
  ASSERT_TRUE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), std::string(kPaper5Preset));
}

TEST(Config, PresetLoadsWithExpectedValues) {
  const PipelineConfig c = load_config("paper-5");
  EXPECT_EQ(c.grid.nx * c.grid.ny * c.grid.nz, 1000);
  EXPECT_EQ(c.pod.n_x, 5);
  EXPECT_EQ(c.gramian.m_f, 1'000'000);
  EXPECT_EQ(c.ekf.scenarios.size(), 3u);
  EXPECT_EQ(make_mask(c, make_grid(c)).size(), 51);
}

TEST(Config, UserValuesOverridePresetAndRecordTheirLine) {
  const PipelineConfig c = load_config_text("pod:\n  n_x: 7\n\nekf:\n  R: 2.5\n", "user.yaml", "paper-5");
  EXPECT_EQ(c.pod.n_x, 7);
  EXPECT_EQ(c.pod.n_T, 5);
  EXPECT_DOUBLE_EQ(c.ekf.R, 2.5);
  EXPECT_EQ(c.where("pod.n_x"), "user.yaml:2");
  EXPECT_EQ(c.where("ekf.R"), "user.yaml:5");
  EXPECT_EQ(c.where("pod.n_T").rfind("preset:paper-5:", 0), 0u);
}

TEST(Config, PresetKeyInsideFileIsHonoured) {
  EXPECT_EQ(load_config_text("preset: paper-5\npod: {n_T: 3}\n").pod.n_T, 3);
  EXPECT_NE(message_of("preset: paper-6\n", "").find("unknown preset"), std::string::npos);
  EXPECT_NE(message_of("preset: other\n").find("conflicts"), std::string::npos);
}

TEST(Config, UnknownKeysAreRejectedWithLocation) {
  const std::string m = message_of("pod:\n  n_x: 5\n  nx: 4\n");
  EXPECT_NE(m.find("user.yaml:3"), std::string::npos) << m;
  EXPECT_NE(m.find("pod.nx"), std::string::npos) << m;
  EXPECT_NE(m.find("unknown key"), std::string::npos) << m;
  EXPECT_NE(message_of("colour: red\n").find("unknown key"), std::string::npos);
}

TEST(Config, TypeErrorsNameKeyAndLine) {
  std::string m = message_of("grid:\n  nx: ten\n");
  EXPECT_NE(m.find("user.yaml:2: grid.nx"), std::string::npos) << m;
  m = message_of("pod:\n  n_x: 2.5\n");
  EXPECT_NE(m.find("expected an integer"), std::string::npos) << m;
  m = message_of("gramian:\n  magnitudes: 1.0\n");
  EXPECT_NE(m.find("expected a list"), std::string::npos) << m;
  m = message_of("grid: [1, 2]\n");
  EXPECT_NE(m.find("expected a mapping"), std::string::npos) << m;
}

TEST(Config, SyntaxErrorReportsLine) {
  const std::string m = message_of("pod:\n  n_x: [1, 2\n");
  EXPECT_NE(m.find("user.yaml:"), std::string::npos) << m;
}

TEST(Config, SemanticErrorsPointAtOffendingSetting) {
  std::string m = message_of("\nsimulation:\n  safety: 1.5\n");
  EXPECT_NE(m.find("user.yaml:3: simulation.safety"), std::string::npos) << m;
  m = message_of("gramian:\n  magnitudes: [1.0e-6, 1.0e-6]\n");
  EXPECT_NE(m.find("distinct"), std::string::npos) << m;
  m = message_of("gramian:\n  orders: [5]\n");
  EXPECT_NE(m.find("gramian.orders"), std::string::npos) << m;
  m = message_of("ekf:\n  R: 0\n");
  EXPECT_NE(m.find("ekf.R"), std::string::npos) << m;
  EXPECT_NE(message_of("simulation: {t_end: 10, snapshots: 1}\n").find("at least 2"), std::string::npos);
}

TEST(Config, InvalidMasksAreConfigurationErrors) {
  EXPECT_THROW(load_config_text("mask: {nu: 25}\n", "user.yaml", "paper-5"), ConfigurationError);
  EXPECT_THROW(load_config_text("mask: {type: cells, cells: [455]}\n", "user.yaml", "paper-5"),
               ConfigurationError);
  EXPECT_THROW(load_config_text("mask: {type: single, cell: -3}\n", "user.yaml", "paper-5"), ConfigurationError);
  EXPECT_THROW(load_config_text("mask: {face: w+}\n", "user.yaml", "paper-5"), ConfigurationError);
}

TEST(Config, ZeroHorizonAllowsSingleSnapshot) {
  const PipelineConfig c = load_config_text("simulation: {t_end: 0, snapshots: 1}\n", "user.yaml", "paper-5");
  EXPECT_EQ(c.simulation.snapshots, 1);
}

TEST(Config, CanonicalTextRoundTripsToIdenticalHash) {
  const PipelineConfig a = load_config_text("pod: {n_x: 4}\nekf: {Q: 0.25}\n", "user.yaml", "paper-5");
  const PipelineConfig b = load_config_text(to_yaml(a), "resolved.yaml");
  EXPECT_EQ(to_yaml(a), to_yaml(b));
  EXPECT_EQ(section_hash(a, {"grid", "pod", "ekf"}), section_hash(b, {"grid", "pod", "ekf"}));
}

TEST(Config, SectionHashesChangeOnlyWithTheirSection) {
  const PipelineConfig a = load_config("paper-5");
  const PipelineConfig b = load_config_text("ekf: {R: 3.0}\n", "user.yaml", "paper-5");
  EXPECT_EQ(section_hash(a, {"grid", "simulation", "pod"}), section_hash(b, {"grid", "simulation", "pod"}));
  EXPECT_NE(section_hash(a, {"ekf"}), section_hash(b, {"ekf"}));
  EXPECT_EQ(section_hash(a, {"grid"}).size(), 64u);
}

TEST(Config, MissingFileIsConfigurationError) {
  EXPECT_THROW(load_config("", "/nonexistent/dryobs.yaml"), ConfigurationError);
}

}  // namespace
}  // namespace dryobs::pipeline

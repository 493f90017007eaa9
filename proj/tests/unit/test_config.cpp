#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "wcontract/config.hpp"

using namespace wcontract;

namespace {

const char* kMinimal = R"(
# U1 sweep
[model]
kind = overdamped1d
potential = U1   ; inline comment
theta = 0.5

[operation]
name = fk-sweep
ps = 1, 2, 3

[numeric]
seed = 18446744073709551615
)";

int error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST(Config, ParsesAndFillsDefaults) {
  auto c = parse_config(kMinimal);
  EXPECT_EQ(c.operation(), "fk-sweep");
  EXPECT_EQ(c.text("model", "potential"), "U1");
  EXPECT_DOUBLE_EQ(c.real("model", "theta"), 0.5);
  EXPECT_EQ(c.seed(), 18446744073709551615ull);
  EXPECT_EQ(c.list("operation", "ps"), (std::vector<double>{1, 2, 3}));
  for (const auto& k : config_schema())
    EXPECT_TRUE(c.sections().at(k.section).count(k.key)) << k.section << "." << k.key;
}

TEST(Config, SerializeRoundTrip) {
  auto c = parse_config(kMinimal);
  auto back = parse_config(c.serialize());
  EXPECT_TRUE(c == back);
  EXPECT_EQ(c.serialize(), back.serialize());
}

TEST(Config, RealsKeepFullPrecision) {
  auto c = parse_config(std::string(kMinimal) + "[coupling]\ntheta = 0.1\n");
  auto back = parse_config(c.serialize());
  EXPECT_EQ(back.real("coupling", "theta"), 0.1);
}

TEST(Config, ErrorsCarryLineNumbers) {
  EXPECT_EQ(error_line("[numeric]\nseed = 1\n[model]\nthetaa = 2\n"), 4);
  EXPECT_EQ(error_line("[numeric]\nseed = 1\nseed = 2\n"), 3);
  EXPECT_EQ(error_line("[numeric]\nseed = 1\n[nosuch]\n"), 3);
  EXPECT_EQ(error_line("[numeric]\nseed = -4\n"), 2);
  EXPECT_EQ(error_line("[numeric]\nseed = 1\ndt = fast\n"), 3);
  EXPECT_EQ(error_line("seed = 1\n"), 1);
  EXPECT_EQ(error_line("[numeric\n"), 1);
  EXPECT_EQ(error_line("[numeric]\nseed = 1\n[operation]\nname = fk-eig\n[model]\nkind = cubic\n"), 6);
  try {
    parse_config("[numeric]\nseed = 1\n[model]\nthetaa = 2\n");
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "model.thetaa");
    EXPECT_NE(std::string(e.what()).find("line 4"), std::string::npos);
  }
}

TEST(Config, SeedAndOperationRequired) {
  try {
    parse_config("[operation]\nname = fk-eig\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "numeric.seed");
  }
  EXPECT_THROW(parse_config("[numeric]\nseed = 1\n"), ConfigError);
}

TEST(Config, OverridesAndFallbacks) {
  auto c = parse_config(kMinimal, {{"numeric.seed", "7"}}, {{"output.dir", "x"}, {"model.theta", "3"}});
  EXPECT_EQ(c.seed(), 7u);
  EXPECT_EQ(c.text("output", "dir"), "x");
  EXPECT_DOUBLE_EQ(c.real("model", "theta"), 0.5);
  EXPECT_THROW(parse_config(kMinimal, {{"numeric.nope", "1"}}), ConfigError);
}

TEST(Config, MatricesParamsAndQuotes) {
  auto c = parse_config(std::string(kMinimal) +
                        "[coupling]\nQ = 2, 0.5; 0.5, 1\n"
                        "[output]\ndir = \"out dir # not a comment\"\n");
  Mat Q = c.matrix("coupling", "Q");
  ASSERT_EQ(Q.rows(), 2);
  EXPECT_DOUBLE_EQ(Q(0, 1), 0.5);
  EXPECT_EQ(c.text("output", "dir"), "out dir # not a comment");
  EXPECT_THROW(parse_config(std::string(kMinimal) + "[coupling]\nQ = 1, 2; 3\n"), ConfigError);

  auto p = parse_config(std::string(kMinimal).replace(std::string(kMinimal).find("potential = U1"), 14,
                                                      "params = a=0.25, b=1"));
  auto pm = p.params();
  EXPECT_DOUBLE_EQ(pm.at("a"), 0.25);
  EXPECT_DOUBLE_EQ(pm.at("b"), 1);
}

TEST(Config, ChoicesValidated) {
  std::string base = "[numeric]\nseed = 1\n[operation]\nname = fk-eig\n";
  EXPECT_THROW(parse_config(base + "[output]\nformats = csv,pdf\n"), ConfigError);
  EXPECT_NO_THROW(parse_config(base + "[output]\nformats = json\n"));
  EXPECT_THROW(parse_config("[numeric]\nseed = 1\nmethod = qr\n[operation]\nname = fk-eig\n"),
               ConfigError);
  EXPECT_THROW(parse_config("[numeric]\nseed = 1\n[operation]\nname = nothing\n"), ConfigError);
}

TEST(Config, SetCanonicalizes) {
  auto c = parse_config(kMinimal);
  c.set("model", "theta", "2.50");
  EXPECT_EQ(c.sections().at("model").at("theta"), format_real(2.5));
  EXPECT_THROW(c.set("model", "theta", "abc"), ConfigError);
  EXPECT_THROW(c.set("model", "nope", "1"), ConfigError);
}

TEST(Config, FormatReal) {
  EXPECT_EQ(format_real(0.1), "0.10000000000000001");
  EXPECT_EQ(format_real(2), "2");
  EXPECT_EQ(std::stod(format_real(M_PI)), M_PI);
}

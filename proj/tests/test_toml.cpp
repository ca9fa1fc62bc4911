#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "physr/toml.hpp"
#include "test_util.hpp"

using physr::ErrorCode;
namespace toml = physr::toml;

TEST(Toml, ScalarsAndTables) {
  const auto j = toml::parse(R"(# run config
seed = 42
log_level = "info"

[grpo]
iterations = 3
learning_rate = 4e-6
kl_coefficient = 0.005
shuffle = false
data = 'C:\pool\rl.jsonl'   # literal string keeps backslashes
)");
  EXPECT_EQ(j.at("seed"), 42);
  EXPECT_TRUE(j.at("seed").is_number_integer());
  EXPECT_EQ(j.at("log_level"), "info");
  EXPECT_EQ(j.at("grpo").at("iterations"), 3);
  EXPECT_DOUBLE_EQ(j.at("grpo").at("learning_rate").get<double>(), 4e-6);
  EXPECT_EQ(j.at("grpo").at("shuffle"), false);
  EXPECT_EQ(j.at("grpo").at("data"), "C:\\pool\\rl.jsonl");
}

TEST(Toml, DottedAndQuotedKeys) {
  const auto j = toml::parse(R"([endpoint.retry]
base = 1
a.b = "x"
"odd key" = 2
)");
  EXPECT_EQ(j.at("endpoint").at("retry").at("base"), 1);
  EXPECT_EQ(j.at("endpoint").at("retry").at("a").at("b"), "x");
  EXPECT_EQ(j.at("endpoint").at("retry").at("odd key"), 2);
}

TEST(Toml, ArraysEscapesAndUnderscores) {
  const auto j = toml::parse(R"(xs = [1, 2, 3,]
names = ["a", "b\tc"]
empty = []
big = 1_000_000
neg = -2.5
)");
  EXPECT_EQ(j.at("xs"), nlohmann::json::array({1, 2, 3}));
  EXPECT_EQ(j.at("names")[1], "b\tc");
  EXPECT_TRUE(j.at("empty").empty());
  EXPECT_EQ(j.at("big"), 1000000);
  EXPECT_DOUBLE_EQ(j.at("neg").get<double>(), -2.5);
}

TEST(Toml, ErrorsCarryLineNumbers) {
  const auto line_of = [](const char* doc) {
    try {
      toml::parse(doc);
    } catch (const physr::ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  EXPECT_EQ(line_of("a = 1\na = 2\n"), 2u);
  EXPECT_EQ(line_of("a = 1\n\nb = \"open\n"), 3u);
  EXPECT_EQ(line_of("a = 1 2\n"), 1u);
  EXPECT_EQ(line_of("[t]\nx = \n"), 2u);
  EXPECT_EQ(line_of("a = 1\n[a]\n"), 2u);
  EXPECT_EQ(line_of("x = nope\n"), 1u);
  EXPECT_EQ(line_of("= 3\n"), 1u);
  EXPECT_EQ(line_of("s = \"\\q\"\n"), 1u);
}

TEST(Toml, ParseFile) {
  const auto path = std::filesystem::temp_directory_path() / "physr_toml_test.toml";
  {
    std::ofstream f(path);
    f << "[eval]\nruns = 5\n";
  }
  EXPECT_EQ(toml::parse_file(path.string()).at("eval").at("runs"), 5);
  std::filesystem::remove(path);
  EXPECT_EQ(code_of([&] { toml::parse_file(path.string()); }), ErrorCode::Io);
}

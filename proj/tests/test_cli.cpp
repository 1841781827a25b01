#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tlvc/cli.hpp"

namespace tlvc {
namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "tlvc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string sample(const std::string& name) { return std::string(TLVC_SAMPLES_DIR) + "/" + name; }

std::string scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("tlvc_cli_" + name);
  std::filesystem::remove_all(dir);
  return dir.string();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(Cli, ParsePrintsAst) {
  CliRun r = run({"parse", "--expr", "F a & G b"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("\"finally\""), std::string::npos) << r.out;
}

TEST(Cli, ParseNormalForm) {
  CliRun r = run({"parse", sample("reach_two.ltl"), "--normalize"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("normal form: ", 0), 0u);
}

TEST(Cli, ParseErrorIsDiagnostic) {
  CliRun r = run({"parse", "--expr", "F ("});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("<expr>:1:4: error"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find('^'), std::string::npos);
}

TEST(Cli, FragmentErrorExitsOne) {
  CliRun r = run({"parse", "--expr", "!F a", "--normalize"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("fragment"), std::string::npos) << r.err;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"parse"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, CompileCountsAndFiles) {
  std::string out = scratch("compile");
  CliRun r = run({"compile", "--expr", "G(F a & F b)", "--out", out, "--dot"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("nodes: 2\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("loop sccs: 1 (sizes 2)"), std::string::npos) << r.out;
  EXPECT_NO_THROW(from_json(slurp(std::filesystem::path(out) / "dvg.json")));
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(out) / "dvg.dot"));
}

TEST(Cli, MissingEnvFails) {
  CliRun r = run({"solve", "--expr", "F a", "--env", "/nonexistent/x.grid"});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(run({"solve", "--expr", "F a"}).code, 1);
}

TEST(Cli, UnknownAtomFails) {
  CliRun r = run({"solve", "--expr", "F nowhere", "--env", sample("rooms.grid"), "--out", scratch("unknown")});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, SolveIsDeterministic) {
  std::string a = scratch("solve_a"), b = scratch("solve_b");
  CliRun ra = run({"solve", sample("patrol.ltl"), "--env", sample("rooms.grid"), "--out", a});
  CliRun rb = run({"solve", sample("patrol.ltl"), "--env", sample("rooms.grid"), "--out", b, "--jobs", "3"});
  ASSERT_EQ(ra.code, 0) << ra.err;
  ASSERT_EQ(rb.code, 0) << rb.err;
  for (const char* f : {"values.csv", "values.bin", "heatmap_root.csv"})
    EXPECT_EQ(slurp(std::filesystem::path(a) / f), slurp(std::filesystem::path(b) / f)) << f;
  auto tables = from_blob(slurp(std::filesystem::path(a) / "values.bin"));
  EXPECT_FALSE(tables.empty());
}

TEST(Cli, RolloutReportsRobustness) {
  std::string out = scratch("rollout");
  CliRun r = run({"rollout", sample("reach_two.ltl"), "--env", sample("rooms.grid"), "--x0", "2,0", "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("satisfied: true"), std::string::npos) << r.out;
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(out) / "rollout.csv"));
  CliRun canoe = run({"rollout", sample("canoe.ltl"), "--env", sample("canoe.grid"), "--x0", "0,1", "--out", out});
  EXPECT_EQ(canoe.code, 0) << canoe.err;
  EXPECT_NE(canoe.out.find("satisfied: false"), std::string::npos) << canoe.out;
  EXPECT_EQ(run({"rollout", sample("reach_two.ltl"), "--env", sample("rooms.grid"), "--x0", "0,3"}).code, 1);
  EXPECT_EQ(run({"rollout", sample("reach_two.ltl"), "--env", sample("rooms.grid"), "--x0", "nope"}).code, 1);
}

TEST(Cli, VerifyPassesAndIsStable) {
  std::vector<std::string> args{"verify", sample("patrol.ltl"), "--env", sample("rooms.grid"), "--samples", "200",
                                "--contraction", "--permute-loops"};
  CliRun a = run(args), b = run(args);
  EXPECT_EQ(a.code, 0) << a.out << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("result: PASS"), std::string::npos);
  EXPECT_NE(a.out.find("permute-loops: 2 orderings"), std::string::npos) << a.out;
}

TEST(Cli, BadGammaSchedule) {
  CliRun r = run({"solve", "--expr", "F a", "--env", sample("rooms.grid"), "--gamma", "0.99,0.9"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("ascending"), std::string::npos) << r.err;
}

}  // namespace
}  // namespace tlvc

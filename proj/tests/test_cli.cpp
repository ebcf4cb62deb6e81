#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "miold/cli/app.hpp"
#include "miold/errors.hpp"
#include "support.hpp"

namespace {

using namespace miold;
namespace fs = std::filesystem;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "miold");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string corpus(const std::string& name) { return test::corpus_file(name).string(); }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("miold_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool contains(const std::string& text, const std::string& what) { return text.find(what) != std::string::npos; }

TEST(Cli, AnalyzeSolvable) {
  const auto r = run({"analyze", "--system", corpus("iwp.toml"), "--output-set", "combined"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(contains(r.out, "relative half-degree nu = (2)"));
  EXPECT_TRUE(contains(r.out, "MIOLD solvable at the point: yes"));
}

TEST(Cli, AnalyzeReportsViolatedCondition) {
  const auto r = run({"analyze", "--system", corpus("iwp.toml"), "--output-set", "reshaped"});
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(contains(r.out, "MR2 violated"));

  const auto s = run({"synthesize", "--system", corpus("example1.toml"), "--regime", "rho24"});
  EXPECT_EQ(s.code, 1);
  EXPECT_TRUE(contains(s.out + s.err, "MR2 violated"));
}

TEST(Cli, CandidateOutputs) {
  const auto flat = run({"analyze", "--system", corpus("tora3.toml"), "--candidates",
                         "(m1/(m2 + m3))*x1 + x2 + (m3*l3/(m2 + m3))*sin(x3)"});
  EXPECT_EQ(flat.code, 0);
  EXPECT_TRUE(contains(flat.out, "MF-linearizable: yes"));
  const auto cart = run({"analyze", "--system", corpus("tora3.toml"), "--candidates", "x1"});
  EXPECT_EQ(cart.code, 1);
  EXPECT_TRUE(contains(cart.out, "MF-linearizable: no"));
}

TEST(Cli, InputErrors) {
  EXPECT_EQ(run({"analyze", "--system", "no_such_file.toml"}).code, 2);
  EXPECT_EQ(run({"analyze"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"analyze", "--system", corpus("iwp.toml"), "--point", "x=1"}).code, 2);
  EXPECT_EQ(run({"analyze", "--system", corpus("iwp.toml"), "--outputs", "x1 +"}).code, 2);
  EXPECT_EQ(run({"analyze", "--system", corpus("iwp.toml"), "--output-set", "nope"}).code, 2);
  EXPECT_EQ(run({"simulate", "--system", corpus("iwp.toml"), "--inputs", "bogus"}).code, 2);
  EXPECT_EQ(run({"simulate", "--system", corpus("iwp.toml"), "--dt", "-1"}).code, 2);

  const auto dir = scratch("bad");
  std::ofstream(dir / "bad.toml") << "n = 2\nvars = [\"x1\"]\n";
  const auto r = run({"analyze", "--system", (dir / "bad.toml").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, SynthesizeAfterPrefeedback) {
  const auto r = run({"synthesize", "--system", corpus("double_pendulum_base.toml"), "--output-set", "transformed"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(contains(r.out, "feedback loop of output set 'joints'"));
  EXPECT_TRUE(contains(r.out, "chains (4, 2)"));
}

TEST(Cli, ControllerCard) {
  const auto r = run({"synthesize", "--system", corpus("iwp.toml"), "--output-set", "combined", "--card"});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(contains(r.out, "# controller card"));
  EXPECT_TRUE(contains(r.out, "[feedback]\nu1 = "));
}

TEST(Cli, CertifyAndNegativeControl) {
  const auto pass = run({"certify", "--system", corpus("double_pendulum_base.toml"), "--output-set", "joints"});
  EXPECT_EQ(pass.code, 0) << pass.out;
  EXPECT_TRUE(contains(pass.out, "certificate: PASS"));
  const auto fail =
      run({"certify", "--system", corpus("double_pendulum_base.toml"), "--output-set", "joints", "--zero-gamma"});
  EXPECT_EQ(fail.code, 1);
  EXPECT_TRUE(contains(fail.out, "certificate: FAIL"));
}

TEST(Cli, NumericalAbort) {
  const auto r = run({"certify", "--system", corpus("tora3.toml"), "--output-set", "cart", "--point",
                      "x=0,0,1.5; v=0,0,2"});
  EXPECT_EQ(r.code, 3);
}

TEST(Cli, SimulateWritesCsv) {
  const auto dir = scratch("sim");
  const auto r = run({"simulate", "--system", corpus("tora3.toml"), "--output-set", "flat", "--closed-loop",
                      "--inputs", "sin:0.1:1", "--horizon", "0.2", "--csv", dir.string()});
  EXPECT_EQ(r.code, 0) << r.err;
  for (const auto* name : {"trajectory.csv", "transformed.csv"}) {
    std::ifstream in(dir / name);
    ASSERT_TRUE(in) << name;
    std::string header;
    std::getline(in, header);
    EXPECT_EQ(header.substr(0, 2), "t,");
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    EXPECT_EQ(rows, 2001) << name;
  }
}

TEST(Cli, JsonReport) {
  const auto dir = scratch("json");
  const auto path = dir / "report.json";
  const auto r = run({"certify", "--system", corpus("iwp.toml"), "--output-set", "combined", "--horizon", "0.2",
                      "--json", path.string()});
  EXPECT_EQ(r.code, 0);
  std::ifstream in(path);
  ASSERT_TRUE(in);
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["half_degree"]["nu"], nlohmann::json::array({2}));
  EXPECT_EQ(j["half_degree"]["solvable"], true);
  EXPECT_EQ(j["certificate"]["passed"], true);
  EXPECT_EQ(j["negative_control"], false);
}

TEST(Cli, ExpectationParsing) {
  const auto e = cli::parse_expectation("nu = 2,1; rho = 4,2; solvable = yes; linearizable = no");
  EXPECT_EQ(e.nu, (std::vector<int>{2, 1}));
  EXPECT_EQ(e.rho, (std::vector<int>{4, 2}));
  EXPECT_EQ(e.solvable, true);
  EXPECT_EQ(e.linearizable, false);
  EXPECT_FALSE(cli::parse_expectation("solvable = yes").nu.has_value());
  EXPECT_THROW(cli::parse_expectation("nu = two"), InputError);
  EXPECT_THROW(cli::parse_expectation("colour = red"), InputError);
}

TEST(Cli, CorpusIsDeterministic) {
  const auto a = run({"corpus", "--corpus-dir", MIOLD_CORPUS_DIR, "--no-certify"});
  const auto b = run({"corpus", "--corpus-dir", MIOLD_CORPUS_DIR, "--no-certify", "--serial"});
  EXPECT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(a.out, b.out);
  EXPECT_TRUE(contains(a.out, "corpus: all rows match"));
}

// A wrong expectation is a regression.
TEST(Cli, CorpusFlagsRegression) {
  const auto dir = scratch("corpus");
  std::ifstream in(test::corpus_file("iwp.toml"));
  std::stringstream text;
  text << in.rdbuf();
  std::string s = text.str();
  const auto at = s.find("angle = \"nu = 1;");
  ASSERT_NE(at, std::string::npos);
  s[at + 13] = '2';
  std::ofstream(dir / "iwp.toml") << s;
  const auto r = run({"corpus", "--corpus-dir", dir.string(), "--no-certify"});
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_TRUE(contains(r.out, "corpus: REGRESSION"));
}

}  // namespace

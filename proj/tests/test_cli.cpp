#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gapkit/cli.hpp"

using nlohmann::json;

namespace {

struct Invocation {
  int status = -1;
  std::string out, err;
  json report() const { return json::parse(out); }
};

Invocation invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "gapkit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Invocation r;
  r.status = gapkit::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string config(const std::string& name) { return std::string(GAPKIT_CONFIG_DIR) + "/" + name; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("sft pressure of the full 2-shift") {
  auto r = invoke({"sft", "pressure", "--inline", R"({"m":2,"transition":[[1,1],[1,1]]})"});
  REQUIRE(r.status == 0);
  auto rep = r.report();
  CHECK(std::fabs(rep["result"]["value"].get<double>() - std::log(2.0)) <= 1e-12);
  CHECK(rep["tool"] == "gapkit");
  CHECK(rep["version"] == gapkit::cli::kToolVersion);
  CHECK(rep["config"]["params"]["m"] == 2);
  CHECK(rep["tolerances"].contains("spectralRadius"));
}

TEST_CASE("gap measure on the Mane model") {
  auto r = invoke({"gap", "measure", "--system", config("mane2d.json"), "--rho", "0.05", "--seed", "7"});
  REQUIRE(r.status == 0);
  auto rep = r.report();
  CHECK(rep["result"]["verdict"] == "gap-verified");
  CHECK(rep["config"]["seed"] == 7);
  CHECK(rep["config"]["params"]["rho"] == 0.05);
  CHECK(rep["config"]["params"]["system"]["kind"] == "perturbed-linear");

  auto katok = invoke({"gap", "measure", "--system", config("katok2d.json")});
  CHECK(katok.status == 2);
  CHECK(katok.report()["result"]["verdict"] == "inconclusive");
}

TEST_CASE("identical configs give identical bytes") {
  std::vector<std::string> args = {"probe", "ne", "--system", config("cat2d.json"), "--samples", "3000", "--seed", "11"};
  auto a = invoke(args);
  auto b = invoke(args);
  args.insert(args.end(), {"--jobs", "3"});
  auto c = invoke(args);
  REQUIRE(a.status == 0);
  CHECK(a.out == b.out);
  CHECK(a.out == c.out);
  CHECK(a.report()["result"]["candidates"] == 0);

  auto d = invoke({"probe", "ne", "--system", config("cat2d.json"), "--samples", "3000", "--seed", "12"});
  CHECK(d.report()["config"]["seed"] == 12);
}

TEST_CASE("schema errors name the field") {
  auto r = invoke({"pressure", "--system", config("cat2d.json"), "--eps", "-1"});
  CHECK(r.status == 1);
  CHECK(r.err.find("/eps") != std::string::npos);

  auto bad_kind = invoke({"semiconj", "--inline", R"({"system":{"kind":"warp","matrix":[[2,1],[1,1]]}})"});
  CHECK(bad_kind.status == 1);
  CHECK(bad_kind.err.find("/system/kind") != std::string::npos);

  auto row = invoke({"sft", "pressure", "--inline", R"({"m":2,"transition":[[1,1],[1,2]]})"});
  CHECK(row.status == 1);
  CHECK(row.err.find("/transition/1/1") != std::string::npos);

  CHECK(invoke({"sft", "pressure", "--inline", "{oops"}).status == 1);
  CHECK(invoke({"nonsense"}).status == 1);
  CHECK(invoke({"--help"}).status == 0);
}

TEST_CASE("config files and overrides") {
  const std::string path = "test_cli_config.json";
  {
    std::ofstream f(path);
    f << R"({"system": ")" << config("cat2d.json") << R"(", "samples": 500, "eps": 0.1, "K": 30})";
  }
  auto r = invoke({"probe", "ne", "--config", path, "--set", "samples=200"});
  REQUIRE(r.status == 0);
  auto rep = r.report();
  CHECK(rep["config"]["params"]["samples"] == 200);
  CHECK(rep["config"]["params"]["system"]["kind"] == "linear");
  CHECK(rep["result"]["pairsTested"] == 400);
  std::remove(path.c_str());
}

TEST_CASE("csv series and output files") {
  const std::string out = "test_cli_bowen.json", csv = "test_cli_bowen.csv";
  auto r = invoke({"probe", "bowen", "--system", config("cat2d.json"), "--samples", "200", "--n-min", "5", "--n-max",
                   "9", "--out", out, "--csv", csv});
  REQUIRE(r.status == 0);
  CHECK(r.out.empty());
  auto rep = json::parse(slurp(out));
  CHECK(rep["result"]["rows"].size() == 5);
  std::istringstream lines(slurp(csv));
  std::string line;
  std::getline(lines, line);
  CHECK(line == "n,maxGap,pairs");
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 5);
  CHECK(invoke({"sft", "pressure", "--sft", config("golden_mean.json"), "--csv", csv}).status == 1);
  std::remove(out.c_str());
  std::remove(csv.c_str());
}

TEST_CASE("exact subshift commands") {
  auto b = invoke({"sft", "binfty", "--sft", config("golden_mean.json"), "--inline", R"({"lambda":[0,1]})"});
  REQUIRE(b.status == 0);
  CHECK(b.report()["result"]["strictEntropyGap"] == true);
  CHECK(b.report()["result"]["entropy"] == 0.0);

  auto j = invoke({"sft", "joining", "--inline",
                   R"({"kind":"rel-independent","mu":{"Q":[["1/3","2/3"],["1/2","1/2"]],"k":2}})"});
  REQUIRE(j.status == 0);
  auto res = j.report()["result"];
  CHECK(res["exact"] == true);
  CHECK(std::fabs(res["entropy"].get<double>() - 2 * res["hMu"].get<double>()) <= 1e-9);
  CHECK(res["marginalsOk"] == true);

  auto i = invoke({"gap", "interweave", "--T", "4", "--N", "8", "--alpha", "1/2"});
  REQUIRE(i.status == 0);
  CHECK(i.report()["result"]["run"]["unionCount"] == "35");

  auto single = invoke({"gap", "interweave", "--T", "4", "--N", "8", "--alpha", "1/8"});
  CHECK(single.status == 2);
}

TEST_CASE("report bundle") {
  auto a = invoke({"report", "bundle", "--seed", "3", "--jobs", "1"});
  auto b = invoke({"report", "bundle", "--seed", "3", "--jobs", "4"});
  REQUIRE(a.status == 0);
  CHECK(a.out == b.out);
  auto entries = a.report()["result"]["entries"];
  CHECK(entries.size() == 13);
  for (const auto& e : entries) {
    CHECK(e.contains("tolerances"));
    CHECK(e["config"].contains("params"));
  }
  auto c = invoke({"report", "bundle", "--seed", "4"});
  CHECK(c.out != a.out);

  auto nested = invoke({"report", "bundle", "--inline", R"({"entries":[{"command":"report bundle"}]})"});
  CHECK(nested.status == 1);
  auto bad = invoke({"report", "bundle", "--inline", R"({"entries":[{"command":"glue","params":{"delta":0}}]})"});
  CHECK(bad.status == 1);
  CHECK(bad.err.find("/entries/0/params") != std::string::npos);
}

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "spdl/cli/config.hpp"
#include "spdl/cli/run.hpp"
#include "spdl/cli/verify.hpp"
#include "spdl/numcore/error.hpp"

using namespace spdl;
using namespace spdl::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("spdl_test_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

bool has_issue(const ConfigError& e, const std::string& key) {
  for (const auto& i : e.issues())
    if (i.key == key) return true;
  return false;
}

}  // namespace

TEST_CASE("empty file plus flags gives a valid config") {
  const auto cfg = parse_config("", {{"experiment", "classify"}, {"seed", "4"}});
  CHECK(cfg.get_string("experiment") == "classify");
  CHECK(cfg.get_uint("seed") == 4);
  CHECK(cfg.get_int("steps") == 1000);
  CHECK(cfg.get_string("optimizer") == "adam");
}

TEST_CASE("every violation is reported by name") {
  try {
    parse_config("seed=abc\nbogus=1\nno equals sign\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(has_issue(e, "seed"));
    CHECK(has_issue(e, "bogus"));
    CHECK(has_issue(e, "line 3"));
    CHECK(has_issue(e, "experiment"));
  }
  CHECK_THROWS_AS(parse_config("experiment=sideways"), ConfigError);
  CHECK_THROWS_AS(split_assignment("seed"), ConfigError);
}

TEST_CASE("flag overrides the file value") {
  const auto cfg = parse_config("experiment=flow\nseed=3\n# comment\nlr = 0.5\n", {{"seed", "9"}});
  CHECK(cfg.get_uint("seed") == 9);
  CHECK(cfg.get_real("lr") == 0.5);
  CHECK(cfg.get_string("experiment") == "flow");
}

TEST_CASE("config round trip") {
  const auto cfg = parse_config("experiment=deeplimit\nlr=0.1\ndeeplimit.ks=4,8,16\nrecord_wall_time=true\n");
  const auto again = parse_config(serialize_config(cfg));
  CHECK(again == cfg);
  CHECK(serialize_config(again) == serialize_config(cfg));
  CHECK(cfg.get_int_list("deeplimit.ks") == std::vector<std::size_t>{4, 8, 16});
}

TEST_CASE("classify with zero steps logs no training rows") {
  const auto out = scratch("zero");
  const auto cfg = parse_config("", {{"experiment", "classify"}, {"steps", "0"}, {"out", out.string()}});
  std::ostringstream log;
  run(cfg, log);
  const std::string t = slurp(out / "train_log.csv");
  CHECK(line_count(t) == 1);
  CHECK(fs::exists(out / "config.txt"));
  CHECK(fs::exists(out / "decision_grid.csv"));
  CHECK(parse_config(slurp(out / "config.txt")) == cfg);
  fs::remove_all(out);
}

TEST_CASE("same config twice gives byte-identical files") {
  for (const char* exp : {"classify", "flow", "denoise", "msa"}) {
    CAPTURE(exp);
    const auto a = scratch("a"), b = scratch("b");
    const std::vector<std::pair<std::string, std::string>> common{
        {"experiment", exp}, {"steps", "20"}, {"denoise.images", "4"}, {"denoise.size", "8"}};
    auto ca = common, cb = common;
    ca.emplace_back("out", a.string());
    cb.emplace_back("out", b.string());
    std::ostringstream log;
    const auto fa = run(parse_config("", ca), log);
    const auto fb = run(parse_config("", cb), log);
    REQUIRE(fa.size() == fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) {
      CHECK(fa[i].filename() == fb[i].filename());
      if (fa[i].filename() == "config.txt") continue;
      CHECK(slurp(fa[i]) == slurp(fb[i]));
    }
    fs::remove_all(a);
    fs::remove_all(b);
  }
}

TEST_CASE("optbench writes one trajectory per method") {
  const auto out = scratch("optbench");
  std::ostringstream log;
  run(parse_config("", {{"experiment", "optbench"}, {"out", out.string()}}), log);
  for (const char* m : {"GD", "HB", "NaG", "RGD", "Adam"}) {
    CAPTURE(m);
    const auto p = out / ("trajectory_" + std::string(m) + ".csv");
    REQUIRE(fs::exists(p));
    CHECK(slurp(p).rfind("step,loss,grad_norm,theta_0,theta_1\n", 0) == 0);
  }
  fs::remove_all(out);
}

TEST_CASE("verify suites") {
  CHECK_THROWS_AS(run_suite("nope"), PreconditionError);
  const auto g = run_suite("gradients");
  CHECK(!g.empty());
  for (const auto& r : g) CHECK_MESSAGE(r.pass, r.property);
  std::ostringstream os;
  write_report(os, g);
  CHECK(line_count(os.str()) == g.size() + 1);
  CHECK(os.str().rfind("suite,property,observed,threshold,status\n", 0) == 0);
}

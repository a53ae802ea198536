#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spdl/cli/config.hpp"
#include "spdl/cli/run.hpp"
#include "spdl/cli/verify.hpp"

namespace {

int print_issues(const spdl::cli::ConfigError& e) {
  for (const auto& i : e.issues()) std::cerr << "config error: " << i.key << ": " << i.message << "\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spdl: experiment runner for structure-preserving deep learning"};
  std::string config_path, out, seed, suite;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--set", sets, "override one key (key=value), repeatable")->allow_extra_args(false);
  app.add_option("--out", out, "output directory");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--verify", suite, "run an invariant suite instead of an experiment")
      ->check(CLI::IsMember(spdl::cli::suite_names()));
  CLI11_PARSE(app, argc, argv);

  try {
    if (!suite.empty()) {
      const auto rows = spdl::cli::run_suite(suite);
      spdl::cli::write_report(std::cout, rows);
      int failed = 0;
      for (const auto& r : rows) {
        if (r.pass) continue;
        std::cerr << "FAILED " << r.suite << "/" << r.property << ": observed " << r.observed
                  << " > threshold " << r.threshold << "\n";
        ++failed;
      }
      return failed == 0 ? 0 : 1;
    }

    std::string text;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) {
        std::cerr << "error: cannot read config file " << config_path << "\n";
        return 2;
      }
      std::ostringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    }
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : sets) overrides.push_back(spdl::cli::split_assignment(s));
    if (!out.empty()) overrides.emplace_back("out", out);
    if (!seed.empty()) overrides.emplace_back("seed", seed);

    const auto cfg = spdl::cli::parse_config(text, overrides);
    for (const auto& p : spdl::cli::run(cfg, std::cerr)) std::cout << p.string() << "\n";
    return 0;
  } catch (const spdl::cli::ConfigError& e) {
    return print_issues(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "spdl/cli/config.hpp"

namespace spdl::cli {

// Runs the configured experiment, writing into cfg "out":
//   config.txt         every experiment
//   classify   train_log.csv, decision_grid.csv (2-D data), states.csv, metrics.csv
//   flow       train_log.csv, density_grid.csv, flow.bin, metrics.csv
//   denoise    train_log.csv, denoised.spdlimg, metrics.csv
//   optbench   trajectory_{GD,HB,NaG,RGD,Adam}.csv, summary.csv
//   deeplimit  deeplimit.csv
//   msa        msa_log.csv, metrics.csv
// Returns the list of files written. Library errors propagate.
std::vector<std::filesystem::path> run(const RunConfig& cfg, std::ostream& log);

}  // namespace spdl::cli

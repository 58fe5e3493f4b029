#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mlvae/run_config.hpp"

namespace mlvae {

// Each command returns a process exit status and writes progress to `log`.

// <out>/checkpoint/, <out>/metrics.csv, <out>/metrics.meta.json and
// <out>/resolved_config.json.
int cmd_train(const RunConfig& config, std::ostream& log);

// <out>/eval_metrics.csv
int cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint, std::ostream& log);

// <out>/grids/<mode>.(pgm|ppm) plus a roles sidecar per grid.
int cmd_manipulate(const RunConfig& config, const std::filesystem::path& checkpoint, const std::string& mode,
                   std::ostream& log);

inline const std::vector<std::string> kManipulateModes = {"swap", "interpolate", "generate", "compare"};

// Full command line: `mlvae <train|eval|manipulate> --config ...`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mlvae

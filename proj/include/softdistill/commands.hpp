// SPDX-License-Identifier: Apache-2.0
//
// The work behind each CLI subcommand. Every function validates its inputs
// and loads its data before creating any output file.
#pragma once

#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "softdistill/archive.hpp"
#include "softdistill/audit.hpp"
#include "softdistill/classify.hpp"
#include "softdistill/config.hpp"

namespace softdistill {

enum class ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kNumericAbort = 4,
};

/// Maps the library's exception types onto exit codes.
ExitCode exit_code_for(const std::exception& e);

Model model_for(const RunConfig& config);

std::string format_history_csv(const std::vector<HistoryRow>& rows);

struct DistillOutputs {
  std::filesystem::path archive;
  std::filesystem::path history;
  std::vector<std::filesystem::path> checkpoints;
  DistillResult result;
};

/// Writes checkpoint_<step>.sdar every checkpoint_every steps, then
/// distilled.sdar and history.csv, all under config.out_dir.
DistillOutputs cmd_distill(const RunConfig& config);

/// Fresh model per archive trained on its distilled set, voted over the test
/// manifest's full images. Writes <report_stem>.txt/.json.
std::vector<EvalReport> cmd_eval(const RunConfig& config,
                                 const std::vector<std::filesystem::path>& archives,
                                 const std::filesystem::path& report_stem);

/// One row per per-class subset size.
std::vector<EvalReport> cmd_baseline(const RunConfig& config, const std::vector<std::size_t>& sizes,
                                     const std::filesystem::path& report_stem);

struct ExportOutputs {
  std::vector<std::filesystem::path> images;
  std::filesystem::path sidecar;
  std::vector<std::vector<double>> rendered;  // 8-bit values scaled back to [0,1]
  std::vector<std::vector<double>> labels;    // target distribution per image
};

/// format is "pgm" or "png". Channels are stacked vertically.
ExportOutputs cmd_export_images(const std::filesystem::path& archive,
                                const std::filesystem::path& out_dir,
                                const std::string& format = "pgm");

/// Images under images/, masks under masks/, plus manifest.tsv. Returns the
/// manifest path.
std::filesystem::path cmd_synth(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace softdistill

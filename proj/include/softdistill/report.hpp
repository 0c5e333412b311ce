// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "softdistill/classify.hpp"

namespace softdistill {

/// Aligned "Method Sen Spe HM" table, scores to three decimals, followed by
/// the voting threshold.
std::string format_report_table(std::span<const EvalReport> rows);

/// {"rows": [{"method", "sen", "spe", "hm", "tp", "fn", "tn", "fp",
/// "epsilon", "no_evidence"}]} with full-precision scores.
std::string format_report_json(std::span<const EvalReport> rows);
std::vector<EvalReport> parse_report_json(const std::string& text);

/// Writes <stem>.txt and <stem>.json.
void write_report(const std::filesystem::path& stem, std::span<const EvalReport> rows);

}  // namespace softdistill

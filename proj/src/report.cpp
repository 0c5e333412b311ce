// SPDX-License-Identifier: Apache-2.0
#include "softdistill/report.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <json.hpp>

#include "softdistill/errors.hpp"
#include "softdistill/image_io.hpp"

namespace softdistill {

namespace {

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

// Fewest digits that still read back as the same double.
std::string shortest(double v) {
  char buf[32];
  for (int precision = 1; precision < 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string format_report_table(std::span<const EvalReport> rows) {
  std::size_t method_width = 6;
  for (const EvalReport& r : rows) method_width = std::max(method_width, r.method.size());
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  std::string out = pad("Method", method_width) + "  " + pad("Sen", 5) + "  " + pad("Spe", 5) +
                    "  HM\n";
  for (const EvalReport& r : rows) {
    out += pad(r.method, method_width) + "  " + fixed3(r.scores.sen) + "  " +
           fixed3(r.scores.spe) + "  " + fixed3(r.scores.hm) + "\n";
  }
  bool shared = true;
  for (const EvalReport& r : rows) shared = shared && r.epsilon == rows.front().epsilon;
  if (!rows.empty() && shared) {
    out += "\nepsilon = " + shortest(rows.front().epsilon) + "\n";
  } else {
    out += "\n";
    for (const EvalReport& r : rows) out += "epsilon (" + r.method + ") = " + shortest(r.epsilon) + "\n";
  }
  return out;
}

std::string format_report_json(std::span<const EvalReport> rows) {
  nlohmann::ordered_json doc;
  doc["rows"] = nlohmann::ordered_json::array();
  for (const EvalReport& r : rows) {
    nlohmann::ordered_json row;
    row["method"] = r.method;
    row["sen"] = r.scores.sen;
    row["spe"] = r.scores.spe;
    row["hm"] = r.scores.hm;
    row["tp"] = r.counts.tp;
    row["fn"] = r.counts.fn;
    row["tn"] = r.counts.tn;
    row["fp"] = r.counts.fp;
    row["epsilon"] = r.epsilon;
    row["no_evidence"] = r.no_evidence;
    doc["rows"].push_back(std::move(row));
  }
  return doc.dump(2) + "\n";
}

std::vector<EvalReport> parse_report_json(const std::string& text) {
  std::vector<EvalReport> out;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& row : doc.at("rows")) {
      EvalReport r;
      r.method = row.at("method").get<std::string>();
      r.scores.sen = row.at("sen").get<double>();
      r.scores.spe = row.at("spe").get<double>();
      r.scores.hm = row.at("hm").get<double>();
      r.counts.tp = row.at("tp").get<std::size_t>();
      r.counts.fn = row.at("fn").get<std::size_t>();
      r.counts.tn = row.at("tn").get<std::size_t>();
      r.counts.fp = row.at("fp").get<std::size_t>();
      r.epsilon = row.at("epsilon").get<double>();
      r.no_evidence = row.at("no_evidence").get<std::size_t>();
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  }
  return out;
}

void write_report(const std::filesystem::path& stem, std::span<const EvalReport> rows) {
  std::filesystem::path txt = stem, json = stem;
  txt += ".txt";
  json += ".json";
  write_file_atomic(txt, format_report_table(rows));
  write_file_atomic(json, format_report_json(rows));
}

}  // namespace softdistill

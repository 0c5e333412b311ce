// SPDX-License-Identifier: Apache-2.0
//
// Flat "key = value" files. '#' starts a comment; blank lines are ignored.
// Unknown or repeated keys are errors, as are values that fail to parse or
// validate. Every field is checked before a command touches the disk.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "softdistill/distill.hpp"
#include "softdistill/model.hpp"
#include "softdistill/patches.hpp"

namespace softdistill {

class KeyValueFile {
 public:
  /// Throws ConfigError on malformed lines or duplicate keys.
  static KeyValueFile parse(const std::string& text, const std::string& source = "config");

  /// Throws ConfigError naming every key outside `allowed`.
  void reject_unknown(const std::set<std::string>& allowed) const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  /// Comma-separated non-negative integers.
  std::vector<std::size_t> get_sizes(const std::string& key,
                                     const std::vector<std::size_t>& fallback) const;

 private:
  std::string source_;
  std::map<std::string, std::string> values_;
};

struct RunConfig {
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
  std::filesystem::path out_dir = "run";
  PatchParams patches;
  ModelConfig model;  // input shape and class count follow from patches
  DistillConfig distill;
  BaselineParams baseline;
  std::vector<std::size_t> baseline_sizes{10, 30, 100};
  double epsilon = 0.4;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 10;

  /// Throws ConfigError.
  void validate() const;
};

/// Relative paths in the file are resolved against base_dir.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir,
                           const std::string& source = "config");
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical "key = value" listing of the hyperparameters (paths excluded),
/// stored in archives.
std::string describe_run_config(const RunConfig& config);

struct SynthConfig {
  SynthSpec spec;
  std::string format = "pgm";  // pgm or png
  void validate() const;
};

SynthConfig parse_synth_config(const std::string& text, const std::string& source = "synth config");
SynthConfig load_synth_config(const std::filesystem::path& path);

}  // namespace softdistill

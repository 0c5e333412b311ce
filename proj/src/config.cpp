// SPDX-License-Identifier: Apache-2.0
#include "softdistill/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "softdistill/errors.hpp"
#include "softdistill/image_io.hpp"

namespace softdistill {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& text, const std::string& key, const std::string& source) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError(source + ": '" + key + "' has invalid value '" + text + "'");
  }
  return value;
}

// Shortest text that reads back as the same double.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

fs::path resolve(const std::string& value, const fs::path& base_dir) {
  if (value.empty()) return {};
  const fs::path p(value);
  return p.is_absolute() ? p : base_dir / p;
}

const std::set<std::string> kRunKeys = {
    "train_manifest", "test_manifest", "out_dir",
    "patch_size", "stride", "coverage_lower", "coverage_upper",
    "arch", "hidden", "init",
    "distilled_count", "epochs", "inner_steps", "outer_lr", "batch_size", "train_steps",
    "inner_lr_init", "min_inner_lr", "label_mode", "unroll_mode",
    "baseline_lr", "baseline_batch_size", "baseline_max_steps", "baseline_patience",
    "baseline_min_improvement", "baseline_sizes",
    "epsilon", "seed", "checkpoint_every",
};

const std::set<std::string> kSynthKeys = {
    "image_count", "height", "width", "positive_fraction", "organ_radius", "center_jitter",
    "background", "foreground", "noise", "snr", "texture_period", "seed", "format",
};

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& source) {
  KeyValueFile out;
  out.source_ = source;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + " line " + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!out.values_.emplace(key, value).second) {
      throw ConfigError(where + ": '" + key + "' given twice");
    }
  }
  return out;
}

void KeyValueFile::reject_unknown(const std::set<std::string>& allowed) const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (allowed.count(key) == 0) unknown += (unknown.empty() ? "" : ", ") + key;
  }
  if (!unknown.empty()) throw ConfigError(source_ + ": unknown key(s): " + unknown);
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const double v = parse_number<double>(it->second, key, source_);
  if (!std::isfinite(v)) throw ConfigError(source_ + ": '" + key + "' must be finite");
  return v;
}

std::size_t KeyValueFile::get_size(const std::string& key, std::size_t fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<std::size_t>(it->second, key, source_);
}

std::uint64_t KeyValueFile::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<std::uint64_t>(it->second, key, source_);
}

std::vector<std::size_t> KeyValueFile::get_sizes(const std::string& key,
                                                 const std::vector<std::size_t>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::size_t> out;
  std::istringstream in(it->second);
  std::string item;
  while (std::getline(in, item, ',')) {
    out.push_back(parse_number<std::size_t>(trim(item), key, source_));
  }
  if (out.empty()) throw ConfigError(source_ + ": '" + key + "' is empty");
  return out;
}

void RunConfig::validate() const {
  patches.validate();
  model.validate();
  distill.validate();
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must be in [0, 1]");
  if (baseline.learning_rate <= 0.0) throw ConfigError("baseline_lr must be positive");
  if (baseline.batch_size == 0) throw ConfigError("baseline_batch_size must be positive");
  if (baseline.max_steps == 0) throw ConfigError("baseline_max_steps must be positive");
  if (baseline.min_improvement < 0.0) {
    throw ConfigError("baseline_min_improvement must be non-negative");
  }
  for (std::size_t s : baseline_sizes) {
    if (s == 0) throw ConfigError("baseline_sizes entries must be positive");
  }
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir,
                           const std::string& source) {
  const KeyValueFile kv = KeyValueFile::parse(text, source);
  kv.reject_unknown(kRunKeys);

  RunConfig c;
  try {
    c.train_manifest = resolve(kv.get_string("train_manifest", ""), base_dir);
    c.test_manifest = resolve(kv.get_string("test_manifest", ""), base_dir);
    c.out_dir = resolve(kv.get_string("out_dir", c.out_dir.string()), base_dir);

    c.patches.patch_size = kv.get_size("patch_size", c.patches.patch_size);
    c.patches.stride = kv.get_size("stride", c.patches.stride);
    c.patches.lower = kv.get_double("coverage_lower", c.patches.lower);
    c.patches.upper = kv.get_double("coverage_upper", c.patches.upper);

    c.model.arch = parse_arch(kv.get_string("arch", to_string(c.model.arch)));
    c.model.hidden = kv.get_sizes("hidden", c.model.hidden);
    c.model.init = parse_init_scheme(kv.get_string("init", to_string(c.model.init)));
    c.model.channels = 1;
    c.model.height = c.patches.patch_size;
    c.model.width = c.patches.patch_size;
    c.model.classes = kPatchClasses;

    DistillConfig& d = c.distill;
    d.distilled_count = kv.get_size("distilled_count", d.distilled_count);
    d.epochs = kv.get_size("epochs", d.epochs);
    d.steps = kv.get_size("inner_steps", d.steps);
    d.outer_lr = kv.get_double("outer_lr", d.outer_lr);
    d.batch_size = kv.get_size("batch_size", d.batch_size);
    d.train_steps = kv.get_size("train_steps", d.train_steps);
    d.inner_lr_init = kv.get_double("inner_lr_init", d.inner_lr_init);
    d.min_inner_lr = kv.get_double("min_inner_lr", d.min_inner_lr);
    d.label_mode = parse_label_mode(kv.get_string("label_mode", to_string(d.label_mode)));
    d.unroll_mode = parse_unroll_mode(kv.get_string("unroll_mode", to_string(d.unroll_mode)));

    BaselineParams& b = c.baseline;
    b.learning_rate = kv.get_double("baseline_lr", b.learning_rate);
    b.batch_size = kv.get_size("baseline_batch_size", b.batch_size);
    b.max_steps = kv.get_size("baseline_max_steps", b.max_steps);
    b.patience = kv.get_size("baseline_patience", b.patience);
    b.min_improvement = kv.get_double("baseline_min_improvement", b.min_improvement);
    c.baseline_sizes = kv.get_sizes("baseline_sizes", c.baseline_sizes);

    c.epsilon = kv.get_double("epsilon", c.epsilon);
    c.seed = kv.get_u64("seed", c.seed);
    c.checkpoint_every = kv.get_size("checkpoint_every", c.checkpoint_every);
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (what.rfind(source, 0) == 0) throw;
    throw ConfigError(source + ": " + what);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config " + path.string());
  }
  return parse_run_config(text, path.parent_path(), path.string());
}

std::string describe_run_config(const RunConfig& c) {
  std::ostringstream out;
  auto sizes = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  out << "patch_size = " << c.patches.patch_size << '\n'
      << "stride = " << c.patches.stride << '\n'
      << "coverage_lower = " << format_double(c.patches.lower) << '\n'
      << "coverage_upper = " << format_double(c.patches.upper) << '\n'
      << "arch = " << to_string(c.model.arch) << '\n'
      << "hidden = " << sizes(c.model.hidden) << '\n'
      << "init = " << to_string(c.model.init) << '\n'
      << "distilled_count = " << c.distill.distilled_count << '\n'
      << "epochs = " << c.distill.epochs << '\n'
      << "inner_steps = " << c.distill.steps << '\n'
      << "outer_lr = " << format_double(c.distill.outer_lr) << '\n'
      << "batch_size = " << c.distill.batch_size << '\n'
      << "train_steps = " << c.distill.train_steps << '\n'
      << "inner_lr_init = " << format_double(c.distill.inner_lr_init) << '\n'
      << "min_inner_lr = " << format_double(c.distill.min_inner_lr) << '\n'
      << "label_mode = " << to_string(c.distill.label_mode) << '\n'
      << "unroll_mode = " << to_string(c.distill.unroll_mode) << '\n'
      << "seed = " << c.seed << '\n';
  return out.str();
}

void SynthConfig::validate() const {
  spec.validate();
  if (format != "pgm" && format != "png") throw ConfigError("synth: format must be pgm or png");
}

SynthConfig parse_synth_config(const std::string& text, const std::string& source) {
  const KeyValueFile kv = KeyValueFile::parse(text, source);
  kv.reject_unknown(kSynthKeys);
  SynthConfig c;
  SynthSpec& s = c.spec;
  s.image_count = kv.get_size("image_count", s.image_count);
  s.height = kv.get_size("height", s.height);
  s.width = kv.get_size("width", s.width);
  s.positive_fraction = kv.get_double("positive_fraction", s.positive_fraction);
  s.organ_radius = kv.get_double("organ_radius", s.organ_radius);
  s.center_jitter = kv.get_double("center_jitter", s.center_jitter);
  s.background = kv.get_double("background", s.background);
  s.foreground = kv.get_double("foreground", s.foreground);
  s.noise = kv.get_double("noise", s.noise);
  s.snr = kv.get_double("snr", s.snr);
  s.texture_period = kv.get_size("texture_period", s.texture_period);
  s.seed = kv.get_u64("seed", s.seed);
  c.format = kv.get_string("format", c.format);
  c.validate();
  return c;
}

SynthConfig load_synth_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read synth config " + path.string());
  }
  return parse_synth_config(text, path.string());
}

}  // namespace softdistill

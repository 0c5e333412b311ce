// SPDX-License-Identifier: Apache-2.0
#include "softdistill/commands.hpp"

#include <cstdio>

#include "softdistill/errors.hpp"
#include "softdistill/image_io.hpp"
#include "softdistill/manifest.hpp"
#include "softdistill/random.hpp"
#include "softdistill/report.hpp"

namespace softdistill {

namespace fs = std::filesystem;

ExitCode exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return ExitCode::kConfigError;
  if (dynamic_cast<const DataError*>(&e) != nullptr) return ExitCode::kDataError;
  if (dynamic_cast<const NonFiniteError*>(&e) != nullptr) return ExitCode::kNumericAbort;
  return ExitCode::kFailure;
}

Model model_for(const RunConfig& config) { return Model(config.model); }

namespace {

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string zero_pad(std::size_t v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, v);
  return buf;
}

std::vector<FullImage> load_required(const fs::path& manifest, const char* key) {
  if (manifest.empty()) throw ConfigError(std::string(key) + " is not set");
  return load_manifest_images(manifest);
}

DistilledArchive make_archive(const RunConfig& config, const DistilledSet& set,
                              const std::string& tag) {
  DistilledArchive a;
  a.label_mode = config.distill.label_mode;
  a.metadata = describe_run_config(config) + tag;
  a.set = set;
  return a;
}

std::vector<std::vector<double>> target_rows(LabelMode mode, const Tensor& label_params) {
  const std::size_t m = label_params.shape()[0], k = label_params.shape()[1];
  std::vector<std::vector<double>> rows(m, std::vector<double>(k, 0.0));
  if (mode == LabelMode::kHard) {
    const auto cls = distilled_classes(m, k);
    for (std::size_t i = 0; i < m; ++i) rows[i][static_cast<std::size_t>(cls[i])] = 1.0;
  } else {
    const Tensor q = softmax(label_params.detach());
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < k; ++j) rows[i][j] = q[i * k + j];
    }
  }
  return rows;
}

}  // namespace

std::string format_history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = "t,e,i,loss\n";
  char buf[96];
  for (const HistoryRow& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g\n", r.step, r.epoch, r.inner, r.loss);
    out += buf;
  }
  return out;
}

DistillOutputs cmd_distill(const RunConfig& config) {
  config.validate();
  const auto images = load_required(config.train_manifest, "train_manifest");
  const PatchDataset patches = build_patch_dataset(images, config.patches);
  const Model model = model_for(config);

  make_dirs(config.out_dir);
  DistillOutputs out;
  RunOptions options;
  options.checkpoint_every = config.checkpoint_every;
  options.keep_checkpoints = false;
  options.on_checkpoint = [&](const Checkpoint& cp) {
    const fs::path path = config.out_dir / ("checkpoint_" + zero_pad(cp.step, 6) + ".sdar");
    save_archive(path, make_archive(config, cp.set, "step = " + std::to_string(cp.step) + "\n"));
    out.checkpoints.push_back(path);
  };
  out.result = run_distillation(model, patches.images, config.distill, config.seed, options);

  out.archive = config.out_dir / "distilled.sdar";
  out.history = config.out_dir / "history.csv";
  save_archive(out.archive,
               make_archive(config, out.result.final_set,
                            "step = " + std::to_string(config.distill.train_steps) + "\n"));
  write_file_atomic(out.history, format_history_csv(out.result.history));
  return out;
}

std::vector<EvalReport> cmd_eval(const RunConfig& config, const std::vector<fs::path>& archives,
                                 const fs::path& report_stem) {
  config.validate();
  if (archives.empty()) throw ConfigError("eval: no archive given");
  std::vector<DistilledArchive> loaded;
  for (const fs::path& path : archives) loaded.push_back(load_archive(path));
  const Model model = model_for(config);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const DistilledSet& d = loaded[i].set;
    const Shape& s = d.images.shape();
    if (Shape{s[1], s[2], s[3]} != config.model.input_shape() ||
        d.classes() != config.model.classes) {
      throw DataError(archives[i].string() + ": distilled images " + to_string(s) +
                      " do not match the configured model input " +
                      to_string(config.model.input_shape()));
    }
  }
  const auto test = load_required(config.test_manifest, "test_manifest");

  std::vector<EvalReport> rows;
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    DistillConfig dc = config.distill;
    dc.label_mode = loaded[i].label_mode;
    const WeightSet w = train_on_distilled(model, loaded[i].set, dc,
                                           derive_seed(config.seed, SeedStream::kEvalModel));
    const std::string method =
        archives[i].stem().string() + " (" + to_string(loaded[i].label_mode) + ")";
    rows.push_back(evaluate_full_images(model, w, test, config.epsilon, config.patches, method));
  }
  if (!report_stem.parent_path().empty()) make_dirs(report_stem.parent_path());
  write_report(report_stem, rows);
  return rows;
}

std::vector<EvalReport> cmd_baseline(const RunConfig& config, const std::vector<std::size_t>& sizes,
                                     const fs::path& report_stem) {
  config.validate();
  if (sizes.empty()) throw ConfigError("baseline: no subset sizes given");
  const auto train = load_required(config.train_manifest, "train_manifest");
  const auto test = load_required(config.test_manifest, "test_manifest");
  const PatchDataset patches = build_patch_dataset(train, config.patches);
  for (std::size_t s : sizes) {
    for (std::size_t c = 0; c < kPatchClasses; ++c) {
      if (patches.counts[c] < s) {
        throw DataError("baseline: " + std::to_string(s) + " patches per class requested but class " +
                        std::to_string(c) + " has " + std::to_string(patches.counts[c]));
      }
    }
  }
  const Model model = model_for(config);

  std::vector<EvalReport> rows;
  for (std::size_t s : sizes) {
    const BaselineResult r = train_baseline_subset(
        model, patches.images, s, config.baseline,
        derive_seed(config.seed, SeedStream::kBaselineBatches, s));
    rows.push_back(evaluate_full_images(model, r.weights, test, config.epsilon, config.patches,
                                        "subset (" + std::to_string(s) + "/class)"));
  }
  if (!report_stem.parent_path().empty()) make_dirs(report_stem.parent_path());
  write_report(report_stem, rows);
  return rows;
}

ExportOutputs cmd_export_images(const fs::path& archive_path, const fs::path& out_dir,
                                const std::string& format) {
  if (format != "pgm" && format != "png") throw ConfigError("export: format must be pgm or png");
  const DistilledArchive archive = load_archive(archive_path);
  const DistilledSet& d = archive.set;
  const Shape& s = d.images.shape();
  const std::size_t per_image = s[1] * s[2] * s[3];

  make_dirs(out_dir);
  ExportOutputs out;
  out.labels = target_rows(archive.label_mode, d.label_params);
  char buf[64];
  std::string sidecar = "image";
  for (std::size_t j = 0; j < d.classes(); ++j) sidecar += "\tclass_" + std::to_string(j);
  sidecar += "\n";
  for (std::size_t m = 0; m < s[0]; ++m) {
    const auto values = d.images.data().subspan(m * per_image, per_image);
    const auto bytes = quantize8(normalize_min_max(values));
    std::vector<double> rendered(bytes.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) rendered[i] = bytes[i] / 255.0;

    const std::string name = "distilled_" + zero_pad(m, 3) + "." + format;
    const fs::path path = out_dir / name;
    const std::size_t h = s[1] * s[2], w = s[3];
    write_file_atomic(path, format == "png" ? encode_png8(h, w, bytes) : encode_pgm8(h, w, bytes));
    out.images.push_back(path);
    out.rendered.push_back(std::move(rendered));

    sidecar += name;
    for (double q : out.labels[m]) {
      std::snprintf(buf, sizeof buf, "\t%.17g", q);
      sidecar += buf;
    }
    sidecar += "\n";
  }
  std::snprintf(buf, sizeof buf, "%.17g", d.inner_lr);
  sidecar += "# label_mode = " + to_string(archive.label_mode) + "\n# inner_lr = " + buf + "\n";
  out.sidecar = out_dir / "labels.tsv";
  write_file_atomic(out.sidecar, sidecar);
  return out;
}

fs::path cmd_synth(const SynthConfig& config, const fs::path& out_dir) {
  config.validate();
  const std::vector<FullImage> images = synth_generate(config.spec);

  make_dirs(out_dir / "images");
  make_dirs(out_dir / "masks");
  std::vector<ManifestEntry> entries;
  const int width = config.spec.image_count > 1000 ? 6 : 4;
  for (std::size_t n = 0; n < images.size(); ++n) {
    const FullImage& img = images[n];
    const std::string stem = "synth_" + zero_pad(n, width);
    const fs::path image_rel = fs::path("images") / (stem + "." + config.format);
    const fs::path mask_rel = fs::path("masks") / (stem + "_mask." + config.format);
    write_image(out_dir / image_rel, img.height, img.width, img.pixels);
    std::vector<double> mask(img.mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = img.mask[i] ? 1.0 : 0.0;
    write_image(out_dir / mask_rel, img.height, img.width, mask);
    entries.push_back({image_rel, img.label, mask_rel});
  }
  const fs::path manifest = out_dir / "manifest.tsv";
  write_file_atomic(manifest, format_manifest(entries));
  return manifest;
}

}  // namespace softdistill

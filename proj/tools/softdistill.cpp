// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "softdistill/commands.hpp"
#include "softdistill/errors.hpp"
#include "softdistill/manifest.hpp"
#include "softdistill/patches.hpp"
#include "softdistill/report.hpp"

namespace fs = std::filesystem;
using namespace softdistill;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<double> epsilon;
  std::optional<std::size_t> checkpoint_every;
};

RunConfig load_with_overrides(const std::string& path, const Overrides& o) {
  RunConfig c = load_run_config(path);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  if (o.epsilon) c.epsilon = *o.epsilon;
  if (o.checkpoint_every) c.checkpoint_every = *o.checkpoint_every;
  c.validate();
  return c;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  return KeyValueFile::parse("sizes = " + text, "--sizes").get_sizes("sizes", {});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft-label dataset distillation for patch-voted image classification"};
  app.require_subcommand(1);

  Overrides o;
  std::string config_path;
  std::vector<std::string> archives;
  std::string sizes_text;
  std::string format = "pgm";
  std::string audit_config;

  auto add_common = [&](CLI::App* sub, bool with_out_required) {
    sub->add_option("--config", config_path, "key = value run configuration")->required();
    sub->add_option("--seed", o.seed, "override the configured seed");
    auto* out = sub->add_option("--out", o.out, "output directory");
    if (with_out_required) out->required();
  };

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic image set and manifest");
  add_common(synth, true);

  CLI::App* distill = app.add_subcommand("distill", "learn a distilled set");
  add_common(distill, false);
  distill->add_option("--checkpoint-every", o.checkpoint_every, "steps between checkpoints, 0 for none");

  CLI::App* eval = app.add_subcommand("eval", "score distilled archives on full test images");
  add_common(eval, false);
  eval->add_option("--archive", archives, "archive to evaluate (repeatable)")->required();
  eval->add_option("--epsilon", o.epsilon, "voting threshold");

  CLI::App* baseline = app.add_subcommand("baseline", "score random-subset baselines");
  add_common(baseline, false);
  baseline->add_option("--sizes", sizes_text, "comma-separated patches per class");
  baseline->add_option("--epsilon", o.epsilon, "voting threshold");

  CLI::App* export_images = app.add_subcommand("export-images", "render distilled images");
  export_images->add_option("--archive", archives, "archive to render")->required()->expected(1);
  export_images->add_option("--out", o.out, "output directory")->required();
  export_images->add_option("--format", format, "pgm or png");
  export_images->add_option("--config", audit_config,
                            "run configuration; audits the images against its training patches");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfigError);
  }

  try {
    if (*synth) {
      SynthConfig sc = load_synth_config(config_path);
      if (o.seed) sc.spec.seed = *o.seed;
      const fs::path manifest = cmd_synth(sc, *o.out);
      std::cout << "wrote " << sc.spec.image_count << " images, manifest " << manifest.string() << "\n";
    } else if (*distill) {
      const RunConfig c = load_with_overrides(config_path, o);
      const DistillOutputs out = cmd_distill(c);
      for (const auto& p : out.checkpoints) std::cout << "checkpoint " << p.string() << "\n";
      std::cout << "archive " << out.archive.string() << "\nhistory " << out.history.string() << "\n";
    } else if (*eval) {
      const RunConfig c = load_with_overrides(config_path, o);
      std::vector<fs::path> paths(archives.begin(), archives.end());
      const auto rows = cmd_eval(c, paths, c.out_dir / "report");
      std::cout << format_report_table(rows);
    } else if (*baseline) {
      const RunConfig c = load_with_overrides(config_path, o);
      const auto sizes = sizes_text.empty() ? c.baseline_sizes : parse_sizes(sizes_text);
      const auto rows = cmd_baseline(c, sizes, c.out_dir / "baseline");
      std::cout << format_report_table(rows);
    } else if (*export_images) {
      std::optional<RunConfig> c;
      if (!audit_config.empty()) c = load_run_config(audit_config);
      const ExportOutputs out = cmd_export_images(archives.at(0), *o.out, format);
      std::cout << "wrote " << out.images.size() << " images and " << out.sidecar.string() << "\n";
      if (c) {
        const auto train = load_manifest_images(c->train_manifest);
        const PatchDataset patches = build_patch_dataset(train, c->patches);
        const AuditResult audit = nearest_neighbor_audit(out.rendered, patches.images);
        std::printf("audit: 1st percentile of inter-patch distance %.6f\n", audit.threshold);
        for (std::size_t i = 0; i < audit.nearest.size(); ++i) {
          std::printf("  image %zu nearest patch %.6f %s\n", i, audit.nearest[i],
                      audit.nearest[i] > audit.threshold ? "ok" : "TOO CLOSE");
        }
        std::printf("audit %s\n", audit.passed ? "passed" : "failed");
        if (!audit.passed) return static_cast<int>(ExitCode::kFailure);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    if (const auto* nf = dynamic_cast<const NonFiniteError*>(&e)) {
      std::cerr << "  at step " << nf->step() << ", epoch " << nf->epoch() << ", inner iteration "
                << nf->inner() << "\n";
    }
    return static_cast<int>(exit_code_for(e));
  }
  return 0;
}

// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion. Exits 0 when every FAIL
// is a known, explained deviation (see kKnownDeviations), 1 otherwise.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "softdistill/commands.hpp"
#include "softdistill/errors.hpp"
#include "softdistill/image_io.hpp"
#include "softdistill/manifest.hpp"
#include "softdistill/random.hpp"
#include "softdistill/report.hpp"
#include "suites.hpp"
#include "vote_properties.hpp"

namespace fs = std::filesystem;
using namespace softdistill;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  bool known_deviation = false;
};

const std::set<std::string> kKnownDeviations{"metric-oracle"};

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// TP/FN/TN/FP = 124/16/413/62 over populations 140 and 475 should read back
// as Sen 0.886, Spe 0.869, HM 0.877 at three decimals.
Outcome metric_oracle() {
  const Metrics m = metrics(124, 16, 413, 62);
  const double sen = round3(m.sen), spe = round3(m.spe), hm = round3(m.hm);
  const double hm_of_rounded = round3(harmonic_mean(0.886, 0.869));
  Outcome o;
  o.pass = sen == 0.886 && spe == 0.869 && hm == 0.877;
  o.detail = "Sen " + fmt("%.3f", sen) + " Spe " + fmt("%.3f", spe) + " HM " + fmt("%.3f", hm) +
             " (exact HM " + fmt("%.6f", m.hm) + "; expected 0.886/0.869/0.877)";
  // The expected HM is what the rounded Sen/Spe give; the counts themselves
  // give 0.8775 -> 0.878. No integer counts over these populations produce
  // all three expected values, so this FAIL is accepted only in exactly this
  // shape.
  if (!o.pass && sen == 0.886 && spe == 0.869 && hm == 0.878 && hm_of_rounded == 0.877) {
    o.known_deviation = true;
    o.detail += "; HM of the rounded Sen/Spe is " + fmt("%.5f", harmonic_mean(0.886, 0.869)) +
                " -> 0.877, HM of the counts rounds to 0.878 [known deviation]";
  }
  return o;
}

Outcome geometry_oracle() {
  FullImage img;
  img.height = img.width = 2048;
  img.pixels.assign(2048 * 2048, 0.5);
  img.mask.assign(2048 * 2048, 1);
  PatchParams params;  // p = 299, s = 50
  const PatchGrid grid = extract_patches(img, params);
  Outcome o;
  o.pass = grid.rows() == 35 && grid.cols() == 35 && grid.size() == 35 * 35;
  o.detail = "grid " + std::to_string(grid.rows()) + "x" + std::to_string(grid.cols());
  return o;
}

Outcome first_order_suite() {
  std::size_t cases = 0, failures = 0;
  double worst = 0.0;
  suites::first_order(2024, [&](const std::string&, double err) {
    ++cases;
    failures += err > 1e-6;
    worst = std::max(worst, err);
  });
  suites::first_order(99, [&](const std::string&, double err) {
    ++cases;
    failures += err > 1e-6;
    worst = std::max(worst, err);
  });
  Outcome o;
  o.pass = failures == 0 && cases >= 100;
  o.detail = std::to_string(cases) + " cases, worst relative error " + fmt("%.2e", worst) +
             " (tol 1e-6), " + std::to_string(failures) + " over";
  return o;
}

Outcome bilevel_suite() {
  std::size_t cases = 0, failures = 0;
  double worst = 0.0;
  suites::bilevel(55, 30, [&](const std::string&, double err) {
    ++cases;
    failures += err > 1e-4;
    worst = std::max(worst, err);
  });
  const suites::ClosedForm c = suites::closed_form_bilevel();
  const double closed_err =
      std::max({std::abs(c.theta1 - 0.5), std::abs(c.loss - 1.125), std::abs(c.grad_image + 0.75),
                std::abs(c.grad_lr + 1.5), std::abs(c.next_image - 1.075), std::abs(c.next_lr - 0.65)});
  Outcome o;
  o.pass = failures == 0 && cases >= 50 && closed_err <= 1e-12;
  o.detail = std::to_string(cases) + " linear/MLP cases, worst relative error " + fmt("%.2e", worst) +
             " (tol 1e-4); closed-form max abs error " + fmt("%.1e", closed_err) + " (tol 1e-12)";
  return o;
}

LabeledImages blob_train(std::uint64_t seed) {
  BlobSpec spec;
  spec.seed = seed;
  return make_blob_patches(spec);
}

// Same class templates as blob_train(seed), independent noise draws.
LabeledImages blob_held_out(std::uint64_t seed) {
  BlobSpec spec;
  spec.seed = seed;
  spec.per_class = 600;
  const LabeledImages all = make_blob_patches(spec);
  LabeledImages out(all.image_shape());
  for (std::size_t i = 900; i < all.size(); ++i) out.push_back(all.pixels(i), all.label(i));
  return out;
}

ModelConfig blob_model() {
  ModelConfig cfg;
  cfg.arch = Arch::kLinear;
  cfg.height = cfg.width = 8;
  return cfg;
}

Outcome loop_contract() {
  const Model model(blob_model());
  const LabeledImages data = blob_train(11);
  DistillConfig cfg;  // E = I = 3
  cfg.train_steps = 4;
  cfg.outer_lr = 0.5;
  std::vector<std::size_t> per_step(cfg.train_steps + 1, 0);
  RunOptions opts;
  const DistillResult soft = run_distillation(model, data, cfg, 3, opts);
  for (const HistoryRow& r : soft.history) ++per_step.at(r.step);
  bool nine = true;
  for (std::size_t t = 1; t <= cfg.train_steps; ++t) nine = nine && per_step[t] == 9;

  cfg.label_mode = LabelMode::kHard;
  const DistillResult hard = run_distillation(model, data, cfg, 3, opts);
  const DistilledSet start = init_distilled(cfg, model.config(), 3);
  bool fixed = hard.final_set.label_params.shape() == start.label_params.shape();
  for (std::size_t i = 0; fixed && i < start.label_params.size(); ++i) {
    fixed = std::bit_cast<std::uint64_t>(hard.final_set.label_params[i]) ==
            std::bit_cast<std::uint64_t>(start.label_params[i]);
  }
  Outcome o;
  o.pass = nine && fixed;
  o.detail = std::string("inner iterations per outer step: ") + (nine ? "9 on every step" : "NOT 9") +
             "; hard-mode labels " + (fixed ? "bit-identical" : "CHANGED");
  return o;
}

Outcome efficacy() {
  const Model model(blob_model());
  DistillConfig cfg;
  cfg.outer_lr = 1.0;
  cfg.train_steps = 100;
  bool all = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DistillResult r = run_distillation(model, blob_train(seed), cfg, seed);
    const LabeledImages test = blob_held_out(seed);
    const std::uint64_t eval_seed = derive_seed(seed, SeedStream::kEvalModel);
    const double fresh = model.accuracy(model.init_weights(eval_seed), test);
    const double distilled = model.accuracy(train_on_distilled(model, r.final_set, cfg, eval_seed), test);

    // Mean outer loss over the first and last 10% of outer steps.
    const std::size_t window = cfg.train_steps / 10;
    double first = 0, last = 0;
    std::size_t nf = 0, nl = 0;
    for (const HistoryRow& h : r.history) {
      if (h.step <= window) first += h.loss, ++nf;
      if (h.step > cfg.train_steps - window) last += h.loss, ++nl;
    }
    first /= static_cast<double>(nf);
    last /= static_cast<double>(nl);
    const bool ok = distilled > fresh && last < first;
    all = all && ok;
    detail += (seed ? "; " : "") + std::string("seed ") + std::to_string(seed) + " acc " +
              fmt("%.3f", fresh) + "->" + fmt("%.3f", distilled) + " loss " + fmt("%.3f", first) +
              "->" + fmt("%.3f", last);
  }
  return {all, detail};
}

struct SyntheticRun {
  fs::path root;
  RunConfig soft, hard;
  fs::path soft_archive, hard_archive;
};

// 20 synthetic 48x48 images per split, 8x8 patches at stride 4. The organ
// fills most of the frame so the I, N and P patch counts are comparable.
SyntheticRun synthetic_setup(const fs::path& root) {
  SyntheticRun run;
  run.root = root;
  SynthConfig sc;
  sc.spec.organ_radius = 0.45;
  sc.spec.seed = 1;
  cmd_synth(sc, root / "data" / "train");
  sc.spec.seed = 2;
  cmd_synth(sc, root / "data" / "test");

  const std::string text = "train_manifest = data/train/manifest.tsv\n"
                           "test_manifest = data/test/manifest.tsv\n"
                           "patch_size = 8\nstride = 4\narch = linear\n"
                           "outer_lr = 1\ntrain_steps = 300\nseed = 1\n";
  run.soft = parse_run_config(text, root);
  run.hard = parse_run_config(text + "label_mode = hard\n", root);
  return run;
}

Outcome soft_vs_hard(SyntheticRun& run) {
  std::vector<EvalReport> rows;
  std::string per_seed;
  int soft_wins = 0, hard_wins = 0, ties = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunConfig soft = run.soft, hard = run.hard;
    soft.seed = hard.seed = seed;
    soft.out_dir = run.root / ("soft_seed" + std::to_string(seed));
    hard.out_dir = run.root / ("hard_seed" + std::to_string(seed));
    const fs::path sa = cmd_distill(soft).archive, ha = cmd_distill(hard).archive;
    if (seed == 1) {
      run.soft_archive = sa;
      run.hard_archive = ha;
    }
    const auto r = cmd_eval(soft, {sa, ha}, run.root / ("comparison_seed" + std::to_string(seed)));
    const double ds = r.at(0).scores.hm, dh = r.at(1).scores.hm;
    (ds > dh ? soft_wins : ds < dh ? hard_wins : ties) += 1;
    per_seed += (seed > 1 ? ", " : "") + fmt("%.3f", ds) + "/" + fmt("%.3f", dh);
    if (seed == 1) rows = r;
  }
  rows[0].method = "soft labels";
  rows[1].method = "hard labels";
  write_report(run.root / "comparison", rows);
  std::printf("%s", format_report_table(rows).c_str());

  const std::string table = format_report_table(rows);
  bool consistent = rows.size() == 2 && table.rfind("Method", 0) == 0;
  for (const auto& r : rows) consistent = consistent && std::abs(r.scores.hm - harmonic_mean(r.scores.sen, r.scores.spe)) <= 1e-12;
  Outcome o;
  o.pass = consistent;
  o.detail = "two-row table written; HM soft/hard per seed " + per_seed + "; soft higher on " +
             std::to_string(soft_wins) + ", hard higher on " + std::to_string(hard_wins) + ", tied on " +
             std::to_string(ties) + " of 5 (direction reported, not asserted)";
  return o;
}

Outcome votes() {
  const auto v = vote_properties::check_votes(6);
  std::size_t mono_failures = 0, mono_checks = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto m = vote_properties::check_monotonicity(6, seed);
    mono_failures += m.failures.size();
    mono_checks += m.checks;
  }
  Outcome o;
  o.pass = v.failures.empty() && mono_failures == 0 && v.boundary_hits > 0;
  o.detail = std::to_string(v.grids) + " grids (0..6 patches) x " +
             std::to_string(vote_properties::epsilon_grid().size()) + " thresholds, " +
             std::to_string(v.boundary_hits) + " exact-boundary votes, " +
             std::to_string(mono_checks) + " monotonicity checks, " +
             std::to_string(v.failures.size() + mono_failures) + " violations";
  return o;
}

Outcome reproducibility(const SyntheticRun& run) {
  RunConfig again = run.soft;
  again.out_dir = run.root / "soft_seed1_rerun";
  const fs::path rerun = cmd_distill(again).archive;
  const std::string a = read_file(run.soft_archive), b = read_file(rerun);
  Outcome o;
  o.pass = a == b;
  o.detail = std::to_string(a.size()) + "-byte archives " + (a == b ? "identical" : "DIFFER");
  return o;
}

Outcome anonymization(const SyntheticRun& run) {
  const ExportOutputs out = cmd_export_images(run.soft_archive, run.root / "export", "png");
  const auto train = load_manifest_images(run.soft.train_manifest);
  const PatchDataset patches = build_patch_dataset(train, run.soft.patches);
  const AuditResult audit = nearest_neighbor_audit(out.rendered, patches.images);
  std::string nearest;
  for (double d : audit.nearest) nearest += (nearest.empty() ? "" : ", ") + fmt("%.3f", d);
  Outcome o;
  o.pass = audit.passed;
  o.detail = std::to_string(out.images.size()) + " images vs " + std::to_string(patches.images.size()) +
             " training patches; nearest " + nearest + "; 1st-percentile inter-patch distance " +
             fmt("%.3f", audit.threshold);
  return o;
}

}  // namespace

int main() {
  const fs::path root = fs::current_path() / "acceptance_artifacts";
  fs::remove_all(root);
  fs::create_directories(root);

  int failed = 0, unexplained = 0;
  auto report = [&](const char* id, const std::function<Outcome()>& run) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) {
      ++failed;
      if (!(o.known_deviation && kKnownDeviations.count(id))) ++unexplained;
    }
  };

  report("metric-oracle", metric_oracle);
  report("geometry-oracle", geometry_oracle);
  report("first-order-gradients", first_order_suite);
  report("bilevel-gradients", bilevel_suite);
  report("loop-contract", loop_contract);
  report("distillation-efficacy", efficacy);
  SyntheticRun run;
  report("soft-vs-hard-harness", [&] {
    run = synthetic_setup(root);
    return soft_vs_hard(run);
  });
  report("vote-properties", votes);
  report("reproducibility", [&] { return reproducibility(run); });
  report("anonymization-audit", [&] { return anonymization(run); });

  std::printf("%d criteria failed, %d of them unexplained\n", failed, unexplained);
  return unexplained == 0 ? 0 : 1;
}

#include <CLI11.hpp>
#include <fmt/format.h>

#include "commands.hpp"
#include "dape/error.hpp"

namespace {

int exit_code(dape::ErrorKind kind) {
  switch (kind) {
    case dape::ErrorKind::kConfig:
    case dape::ErrorKind::kShape:
    case dape::ErrorKind::kValidation:
    case dape::ErrorKind::kState:
    case dape::ErrorKind::kParse:
      return 2;
    case dape::ErrorKind::kClient:
      return 4;
    case dape::ErrorKind::kNumeric:
    case dape::ErrorKind::kIngestion:
    case dape::ErrorKind::kIo:
      return 3;
  }
  return 3;
}

void add_common(CLI::App* sub, dape::cli::CommonArgs& c) {
  sub->add_option("-c,--config", c.config_file, "JSON run config");
  sub->add_option("--set", c.overrides, "Override a config field, e.g. --set train.stage1.steps=10");
}

}  // namespace

int main(int argc, char** argv) {
  using namespace dape::cli;
  CLI::App app{"Dual-stage parameter-efficient fine-tuning for text-guided video editing"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Fine-tune norm sites and adapters on one video");
  add_common(t, train.common);
  t->add_option("--manifest", train.manifest, "Manifest holding the video")->required();
  t->add_option("--video", train.video, "Video id")->required();
  t->add_option("--caption", train.caption, "Caption (defaults to the manifest caption)");
  t->add_option("--mode", train.mode, "dual-stage or one-stage");
  t->add_option("--placement", train.placement, "Adapter blocks, e.g. 5 or 1,2,6,7");
  t->add_option("-o,--out", train.out, "Run directory")->required();

  EditArgs edit;
  auto* e = app.add_subcommand("edit", "Invert a video and resample it under an edit prompt");
  add_common(e, edit.common);
  e->add_option("--manifest", edit.manifest)->required();
  e->add_option("--video", edit.video)->required();
  e->add_option("--prompt", edit.prompt, "Edit prompt")->required();
  e->add_option("--source-caption", edit.source_caption);
  e->add_option("--checkpoint", edit.checkpoint, "PEFT checkpoint from train");
  e->add_option("-o,--out", edit.out)->required();

  EvaluateArgs eval;
  auto* v = app.add_subcommand("evaluate", "Score edited videos against their sources");
  add_common(v, eval.common);
  v->add_option("--source", eval.source, "Source frame directory");
  v->add_option("--edited", eval.edited, "Edited frame directory");
  v->add_option("--prompt", eval.prompt, "Edit prompt");
  v->add_option("--pairs", eval.pairs, "JSONL with {source, edited, prompt} per line");
  v->add_option("--manifest", eval.manifest, "Manifest for precomputed flow files");
  v->add_option("--fps", eval.fps);
  v->add_option("--workers", eval.workers, "Parallel pairs");
  v->add_option("-o,--out", eval.out)->required();

  SweepArgs sweep;
  auto* s = app.add_subcommand("sweep-placement", "Compare adapter placements from one stage-1 checkpoint");
  add_common(s, sweep.common);
  s->add_option("--manifest", sweep.manifest)->required();
  s->add_option("--video", sweep.video)->required();
  s->add_option("--caption", sweep.caption);
  s->add_option("--prompt", sweep.prompt, "Edit prompt (defaults to the caption)");
  s->add_option("--placements", sweep.placements, "Semicolon separated, e.g. \"1-7;5\"");
  s->add_option("-o,--out", sweep.out)->required();

  CurateArgs curate;
  auto* c = app.add_subcommand("curate", "Standardize, filter and annotate a directory of videos");
  add_common(c, curate.common);
  c->add_option("--input", curate.input, "Directory with one frame directory per video")->required();
  c->add_option("--fps", curate.fps);
  c->add_option("--workers", curate.workers);
  c->add_option("-o,--out", curate.out)->required();

  ReportArgs report;
  auto* r = app.add_subcommand("report", "Aggregate metric reports into a summary table");
  r->add_option("inputs", report.inputs, "reports.jsonl files")->required();
  r->add_option("-o,--out", report.out);

  ReviewArgs review;
  auto* rv = app.add_subcommand("review", "Set the manual review status of a manifest record");
  rv->add_option("--manifest", review.manifest)->required();
  rv->add_option("--video", review.video)->required();
  rv->add_option("--status", review.status, "pending, approved or rejected")->required();
  rv->add_option("-o,--out", review.out, "Manifest to write")->required();

  SynthArgs synth;
  auto* sy = app.add_subcommand("synth", "Write synthetic data: toy (8-frame clip + manifest) or corpus");
  sy->add_option("kind", synth.kind)->required();
  sy->add_option("-o,--out", synth.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int rc = app.exit(err);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*t) cmd_train(train);
    if (*e) cmd_edit(edit);
    if (*v) cmd_evaluate(eval);
    if (*s) cmd_sweep_placement(sweep);
    if (*c) cmd_curate(curate);
    if (*r) cmd_report(report);
    if (*rv) cmd_review(review);
    if (*sy) cmd_synth(synth);
  } catch (const dape::Error& err) {
    fmt::print(stderr, "error [{}]: {}\n", dape::to_string(err.kind()), err.what());
    return exit_code(err.kind());
  } catch (const std::exception& err) {
    fmt::print(stderr, "error: {}\n", err.what());
    return 3;
  }
  return 0;
}

#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fmt/format.h>
#include <fstream>
#include <mutex>
#include <thread>

#include "dape/annotation.hpp"
#include "dape/checkpoint.hpp"
#include "dape/error.hpp"
#include "dape/frame_io.hpp"
#include "dape/hashing.hpp"
#include "dape/manifest.hpp"
#include "dape/synthetic.hpp"

namespace dape::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

RunConfig load(const CommonArgs& c, std::vector<std::string> extra = {}) {
  std::vector<std::string> all = c.overrides;
  // Dedicated flags win over --set.
  all.insert(all.end(), extra.begin(), extra.end());
  return load_run_config(c.config_file, all);
}

struct LoadedVideo {
  DatasetRecord record;
  VideoClip clip;
};

LoadedVideo load_video(const fs::path& manifest, const std::string& id) {
  const auto records = read_manifest(manifest);
  auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.id == id; });
  if (it == records.end()) throw ValidationError("video '" + id + "' is not in manifest " + manifest.string());
  const fs::path dir = manifest.parent_path() / it->frames_dir;
  VideoClip clip = read_frame_dir(dir, id, it->fps > 0.0 ? it->fps : 8.0);
  return {*it, std::move(clip)};
}

std::unique_ptr<FrameEmbedder> make_embedder(const RunConfig& cfg) {
  if (cfg.metrics.embedder == "http") {
    return std::make_unique<HttpFrameEmbedder>(cfg.metrics.embedder_http, cfg.metrics.embed_dim);
  }
  return std::make_unique<StubFrameEmbedder>(cfg.metrics.embed_dim, cfg.seed);
}

std::unique_ptr<FlowBackend> make_flow(const RunConfig& cfg, const fs::path& manifest) {
  if (cfg.metrics.flow != "precomputed") return make_flow_backend(cfg.metrics.flow);
  if (manifest.empty()) throw ConfigError("precomputed flow needs --manifest declaring flow_files");
  std::map<std::string, std::vector<fs::path>> files;
  for (const auto& r : read_manifest(manifest)) {
    auto& v = files[r.id];
    for (const auto& f : r.flow_files) v.push_back(manifest.parent_path() / f);
  }
  return std::make_unique<PrecomputedFlow>(std::move(files));
}

std::unique_ptr<AnnotationClient> make_annotation_client(const RunConfig& cfg) {
  if (cfg.dataset.annotation_client == "http") {
    return std::make_unique<HttpAnnotationClient>(cfg.dataset.annotation_http);
  }
  return std::make_unique<StubAnnotationClient>();
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t n, int workers, Fn fn) {
  if (workers < 1) throw ConfigError("--workers must be at least 1");
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(workers), std::max<std::size_t>(n, 1));
  if (count <= 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < count; ++i) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

void write_reports(const fs::path& path, const std::vector<MetricReport>& reports) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : reports) out << to_json(r).dump() << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

std::string stage_report_name(TrainingStage s) { return std::string(to_string(s)) + "_report.jsonl"; }

void print_stage(const TrainReport& r) {
  fmt::print("{}: {} steps, loss {:.5f} -> {:.5f} (first/last decile), {:.1f}s, checksum {}\n", to_string(r.stage),
             r.losses.size(), r.head_mean(), r.tail_mean(), r.wall_clock_seconds, hex64(r.checksum));
}

}  // namespace

std::vector<PlacementSpec> parse_placement_list(const std::string& text) {
  std::vector<PlacementSpec> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto semi = text.find(';', start);
    const std::string item = text.substr(start, semi == std::string::npos ? std::string::npos : semi - start);
    if (item.find_first_not_of(' ') != std::string::npos) out.push_back(PlacementSpec::parse(item));
    if (semi == std::string::npos) break;
    start = semi + 1;
  }
  if (out.empty()) throw ValidationError("placement list is empty");
  return out;
}

void cmd_train(const TrainArgs& o) {
  std::vector<std::string> extra;
  if (o.mode) extra.push_back("train.mode=" + *o.mode);
  if (o.placement) extra.push_back("peft.placement=" + *o.placement);
  const RunConfig cfg = load(o.common, extra);
  require(!o.out.empty(), "train needs --out");
  const auto [record, clip] = load_video(o.manifest, o.video);
  const std::string caption = o.caption.empty() ? record.caption : o.caption;
  fs::create_directories(o.out);
  write_resolved_config(cfg, o.out);

  UNetModel model = build_unet(cfg.backbone);
  fmt::print("backbone: {} parameters, config {}\n", model.parameter_count(), cfg.hash());
  const HashTextEncoder encoder = default_text_encoder(cfg.backbone);
  inject_norm_tuning(model, cfg.peft);
  std::vector<TrainReport> reports;
  if (cfg.mode == TrainMode::kDualStage) {
    reports.push_back(run_stage(model, cfg.stage1, clip, caption, encoder));
    print_stage(reports.back());
    inject_adapters(model, cfg.placement, cfg.peft);
    reports.push_back(run_stage(model, cfg.stage2, clip, caption, encoder));
    print_stage(reports.back());
  } else {
    inject_adapters(model, cfg.placement, cfg.peft);
    reports.push_back(run_stage(model, cfg.one_stage, clip, caption, encoder));
    print_stage(reports.back());
  }
  for (const auto& r : reports) write_train_report(o.out / stage_report_name(r.stage), r);
  save_peft_checkpoint(o.out / "checkpoint.safetensors", model, cfg.peft, cfg.hash());
  fmt::print("checkpoint: {}\n", (o.out / "checkpoint.safetensors").string());
}

void cmd_edit(const EditArgs& o) {
  const RunConfig cfg = load(o.common);
  require(!o.out.empty(), "edit needs --out");
  require(!o.prompt.empty(), "edit needs --prompt");
  const auto [record, clip] = load_video(o.manifest, o.video);
  const std::string source_caption = o.source_caption.empty() ? record.caption : o.source_caption;

  UNetModel model = build_unet(cfg.backbone);
  std::string ckpt_hash = "none";
  if (!o.checkpoint.empty()) {
    load_peft_checkpoint(o.checkpoint, model);
    ckpt_hash = file_hash(o.checkpoint);
  }
  const VideoClip edited = edit_video(model, clip, source_caption, o.prompt, cfg.sampler);
  fs::create_directories(o.out);
  write_resolved_config(cfg, o.out);
  write_frame_dir(edited, o.out / "frames");
  const json meta = {{"video", o.video},
                     {"source_caption", source_caption},
                     {"prompt", o.prompt},
                     {"seed", cfg.seed},
                     {"config_hash", cfg.hash()},
                     {"checkpoint_hash", ckpt_hash},
                     {"num_steps", cfg.sampler.num_steps},
                     {"guidance_scale", cfg.sampler.guidance_scale},
                     {"frames", edited.frames()}};
  write_text(o.out / "run.json", meta.dump(2) + "\n");
  fmt::print("edited {} frames -> {}\n", edited.frames(), (o.out / "frames").string());
}

void cmd_evaluate(const EvaluateArgs& o) {
  const RunConfig cfg = load(o.common);
  require(!o.out.empty(), "evaluate needs --out");
  struct Pair {
    fs::path source, edited;
    std::string source_id, edited_id, prompt;
  };
  std::vector<Pair> pairs;
  if (!o.pairs.empty()) {
    std::ifstream in(o.pairs);
    if (!in) throw IoError("cannot open pairs file " + o.pairs.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const json j = json::parse(line);
        Pair p{o.pairs.parent_path() / j.at("source").get<std::string>(),
               o.pairs.parent_path() / j.at("edited").get<std::string>(), "", "",
               j.at("prompt").get<std::string>()};
        p.source_id = j.value("source_id", p.source.filename().string());
        p.edited_id = j.value("edited_id", p.edited.filename().string());
        pairs.push_back(std::move(p));
      } catch (const json::exception& e) {
        throw ParseError(std::string("bad pair record: ") + e.what(), lineno);
      }
    }
  } else {
    require(!o.source.empty() && !o.edited.empty(), "evaluate needs --source and --edited, or --pairs");
    pairs.push_back({o.source, o.edited, o.source.filename().string(), o.edited.filename().string(), o.prompt});
  }
  require(!pairs.empty(), "no pairs to evaluate");

  const auto embedder = make_embedder(cfg);
  const auto flow = make_flow(cfg, o.manifest);
  std::vector<MetricReport> reports(pairs.size());
  parallel_for(pairs.size(), o.workers, [&](std::size_t i) {
    const Pair& p = pairs[i];
    const VideoClip source = read_frame_dir(p.source, p.source_id, o.fps);
    const VideoClip edited = read_frame_dir(p.edited, p.edited_id, o.fps);
    dape::EvaluateOptions opts;
    opts.pair_mode = cfg.metrics.pair_mode;
    opts.config_hash = cfg.hash();
    reports[i] = evaluate(source, edited, p.prompt, *embedder, *flow, opts);
  });
  const MetricReport summary = aggregate(reports);
  fs::create_directories(o.out);
  write_resolved_config(cfg, o.out);
  write_reports(o.out / "reports.jsonl", reports);
  const std::string table = render_table(reports, summary);
  write_text(o.out / "summary.txt", table);
  fmt::print("{}", table);
}

void cmd_sweep_placement(const SweepArgs& o) {
  const RunConfig cfg = load(o.common);
  require(!o.out.empty(), "sweep-placement needs --out");
  const auto placements = o.placements ? parse_placement_list(*o.placements) : ablation_placements();
  const auto [record, clip] = load_video(o.manifest, o.video);
  const std::string caption = o.caption.empty() ? record.caption : o.caption;
  const std::string prompt = o.prompt.empty() ? caption : o.prompt;
  fs::create_directories(o.out);
  write_resolved_config(cfg, o.out);
  const HashTextEncoder encoder = default_text_encoder(cfg.backbone);

  const fs::path stage1_ckpt = o.out / "stage1.safetensors";
  {
    UNetModel model = build_unet(cfg.backbone);
    inject_norm_tuning(model, cfg.peft);
    const TrainReport r1 = run_stage(model, cfg.stage1, clip, caption, encoder);
    print_stage(r1);
    write_train_report(o.out / stage_report_name(r1.stage), r1);
    save_peft_checkpoint(stage1_ckpt, model, cfg.peft, cfg.hash());
  }

  const auto embedder = make_embedder(cfg);
  const auto flow = make_flow(cfg, o.manifest);
  std::vector<MetricReport> rows;
  for (const auto& placement : placements) {
    UNetModel model = build_unet(cfg.backbone);
    load_peft_checkpoint(stage1_ckpt, model);
    inject_adapters(model, placement, cfg.peft);
    const TrainReport r2 = run_stage(model, cfg.stage2, clip, caption, encoder);
    const std::string label = placement.to_string();
    const fs::path dir = o.out / ("placement_" + label);
    fs::create_directories(dir);
    write_train_report(dir / stage_report_name(r2.stage), r2);
    save_peft_checkpoint(dir / "checkpoint.safetensors", model, cfg.peft, cfg.hash());
    const VideoClip edited = edit_video(model, clip, caption, prompt, cfg.sampler, encoder);
    dape::EvaluateOptions opts;
    opts.pair_mode = cfg.metrics.pair_mode;
    opts.config_hash = cfg.hash();
    opts.label = label;
    rows.push_back(evaluate(clip, edited, prompt, *embedder, *flow, opts));
    fmt::print("placement {}: stage2 loss {:.5f} -> {:.5f}\n", label, r2.head_mean(), r2.tail_mean());
  }
  write_reports(o.out / "sweep.jsonl", rows);
  const std::string table = render_table(rows);
  write_text(o.out / "sweep.txt", table);
  fmt::print("{}", table);
}

void cmd_curate(const CurateArgs& o) {
  const RunConfig cfg = load(o.common);
  require(!o.out.empty(), "curate needs --out");
  if (!fs::is_directory(o.input)) throw ValidationError("curate input is not a directory: " + o.input.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(o.input)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  const auto flow = make_flow_backend(cfg.metrics.flow == "zero" ? "zero" : "block-matching");
  const auto client = make_annotation_client(cfg);
  fs::create_directories(o.out);
  write_resolved_config(cfg, o.out);

  std::vector<CurationOutcome> outcomes(dirs.size());
  parallel_for(dirs.size(), o.workers, [&](std::size_t i) {
    const VideoClip video = read_frame_dir(dirs[i], dirs[i].filename().string(), o.fps);
    CurationOutcome out = curate_clip(video, cfg.dataset.curation, *flow, *client);
    if (out.clip) {
      out.record->frames_dir = "frames/" + out.id;
      write_frame_dir(*out.clip, o.out / out.record->frames_dir);
      out.clip.reset();
    }
    outcomes[i] = std::move(out);
  });

  std::vector<DatasetRecord> records;
  std::string log;
  for (const auto& out : outcomes) {
    const bool kept = out.record.has_value();
    log += json{{"id", out.id}, {"kept", kept}, {"rejected_at", out.rejected_at}, {"reason", out.reason}}.dump() +
           '\n';
    fmt::print("{}: {}\n", out.id, kept ? "kept" : out.rejected_at + " (" + out.reason + ")");
    if (kept) records.push_back(*out.record);
  }
  write_manifest(o.out / "manifest.jsonl", records);
  write_text(o.out / "curation_log.jsonl", log);
  fmt::print("{} of {} videos kept\n", records.size(), outcomes.size());
}

void cmd_report(const ReportArgs& o) {
  require(!o.inputs.empty(), "report needs at least one input");
  std::vector<MetricReport> reports;
  for (const auto& path : o.inputs) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        reports.push_back(metric_report_from_json(json::parse(line)));
      } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what(), lineno);
      }
    }
  }
  const MetricReport summary = aggregate(reports);
  const std::string table = render_table(reports, summary);
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_reports(o.out / "summary.jsonl", {summary});
    write_text(o.out / "summary.txt", table);
  }
  fmt::print("{}", table);
}

void cmd_review(const ReviewArgs& o) {
  require(!o.out.empty(), "review needs --out");
  auto records = read_manifest(o.manifest);
  auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.id == o.video; });
  if (it == records.end()) throw ValidationError("video '" + o.video + "' is not in the manifest");
  it->review_status = parse_review_status(o.status);
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  write_manifest(o.out, records);
  fmt::print("{}: review_status = {}\n", o.video, to_string(it->review_status));
}

void cmd_synth(const SynthArgs& o) {
  require(!o.out.empty(), "synth needs --out");
  if (o.kind == "toy") {
    const VideoClip clip = synthetic_toy_clip(8, 16, 3, 0);
    write_frame_dir(clip, o.out / "frames" / clip.id());
    DatasetRecord r;
    r.id = clip.id();
    r.caption = "a bright ball drifting over a rainbow gradient";
    r.subject = Subject::kArtifact;
    r.background = Background::kBlurOrBlank;
    r.event = Event::kDocumentary;
    r.prompts = generate_prompts(StubAnnotationClient(), r);
    r.provenance = "synthetic";
    r.frames_dir = "frames/" + clip.id();
    r.frames = clip.frames();
    r.height = clip.height();
    r.width = clip.width();
    r.fps = clip.fps();
    write_manifest(o.out / "manifest.jsonl", {r});
    fmt::print("wrote {} frames and manifest to {}\n", clip.frames(), o.out.string());
  } else if (o.kind == "corpus") {
    for (const auto& clip : synthetic_curation_corpus()) {
      write_frame_dir(clip, o.out / clip.id());
      fmt::print("{}: {} frames {}x{}\n", clip.id(), clip.frames(), clip.width(), clip.height());
    }
  } else {
    throw ValidationError("synth kind must be toy or corpus");
  }
}

}  // namespace dape::cli

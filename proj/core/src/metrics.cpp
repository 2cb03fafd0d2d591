#include "dape/metrics.hpp"

#include <cmath>
#include <fmt/format.h>
#include <random>

#include "dape/error.hpp"
#include "dape/frame_io.hpp"
#include "dape/hashing.hpp"
#include "dape/text_encoder.hpp"

namespace dape {

namespace {

constexpr std::size_t kPoolGrid = 8;

std::vector<double> pooled_features(const VideoClip& clip, std::size_t f) {
  const std::size_t h = clip.height(), w = clip.width(), c = clip.channels();
  std::vector<double> feats(kPoolGrid * kPoolGrid * c + 1, 0.0);
  for (std::size_t gy = 0; gy < kPoolGrid; ++gy) {
    const std::size_t y0 = gy * h / kPoolGrid, y1 = std::max(y0 + 1, (gy + 1) * h / kPoolGrid);
    for (std::size_t gx = 0; gx < kPoolGrid; ++gx) {
      const std::size_t x0 = gx * w / kPoolGrid, x1 = std::max(x0 + 1, (gx + 1) * w / kPoolGrid);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t y = y0; y < y1; ++y)
          for (std::size_t x = x0; x < x1; ++x) s += clip.at(f, y, x, ch);
        feats[(gy * kPoolGrid + gx) * c + ch] = s / static_cast<double>((y1 - y0) * (x1 - x0));
      }
    }
  }
  feats.back() = 1.0;
  return feats;
}

std::vector<double> unit(std::vector<double> v, const std::string& what) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("zero-norm or non-finite embedding for " + what);
  for (double& x : v) x /= n;
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("embedding dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<std::vector<double>> unit_frame_embeddings(const FrameEmbedder& embedder, const VideoClip& clip) {
  std::vector<std::vector<double>> out;
  out.reserve(clip.frames());
  for (std::size_t f = 0; f < clip.frames(); ++f) {
    out.push_back(unit(embedder.embed_frame(clip, f), fmt::format("frame {} of '{}'", f, clip.id())));
  }
  return out;
}

}  // namespace

StubFrameEmbedder::StubFrameEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
}

std::vector<double> StubFrameEmbedder::embed_frame(const VideoClip& clip, std::size_t frame) const {
  const auto feats = pooled_features(clip, frame);
  std::mt19937_64 rng(seed_ ^ (0x51ed270b27d8a1f3ULL * (feats.size() + 1)));
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> out(dim_, 0.0);
  for (std::size_t j = 0; j < dim_; ++j) {
    for (double x : feats) out[j] += n(rng) * x;
  }
  return out;
}

std::vector<double> StubFrameEmbedder::embed_text(std::string_view text) const {
  std::vector<double> out(dim_, 0.0);
  for (const auto& word : tokenize_words(text)) {
    std::mt19937_64 rng(fnv1a(word, seed_ ^ 0x9e3779b97f4a7c15ULL));
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& x : out) x += n(rng);
  }
  return out;
}

HttpFrameEmbedder::HttpFrameEmbedder(HttpClientConfig config, std::size_t dim)
    : client_(std::move(config)), dim_(dim) {}

std::vector<double> HttpFrameEmbedder::parse(const nlohmann::json& reply) const {
  if (!reply.contains("embedding") || !reply["embedding"].is_array()) {
    throw ClientError("embedding service reply lacks an 'embedding' array", false);
  }
  auto v = reply["embedding"].get<std::vector<double>>();
  if (v.size() != dim_) {
    throw ClientError(fmt::format("embedding service returned dim {}, expected {}", v.size(), dim_), false);
  }
  return v;
}

std::vector<double> HttpFrameEmbedder::embed_frame(const VideoClip& clip, std::size_t frame) const {
  const auto png = encode_png(clip, frame);
  return parse(client_.post({{"image", base64_encode(png)}}));
}

std::vector<double> HttpFrameEmbedder::embed_text(std::string_view text) const {
  return parse(client_.post({{"text", std::string(text)}}));
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  return dot(unit(a, "first operand"), unit(b, "second operand"));
}

double clip_frame(const FrameEmbedder& embedder, const VideoClip& clip, FramePairMode mode) {
  const auto e = unit_frame_embeddings(embedder, clip);
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < e.size(); ++i) {
    const std::size_t last = mode == FramePairMode::kConsecutive ? i + 1 : e.size() - 1;
    for (std::size_t j = i + 1; j <= last; ++j) {
      s += dot(e[i], e[j]);
      ++n;
    }
  }
  return s / static_cast<double>(n);
}

InterpolationScores interpolation_metrics(const VideoClip& clip) {
  if (clip.frames() < 3) throw ValidationError("interpolation metrics need at least 3 frames");
  const std::size_t n = clip.frame_size();
  double abs_total = 0.0, psnr_total = 0.0;
  for (std::size_t t = 1; t + 1 < clip.frames(); ++t) {
    const auto prev = clip.frame(t - 1), cur = clip.frame(t), next = clip.frame(t + 1);
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double pred = 0.5 * (static_cast<double>(prev[i]) + static_cast<double>(next[i]));
      const double err = pred - static_cast<double>(cur[i]);
      abs_sum += std::abs(err);
      sq_sum += err * err;
    }
    abs_total += abs_sum;
    const double mse = sq_sum / static_cast<double>(n);
    psnr_total += mse == 0.0 ? kPsnrCap : std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
  }
  const auto interior = static_cast<double>(clip.frames() - 2);
  return {abs_total / (interior * static_cast<double>(n)), psnr_total / interior};
}

double warping_error(const std::vector<FlowField>& flows, const VideoClip& edited) {
  if (flows.size() + 1 != edited.frames()) throw ValidationError("need one flow field per consecutive frame pair");
  const std::size_t h = edited.height(), w = edited.width(), c = edited.channels();
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t t = 0; t + 1 < edited.frames(); ++t) {
    const FlowField& flow = flows[t];
    if (flow.height() != h || flow.width() != w) throw ValidationError("flow field size differs from the clip");
    double sq = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double sx = static_cast<double>(x) - flow.dx(y, x);
        const double sy = static_cast<double>(y) - flow.dy(y, x);
        if (!(sx >= 0.0 && sy >= 0.0 && sx <= static_cast<double>(w - 1) && sy <= static_cast<double>(h - 1))) continue;
        const auto x0 = static_cast<std::size_t>(std::floor(sx)), y0 = static_cast<std::size_t>(std::floor(sy));
        const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const double ax = sx - static_cast<double>(x0), ay = sy - static_cast<double>(y0);
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double v = (1 - ay) * ((1 - ax) * edited.at(t, y0, x0, ch) + ax * edited.at(t, y0, x1, ch)) +
                           ay * ((1 - ax) * edited.at(t, y1, x0, ch) + ax * edited.at(t, y1, x1, ch));
          const double d = v - static_cast<double>(edited.at(t + 1, y, x, ch));
          sq += d * d;
        }
        count += c;
      }
    }
    if (count == 0) continue;
    total += sq / static_cast<double>(count);
    ++pairs;
  }
  return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

double warping_error(const FlowBackend& flow, const VideoClip& source, const VideoClip& edited) {
  if (!source.same_geometry(edited)) throw ValidationError("source and edited clips differ in geometry");
  return warping_error(flow.flow_sequence(source), edited);
}

double clip_text(const FrameEmbedder& embedder, const VideoClip& clip, std::string_view prompt) {
  const auto text = unit(embedder.embed_text(prompt), "prompt '" + std::string(prompt) + "'");
  const auto frames = unit_frame_embeddings(embedder, clip);
  double s = 0.0;
  for (const auto& e : frames) s += dot(e, text);
  return s / static_cast<double>(frames.size());
}

const std::vector<MetricColumn>& metric_columns() {
  static const std::vector<MetricColumn> cols = {
      {"clip_f", "CLIP-F", -2, true},     {"int_err", "Int.Err", -2, false}, {"int_psnr", "Int.PSNR", 0, true},
      {"warp_err", "War.Err", -2, false}, {"clip_t", "CLIP-T", -2, true},
  };
  return cols;
}

double metric_value(const MetricReport& r, std::string_view key) {
  if (key == "clip_f") return r.clip_f;
  if (key == "int_err") return r.int_err;
  if (key == "int_psnr") return r.int_psnr;
  if (key == "warp_err") return r.warp_err;
  if (key == "clip_t") return r.clip_t;
  throw ValidationError("unknown metric '" + std::string(key) + "'");
}

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json scale = nlohmann::json::object();
  for (const auto& c : metric_columns()) scale[c.key] = c.scale_exponent;
  return {{"label", r.label},       {"source_id", r.source_id},   {"edited_id", r.edited_id},
          {"prompt", r.prompt},     {"clip_f", r.clip_f},         {"int_err", r.int_err},
          {"int_psnr", r.int_psnr}, {"warp_err", r.warp_err},     {"clip_t", r.clip_t},
          {"embedder", r.embedder}, {"flow_backend", r.flow_backend}, {"config_hash", r.config_hash},
          {"scale_exponent", scale}};
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
  try {
    MetricReport r;
    r.label = j.value("label", "");
    r.source_id = j.at("source_id").get<std::string>();
    r.edited_id = j.at("edited_id").get<std::string>();
    r.prompt = j.value("prompt", "");
    r.clip_f = j.at("clip_f").get<double>();
    r.int_err = j.at("int_err").get<double>();
    r.int_psnr = j.at("int_psnr").get<double>();
    r.warp_err = j.at("warp_err").get<double>();
    r.clip_t = j.at("clip_t").get<double>();
    r.embedder = j.value("embedder", "");
    r.flow_backend = j.value("flow_backend", "");
    r.config_hash = j.value("config_hash", "");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed metric report: ") + e.what());
  }
}

MetricReport evaluate(const VideoClip& source, const VideoClip& edited, const std::string& prompt,
                      const FrameEmbedder& embedder, const FlowBackend& flow, const EvaluateOptions& options) {
  if (!source.same_geometry(edited)) throw ValidationError("source and edited clips differ in geometry");
  MetricReport r;
  r.label = options.label;
  r.source_id = source.id();
  r.edited_id = edited.id();
  r.prompt = prompt;
  r.clip_f = clip_frame(embedder, edited, options.pair_mode);
  const auto interp = interpolation_metrics(edited);
  r.int_err = interp.int_err;
  r.int_psnr = interp.int_psnr;
  r.warp_err = warping_error(flow, source, edited);
  r.clip_t = clip_text(embedder, edited, prompt);
  r.embedder = embedder.name();
  r.flow_backend = flow.name();
  r.config_hash = options.config_hash;
  for (const auto& c : metric_columns()) {
    if (!std::isfinite(metric_value(r, c.key))) throw NumericError(std::string("non-finite ") + c.key);
  }
  return r;
}

MetricReport aggregate(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw ValidationError("cannot aggregate zero reports");
  MetricReport m;
  m.label = "mean";
  const auto n = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    m.clip_f += r.clip_f / n;
    m.int_err += r.int_err / n;
    m.int_psnr += r.int_psnr / n;
    m.warp_err += r.warp_err / n;
    m.clip_t += r.clip_t / n;
  }
  m.embedder = reports.front().embedder;
  m.flow_backend = reports.front().flow_backend;
  m.config_hash = reports.front().config_hash;
  return m;
}

std::string render_table(const std::vector<MetricReport>& rows, const std::optional<MetricReport>& summary) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"row"};
  for (const auto& c : metric_columns()) {
    header.push_back(c.scale_exponent == 0 ? std::string(c.header)
                                           : fmt::format("{} (x1e{})", c.header, c.scale_exponent));
  }
  cells.push_back(header);
  auto add = [&](const MetricReport& r) {
    std::vector<std::string> row{r.label.empty() ? r.edited_id : r.label};
    for (const auto& c : metric_columns()) {
      row.push_back(fmt::format("{:.2f}", metric_value(r, c.key) * std::pow(10.0, -c.scale_exponent)));
    }
    cells.push_back(std::move(row));
  };
  for (const auto& r : rows) add(r);
  if (summary) add(*summary);

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    if (summary && r + 1 == cells.size()) {
      std::size_t total = 0;
      for (auto wd : width) total += wd + 2;
      out += std::string(total - 2, '-') + '\n';
    }
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      out += i == 0 ? fmt::format("{:<{}}", cells[r][i], width[i]) : fmt::format("  {:>{}}", cells[r][i], width[i]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace dape

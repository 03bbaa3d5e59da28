#include "uqih/uq.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "fft.hpp"
#include "uqih/io.hpp"
#include "uqih/log.hpp"
#include "uqih/parallel.hpp"

namespace uqih::uq {

using detail::cplx;
using detail::Grid;
using nlohmann::json;

StackKind parse_stack_kind(const std::string& s) {
  if (s == "MC_DROPOUT") return StackKind::McDropout;
  if (s == "ENSEMBLE") return StackKind::Ensemble;
  throw InvalidArgument("unknown stack kind: " + s);
}

std::string to_string(StackKind k) { return k == StackKind::Ensemble ? "ENSEMBLE" : "MC_DROPOUT"; }

void SampleStack::validate() const {
  if (samples.size() < 2) {
    throw InvalidArgument(source_id + ": stack needs at least 2 samples, got " +
                          std::to_string(samples.size()));
  }
  for (const auto& s : samples) {
    if (!s.same_shape(samples.front())) {
      throw InvalidArgument(source_id + ": samples differ in shape");
    }
  }
  if (kind == StackKind::Ensemble) {
    if (model_ids.size() != samples.size()) {
      throw InvalidArgument(source_id + ": ensemble stack needs one model id per sample");
    }
    std::set<std::string> unique(model_ids.begin(), model_ids.end());
    if (unique.size() != model_ids.size()) {
      throw InvalidArgument(source_id + ": ensemble model ids must be unique");
    }
  }
}

Image pixelwise_std(const SampleStack& stack) {
  stack.validate();
  std::vector<Image> gray;
  gray.reserve(stack.samples.size());
  for (const auto& s : stack.samples) gray.push_back(channel_average(s));
  const auto m = static_cast<double>(gray.size());
  const std::size_t n = gray.front().size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (const auto& g : gray) mean += g.data()[i];
    mean /= m;
    double ss = 0.0;
    for (const auto& g : gray) {
      const double d = g.data()[i] - mean;
      ss += d * d;
    }
    out[i] = std::sqrt(ss / m);
  }
  return Image(gray.front().width(), gray.front().height(), 1, std::move(out),
               gray.front().range_hint());
}

double psd(const Image& sigma_map) {
  if (sigma_map.channels() != 1) throw InvalidArgument("psd expects a single-channel sigma map");
  double sum = 0.0;
  for (double v : sigma_map.data()) sum += v;
  return sum / static_cast<double>(sigma_map.size());
}

double mpsd(const std::vector<UncertaintyRecord>& records) {
  if (records.empty()) throw InvalidArgument("mpsd of an empty record list");
  double sum = 0.0;
  for (const auto& r : records) sum += r.psd;
  return sum / static_cast<double>(records.size());
}

namespace {

bool is_constant(const Image& img) { return img.min() == img.max(); }

Grid to_grid(const Image& img) {
  Grid g(img.height(), img.width());
  auto d = img.data();
  for (std::size_t i = 0; i < d.size(); ++i) g.v[i] = d[i];
  return g;
}

}  // namespace

Flagged<Shift> register_translation(const Image& moving, const Image& fixed, int max_shift) {
  if (!moving.same_shape(fixed)) throw InvalidArgument("register_translation: shape mismatch");
  if (max_shift < 0) throw InvalidArgument("max_shift must be non-negative");
  const Image m = channel_average(moving);
  const Image f = channel_average(fixed);
  if (is_constant(m) || is_constant(f)) return {{}, "constant image: registration undefined"};

  const Grid fm = detail::fft2(to_grid(m));
  const Grid ff = detail::fft2(to_grid(f));
  Grid cross(fm.rows, fm.cols);
  for (std::size_t i = 0; i < cross.v.size(); ++i) {
    const cplx p = ff.v[i] * std::conj(fm.v[i]);
    const double mag = std::abs(p);
    cross.v[i] = mag > 0.0 ? p / mag : cplx{};
  }
  const Grid surface = detail::ifft2(cross);

  const int h = f.height();
  const int w = f.width();
  const int ry = std::min(max_shift, h / 2);
  const int rx = std::min(max_shift, w / 2);
  Shift best{};
  double best_val = -1e300;
  int best_norm = 0;
  for (int dy = -ry; dy <= ry; ++dy) {
    for (int dx = -rx; dx <= rx; ++dx) {
      const double v = surface(((dy % h) + h) % h, ((dx % w) + w) % w).real();
      const int norm = dy * dy + dx * dx;
      // Candidates are visited in lexicographic order, so only a strictly
      // better value or an equal value with a smaller norm replaces the best.
      if (v > best_val || (v == best_val && norm < best_norm)) {
        best_val = v;
        best = {dy, dx};
        best_norm = norm;
      }
    }
  }
  return {best, std::nullopt};
}

SampleStack align_stack(const SampleStack& stack, const Image& reference, const AlignOptions& opts,
                        std::vector<std::string>* warnings) {
  stack.validate();
  if (opts.crop < 0) throw InvalidArgument("crop must be non-negative");
  const Image ref = channel_average(reference);
  if (ref.width() != stack.samples.front().width() || ref.height() != stack.samples.front().height()) {
    throw InvalidArgument(stack.source_id + ": reference and samples differ in size");
  }
  if (2 * opts.crop >= std::min(ref.width(), ref.height())) {
    throw InvalidArgument(stack.source_id + ": crop " + std::to_string(opts.crop) +
                          " too large for " + std::to_string(ref.width()) + "x" +
                          std::to_string(ref.height()));
  }
  SampleStack out = stack;
  for (auto& s : out.samples) {
    auto shift = register_translation(s, ref, opts.max_shift);
    if (shift.warning && warnings) warnings->push_back(stack.source_id + ": " + *shift.warning);
    s = crop_border(roll(s, shift.value.dy, shift.value.dx), opts.crop);
  }
  return out;
}

UncertaintyRecord evaluate_stack(const SampleStack& stack, const Image* reference,
                                 const AlignOptions* align, std::vector<std::string>* warnings) {
  SampleStack gray = stack;
  for (auto& s : gray.samples) s = channel_average(s);
  if (align) {
    if (!reference) throw InvalidArgument(stack.source_id + ": alignment requires a source image");
    gray = align_stack(gray, *reference, *align, warnings);
  }
  UncertaintyRecord rec;
  rec.source_id = stack.source_id;
  rec.sigma_map = pixelwise_std(gray);
  rec.psd = psd(rec.sigma_map);
  return rec;
}

StackManifest read_stack_manifest(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed stack manifest: " + e.what());
  }
  StackManifest out;
  const auto base = path.parent_path();
  try {
    out.kind = parse_stack_kind(doc.at("kind").get<std::string>());
    std::set<std::string> ids;
    for (const auto& s : doc.at("stacks")) {
      StackEntry e;
      e.source_id = s.at("source_id").get<std::string>();
      if (e.source_id.empty()) throw IoError(path.string() + ": empty source_id");
      if (!ids.insert(e.source_id).second) {
        throw IoError(path.string() + ": duplicate source_id " + e.source_id);
      }
      if (s.contains("source_path") && !s["source_path"].is_null()) {
        e.source_path = s["source_path"].get<std::string>();
        if (e.source_path.is_relative()) e.source_path = base / e.source_path;
      }
      for (const auto& p : s.at("sample_paths")) {
        std::filesystem::path sp = p.get<std::string>();
        e.sample_paths.push_back(sp.is_relative() ? base / sp : sp);
      }
      if (s.contains("model_ids")) {
        for (const auto& m : s["model_ids"]) e.model_ids.push_back(m.get<std::string>());
      }
      out.stacks.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed stack manifest: " + e.what());
  } catch (const InvalidArgument& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  return out;
}

void write_stack_manifest(const StackManifest& manifest, const std::filesystem::path& path) {
  const auto base = path.parent_path();
  json doc;
  doc["kind"] = to_string(manifest.kind);
  doc["stacks"] = json::array();
  for (const auto& s : manifest.stacks) {
    json item;
    item["source_id"] = s.source_id;
    if (!s.source_path.empty()) item["source_path"] = relative_to(s.source_path, base).generic_string();
    item["sample_paths"] = json::array();
    for (const auto& p : s.sample_paths) item["sample_paths"].push_back(relative_to(p, base).generic_string());
    if (!s.model_ids.empty()) item["model_ids"] = s.model_ids;
    doc["stacks"].push_back(std::move(item));
  }
  write_file(path, doc.dump(2) + "\n");
}

SampleStack load_stack(const StackEntry& entry, StackKind kind) {
  SampleStack stack;
  stack.source_id = entry.source_id;
  stack.kind = kind;
  stack.model_ids = entry.model_ids;
  for (const auto& p : entry.sample_paths) stack.samples.push_back(load_image(p));
  stack.validate();
  return stack;
}

EvaluateResult evaluate_stacks(const std::filesystem::path& manifest_path, const EvaluateOptions& opts) {
  const StackManifest manifest = read_stack_manifest(manifest_path);
  struct Slot {
    std::optional<UncertaintyRecord> record;
    std::string error;
    std::vector<std::string> warnings;
  };
  std::vector<Slot> slots(manifest.stacks.size());
  parallel_for(manifest.stacks.size(), [&](std::size_t i) {
    const auto& entry = manifest.stacks[i];
    try {
      const SampleStack stack = load_stack(entry, manifest.kind);
      if (opts.align) {
        if (entry.source_path.empty()) {
          throw InvalidArgument(entry.source_id + ": alignment requires source_path");
        }
        const Image source = load_image(entry.source_path);
        slots[i].record = evaluate_stack(stack, &source, &opts.align_opts, &slots[i].warnings);
      } else {
        slots[i].record = evaluate_stack(stack, nullptr, nullptr, &slots[i].warnings);
      }
      // Sigma maps are persisted as f32; the PSD is taken over the stored
      // values so it can be recomputed exactly from the written files.
      auto& rec = *slots[i].record;
      for (double& v : rec.sigma_map.mutable_data()) v = static_cast<float>(v);
      rec.psd = psd(rec.sigma_map);
    } catch (const Error& e) {
      slots[i].error = e.what();
    }
  });

  EvaluateResult out;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    for (auto& w : slots[i].warnings) out.warnings.push_back(std::move(w));
    if (slots[i].record) {
      out.records.push_back(std::move(*slots[i].record));
    } else {
      log::warn("skipping stack " + manifest.stacks[i].source_id + ": " + slots[i].error);
      out.skipped.push_back({manifest.stacks[i].source_id, slots[i].error});
    }
  }
  for (const auto& w : out.warnings) log::warn(w);
  if (out.records.empty()) throw InvalidArgument("no valid stacks in " + manifest_path.string());
  std::sort(out.records.begin(), out.records.end(),
            [](const auto& a, const auto& b) { return a.source_id < b.source_id; });
  out.mpsd = mpsd(out.records);
  return out;
}

void write_records(const EvaluateResult& result, const std::filesystem::path& out_dir) {
  std::string lines;
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    const auto& r = result.records[i];
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%05zu_", i);
    const std::filesystem::path rel = std::filesystem::path("sigma") / (prefix + sanitize_id(r.source_id) + ".raw");
    save_raw(r.sigma_map, out_dir / rel);
    const json line = {{"source_id", r.source_id}, {"psd", r.psd}, {"sigma_path", rel.generic_string()}};
    lines += line.dump() + "\n";
  }
  write_file(out_dir / "records.jsonl", lines);
  json summary = {{"mpsd", result.mpsd}, {"n_records", result.records.size()}};
  summary["skipped"] = json::array();
  for (const auto& s : result.skipped) {
    summary["skipped"].push_back({{"source_id", s.source_id}, {"message", s.message}});
  }
  write_file(out_dir / "mpsd.json", summary.dump(2) + "\n");
}

}  // namespace uqih::uq

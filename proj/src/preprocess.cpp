#include "uqih/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>

#include <nlohmann/json.hpp>

#include "uqih/io.hpp"
#include "uqih/log.hpp"
#include "uqih/parallel.hpp"

namespace uqih::preprocess {

using nlohmann::json;

std::optional<std::string> PatchSpec::validate() const {
  if (!(stride > 0 && stride <= patch_size && patch_size <= canvas)) {
    throw InvalidArgument("patch spec requires 0 < stride <= patch_size <= canvas");
  }
  if (!(fill_threshold > 0.0 && fill_threshold <= 1.0)) {
    throw InvalidArgument("fill_threshold must be in (0, 1]");
  }
  if ((canvas - patch_size) % stride != 0) {
    return "canvas - patch_size is not a multiple of stride; the last row/column of the "
           "canvas is not covered";
  }
  return std::nullopt;
}

std::string Patch::id() const {
  return parent_id + "_r" + std::to_string(row) + "_c" + std::to_string(col);
}

namespace {

void require_single_channel(const Image& img, const char* op) {
  if (img.channels() != 1) {
    throw InvalidArgument(std::string(op) + " expects a single-channel image");
  }
}

constexpr double kTieTolerance = 1e-12;

}  // namespace

Flagged<double> otsu_threshold(const Image& img, int bins) {
  require_single_channel(img, "otsu_threshold");
  if (bins < 2) throw InvalidArgument("otsu_threshold needs at least 2 bins");
  const double lo = img.min();
  const double hi = img.max();
  if (hi == lo) return {lo, "constant image: no valid Otsu split"};

  const double width = (hi - lo) / bins;
  std::vector<std::int64_t> hist(static_cast<std::size_t>(bins), 0);
  for (double v : img.data()) {
    const auto b = static_cast<std::int64_t>(std::floor((v - lo) / (hi - lo) * bins));
    ++hist[static_cast<std::size_t>(std::clamp<std::int64_t>(b, 0, bins - 1))];
  }
  const auto total = static_cast<double>(img.size());
  double total_mass = 0.0;
  for (int j = 0; j < bins; ++j) total_mass += static_cast<double>(hist[j]) * (lo + (j + 0.5) * width);

  int best_k = 1;
  double best = -1.0;
  std::int64_t n0 = 0;
  double mass0 = 0.0;
  for (int k = 1; k < bins; ++k) {
    n0 += hist[k - 1];
    mass0 += static_cast<double>(hist[k - 1]) * (lo + (k - 0.5) * width);
    const auto n1 = static_cast<std::int64_t>(img.size()) - n0;
    double between = 0.0;
    if (n0 > 0 && n1 > 0) {
      const double mu0 = mass0 / static_cast<double>(n0);
      const double mu1 = (total_mass - mass0) / static_cast<double>(n1);
      between = (static_cast<double>(n0) / total) * (static_cast<double>(n1) / total) *
                (mu0 - mu1) * (mu0 - mu1);
    }
    // Splits within roundoff of the best count as ties; the lowest edge wins.
    if (between > best + kTieTolerance * best) {
      best = between;
      best_k = k;
    }
  }
  return {lo + best_k * width, std::nullopt};
}

Flagged<Image> segment_foreground(const Image& img, const SegmentOptions& opts) {
  require_single_channel(img, "segment_foreground");
  const auto threshold = otsu_threshold(img, opts.bins);
  const int h = img.height();
  const int w = img.width();
  std::vector<std::uint8_t> mask(img.size());
  auto in = img.data();
  std::size_t fg_count = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    mask[i] = in[i] > threshold.value ? 1 : 0;
    fg_count += mask[i];
  }
  Image out = Image::zeros(w, h, 1, img.range_hint());
  if (fg_count == 0) return {std::move(out), "empty foreground after Otsu thresholding"};

  if (opts.keep_largest_component) {
    std::vector<int> label(mask.size(), 0);
    int best_label = 0;
    std::size_t best_size = 0;
    int next_label = 0;
    std::vector<std::size_t> stack;
    for (std::size_t seed = 0; seed < mask.size(); ++seed) {
      if (!mask[seed] || label[seed] != 0) continue;
      const int current = ++next_label;
      std::size_t size = 0;
      label[seed] = current;
      stack.push_back(seed);
      while (!stack.empty()) {
        const std::size_t p = stack.back();
        stack.pop_back();
        ++size;
        const int r = static_cast<int>(p / w);
        const int c = static_cast<int>(p % w);
        auto visit = [&](int rr, int cc) {
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) return;
          const std::size_t q = static_cast<std::size_t>(rr) * w + cc;
          if (mask[q] && label[q] == 0) {
            label[q] = current;
            stack.push_back(q);
          }
        };
        visit(r - 1, c);
        visit(r + 1, c);
        visit(r, c - 1);
        visit(r, c + 1);
      }
      if (size > best_size) {
        best_size = size;
        best_label = current;
      }
    }
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = label[i] == best_label ? 1 : 0;
  }
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) dst[i] = in[i];
  }
  return {std::move(out), threshold.warning};
}

std::vector<Patch> parse_patches(const Image& img, const PatchSpec& spec,
                                 const std::string& parent_id) {
  spec.validate();
  require_single_channel(img, "parse_patches");
  if (img.width() != spec.canvas || img.height() != spec.canvas) {
    throw InvalidArgument("parse_patches expects a " + std::to_string(spec.canvas) + "x" +
                          std::to_string(spec.canvas) + " image, got " +
                          std::to_string(img.width()) + "x" + std::to_string(img.height()));
  }
  const int n = spec.canvas;
  // Summed-area table of the strictly-positive indicator.
  std::vector<std::int64_t> sat(static_cast<std::size_t>(n + 1) * (n + 1), 0);
  auto at = [&](int r, int c) -> std::int64_t& {
    return sat[static_cast<std::size_t>(r) * (n + 1) + c];
  };
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      at(r + 1, c + 1) = (img.at(r, c) > 0.0 ? 1 : 0) + at(r, c + 1) + at(r + 1, c) - at(r, c);
    }
  }
  const int p = spec.patch_size;
  const double required = spec.fill_threshold * static_cast<double>(p) * p;
  std::vector<Patch> out;
  for (int r = 0; r + p <= n; r += spec.stride) {
    for (int c = 0; c + p <= n; c += spec.stride) {
      const std::int64_t filled = at(r + p, c + p) - at(r, c + p) - at(r + p, c) + at(r, c);
      if (static_cast<double>(filled) > required) {
        Image window = extract_window(img, r, c, p, p);
        window.set_range_hint(AmplitudeRange::unit());
        out.push_back({std::move(window), r, c, parent_id});
      }
    }
  }
  return out;
}

Flagged<Image> equalize_histogram(const Image& patch, int bins) {
  require_single_channel(patch, "equalize_histogram");
  if (bins < 2) throw InvalidArgument("equalize_histogram needs at least 2 bins");
  auto bin_of = [bins](double v) {
    const auto b = static_cast<std::int64_t>(std::floor(std::clamp(v, 0.0, 1.0) * bins));
    return static_cast<std::size_t>(std::min<std::int64_t>(b, bins - 1));
  };
  std::vector<std::int64_t> hist(static_cast<std::size_t>(bins), 0);
  for (double v : patch.data()) ++hist[bin_of(v)];
  std::vector<double> cdf(hist.size());
  std::int64_t running = 0;
  const auto total = static_cast<double>(patch.size());
  for (std::size_t b = 0; b < hist.size(); ++b) {
    running += hist[b];
    cdf[b] = static_cast<double>(running) / total;
  }
  std::vector<double> mapped(patch.size());
  auto in = patch.data();
  for (std::size_t i = 0; i < in.size(); ++i) mapped[i] = cdf[bin_of(in[i])];
  auto result = normalize_minmax(Image(patch.width(), patch.height(), 1, std::move(mapped)));
  if (result.warned()) result.warning = "constant patch: equalized to zeros";
  return result;
}

Image prepare_whole_image(const Image& img, const ImageMeta& meta, bool pre_segmented,
                          const PipelineOptions& opts, std::vector<std::string>* warnings) {
  auto note = [&](const std::optional<std::string>& w) {
    if (w && warnings) warnings->push_back(meta.source_id + ": " + *w);
  };
  auto normalized = normalize_minmax(channel_average(img));
  note(normalized.warning);
  // Inversion precedes segmentation so the background is dark for Otsu.
  Image x = invert_contrast(normalized.value, meta);
  if (!pre_segmented) {
    auto seg = segment_foreground(x, opts.segment);
    note(seg.warning);
    x = std::move(seg.value);
  }
  x = flip_horizontal(x, meta);
  auto renorm = normalize_minmax(x);
  note(renorm.warning);
  return pad_to(renorm.value, opts.spec.canvas, opts.spec.canvas);
}

PipelineResult run_pipeline(const std::filesystem::path& manifest, const PipelineOptions& opts,
                            const std::filesystem::path& out_dir) {
  if (auto w = opts.spec.validate()) log::warn(*w);
  const auto entries = read_image_manifest(manifest);

  struct PerImage {
    std::vector<PatchRecord> patches;
    std::vector<std::string> warnings;
    std::optional<std::string> error;
  };
  std::vector<PerImage> results(entries.size());
  fs::create_directories(out_dir / "patches");

  parallel_for(entries.size(), [&](std::size_t i) {
    const auto& entry = entries[i];
    auto& res = results[i];
    try {
      const Image whole = prepare_whole_image(load_image(entry.path), entry.meta(),
                                              entry.pre_segmented, opts, &res.warnings);
      char prefix[16];
      std::snprintf(prefix, sizeof prefix, "%05zu_", i);
      for (auto& patch : parse_patches(whole, opts.spec, entry.source_id)) {
        auto eq = equalize_histogram(patch.image);
        if (eq.warning) res.warnings.push_back(patch.id() + ": " + *eq.warning);
        const std::string id = patch.id();
        const fs::path rel = fs::path("patches") / (prefix + sanitize_id(id) + ".raw");
        save_raw(eq.value, out_dir / rel);
        res.patches.push_back({id, entry.source_id, patch.row, patch.col, rel});
      }
    } catch (const std::exception& e) {
      res.patches.clear();
      res.error = e.what();
    }
  });

  PipelineResult out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& res = results[i];
    for (auto& w : res.warnings) {
      log::warn(w);
      out.warnings.push_back(std::move(w));
    }
    if (res.error) {
      log::error(entries[i].source_id + ": " + *res.error);
      out.errors.push_back({entries[i].source_id, *res.error});
      continue;
    }
    for (auto& p : res.patches) out.patches.push_back(std::move(p));
  }

  json doc;
  doc["patches"] = json::array();
  for (const auto& p : out.patches) {
    doc["patches"].push_back({{"id", p.id},
                              {"parent_id", p.parent_id},
                              {"origin", {p.row, p.col}},
                              {"path", p.path.generic_string()}});
  }
  doc["errors"] = json::array();
  for (const auto& e : out.errors) {
    doc["errors"].push_back({{"source_id", e.source_id}, {"message", e.message}});
  }
  doc["spec"] = {{"patch_size", opts.spec.patch_size},
                 {"stride", opts.spec.stride},
                 {"fill_threshold", opts.spec.fill_threshold},
                 {"canvas", opts.spec.canvas},
                 {"largest_component", opts.segment.keep_largest_component}};
  write_file(out_dir / "patches.json", doc.dump(2) + "\n");
  return out;
}

}  // namespace uqih::preprocess

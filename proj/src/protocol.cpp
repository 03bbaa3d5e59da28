#include "uqih/protocol.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "uqih/io.hpp"
#include "uqih/log.hpp"
#include "uqih/parallel.hpp"
#include "uqih/rng.hpp"

namespace uqih::protocol {

using nlohmann::json;

void SweepConfig::validate() const {
  if (noise_levels.empty()) throw InvalidArgument("sweep needs at least one noise level");
  for (double l : noise_levels) {
    if (!std::isfinite(l)) throw InvalidArgument("noise levels must be finite");
  }
  if (noise_levels.front() < 0.0) throw InvalidArgument("noise levels must be non-negative");
  for (std::size_t i = 1; i < noise_levels.size(); ++i) {
    if (!(noise_levels[i] > noise_levels[i - 1])) {
      throw InvalidArgument("noise levels must be strictly increasing");
    }
  }
  if (crop < 0) throw InvalidArgument("crop must be non-negative");
}

std::uint64_t image_noise_seed(std::uint64_t seed, const std::string& image_id, double level) {
  return seed ^ mix64(fnv1a64(image_id) ^ mix64(std::bit_cast<std::uint64_t>(level)));
}

std::string format_number(double v) {
  if (v == 0.0) v = 0.0;  // drop the sign of -0
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string level_dir_name(double level) { return "level_" + format_number(level); }

std::vector<NoisyLevel> make_noisy_testsets(const std::filesystem::path& test_manifest,
                                            const SweepConfig& cfg,
                                            const std::filesystem::path& out_dir) {
  cfg.validate();
  const auto entries = read_image_manifest(test_manifest);
  std::vector<Image> originals(entries.size());
  parallel_for(entries.size(), [&](std::size_t i) { originals[i] = load_image(entries[i].path); });

  std::vector<NoisyLevel> out;
  for (double level : cfg.noise_levels) {
    const fs::path dir = out_dir / level_dir_name(level);
    fs::create_directories(dir);
    std::vector<ManifestEntry> level_entries(entries.size());
    parallel_for(entries.size(), [&](std::size_t i) {
      const auto seed = image_noise_seed(cfg.seed, entries[i].source_id, level);
      char prefix[16];
      std::snprintf(prefix, sizeof prefix, "%05zu_", i);
      const fs::path file = dir / (prefix + sanitize_id(entries[i].source_id) + ".raw");
      save_raw(add_gaussian_noise(originals[i], level, seed), file);
      level_entries[i] = entries[i];
      level_entries[i].path = file;
    });
    const fs::path manifest = dir / "manifest.json";
    write_image_manifest(level_entries, manifest);
    out.push_back({level, manifest});
  }
  return out;
}

namespace {

Image metric_ready(const Image& img) { return normalize_minmax(channel_average(img)).value; }

}  // namespace

LevelResult collect_level(const std::filesystem::path& stack_manifest, double noise_percent,
                          const TargetSet& target, const fid::EmbeddingProvider& provider,
                          const SweepConfig& cfg) {
  uq::EvaluateOptions opts;
  opts.align = cfg.align;
  opts.align_opts.crop = cfg.crop;
  const uq::EvaluateResult uq_result = uq::evaluate_stacks(stack_manifest, opts);

  const uq::StackManifest manifest = uq::read_stack_manifest(stack_manifest);
  std::vector<const uq::StackEntry*> kept;
  for (const auto& rec : uq_result.records) {
    const auto it = std::find_if(manifest.stacks.begin(), manifest.stacks.end(),
                                 [&](const auto& s) { return s.source_id == rec.source_id; });
    kept.push_back(&*it);
  }
  std::size_t members = 1;
  if (manifest.kind == uq::StackKind::Ensemble) {
    members = kept.front()->sample_paths.size();
    for (const auto* s : kept) {
      if (s->sample_paths.size() != members) {
        throw InvalidArgument("ensemble stacks disagree on the number of models");
      }
    }
  }

  TargetSet prepared_target = target;
  if (auto* images = std::get_if<std::vector<Image>>(&prepared_target)) {
    for (auto& img : *images) img = metric_ready(img);
  }

  double fid_sum = 0.0;
  for (std::size_t k = 0; k < members; ++k) {
    std::vector<Image> generated(kept.size());
    parallel_for(kept.size(), [&](std::size_t i) {
      generated[i] = metric_ready(load_image(kept[i]->sample_paths[k]));
    });
    fid_sum += fid::fid(prepared_target, fid::FidInput(std::move(generated)), &provider);
  }
  return {noise_percent, fid_sum / static_cast<double>(members), uq_result.mpsd,
          uq_result.records.size()};
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("pearson: series lengths differ");
  if (xs.size() < 2) throw InvalidArgument("pearson: need at least 2 points");
  const auto n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw InvalidArgument("correlation undefined for a constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> xs) {
  std::vector<std::size_t> order(xs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(xs.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidArgument("spearman: series lengths differ");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  return pearson(rx, ry);
}

CalibrationCurve build_curve(std::vector<LevelResult> levels) {
  if (levels.size() < 2) throw InvalidArgument("calibration curve needs at least 2 levels");
  std::sort(levels.begin(), levels.end(),
            [](const auto& a, const auto& b) { return a.noise_percent < b.noise_percent; });
  CalibrationCurve curve;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (i > 0 && levels[i].noise_percent == levels[i - 1].noise_percent) {
      throw InvalidArgument("duplicate noise level " + format_number(levels[i].noise_percent));
    }
    if (levels[i].n_images != levels.front().n_images) {
      throw InvalidArgument("levels disagree on the number of images");
    }
    curve.points.push_back({levels[i].noise_percent, levels[i].fid, levels[i].mpsd, levels[i].n_images});
  }
  std::vector<double> noise, fid_values, mpsd_values;
  for (const auto& p : curve.points) {
    noise.push_back(p.noise_percent);
    fid_values.push_back(p.fid);
    mpsd_values.push_back(p.mpsd);
  }
  auto attempt = [&](const char* name, std::optional<double>& slot, auto&& fn) {
    try {
      slot = fn();
    } catch (const InvalidArgument& e) {
      curve.correlation_errors[name] = e.what();
    }
  };
  attempt("pearson_fid_noise", curve.pearson_fid_noise, [&] { return pearson(noise, fid_values); });
  attempt("spearman_fid_noise", curve.spearman_fid_noise, [&] { return spearman(noise, fid_values); });
  attempt("pearson_fid_mpsd", curve.pearson_fid_mpsd, [&] { return pearson(fid_values, mpsd_values); });
  attempt("spearman_fid_mpsd", curve.spearman_fid_mpsd, [&] { return spearman(fid_values, mpsd_values); });
  for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
    if (!(curve.points[i + 1].fid > curve.points[i].fid)) curve.non_monotone_segments.push_back(i);
  }
  return curve;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

std::string curve_to_json(const CalibrationCurve& curve) {
  json doc;
  doc["points"] = json::array();
  for (const auto& p : curve.points) {
    doc["points"].push_back({{"noise_percent", p.noise_percent},
                             {"fid", p.fid},
                             {"mpsd", p.mpsd},
                             {"n_images", p.n_images}});
  }
  doc["pearson_fid_noise"] = optional_json(curve.pearson_fid_noise);
  doc["spearman_fid_noise"] = optional_json(curve.spearman_fid_noise);
  doc["pearson_fid_mpsd"] = optional_json(curve.pearson_fid_mpsd);
  doc["spearman_fid_mpsd"] = optional_json(curve.spearman_fid_mpsd);
  doc["correlation_errors"] = curve.correlation_errors;
  doc["non_monotone_segments"] = curve.non_monotone_segments;
  return doc.dump(2) + "\n";
}

CalibrationCurve curve_from_json(const std::string& text) {
  CalibrationCurve curve;
  try {
    const json doc = json::parse(text);
    for (const auto& p : doc.at("points")) {
      curve.points.push_back({p.at("noise_percent").get<double>(), p.at("fid").get<double>(),
                              p.at("mpsd").get<double>(), p.at("n_images").get<std::size_t>()});
    }
    curve.pearson_fid_noise = optional_from(doc.at("pearson_fid_noise"));
    curve.spearman_fid_noise = optional_from(doc.at("spearman_fid_noise"));
    curve.pearson_fid_mpsd = optional_from(doc.at("pearson_fid_mpsd"));
    curve.spearman_fid_mpsd = optional_from(doc.at("spearman_fid_mpsd"));
    if (doc.contains("correlation_errors")) {
      curve.correlation_errors = doc["correlation_errors"].get<std::map<std::string, std::string>>();
    }
    if (doc.contains("non_monotone_segments")) {
      curve.non_monotone_segments = doc["non_monotone_segments"].get<std::vector<std::size_t>>();
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed curve JSON: ") + e.what());
  }
  return curve;
}

std::string curve_to_csv(const CalibrationCurve& curve) {
  std::string out = "noise_percent,fid,mpsd,n_images\n";
  for (const auto& p : curve.points) {
    out += format_number(p.noise_percent) + "," + format_number(p.fid) + "," +
           format_number(p.mpsd) + "," + std::to_string(p.n_images) + "\n";
  }
  return out;
}

namespace {

std::string fmt_fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::pair<double, double> padded_range(std::span<const double> v) {
  double lo = *std::min_element(v.begin(), v.end());
  double hi = *std::max_element(v.begin(), v.end());
  if (hi == lo) {
    const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
    return {lo - pad, hi + pad};
  }
  const double pad = (hi - lo) * 0.08;
  return {lo - pad, hi + pad};
}

}  // namespace

std::string scatter_svg(const std::string& title, const std::string& x_label,
                        const std::string& y_label, std::span<const double> xs,
                        std::span<const double> ys, std::span<const std::string> labels) {
  if (xs.size() != ys.size() || xs.empty()) throw InvalidArgument("scatter_svg: bad series");
  constexpr double W = 560, H = 400, L = 80, R = 30, T = 40, B = 60;
  const auto [x0, x1] = padded_range(xs);
  const auto [y0, y1] = padded_range(ys);
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"560\" height=\"400\" viewBox=\"0 0 560 400\">\n";
  s += "<rect width=\"560\" height=\"400\" fill=\"white\"/>\n";
  s += "<text x=\"280\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" +
       xml_escape(title) + "</text>\n";
  s += "<line x1=\"" + fmt_fixed(L) + "\" y1=\"" + fmt_fixed(H - B) + "\" x2=\"" + fmt_fixed(W - R) +
       "\" y2=\"" + fmt_fixed(H - B) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fmt_fixed(L) + "\" y1=\"" + fmt_fixed(T) + "\" x2=\"" + fmt_fixed(L) +
       "\" y2=\"" + fmt_fixed(H - B) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    s += "<line x1=\"" + fmt_fixed(px(xv)) + "\" y1=\"" + fmt_fixed(H - B) + "\" x2=\"" +
         fmt_fixed(px(xv)) + "\" y2=\"" + fmt_fixed(H - B + 5) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fmt_fixed(px(xv)) + "\" y=\"" + fmt_fixed(H - B + 20) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + fmt_tick(xv) +
         "</text>\n";
    s += "<line x1=\"" + fmt_fixed(L - 5) + "\" y1=\"" + fmt_fixed(py(yv)) + "\" x2=\"" +
         fmt_fixed(L) + "\" y2=\"" + fmt_fixed(py(yv)) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + fmt_fixed(L - 8) + "\" y=\"" + fmt_fixed(py(yv) + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt_tick(yv) +
         "</text>\n";
  }
  s += "<text x=\"" + fmt_fixed((L + W - R) / 2) + "\" y=\"" + fmt_fixed(H - 15) +
       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + xml_escape(x_label) +
       "</text>\n";
  s += "<text x=\"20\" y=\"" + fmt_fixed((T + H - B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 20 " +
       fmt_fixed((T + H - B) / 2) + ")\" font-family=\"sans-serif\" font-size=\"13\">" +
       xml_escape(y_label) + "</text>\n";
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    s += "<line x1=\"" + fmt_fixed(px(xs[i])) + "\" y1=\"" + fmt_fixed(py(ys[i])) + "\" x2=\"" +
         fmt_fixed(px(xs[i + 1])) + "\" y2=\"" + fmt_fixed(py(ys[i + 1])) +
         "\" stroke=\"#9ab\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    s += "<circle cx=\"" + fmt_fixed(px(xs[i])) + "\" cy=\"" + fmt_fixed(py(ys[i])) +
         "\" r=\"4\" fill=\"#1f5fa8\"/>\n";
    if (i < labels.size() && !labels[i].empty()) {
      s += "<text x=\"" + fmt_fixed(px(xs[i]) + 6) + "\" y=\"" + fmt_fixed(py(ys[i]) - 6) +
           "\" font-family=\"sans-serif\" font-size=\"10\">" + xml_escape(labels[i]) + "</text>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

std::vector<std::filesystem::path> emit_report(const CalibrationCurve& curve,
                                               const std::filesystem::path& out_dir) {
  if (curve.points.empty()) throw InvalidArgument("cannot report an empty curve");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create report directory " + out_dir.string() + ": " + ec.message());

  std::vector<double> noise, fid_values, mpsd_values;
  std::vector<std::string> labels;
  for (const auto& p : curve.points) {
    noise.push_back(p.noise_percent);
    fid_values.push_back(p.fid);
    mpsd_values.push_back(p.mpsd);
    labels.push_back(format_number(p.noise_percent) + "%");
  }
  const std::vector<std::filesystem::path> files{out_dir / "curve.json", out_dir / "curve.csv",
                                                 out_dir / "fid_vs_noise.svg",
                                                 out_dir / "fid_vs_mpsd.svg"};
  write_file(files[0], curve_to_json(curve));
  write_file(files[1], curve_to_csv(curve));
  write_file(files[2], scatter_svg("FID vs added noise", "added noise (% of max amplitude)", "FID",
                                   noise, fid_values, {}));
  write_file(files[3], scatter_svg("FID vs mPSD", "mPSD", "FID", mpsd_values, fid_values, labels));
  return files;
}

}  // namespace uqih::protocol

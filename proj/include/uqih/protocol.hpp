#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uqih/fid.hpp"
#include "uqih/uq.hpp"

namespace uqih::protocol {

struct SweepConfig {
  std::vector<double> noise_levels{0, 5, 10, 15, 20};
  std::uint64_t seed = 0;
  std::string embedding_provider = "toy-8x8";
  bool align = false;
  int crop = 5;

  /// Throws InvalidArgument unless levels are non-empty, finite, strictly
  /// increasing and start at >= 0.
  void validate() const;
};

/// Deterministic per-image noise seed: seed XOR mix(fnv1a(image_id), level).
std::uint64_t image_noise_seed(std::uint64_t seed, const std::string& image_id, double level);

/// Directory name for a noise level, e.g. "level_5" or "level_2.5".
std::string level_dir_name(double level);

/// Shortest round-trip decimal text for a double.
std::string format_number(double v);

struct NoisyLevel {
  double level = 0.0;
  std::filesystem::path manifest;
};

/// Writes, for each level, out_dir/<level_dir>/ with one raw-tensor image per
/// input and a manifest.json in the image-manifest schema.
std::vector<NoisyLevel> make_noisy_testsets(const std::filesystem::path& test_manifest,
                                            const SweepConfig& cfg,
                                            const std::filesystem::path& out_dir);

struct LevelResult {
  double noise_percent = 0.0;
  double fid = 0.0;
  double mpsd = 0.0;
  std::size_t n_images = 0;
};

/// Target domain held fixed across levels: images (embedded by the provider)
/// or precomputed embeddings.
using TargetSet = fid::FidInput;

/// FID and mPSD for one level's translated stacks.
///
/// mPSD comes from uq::evaluate_stacks. FID compares the min-max normalised
/// translated outputs against the target set: MC-dropout levels use the
/// first sample of every stack; ensemble levels average the FID of each
/// model's outputs.
LevelResult collect_level(const std::filesystem::path& stack_manifest, double noise_percent,
                          const TargetSet& target, const fid::EmbeddingProvider& provider,
                          const SweepConfig& cfg);

/// Sample Pearson correlation. Throws InvalidArgument on length mismatch,
/// fewer than 2 points or a constant series.
double pearson(std::span<const double> xs, std::span<const double> ys);

/// Average (fractional) ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> xs);

/// Pearson correlation of average ranks.
double spearman(std::span<const double> xs, std::span<const double> ys);

struct CurvePoint {
  double noise_percent = 0.0;
  double fid = 0.0;
  double mpsd = 0.0;
  std::size_t n_images = 0;
};

struct CalibrationCurve {
  std::vector<CurvePoint> points;
  std::optional<double> pearson_fid_noise;
  std::optional<double> spearman_fid_noise;
  std::optional<double> pearson_fid_mpsd;
  std::optional<double> spearman_fid_mpsd;
  std::map<std::string, std::string> correlation_errors;
  /// Indices i where fid[i + 1] <= fid[i] (plateau or reversal).
  std::vector<std::size_t> non_monotone_segments;
};

/// Sorts by noise, computes all four correlations (each failing
/// independently) and flags non-monotone FID segments. Needs >= 2 levels.
CalibrationCurve build_curve(std::vector<LevelResult> levels);

std::string curve_to_json(const CalibrationCurve& curve);
CalibrationCurve curve_from_json(const std::string& text);
std::string curve_to_csv(const CalibrationCurve& curve);

/// Scatter plot as a standalone SVG document.
std::string scatter_svg(const std::string& title, const std::string& x_label,
                        const std::string& y_label, std::span<const double> xs,
                        std::span<const double> ys, std::span<const std::string> labels);

/// Writes curve.json, curve.csv, fid_vs_noise.svg and fid_vs_mpsd.svg.
std::vector<std::filesystem::path> emit_report(const CalibrationCurve& curve,
                                               const std::filesystem::path& out_dir);

}  // namespace uqih::protocol

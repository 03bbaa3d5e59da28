#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uqih/image.hpp"

namespace uqih::preprocess {

/// Sliding-window patch geometry and inclusion criterion.
struct PatchSpec {
  int patch_size = 256;
  int stride = 246;
  double fill_threshold = 0.99;
  int canvas = 2224;

  /// Throws InvalidArgument on a broken invariant. Returns a warning when
  /// (canvas - patch_size) is not a multiple of stride.
  std::optional<std::string> validate() const;
};

struct Patch {
  Image image;
  int row = 0;  // origin in canvas coordinates
  int col = 0;
  std::string parent_id;

  std::string id() const;
};

/// Otsu threshold over `bins` uniform bins spanning [min, max] of the image.
///
/// Candidate thresholds are the interior bin edges e_k (k = 1..bins-1);
/// pixels in bins below k form the dark class. Returns the edge maximising
/// between-class variance w0 * w1 * (mu0 - mu1)^2 computed from bin centres,
/// taking the lowest edge on ties (values equal to 1e-12 relative). A
/// constant image returns its minimum with a warning.
Flagged<double> otsu_threshold(const Image& img, int bins = 256);

struct SegmentOptions {
  bool keep_largest_component = true;
  int bins = 256;
};

/// Zeroes pixels at or below the Otsu threshold and, when enabled, every
/// foreground pixel outside the largest 4-connected component (earliest in
/// row-major order on ties). Foreground intensities are preserved.
Flagged<Image> segment_foreground(const Image& img, const SegmentOptions& opts = {});

/// Emits every stride-aligned window whose count of strictly positive
/// pixels exceeds fill_threshold * patch_size^2, ordered row-major.
std::vector<Patch> parse_patches(const Image& img, const PatchSpec& spec,
                                 const std::string& parent_id = {});

/// Maps intensities through the empirical CDF over `bins` uniform bins on
/// [0,1], then min-max normalises. Constant patches become zeros + warning.
Flagged<Image> equalize_histogram(const Image& patch, int bins = 256);

struct PipelineOptions {
  PatchSpec spec;
  SegmentOptions segment;
};

struct PipelineError {
  std::string source_id;
  std::string message;
};

struct PatchRecord {
  std::string id;
  std::string parent_id;
  int row = 0;
  int col = 0;
  std::filesystem::path path;  // relative to the output directory
};

struct PipelineResult {
  std::vector<PatchRecord> patches;
  std::vector<PipelineError> errors;
  std::vector<std::string> warnings;
};

/// Whole-image preparation up to (and including) padding: normalise,
/// invert per photometric, segment unless pre-segmented, flip per
/// laterality, renormalise, pad to the canvas.
Image prepare_whole_image(const Image& img, const ImageMeta& meta, bool pre_segmented,
                          const PipelineOptions& opts, std::vector<std::string>* warnings = nullptr);

/// Runs the full preprocessing pipeline over an image manifest, writing
/// patches as raw tensors under out_dir/patches/ and the patch manifest to
/// out_dir/patches.json. Failed images are recorded and skipped.
PipelineResult run_pipeline(const std::filesystem::path& manifest, const PipelineOptions& opts,
                            const std::filesystem::path& out_dir);

}  // namespace uqih::preprocess

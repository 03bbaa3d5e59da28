#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uqih/image.hpp"

namespace uqih::uq {

enum class StackKind { McDropout, Ensemble };

StackKind parse_stack_kind(const std::string& s);
std::string to_string(StackKind k);

/// M translated outputs of one source image.
struct SampleStack {
  std::string source_id;
  std::vector<Image> samples;
  StackKind kind = StackKind::McDropout;
  std::vector<std::string> model_ids;  // ENSEMBLE only, one per sample

  /// Throws InvalidArgument when M < 2, shapes differ, or ensemble model ids
  /// are missing or repeated.
  void validate() const;
};

struct UncertaintyRecord {
  std::string source_id;
  Image sigma_map;
  double psd = 0.0;
};

/// Per-pixel population standard deviation (divisor M) across samples.
/// Multi-channel samples are channel-averaged first.
Image pixelwise_std(const SampleStack& stack);

/// Mean of the sigma map.
double psd(const Image& sigma_map);

/// Mean of per-image PSDs (one weight per image).
double mpsd(const std::vector<UncertaintyRecord>& records);

struct Shift {
  int dy = 0;
  int dx = 0;
  friend bool operator==(const Shift&, const Shift&) = default;
};

/// Integer circular shift that aligns `moving` to `fixed`
/// (roll(moving, dy, dx) ~ fixed), found as the phase-correlation peak within
/// +-max_shift on both axes. Ties go to the smallest |shift|, then the
/// lexicographically smallest (dy, dx). Constant inputs give (0, 0) with a
/// warning.
Flagged<Shift> register_translation(const Image& moving, const Image& fixed, int max_shift = 10);

struct AlignOptions {
  int crop = 5;
  int max_shift = 10;
};

/// Registers every sample to `reference`, applies the recovered circular
/// shift, then crops `crop` pixels from each side.
SampleStack align_stack(const SampleStack& stack, const Image& reference,
                        const AlignOptions& opts = {}, std::vector<std::string>* warnings = nullptr);

/// Full uncertainty record for one stack (optionally aligned first).
UncertaintyRecord evaluate_stack(const SampleStack& stack, const Image* reference,
                                 const AlignOptions* align, std::vector<std::string>* warnings = nullptr);

/// One entry of a stack manifest; paths resolved against the manifest dir.
struct StackEntry {
  std::string source_id;
  std::filesystem::path source_path;
  std::vector<std::filesystem::path> sample_paths;
  std::vector<std::string> model_ids;
};

struct StackManifest {
  StackKind kind = StackKind::McDropout;
  std::vector<StackEntry> stacks;
};

StackManifest read_stack_manifest(const std::filesystem::path& path);
void write_stack_manifest(const StackManifest& manifest, const std::filesystem::path& path);

/// Loads the samples (and model ids) of one manifest entry.
SampleStack load_stack(const StackEntry& entry, StackKind kind);

struct EvaluateOptions {
  bool align = false;
  AlignOptions align_opts;
};

struct SkippedStack {
  std::string source_id;
  std::string message;
};

struct EvaluateResult {
  std::vector<UncertaintyRecord> records;  // sorted by source_id
  double mpsd = 0.0;
  std::vector<SkippedStack> skipped;
  std::vector<std::string> warnings;
};

/// Evaluates every stack of a manifest in parallel. Malformed stacks are
/// skipped with a warning; throws when nothing survives.
EvaluateResult evaluate_stacks(const std::filesystem::path& manifest, const EvaluateOptions& opts);

/// Writes out_dir/records.jsonl (one {"source_id","psd","sigma_path"} per
/// line), sigma maps under out_dir/sigma/, and out_dir/mpsd.json.
void write_records(const EvaluateResult& result, const std::filesystem::path& out_dir);

}  // namespace uqih::uq

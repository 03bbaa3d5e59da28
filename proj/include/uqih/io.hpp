#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "uqih/image.hpp"

namespace uqih {

namespace fs = std::filesystem;

/// 16-byte magic that opens every raw-tensor file.
inline constexpr char kRawTensorMagic[16] = {'U', 'Q', 'I', 'H', '-', 'R', 'A', 'W',
                                             'T', 'E', 'N', 'S', 'O', 'R', '\0', '\0'};

/// Loads PNG (8/16-bit gray, 8-bit RGB), binary PGM (8/16-bit) or a
/// raw-tensor file; the format is detected from the file's leading bytes.
///
/// Raster intensities keep their integer values; range_hint is [0,255] for
/// 8-bit and [0,65535] for 16-bit sources. Raw tensors carry no range, so
/// the hint is the smallest of [0,1], [0,255], [0,65535] containing the data.
Image load_image(const fs::path& path);

/// Writes the raw-tensor format: magic, u32 LE header length, JSON header
/// {"c","dtype":"f32le","h","w"}, then f32 LE values row-major with
/// channels fastest. Values are narrowed to float.
void save_raw(const Image& img, const fs::path& path);

/// Encodes a raw-tensor file in memory.
std::string encode_raw(const Image& img);

/// Writes binary PGM (P5). Values are rounded and clamped to [0, maxval].
void save_pgm(const Image& img, const fs::path& path, int maxval = 255);

/// Writes an 8- or 16-bit PNG (1 or 3 channels). Values rounded and clamped.
void save_png(const Image& img, const fs::path& path, int bit_depth = 8);

/// One entry in an image manifest.
struct ManifestEntry {
  std::string source_id;
  fs::path path;  // resolved against the manifest's directory
  Photometric photometric = Photometric::Unspecified;
  Laterality laterality = Laterality::Unspecified;
  bool pre_segmented = false;

  ImageMeta meta() const { return {photometric, laterality, source_id}; }
};

/// Parses a JSON array of {source_id, path, photometric?, laterality?,
/// pre_segmented?}. Relative paths resolve against the manifest directory.
/// Throws IoError on malformed JSON, empty or duplicate source_id.
std::vector<ManifestEntry> read_image_manifest(const fs::path& path);

/// Writes entries as a JSON array; paths are stored relative to the
/// manifest's directory when they live beneath it.
void write_image_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path);

/// Reads a whole file into a string; throws IoError when unreadable.
std::string read_file(const fs::path& path);

/// Writes bytes, creating parent directories.
void write_file(const fs::path& path, std::string_view bytes);

/// Path relative to base when it lies beneath base, otherwise unchanged.
fs::path relative_to(const fs::path& path, const fs::path& base);

/// Replaces characters outside [A-Za-z0-9._-] so ids are safe as filenames.
std::string sanitize_id(std::string_view id);

}  // namespace uqih

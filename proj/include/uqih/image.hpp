#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uqih/error.hpp"

namespace uqih {

/// Nominal amplitude range an image's intensities were declared in.
struct AmplitudeRange {
  double lo = 0.0;
  double hi = 1.0;

  static constexpr AmplitudeRange unit() { return {0.0, 1.0}; }
  static constexpr AmplitudeRange byte() { return {0.0, 255.0}; }
  static constexpr AmplitudeRange word() { return {0.0, 65535.0}; }

  friend bool operator==(const AmplitudeRange&, const AmplitudeRange&) = default;
};

/// Row-major, channel-fastest grid of finite real intensities.
///
/// Construction validates the invariants (positive dimensions, matching
/// data length, no NaN/Inf); instances are immutable through the public
/// interface except via `mutable_data()`, which callers use when building
/// a derived image in place.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, std::vector<double> data,
        AmplitudeRange range = AmplitudeRange::unit());

  /// Zero-filled image.
  static Image zeros(int width, int height, int channels = 1,
                     AmplitudeRange range = AmplitudeRange::unit());

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> mutable_data() { return data_; }

  double at(int row, int col, int ch = 0) const {
    return data_[index(row, col, ch)];
  }
  double& at(int row, int col, int ch = 0) { return data_[index(row, col, ch)]; }

  AmplitudeRange range_hint() const { return range_; }
  void set_range_hint(AmplitudeRange r) { range_ = r; }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

  double min() const;
  double max() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(col)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(ch);
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
  AmplitudeRange range_ = AmplitudeRange::unit();
};

enum class Photometric { Monochrome1, Monochrome2, Unspecified };
enum class Laterality { Left, Right, Unspecified };

struct ImageMeta {
  Photometric photometric = Photometric::Unspecified;
  Laterality laterality = Laterality::Unspecified;
  std::string source_id;
};

Photometric parse_photometric(const std::string& s);
Laterality parse_laterality(const std::string& s);
std::string to_string(Photometric p);
std::string to_string(Laterality l);

/// A value plus an optional warning raised while producing it. Degenerate
/// inputs (constant images, empty foregrounds) flow through with a warning
/// instead of throwing.
template <typename T>
struct Flagged {
  T value;
  std::optional<std::string> warning;

  bool warned() const { return warning.has_value(); }
};

// Elementary amplitude and geometry transforms. All are pure.

/// Affine map to [0,1]. A constant image maps to all zeros with a warning.
Flagged<Image> normalize_minmax(const Image& img);

/// p -> 1 - p for MONOCHROME1; identity otherwise.
Image invert_contrast(const Image& img, const ImageMeta& meta);

/// Reverses columns for RIGHT laterality; identity otherwise.
Image flip_horizontal(const Image& img, const ImageMeta& meta);

/// Zero pad on the right and bottom to exactly target_w x target_h.
Image pad_to(const Image& img, int target_w, int target_h);

/// Mean over channels. One-channel input is returned unchanged.
Image channel_average(const Image& img);

/// Min-max rescale to [0,255] (constant images map to 0).
Image rescale_to_byte_range(const Image& img);

/// Rescales to [0,255], adds zero-mean Gaussian noise with variance
/// (level_percent / 100) * 255 and clips to [0,255]. Noise for pixel i is a
/// pure function of (seed, i), so results do not depend on threading.
Image add_gaussian_noise(const Image& img, double level_percent, std::uint64_t seed);

/// Circular shift: out(r, c) = in(r - dy, c - dx).
Image roll(const Image& img, int dy, int dx);

/// Removes `crop` pixels from each side.
Image crop_border(const Image& img, int crop);

/// Copies a width x height window with top-left corner (row, col).
Image extract_window(const Image& img, int row, int col, int width, int height);

}  // namespace uqih

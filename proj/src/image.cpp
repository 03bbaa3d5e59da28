#include "uqih/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "uqih/rng.hpp"

namespace uqih {

Image::Image(int width, int height, int channels, std::vector<double> data,
             AmplitudeRange range)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)), range_(range) {
  if (width <= 0 || height <= 0) {
    throw InvalidArgument("image dimensions must be positive");
  }
  if (channels <= 0) {
    throw InvalidArgument("image must have at least one channel");
  }
  const auto expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) *
                        static_cast<std::size_t>(channels);
  if (data_.size() != expected) {
    throw InvalidArgument("image data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(width) + "x" +
                          std::to_string(height) + "x" + std::to_string(channels));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw InvalidArgument("image contains non-finite intensity");
  }
}

Image Image::zeros(int width, int height, int channels, AmplitudeRange range) {
  const auto n = static_cast<std::size_t>(std::max(width, 0)) *
                 static_cast<std::size_t>(std::max(height, 0)) *
                 static_cast<std::size_t>(std::max(channels, 0));
  return Image(width, height, channels, std::vector<double>(n, 0.0), range);
}

double Image::min() const { return *std::min_element(data_.begin(), data_.end()); }
double Image::max() const { return *std::max_element(data_.begin(), data_.end()); }

Photometric parse_photometric(const std::string& s) {
  if (s == "MONOCHROME1") return Photometric::Monochrome1;
  if (s == "MONOCHROME2") return Photometric::Monochrome2;
  if (s.empty() || s == "UNSPECIFIED") return Photometric::Unspecified;
  throw InvalidArgument("unknown photometric interpretation: " + s);
}

Laterality parse_laterality(const std::string& s) {
  if (s == "LEFT" || s == "L") return Laterality::Left;
  if (s == "RIGHT" || s == "R") return Laterality::Right;
  if (s.empty() || s == "UNSPECIFIED") return Laterality::Unspecified;
  throw InvalidArgument("unknown laterality: " + s);
}

std::string to_string(Photometric p) {
  switch (p) {
    case Photometric::Monochrome1: return "MONOCHROME1";
    case Photometric::Monochrome2: return "MONOCHROME2";
    case Photometric::Unspecified: break;
  }
  return "UNSPECIFIED";
}

std::string to_string(Laterality l) {
  switch (l) {
    case Laterality::Left: return "LEFT";
    case Laterality::Right: return "RIGHT";
    case Laterality::Unspecified: break;
  }
  return "UNSPECIFIED";
}

Flagged<Image> normalize_minmax(const Image& img) {
  const double lo = img.min();
  const double hi = img.max();
  std::vector<double> out(img.size(), 0.0);
  if (hi == lo) {
    return {Image(img.width(), img.height(), img.channels(), std::move(out)),
            "constant image: normalized to zeros"};
  }
  const double scale = 1.0 / (hi - lo);
  auto in = img.data();
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = (in[i] - lo) * scale;
  }
  // Pin the extrema so min = 0 and max = 1 hold exactly.
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] == hi) out[i] = 1.0;
  }
  return {Image(img.width(), img.height(), img.channels(), std::move(out)), std::nullopt};
}

Image invert_contrast(const Image& img, const ImageMeta& meta) {
  if (meta.photometric != Photometric::Monochrome1) return img;
  std::vector<double> out(img.data().begin(), img.data().end());
  for (double& v : out) v = 1.0 - v;
  return Image(img.width(), img.height(), img.channels(), std::move(out), img.range_hint());
}

Image flip_horizontal(const Image& img, const ImageMeta& meta) {
  if (meta.laterality != Laterality::Right) return img;
  Image out = img;
  const int w = img.width();
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < img.channels(); ++ch) {
        out.at(r, c, ch) = img.at(r, w - 1 - c, ch);
      }
    }
  }
  return out;
}

Image pad_to(const Image& img, int target_w, int target_h) {
  if (img.width() > target_w || img.height() > target_h) {
    throw InvalidArgument("image " + std::to_string(img.width()) + "x" +
                          std::to_string(img.height()) + " exceeds pad target " +
                          std::to_string(target_w) + "x" + std::to_string(target_h));
  }
  if (img.width() == target_w && img.height() == target_h) return img;
  Image out = Image::zeros(target_w, target_h, img.channels(), img.range_hint());
  for (int r = 0; r < img.height(); ++r) {
    for (int c = 0; c < img.width(); ++c) {
      for (int ch = 0; ch < img.channels(); ++ch) out.at(r, c, ch) = img.at(r, c, ch);
    }
  }
  return out;
}

Image channel_average(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) {
    throw InvalidArgument("channel_average expects 1 or 3 channels, got " +
                          std::to_string(img.channels()));
  }
  std::vector<double> out(img.pixel_count());
  auto in = img.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (in[3 * i] + in[3 * i + 1] + in[3 * i + 2]) / 3.0;
  }
  return Image(img.width(), img.height(), 1, std::move(out), img.range_hint());
}

Image rescale_to_byte_range(const Image& img) {
  Image unit = normalize_minmax(img).value;
  for (double& v : unit.mutable_data()) v *= 255.0;
  unit.set_range_hint(AmplitudeRange::byte());
  return unit;
}

Image add_gaussian_noise(const Image& img, double level_percent, std::uint64_t seed) {
  if (!(level_percent >= 0.0) || !std::isfinite(level_percent)) {
    throw InvalidArgument("noise level must be a non-negative finite percentage");
  }
  Image out = rescale_to_byte_range(img);
  if (level_percent == 0.0) return out;
  const double sigma = std::sqrt(level_percent / 100.0 * 255.0);
  const CounterRng rng(seed);
  auto data = out.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::clamp(data[i] + sigma * rng.normal(i), 0.0, 255.0);
  }
  return out;
}

Image roll(const Image& img, int dy, int dx) {
  Image out = img;
  const int h = img.height();
  const int w = img.width();
  for (int r = 0; r < h; ++r) {
    const int sr = ((r - dy) % h + h) % h;
    for (int c = 0; c < w; ++c) {
      const int sc = ((c - dx) % w + w) % w;
      for (int ch = 0; ch < img.channels(); ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
    }
  }
  return out;
}

Image crop_border(const Image& img, int crop) {
  if (crop < 0) throw InvalidArgument("crop must be non-negative");
  if (2 * crop >= std::min(img.width(), img.height())) {
    throw InvalidArgument("crop of " + std::to_string(crop) + " per side leaves no pixels in " +
                          std::to_string(img.width()) + "x" + std::to_string(img.height()));
  }
  return extract_window(img, crop, crop, img.width() - 2 * crop, img.height() - 2 * crop);
}

Image extract_window(const Image& img, int row, int col, int width, int height) {
  if (row < 0 || col < 0 || width <= 0 || height <= 0 || row + height > img.height() ||
      col + width > img.width()) {
    throw InvalidArgument("window outside image bounds");
  }
  const int ch = img.channels();
  std::vector<double> out(static_cast<std::size_t>(width) * height * ch);
  auto in = img.data();
  for (int r = 0; r < height; ++r) {
    const auto src = (static_cast<std::size_t>(row + r) * img.width() + col) * ch;
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(src), static_cast<std::size_t>(width) * ch,
                out.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(r) * width * ch));
  }
  return Image(width, height, ch, std::move(out), img.range_hint());
}

}  // namespace uqih

#include "uqih/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

namespace uqih {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxPixels = std::size_t{1} << 30;

void check_dims(std::uint64_t w, std::uint64_t h, std::uint64_t c) {
  if (w == 0 || h == 0 || c == 0) throw IoError("zero image dimension");
  if (w > (1u << 20) || h > (1u << 20) || w * h > kMaxPixels || w * h * c > kMaxPixels) {
    throw IoError("image dimensions overflow supported size");
  }
}

std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void append_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

float read_f32le(const unsigned char* p) { return std::bit_cast<float>(read_u32le(p)); }

void append_f32le(std::string& out, float v) { append_u32le(out, std::bit_cast<std::uint32_t>(v)); }

AmplitudeRange infer_range(const std::vector<double>& data) {
  const auto [lo, hi] = std::minmax_element(data.begin(), data.end());
  for (auto r : {AmplitudeRange::unit(), AmplitudeRange::byte(), AmplitudeRange::word()}) {
    if (*lo >= r.lo && *hi <= r.hi) return r;
  }
  return {*lo, *hi};
}

Image decode_raw(const std::string& bytes, const fs::path& path) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 20) throw IoError(path.string() + ": truncated raw-tensor header");
  const std::uint32_t header_len = read_u32le(p + 16);
  if (bytes.size() < 20 + static_cast<std::size_t>(header_len)) {
    throw IoError(path.string() + ": truncated raw-tensor header");
  }
  json header;
  try {
    header = json::parse(bytes.substr(20, header_len));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed raw-tensor header: " + e.what());
  }
  std::int64_t h = 0, w = 0, c = 0;
  try {
    h = header.at("h").get<std::int64_t>();
    w = header.at("w").get<std::int64_t>();
    c = header.at("c").get<std::int64_t>();
    if (header.at("dtype").get<std::string>() != "f32le") {
      throw IoError(path.string() + ": unsupported dtype " + header.at("dtype").dump());
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed raw-tensor header: " + e.what());
  }
  if (h <= 0 || w <= 0 || c <= 0) throw IoError(path.string() + ": non-positive dimension");
  check_dims(static_cast<std::uint64_t>(w), static_cast<std::uint64_t>(h),
             static_cast<std::uint64_t>(c));
  const std::size_t n = static_cast<std::size_t>(h * w * c);
  const std::size_t offset = 20 + header_len;
  if (bytes.size() != offset + 4 * n) {
    throw IoError(path.string() + ": payload size does not match header");
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float v = read_f32le(p + offset + 4 * i);
    if (!std::isfinite(v)) throw IoError(path.string() + ": non-finite value in payload");
    data[i] = v;
  }
  const AmplitudeRange range = infer_range(data);
  return Image(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c), std::move(data),
               range);
}

// Binary PGM: "P5" whitespace width whitespace height whitespace maxval single-ws data.
Image decode_pgm(const std::string& bytes, const fs::path& path) {
  std::size_t pos = 2;
  auto next_int = [&]() -> std::uint64_t {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    std::uint64_t v = 0;
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<std::uint64_t>(bytes[pos] - '0');
      if (v > std::numeric_limits<std::uint32_t>::max()) {
        throw IoError(path.string() + ": PGM header value overflow");
      }
      ++pos;
    }
    if (pos == start) throw IoError(path.string() + ": malformed PGM header");
    return v;
  };
  const auto w = next_int();
  const auto h = next_int();
  const auto maxval = next_int();
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw IoError(path.string() + ": malformed PGM header");
  }
  ++pos;
  check_dims(w, h, 1);
  if (maxval == 0 || maxval > 65535) {
    throw IoError(path.string() + ": unsupported PGM bit depth (maxval " +
                  std::to_string(maxval) + ")");
  }
  const std::size_t bps = maxval < 256 ? 1 : 2;
  const std::size_t n = static_cast<std::size_t>(w * h);
  if (bytes.size() < pos + n * bps) throw IoError(path.string() + ": truncated PGM payload");
  std::vector<double> data(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + pos;
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = bps == 1 ? p[i] : static_cast<double>((p[2 * i] << 8) | p[2 * i + 1]);
  }
  return Image(static_cast<int>(w), static_cast<int>(h), 1, std::move(data),
               bps == 1 ? AmplitudeRange::byte() : AmplitudeRange::word());
}

struct PngReadState {
  const std::string* bytes;
  std::size_t pos;
};

void png_read_from_string(png_structp png, png_bytep out, png_size_t count) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + count > st->bytes->size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, st->bytes->data() + st->pos, count);
  st->pos += count;
}

void png_error_throw(png_structp, png_const_charp msg) { throw IoError(msg); }
void png_warning_ignore(png_structp, png_const_charp) {}

Image decode_png(const std::string& bytes, const fs::path& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw,
                                           png_warning_ignore);
  if (!png) throw IoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_read_struct(png, info, nullptr); }
  } guard{&png, &info};

  PngReadState st{&bytes, 0};
  try {
    png_set_read_fn(png, &st, png_read_from_string);
    png_read_info(png, info);
    const auto w = png_get_image_width(png, info);
    const auto h = png_get_image_height(png, info);
    const int depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    int channels = 0;
    if (color == PNG_COLOR_TYPE_GRAY && (depth == 8 || depth == 16)) {
      channels = 1;
    } else if (color == PNG_COLOR_TYPE_RGB && depth == 8) {
      channels = 3;
    } else {
      throw IoError(path.string() + ": unsupported PNG format (color type " +
                    std::to_string(color) + ", bit depth " + std::to_string(depth) + ")");
    }
    check_dims(w, h, static_cast<std::uint64_t>(channels));
    const std::size_t bps = depth == 16 ? 2 : 1;
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    std::vector<unsigned char> raw(rowbytes * h);
    std::vector<png_bytep> rows(h);
    for (std::size_t r = 0; r < h; ++r) rows[r] = raw.data() + r * rowbytes;
    png_read_image(png, rows.data());
    const std::size_t n = static_cast<std::size_t>(w) * h * static_cast<std::size_t>(channels);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = i / (static_cast<std::size_t>(w) * channels);
      const std::size_t off = i % (static_cast<std::size_t>(w) * channels);
      const unsigned char* px = rows[r] + off * bps;
      data[i] = bps == 1 ? px[0] : static_cast<double>((px[0] << 8) | px[1]);
    }
    return Image(static_cast<int>(w), static_cast<int>(h), channels, std::move(data),
                 depth == 16 ? AmplitudeRange::word() : AmplitudeRange::byte());
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void png_write_to_string(png_structp png, png_bytep data, png_size_t count) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), count);
}

void png_flush_noop(png_structp) {}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error writing " + path.string());
}

Image load_image(const fs::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() >= 16 && std::memcmp(bytes.data(), kRawTensorMagic, 16) == 0) {
    return decode_raw(bytes, path);
  }
  if (bytes.size() >= 8 &&
      png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0) {
    return decode_png(bytes, path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes, path);
  throw IoError(path.string() + ": unrecognised image format");
}

std::string encode_raw(const Image& img) {
  const json header = {{"h", img.height()}, {"w", img.width()}, {"c", img.channels()},
                       {"dtype", "f32le"}};
  const std::string header_text = header.dump();
  std::string out(kRawTensorMagic, 16);
  append_u32le(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  out.reserve(out.size() + 4 * img.size());
  for (double v : img.data()) append_f32le(out, static_cast<float>(v));
  return out;
}

void save_raw(const Image& img, const fs::path& path) { write_file(path, encode_raw(img)); }

void save_pgm(const Image& img, const fs::path& path, int maxval) {
  if (img.channels() != 1) throw InvalidArgument("PGM requires a single-channel image");
  if (maxval < 1 || maxval > 65535) throw InvalidArgument("PGM maxval must be in [1, 65535]");
  std::string out = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) +
                    "\n" + std::to_string(maxval) + "\n";
  for (double v : img.data()) {
    const auto q = static_cast<unsigned>(std::clamp(std::lround(v), 0L, static_cast<long>(maxval)));
    if (maxval < 256) {
      out.push_back(static_cast<char>(q));
    } else {
      out.push_back(static_cast<char>(q >> 8));
      out.push_back(static_cast<char>(q & 0xff));
    }
  }
  write_file(path, out);
}

void save_png(const Image& img, const fs::path& path, int bit_depth) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw InvalidArgument("PNG writer supports 1 or 3 channels");
  }
  if (bit_depth != 8 && bit_depth != 16) throw InvalidArgument("PNG bit depth must be 8 or 16");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw,
                                            png_warning_ignore);
  if (!png) throw IoError("libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* png;
    png_infop* info;
    ~Guard() { png_destroy_write_struct(png, info); }
  } guard{&png, &info};

  std::string out;
  const long maxval = bit_depth == 8 ? 255 : 65535;
  const std::size_t bps = bit_depth / 8;
  const std::size_t rowbytes = static_cast<std::size_t>(img.width()) * img.channels() * bps;
  std::vector<unsigned char> raw(rowbytes * img.height());
  auto data = img.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto q = static_cast<unsigned>(std::clamp(std::lround(data[i]), 0L, maxval));
    if (bps == 1) {
      raw[i] = static_cast<unsigned char>(q);
    } else {
      raw[2 * i] = static_cast<unsigned char>(q >> 8);
      raw[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    }
  }
  std::vector<png_bytep> rows(img.height());
  for (int r = 0; r < img.height(); ++r) rows[r] = raw.data() + r * rowbytes;
  png_set_write_fn(png, &out, png_write_to_string, png_flush_noop);
  png_set_IHDR(png, info, img.width(), img.height(), bit_depth,
               img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  write_file(path, out);
}

fs::path relative_to(const fs::path& path, const fs::path& base) {
  const fs::path abs_path = fs::absolute(path).lexically_normal();
  const fs::path abs_base = fs::absolute(base).lexically_normal();
  const fs::path rel = abs_path.lexically_relative(abs_base);
  if (rel.empty() || *rel.begin() == "..") return path;
  return rel;
}

std::string sanitize_id(std::string_view id) {
  std::string out(id);
  for (char& c : out) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    if (!ok) c = '_';
  }
  return out;
}

std::vector<ManifestEntry> read_image_manifest(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed manifest JSON: " + e.what());
  }
  if (!doc.is_array()) throw IoError(path.string() + ": manifest must be a JSON array");
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::vector<std::string> seen;
  for (const auto& item : doc) {
    ManifestEntry e;
    try {
      e.source_id = item.at("source_id").get<std::string>();
      e.path = item.at("path").get<std::string>();
      e.photometric = parse_photometric(item.value("photometric", std::string{}));
      e.laterality = parse_laterality(item.value("laterality", std::string{}));
      e.pre_segmented = item.value("pre_segmented", false);
    } catch (const json::exception& ex) {
      throw IoError(path.string() + ": malformed manifest entry: " + ex.what());
    } catch (const InvalidArgument& ex) {
      throw IoError(path.string() + ": " + ex.what());
    }
    if (e.source_id.empty()) throw IoError(path.string() + ": empty source_id");
    if (std::find(seen.begin(), seen.end(), e.source_id) != seen.end()) {
      throw IoError(path.string() + ": duplicate source_id " + e.source_id);
    }
    seen.push_back(e.source_id);
    if (e.path.is_relative()) e.path = base / e.path;
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_image_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
  json doc = json::array();
  const fs::path base = path.parent_path();
  for (const auto& e : entries) {
    json item = {{"source_id", e.source_id},
                 {"path", relative_to(e.path, base).generic_string()},
                 {"photometric", to_string(e.photometric)},
                 {"laterality", to_string(e.laterality)}};
    if (e.pre_segmented) item["pre_segmented"] = true;
    doc.push_back(std::move(item));
  }
  write_file(path, doc.dump(2) + "\n");
}

}  // namespace uqih

#include "topocl/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

namespace topocl {

namespace {

using Kind = ImageParseError::Kind;

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageParseError(Kind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Cursor over a PGM header: whitespace-separated tokens with '#' comments.
class PgmHeader {
 public:
  explicit PgmHeader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  long next_int(const char* field) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) {
      throw ImageParseError(Kind::kMalformedHeader, std::string("PGM: bad ") + field);
    }
    long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000'000) throw ImageParseError(Kind::kMalformedHeader, "PGM: value overflow");
      ++pos_;
    }
    return v;
  }

  // P5: exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw ImageParseError(Kind::kMalformedHeader, "PGM: missing raster separator");
    }
    return pos_ + 1;
  }

  std::size_t pos() const { return pos_; }
  void set_pos(std::size_t p) { pos_ = p; }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 2;
};

GrayImage load_pgm(const std::filesystem::path& path, bool binary) {
  const auto bytes = read_bytes(path);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != (binary ? '5' : '2')) {
    throw ImageParseError(Kind::kMalformedHeader,
                          std::string("PGM: expected magic ") + (binary ? "P5" : "P2"));
  }
  PgmHeader header(bytes);
  const long width = header.next_int("width");
  const long height = header.next_int("height");
  const long maxval = header.next_int("maxval");
  if (width < 2 || height < 2) {
    throw ImageParseError(Kind::kMalformedHeader, "PGM: image must be at least 2x2");
  }
  if (maxval < 1 || maxval > 65535) {
    throw ImageParseError(Kind::kMalformedHeader, "PGM: maxval out of range");
  }
  const std::size_t n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  std::vector<double> data(n);
  const double scale = static_cast<double>(maxval);

  if (binary) {
    const std::size_t start = header.raster_start();
    const std::size_t bpp = maxval > 255 ? 2 : 1;
    if (bytes.size() < start + n * bpp) {
      throw ImageParseError(Kind::kTruncatedPayload, "PGM: truncated raster");
    }
    for (std::size_t i = 0; i < n; ++i) {
      long v = bytes[start + i * bpp];
      if (bpp == 2) v = (v << 8) | bytes[start + i * bpp + 1];
      if (v > maxval) throw ImageParseError(Kind::kMalformedHeader, "PGM: sample exceeds maxval");
      data[i] = static_cast<double>(v) / scale;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      header.skip_space_and_comments();
      if (header.pos() >= bytes.size()) {
        throw ImageParseError(Kind::kTruncatedPayload, "PGM: truncated raster");
      }
      const long v = header.next_int("sample");
      if (v > maxval) throw ImageParseError(Kind::kMalformedHeader, "PGM: sample exceeds maxval");
      data[i] = static_cast<double>(v) / scale;
    }
  }
  return GrayImage(static_cast<std::size_t>(height), static_cast<std::size_t>(width),
                   std::move(data));
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << (binary ? "P5" : "P2") << '\n' << img.width() << ' ' << img.height() << "\n255\n";
  if (binary) {
    std::vector<char> raster(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) raster[i] = static_cast<char>(quantize_u8(img[i]));
    out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  } else {
    for (std::size_t r = 0; r < img.height(); ++r) {
      for (std::size_t c = 0; c < img.width(); ++c) {
        if (c) out << ' ';
        out << static_cast<int>(quantize_u8(img.at(r, c)));
      }
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

GrayImage load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ImageParseError(Kind::kIo, "cannot open " + path.string());
  std::array<unsigned char, 8> sig{};
  if (std::fread(sig.data(), 1, sig.size(), fp.get()) != sig.size() ||
      png_sig_cmp(sig.data(), 0, sig.size()) != 0) {
    throw ImageParseError(Kind::kMalformedHeader, "PNG: bad signature");
  }

  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("PNG: allocation failed");
  }

  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
  volatile bool header_done = false;
  // No C++ objects with non-trivial destructors are created between setjmp
  // and the libpng calls that can longjmp back here.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageParseError(header_done ? Kind::kTruncatedPayload : Kind::kMalformedHeader,
                          "PNG: " + err);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, static_cast<int>(sig.size()));
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, nullptr, nullptr, nullptr);
  header_done = true;
  if (color_type != PNG_COLOR_TYPE_GRAY || bit_depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageParseError(Kind::kNotGrayscale, "PNG: expected 8-bit grayscale");
  }
  if (width < 2 || height < 2) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ImageParseError(Kind::kMalformedHeader, "PNG: image must be at least 2x2");
  }
  pixels.resize(static_cast<std::size_t>(width) * height);
  rows.resize(height);
  for (png_uint_32 r = 0; r < height; ++r) rows[r] = pixels.data() + static_cast<std::size_t>(r) * width;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  std::vector<double> data(pixels.size());
  std::transform(pixels.begin(), pixels.end(), data.begin(),
                 [](unsigned char v) { return static_cast<double>(v) / 255.0; });
  return GrayImage(height, width, std::move(data));
}

void save_png(const GrayImage& img, const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error("cannot write " + path.string());
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG: allocation failed");
  }
  std::vector<unsigned char> pixels(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) pixels[i] = quantize_u8(img[i]);
  std::vector<png_bytep> rows(img.height());
  for (std::size_t r = 0; r < img.height(); ++r) rows[r] = pixels.data() + r * img.width();

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG write failed: " + err);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()),
               8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// 3x3 binary dilation (erode = false) or erosion (erode = true). Out-of-image
// neighbours are ignored.
std::vector<bool> morph3(const std::vector<bool>& m, std::size_t h, std::size_t w, bool erode) {
  std::vector<bool> out(m.size());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      bool acc = erode;
      for (long dr = -1; dr <= 1; ++dr) {
        for (long dc = -1; dc <= 1; ++dc) {
          const long rr = static_cast<long>(r) + dr;
          const long cc = static_cast<long>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<long>(h) || cc >= static_cast<long>(w)) continue;
          const bool v = m[static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)];
          acc = erode ? (acc && v) : (acc || v);
        }
      }
      out[r * w + c] = acc;
    }
  }
  return out;
}

}  // namespace

ImageFormat parse_image_format(const std::string& name) {
  if (name == "pgm-ascii") return ImageFormat::kPgmAscii;
  if (name == "pgm-binary") return ImageFormat::kPgmBinary;
  if (name == "png-gray8") return ImageFormat::kPngGray8;
  throw std::invalid_argument("unknown image format: " + name);
}

ImageFormat format_from_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" ? ImageFormat::kPngGray8 : ImageFormat::kPgmBinary;
}

GrayImage::GrayImage(std::size_t height, std::size_t width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height < 2 || width < 2) throw std::invalid_argument("GrayImage: dimensions must be >= 2");
  if (data_.size() != height * width) throw std::invalid_argument("GrayImage: data length mismatch");
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("GrayImage: intensity outside [0,1]");
  }
}

GrayImage::GrayImage(std::size_t height, std::size_t width, double value)
    : GrayImage(height, width, std::vector<double>(height * width, value)) {}

RoiMask::RoiMask(std::size_t height, std::size_t width, std::vector<bool> mask)
    : height_(height), width_(width), mask_(std::move(mask)) {
  if (mask_.size() != height * width) throw std::invalid_argument("RoiMask: size mismatch");
  if (std::find(mask_.begin(), mask_.end(), true) == mask_.end()) {
    throw std::invalid_argument("RoiMask: mask must contain at least one pixel");
  }
}

RoiMask RoiMask::full(std::size_t height, std::size_t width) {
  return RoiMask(height, width, std::vector<bool>(height * width, true));
}

std::size_t RoiMask::count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), true));
}

unsigned char quantize_u8(double intensity) {
  const double v = std::floor(std::clamp(intensity, 0.0, 1.0) * 255.0 + 0.5);
  return static_cast<unsigned char>(std::min(v, 255.0));
}

GrayImage load_image(const std::filesystem::path& path, ImageFormat format) {
  switch (format) {
    case ImageFormat::kPgmAscii: return load_pgm(path, false);
    case ImageFormat::kPgmBinary: return load_pgm(path, true);
    case ImageFormat::kPngGray8: return load_png(path);
  }
  throw std::logic_error("unreachable");
}

void save_image(const GrayImage& img, const std::filesystem::path& path, ImageFormat format) {
  switch (format) {
    case ImageFormat::kPgmAscii: save_pgm(img, path, false); return;
    case ImageFormat::kPgmBinary: save_pgm(img, path, true); return;
    case ImageFormat::kPngGray8: save_png(img, path); return;
  }
}

std::optional<int> otsu_bin(const GrayImage& img) {
  std::array<double, 256> hist{};
  for (double v : img.data()) hist[quantize_u8(v)] += 1.0;
  const double total = static_cast<double>(img.size());
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) sum_all += i * hist[i];

  double weight_dark = 0.0;
  double sum_dark = 0.0;
  double best = -1.0;
  int best_bin = -1;
  for (int k = 0; k < 255; ++k) {
    weight_dark += hist[k];
    sum_dark += k * hist[k];
    const double weight_bright = total - weight_dark;
    if (weight_dark == 0.0 || weight_bright == 0.0) continue;
    const double mean_dark = sum_dark / weight_dark;
    const double mean_bright = (sum_all - sum_dark) / weight_bright;
    const double between = weight_dark * weight_bright * (mean_dark - mean_bright) * (mean_dark - mean_bright);
    if (between > best) {
      best = between;
      best_bin = k;
    }
  }
  if (best_bin < 0) return std::nullopt;
  return best_bin;
}

RoiMask extract_roi(const GrayImage& img, const RoiMethod& method) {
  if (method.kind == RoiMethod::Kind::kExternalMask) {
    RoiMask mask = load_mask(method.mask_path);
    if (!mask.matches(img)) throw std::invalid_argument("external mask dimensions do not match image");
    return mask;
  }

  const std::size_t h = img.height();
  const std::size_t w = img.width();
  const auto bin = otsu_bin(img);
  if (!bin) {
    RoiMask mask = RoiMask::full(h, w);
    mask.set_fallback(true);
    return mask;
  }

  // Foreground is the Otsu class touching the image border less often; the
  // bright class wins ties.
  std::vector<bool> bright(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) bright[i] = quantize_u8(img[i]) > *bin;
  std::size_t border_bright = 0;
  std::size_t border_total = 0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (r != 0 && c != 0 && r + 1 != h && c + 1 != w) continue;
      ++border_total;
      if (bright[r * w + c]) ++border_bright;
    }
  }
  const bool fg_is_bright = 2 * border_bright <= border_total;
  std::vector<bool> fg(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) fg[i] = bright[i] == fg_is_bright;

  // Largest 4-connected component; the first one in raster order wins ties.
  std::vector<int> label(img.size(), -1);
  std::vector<std::size_t> stack;
  int best_label = -1;
  std::size_t best_size = 0;
  int next = 0;
  for (std::size_t seed = 0; seed < img.size(); ++seed) {
    if (!fg[seed] || label[seed] >= 0) continue;
    std::size_t size = 0;
    label[seed] = next;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++size;
      const std::size_t r = p / w;
      const std::size_t c = p % w;
      const auto visit = [&](std::size_t q) {
        if (fg[q] && label[q] < 0) {
          label[q] = next;
          stack.push_back(q);
        }
      };
      if (r > 0) visit(p - w);
      if (r + 1 < h) visit(p + w);
      if (c > 0) visit(p - 1);
      if (c + 1 < w) visit(p + 1);
    }
    if (size > best_size) {
      best_size = size;
      best_label = next;
    }
    ++next;
  }

  std::vector<bool> component(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) component[i] = label[i] == best_label;
  auto closed = morph3(morph3(component, h, w, false), h, w, true);
  return RoiMask(h, w, std::move(closed));
}

GrayImage apply_mask(const GrayImage& img, const RoiMask& roi) {
  if (!roi.matches(img)) throw std::invalid_argument("apply_mask: dimension mismatch");
  std::vector<double> out(img.data().begin(), img.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!roi[i]) out[i] = 1.0;
  }
  return GrayImage(img.height(), img.width(), std::move(out));
}

RoiMask load_mask(const std::filesystem::path& path) {
  const GrayImage raw = load_image(path, format_from_extension(path));
  std::vector<bool> mask(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) mask[i] = raw[i] >= 0.5;
  return RoiMask(raw.height(), raw.width(), std::move(mask));
}

void save_mask(const RoiMask& mask, const std::filesystem::path& path) {
  std::vector<double> data(mask.height() * mask.width());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = mask[i] ? 1.0 : 0.0;
  save_image(GrayImage(mask.height(), mask.width(), std::move(data)), path, format_from_extension(path));
}

}  // namespace topocl

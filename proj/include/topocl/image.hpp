#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace topocl {

/// Raised by the image readers. `kind` distinguishes header problems,
/// short payloads and unsupported PNG color types.
class ImageParseError : public std::runtime_error {
 public:
  enum class Kind { kMalformedHeader, kTruncatedPayload, kNotGrayscale, kIo };

  ImageParseError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

enum class ImageFormat { kPgmAscii, kPgmBinary, kPngGray8 };

ImageFormat parse_image_format(const std::string& name);
/// Guess from the file extension: .png -> png-gray8, anything else -> pgm-binary.
ImageFormat format_from_extension(const std::filesystem::path& path);

/// Row-major grayscale image with intensities in [0,1]. Immutable once built.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(std::size_t height, std::size_t width, std::vector<double> data);
  /// Constant image.
  GrayImage(std::size_t height, std::size_t width, double value);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  double at(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }
  double operator[](std::size_t idx) const { return data_[idx]; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const GrayImage& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

/// Boolean region-of-interest mask paired with an image of the same shape.
class RoiMask {
 public:
  RoiMask() = default;
  RoiMask(std::size_t height, std::size_t width, std::vector<bool> mask);
  static RoiMask full(std::size_t height, std::size_t width);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  bool at(std::size_t row, std::size_t col) const { return mask_[row * width_ + col]; }
  bool operator[](std::size_t idx) const { return mask_[idx]; }
  std::size_t count() const;
  /// Set when extraction fell back to the full image.
  bool fallback() const { return fallback_; }
  void set_fallback(bool v) { fallback_ = v; }

  bool matches(const GrayImage& img) const {
    return height_ == img.height() && width_ == img.width();
  }

  friend bool operator==(const RoiMask& a, const RoiMask& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.mask_ == b.mask_;
  }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<bool> mask_;
  bool fallback_ = false;
};

GrayImage load_image(const std::filesystem::path& path, ImageFormat format);
void save_image(const GrayImage& img, const std::filesystem::path& path, ImageFormat format);

/// Round-half-up quantization used by every writer.
unsigned char quantize_u8(double intensity);

struct RoiMethod {
  enum class Kind { kOtsuLargestComponent, kExternalMask };
  Kind kind = Kind::kOtsuLargestComponent;
  std::filesystem::path mask_path;  // only for kExternalMask

  static RoiMethod otsu() { return {}; }
  static RoiMethod external(std::filesystem::path p) {
    return {Kind::kExternalMask, std::move(p)};
  }
};

/// Otsu threshold over the 256 quantized levels: pixels whose 8-bit level is
/// <= the returned bin form the dark class. Empty when the image has a single
/// level (threshold undefined).
std::optional<int> otsu_bin(const GrayImage& img);

RoiMask extract_roi(const GrayImage& img, const RoiMethod& method = RoiMethod::otsu());

/// Pixels outside the ROI become 1.0 so they enter the sublevel filtration last.
GrayImage apply_mask(const GrayImage& img, const RoiMask& roi);

RoiMask load_mask(const std::filesystem::path& path);
void save_mask(const RoiMask& mask, const std::filesystem::path& path);

}  // namespace topocl

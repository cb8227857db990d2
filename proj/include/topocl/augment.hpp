#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "topocl/image.hpp"
#include "topocl/rng.hpp"

namespace topocl {

enum class AugKind {
  kHFlip,
  kVFlip,
  kRot90,
  kGaussianNoise,
  kGaussianBlur,
  kContrast,
  kBrightness,
  kDilate,
  kErode,
};

std::string to_string(AugKind kind);
AugKind parse_aug_kind(const std::string& name);

/// Homeomorphisms permute pixels and carry no real-valued intensity.
bool is_homeomorphism(AugKind kind);
/// Kinds whose parameter is an integer (rotation count, structuring radius).
bool is_integer_kind(AugKind kind);
bool has_parameter(AugKind kind);
/// Closed valid parameter range of a kind.
std::pair<double, double> valid_range(AugKind kind);

/// A single concrete augmentation. `param` is sigma, c, beta, k or r by kind.
struct AugmentationOp {
  AugKind kind = AugKind::kHFlip;
  double param = 0.0;

  void validate() const;
  friend bool operator==(const AugmentationOp&, const AugmentationOp&) = default;
};

GrayImage apply_op(const GrayImage& img, const AugmentationOp& op, CounterRng& rng);

/// Moves a mask along with the pixel permutation of a homeomorphism; other
/// kinds leave the mask untouched.
RoiMask transport_roi(const RoiMask& roi, const AugmentationOp& op);
RoiMask transport_roi(RoiMask roi, const std::vector<AugmentationOp>& applied);

/// Operation whose parameter is drawn uniformly between lo and hi (integers for
/// integer kinds).
struct OpTemplate {
  AugKind kind = AugKind::kHFlip;
  double lo = 0.0;
  double hi = 0.0;

  double at(double t) const;  // lo + t (hi - lo), rounded for integer kinds
  friend bool operator==(const OpTemplate&, const OpTemplate&) = default;
};

struct AugmentationCombo {
  std::vector<OpTemplate> ops;

  void validate() const;
  /// Concrete ops at sweep position t in [0,1].
  std::vector<AugmentationOp> at(double t) const;
  std::string describe() const;
};

struct ComboResult {
  GrayImage image;
  std::vector<AugmentationOp> applied;
  /// Sampled parameters of the ops that have one, in op order.
  std::vector<double> sampled;
};

ComboResult apply_combo(const GrayImage& img, const AugmentationCombo& combo, CounterRng& rng);
GrayImage apply_ops(const GrayImage& img, const std::vector<AugmentationOp>& ops, CounterRng& rng);

// ---- calibration ----

struct Band {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct BandConfig {
  Band weak{0.05, 0.15};
  Band strong{0.15, 0.25};
};

enum class Strength { kWeak, kStrong };
std::string to_string(Strength s);

struct CalibrationEntry {
  AugmentationCombo combo;  // intervals inside the band
  Strength band = Strength::kWeak;
  double median_lo = 0.0;
  double median_hi = 0.0;
  std::size_t samples = 0;
};

struct SweepPoint {
  double t = 0.0;
  double median = 0.0;
};

struct CalibrationTable {
  std::string dataset;
  std::vector<CalibrationEntry> entries;
  /// Full sweep per template; kept for reports, not serialized.
  std::vector<std::vector<SweepPoint>> sweeps;
  std::vector<std::string> unusable;
  std::vector<std::string> notes;

  std::vector<const CalibrationEntry*> band(Strength s) const;
  nlohmann::json to_json() const;
  static CalibrationTable from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static CalibrationTable load(const std::filesystem::path& path);
};

struct CalibrationImage {
  GrayImage image;
  RoiMask roi;
};

struct CalibrationConfig {
  std::size_t grid = 9;
  std::size_t samples = 24;
  BandConfig bands;
  std::uint64_t seed = 0;
  std::string dataset = "toy-shapes";
};

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Median d_B^rel of the concrete ops over the first `samples` corpus images
/// (cycled). Image i always uses the stream rng.derive(i), so sweeps over a
/// parameter share random numbers across grid points.
double median_relative_bottleneck(const std::vector<CalibrationImage>& corpus,
                                  const std::vector<AugmentationOp>& ops, std::size_t samples,
                                  const CounterRng& rng);

/// Sweeps each template from its lower to its upper parameter bound and keeps
/// the widest contiguous grid run whose median lands inside each band.
CalibrationTable calibrate(const std::vector<CalibrationImage>& corpus,
                           const std::vector<AugmentationCombo>& templates,
                           const CalibrationConfig& config);

std::vector<AugmentationCombo> load_combo_templates(const std::filesystem::path& path);
nlohmann::json combo_to_json(const AugmentationCombo& combo);
AugmentationCombo combo_from_json(const nlohmann::json& j);

// ---- training-time sampling ----

struct AugmentedView {
  GrayImage image;
  RoiMask roi;
  std::vector<AugmentationOp> applied;
};

/// Picks a calibrated combo of the given strength uniformly and applies it.
AugmentedView sample_view(const GrayImage& img, const RoiMask& roi, const CalibrationTable& table,
                          Strength strength, CounterRng& rng);

/// Independent weak and strong views; no d_B^rel is computed here.
std::pair<AugmentedView, AugmentedView> sample_view_pair(const GrayImage& img, const RoiMask& roi,
                                                         const CalibrationTable& table,
                                                         CounterRng& rng);

/// Uncalibrated appearance augmentation for the visual branch: random resized
/// crop, flip, brightness/contrast jitter and optional blur.
GrayImage visual_view(const GrayImage& img, CounterRng& rng);

}  // namespace topocl

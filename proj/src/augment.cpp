#include "topocl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "topocl/diagram_metrics.hpp"

namespace topocl {

namespace {

struct KindInfo {
  AugKind kind;
  const char* name;
  double lo;
  double hi;
  bool has_param;
  bool integer;
};

constexpr KindInfo kKinds[] = {
    {AugKind::kHFlip, "hflip", 0.0, 0.0, false, false},
    {AugKind::kVFlip, "vflip", 0.0, 0.0, false, false},
    {AugKind::kRot90, "rot90", 1.0, 3.0, true, true},
    {AugKind::kGaussianNoise, "gaussian_noise", 0.0, 1.0, true, false},
    {AugKind::kGaussianBlur, "gaussian_blur", 0.0, 5.0, true, false},
    {AugKind::kContrast, "contrast", -0.9, 2.0, true, false},
    {AugKind::kBrightness, "brightness", -0.5, 0.5, true, false},
    {AugKind::kDilate, "dilate", 1.0, 3.0, true, true},
    {AugKind::kErode, "erode", 1.0, 3.0, true, true},
};

const KindInfo& info(AugKind kind) {
  for (const auto& k : kKinds) {
    if (k.kind == kind) return k;
  }
  throw std::logic_error("unknown AugKind");
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Source index for each destination pixel under a flip or rotation; also
// reports the output shape.
std::vector<std::size_t> permutation(std::size_t h, std::size_t w, const AugmentationOp& op,
                                     std::size_t& out_h, std::size_t& out_w) {
  std::vector<std::size_t> src(h * w);
  out_h = h;
  out_w = w;
  switch (op.kind) {
    case AugKind::kHFlip:
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) src[r * w + c] = r * w + (w - 1 - c);
      break;
    case AugKind::kVFlip:
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) src[r * w + c] = (h - 1 - r) * w + c;
      break;
    case AugKind::kRot90: {
      // Counter-clockwise by k quarter turns, composed from single turns.
      std::vector<std::size_t> cur(h * w);
      for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = i;
      std::size_t ch = h;
      std::size_t cw = w;
      const int k = static_cast<int>(std::lround(op.param));
      for (int turn = 0; turn < k; ++turn) {
        std::vector<std::size_t> next(cur.size());
        // out[r][c] = in[c][cw - 1 - r], out shape (cw, ch)
        for (std::size_t r = 0; r < cw; ++r)
          for (std::size_t c = 0; c < ch; ++c) next[r * ch + c] = cur[c * cw + (cw - 1 - r)];
        cur.swap(next);
        std::swap(ch, cw);
      }
      out_h = ch;
      out_w = cw;
      src = std::move(cur);
      break;
    }
    default:
      throw std::logic_error("permutation: not a homeomorphism");
  }
  return src;
}

// Mirror index into [0, n) without repeating the edge sample.
std::size_t reflect(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * (static_cast<long>(n) - 1);
  long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

std::vector<double> gaussian_blur(const GrayImage& img, double sigma) {
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  std::vector<double> out(img.data().begin(), img.data().end());
  if (sigma <= 0.0) return out;
  const long radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (long k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-(static_cast<double>(k * k)) / (2.0 * sigma * sigma));
    total += kernel[k + radius];
  }
  for (double& v : kernel) v /= total;

  std::vector<double> tmp(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k)
        acc += kernel[k + radius] * out[r * w + reflect(static_cast<long>(c) + k, w)];
      tmp[r * w + c] = acc;
    }
  }
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (long k = -radius; k <= radius; ++k)
        acc += kernel[k + radius] * tmp[reflect(static_cast<long>(r) + k, h) * w + c];
      out[r * w + c] = clamp01(acc);
    }
  }
  return out;
}

// Grayscale max (dilate) or min (erode) filter over a (2r+1)^2 square;
// neighbours outside the image are ignored.
std::vector<double> morphology(const GrayImage& img, long radius, bool dilate) {
  const long h = static_cast<long>(img.height());
  const long w = static_cast<long>(img.width());
  std::vector<double> out(img.size());
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      double acc = dilate ? 0.0 : 1.0;
      for (long rr = std::max(0L, r - radius); rr <= std::min(h - 1, r + radius); ++rr) {
        for (long cc = std::max(0L, c - radius); cc <= std::min(w - 1, c + radius); ++cc) {
          const double v = img[static_cast<std::size_t>(rr * w + cc)];
          acc = dilate ? std::max(acc, v) : std::min(acc, v);
        }
      }
      out[static_cast<std::size_t>(r * w + c)] = acc;
    }
  }
  return out;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

nlohmann::json op_to_json(const OpTemplate& op) {
  nlohmann::json j{{"kind", to_string(op.kind)}};
  if (has_parameter(op.kind)) {
    j["param_lo"] = op.lo;
    j["param_hi"] = op.hi;
  }
  return j;
}

}  // namespace

std::string to_string(AugKind kind) { return info(kind).name; }

AugKind parse_aug_kind(const std::string& name) {
  for (const auto& k : kKinds) {
    if (name == k.name) return k.kind;
  }
  throw std::invalid_argument("unknown augmentation kind: " + name);
}

bool is_homeomorphism(AugKind kind) {
  return kind == AugKind::kHFlip || kind == AugKind::kVFlip || kind == AugKind::kRot90;
}

bool is_integer_kind(AugKind kind) { return info(kind).integer; }
bool has_parameter(AugKind kind) { return info(kind).has_param; }
std::pair<double, double> valid_range(AugKind kind) { return {info(kind).lo, info(kind).hi}; }

void AugmentationOp::validate() const {
  if (!has_parameter(kind)) return;
  const auto [lo, hi] = valid_range(kind);
  if (!(param >= lo && param <= hi)) {
    std::ostringstream msg;
    msg << to_string(kind) << ": parameter " << param << " outside [" << lo << ", " << hi << "]";
    throw std::invalid_argument(msg.str());
  }
  if (is_integer_kind(kind) && param != std::round(param)) {
    throw std::invalid_argument(to_string(kind) + ": parameter must be an integer");
  }
}

GrayImage apply_op(const GrayImage& img, const AugmentationOp& op, CounterRng& rng) {
  op.validate();
  const std::size_t n = img.size();
  std::vector<double> out(n);
  switch (op.kind) {
    case AugKind::kHFlip:
    case AugKind::kVFlip:
    case AugKind::kRot90: {
      std::size_t oh = 0;
      std::size_t ow = 0;
      const auto src = permutation(img.height(), img.width(), op, oh, ow);
      for (std::size_t i = 0; i < n; ++i) out[i] = img[src[i]];
      return GrayImage(oh, ow, std::move(out));
    }
    case AugKind::kGaussianNoise:
      for (std::size_t i = 0; i < n; ++i) out[i] = clamp01(img[i] + op.param * rng.normal());
      break;
    case AugKind::kGaussianBlur:
      out = gaussian_blur(img, op.param);
      break;
    case AugKind::kContrast:
      for (std::size_t i = 0; i < n; ++i) out[i] = clamp01((img[i] - 0.5) * (1.0 + op.param) + 0.5);
      break;
    case AugKind::kBrightness:
      for (std::size_t i = 0; i < n; ++i) out[i] = clamp01(img[i] + op.param);
      break;
    case AugKind::kDilate:
    case AugKind::kErode:
      out = morphology(img, std::lround(op.param), op.kind == AugKind::kDilate);
      break;
  }
  return GrayImage(img.height(), img.width(), std::move(out));
}

RoiMask transport_roi(const RoiMask& roi, const AugmentationOp& op) {
  if (!is_homeomorphism(op.kind)) return roi;
  std::size_t oh = 0;
  std::size_t ow = 0;
  const auto src = permutation(roi.height(), roi.width(), op, oh, ow);
  std::vector<bool> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) out[i] = roi[src[i]];
  return RoiMask(oh, ow, std::move(out));
}

RoiMask transport_roi(RoiMask roi, const std::vector<AugmentationOp>& applied) {
  for (const auto& op : applied) roi = transport_roi(roi, op);
  return roi;
}

double OpTemplate::at(double t) const {
  const double v = lo + t * (hi - lo);
  return is_integer_kind(kind) ? std::round(v) : v;
}

void AugmentationCombo::validate() const {
  if (ops.empty() || ops.size() > 3) throw std::invalid_argument("combo must hold 1-3 operations");
  for (const auto& op : ops) {
    if (!has_parameter(op.kind)) continue;
    AugmentationOp{op.kind, op.lo}.validate();
    AugmentationOp{op.kind, op.hi}.validate();
  }
}

std::vector<AugmentationOp> AugmentationCombo::at(double t) const {
  std::vector<AugmentationOp> out;
  for (const auto& op : ops) out.push_back({op.kind, has_parameter(op.kind) ? op.at(t) : 0.0});
  return out;
}

std::string AugmentationCombo::describe() const {
  std::ostringstream s;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (i) s << '+';
    s << to_string(ops[i].kind);
    if (has_parameter(ops[i].kind)) s << '[' << ops[i].lo << ',' << ops[i].hi << ']';
  }
  return s.str();
}

GrayImage apply_ops(const GrayImage& img, const std::vector<AugmentationOp>& ops, CounterRng& rng) {
  GrayImage cur = img;
  for (const auto& op : ops) cur = apply_op(cur, op, rng);
  return cur;
}

ComboResult apply_combo(const GrayImage& img, const AugmentationCombo& combo, CounterRng& rng) {
  combo.validate();
  ComboResult result;
  for (const auto& op : combo.ops) {
    AugmentationOp concrete{op.kind, 0.0};
    if (has_parameter(op.kind)) {
      if (is_integer_kind(op.kind)) {
        const auto lo = static_cast<std::uint64_t>(std::lround(std::min(op.lo, op.hi)));
        const auto hi = static_cast<std::uint64_t>(std::lround(std::max(op.lo, op.hi)));
        concrete.param = static_cast<double>(lo + rng.below(hi - lo + 1));
      } else {
        concrete.param = rng.uniform(op.lo, op.hi);
      }
      result.sampled.push_back(concrete.param);
    }
    result.applied.push_back(concrete);
  }
  result.image = apply_ops(img, result.applied, rng);
  return result;
}

std::string to_string(Strength s) { return s == Strength::kWeak ? "weak" : "strong"; }

std::vector<const CalibrationEntry*> CalibrationTable::band(Strength s) const {
  std::vector<const CalibrationEntry*> out;
  for (const auto& e : entries) {
    if (e.band == s) out.push_back(&e);
  }
  return out;
}

nlohmann::json combo_to_json(const AugmentationCombo& combo) {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& op : combo.ops) ops.push_back(op_to_json(op));
  return {{"ops", ops}};
}

AugmentationCombo combo_from_json(const nlohmann::json& j) {
  AugmentationCombo combo;
  for (const auto& op : j.at("ops")) {
    OpTemplate t;
    t.kind = parse_aug_kind(op.at("kind").get<std::string>());
    if (has_parameter(t.kind)) {
      t.lo = op.at("param_lo").get<double>();
      t.hi = op.at("param_hi").get<double>();
    }
    combo.ops.push_back(t);
  }
  combo.validate();
  return combo;
}

nlohmann::json CalibrationTable::to_json() const {
  nlohmann::json combos = nlohmann::json::array();
  for (const auto& e : entries) {
    auto j = combo_to_json(e.combo);
    j["band"] = to_string(e.band);
    j["median_lo"] = e.median_lo;
    j["median_hi"] = e.median_hi;
    j["M"] = e.samples;
    combos.push_back(std::move(j));
  }
  return {{"dataset", dataset}, {"combos", combos}};
}

CalibrationTable CalibrationTable::from_json(const nlohmann::json& j) {
  CalibrationTable table;
  table.dataset = j.at("dataset").get<std::string>();
  for (const auto& c : j.at("combos")) {
    CalibrationEntry e;
    e.combo = combo_from_json(c);
    const auto band = c.at("band").get<std::string>();
    if (band != "weak" && band != "strong") throw std::invalid_argument("bad band: " + band);
    e.band = band == "weak" ? Strength::kWeak : Strength::kStrong;
    e.median_lo = c.at("median_lo").get<double>();
    e.median_hi = c.at("median_hi").get<double>();
    e.samples = c.at("M").get<std::size_t>();
    table.entries.push_back(std::move(e));
  }
  return table;
}

void CalibrationTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

CalibrationTable CalibrationTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return from_json(nlohmann::json::parse(in));
}

std::vector<AugmentationCombo> load_combo_templates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto j = nlohmann::json::parse(in);
  std::vector<AugmentationCombo> out;
  for (const auto& c : j.at("combos")) out.push_back(combo_from_json(c));
  return out;
}

double median_relative_bottleneck(const std::vector<CalibrationImage>& corpus,
                                  const std::vector<AugmentationOp>& ops, std::size_t samples,
                                  const CounterRng& rng) {
  if (corpus.empty()) throw CalibrationError("calibration corpus is empty");
  std::vector<double> values;
  values.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const auto& item = corpus[i % corpus.size()];
    CounterRng stream = rng.derive(i);
    const GrayImage aug = apply_ops(item.image, ops, stream);
    const RoiMask aug_roi = transport_roi(item.roi, ops);
    values.push_back(relative_bottleneck(item.image, aug, item.roi, aug_roi));
  }
  return median_of(std::move(values));
}

CalibrationTable calibrate(const std::vector<CalibrationImage>& corpus,
                           const std::vector<AugmentationCombo>& templates,
                           const CalibrationConfig& config) {
  if (corpus.empty()) throw CalibrationError("calibration corpus is empty");
  if (config.grid < 5) throw std::invalid_argument("calibration grid needs at least 5 points");
  if (config.samples == 0) throw std::invalid_argument("calibration needs at least one sample");

  CalibrationTable table;
  table.dataset = config.dataset;
  const CounterRng root(config.seed);
  std::ostringstream ranges;

  for (std::size_t ci = 0; ci < templates.size(); ++ci) {
    const auto& tmpl = templates[ci];
    tmpl.validate();
    const CounterRng combo_rng = root.derive(ci);
    std::vector<SweepPoint> sweep;
    for (std::size_t g = 0; g < config.grid; ++g) {
      const double t = static_cast<double>(g) / static_cast<double>(config.grid - 1);
      sweep.push_back({t, median_relative_bottleneck(corpus, tmpl.at(t), config.samples, combo_rng)});
    }

    double lo_m = sweep.front().median;
    double hi_m = sweep.front().median;
    for (const auto& p : sweep) {
      lo_m = std::min(lo_m, p.median);
      hi_m = std::max(hi_m, p.median);
    }
    ranges << "  " << tmpl.describe() << ": median d_B^rel in [" << lo_m << ", " << hi_m << "]\n";

    for (Strength s : {Strength::kWeak, Strength::kStrong}) {
      const Band band = s == Strength::kWeak ? config.bands.weak : config.bands.strong;
      std::size_t best_start = 0;
      std::size_t best_len = 0;
      std::size_t runs = 0;
      for (std::size_t g = 0; g < sweep.size();) {
        if (!band.contains(sweep[g].median)) {
          ++g;
          continue;
        }
        std::size_t end = g;
        while (end + 1 < sweep.size() && band.contains(sweep[end + 1].median)) ++end;
        ++runs;
        if (end - g + 1 > best_len) {
          best_len = end - g + 1;
          best_start = g;
        }
        g = end + 1;
      }
      if (best_len == 0) {
        table.unusable.push_back(tmpl.describe() + " (" + to_string(s) + ")");
        continue;
      }
      if (runs > 1) {
        table.notes.push_back(tmpl.describe() + " (" + to_string(s) +
                              "): several disjoint regions, kept the widest");
      }
      const double t_lo = sweep[best_start].t;
      const double t_hi = sweep[best_start + best_len - 1].t;
      CalibrationEntry entry;
      for (const auto& op : tmpl.ops) {
        OpTemplate narrowed = op;
        if (has_parameter(op.kind)) {
          narrowed.lo = std::min(op.at(t_lo), op.at(t_hi));
          narrowed.hi = std::max(op.at(t_lo), op.at(t_hi));
        }
        entry.combo.ops.push_back(narrowed);
      }
      entry.band = s;
      entry.median_lo = sweep[best_start].median;
      entry.median_hi = sweep[best_start + best_len - 1].median;
      entry.samples = config.samples;
      table.entries.push_back(std::move(entry));
    }
    table.sweeps.push_back(std::move(sweep));
  }

  for (Strength s : {Strength::kWeak, Strength::kStrong}) {
    if (table.band(s).empty()) {
      throw CalibrationError("no combo calibratable for the " + to_string(s) + " band; measured:\n" +
                             ranges.str());
    }
  }
  return table;
}

AugmentedView sample_view(const GrayImage& img, const RoiMask& roi, const CalibrationTable& table,
                          Strength strength, CounterRng& rng) {
  const auto candidates = table.band(strength);
  if (candidates.empty()) {
    throw std::invalid_argument("calibration table has no " + to_string(strength) + " combos");
  }
  const auto* entry = candidates[rng.below(candidates.size())];
  ComboResult r = apply_combo(img, entry->combo, rng);
  RoiMask moved = transport_roi(roi, r.applied);
  return {std::move(r.image), std::move(moved), std::move(r.applied)};
}

std::pair<AugmentedView, AugmentedView> sample_view_pair(const GrayImage& img, const RoiMask& roi,
                                                         const CalibrationTable& table,
                                                         CounterRng& rng) {
  if (table.band(Strength::kWeak).empty() || table.band(Strength::kStrong).empty()) {
    throw std::invalid_argument("calibration table needs weak and strong combos");
  }
  AugmentedView weak = sample_view(img, roi, table, Strength::kWeak, rng);
  AugmentedView strong = sample_view(img, roi, table, Strength::kStrong, rng);
  return {std::move(weak), std::move(strong)};
}

GrayImage visual_view(const GrayImage& img, CounterRng& rng) {
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  // Random resized crop: area fraction in [0.5, 1], square aspect, bilinear
  // resampling back to the input size.
  const double scale = std::sqrt(rng.uniform(0.5, 1.0));
  const double ch = scale * static_cast<double>(h - 1);
  const double cw = scale * static_cast<double>(w - 1);
  const double r0 = rng.uniform(0.0, static_cast<double>(h - 1) - ch);
  const double c0 = rng.uniform(0.0, static_cast<double>(w - 1) - cw);
  std::vector<double> out(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double y = r0 + ch * static_cast<double>(r) / static_cast<double>(h - 1);
      const double x = c0 + cw * static_cast<double>(c) / static_cast<double>(w - 1);
      const auto y0 = std::min(static_cast<std::size_t>(y), h - 2);
      const auto x0 = std::min(static_cast<std::size_t>(x), w - 2);
      const double fy = y - static_cast<double>(y0);
      const double fx = x - static_cast<double>(x0);
      const double top = img.at(y0, x0) * (1 - fx) + img.at(y0, x0 + 1) * fx;
      const double bot = img.at(y0 + 1, x0) * (1 - fx) + img.at(y0 + 1, x0 + 1) * fx;
      out[r * w + c] = clamp01(top * (1 - fy) + bot * fy);
    }
  }
  GrayImage cur(h, w, std::move(out));
  if (rng.uniform() < 0.5) cur = apply_op(cur, {AugKind::kHFlip, 0.0}, rng);
  cur = apply_op(cur, {AugKind::kBrightness, rng.uniform(-0.2, 0.2)}, rng);
  cur = apply_op(cur, {AugKind::kContrast, rng.uniform(-0.3, 0.3)}, rng);
  if (rng.uniform() < 0.5) cur = apply_op(cur, {AugKind::kGaussianBlur, rng.uniform(0.1, 1.0)}, rng);
  return cur;
}

}  // namespace topocl

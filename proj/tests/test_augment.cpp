#include <algorithm>

#include "doctest.h"
#include "support.hpp"
#include "topocl/augment.hpp"
#include "topocl/corpus.hpp"
#include "topocl/diagram_metrics.hpp"

using namespace topocl;

namespace {

GrayImage apply1(const GrayImage& img, AugKind kind, double param = 0.0, std::uint64_t seed = 1) {
  CounterRng rng(seed);
  return apply_op(img, {kind, param}, rng);
}

std::vector<CalibrationImage> small_corpus(std::size_t per_class) {
  CorpusConfig cc;
  cc.per_class = per_class;
  cc.seed = 4;
  std::vector<CalibrationImage> out;
  for (auto& s : generate_corpus(cc)) {
    RoiMask roi = extract_roi(s.image);
    out.push_back({std::move(s.image), std::move(roi)});
  }
  return out;
}

}  // namespace

TEST_CASE("flips and rotations are permutations with the right period") {
  CounterRng rng(31);
  const GrayImage img = testsupport::random_image(5, 7, rng);
  CHECK(apply1(apply1(img, AugKind::kHFlip), AugKind::kHFlip) == img);
  CHECK(apply1(apply1(img, AugKind::kVFlip), AugKind::kVFlip) == img);
  const GrayImage r1 = apply1(img, AugKind::kRot90, 1);
  CHECK(r1.height() == 7);
  CHECK(r1.width() == 5);
  // counter-clockwise: the top-right corner moves to the top-left
  CHECK(r1.at(0, 0) == img.at(0, 6));
  CHECK(apply1(apply1(img, AugKind::kRot90, 3), AugKind::kRot90, 1) == img);
  CHECK(apply1(img, AugKind::kRot90, 2) == apply1(apply1(img, AugKind::kHFlip), AugKind::kVFlip));
}

TEST_CASE("zero-strength intensity ops are the identity") {
  CounterRng rng(32);
  const GrayImage img = testsupport::random_image(6, 6, rng);
  CHECK(apply1(img, AugKind::kGaussianNoise, 0.0) == img);
  CHECK(apply1(img, AugKind::kGaussianBlur, 0.0) == img);
  CHECK(apply1(img, AugKind::kContrast, 0.0) == img);
  CHECK(apply1(img, AugKind::kBrightness, 0.0) == img);
}

TEST_CASE("intensity ops stay in range and behave as described") {
  CounterRng rng(33);
  const GrayImage img = testsupport::random_image(8, 8, rng);
  const GrayImage bright = apply1(img, AugKind::kBrightness, 0.2);
  const GrayImage dil = apply1(img, AugKind::kDilate, 1);
  const GrayImage ero = apply1(img, AugKind::kErode, 1);
  const GrayImage flat = apply1(img, AugKind::kContrast, -0.9);
  const GrayImage blur = apply1(img, AugKind::kGaussianBlur, 1.5);
  for (std::size_t i = 0; i < img.size(); ++i) {
    CHECK(bright[i] == std::min(1.0, img[i] + 0.2));
    CHECK(dil[i] >= img[i]);
    CHECK(ero[i] <= img[i]);
    CHECK(std::abs(flat[i] - 0.5) <= std::abs(img[i] - 0.5) + 1e-15);
    CHECK(blur[i] >= 0.0);
    CHECK(blur[i] <= 1.0);
  }
  // blurring a constant image changes nothing
  const GrayImage c(6, 6, 0.3);
  const GrayImage cb = apply1(c, AugKind::kGaussianBlur, 2.0);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(cb[i] == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("noise is reproducible from the stream") {
  CounterRng rng(34);
  const GrayImage img = testsupport::random_image(8, 8, rng);
  CHECK(apply1(img, AugKind::kGaussianNoise, 0.1, 9) == apply1(img, AugKind::kGaussianNoise, 0.1, 9));
  CHECK_FALSE(apply1(img, AugKind::kGaussianNoise, 0.1, 9) == apply1(img, AugKind::kGaussianNoise, 0.1, 10));
}

TEST_CASE("parameters outside the valid range are rejected") {
  CHECK_THROWS_AS(AugmentationOp({AugKind::kBrightness, 0.7}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(AugmentationOp({AugKind::kRot90, 1.5}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(AugmentationOp({AugKind::kErode, 4}).validate(), std::invalid_argument);
  CHECK_NOTHROW(AugmentationOp({AugKind::kContrast, -0.9}).validate());
  CHECK_THROWS(parse_aug_kind("shear"));
}

TEST_CASE("homeomorphisms leave the relative distance at zero") {
  CorpusConfig cc;
  cc.per_class = 3;
  cc.seed = 5;
  for (const auto& s : generate_corpus(cc)) {
    const RoiMask roi = extract_roi(s.image);
    for (AugmentationOp op : {AugmentationOp{AugKind::kHFlip, 0}, AugmentationOp{AugKind::kVFlip, 0},
                              AugmentationOp{AugKind::kRot90, 1}, AugmentationOp{AugKind::kRot90, 3}}) {
      CounterRng rng(1);
      const GrayImage out = apply_op(s.image, op, rng);
      CHECK(relative_bottleneck(s.image, out, roi, transport_roi(roi, op)) == 0.0);
      CHECK(transport_roi(roi, op).count() == roi.count());
    }
  }
}

TEST_CASE("calibration sweep is monotone and bands land inside their ranges") {
  const auto corpus = small_corpus(4);
  AugmentationCombo noise{{{AugKind::kGaussianNoise, 0.0, 0.16}}};
  AugmentationCombo bright{{{AugKind::kBrightness, 0.0, 0.2}}};
  CalibrationConfig cfg;
  cfg.grid = 9;
  cfg.samples = 12;
  cfg.seed = 2;
  const CalibrationTable table = calibrate(corpus, {noise, bright}, cfg);
  REQUIRE(table.sweeps.size() == 2);
  const auto& sweep = table.sweeps[1];
  for (std::size_t i = 1; i < sweep.size(); ++i) CHECK(sweep[i].median >= sweep[i - 1].median);
  CHECK(sweep.front().median == 0.0);
  REQUIRE_FALSE(table.entries.empty());
  for (const auto& e : table.entries) {
    const Band band = e.band == Strength::kWeak ? cfg.bands.weak : cfg.bands.strong;
    CHECK(band.contains(e.median_lo));
    CHECK(band.contains(e.median_hi));
    CHECK(e.samples == 12);
  }
}

TEST_CASE("identity-only template is reported unusable") {
  const auto corpus = small_corpus(4);
  const AugmentationCombo flip{{{AugKind::kHFlip, 0, 0}}};
  CalibrationConfig cfg;
  cfg.grid = 9;
  cfg.samples = 12;
  cfg.seed = 2;
  const CalibrationTable table = calibrate(corpus, {flip, {{{AugKind::kGaussianNoise, 0.0, 0.16}}}}, cfg);
  CHECK(std::count_if(table.unusable.begin(), table.unusable.end(),
                      [](const std::string& u) { return u.find("hflip") != std::string::npos; }) == 2);
  for (const auto& e : table.entries) CHECK(e.combo.ops.front().kind == AugKind::kGaussianNoise);

  cfg.grid = 5;
  cfg.samples = 4;
  try {
    calibrate(small_corpus(2), {flip}, cfg);
    FAIL("expected calibration failure");
  } catch (const CalibrationError& e) {
    CHECK(std::string(e.what()).find("hflip: median d_B^rel in [0, 0]") != std::string::npos);
  }
}

TEST_CASE("table json round trip") {
  CalibrationTable t;
  t.dataset = "shapes";
  CalibrationEntry e;
  e.combo.ops = {{AugKind::kHFlip, 0, 0}, {AugKind::kGaussianBlur, 0.5, 1.25}};
  e.band = Strength::kStrong;
  e.median_lo = 0.16;
  e.median_hi = 0.24;
  e.samples = 30;
  t.entries.push_back(e);
  const CalibrationTable back = CalibrationTable::from_json(t.to_json());
  CHECK(back.dataset == "shapes");
  REQUIRE(back.entries.size() == 1);
  CHECK(back.entries[0].combo.ops == e.combo.ops);
  CHECK(back.entries[0].band == Strength::kStrong);
  CHECK(back.entries[0].median_hi == 0.24);
  CHECK(back.entries[0].samples == 30);
  const auto j = t.to_json();
  CHECK(j.at("combos").at(0).at("M") == 30);
  CHECK(j.at("combos").at(0).at("ops").at(1).at("param_lo") == 0.5);
}

TEST_CASE("sampled views draw parameters inside the calibrated interval") {
  const CalibrationTable table = CalibrationTable::load(TOPOCL_DATA_DIR "/toy_calibration.json");
  REQUIRE_FALSE(table.band(Strength::kWeak).empty());
  REQUIRE_FALSE(table.band(Strength::kStrong).empty());
  CorpusConfig cc;
  cc.per_class = 1;
  const auto s = generate_corpus(cc);
  const RoiMask roi = extract_roi(s[1].image);
  CounterRng rng(7);
  for (int i = 0; i < 30; ++i) {
    const auto [w, st] = sample_view_pair(s[1].image, roi, table, rng);
    CHECK_FALSE(w.applied.empty());
    CHECK_FALSE(st.applied.empty());
    for (const auto& op : w.applied) CHECK_NOTHROW(op.validate());
    CHECK(w.roi.matches(w.image));
    CHECK(st.roi.matches(st.image));
  }
}

TEST_CASE("visual view keeps shape and range") {
  CounterRng rng(35);
  const GrayImage img = testsupport::random_image(32, 32, rng);
  for (int i = 0; i < 5; ++i) {
    const GrayImage v = visual_view(img, rng);
    CHECK(v.same_shape(img));
    for (double x : v.data()) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
    }
  }
}

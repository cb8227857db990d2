#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "topocl/image.hpp"

using namespace topocl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "topocl_test_image";
  fs::create_directories(dir);
  return dir / name;
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

}  // namespace

TEST_CASE("quantization rounds half up") {
  CHECK(quantize_u8(0.0) == 0);
  CHECK(quantize_u8(1.0) == 255);
  CHECK(quantize_u8(0.5 / 255.0) == 1);
  CHECK(quantize_u8(-0.2) == 0);
  CHECK(quantize_u8(1.7) == 255);
}

TEST_CASE("pgm and png round trip at 8 bits") {
  CounterRng rng(3);
  const GrayImage img = testsupport::random_image(7, 5, rng);
  for (auto fmt : {ImageFormat::kPgmAscii, ImageFormat::kPgmBinary, ImageFormat::kPngGray8}) {
    const fs::path p = scratch("rt." + std::to_string(static_cast<int>(fmt)));
    save_image(img, p, fmt);
    const GrayImage back = load_image(p, fmt);
    REQUIRE(back.height() == 7);
    REQUIRE(back.width() == 5);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == quantize_u8(img[i]) / 255.0);
    // second trip is lossless
    save_image(back, p, fmt);
    CHECK(load_image(p, fmt) == back);
  }
}

TEST_CASE("ascii pgm with comments and maxval") {
  const fs::path p = scratch("c.pgm");
  write_text(p, "P2\n# comment\n2 2\n# another\n100\n0 50\n100 25\n");
  const GrayImage img = load_image(p, ImageFormat::kPgmAscii);
  CHECK(img.at(0, 1) == doctest::Approx(0.5));
  CHECK(img.at(1, 0) == 1.0);
}

TEST_CASE("malformed and truncated files are rejected") {
  const fs::path bad = scratch("bad.pgm");
  write_text(bad, "P7\n2 2\n255\n");
  CHECK_THROWS_AS(load_image(bad, ImageFormat::kPgmBinary), ImageParseError);

  const fs::path shortp = scratch("short.pgm");
  write_text(shortp, std::string("P5\n4 4\n255\n") + std::string(5, '\x10'));
  try {
    load_image(shortp, ImageFormat::kPgmBinary);
    FAIL("expected a parse error");
  } catch (const ImageParseError& e) {
    CHECK(e.kind() == ImageParseError::Kind::kTruncatedPayload);
  }

  CHECK_THROWS_AS(load_image(scratch("missing.png"), ImageFormat::kPngGray8), ImageParseError);
}

TEST_CASE("otsu roi keeps the largest dark component") {
  // big dark square, small dark dot elsewhere
  std::vector<double> v(16 * 16, 0.9);
  for (int r = 3; r < 10; ++r)
    for (int c = 3; c < 10; ++c) v[r * 16 + c] = 0.1;
  v[14 * 16 + 14] = 0.1;
  const GrayImage img(16, 16, v);
  const RoiMask roi = extract_roi(img);
  CHECK_FALSE(roi.fallback());
  CHECK(roi.at(5, 5));
  CHECK_FALSE(roi.at(14, 14));
  CHECK(roi.count() >= 49);
}

TEST_CASE("constant image falls back to the full roi") {
  const RoiMask roi = extract_roi(GrayImage(8, 8, 0.4));
  CHECK(roi.fallback());
  CHECK(roi.count() == 64);
}

TEST_CASE("apply_mask sends outside pixels to one") {
  CounterRng rng(5);
  const GrayImage img = testsupport::random_image(4, 4, rng);
  std::vector<bool> m(16, false);
  m[5] = true;
  const GrayImage out = apply_mask(img, RoiMask(4, 4, m));
  CHECK(out[5] == img[5]);
  CHECK(out[0] == 1.0);
}

TEST_CASE("mask file round trip") {
  std::vector<bool> m{true, false, false, true, true, false};
  const RoiMask mask(2, 3, m);
  const fs::path p = scratch("mask.pgm");
  save_mask(mask, p);
  CHECK(load_mask(p) == mask);
}

TEST_CASE("external mask of the wrong shape is an error") {
  const fs::path p = scratch("mask_small.pgm");
  save_mask(RoiMask::full(2, 2), p);
  CHECK_THROWS(extract_roi(GrayImage(3, 3, 0.5), RoiMethod::external(p)));
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "topocl/image.hpp"
#include "topocl/rng.hpp"

namespace topocl {

enum class ShapeClass { kDisk = 0, kAnnulus = 1, kDoubleAnnulus = 2 };
inline constexpr int kShapeClassCount = 3;

std::string to_string(ShapeClass c);
ShapeClass parse_shape_class(const std::string& name);
/// Ground-truth (beta0, beta1) of the noiseless shape.
std::pair<int, int> betti_numbers(ShapeClass c);

struct CorpusConfig {
  std::size_t per_class = 300;
  std::size_t size = 32;
  double noise = 0.03;
  std::uint64_t seed = 0;
};

struct ShapeSample {
  GrayImage image;
  ShapeClass label = ShapeClass::kDisk;
};

/// Dark shapes on a bright background: a solid disk, a disk with one hole or
/// a disk with two holes, with random centre, radii, intensities and mild
/// Gaussian noise. Classes are interleaved: sample i has class i % 3.
std::vector<ShapeSample> generate_corpus(const CorpusConfig& config);

/// One shape; exposed for tests.
ShapeSample render_shape(ShapeClass c, std::size_t size, double noise, CounterRng& rng);

/// Writes img_00000.pgm ... plus labels.csv (file,label).
void save_corpus(const std::vector<ShapeSample>& corpus, const std::filesystem::path& dir);
/// Reads a directory written by save_corpus. Without labels.csv every image
/// file in the directory is loaded with label disk.
std::vector<ShapeSample> load_corpus(const std::filesystem::path& dir);

}  // namespace topocl

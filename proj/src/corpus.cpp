#include "topocl/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "topocl/rng.hpp"

namespace topocl {

std::string to_string(ShapeClass c) {
  switch (c) {
    case ShapeClass::kDisk:
      return "disk";
    case ShapeClass::kAnnulus:
      return "annulus";
    case ShapeClass::kDoubleAnnulus:
      return "double-annulus";
  }
  return "unknown";
}

ShapeClass parse_shape_class(const std::string& name) {
  if (name == "disk" || name == "0") return ShapeClass::kDisk;
  if (name == "annulus" || name == "1") return ShapeClass::kAnnulus;
  if (name == "double-annulus" || name == "2") return ShapeClass::kDoubleAnnulus;
  throw std::invalid_argument("unknown shape class: " + name);
}

std::pair<int, int> betti_numbers(ShapeClass c) {
  return {1, static_cast<int>(c)};
}

ShapeSample render_shape(ShapeClass c, std::size_t size, double noise, CounterRng& rng) {
  if (size < 16) throw std::invalid_argument("corpus images must be at least 16 px");
  const double s = static_cast<double>(size);
  // Radii scale with the image; the disk range overlaps the holed shapes'
  // ink area so size alone does not give the class away.
  double outer = 0.0;
  switch (c) {
    case ShapeClass::kDisk:
      outer = rng.uniform(0.18, 0.34) * s;
      break;
    case ShapeClass::kAnnulus:
      outer = rng.uniform(0.25, 0.40) * s;
      break;
    case ShapeClass::kDoubleAnnulus:
      outer = rng.uniform(0.30, 0.42) * s;
      break;
  }
  const double margin = outer + 1.5;
  if (2.0 * margin >= s) throw std::invalid_argument("radii infeasible for image size");
  const double cy = rng.uniform(margin, s - margin);
  const double cx = rng.uniform(margin, s - margin);
  const double ink = rng.uniform(0.08, 0.25);
  const double background = rng.uniform(0.80, 0.92);

  struct Hole {
    double y, x, r;
  };
  std::vector<Hole> holes;
  if (c == ShapeClass::kAnnulus) {
    const double r = rng.uniform(0.35, 0.6) * outer;
    const double slack = std::max(0.0, outer - r - 2.5);
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double off = rng.uniform(0.0, 0.5) * slack;
    holes.push_back({cy + off * std::sin(a), cx + off * std::cos(a), std::max(r, 2.5)});
  } else if (c == ShapeClass::kDoubleAnnulus) {
    const double r = std::max(2.5, rng.uniform(0.22, 0.3) * outer);
    const double off = std::min(outer - r - 2.0, r + 1.5 + rng.uniform(0.0, 1.0));
    const double a = rng.uniform(0.0, std::numbers::pi);
    holes.push_back({cy + off * std::sin(a), cx + off * std::cos(a), r});
    holes.push_back({cy - off * std::sin(a), cx - off * std::cos(a), r});
  }

  std::vector<double> px(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double py = static_cast<double>(y) + 0.5;
      const double pxx = static_cast<double>(x) + 0.5;
      bool inside = std::hypot(py - cy, pxx - cx) <= outer;
      for (const auto& h : holes) {
        if (std::hypot(py - h.y, pxx - h.x) <= h.r) inside = false;
      }
      double v = inside ? ink : background;
      if (noise > 0.0) v += noise * rng.normal();
      px[y * size + x] = std::clamp(v, 0.0, 1.0);
    }
  }
  return {GrayImage(size, size, std::move(px)), c};
}

std::vector<ShapeSample> generate_corpus(const CorpusConfig& config) {
  std::vector<ShapeSample> out;
  out.reserve(config.per_class * kShapeClassCount);
  const CounterRng root(config.seed);
  for (std::size_t i = 0; i < config.per_class * kShapeClassCount; ++i) {
    CounterRng rng = root.derive(i);
    out.push_back(render_shape(static_cast<ShapeClass>(i % kShapeClassCount), config.size, config.noise, rng));
  }
  return out;
}

void save_corpus(const std::vector<ShapeSample>& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream labels(dir / "labels.csv");
  if (!labels) throw std::runtime_error("cannot write " + (dir / "labels.csv").string());
  labels << "file,label\n";
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.pgm", i);
    save_image(corpus[i].image, dir / name, ImageFormat::kPgmBinary);
    labels << name << ',' << to_string(corpus[i].label) << '\n';
  }
}

std::vector<ShapeSample> load_corpus(const std::filesystem::path& dir) {
  std::vector<ShapeSample> out;
  const auto labels_path = dir / "labels.csv";
  if (std::filesystem::exists(labels_path)) {
    std::ifstream in(labels_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw std::runtime_error("labels.csv: malformed line: " + line);
      const auto file = dir / line.substr(0, comma);
      out.push_back({load_image(file, format_from_extension(file)), parse_shape_class(line.substr(comma + 1))});
    }
    return out;
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (ext == ".pgm" || ext == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back({load_image(f, format_from_extension(f)), ShapeClass::kDisk});
  if (out.empty()) throw std::runtime_error("no images in " + dir.string());
  return out;
}

}  // namespace topocl

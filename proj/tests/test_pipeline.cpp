#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "topocl/pipeline.hpp"

using namespace topocl;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config(std::uint64_t seed) {
  TrainConfig c = TrainConfig::toy();
  c.seed = seed;
  c.batch = 8;
  c.epochs_visual = 2;
  c.epochs_topo = 2;
  c.epochs_joint = 2;
  return c;
}

std::vector<ShapeSample> tiny_corpus() {
  CorpusConfig cc;
  cc.per_class = 6;
  cc.seed = 2;
  return generate_corpus(cc);
}

CalibrationTable table() { return CalibrationTable::load(TOPOCL_DATA_DIR "/toy_calibration.json"); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "topocl_pipeline" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<double> losses_of(const Trainer& t) {
  std::vector<double> out;
  for (const auto& r : t.losses()) out.push_back(r.loss);
  return out;
}

}  // namespace

TEST_CASE("train config json round trip") {
  TrainConfig c = tiny_config(5);
  c.pairing = ViewPairing::kStrongStrong;
  c.loss = LossKind::kBarlow;
  c.topo.cross_attention = false;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK_THROWS(parse_view_pairing("mixed"));
}

TEST_CASE("same seed gives bit-identical loss curves") {
  Trainer a(tiny_corpus(), tiny_config(3), table());
  Trainer b(tiny_corpus(), tiny_config(3), table());
  a.run();
  b.run();
  REQUIRE(a.losses().size() == 6);
  CHECK(losses_of(a) == losses_of(b));
  Trainer c(tiny_corpus(), tiny_config(4), table());
  c.run();
  CHECK(losses_of(a) != losses_of(c));
}

TEST_CASE("resuming mid-stage reproduces the uninterrupted run") {
  Trainer full(tiny_corpus(), tiny_config(6), table());
  full.run();

  Trainer first(tiny_corpus(), tiny_config(6), table());
  first.run_stage(Stage::kVisual);
  first.train_epoch(Stage::kTopo, 0);
  const fs::path dir = scratch("resume");
  first.save_state(dir);

  Trainer second(tiny_corpus(), tiny_config(6), table());
  second.load_state(dir);
  second.run();
  const auto a = losses_of(full);
  const auto b = losses_of(second);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-9);
}

TEST_CASE("bundle round trip gives the same embedding") {
  Trainer t(tiny_corpus(), tiny_config(7), table());
  t.run_stage(Stage::kVisual);
  const fs::path dir = scratch("bundle");
  t.model().save_bundle(dir);
  const auto loaded = TopoClModel::load_bundle(dir);
  const GrayImage& img = t.corpus()[1].image;
  const auto a = infer_single(img, RoiMethod::otsu(), t.model());
  const auto b = infer_single(img, RoiMethod::otsu(), *loaded);
  CHECK(a == b);
  CHECK(a.size() == t.model().config().fusion.out_dim);
  std::ifstream manifest(dir / "manifest.json");
  CHECK(manifest.good());
}

TEST_CASE("loss csv layout") {
  const fs::path dir = scratch("csv");
  write_loss_csv({{1, 0, 0.5}, {3, 2, 1.25}}, dir / "l.csv");
  std::ifstream in(dir / "l.csv");
  std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(all == "stage,epoch,loss\n1,0,0.5\n3,2,1.25\n");
}

TEST_CASE("joint stage without pretraining skips stages one and two") {
  TrainConfig c = tiny_config(8);
  c.pretrain = false;
  Trainer t(tiny_corpus(), c, table());
  t.run();
  REQUIRE(t.losses().size() == 2);
  CHECK(t.losses()[0].stage == 3);
}

TEST_CASE("frozen encoders stay fixed in the joint stage") {
  TrainConfig c = tiny_config(9);
  c.freeze_encoders = true;
  Trainer t(tiny_corpus(), c, table());
  t.run_stage(Stage::kVisual);
  t.run_stage(Stage::kTopo);
  std::vector<double> before;
  for (const auto& p : t.model().topo_params.tensors()) before.insert(before.end(), p.values().begin(), p.values().end());
  t.run_stage(Stage::kJoint);
  std::vector<double> after;
  for (const auto& p : t.model().topo_params.tensors()) after.insert(after.end(), p.values().begin(), p.values().end());
  CHECK(before == after);
}

TEST_CASE("corpus smaller than a batch is rejected") {
  TrainConfig c = tiny_config(1);
  c.batch = 64;
  CHECK_THROWS(Trainer(tiny_corpus(), c, table()));
}

#include "topocl/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "topocl/cubical_ph.hpp"
#include "topocl/losses.hpp"

namespace topocl {

using nn::Tensor;

namespace {

constexpr const char* kBundleFormat = "topocl-bundle";

template <class T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string loss_name(LossKind k) { return k == LossKind::kBarlow ? "barlow" : "nt_xent"; }

LossKind parse_loss(const std::string& s) {
  if (s == "nt_xent" || s == "nt-xent") return LossKind::kNtXent;
  if (s == "barlow") return LossKind::kBarlow;
  throw std::invalid_argument("unknown loss: " + s);
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return nlohmann::json::parse(in);
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

std::string to_string(ViewPairing p) {
  switch (p) {
    case ViewPairing::kWeakStrong:
      return "weak-strong";
    case ViewPairing::kWeakWeak:
      return "weak-weak";
    case ViewPairing::kStrongStrong:
      return "strong-strong";
    case ViewPairing::kVisual:
      return "visual";
  }
  return "unknown";
}

ViewPairing parse_view_pairing(const std::string& s) {
  if (s == "weak-strong") return ViewPairing::kWeakStrong;
  if (s == "weak-weak") return ViewPairing::kWeakWeak;
  if (s == "strong-strong") return ViewPairing::kStrongStrong;
  if (s == "visual") return ViewPairing::kVisual;
  throw std::invalid_argument("unknown view pairing: " + s);
}

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.batch = 64;
  c.epochs_visual = 30;
  c.epochs_topo = 30;
  c.epochs_joint = 30;
  c.visual_head = {64, 64, 64};
  c.topo_head = {64, 64, 64};
  c.visual.channels = {8, 16, 32};
  c.topo.k0 = 16;
  c.topo.k1 = 32;
  c.topo.ph_dims = {4, 16, 32, 32, 32};
  c.topo.proj_hidden = {96, 64};
  c.topo.out_dim = 64;
  c.fusion.visual_raw = 32;
  c.fusion.topo_raw = 64;
  c.fusion.embed = 64;
  c.fusion.head_hidden = 64;
  c.fusion.expert_hidden = 64;
  c.fusion.expert_out = 64;
  c.fusion.gate_hidden = {32, 16};
  c.fusion.proj_hidden = 64;
  c.fusion.out_dim = 64;
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"seed", seed},
          {"batch", batch},
          {"epochs_visual", epochs_visual},
          {"epochs_topo", epochs_topo},
          {"epochs_joint", epochs_joint},
          {"lr", lr},
          {"weight_decay", weight_decay},
          {"tau", tau},
          {"loss", loss_name(loss)},
          {"barlow_lambda", barlow_lambda},
          {"pairing", to_string(pairing)},
          {"pretrain", pretrain},
          {"freeze_encoders", freeze_encoders},
          {"visual_head", visual_head},
          {"topo_head", topo_head},
          {"visual", visual.to_json()},
          {"topo", topo.to_json()},
          {"fusion", fusion.to_json()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  read_if(j, "seed", c.seed);
  read_if(j, "batch", c.batch);
  read_if(j, "epochs_visual", c.epochs_visual);
  read_if(j, "epochs_topo", c.epochs_topo);
  read_if(j, "epochs_joint", c.epochs_joint);
  read_if(j, "lr", c.lr);
  read_if(j, "weight_decay", c.weight_decay);
  read_if(j, "tau", c.tau);
  if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
  read_if(j, "barlow_lambda", c.barlow_lambda);
  if (j.contains("pairing")) c.pairing = parse_view_pairing(j.at("pairing").get<std::string>());
  read_if(j, "pretrain", c.pretrain);
  read_if(j, "freeze_encoders", c.freeze_encoders);
  read_if(j, "visual_head", c.visual_head);
  read_if(j, "topo_head", c.topo_head);
  if (j.contains("visual")) c.visual = VisualEncoderConfig::from_json(j.at("visual"));
  if (j.contains("topo")) c.topo = TopoEncoderConfig::from_json(j.at("topo"));
  if (j.contains("fusion")) c.fusion = FusionConfig::from_json(j.at("fusion"));
  if (c.batch < 2) throw std::invalid_argument("batch must be at least 2");
  if (c.tau <= 0.0) throw std::invalid_argument("tau must be positive");
  return c;
}

TopoClModel::TopoClModel(const TrainConfig& config) : config_(config) {
  config_.fusion.visual_raw = config_.visual.out_dim();
  config_.fusion.topo_raw = config_.topo.out_dim;
  const CounterRng root(config_.seed);
  CounterRng rv = root.derive(1);
  CounterRng rt = root.derive(2);
  CounterRng rf = root.derive(3);
  CounterRng rh = root.derive(4);
  visual = VisualEncoder(visual_params, "", config_.visual, rv);
  topo = TopoEncoder(topo_params, "", config_.topo, rt);
  fusion = MoeFusion(fusion_params, "", config_.fusion, rf);
  std::vector<std::size_t> dv{config_.visual.out_dim()};
  dv.insert(dv.end(), config_.visual_head.begin(), config_.visual_head.end());
  std::vector<std::size_t> dt{config_.topo.out_dim};
  dt.insert(dt.end(), config_.topo_head.begin(), config_.topo_head.end());
  g_v = nn::Mlp(head_params, "g_v", dv, rh);
  g_t = nn::Mlp(head_params, "g_t", dt, rh);
}

TopoClModel::Embedding TopoClModel::infer(const GrayImage& img, const RoiMask& roi) const {
  Embedding e;
  e.visual = visual.encode(img);
  e.t = topo.encode_pd(restrict_and_compute(img, roi));
  e.z = fusion.fuse(fusion.project(e.visual, e.t)).z;
  return e;
}

TopoClModel::Embedding TopoClModel::infer(const GrayImage& img, const RoiMethod& method) const {
  return infer(img, extract_roi(img, method));
}

void TopoClModel::save_bundle(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  visual_params.save(dir / "visual.bin");
  topo_params.save(dir / "topo.bin");
  fusion_params.save(dir / "fusion.bin");
  head_params.save(dir / "heads.bin");
  write_json({{"format", kBundleFormat},
              {"version", 1},
              {"config", config_.to_json()},
              {"files",
               {{"visual", "visual.bin"}, {"topo", "topo.bin"}, {"fusion", "fusion.bin"}, {"heads", "heads.bin"}}}},
             dir / "manifest.json");
}

std::unique_ptr<TopoClModel> TopoClModel::load_bundle(const std::filesystem::path& dir) {
  const auto manifest = read_json(dir / "manifest.json");
  if (manifest.value("format", std::string()) != kBundleFormat) {
    throw std::runtime_error("not a model bundle: " + dir.string());
  }
  auto model = std::make_unique<TopoClModel>(TrainConfig::from_json(manifest.at("config")));
  const auto& files = manifest.at("files");
  model->visual_params.load(dir / files.at("visual").get<std::string>());
  model->topo_params.load(dir / files.at("topo").get<std::string>());
  model->fusion_params.load(dir / files.at("fusion").get<std::string>());
  model->head_params.load(dir / files.at("heads").get<std::string>());
  return model;
}

std::vector<double> infer_single(const GrayImage& img, const RoiMethod& method, const TopoClModel& model) {
  const auto e = model.infer(img, method);
  const auto z = e.z.values();
  return {z.begin(), z.end()};
}

void write_loss_csv(const std::vector<LossRecord>& losses, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "stage,epoch,loss\n";
  char buf[64];
  for (const auto& r : losses) {
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    out << r.stage << ',' << r.epoch << ',' << buf << '\n';
  }
}

Trainer::Trainer(std::vector<ShapeSample> corpus, TrainConfig config, CalibrationTable table)
    : corpus_(std::move(corpus)), config_(std::move(config)), table_(std::move(table)) {
  if (corpus_.size() < config_.batch) throw std::invalid_argument("corpus smaller than one batch");
  rois_.reserve(corpus_.size());
  for (const auto& s : corpus_) rois_.push_back(extract_roi(s.image));
  model_ = std::make_unique<TopoClModel>(config_);
  if (!config_.pretrain) next_stage_ = 3;
  const bool topo_views = config_.pairing != ViewPairing::kVisual;
  if (topo_views && (table_.band(Strength::kWeak).empty() || table_.band(Strength::kStrong).empty())) {
    throw std::invalid_argument("calibration table has an empty band");
  }
}

std::size_t Trainer::steps_per_epoch() const { return corpus_.size() / config_.batch; }

std::size_t Trainer::epochs_for(Stage stage) const {
  switch (stage) {
    case Stage::kVisual:
      return config_.epochs_visual;
    case Stage::kTopo:
      return config_.epochs_topo;
    case Stage::kJoint:
      return config_.epochs_joint;
  }
  return 0;
}

std::vector<std::size_t> Trainer::batch_indices(Stage stage, std::size_t epoch, std::size_t step) const {
  CounterRng rng = CounterRng(config_.seed).derive(100 + static_cast<std::uint64_t>(stage)).derive(epoch);
  std::vector<std::size_t> order(corpus_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return {order.begin() + static_cast<std::ptrdiff_t>(step * config_.batch),
          order.begin() + static_cast<std::ptrdiff_t>((step + 1) * config_.batch)};
}

Trainer::ViewBatch Trainer::make_views(Stage stage, const std::vector<std::size_t>& idx, std::size_t epoch,
                                       std::size_t step) const {
  ViewBatch b;
  const CounterRng base =
      CounterRng(config_.seed).derive(200 + static_cast<std::uint64_t>(stage)).derive(epoch).derive(step);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    CounterRng rng = base.derive(j);
    const GrayImage& img = corpus_[idx[j]].image;
    const RoiMask& roi = rois_[idx[j]];
    if (stage == Stage::kVisual) {
      b.images_w.push_back(visual_view(img, rng));
      b.images_s.push_back(visual_view(img, rng));
      continue;
    }
    AugmentedView w{img, roi, {}};
    AugmentedView s{img, roi, {}};
    switch (config_.pairing) {
      case ViewPairing::kWeakStrong:
        std::tie(w, s) = sample_view_pair(img, roi, table_, rng);
        break;
      case ViewPairing::kWeakWeak:
        w = sample_view(img, roi, table_, Strength::kWeak, rng);
        s = sample_view(img, roi, table_, Strength::kWeak, rng);
        break;
      case ViewPairing::kStrongStrong:
        w = sample_view(img, roi, table_, Strength::kStrong, rng);
        s = sample_view(img, roi, table_, Strength::kStrong, rng);
        break;
      case ViewPairing::kVisual: {
        GrayImage vw = visual_view(img, rng);
        GrayImage vs = visual_view(img, rng);
        RoiMask rw = extract_roi(vw);
        RoiMask rs = extract_roi(vs);
        w = {std::move(vw), std::move(rw), {}};
        s = {std::move(vs), std::move(rs), {}};
        break;
      }
    }
    b.pds_w.push_back(restrict_and_compute(w.image, w.roi));
    b.pds_s.push_back(restrict_and_compute(s.image, s.roi));
    b.images_w.push_back(std::move(w.image));
    b.images_s.push_back(std::move(s.image));
  }
  return b;
}

Tensor Trainer::contrastive(const Tensor& zw, const Tensor& zs) const {
  return config_.loss == LossKind::kBarlow ? barlow_loss(zw, zs, config_.barlow_lambda)
                                           : nt_xent(zw, zs, config_.tau);
}

void Trainer::ensure_optimizer(Stage stage) {
  if (optimizer_stage_ == static_cast<int>(stage)) return;
  stage_params_ = nn::ParameterSet();
  TopoClModel& m = *model_;
  nn::ParameterSet heads_v;
  nn::ParameterSet heads_t;
  for (std::size_t i = 0; i < m.head_params.size(); ++i) {
    const auto& name = m.head_params.names()[i];
    (name.rfind("g_v", 0) == 0 ? heads_v : heads_t).add(name, m.head_params.tensors()[i]);
  }
  switch (stage) {
    case Stage::kVisual:
      stage_params_.merge("visual.", m.visual_params);
      stage_params_.merge("heads.", heads_v);
      break;
    case Stage::kTopo:
      stage_params_.merge("topo.", m.topo_params);
      stage_params_.merge("heads.", heads_t);
      break;
    case Stage::kJoint:
      if (!config_.freeze_encoders) {
        stage_params_.merge("visual.", m.visual_params);
        stage_params_.merge("topo.", m.topo_params);
      }
      stage_params_.merge("fusion.", m.fusion_params);
      break;
  }
  nn::AdamWConfig oc;
  oc.lr = config_.lr;
  oc.weight_decay = config_.weight_decay;
  optimizer_ = std::make_unique<nn::AdamW>(stage_params_, oc);
  optimizer_stage_ = static_cast<int>(stage);
}

double Trainer::batch_loss(Stage stage, std::size_t epoch, std::size_t step, bool update) {
  const auto idx = batch_indices(stage, epoch, step);
  const ViewBatch views = make_views(stage, idx, epoch, step);
  const TopoClModel& m = *model_;
  Tensor loss;
  switch (stage) {
    case Stage::kVisual:
      loss = contrastive(m.g_v(m.visual.encode_batch(views.images_w)), m.g_v(m.visual.encode_batch(views.images_s)));
      break;
    case Stage::kTopo:
      loss = contrastive(m.g_t(m.topo.encode_batch(views.pds_w)), m.g_t(m.topo.encode_batch(views.pds_s)));
      break;
    case Stage::kJoint: {
      const auto zw = m.fusion.fuse(m.fusion.project(m.visual.encode_batch(views.images_w),
                                                     m.topo.encode_batch(views.pds_w)))
                          .z;
      const auto zs = m.fusion.fuse(m.fusion.project(m.visual.encode_batch(views.images_s),
                                                     m.topo.encode_batch(views.pds_s)))
                          .z;
      loss = contrastive(zw, zs);
      break;
    }
  }
  if (update) {
    ensure_optimizer(stage);
    stage_params_.zero_grad();
    nn::backward(loss);
    const std::size_t total = epochs_for(stage) * steps_per_epoch();
    optimizer_->step(nn::cosine_lr(config_.lr, epoch * steps_per_epoch() + step, total));
  }
  return loss.item();
}

double Trainer::train_epoch(Stage stage, std::size_t epoch) {
  double total = 0.0;
  const std::size_t steps = steps_per_epoch();
  for (std::size_t step = 0; step < steps; ++step) total += batch_loss(stage, epoch, step, true);
  const double mean = total / static_cast<double>(steps);
  losses_.push_back({static_cast<int>(stage), epoch, mean});
  next_stage_ = static_cast<int>(stage);
  next_epoch_ = epoch + 1;
  if (next_epoch_ >= epochs_for(stage)) {
    ++next_stage_;
    next_epoch_ = 0;
  }
  return mean;
}

void Trainer::run_stage(Stage stage) {
  const int s = static_cast<int>(stage);
  if (s < next_stage_) return;
  if (s > next_stage_) next_epoch_ = 0;
  next_stage_ = s;
  for (std::size_t epoch = next_epoch_; epoch < epochs_for(stage); ++epoch) train_epoch(stage, epoch);
  next_stage_ = s + 1;
  next_epoch_ = 0;
}

void Trainer::run() {
  for (int s = next_stage_; s <= 3; ++s) run_stage(static_cast<Stage>(s));
}

void Trainer::save_state(const std::filesystem::path& dir) const {
  model_->save_bundle(dir);
  nlohmann::json losses = nlohmann::json::array();
  for (const auto& r : losses_) losses.push_back({r.stage, r.epoch, r.loss});
  const bool mid_stage = optimizer_ && optimizer_stage_ == next_stage_;
  if (mid_stage) optimizer_->save_state(dir / "optimizer.bin");
  write_json({{"next_stage", next_stage_},
              {"next_epoch", next_epoch_},
              {"optimizer_stage", mid_stage ? optimizer_stage_ : 0},
              {"losses", losses}},
             dir / "progress.json");
}

void Trainer::load_state(const std::filesystem::path& dir) {
  auto loaded = TopoClModel::load_bundle(dir);
  model_->visual_params.copy_values_from(loaded->visual_params);
  model_->topo_params.copy_values_from(loaded->topo_params);
  model_->fusion_params.copy_values_from(loaded->fusion_params);
  model_->head_params.copy_values_from(loaded->head_params);
  const auto progress = read_json(dir / "progress.json");
  next_stage_ = progress.at("next_stage").get<int>();
  next_epoch_ = progress.at("next_epoch").get<std::size_t>();
  losses_.clear();
  for (const auto& r : progress.at("losses")) {
    losses_.push_back({r.at(0).get<int>(), r.at(1).get<std::size_t>(), r.at(2).get<double>()});
  }
  optimizer_.reset();
  optimizer_stage_ = 0;
  const int opt_stage = progress.at("optimizer_stage").get<int>();
  if (opt_stage != 0) {
    ensure_optimizer(static_cast<Stage>(opt_stage));
    optimizer_->load_state(dir / "optimizer.bin");
  }
}

FeatureSets extract_features(const TopoClModel& model, const std::vector<ShapeSample>& corpus,
                             const std::vector<RoiMask>& rois) {
  if (rois.size() != corpus.size()) throw std::invalid_argument("extract_features: one ROI per image");
  FeatureSets out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto e = model.infer(corpus[i].image, rois[i]);
    const int label = static_cast<int>(corpus[i].label);
    auto put = [&](LabeledFeatures& f, const Tensor& t) {
      f.dim = t.size();
      f.x.insert(f.x.end(), t.values().begin(), t.values().end());
      f.y.push_back(label);
    };
    put(out.visual, e.visual);
    put(out.topo, e.t);
    put(out.fused, e.z);
  }
  return out;
}

ProbeResult probe_features(const LabeledFeatures& features, std::uint64_t split_seed, const ProbeConfig& config) {
  LabeledFeatures train;
  LabeledFeatures test;
  stratified_split(features, 0.7, split_seed, train, test);
  return linear_probe(train, test, config);
}

}  // namespace topocl

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "topocl/augment.hpp"
#include "topocl/corpus.hpp"
#include "topocl/eval.hpp"
#include "topocl/moe_fusion.hpp"
#include "topocl/topo_encoder.hpp"
#include "topocl/visual_encoder.hpp"

namespace topocl {

enum class Stage { kVisual = 1, kTopo = 2, kJoint = 3 };

/// Which views form a positive pair in the topology and joint stages.
enum class ViewPairing { kWeakStrong, kWeakWeak, kStrongStrong, kVisual };
std::string to_string(ViewPairing p);
ViewPairing parse_view_pairing(const std::string& s);

enum class LossKind { kNtXent, kBarlow };

struct TrainConfig {
  std::uint64_t seed = 0;
  std::size_t batch = 64;
  std::size_t epochs_visual = 30;
  std::size_t epochs_topo = 30;
  std::size_t epochs_joint = 30;
  double lr = 3e-4;
  double weight_decay = 1e-4;
  double tau = 0.2;
  LossKind loss = LossKind::kNtXent;
  double barlow_lambda = 5e-3;
  ViewPairing pairing = ViewPairing::kWeakStrong;
  /// false skips stages 1 and 2 so the joint stage starts from random encoders.
  bool pretrain = true;
  bool freeze_encoders = false;
  /// Widths after the raw feature for the pretraining heads g_v and g_t.
  std::vector<std::size_t> visual_head{256, 256, 128};
  std::vector<std::size_t> topo_head{256, 256, 128};
  VisualEncoderConfig visual;
  TopoEncoderConfig topo;
  FusionConfig fusion;

  /// Reduced widths that keep toy runs to a few minutes on one core.
  static TrainConfig toy();
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// All parameters of the three networks plus the two pretraining heads.
class TopoClModel {
 public:
  explicit TopoClModel(const TrainConfig& config);
  TopoClModel(const TopoClModel&) = delete;
  TopoClModel& operator=(const TopoClModel&) = delete;

  nn::ParameterSet visual_params;
  nn::ParameterSet topo_params;
  nn::ParameterSet fusion_params;
  nn::ParameterSet head_params;
  VisualEncoder visual;
  TopoEncoder topo;
  MoeFusion fusion;
  nn::Mlp g_v;
  nn::Mlp g_t;

  struct Embedding {
    nn::Tensor visual;  // raw visual feature
    nn::Tensor t;       // topology feature
    nn::Tensor z;       // fused embedding
  };
  /// Inference path: ROI, PD without augmentation, both encoders, fusion.
  Embedding infer(const GrayImage& img, const RoiMask& roi) const;
  Embedding infer(const GrayImage& img, const RoiMethod& method = RoiMethod::otsu()) const;

  /// Bundle directory: manifest.json plus one checkpoint per parameter set.
  void save_bundle(const std::filesystem::path& dir) const;
  static std::unique_ptr<TopoClModel> load_bundle(const std::filesystem::path& dir);

  const TrainConfig& config() const { return config_; }

 private:
  TrainConfig config_;
};

/// Embedding of one image under a saved bundle (the `embed` path).
std::vector<double> infer_single(const GrayImage& img, const RoiMethod& method, const TopoClModel& model);

struct LossRecord {
  int stage = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
};

void write_loss_csv(const std::vector<LossRecord>& losses, const std::filesystem::path& path);

class Trainer {
 public:
  Trainer(std::vector<ShapeSample> corpus, TrainConfig config, CalibrationTable table);

  /// Runs every remaining stage and epoch.
  void run();
  void run_stage(Stage stage);
  /// Mean batch loss of one epoch; parameters are updated.
  double train_epoch(Stage stage, std::size_t epoch);
  /// Loss of one batch; with `update` the optimizer takes a step.
  double batch_loss(Stage stage, std::size_t epoch, std::size_t step, bool update);

  std::size_t steps_per_epoch() const;
  const std::vector<LossRecord>& losses() const { return losses_; }
  TopoClModel& model() { return *model_; }
  const TopoClModel& model() const { return *model_; }
  const std::vector<ShapeSample>& corpus() const { return corpus_; }
  const std::vector<RoiMask>& rois() const { return rois_; }

  /// Everything needed to continue: bundle, optimizer moments, progress.
  void save_state(const std::filesystem::path& dir) const;
  void load_state(const std::filesystem::path& dir);

 private:
  struct ViewBatch {
    std::vector<GrayImage> images_w;
    std::vector<GrayImage> images_s;
    std::vector<PersistenceDiagram> pds_w;
    std::vector<PersistenceDiagram> pds_s;
  };
  std::vector<std::size_t> batch_indices(Stage stage, std::size_t epoch, std::size_t step) const;
  ViewBatch make_views(Stage stage, const std::vector<std::size_t>& idx, std::size_t epoch, std::size_t step) const;
  nn::Tensor contrastive(const nn::Tensor& zw, const nn::Tensor& zs) const;
  void ensure_optimizer(Stage stage);
  std::size_t epochs_for(Stage stage) const;
  nn::ParameterSet& trainable(Stage stage);

  std::vector<ShapeSample> corpus_;
  std::vector<RoiMask> rois_;
  TrainConfig config_;
  CalibrationTable table_;
  std::unique_ptr<TopoClModel> model_;
  // Parameters seen by the optimizer of the current stage.
  nn::ParameterSet stage_params_;
  std::unique_ptr<nn::AdamW> optimizer_;
  int optimizer_stage_ = 0;
  std::vector<LossRecord> losses_;
  int next_stage_ = 1;
  std::size_t next_epoch_ = 0;
};

/// Features of every corpus image under a model, with shape labels.
struct FeatureSets {
  LabeledFeatures visual;
  LabeledFeatures topo;
  LabeledFeatures fused;
};
FeatureSets extract_features(const TopoClModel& model, const std::vector<ShapeSample>& corpus,
                             const std::vector<RoiMask>& rois);

ProbeResult probe_features(const LabeledFeatures& features, std::uint64_t split_seed,
                           const ProbeConfig& config = {});

}  // namespace topocl

// Command-line front end for the topocl library.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "topocl/augment.hpp"
#include "topocl/corpus.hpp"
#include "topocl/cubical_ph.hpp"
#include "topocl/diagram_metrics.hpp"
#include "topocl/eval.hpp"
#include "topocl/pipeline.hpp"
#include "topocl/topo_encoder.hpp"

namespace fs = std::filesystem;
using namespace topocl;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;
};

nlohmann::json load_config(const Globals& g) {
  if (g.config.empty()) return nlohmann::json::object();
  std::ifstream in(g.config);
  if (!in) throw std::runtime_error("cannot open config " + g.config);
  return nlohmann::json::parse(in);
}

fs::path out_dir(const Globals& g) {
  const fs::path dir = g.out.empty() ? fs::path(".") : fs::path(g.out);
  fs::create_directories(dir);
  return dir;
}

RoiMask roi_for(const GrayImage& img, const std::string& roi, const std::string& mask) {
  if (!mask.empty()) return extract_roi(img, RoiMethod::external(mask));
  if (roi == "full") return RoiMask::full(img.height(), img.width());
  if (roi != "otsu") throw std::invalid_argument("--roi must be otsu or full");
  RoiMask m = extract_roi(img, RoiMethod::otsu());
  if (m.fallback()) std::cerr << "warning: constant image, using the full image as ROI\n";
  return m;
}

GrayImage load_any(const std::string& path) { return load_image(path, format_from_extension(path)); }

void write_vector_csv(std::span<const double> v, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "index,value\n";
  char buf[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    out << i << ',' << buf << '\n';
  }
}

void write_json_file(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) v.push_back(std::stod(item));
  }
  return v;
}

TrainConfig train_config(const Globals& g) {
  nlohmann::json j = TrainConfig::toy().to_json();
  j.merge_patch(load_config(g));
  j["seed"] = g.seed;
  return TrainConfig::from_json(j);
}

CorpusConfig corpus_config(const Globals& g, const nlohmann::json& j) {
  CorpusConfig c;
  c.seed = g.seed;
  if (j.contains("corpus")) {
    const auto& cj = j.at("corpus");
    c.per_class = cj.value("per_class", c.per_class);
    c.size = cj.value("size", c.size);
    c.noise = cj.value("noise", c.noise);
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topology-aware contrastive learning toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--config", g.config, "JSON configuration file");
  app.add_option("--out", g.out, "Output directory");

  // pd
  auto* pd_cmd = app.add_subcommand("pd", "Persistence diagram of an image (ROI-restricted)");
  std::string pd_img, pd_roi = "otsu", pd_mask;
  pd_cmd->add_option("--img", pd_img, "Input image (.pgm or .png)")->required();
  pd_cmd->add_option("--roi", pd_roi, "otsu or full");
  pd_cmd->add_option("--mask", pd_mask, "External ROI mask (PGM, 0/255)");

  // dist
  auto* dist_cmd = app.add_subcommand("dist", "Bottleneck and relative bottleneck distances");
  std::string da_img, db_img, da_pd, db_pd, d_roi = "otsu", d_mask;
  dist_cmd->add_option("--img-a", da_img, "Original image");
  dist_cmd->add_option("--img-b", db_img, "Augmented image");
  dist_cmd->add_option("--pd-a", da_pd, "Original diagram CSV");
  dist_cmd->add_option("--pd-b", db_pd, "Augmented diagram CSV");
  dist_cmd->add_option("--roi", d_roi, "otsu or full (ROI of the original image)");
  dist_cmd->add_option("--mask", d_mask, "External ROI mask");

  // calibrate
  auto* cal_cmd = app.add_subcommand("calibrate", "Map augmentation intensities to relative bottleneck bands");
  std::string cal_corpus, cal_combos, cal_out = "table.json", cal_dataset = "toy-shapes";
  std::size_t cal_grid = 9, cal_samples = 24;
  cal_cmd->add_option("--corpus", cal_corpus, "Corpus directory")->required();
  cal_cmd->add_option("--combos", cal_combos, "Combo templates JSON")->required();
  cal_cmd->add_option("--grid", cal_grid, "Grid points per sweep (>= 5)");
  cal_cmd->add_option("--samples", cal_samples, "Images per grid point");
  cal_cmd->add_option("--out", cal_out, "Output table JSON");
  cal_cmd->add_option("--dataset", cal_dataset, "Dataset id stored in the table");

  // augment
  auto* aug_cmd = app.add_subcommand("augment", "Apply augmentations to an image");
  std::string aug_img, aug_table, aug_strength = "pair";
  std::vector<std::string> aug_ops;
  aug_cmd->add_option("--img", aug_img, "Input image")->required();
  aug_cmd->add_option("--table", aug_table, "Calibration table (sampling mode)");
  aug_cmd->add_option("--strength", aug_strength, "weak, strong or pair");
  aug_cmd->add_option("--op", aug_ops, "Explicit op kind[:param], repeatable");

  // encode
  auto* enc_cmd = app.add_subcommand("encode", "Topology feature t of a diagram");
  std::string enc_pd, enc_ckpt, enc_out = "t.csv";
  enc_cmd->add_option("--pd", enc_pd, "Diagram CSV")->required();
  enc_cmd->add_option("--ckpt", enc_ckpt, "Topology encoder checkpoint or bundle directory")->required();
  enc_cmd->add_option("--out", enc_out, "Output CSV");

  // embed
  auto* emb_cmd = app.add_subcommand("embed", "Fused embedding z of an image");
  std::string emb_img, emb_ckpt, emb_out = "z.csv", emb_mask;
  emb_cmd->add_option("--img", emb_img, "Input image")->required();
  emb_cmd->add_option("--ckpt", emb_ckpt, "Bundle directory")->required();
  emb_cmd->add_option("--out", emb_out, "Output CSV");
  emb_cmd->add_option("--mask", emb_mask, "External ROI mask");

  // gen-corpus
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Synthetic disk / annulus / double-annulus corpus");
  std::size_t gen_per_class = 300, gen_size = 32;
  double gen_noise = 0.03;
  gen_cmd->add_option("--per-class", gen_per_class, "Images per class");
  gen_cmd->add_option("--size", gen_size, "Image side in pixels");
  gen_cmd->add_option("--noise", gen_noise, "Gaussian noise sigma");

  // train-toy
  auto* train_cmd = app.add_subcommand("train-toy", "Three-stage training on the toy corpus, then probes");
  std::string train_corpus, train_table = "data/toy_calibration.json", train_resume;
  train_cmd->add_option("--corpus", train_corpus, "Corpus directory (default: generate)");
  train_cmd->add_option("--table", train_table, "Calibration table JSON");
  train_cmd->add_option("--resume", train_resume, "State directory to continue from");

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "Linear probe on frozen features of a bundle");
  std::string probe_ckpt, probe_corpus, probe_kind = "fused";
  std::size_t probe_epochs = 100;
  probe_cmd->add_option("--ckpt", probe_ckpt, "Bundle directory")->required();
  probe_cmd->add_option("--corpus", probe_corpus, "Labelled corpus directory")->required();
  probe_cmd->add_option("--features", probe_kind, "visual, topo or fused");
  probe_cmd->add_option("--epochs", probe_epochs, "Probe epochs");

  // ttest
  auto* tt_cmd = app.add_subcommand("ttest", "Paired t-test of per-run scores");
  std::string tt_a, tt_b;
  tt_cmd->add_option("--a", tt_a, "Comma-separated scores")->required();
  tt_cmd->add_option("--b", tt_b, "Comma-separated scores")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pd_cmd) {
      const GrayImage img = load_any(pd_img);
      const PersistenceDiagram pd = restrict_and_compute(img, roi_for(img, pd_roi, pd_mask));
      if (g.out.empty()) {
        write_pd_csv(pd, std::cout);
      } else {
        write_pd_csv(pd, out_dir(g) / "pd.csv");
      }
    } else if (*dist_cmd) {
      RelativeBottleneck r;
      if (!da_pd.empty() && !db_pd.empty()) {
        r = relative_bottleneck_detail(read_pd_csv(da_pd), read_pd_csv(db_pd));
      } else if (!da_img.empty() && !db_img.empty()) {
        const GrayImage a = load_any(da_img);
        const GrayImage b = load_any(db_img);
        r = relative_bottleneck_detail(a, b, roi_for(a, d_roi, d_mask));
      } else {
        throw std::invalid_argument("dist needs --img-a/--img-b or --pd-a/--pd-b");
      }
      std::ostringstream csv;
      csv << "dim,d_B,span,ratio,max_ratio\n";
      char buf[160];
      for (int q = 0; q < 2; ++q) {
        if (r.included[q]) {
          std::snprintf(buf, sizeof buf, "%d,%.9f,%.9f,%.9f,%.9f\n", q, r.d_b[q], r.span[q], r.ratio[q], r.max_ratio);
        } else {
          std::snprintf(buf, sizeof buf, "%d,%.9f,%.9f,,%.9f\n", q, r.d_b[q], r.span[q], r.max_ratio);
        }
        csv << buf;
      }
      if (g.out.empty()) {
        std::cout << csv.str();
      } else {
        std::ofstream(out_dir(g) / "dist.csv") << csv.str();
      }
    } else if (*cal_cmd) {
      std::vector<CalibrationImage> corpus;
      for (auto& s : load_corpus(cal_corpus)) {
        RoiMask roi = extract_roi(s.image);
        corpus.push_back({std::move(s.image), std::move(roi)});
      }
      CalibrationConfig cfg;
      cfg.grid = cal_grid;
      cfg.samples = cal_samples;
      cfg.seed = g.seed;
      cfg.dataset = cal_dataset;
      const auto j = load_config(g);
      if (j.contains("bands")) {
        cfg.bands.weak = {j["bands"]["weak"][0].get<double>(), j["bands"]["weak"][1].get<double>()};
        cfg.bands.strong = {j["bands"]["strong"][0].get<double>(), j["bands"]["strong"][1].get<double>()};
      }
      const auto templates = load_combo_templates(cal_combos);
      const CalibrationTable table = calibrate(corpus, templates, cfg);
      table.save(cal_out);
      for (std::size_t i = 0; i < templates.size(); ++i) {
        std::cerr << templates[i].describe() << ':';
        for (const auto& p : table.sweeps[i]) std::cerr << ' ' << p.median;
        std::cerr << '\n';
      }
      for (const auto& u : table.unusable) std::cerr << "unusable: " << u << '\n';
      for (const auto& n : table.notes) std::cerr << "note: " << n << '\n';
      std::cerr << table.entries.size() << " calibrated entries written to " << cal_out << '\n';
    } else if (*aug_cmd) {
      const GrayImage img = load_any(aug_img);
      const fs::path dir = out_dir(g);
      CounterRng rng(g.seed);
      if (!aug_ops.empty()) {
        std::vector<AugmentationOp> ops;
        for (const auto& arg : aug_ops) {
          const auto colon = arg.find(':');
          AugmentationOp op{parse_aug_kind(arg.substr(0, colon)),
                            colon == std::string::npos ? 0.0 : std::stod(arg.substr(colon + 1))};
          if (op.kind == AugKind::kRot90 && colon == std::string::npos) op.param = 1;
          ops.push_back(op);
        }
        save_image(apply_ops(img, ops, rng), dir / "augmented.pgm", ImageFormat::kPgmBinary);
      } else {
        if (aug_table.empty()) throw std::invalid_argument("augment needs --op or --table");
        const CalibrationTable table = CalibrationTable::load(aug_table);
        const RoiMask roi = extract_roi(img);
        nlohmann::json log = nlohmann::json::array();
        auto emit = [&](const AugmentedView& v, const std::string& name) {
          save_image(v.image, dir / (name + ".pgm"), ImageFormat::kPgmBinary);
          nlohmann::json ops = nlohmann::json::array();
          for (const auto& op : v.applied) ops.push_back({{"kind", to_string(op.kind)}, {"param", op.param}});
          log.push_back({{"view", name}, {"ops", ops}});
        };
        if (aug_strength == "pair") {
          const auto [w, s] = sample_view_pair(img, roi, table, rng);
          emit(w, "weak");
          emit(s, "strong");
        } else if (aug_strength == "weak" || aug_strength == "strong") {
          emit(sample_view(img, roi, table, aug_strength == "weak" ? Strength::kWeak : Strength::kStrong, rng),
               aug_strength);
        } else {
          throw std::invalid_argument("--strength must be weak, strong or pair");
        }
        std::cout << log.dump(2) << '\n';
      }
    } else if (*enc_cmd) {
      nn::ParameterSet params;
      // bare checkpoints only carry widths; k and flags come from the training config
      TopoEncoderConfig base = train_config(g).topo;
      fs::path ckpt = enc_ckpt;
      if (fs::is_directory(ckpt)) {
        std::ifstream in(ckpt / "manifest.json");
        const auto manifest = nlohmann::json::parse(in);
        base = TopoEncoderConfig::from_json(manifest.at("config").at("topo"));
        ckpt /= manifest.at("files").at("topo").get<std::string>();
      }
      const nn::ParameterSet stored = nn::ParameterSet::read(ckpt);
      CounterRng rng(0);
      TopoEncoder encoder(params, "", TopoEncoderConfig::from_parameters(stored, base), rng);
      params.copy_values_from(stored);
      const auto t = encoder.encode_pd(read_pd_csv(enc_pd), false);
      write_vector_csv(t.values(), enc_out);
    } else if (*emb_cmd) {
      const auto model = TopoClModel::load_bundle(emb_ckpt);
      const GrayImage img = load_any(emb_img);
      const RoiMethod method = emb_mask.empty() ? RoiMethod::otsu() : RoiMethod::external(emb_mask);
      const auto z = infer_single(img, method, *model);
      write_vector_csv(z, emb_out);
    } else if (*gen_cmd) {
      CorpusConfig c;
      c.per_class = gen_per_class;
      c.size = gen_size;
      c.noise = gen_noise;
      c.seed = g.seed;
      const fs::path dir = out_dir(g);
      save_corpus(generate_corpus(c), dir);
      std::cerr << c.per_class * kShapeClassCount << " images written to " << dir << '\n';
    } else if (*train_cmd) {
      const auto j = load_config(g);
      const TrainConfig cfg = train_config(g);
      const std::vector<ShapeSample> corpus =
          train_corpus.empty() ? generate_corpus(corpus_config(g, j)) : load_corpus(train_corpus);
      Trainer trainer(corpus, cfg, CalibrationTable::load(train_table));
      if (!train_resume.empty()) trainer.load_state(train_resume);
      const fs::path dir = out_dir(g);
      trainer.run();
      write_loss_csv(trainer.losses(), dir / "losses.csv");
      trainer.model().save_bundle(dir / "bundle");
      const FeatureSets f = extract_features(trainer.model(), trainer.corpus(), trainer.rois());
      write_json_file({{"visual", probe_features(f.visual, g.seed).to_json()},
                       {"topo", probe_features(f.topo, g.seed).to_json()},
                       {"fused", probe_features(f.fused, g.seed).to_json()}},
                      dir / "probe.json");
      std::cerr << "losses, bundle and probe results written to " << dir << '\n';
    } else if (*probe_cmd) {
      const auto model = TopoClModel::load_bundle(probe_ckpt);
      const auto corpus = load_corpus(probe_corpus);
      std::vector<RoiMask> rois;
      for (const auto& s : corpus) rois.push_back(extract_roi(s.image));
      const FeatureSets f = extract_features(*model, corpus, rois);
      const LabeledFeatures* chosen = nullptr;
      if (probe_kind == "visual") chosen = &f.visual;
      if (probe_kind == "topo") chosen = &f.topo;
      if (probe_kind == "fused") chosen = &f.fused;
      if (!chosen) throw std::invalid_argument("--features must be visual, topo or fused");
      ProbeConfig pc;
      pc.epochs = probe_epochs;
      const auto result = topocl::probe_features(*chosen, g.seed, pc);
      const auto text = nlohmann::json{{"features", probe_kind}, {"result", result.to_json()}}.dump(2);
      if (g.out.empty()) {
        std::cout << text << '\n';
      } else {
        std::ofstream(out_dir(g) / "probe.json") << text << '\n';
      }
    } else if (*tt_cmd) {
      std::cout << paired_ttest(parse_list(tt_a), parse_list(tt_b)).to_json().dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

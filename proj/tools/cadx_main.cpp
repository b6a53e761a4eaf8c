// cadx: command-line front end for the volume classification pipeline.

#include <algorithm>
#include <array>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cadx/checkpoint.hpp"
#include "cadx/common.hpp"
#include "cadx/config.hpp"
#include "cadx/cross_validation.hpp"
#include "cadx/evaluation.hpp"
#include "cadx/explain.hpp"
#include "cadx/pca.hpp"
#include "cadx/pipeline.hpp"
#include "cadx/plots.hpp"

namespace fs = std::filesystem;
using namespace cadx;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::string manifest;
  std::string model;
  std::optional<std::uint64_t> seed;
  std::optional<int> folds;
  std::optional<int> epochs;
  std::optional<double> threshold;
  std::string volume;
  int age = 0;
  int hpv = 0;
  std::string frame;
  std::string method = "gb";
  std::string target = "auto";
  int components = 3;
};

RunConfig effective_config(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.folds) c.folds = *o.folds;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.threshold) c.decision.threshold = *o.threshold;
  c.validate();
  return c;
}

void echo_config(const RunConfig& c, const fs::path& dir) {
  fs::create_directories(dir);
  write_text_file(dir / "config.json", dump_canonical(run_config_to_json(c)));
}

const std::array<std::string_view, 5> kFineLabels{"normal", "ectropion", "LSIL", "HSIL", "cancer"};
const std::array<std::string_view, 2> kBinaryLabels{"LOW", "HIGH"};

int run_phantom(const Options& o) {
  const RunConfig c = effective_config(o);
  const fs::path out(o.out);
  const Manifest m = generate_phantom_dataset(c.phantom, c.seed, out);
  echo_config(c, out);
  std::cout << "wrote " << m.entries.size() << " volumes to " << (out / "manifest.json").string() << "\n";
  return 0;
}

int run_preprocess(const Options& o) {
  const RunConfig c = effective_config(o);
  const Manifest m = load_manifest(o.manifest);
  const fs::path out(o.out);
  fs::create_directories(out);
  RejectCounts total{};
  std::size_t accepted = 0;
  std::vector<int> ages;
  for (const auto& e : m.entries) {
    const std::vector<Frame> frames = load_volume_frames(m, e);
    PreprocessedVolume v;
    try {
      v = preprocess_volume(frames, c.preprocess);
    } catch (const DataError& err) {
      throw DataError(e.volume_id + ": " + err.what());
    }
    const fs::path dir = out / e.volume_id;
    fs::create_directories(dir);
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t i = 0; i < v.frames.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "f%03d.pgm", v.source_indices[i]);
      write_frame(v.frames[i], dir / name);
      files.push_back(name);
    }
    nlohmann::json sidecar{{"volume_id", e.volume_id},
                           {"mean", v.mean},
                           {"frames", files},
                           {"source_indices", v.source_indices},
                           {"rejected", {{"saturated", v.rejects[1]}, {"dark", v.rejects[2]}, {"blurry", v.rejects[3]}}}};
    write_text_file(dir / "volume.json", dump_canonical(sidecar));
    for (std::size_t r = 0; r < total.size(); ++r) total[r] += v.rejects[r];
    accepted += v.frames.size();
    ages.push_back(e.meta.age);
  }
  const AgeScaler scaler = fit_age_scaler(ages);
  nlohmann::json summary{{"volumes", m.entries.size()},
                         {"age_scaler", {{"min", scaler.min}, {"max", scaler.max}}},
                         {"rejected", {{"saturated", total[1]}, {"dark", total[2]}, {"blurry", total[3]}}}};
  write_text_file(out / "preprocess.json", dump_canonical(summary));
  echo_config(c, out);
  std::cout << "accepted " << accepted << " frames\n"
            << "rejected saturated " << total[1] << "\n"
            << "rejected dark " << total[2] << "\n"
            << "rejected blurry " << total[3] << "\n";
  return 0;
}

int run_train(const Options& o) {
  const RunConfig c = effective_config(o);
  const Manifest m = load_manifest(o.manifest);
  std::cerr << "preprocessing " << m.entries.size() << " volumes\n";
  const PreparedDataset data = prepare_dataset(m, c.preprocess);
  std::vector<std::size_t> all(data.volumes.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  std::cerr << "training on " << all.size() << " volumes\n";
  const TrainedPipeline model = train_pipeline(data, all, c, mix_seed(c.seed, 0x66756c6c));
  save_pipeline(model, c, o.out);
  std::cout << "model written to " << o.out << "\n";
  return 0;
}

int run_evaluate(const Options& o) {
  const RunConfig c = effective_config(o);
  const Manifest m = load_manifest(o.manifest);
  const EvalReport r = cross_validate(m, c, &std::cerr);
  const fs::path out(o.out);
  echo_config(c, out);
  write_text_file(out / "report.json", report_to_json(r, m).dump(2) + "\n");
  write_text_file(out / "confusion_fine.csv", confusion_csv(r.fine, kFineLabels));
  write_text_file(out / "confusion_binary.csv", confusion_csv(r.binary, kBinaryLabels));
  write_text_file(out / "confusion.svg", confusion_svg(r.fine, kFineLabels, "Five-class confusion (row-normalized)"));
  if (r.roc) {
    write_text_file(out / "roc.csv", roc_csv(*r.roc));
    write_text_file(out / "roc.svg", roc_svg(*r.roc, "High-risk ROC"));
  } else {
    std::cerr << "warning: pooled predictions hold a single risk class; no ROC written\n";
  }
  std::cout << "five-class accuracy: " << (r.fine_accuracy ? format_number(*r.fine_accuracy) : "undefined") << "\n";
  std::cout << "AUC: " << (r.roc ? format_number(r.roc->auc) : "undefined") << "\n";
  return 0;
}

std::vector<Frame> read_volume_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .pgm frames in " + dir.string());
  std::vector<Frame> frames;
  for (const auto& f : files) frames.push_back(read_frame(f));
  return frames;
}

int run_predict(const Options& o) {
  RunConfig c;
  const TrainedPipeline model = load_pipeline(o.model, &c);
  if (o.age < 0 || o.age > 130) throw UsageError("--age must lie in [0, 130]");
  const std::vector<Frame> frames = read_volume_dir(o.volume);
  const PreparedVolume v = prepare_volume(frames, c.preprocess);
  const PatientMeta meta{o.age, o.hpv == 1};
  fs::path dir(o.volume);
  if (!dir.has_filename()) dir = dir.parent_path();
  const VolumePrediction p = predict_prepared(model, dir.filename().string(), v.images, meta, c);
  std::cout << to_json(p).dump(2) << "\n";
  return 0;
}

/// A frame already at the network size is taken as preprocessed; anything
/// else goes through the full chain.
std::vector<float> explain_input(const Frame& raw, const PreprocConfig& pre, int input_size) {
  if (raw.width == input_size && raw.height == input_size) {
    const Frame one[] = {raw};
    return to_network_input(zero_center_volume(one).frames.front());
  }
  QualityVerdict verdict{};
  const auto f = preprocess_frame(raw, pre, &verdict);
  if (!f) throw DataError("frame rejected by the quality gate: " + std::string(verdict_name(verdict)));
  const Frame one[] = {*f};
  return to_network_input(zero_center_volume(one).frames.front());
}

int run_explain(const Options& o) {
  const nn::CnnModel<float> cnn = nn::load_checkpoint(fs::path(o.model) / "cnn.bin");
  PreprocConfig pre = PreprocConfig::desk_scale();
  if (fs::exists(fs::path(o.model) / "config.json")) pre = load_run_config(fs::path(o.model) / "config.json").preprocess;
  const std::vector<float> input = explain_input(read_frame(o.frame), pre, cnn.config.input_size);
  int target = 0;
  if (o.target == "auto") {
    target = predicted_class(cnn.net, std::span<const float>(input));
  } else {
    if (o.target.size() != 1 || o.target[0] < '0' || o.target[0] > '4')
      throw UsageError("--class must be auto or 0..4");
    target = o.target[0] - '0';
  }
  const AttributionMap map = o.method == "gb" ? guided_backprop(cnn.net, std::span<const float>(input), target)
                                              : saliency_map(cnn.net, std::span<const float>(input), target);
  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_frame(map.to_frame(), out);
  std::cout << attribution_name(map.kind) << " map for class " << target << " written to " << o.out << "\n";
  return 0;
}

int run_pca(const Options& o) {
  RunConfig c;
  const TrainedPipeline model = load_pipeline(o.model, &c);
  const Manifest m = load_manifest(o.manifest);
  const PreparedDataset data = prepare_dataset(m, c.preprocess);
  std::vector<std::vector<double>> features;
  struct Row {
    std::string volume_id;
    int frame;
    int label;
  };
  std::vector<Row> rows;
  for (const PreparedVolume& v : data.volumes) {
    const ManifestEntry& e = m.entries[v.entry];
    for (std::size_t i = 0; i < v.images.size(); ++i) {
      features.push_back(nn::forward(model.cnn, std::span<const float>(v.images[i])).fc2_features);
      rows.push_back({e.volume_id, v.source_indices[i], code(e.label)});
    }
  }
  const PcaModel pca = pca_fit(features, o.components);
  std::string csv = "volume_id,frame,label";
  for (int k = 1; k <= o.components; ++k) csv += ",p" + std::to_string(k);
  csv += "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    csv += rows[i].volume_id + "," + std::to_string(rows[i].frame) + "," + std::to_string(rows[i].label);
    for (double p : pca_project(pca, features[i])) csv += "," + format_number(p);
    csv += "\n";
  }
  const fs::path out(o.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_text_file(out, csv);
  std::cout << "explained variance:";
  for (double v : pca.variances) std::cout << " " << format_number(v / pca.total_variance);
  std::cout << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volume classification pipeline: phantom data, training, evaluation and explanation"};
  app.require_subcommand(1);
  Options o;

  auto* phantom = app.add_subcommand("phantom", "generate a synthetic dataset");
  phantom->add_option("--config", o.config, "run config JSON")->check(CLI::ExistingFile);
  phantom->add_option("--seed", o.seed, "random seed");
  phantom->add_option("--out", o.out, "output directory")->required();

  auto* preprocess = app.add_subcommand("preprocess", "run the preprocessing chain and cache the frames");
  preprocess->add_option("--manifest", o.manifest, "manifest JSON")->required();
  preprocess->add_option("--config", o.config, "run config JSON")->check(CLI::ExistingFile);
  preprocess->add_option("--out", o.out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train CNN, SVM and age scaler on the whole manifest");
  train->add_option("--manifest", o.manifest, "manifest JSON")->required();
  train->add_option("--config", o.config, "run config JSON")->check(CLI::ExistingFile);
  train->add_option("--seed", o.seed, "random seed");
  train->add_option("--epochs", o.epochs, "CNN epochs");
  train->add_option("--out", o.out, "model directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "specimen-grouped cross-validation");
  evaluate->add_option("--manifest", o.manifest, "manifest JSON")->required();
  evaluate->add_option("--config", o.config, "run config JSON")->check(CLI::ExistingFile);
  evaluate->add_option("--seed", o.seed, "random seed");
  evaluate->add_option("--folds", o.folds, "number of folds");
  evaluate->add_option("--epochs", o.epochs, "CNN epochs");
  evaluate->add_option("--threshold", o.threshold, "P(HIGH) threshold");
  evaluate->add_option("--out", o.out, "report directory")->required();

  auto* predict = app.add_subcommand("predict", "classify one volume");
  predict->add_option("--model", o.model, "model directory")->required()->check(CLI::ExistingDirectory);
  predict->add_option("--volume", o.volume, "directory of PGM frames")->required();
  predict->add_option("--age", o.age, "patient age in years")->required();
  predict->add_option("--hpv", o.hpv, "HPV result, 0 or 1")->required()->check(CLI::IsMember({0, 1}));

  auto* explain = app.add_subcommand("explain", "attribution map for one frame");
  explain->add_option("--model", o.model, "model directory")->required()->check(CLI::ExistingDirectory);
  explain->add_option("--frame", o.frame, "PGM frame (raw, or already at the network input size)")->required();
  explain->add_option("--method", o.method, "gb or saliency")->check(CLI::IsMember({"gb", "saliency"}));
  explain->add_option("--class", o.target, "auto or 0..4")
      ->check(CLI::IsMember({"auto", "0", "1", "2", "3", "4"}));
  explain->add_option("--out", o.out, "output PGM")->required();

  auto* pca = app.add_subcommand("pca", "project FC2 features onto principal axes");
  pca->add_option("--model", o.model, "model directory")->required()->check(CLI::ExistingDirectory);
  pca->add_option("--manifest", o.manifest, "manifest JSON")->required();
  pca->add_option("--components", o.components, "number of components")->check(CLI::PositiveNumber);
  pca->add_option("--out", o.out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*phantom) return run_phantom(o);
    if (*preprocess) return run_preprocess(o);
    if (*train) return run_train(o);
    if (*evaluate) return run_evaluate(o);
    if (*predict) return run_predict(o);
    if (*explain) return run_explain(o);
    if (*pca) return run_pca(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const eval::UndefinedMetricError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

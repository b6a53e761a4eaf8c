#include "cadx/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cadx/checkpoint.hpp"
#include "cadx/common.hpp"
#include "cadx/training.hpp"

namespace cadx {

using nlohmann::json;

std::vector<float> to_network_input(const Frame& frame) {
  std::vector<float> out(frame.pixels.size());
  std::transform(frame.pixels.begin(), frame.pixels.end(), out.begin(), [](double v) { return static_cast<float>(v); });
  return out;
}

PreparedVolume prepare_volume(std::span<const Frame> frames, const PreprocConfig& config) {
  PreprocessedVolume pre = preprocess_volume(frames, config);
  PreparedVolume v;
  for (const Frame& f : pre.zero_centered()) v.images.push_back(to_network_input(f));
  v.source_indices = std::move(pre.source_indices);
  v.mean = pre.mean;
  v.rejects = pre.rejects;
  return v;
}

PreparedDataset prepare_dataset(const Manifest& manifest, const PreprocConfig& config) {
  PreparedDataset data;
  data.manifest = &manifest;
  data.volumes.reserve(manifest.entries.size());
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    std::vector<Frame> frames = load_volume_frames(manifest, e);
    PreparedVolume v;
    try {
      v = prepare_volume(frames, config);
    } catch (const DataError& err) {
      throw DataError(e.volume_id + ": " + err.what());
    }
    v.entry = i;
    for (std::size_t r = 0; r < v.rejects.size(); ++r) data.rejects[r] += v.rejects[r];
    data.volumes.push_back(std::move(v));
  }
  return data;
}

void ProbabilityAudit::record(Entry& e, std::span<const double> probs) {
  double s = 0.0;
  for (double p : probs) s += p;
  e.max_error = std::max(e.max_error, std::abs(s - 1.0));
  ++e.count;
}

std::vector<std::size_t> frame_subset(std::size_t n, int limit) {
  std::vector<std::size_t> idx;
  if (limit <= 0 || static_cast<std::size_t>(limit) >= n) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  const auto m = static_cast<std::size_t>(limit);
  for (std::size_t i = 0; i < m; ++i) idx.push_back((2 * i + 1) * n / (2 * m));
  return idx;
}

std::array<double, kFusedDim> frame_feature(const TrainedPipeline& model, std::span<const float> image,
                                            const PatientMeta& meta, ProbabilityAudit* audit) {
  nn::ForwardResult r = nn::forward(model.cnn, image);
  if (audit) ProbabilityAudit::record(audit->cnn_softmax, r.probs);
  return fuse(r.logits, model.age_scaler.normalize(meta.age), encode_hpv(meta.hpv)).values();
}

TrainedPipeline train_pipeline(const PreparedDataset& data, std::span<const std::size_t> train_volumes,
                               const RunConfig& config, std::uint64_t seed, ProbabilityAudit* audit) {
  const Manifest& manifest = *data.manifest;
  if (train_volumes.empty()) throw DataError("no training volumes");

  TrainedPipeline model;
  model.seed = seed;
  std::vector<int> ages;
  for (std::size_t v : train_volumes) ages.push_back(manifest.entries[data.volumes[v].entry].meta.age);
  model.age_scaler = fit_age_scaler(ages);

  std::vector<nn::LabeledImage<float>> cnn_data;
  for (std::size_t v : train_volumes) {
    const PreparedVolume& pv = data.volumes[v];
    const int label = code(manifest.entries[pv.entry].label);
    for (std::size_t f : frame_subset(pv.images.size(), config.cnn_frames_per_volume))
      cnn_data.push_back({pv.images[f], label});
  }
  model.cnn = nn::init_model<float>(config.net, mix_seed(seed, 0x636e6e));
  nn::TrainConfig tc = config.train;
  tc.seed = mix_seed(seed, 0x7472616e);
  model.cnn_epoch_loss = nn::train(model.cnn, std::span<const nn::LabeledImage<float>>(cnn_data), tc, config.adam).epoch_loss;

  std::vector<std::vector<double>> features;
  std::vector<int> labels;
  for (std::size_t v : train_volumes) {
    const PreparedVolume& pv = data.volumes[v];
    const ManifestEntry& e = manifest.entries[pv.entry];
    for (std::size_t f : frame_subset(pv.images.size(), config.svm_frames_per_volume)) {
      auto x = frame_feature(model, pv.images[f], e.meta, audit);
      features.emplace_back(x.begin(), x.end());
      labels.push_back(code(e.label));
    }
  }
  model.svm = svm::train_svm(features, labels, config.svm);
  return model;
}

VolumePrediction predict_prepared(const TrainedPipeline& model, const std::string& volume_id,
                                  std::span<const std::vector<float>> images, const PatientMeta& meta,
                                  const RunConfig& config, ProbabilityAudit* audit) {
  std::vector<int> labels;
  std::vector<std::array<double, kNumFineClasses>> probs;
  for (const auto& image : images) {
    const auto x = frame_feature(model, image, meta, audit);
    if (config.average_probabilities || audit) {
      const auto p = svm::predict_proba(model.svm, x);
      if (audit) ProbabilityAudit::record(audit->svm_calibrated, p);
      probs.push_back(p);
    }
    if (!config.average_probabilities) labels.push_back(svm::predict_label(model.svm, x));
  }
  const VolumeDistribution dist =
      config.average_probabilities ? volume_distribution_from_probabilities(probs) : volume_distribution(labels);
  if (audit) ProbabilityAudit::record(audit->volume_distribution, dist.probs);
  return predict_volume(volume_id, dist, config.decision);
}

void save_pipeline(const TrainedPipeline& model, const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nn::save_checkpoint(model.cnn, model.seed, dir / "cnn.bin");
  svm::save_svm_model(model.svm, dir / "svm.bin");
  json scaler{{"min", model.age_scaler.min}, {"max", model.age_scaler.max}, {"seed", model.seed},
              {"cnn_epoch_loss", model.cnn_epoch_loss}};
  write_text_file(dir / "age_scaler.json", dump_canonical(scaler));
  write_text_file(dir / "config.json", dump_canonical(run_config_to_json(config)));
}

TrainedPipeline load_pipeline(const std::filesystem::path& dir, RunConfig* config) {
  TrainedPipeline model;
  model.cnn = nn::load_checkpoint(dir / "cnn.bin");
  model.svm = svm::load_svm_model(dir / "svm.bin");
  try {
    const json scaler = json::parse(read_text_file(dir / "age_scaler.json"));
    model.age_scaler = {scaler.at("min").get<double>(), scaler.at("max").get<double>()};
    model.seed = scaler.at("seed").get<std::uint64_t>();
    model.cnn_epoch_loss = scaler.at("cnn_epoch_loss").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw DataError("age_scaler.json: " + std::string(e.what()));
  }
  if (model.age_scaler.min > model.age_scaler.max) throw DataError("age_scaler.json: min > max");
  if (config) {
    try {
      *config = load_run_config(dir / "config.json");
    } catch (const UsageError& e) {
      throw DataError(std::string("model config: ") + e.what());
    }
  }
  return model;
}

}  // namespace cadx

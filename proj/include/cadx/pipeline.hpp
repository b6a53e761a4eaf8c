#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cadx/aggregate.hpp"
#include "cadx/config.hpp"
#include "cadx/dataset.hpp"
#include "cadx/network.hpp"
#include "cadx/preprocess.hpp"
#include "cadx/svm.hpp"

namespace cadx {

/// One manifest volume after the preprocessing chain.
struct PreparedVolume {
  std::size_t entry = 0;  // index into Manifest::entries
  /// Zero-centered frames flattened for the network.
  std::vector<std::vector<float>> images;
  std::vector<int> source_indices;
  double mean = 0.0;
  RejectCounts rejects{};
};

struct PreparedDataset {
  const Manifest* manifest = nullptr;
  std::vector<PreparedVolume> volumes;  // same order as the manifest
  RejectCounts rejects{};
};

std::vector<float> to_network_input(const Frame& frame);
PreparedVolume prepare_volume(std::span<const Frame> frames, const PreprocConfig& config);
PreparedDataset prepare_dataset(const Manifest& manifest, const PreprocConfig& config);

/// Largest |sum - 1| seen per kind of probability vector, and how many were seen.
struct ProbabilityAudit {
  struct Entry {
    std::int64_t count = 0;
    double max_error = 0.0;
  };
  Entry cnn_softmax;
  Entry svm_calibrated;
  Entry volume_distribution;

  static void record(Entry& e, std::span<const double> probs);
};

struct TrainedPipeline {
  nn::CnnModel<float> cnn;
  svm::SvmModel svm;
  AgeScaler age_scaler;
  std::vector<double> cnn_epoch_loss;
  std::uint64_t seed = 0;
};

/// Evenly spaced subset of `limit` indices out of n (all of them when limit is
/// 0 or at least n).
std::vector<std::size_t> frame_subset(std::size_t n, int limit);

/// Fits the age scaler, CNN and SVM on the given volumes (indices into
/// data.volumes). Throws DataError when a class is missing.
TrainedPipeline train_pipeline(const PreparedDataset& data, std::span<const std::size_t> train_volumes,
                               const RunConfig& config, std::uint64_t seed, ProbabilityAudit* audit = nullptr);

/// 7-D fused feature for one frame; the CNN softmax is recorded in the audit.
std::array<double, kFusedDim> frame_feature(const TrainedPipeline& model, std::span<const float> image,
                                            const PatientMeta& meta, ProbabilityAudit* audit = nullptr);

VolumePrediction predict_prepared(const TrainedPipeline& model, const std::string& volume_id,
                                  std::span<const std::vector<float>> images, const PatientMeta& meta,
                                  const RunConfig& config, ProbabilityAudit* audit = nullptr);

/// model_dir/cnn.bin (+ sidecar), svm.bin, age_scaler.json, config.json
void save_pipeline(const TrainedPipeline& model, const RunConfig& config, const std::filesystem::path& dir);
TrainedPipeline load_pipeline(const std::filesystem::path& dir, RunConfig* config = nullptr);

}  // namespace cadx

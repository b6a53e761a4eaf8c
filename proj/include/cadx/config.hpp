#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "cadx/aggregate.hpp"
#include "cadx/dataset.hpp"
#include "cadx/network.hpp"
#include "cadx/preprocess.hpp"
#include "cadx/svm.hpp"
#include "cadx/training.hpp"

namespace cadx {

/// Everything a run depends on. Defaults are the desk-scale pipeline.
struct RunConfig {
  PhantomConfig phantom;
  PreprocConfig preprocess = PreprocConfig::desk_scale();
  nn::NetConfig net;
  nn::AdamConfig adam;
  nn::TrainConfig train;
  /// Frames per volume used to train the CNN (evenly spaced; 0 = all).
  int cnn_frames_per_volume = 12;
  /// Frames per volume used to train the SVM (0 = all).
  int svm_frames_per_volume = 0;
  svm::SvmConfig svm;
  BinaryDecisionConfig decision;
  /// Average per-frame SVM probabilities instead of counting hard labels.
  bool average_probabilities = false;
  int folds = 10;
  std::uint64_t seed = 20190101;

  void validate() const;
};

/// Unknown keys anywhere in the document are rejected with UsageError.
/// Missing keys keep their defaults.
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);
/// Full effective config, keys sorted.
nlohmann::json run_config_to_json(const RunConfig& config);
std::string dump_canonical(const nlohmann::json& doc);

}  // namespace cadx

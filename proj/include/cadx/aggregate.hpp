#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cadx/dataset.hpp"

namespace cadx {

inline constexpr int kImageFeatureDim = 5;
inline constexpr int kFusedDim = 7;

/// [image(5), normalized age, HPV encoding]
struct FusedFeature {
  std::array<double, kImageFeatureDim> image{};
  std::array<double, 2> meta{};

  std::array<double, kFusedDim> values() const;
};

/// Throws DataError for a wrong image dimension, non-finite input, or
/// metadata outside [0,1].
FusedFeature fuse(std::span<const double> image_feature, double age_norm, double hpv_enc);

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
};

/// Per-volume class distribution. From hard labels it is kept as exact
/// counts; the probability-averaging alternative only fills `probs`.
struct VolumeDistribution {
  std::array<std::int64_t, kNumFineClasses> counts{};
  std::int64_t total = 0;
  std::array<double, kNumFineClasses> probs{};

  bool exact() const { return total > 0; }
  Rational exact_probability(FineClass j) const;
  double probability(FineClass j) const { return probs[code(j)]; }
};

/// P(j) = #{labels == j} / |labels|. Throws DataError on an empty list.
VolumeDistribution volume_distribution(std::span<const int> predicted_labels);

/// Mean of per-frame probability vectors. Off by default in the pipeline.
VolumeDistribution volume_distribution_from_probabilities(std::span<const std::array<double, kNumFineClasses>> probs);

/// Sum of the subclass probabilities.
double general_probability(const VolumeDistribution& dist, GeneralClass m);
/// Exact variant; requires a count-based distribution.
Rational general_probability_exact(const VolumeDistribution& dist, GeneralClass m);

/// argmax, ties toward the higher class code.
FineClass volume_decision_fine(const VolumeDistribution& dist);

struct BinaryDecisionConfig {
  double threshold = 0.5;
  void validate() const;
};

/// HIGH iff P(HIGH) > threshold.
GeneralClass volume_decision_binary(const VolumeDistribution& dist, const BinaryDecisionConfig& config);

struct VolumePrediction {
  std::string volume_id;
  VolumeDistribution distribution;
  FineClass fine = FineClass::Normal;
  double p_high = 0.0;
  GeneralClass binary = GeneralClass::Low;
  double threshold = 0.5;
};

VolumePrediction predict_volume(const std::string& volume_id, const VolumeDistribution& dist,
                                const BinaryDecisionConfig& config);

nlohmann::ordered_json to_json(const VolumePrediction& p);

}  // namespace cadx

#include "cadx/aggregate.hpp"

#include <cmath>
#include <string>

#include "cadx/common.hpp"

namespace cadx {

std::array<double, kFusedDim> FusedFeature::values() const {
  std::array<double, kFusedDim> v{};
  for (int i = 0; i < kImageFeatureDim; ++i) v[i] = image[i];
  v[5] = meta[0];
  v[6] = meta[1];
  return v;
}

FusedFeature fuse(std::span<const double> image_feature, double age_norm, double hpv_enc) {
  if (image_feature.size() != static_cast<std::size_t>(kImageFeatureDim))
    throw DataError("image feature must have 5 entries, got " + std::to_string(image_feature.size()));
  FusedFeature f;
  for (int i = 0; i < kImageFeatureDim; ++i) {
    if (!std::isfinite(image_feature[i])) throw DataError("non-finite image feature");
    f.image[i] = image_feature[i];
  }
  if (!(age_norm >= 0.0 && age_norm <= 1.0) || !(hpv_enc >= 0.0 && hpv_enc <= 1.0))
    throw DataError("metadata features must lie in [0,1]");
  f.meta = {age_norm, hpv_enc};
  return f;
}

Rational VolumeDistribution::exact_probability(FineClass j) const {
  if (!exact()) throw DataError("distribution was not built from label counts");
  return Rational{counts[code(j)], total};
}

VolumeDistribution volume_distribution(std::span<const int> predicted_labels) {
  if (predicted_labels.empty()) throw DataError("volume has no predicted labels");
  VolumeDistribution d;
  for (int l : predicted_labels) {
    if (l < 0 || l >= kNumFineClasses) throw DataError("label out of range: " + std::to_string(l));
    ++d.counts[l];
  }
  d.total = static_cast<std::int64_t>(predicted_labels.size());
  for (int j = 0; j < kNumFineClasses; ++j) d.probs[j] = static_cast<double>(d.counts[j]) / static_cast<double>(d.total);
  return d;
}

VolumeDistribution volume_distribution_from_probabilities(
    std::span<const std::array<double, kNumFineClasses>> probs) {
  if (probs.empty()) throw DataError("volume has no frame probabilities");
  VolumeDistribution d;
  for (const auto& p : probs)
    for (int j = 0; j < kNumFineClasses; ++j) d.probs[j] += p[j];
  for (auto& v : d.probs) v /= static_cast<double>(probs.size());
  return d;
}

Rational general_probability_exact(const VolumeDistribution& dist, GeneralClass m) {
  if (!dist.exact()) throw DataError("distribution was not built from label counts");
  Rational r{0, dist.total};
  for (FineClass n : subclasses(m)) r.num += dist.counts[code(n)];
  return r;
}

double general_probability(const VolumeDistribution& dist, GeneralClass m) {
  if (dist.exact()) return general_probability_exact(dist, m).value();
  double p = 0.0;
  for (FineClass n : subclasses(m)) p += dist.probs[code(n)];
  return p;
}

FineClass volume_decision_fine(const VolumeDistribution& dist) {
  int best = 0;
  for (int j = 1; j < kNumFineClasses; ++j) {
    const bool at_least = dist.exact() ? dist.counts[j] >= dist.counts[best] : dist.probs[j] >= dist.probs[best];
    if (at_least) best = j;
  }
  return static_cast<FineClass>(best);
}

void BinaryDecisionConfig::validate() const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw UsageError("threshold must lie in [0,1]");
}

GeneralClass volume_decision_binary(const VolumeDistribution& dist, const BinaryDecisionConfig& config) {
  return general_probability(dist, GeneralClass::High) > config.threshold ? GeneralClass::High : GeneralClass::Low;
}

VolumePrediction predict_volume(const std::string& volume_id, const VolumeDistribution& dist,
                                const BinaryDecisionConfig& config) {
  VolumePrediction p;
  p.volume_id = volume_id;
  p.distribution = dist;
  p.fine = volume_decision_fine(dist);
  p.p_high = general_probability(dist, GeneralClass::High);
  p.binary = volume_decision_binary(dist, config);
  p.threshold = config.threshold;
  return p;
}

nlohmann::ordered_json to_json(const VolumePrediction& p) {
  nlohmann::ordered_json j;
  j["volume_id"] = p.volume_id;
  j["distribution"] = p.distribution.probs;
  if (p.distribution.exact()) {
    j["counts"] = p.distribution.counts;
    j["frames"] = p.distribution.total;
  }
  j["fine_decision"] = code(p.fine);
  j["fine_decision_name"] = std::string(fine_class_name(p.fine));
  j["p_high"] = p.p_high;
  j["binary_decision"] = std::string(general_class_name(p.binary));
  j["threshold"] = p.threshold;
  return j;
}

}  // namespace cadx

#pragma once

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "cadx/dataset.hpp"

namespace cadx {

struct PreprocConfig {
  int crop_size = 600;
  int target_size = 224;
  double saturation_threshold = 0.92;
  double darkness_threshold = 0.05;
  double blur_threshold = 1e-4;

  /// Settings for the 96x80 phantom frames and the 64x64 network input.
  static PreprocConfig desk_scale();
  void validate() const;
};

enum class QualityVerdict { Accept = 0, Saturated = 1, Dark = 2, Blurry = 3 };

std::string_view verdict_name(QualityVerdict v);

/// Variance of the 3x3 Laplacian response over interior pixels.
double laplacian_variance(const Frame& frame);

/// Saturation is checked first, then darkness, then blur.
QualityVerdict quality_gate(const Frame& frame, const PreprocConfig& config);

/// Edge-replicated 3x3 median.
Frame median_filter_3x3(const Frame& frame);

/// size x size window at (floor((H-size)/2), floor((W-size)/2)).
Frame center_crop(const Frame& frame, int size);

/// Bilinear resize of a square frame with half-pixel centers:
/// s = (d + 0.5) * in / out - 0.5, clamped to the border.
Frame resize_bilinear(const Frame& frame, int target);

struct ZeroCentered {
  std::vector<Frame> frames;
  double mean = 0.0;
};

/// Subtracts the mean over all pixels of all frames.
ZeroCentered zero_center_volume(std::span<const Frame> frames);

/// Min-max age scaler; fit on training patients only.
struct AgeScaler {
  double min = 0.0;
  double max = 0.0;

  /// (x - min) / (max - min) after clamping x to [min, max]; 0.5 when min == max.
  double normalize(double age) const;
  bool operator==(const AgeScaler&) const = default;
};

AgeScaler fit_age_scaler(std::span<const int> training_ages);
inline double normalize_age(const AgeScaler& scaler, double age) { return scaler.normalize(age); }

/// false -> 0.0, true -> 1.0
inline double encode_hpv(bool hpv) { return hpv ? 1.0 : 0.0; }

using RejectCounts = std::array<int, 4>;

/// Gate, median filter, crop and resize. Returns nullopt for rejected frames.
std::optional<Frame> preprocess_frame(const Frame& frame, const PreprocConfig& config,
                                      QualityVerdict* verdict = nullptr);

struct PreprocessedVolume {
  /// Resized frames before zero-centering, values in [0,1].
  std::vector<Frame> frames;
  /// Indices of the surviving frames in the source volume.
  std::vector<int> source_indices;
  /// Volume mean subtracted by zero_centered().
  double mean = 0.0;
  RejectCounts rejects{};

  std::vector<Frame> zero_centered() const;
};

/// Full per-volume chain; zero-centering happens last, on the resized frames.
/// Throws DataError when every frame is rejected.
PreprocessedVolume preprocess_volume(std::span<const Frame> frames, const PreprocConfig& config);

}  // namespace cadx

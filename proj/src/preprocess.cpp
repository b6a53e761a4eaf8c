#include "cadx/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "cadx/common.hpp"

namespace cadx {

PreprocConfig PreprocConfig::desk_scale() {
  PreprocConfig c;
  c.crop_size = 80;
  c.target_size = 64;
  return c;
}

void PreprocConfig::validate() const {
  if (!(0.0 < darkness_threshold && darkness_threshold < saturation_threshold && saturation_threshold < 1.0))
    throw UsageError("preprocess: need 0 < darkness_threshold < saturation_threshold < 1");
  if (target_size < 1 || crop_size < 1) throw UsageError("preprocess: sizes must be positive");
  if (target_size > crop_size) throw UsageError("preprocess: target_size must not exceed crop_size");
  if (!(blur_threshold >= 0.0)) throw UsageError("preprocess: blur_threshold must be non-negative");
}

std::string_view verdict_name(QualityVerdict v) {
  switch (v) {
    case QualityVerdict::Accept: return "accepted";
    case QualityVerdict::Saturated: return "saturated";
    case QualityVerdict::Dark: return "dark";
    case QualityVerdict::Blurry: return "blurry";
  }
  return "?";
}

double laplacian_variance(const Frame& frame) {
  if (frame.width < 3 || frame.height < 3) return 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;
  for (int r = 1; r + 1 < frame.height; ++r) {
    for (int c = 1; c + 1 < frame.width; ++c) {
      const double lap = frame.at(r - 1, c) + frame.at(r + 1, c) + frame.at(r, c - 1) + frame.at(r, c + 1) -
                         4.0 * frame.at(r, c);
      sum += lap;
      sum_sq += lap * lap;
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  return std::max(0.0, sum_sq / static_cast<double>(n) - mean * mean);
}

QualityVerdict quality_gate(const Frame& frame, const PreprocConfig& config) {
  const double mean = frame.mean();
  if (mean > config.saturation_threshold) return QualityVerdict::Saturated;
  if (mean < config.darkness_threshold) return QualityVerdict::Dark;
  if (laplacian_variance(frame) < config.blur_threshold) return QualityVerdict::Blurry;
  return QualityVerdict::Accept;
}

Frame median_filter_3x3(const Frame& frame) {
  if (frame.width < 3 || frame.height < 3) throw DataError("median filter needs a frame of at least 3x3");
  Frame out(frame.width, frame.height);
  std::array<double, 9> window;
  for (int r = 0; r < frame.height; ++r) {
    for (int c = 0; c < frame.width; ++c) {
      int k = 0;
      for (int dr = -1; dr <= 1; ++dr) {
        const int rr = std::clamp(r + dr, 0, frame.height - 1);
        for (int dc = -1; dc <= 1; ++dc) {
          const int cc = std::clamp(c + dc, 0, frame.width - 1);
          window[k++] = frame.at(rr, cc);
        }
      }
      std::nth_element(window.begin(), window.begin() + 4, window.end());
      out.at(r, c) = window[4];
    }
  }
  return out;
}

Frame center_crop(const Frame& frame, int size) {
  if (size < 1) throw DataError("crop size must be positive");
  if (frame.width < size || frame.height < size)
    throw DataError("frame " + std::to_string(frame.height) + "x" + std::to_string(frame.width) +
                    " is smaller than crop size " + std::to_string(size));
  const int row0 = (frame.height - size) / 2;
  const int col0 = (frame.width - size) / 2;
  Frame out(size, size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) out.at(r, c) = frame.at(row0 + r, col0 + c);
  return out;
}

Frame resize_bilinear(const Frame& frame, int target) {
  if (target < 1) throw DataError("resize target must be positive");
  if (frame.width != frame.height) throw DataError("resize expects a square frame");
  const int in = frame.width;
  const double scale = static_cast<double>(in) / target;

  struct Tap {
    int lo;
    int hi;
    double w;  // weight of hi
  };
  std::vector<Tap> taps(static_cast<std::size_t>(target));
  for (int d = 0; d < target; ++d) {
    const double s = std::clamp((d + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(s));
    const int hi = std::min(lo + 1, in - 1);
    taps[d] = {lo, hi, s - lo};
  }

  Frame out(target, target);
  for (int r = 0; r < target; ++r) {
    const Tap& ty = taps[r];
    for (int c = 0; c < target; ++c) {
      const Tap& tx = taps[c];
      const double top = frame.at(ty.lo, tx.lo) * (1.0 - tx.w) + frame.at(ty.lo, tx.hi) * tx.w;
      const double bot = frame.at(ty.hi, tx.lo) * (1.0 - tx.w) + frame.at(ty.hi, tx.hi) * tx.w;
      // Exact-weight taps must reproduce the source sample without rounding.
      out.at(r, c) = ty.w == 0.0 ? top : top * (1.0 - ty.w) + bot * ty.w;
    }
  }
  return out;
}

ZeroCentered zero_center_volume(std::span<const Frame> frames) {
  if (frames.empty()) throw DataError("cannot zero-center an empty volume");
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& f : frames) {
    if (f.width != frames.front().width || f.height != frames.front().height)
      throw DataError("zero-centering needs frames of equal size");
    for (double v : f.pixels) total += v;
    count += f.size();
  }
  ZeroCentered out;
  out.mean = total / static_cast<double>(count);
  out.frames.assign(frames.begin(), frames.end());
  for (auto& f : out.frames)
    for (auto& v : f.pixels) v -= out.mean;
  return out;
}

double AgeScaler::normalize(double age) const {
  if (max == min) return 0.5;
  const double x = std::clamp(age, min, max);
  return (x - min) / (max - min);
}

AgeScaler fit_age_scaler(std::span<const int> training_ages) {
  if (training_ages.empty()) throw DataError("cannot fit age scaler on an empty training set");
  const auto [lo, hi] = std::minmax_element(training_ages.begin(), training_ages.end());
  return AgeScaler{static_cast<double>(*lo), static_cast<double>(*hi)};
}

std::optional<Frame> preprocess_frame(const Frame& frame, const PreprocConfig& config,
                                      QualityVerdict* verdict) {
  const QualityVerdict v = quality_gate(frame, config);
  if (verdict) *verdict = v;
  if (v != QualityVerdict::Accept) return std::nullopt;
  Frame f = median_filter_3x3(frame);
  f = center_crop(f, config.crop_size);
  if (config.target_size != config.crop_size) f = resize_bilinear(f, config.target_size);
  return f;
}

std::vector<Frame> PreprocessedVolume::zero_centered() const {
  std::vector<Frame> out = frames;
  for (auto& f : out)
    for (auto& v : f.pixels) v -= mean;
  return out;
}

PreprocessedVolume preprocess_volume(std::span<const Frame> frames, const PreprocConfig& config) {
  config.validate();
  PreprocessedVolume out;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    QualityVerdict v;
    auto f = preprocess_frame(frames[i], config, &v);
    if (!f) {
      ++out.rejects[static_cast<int>(v)];
      continue;
    }
    out.frames.push_back(std::move(*f));
    out.source_indices.push_back(static_cast<int>(i));
  }
  if (out.frames.empty()) throw DataError("every frame of the volume was rejected by the quality gate");
  out.mean = zero_center_volume(out.frames).mean;
  return out;
}

}  // namespace cadx

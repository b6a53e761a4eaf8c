#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "cadx/common.hpp"
#include "cadx/dataset.hpp"

namespace cadx {

namespace {

constexpr double kPi = std::numbers::pi;

// Class-conditional metadata. Ages are rounded Gaussians clamped to [18, 90].
constexpr std::array<double, kNumFineClasses> kAgeMean{38.0, 34.0, 30.0, 36.0, 52.0};
constexpr double kAgeSigma = 8.0;
constexpr std::array<double, kNumFineClasses> kHpvPositiveRate{0.2, 0.2, 0.9, 0.9, 0.9};

struct Canvas {
  int width;
  int height;
  std::vector<double> v;
  Canvas(int w, int h, double fill) : width(w), height(h), v(static_cast<std::size_t>(w) * h, fill) {}
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * width + c]; }
};

/// Tissue surface: depth of the top of the tissue at column c.
struct Surface {
  double offset;
  double tilt;
  double wobble_amp;
  double wobble_freq;
  double wobble_phase;
  double row(int c) const {
    return offset + tilt * c + wobble_amp * std::sin(wobble_freq * c + wobble_phase);
  }
};

Surface random_surface(Rng& vol, Rng& frm, int width, int height) {
  Surface s;
  s.offset = height * vol.uniform(0.05, 0.10) + frm.uniform(-1.0, 1.0);
  s.tilt = vol.uniform(-0.04, 0.04);
  s.wobble_amp = vol.uniform(0.5, 2.0);
  s.wobble_freq = 2.0 * kPi / (width * vol.uniform(0.4, 1.0));
  s.wobble_phase = vol.uniform(0.0, 2.0 * kPi) + 0.05 * frm.uniform(-1.0, 1.0);
  return s;
}

void paint_air(Canvas& cv, const Surface& s) {
  for (int c = 0; c < cv.width; ++c) {
    const double top = s.row(c);
    for (int r = 0; r < cv.height && r < top; ++r) cv.at(r, c) = 0.04;
  }
}

/// Epithelium band over stroma, separated by a thin dark boundary line.
/// thickness_at(c) gives band thickness; boundary_visible(c) masks the line.
template <typename ThicknessFn, typename BoundaryFn>
void paint_layers(Canvas& cv, const Surface& s, double band_level, double stroma_level,
                  ThicknessFn thickness_at, BoundaryFn boundary_visible) {
  for (int c = 0; c < cv.width; ++c) {
    const double top = s.row(c);
    const double bottom = top + thickness_at(c);
    const bool line = boundary_visible(c);
    for (int r = 0; r < cv.height; ++r) {
      if (r < top) continue;
      const double depth = (r - top) / cv.height;
      if (r < bottom) {
        cv.at(r, c) = band_level * (1.0 - 0.25 * depth);
      } else if (line && r < bottom + 2.0) {
        cv.at(r, c) = 0.08;
      } else {
        cv.at(r, c) = stroma_level * (1.0 - 0.3 * depth);
      }
    }
  }
}

void paint_blob(Canvas& cv, double cr, double cc, double rr, double rc, double level,
                double roughness, double phase) {
  const int r0 = std::max(0, static_cast<int>(std::floor(cr - rr * 1.4)));
  const int r1 = std::min(cv.height - 1, static_cast<int>(std::ceil(cr + rr * 1.4)));
  const int c0 = std::max(0, static_cast<int>(std::floor(cc - rc * 1.4)));
  const int c1 = std::min(cv.width - 1, static_cast<int>(std::ceil(cc + rc * 1.4)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      const double dy = (r - cr) / rr;
      const double dx = (c - cc) / rc;
      const double angle = std::atan2(dy, dx);
      const double limit = 1.0 + roughness * std::sin(3.0 * angle + phase) * std::cos(2.0 * angle - phase);
      if (dx * dx + dy * dy <= limit * limit) cv.at(r, c) = level;
    }
  }
}

void paint_arc(Canvas& cv, double cr, double cc, double radius, double thickness, double level) {
  for (int r = 0; r < cv.height; ++r) {
    for (int c = 0; c < cv.width; ++c) {
      const double dy = r - cr;
      const double dx = c - cc;
      if (dy > 0.3 * radius) continue;  // upper arc only
      const double d = std::sqrt(dx * dx + dy * dy);
      if (std::abs(d - radius) <= thickness * 0.5) cv.at(r, c) = level;
      else if (d < radius - thickness * 0.5) cv.at(r, c) = std::min(cv.at(r, c), 0.24);
    }
  }
}

void render_normal(Canvas& cv, Rng& vol, Rng& frm) {
  const Surface s = random_surface(vol, frm, cv.width, cv.height);
  const double thickness = cv.height * vol.uniform(0.36, 0.42);
  paint_layers(cv, s, 0.74, 0.32, [&](int) { return thickness; }, [](int) { return true; });
  paint_air(cv, s);
}

void render_ectropion(Canvas& cv, Rng& vol, Rng& frm, int frame_index) {
  for (auto& x : cv.v) x = 0.30;
  const Surface s = random_surface(vol, frm, cv.width, cv.height);
  const int arcs = 3 + static_cast<int>(vol.below(3));
  for (int i = 0; i < arcs; ++i) {
    const double radius = cv.width * vol.uniform(0.10, 0.18);
    const double cc = cv.width * vol.uniform(0.1, 0.9) + 0.15 * frame_index * vol.uniform(-1.0, 1.0);
    const double cr = cv.height * vol.uniform(0.30, 0.80) + frm.uniform(-1.5, 1.5);
    paint_arc(cv, cr, cc, radius, 2.5, 0.90);
  }
  paint_air(cv, s);
}

void render_lsil(Canvas& cv, Rng& vol, Rng& frm, int frame_index) {
  const Surface s = random_surface(vol, frm, cv.width, cv.height);
  const double thickness = cv.height * vol.uniform(0.38, 0.44);
  paint_layers(cv, s, 0.74, 0.32, [&](int) { return thickness; }, [](int) { return true; });
  paint_air(cv, s);
  const int patches = 1 + static_cast<int>(vol.below(2));
  for (int i = 0; i < patches; ++i) {
    const double cc = cv.width * vol.uniform(0.25, 0.75) + 0.2 * frame_index * vol.uniform(-1.0, 1.0);
    const double cr = s.row(static_cast<int>(std::clamp(cc, 0.0, cv.width - 1.0))) + thickness * 0.72;
    const double rc = cv.width * vol.uniform(0.16, 0.24);
    const double rr = thickness * vol.uniform(0.16, 0.22);
    paint_blob(cv, cr, cc, rr, rc, 0.16, 0.25, frm.uniform(0.0, 2.0 * kPi));
  }
}

void render_hsil(Canvas& cv, Rng& vol, Rng& frm, int frame_index) {
  const Surface s = random_surface(vol, frm, cv.width, cv.height);
  const double base = cv.height * vol.uniform(0.30, 0.36);
  const double span = cv.width * vol.uniform(0.40, 0.60);
  const double start = (cv.width - span) * vol.uniform(0.0, 1.0) + 0.2 * frame_index * vol.uniform(-1.0, 1.0);
  const double extra = cv.height * vol.uniform(0.22, 0.32);
  const double rough = vol.uniform(0.0, 2.0 * kPi);
  auto thickness_at = [&](int c) {
    const double u = (c - start) / span;
    if (u <= 0.0 || u >= 1.0) return base;
    return base + extra * std::sin(kPi * u) * (0.85 + 0.15 * std::sin(7.0 * u + rough));
  };
  auto boundary_visible = [&](int c) {
    const double u = (c - start) / span;
    return u < -0.05 || u > 1.05;
  };
  paint_layers(cv, s, 0.62, 0.32, thickness_at, boundary_visible);
  paint_air(cv, s);
  // Dense dark nuclei across the thickened region.
  const int dots = static_cast<int>(span * 0.5);
  for (int i = 0; i < dots; ++i) {
    const double cc = start + span * frm.uniform();
    const int ci = static_cast<int>(std::clamp(cc, 0.0, cv.width - 1.0));
    const double cr = s.row(ci) + thickness_at(ci) * frm.uniform(0.2, 0.95);
    paint_blob(cv, cr, cc, 1.2, 1.2, 0.22, 0.0, 0.0);
  }
}

void render_cancer(Canvas& cv, Rng& vol, Rng& frm, int frame_index) {
  for (auto& x : cv.v) x = 0.22;
  const Surface s = random_surface(vol, frm, cv.width, cv.height);
  const int clusters = 2 + static_cast<int>(vol.below(3));
  for (int k = 0; k < clusters; ++k) {
    const double cr = cv.height * vol.uniform(0.25, 0.80) + frm.uniform(-1.0, 1.0);
    const double cc = cv.width * vol.uniform(0.15, 0.85) + 0.15 * frame_index * vol.uniform(-1.0, 1.0);
    const int blobs = 4 + static_cast<int>(frm.below(4));
    for (int b = 0; b < blobs; ++b) {
      const double r = cr + frm.normal(0.0, cv.height * 0.06);
      const double c = cc + frm.normal(0.0, cv.width * 0.06);
      const double rr = frm.uniform(2.0, 4.5);
      const double rc = rr * frm.uniform(1.2, 1.8);
      paint_blob(cv, r, c, rr, rc, 0.80, 0.05, frm.uniform(0.0, 2.0 * kPi));
    }
  }
  paint_air(cv, s);
}

}  // namespace

void PhantomConfig::validate() const {
  for (int n : patients_per_class)
    if (n <= 0) throw DataError("phantom: patients per class must be positive");
  if (specimens_per_patient <= 0 || volumes_per_specimen <= 0 || frames_per_volume <= 0)
    throw DataError("phantom: counts must be positive");
  if (frame_width < 16 || frame_height < 16) throw DataError("phantom: frame size must be at least 16");
}

Frame render_phantom_frame(FineClass label, int width, int height, std::uint64_t volume_seed,
                           int frame_index) {
  if (width < 16 || height < 16) throw DataError("phantom: frame size must be at least 16");
  // Volume-level geometry is shared by every frame; the frame stream adds
  // per-slice jitter and the speckle field.
  Rng vol(volume_seed);
  Rng frm(mix_seed(volume_seed, static_cast<std::uint64_t>(frame_index), 0x6672616d65ULL));
  Canvas cv(width, height, 0.0);
  switch (label) {
    case FineClass::Normal: render_normal(cv, vol, frm); break;
    case FineClass::Ectropion: render_ectropion(cv, vol, frm, frame_index); break;
    case FineClass::Lsil: render_lsil(cv, vol, frm, frame_index); break;
    case FineClass::Hsil: render_hsil(cv, vol, frm, frame_index); break;
    case FineClass::Cancer: render_cancer(cv, vol, frm, frame_index); break;
  }
  const double gain = frm.uniform(0.95, 1.05);
  Frame out(width, height);
  for (std::size_t i = 0; i < cv.v.size(); ++i) {
    const double speckle = frm.uniform(0.7, 1.3);
    out.pixels[i] = std::clamp(cv.v[i] * speckle * gain, 0.0, 1.0);
  }
  // Round-trip through 8-bit so the in-memory frame equals what is on disk.
  for (auto& p : out.pixels) p = static_cast<double>(std::lround(p * 255.0)) / 255.0;
  return out;
}

Manifest generate_phantom_dataset(const PhantomConfig& config, std::uint64_t seed,
                                  const std::filesystem::path& out_dir) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "frames");

  Manifest manifest;
  manifest.base_dir = out_dir;
  int patient_counter = 0;
  int specimen_counter = 0;
  int volume_counter = 0;
  char buf[64];
  for (int cls = 0; cls < kNumFineClasses; ++cls) {
    const auto label = static_cast<FineClass>(cls);
    for (int p = 0; p < config.patients_per_class[cls]; ++p) {
      const int patient_index = patient_counter++;
      std::snprintf(buf, sizeof buf, "P%03d", patient_index);
      const std::string patient_id = buf;
      Rng meta_rng(mix_seed(seed, static_cast<std::uint64_t>(patient_index), 0x6d657461ULL));
      PatientMeta meta;
      meta.age = static_cast<int>(std::clamp(std::lround(meta_rng.normal(kAgeMean[cls], kAgeSigma)), 18L, 90L));
      meta.hpv = meta_rng.uniform() < kHpvPositiveRate[cls];

      for (int s = 0; s < config.specimens_per_patient; ++s) {
        std::snprintf(buf, sizeof buf, "S%03d", specimen_counter++);
        const std::string specimen_id = buf;
        for (int v = 0; v < config.volumes_per_specimen; ++v) {
          const int volume_index = volume_counter++;
          std::snprintf(buf, sizeof buf, "V%04d", volume_index);
          ManifestEntry entry;
          entry.volume_id = buf;
          entry.specimen_id = specimen_id;
          entry.patient_id = patient_id;
          entry.label = label;
          entry.meta = meta;
          const fs::path rel_dir = fs::path("frames") / entry.volume_id;
          fs::create_directories(out_dir / rel_dir);
          const std::uint64_t volume_seed = mix_seed(seed, static_cast<std::uint64_t>(volume_index), 0x766f6cULL);
          for (int f = 0; f < config.frames_per_volume; ++f) {
            std::snprintf(buf, sizeof buf, "f%03d.pgm", f);
            const fs::path rel = rel_dir / buf;
            write_frame(render_phantom_frame(label, config.frame_width, config.frame_height, volume_seed, f),
                        out_dir / rel);
            entry.frames.push_back(rel.generic_string());
          }
          manifest.entries.push_back(std::move(entry));
        }
      }
    }
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace cadx

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cadx {

inline constexpr int kNumFineClasses = 5;

enum class FineClass : int { Normal = 0, Ectropion = 1, Lsil = 2, Hsil = 3, Cancer = 4 };

enum class GeneralClass : int { Low = 0, High = 1 };

std::string_view fine_class_name(FineClass c);
std::string_view general_class_name(GeneralClass c);
/// Throws DataError for codes outside 0..4.
FineClass fine_class_from_code(int code);
GeneralClass general_class_of(FineClass c);
/// LOW = {normal, ectropion, LSIL}, HIGH = {HSIL, cancer}.
std::vector<FineClass> subclasses(GeneralClass g);

inline int code(FineClass c) { return static_cast<int>(c); }

/// Grayscale frame, row-major, intensities in [0,1] while in memory.
/// Preprocessing may produce zero-centered frames with negative values.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<double> pixels;

  Frame() = default;
  Frame(int w, int h, double fill = 0.0);

  double& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  std::size_t size() const { return pixels.size(); }
  double mean() const;
  bool operator==(const Frame&) const = default;
};

/// Binary PGM (P5), maxval 255. Values map to v/255.
Frame read_frame(const std::filesystem::path& path);
Frame decode_pgm(std::string_view bytes);
/// Quantizes with round(v * 255); values must lie in [0,1].
void write_frame(const Frame& frame, const std::filesystem::path& path);
std::string encode_pgm(const Frame& frame);

struct PatientMeta {
  int age = 0;
  bool hpv = false;
  bool operator==(const PatientMeta&) const = default;
};

struct ManifestEntry {
  std::string volume_id;
  std::string specimen_id;
  std::string patient_id;
  FineClass label = FineClass::Normal;
  PatientMeta meta;
  /// Paths as written in the manifest; relative ones resolve against the
  /// manifest's directory.
  std::vector<std::string> frames;

  bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  /// Directory used to resolve relative frame paths.
  std::filesystem::path base_dir;

  std::filesystem::path frame_path(const ManifestEntry& e, std::size_t i) const;
  const ManifestEntry* find(std::string_view volume_id) const;
};

/// Parses and validates: duplicate volume ids, specimen/patient conflicts,
/// label and age ranges, and (when check_files) frame file existence.
Manifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir,
                        bool check_files = true);
Manifest load_manifest(const std::filesystem::path& path);
void validate_manifest(const Manifest& m, bool check_files);

/// Canonical serialization: sorted keys, two-space indent, LF, trailing newline.
std::string serialize_manifest(const Manifest& m);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

std::vector<Frame> load_volume_frames(const Manifest& m, const ManifestEntry& e);

/// Synthetic dataset layout. Counts are per class except where noted.
struct PhantomConfig {
  std::array<int, kNumFineClasses> patients_per_class{7, 3, 1, 2, 5};
  int specimens_per_patient = 2;
  int volumes_per_specimen = 2;
  int frames_per_volume = 40;
  int frame_width = 80;
  int frame_height = 96;

  void validate() const;
};

/// Renders one phantom frame. Exposed for tests and the measurement tooling.
Frame render_phantom_frame(FineClass label, int width, int height, std::uint64_t volume_seed,
                           int frame_index);

/// Writes frames under out_dir/frames/<volume_id>/ and out_dir/manifest.json.
/// Output bytes depend only on (config, seed).
Manifest generate_phantom_dataset(const PhantomConfig& config, std::uint64_t seed,
                                  const std::filesystem::path& out_dir);

}  // namespace cadx

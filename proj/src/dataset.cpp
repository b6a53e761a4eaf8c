#include "cadx/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "cadx/common.hpp"

namespace cadx {

using nlohmann::json;

std::string_view fine_class_name(FineClass c) {
  switch (c) {
    case FineClass::Normal: return "normal";
    case FineClass::Ectropion: return "ectropion";
    case FineClass::Lsil: return "LSIL";
    case FineClass::Hsil: return "HSIL";
    case FineClass::Cancer: return "cancer";
  }
  return "?";
}

std::string_view general_class_name(GeneralClass c) {
  return c == GeneralClass::High ? "HIGH" : "LOW";
}

FineClass fine_class_from_code(int code) {
  if (code < 0 || code >= kNumFineClasses)
    throw DataError("label out of range: " + std::to_string(code));
  return static_cast<FineClass>(code);
}

GeneralClass general_class_of(FineClass c) {
  return code(c) >= code(FineClass::Hsil) ? GeneralClass::High : GeneralClass::Low;
}

std::vector<FineClass> subclasses(GeneralClass g) {
  if (g == GeneralClass::Low) return {FineClass::Normal, FineClass::Ectropion, FineClass::Lsil};
  return {FineClass::Hsil, FineClass::Cancer};
}

Frame::Frame(int w, int h, double fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
  if (w < 0 || h < 0) throw DataError("negative frame dimensions");
}

double Frame::mean() const {
  if (pixels.empty()) return 0.0;
  return std::accumulate(pixels.begin(), pixels.end(), 0.0) / static_cast<double>(pixels.size());
}

// ---------------------------------------------------------------------------
// PGM

namespace {

class PgmHeaderReader {
 public:
  explicit PgmHeaderReader(std::string_view bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      char ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_int() {
    skip_space_and_comments();
    std::size_t start = pos_;
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > 1'000'000'000) throw DataError("malformed PGM header: number too large");
      ++pos_;
    }
    if (pos_ == start) throw DataError("malformed PGM header");
    return value;
  }

  std::size_t pos() const { return pos_; }
  void advance(std::size_t n) { pos_ += n; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Frame decode_pgm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw DataError("malformed PGM header: expected P5 magic");
  PgmHeaderReader reader(bytes);
  reader.advance(2);
  const long width = reader.read_int();
  const long height = reader.read_int();
  const long maxval = reader.read_int();
  if (width <= 0 || height <= 0) throw DataError("malformed PGM header: empty image");
  if (maxval != 255) throw DataError("unsupported maxval " + std::to_string(maxval));
  // Exactly one whitespace byte separates the header from the raster.
  if (reader.pos() >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[reader.pos()])))
    throw DataError("malformed PGM header");
  reader.advance(1);

  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - reader.pos() < count) throw DataError("truncated PGM payload");

  Frame frame(static_cast<int>(width), static_cast<int>(height));
  const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + reader.pos());
  for (std::size_t i = 0; i < count; ++i) frame.pixels[i] = raster[i] / 255.0;
  return frame;
}

Frame read_frame(const std::filesystem::path& path) {
  try {
    return decode_pgm(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string encode_pgm(const Frame& frame) {
  if (frame.width <= 0 || frame.height <= 0 || frame.size() != static_cast<std::size_t>(frame.width) * frame.height)
    throw DataError("frame dimensions inconsistent with pixel count");
  std::string out = "P5\n" + std::to_string(frame.width) + " " + std::to_string(frame.height) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const double v = frame.pixels[i];
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("frame value outside [0,1]");
    out[header + i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  return out;
}

void write_frame(const Frame& frame, const std::filesystem::path& path) {
  write_text_file(path, encode_pgm(frame));
}

// ---------------------------------------------------------------------------
// Manifest

std::filesystem::path Manifest::frame_path(const ManifestEntry& e, std::size_t i) const {
  std::filesystem::path p(e.frames.at(i));
  return p.is_absolute() ? p : base_dir / p;
}

const ManifestEntry* Manifest::find(std::string_view volume_id) const {
  for (const auto& e : entries)
    if (e.volume_id == volume_id) return &e;
  return nullptr;
}

void validate_manifest(const Manifest& m, bool check_files) {
  if (m.entries.empty()) throw DataError("empty manifest");
  std::unordered_set<std::string> volume_ids;
  std::unordered_map<std::string, std::string> specimen_patient;
  std::unordered_map<std::string, PatientMeta> patient_meta;
  for (const auto& e : m.entries) {
    if (e.volume_id.empty()) throw DataError("empty volume_id");
    if (!volume_ids.insert(e.volume_id).second) throw DataError("duplicate volume_id " + e.volume_id);
    auto [it, inserted] = specimen_patient.emplace(e.specimen_id, e.patient_id);
    if (!inserted && it->second != e.patient_id)
      throw DataError("specimen/patient conflict: specimen " + e.specimen_id + " under patients " +
                      it->second + " and " + e.patient_id);
    if (e.meta.age < 0 || e.meta.age > 130)
      throw DataError("implausible age " + std::to_string(e.meta.age) + " for volume " + e.volume_id);
    auto [pit, pnew] = patient_meta.emplace(e.patient_id, e.meta);
    if (!pnew && (pit->second.age != e.meta.age || pit->second.hpv != e.meta.hpv))
      throw DataError("inconsistent metadata for patient " + e.patient_id);
    fine_class_from_code(code(e.label));
    if (e.frames.empty()) throw DataError("volume " + e.volume_id + " has no frames");
    if (check_files) {
      for (std::size_t i = 0; i < e.frames.size(); ++i) {
        if (!std::filesystem::is_regular_file(m.frame_path(e, i)))
          throw DataError("missing frame file " + m.frame_path(e, i).string());
      }
    }
  }
}

Manifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir,
                        bool check_files) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("manifest parse error: ") + e.what());
  }
  Manifest m;
  m.base_dir = base_dir;
  try {
    if (!doc.is_object()) throw DataError("manifest must be a JSON object");
    for (const auto& [key, _] : doc.items())
      if (key != "version" && key != "entries") throw DataError("unknown manifest key: " + key);
    if (doc.at("version").get<int>() != 1) throw DataError("unsupported manifest version");
    static const std::set<std::string> kEntryKeys{"volume_id", "specimen_id", "patient_id",
                                                  "label",     "age",         "hpv",
                                                  "frames"};
    for (const auto& item : doc.at("entries")) {
      for (const auto& [key, _] : item.items())
        if (!kEntryKeys.count(key)) throw DataError("unknown manifest entry key: " + key);
      ManifestEntry e;
      e.volume_id = item.at("volume_id").get<std::string>();
      e.specimen_id = item.at("specimen_id").get<std::string>();
      e.patient_id = item.at("patient_id").get<std::string>();
      e.label = fine_class_from_code(item.at("label").get<int>());
      e.meta.age = item.at("age").get<int>();
      e.meta.hpv = item.at("hpv").get<bool>();
      e.frames = item.at("frames").get<std::vector<std::string>>();
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest schema error: ") + e.what());
  }
  validate_manifest(m, check_files);
  return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path), path.parent_path(), true);
}

std::string serialize_manifest(const Manifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"volume_id", e.volume_id},
                       {"specimen_id", e.specimen_id},
                       {"patient_id", e.patient_id},
                       {"label", code(e.label)},
                       {"age", e.meta.age},
                       {"hpv", e.meta.hpv},
                       {"frames", e.frames}});
  }
  json doc = {{"version", 1}, {"entries", std::move(entries)}};
  return doc.dump(2) + "\n";
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  write_text_file(path, serialize_manifest(m));
}

std::vector<Frame> load_volume_frames(const Manifest& m, const ManifestEntry& e) {
  std::vector<Frame> frames;
  frames.reserve(e.frames.size());
  for (std::size_t i = 0; i < e.frames.size(); ++i) frames.push_back(read_frame(m.frame_path(e, i)));
  for (const auto& f : frames)
    if (f.width != frames.front().width || f.height != frames.front().height)
      throw DataError("volume " + e.volume_id + " has frames of differing sizes");
  return frames;
}

}  // namespace cadx

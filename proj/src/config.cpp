#include "cadx/config.hpp"

#include <set>

#include "cadx/common.hpp"

namespace cadx {

using nlohmann::json;

namespace {

/// Reads known keys out of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw UsageError("config: " + path_ + " must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : doc_.items())
      if (!seen_.count(key)) throw UsageError("config: unknown key " + path_ + "." + key);
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw UsageError("config: bad value for " + path_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  const std::string& path() const { return path_; }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

void RunConfig::validate() const {
  phantom.validate();
  preprocess.validate();
  net.validate();
  adam.validate();
  svm.validate();
  decision.validate();
  if (train.epochs < 0 || train.batch_size < 1) throw UsageError("config: need epochs >= 0 and batch_size >= 1");
  if (cnn_frames_per_volume < 0 || svm_frames_per_volume < 0)
    throw UsageError("config: frames-per-volume limits must be non-negative");
  if (folds < 2) throw UsageError("config: need at least two folds");
  if (preprocess.target_size != net.input_size)
    throw UsageError("config: preprocess.target_size must equal net.input_size");
}

RunConfig run_config_from_json(const json& doc) {
  RunConfig c;
  {
    Section root(doc, "config");
    if (const json* p = root.child("phantom")) {
      Section s(*p, "phantom");
      s.get("patients_per_class", c.phantom.patients_per_class);
      s.get("specimens_per_patient", c.phantom.specimens_per_patient);
      s.get("volumes_per_specimen", c.phantom.volumes_per_specimen);
      s.get("frames_per_volume", c.phantom.frames_per_volume);
      s.get("frame_width", c.phantom.frame_width);
      s.get("frame_height", c.phantom.frame_height);
    }
    if (const json* p = root.child("preprocess")) {
      Section s(*p, "preprocess");
      s.get("crop_size", c.preprocess.crop_size);
      s.get("target_size", c.preprocess.target_size);
      s.get("saturation_threshold", c.preprocess.saturation_threshold);
      s.get("darkness_threshold", c.preprocess.darkness_threshold);
      s.get("blur_threshold", c.preprocess.blur_threshold);
    }
    if (const json* p = root.child("net")) {
      Section s(*p, "net");
      s.get("input_size", c.net.input_size);
      s.get("conv_channels", c.net.conv_channels);
      s.get("fc1_dim", c.net.fc1_dim);
      s.get("fc2_dim", c.net.fc2_dim);
      s.get("out_dim", c.net.out_dim);
      s.get("trainable", c.net.trainable);
    }
    if (const json* p = root.child("adam")) {
      Section s(*p, "adam");
      s.get("learning_rate", c.adam.learning_rate);
      s.get("beta1", c.adam.beta1);
      s.get("beta2", c.adam.beta2);
      s.get("decay", c.adam.decay);
      s.get("epsilon", c.adam.epsilon);
    }
    if (const json* p = root.child("train")) {
      Section s(*p, "train");
      s.get("epochs", c.train.epochs);
      s.get("batch_size", c.train.batch_size);
      s.get("cnn_frames_per_volume", c.cnn_frames_per_volume);
      s.get("svm_frames_per_volume", c.svm_frames_per_volume);
    }
    if (const json* p = root.child("svm")) {
      Section s(*p, "svm");
      std::string kernel = c.svm.kernel == svm::KernelType::Rbf ? "rbf" : "linear";
      s.get("kernel", kernel);
      if (kernel == "rbf") c.svm.kernel = svm::KernelType::Rbf;
      else if (kernel == "linear") c.svm.kernel = svm::KernelType::Linear;
      else throw UsageError("config: svm.kernel must be \"rbf\" or \"linear\"");
      s.get("C", c.svm.C);
      if (const json* g = s.child("gamma")) {
        if (g->is_null() || (g->is_string() && g->get<std::string>() == "auto")) c.svm.gamma.reset();
        else if (g->is_number()) c.svm.gamma = g->get<double>();
        else throw UsageError("config: svm.gamma must be a number, null or \"auto\"");
      }
      s.get("tolerance", c.svm.tolerance);
      s.get("max_iterations", c.svm.max_iterations);
    }
    if (const json* p = root.child("decision")) {
      Section s(*p, "decision");
      s.get("threshold", c.decision.threshold);
      s.get("average_probabilities", c.average_probabilities);
    }
    root.get("folds", c.folds);
    root.get("seed", c.seed);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError("config: " + path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return run_config_from_json(doc);
}

json run_config_to_json(const RunConfig& c) {
  json gamma = c.svm.gamma ? json(*c.svm.gamma) : json("auto");
  return json{
      {"phantom",
       {{"patients_per_class", c.phantom.patients_per_class},
        {"specimens_per_patient", c.phantom.specimens_per_patient},
        {"volumes_per_specimen", c.phantom.volumes_per_specimen},
        {"frames_per_volume", c.phantom.frames_per_volume},
        {"frame_width", c.phantom.frame_width},
        {"frame_height", c.phantom.frame_height}}},
      {"preprocess",
       {{"crop_size", c.preprocess.crop_size},
        {"target_size", c.preprocess.target_size},
        {"saturation_threshold", c.preprocess.saturation_threshold},
        {"darkness_threshold", c.preprocess.darkness_threshold},
        {"blur_threshold", c.preprocess.blur_threshold}}},
      {"net",
       {{"input_size", c.net.input_size},
        {"conv_channels", c.net.conv_channels},
        {"fc1_dim", c.net.fc1_dim},
        {"fc2_dim", c.net.fc2_dim},
        {"out_dim", c.net.out_dim},
        {"trainable", c.net.trainable}}},
      {"adam",
       {{"learning_rate", c.adam.learning_rate},
        {"beta1", c.adam.beta1},
        {"beta2", c.adam.beta2},
        {"decay", c.adam.decay},
        {"epsilon", c.adam.epsilon}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"cnn_frames_per_volume", c.cnn_frames_per_volume},
        {"svm_frames_per_volume", c.svm_frames_per_volume}}},
      {"svm",
       {{"kernel", c.svm.kernel == svm::KernelType::Rbf ? "rbf" : "linear"},
        {"C", c.svm.C},
        {"gamma", gamma},
        {"tolerance", c.svm.tolerance},
        {"max_iterations", c.svm.max_iterations}}},
      {"decision", {{"threshold", c.decision.threshold}, {"average_probabilities", c.average_probabilities}}},
      {"folds", c.folds},
      {"seed", c.seed},
  };
}

std::string dump_canonical(const json& doc) { return doc.dump(2) + "\n"; }

}  // namespace cadx

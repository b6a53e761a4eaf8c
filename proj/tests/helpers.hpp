#pragma once

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <optional>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "cadx/common.hpp"
#include "cadx/dataset.hpp"
#include "cadx/network.hpp"
#include "cadx/training.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("cadx_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline double rel_error(double analytic, double numeric, double floor = 1e-7) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Small net from the gradient-check example: 8x8 input, conv blocks (2,2), FC 8.
inline cadx::nn::NetConfig tiny_config() {
  cadx::nn::NetConfig c;
  c.input_size = 8;
  c.conv_channels = {2, 2};
  c.fc1_dim = 8;
  c.fc2_dim = 8;
  return c;
}

/// Random weights and biases (biases nonzero so every unit is exercised).
template <typename T>
cadx::nn::CnnModel<T> random_model(const cadx::nn::NetConfig& config, std::uint64_t seed) {
  auto model = cadx::nn::init_model<T>(config, seed);
  cadx::Rng rng(seed ^ 0x5eedULL);
  for (auto p : model.net.parameters())
    for (auto& v : p) v += static_cast<T>(rng.normal(0.0, 0.1));
  return model;
}

template <typename T>
std::vector<T> random_image(std::size_t n, cadx::Rng& rng) {
  std::vector<T> x(n);
  for (auto& v : x) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return x;
}

/// Smallest distance of any ReLU input to 0 and of any max-pool winner to the
/// runner-up in its window; finite differences are only meaningful when this
/// is comfortably larger than the step.
template <typename T>
double kink_margin(const cadx::nn::Network<T>& net, const cadx::nn::Activations<T>& acts) {
  double margin = 1e300;
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& in = acts.outputs[i];
    if (std::holds_alternative<cadx::nn::Relu>(layers[i])) {
      for (T v : in) margin = std::min(margin, std::abs(static_cast<double>(v)));
    } else if (std::holds_alternative<cadx::nn::MaxPool2x2>(layers[i])) {
      const cadx::nn::Shape s = i == 0 ? net.input_shape() : net.shapes()[i - 1];
      for (int c = 0; c < s.channels; ++c)
        for (int r = 0; r + 1 < s.height; r += 2)
          for (int q = 0; q + 1 < s.width; q += 2) {
            double w[4];
            int k = 0;
            for (int dr = 0; dr < 2; ++dr)
              for (int dq = 0; dq < 2; ++dq)
                w[k++] = static_cast<double>(in[(static_cast<std::size_t>(c) * s.height + r + dr) * s.width + q + dq]);
            std::sort(w, w + 4);
            // A window of post-ReLU zeros stays zero under small steps.
            if (w[3] == 0.0) continue;
            margin = std::min(margin, w[3] - w[2]);
          }
    }
  }
  return margin;
}

#ifdef CADX_CLI
/// Runs the command-line tool with stdout and stderr sent to log; returns the
/// exit status.
inline int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(CADX_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Small phantom and network that exercise every CLI stage in seconds.
inline const char* kSmallRunConfig = R"({
  "phantom": {"patients_per_class": [3, 3, 3, 3, 3], "specimens_per_patient": 1,
              "volumes_per_specimen": 1, "frames_per_volume": 8},
  "net": {"conv_channels": [4, 8], "fc1_dim": 32, "fc2_dim": 32},
  "train": {"epochs": 1, "cnn_frames_per_volume": 4},
  "folds": 3
})";

/// Mean cross-entropy computed from forward passes only.
inline double forward_loss(const cadx::nn::CnnModel<double>& m,
                           std::span<const cadx::nn::LabeledImage<double>> batch) {
  double loss = 0.0;
  for (const auto& s : batch) {
    const auto r = cadx::nn::forward(m, std::span<const double>(s.image));
    double mx = r.logits[0];
    for (double v : r.logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : r.logits) z += std::exp(v - mx);
    loss += -(r.logits[static_cast<std::size_t>(s.label)] - mx - std::log(z));
  }
  return loss / static_cast<double>(batch.size());
}

/// Worst relative error between backprop and central differences (h = 1e-5)
/// over every parameter of a random tiny net on a two-image batch. Empty when
/// the seed lands too close to a ReLU or max-pool kink.
inline std::optional<double> gradient_check(std::uint64_t seed) {
  using namespace cadx::nn;
  const double h = 1e-5;
  const auto model = random_model<double>(tiny_config(), seed);
  cadx::Rng rng(seed * 31);
  const auto x0 = random_image<double>(64, rng);
  const auto x1 = random_image<double>(64, rng);
  const std::vector<LabeledImage<double>> batch{{x0, static_cast<int>(seed % 5)},
                                                {x1, static_cast<int>((seed + 2) % 5)}};
  if (kink_margin(model.net, model.net.forward(x0)) < 1e-4 || kink_margin(model.net, model.net.forward(x1)) < 1e-4)
    return std::nullopt;
  const auto lg = loss_and_grad(model, std::span<const LabeledImage<double>>(batch));
  auto probe = model;
  auto params = probe.net.parameters();
  double worst = 0.0;
  for (std::size_t t = 0; t < params.size(); ++t)
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double saved = params[t][i];
      params[t][i] = saved + h;
      const double up = forward_loss(probe, batch);
      params[t][i] = saved - h;
      const double down = forward_loss(probe, batch);
      params[t][i] = saved;
      worst = std::max(worst, rel_error(lg.grads[t][i], (up - down) / (2 * h)));
    }
  return worst;
}

/// In-memory manifest without frame files, for fold planning tests.
inline cadx::Manifest synthetic_manifest(cadx::Rng& rng, int specimens, int max_volumes) {
  cadx::Manifest m;
  int patient = 0, volume = 0;
  for (int s = 0; s < specimens; ++s) {
    if (s == 0 || rng.uniform() < 0.6) ++patient;
    const int label = static_cast<int>(rng.below(5));
    const int volumes = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_volumes)));
    for (int v = 0; v < volumes; ++v) {
      cadx::ManifestEntry e;
      e.volume_id = "V" + std::to_string(volume++);
      e.specimen_id = "S" + std::to_string(s);
      e.patient_id = "P" + std::to_string(patient);
      e.label = static_cast<cadx::FineClass>(label);
      e.meta.age = 18 + static_cast<int>(rng.below(70));
      e.meta.hpv = rng.uniform() < 0.5;
      e.frames = {"f.pgm"};
      m.entries.push_back(e);
    }
  }
  // Patient metadata must be consistent across a patient's volumes.
  for (auto& e : m.entries)
    for (const auto& o : m.entries)
      if (o.patient_id == e.patient_id) {
        e.meta = o.meta;
        break;
      }
  return m;
}

}  // namespace testutil

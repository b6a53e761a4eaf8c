#include "cadx/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "cadx/common.hpp"

namespace cadx::nn {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  float f32() { return std::bit_cast<float>(u32()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const CnnModel<float>& model) {
  const NetConfig& c = model.config;
  std::string out = "CADX";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(c.input_size));
  put_u32(out, static_cast<std::uint32_t>(c.conv_channels.size()));
  for (int ch : c.conv_channels) put_u32(out, static_cast<std::uint32_t>(ch));
  put_u32(out, static_cast<std::uint32_t>(c.fc1_dim));
  put_u32(out, static_cast<std::uint32_t>(c.fc2_dim));
  put_u32(out, static_cast<std::uint32_t>(c.out_dim));
  put_u32(out, static_cast<std::uint32_t>(c.trainable.size()));
  for (bool b : c.trainable) out.push_back(b ? 1 : 0);
  for (auto tensor : model.net.parameters())
    for (float f : tensor) put_f32(out, f);
  return out;
}

CnnModel<float> decode_checkpoint(std::string_view bytes) {
  if (bytes.substr(0, 4) != "CADX") throw DataError("not a checkpoint: bad magic");
  Reader r(bytes.substr(4));
  if (r.u32() != kCheckpointVersion) throw DataError("unsupported checkpoint version");
  NetConfig c;
  c.input_size = static_cast<int>(r.u32());
  const std::uint32_t n_conv = r.u32();
  if (n_conv > 64) throw DataError("checkpoint: implausible conv block count");
  c.conv_channels.clear();
  for (std::uint32_t i = 0; i < n_conv; ++i) c.conv_channels.push_back(static_cast<int>(r.u32()));
  c.fc1_dim = static_cast<int>(r.u32());
  c.fc2_dim = static_cast<int>(r.u32());
  c.out_dim = static_cast<int>(r.u32());
  const std::uint32_t n_mask = r.u32();
  if (n_mask > 256) throw DataError("checkpoint: implausible mask length");
  for (std::uint32_t i = 0; i < n_mask; ++i) c.trainable.push_back(r.u8() != 0);
  CnnModel<float> model;
  try {
    model = build_model<float>(c);
  } catch (const UsageError& e) {
    throw DataError(std::string("checkpoint config invalid: ") + e.what());
  }
  for (auto tensor : model.net.parameters())
    for (auto& f : tensor) {
      f = r.f32();
      if (!std::isfinite(f)) throw DataError("checkpoint contains non-finite parameters");
    }
  if (!r.done()) throw DataError("checkpoint has trailing bytes");
  return model;
}

void save_checkpoint(const CnnModel<float>& model, std::uint64_t training_seed, const std::filesystem::path& path) {
  write_text_file(path, encode_checkpoint(model));
  nlohmann::json side = {
      {"format", "CADX"},
      {"version", kCheckpointVersion},
      {"training_seed", training_seed},
      {"config",
       {{"input_size", model.config.input_size},
        {"conv_channels", model.config.conv_channels},
        {"fc1_dim", model.config.fc1_dim},
        {"fc2_dim", model.config.fc2_dim},
        {"out_dim", model.config.out_dim},
        {"trainable", model.config.trainable}}},
  };
  write_text_file(path.string() + ".json", side.dump(2) + "\n");
}

CnnModel<float> load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace cadx::nn

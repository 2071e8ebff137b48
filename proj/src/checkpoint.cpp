// SPDX-License-Identifier: Apache-2.0
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rahf/model.hpp"

namespace rahf {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'R', 'A', 'H', 'F'};

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void put_string(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw std::runtime_error("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string string() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void floats(float* dst, std::size_t n) {
    need(n * 4);
    std::memcpy(dst, bytes_.data() + pos_, n * 4);
    pos_ += n * 4;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const RahfModel& model) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  KvConfig kv = model.config().to_kv();
  kv.set("vocab", model.vocab().to_text());
  put_string(out, kv.to_text());
  put_u32(out, static_cast<std::uint32_t>(model.parameters().size()));
  for (const auto& [name, t] : model.parameters()) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(float));
  }
  return out;
}

RahfModel checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw std::runtime_error("checkpoint: bad magic");
  Reader in(bytes);
  in.u32();
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const KvConfig kv = KvConfig::parse(in.string());
  ModelConfig config = ModelConfig::from_kv(kv);
  Vocabulary vocab = Vocabulary::from_text(kv.get("vocab", ""));
  const std::uint32_t count = in.u32();
  ParameterStore params;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.string();
    const std::uint32_t rank = in.u32();
    if (rank == 0 || rank > 8) throw std::runtime_error("checkpoint: tensor '" + name + "' has invalid rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) {
      const std::uint32_t v = in.u32();
      if (v == 0 || v > (1u << 30)) throw std::runtime_error("checkpoint: tensor '" + name + "' has invalid dims");
      d = static_cast<int>(v);
    }
    Tensor t(shape);
    in.floats(t.data(), t.size());
    if (!params.emplace(std::move(name), std::move(t)).second) throw std::runtime_error("checkpoint: duplicate tensor");
  }
  if (!in.done()) throw std::runtime_error("checkpoint: trailing bytes");
  return RahfModel(std::move(config), std::move(vocab), std::move(params));
}

void save_checkpoint(const std::filesystem::path& path, const RahfModel& model) {
  const std::string bytes = checkpoint_bytes(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

RahfModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_bytes(ss.str());
}

}  // namespace rahf

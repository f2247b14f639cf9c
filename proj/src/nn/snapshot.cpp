#include "ganno/nn/snapshot.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "ganno/errors.hpp"

namespace ganno::nn {

namespace {

constexpr char kMagic[4] = {'G', 'N', 'S', 'N'};

class Writer {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  template <typename T>
  void le(T value) {
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(std::begin(buf), std::end(buf));
    }
    bytes(buf, sizeof(T));
  }
  void array(const std::vector<float>& values) {
    le(static_cast<std::uint32_t>(values.size()));
    for (float v : values) le(std::bit_cast<std::uint32_t>(v));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw DecodeError("snapshot is truncated");
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, in_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      std::reverse(std::begin(buf), std::end(buf));
    }
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
  }
  std::vector<float> array() {
    const auto n = le<std::uint32_t>();
    need(static_cast<std::size_t>(n) * 4);
    std::vector<float> values(n);
    for (auto& v : values) v = std::bit_cast<float>(le<std::uint32_t>());
    return values;
  }
  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> snapshot(const NetworkState& state) {
  Writer w;
  w.bytes(kMagic, 4);
  w.le(kSnapshotVersion);
  w.le(static_cast<std::uint32_t>(state.layers.size()));
  for (const LayerParams& p : state.layers) {
    w.array(p.weights);
    w.array(p.bias);
    w.array(p.m_weights);
    w.array(p.m_bias);
    w.array(p.v_weights);
    w.array(p.v_bias);
  }
  w.le(state.step);
  return w.take();
}

NetworkState restore(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.raw(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw DecodeError("bad snapshot magic");
  }
  const auto version = r.le<std::uint32_t>();
  if (version != kSnapshotVersion) {
    throw DecodeError("unsupported snapshot version " + std::to_string(version));
  }
  const auto count = r.le<std::uint32_t>();
  NetworkState state;
  for (std::uint32_t l = 0; l < count; ++l) {
    LayerParams p;
    p.weights = r.array();
    p.bias = r.array();
    p.m_weights = r.array();
    p.m_bias = r.array();
    p.v_weights = r.array();
    p.v_bias = r.array();
    if (p.m_weights.size() != p.weights.size() ||
        p.v_weights.size() != p.weights.size() ||
        p.m_bias.size() != p.bias.size() || p.v_bias.size() != p.bias.size()) {
      throw DecodeError("moment arrays of layer " + std::to_string(l) +
                        " do not match its parameters");
    }
    for (float v : p.v_weights) {
      if (!(v >= 0.0f)) throw DecodeError("negative second moment");
    }
    for (float v : p.v_bias) {
      if (!(v >= 0.0f)) throw DecodeError("negative second moment");
    }
    state.layers.push_back(std::move(p));
  }
  state.step = r.le<std::uint64_t>();
  if (!r.done()) throw DecodeError("trailing bytes after snapshot");
  return state;
}

void save_snapshot(const NetworkState& state, const std::filesystem::path& path) {
  const auto bytes = snapshot(state);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

NetworkState load_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return restore(bytes);
}

}  // namespace ganno::nn

#include "adenet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "adenet/error.hpp"

namespace adenet::model {
namespace {

constexpr char kMagic[8] = {'A', 'D', 'E', 'N', 'E', 'T', 'C', 'K'};

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t>& data() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  void need(std::size_t n) const {
    if (pos_ + n > size_) throw CheckpointError(CheckpointError::Kind::kTruncated, "checkpoint: truncated payload");
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

std::vector<const Tensor<float>*> stored_tensors(const LayerSpec<float>& l) {
  std::vector<const Tensor<float>*> out;
  for (const Tensor<float>* t : {&l.weight, &l.bias, &l.running_mean, &l.running_var})
    if (!t->empty()) out.push_back(t);
  return out;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.info.name.size()));
  w.bytes(model.info.name.data(), model.info.name.size());
  w.u32(static_cast<std::uint32_t>(model.info.in_channels));
  w.u32(static_cast<std::uint32_t>(model.info.classes));
  w.u32(static_cast<std::uint32_t>(model.info.fixed_input));
  w.u64(model.info.seed);
  w.u8(model.mode == nn::Mode::kTrain ? 0 : 1);
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& l : model.layers) {
    w.u8(static_cast<std::uint8_t>(l.type));
    w.u32(static_cast<std::uint32_t>(l.in));
    w.u32(static_cast<std::uint32_t>(l.out));
    const auto tensors = stored_tensors(l);
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const auto* t : tensors) {
      const Shape& s = t->shape();
      for (std::size_t d : {s.n, s.c, s.h, s.w}) w.u32(static_cast<std::uint32_t>(d));
    }
  }
  for (const auto& l : model.layers)
    for (const auto* t : stored_tensors(l))
      for (float v : t->storage()) w.f32(v);
  w.u32(crc32_of(w.data().data(), w.data().size()));
  return std::move(w.data());
}

Model decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError(Kind::kBadMagic, "checkpoint: bad magic");
  Reader r(bytes.data(), bytes.size());
  r.str(sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::kUnsupportedVersion, "checkpoint: unsupported version " + std::to_string(version));

  Model m;
  m.info.name = r.str(r.u32());
  m.info.in_channels = r.u32();
  m.info.classes = r.u32();
  m.info.fixed_input = r.u32();
  m.info.seed = r.u64();
  m.mode = r.u8() == 0 ? nn::Mode::kTrain : nn::Mode::kInfer;

  const std::uint32_t layer_count = r.u32();
  std::vector<std::vector<Shape>> shapes(layer_count);
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    LayerSpec<float> l;
    const std::uint8_t type = r.u8();
    if (type > static_cast<std::uint8_t>(LayerType::kSoftmax))
      throw CheckpointError(Kind::kMalformed, "checkpoint: unknown layer type " + std::to_string(type));
    l.type = static_cast<LayerType>(type);
    l.in = r.u32();
    l.out = r.u32();
    const std::uint32_t tensor_count = r.u32();
    if (tensor_count > 4) throw CheckpointError(Kind::kMalformed, "checkpoint: too many tensors in layer");
    for (std::uint32_t t = 0; t < tensor_count; ++t) {
      Shape s;
      s.n = r.u32();
      s.c = r.u32();
      s.h = r.u32();
      s.w = r.u32();
      shapes[i].push_back(s);
    }
    m.layers.push_back(std::move(l));
  }
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    auto& l = m.layers[i];
    Tensor<float>* slots[4] = {&l.weight, &l.bias, &l.running_mean, &l.running_var};
    for (std::size_t t = 0; t < shapes[i].size(); ++t) {
      const Shape& s = shapes[i][t];
      r.need(s.numel() * 4);
      Tensor<float> tensor(s);
      for (std::size_t k = 0; k < tensor.size(); ++k) tensor[k] = r.f32();
      *slots[t] = std::move(tensor);
    }
  }
  const std::size_t body = r.pos();
  const std::uint32_t stored = r.u32();
  if (r.pos() != bytes.size()) throw CheckpointError(Kind::kMalformed, "checkpoint: trailing bytes after checksum");
  if (stored != crc32_of(bytes.data(), body)) throw CheckpointError(Kind::kChecksumMismatch, "checkpoint: checksum mismatch");
  return m;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "checkpoint: cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "checkpoint: write failed for " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "checkpoint: cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace adenet::model

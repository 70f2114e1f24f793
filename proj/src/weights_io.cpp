#include "scnn/weights_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "scnn/errors.hpp"

namespace scnn {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'N', 'N', 'W', 'G', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& data, std::size_t end) : data_(data), end_(end) {}

  void need(std::size_t n) const {
    if (pos_ + n > end_) throw FormatError("weight file is truncated");
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(data_[pos_++]) << (8 * i);
    return v;
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
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& data_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

template <typename Enum>
Enum checked_enum(std::uint8_t v, std::uint8_t max, const char* what) {
  if (v > max) throw FormatError(std::string("weight file has an invalid ") + what);
  return static_cast<Enum>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const ArchitectureSpec& spec, const WeightStore& weights) {
  check_weights_match(spec, weights);
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kWeightFormatVersion);
  w.u32(static_cast<std::uint32_t>(spec.input.size()));
  for (auto d : spec.input) w.u32(static_cast<std::uint32_t>(d));
  w.u32(static_cast<std::uint32_t>(spec.layers.size()));
  for (const auto& l : spec.layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u8(static_cast<std::uint8_t>(l.activation));
    w.u32(static_cast<std::uint32_t>(l.filters));
    w.u32(static_cast<std::uint32_t>(l.kernel));
    w.u32(static_cast<std::uint32_t>(l.units));
    w.f64(l.rate);
  }
  w.u32(static_cast<std::uint32_t>(weights.size()));
  for (const auto& p : weights.params()) {
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u8(static_cast<std::uint8_t>(p.kind));
    w.u8(static_cast<std::uint8_t>(p.role));
    w.u32(static_cast<std::uint32_t>(p.layer));
    w.u8(p.trainable ? 1 : 0);
    w.u8(static_cast<std::uint8_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
  }
  for (const auto& p : weights.params()) {
    for (double v : p.value.values()) w.f32(static_cast<float>(v));
  }
  auto& buf = w.buffer();
  w.u32(crc(buf.data(), buf.size()));
  return std::move(buf);
}

Model decode_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError("not a weight file (bad magic bytes)");
  }
  if (bytes.size() < sizeof kMagic + 8) throw FormatError("weight file is truncated");
  const std::size_t body = bytes.size() - 4;
  Reader r(bytes, body);
  r.str(sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kWeightFormatVersion) {
    throw FormatError("unsupported weight file version " + std::to_string(version) + " (expected " +
                      std::to_string(kWeightFormatVersion) + ")");
  }

  Model model;
  const std::uint32_t input_rank = r.u32();
  if (input_rank > 8) throw FormatError("weight file declares an implausible input rank");
  model.spec.input.clear();
  for (std::uint32_t i = 0; i < input_rank; ++i) model.spec.input.push_back(r.u32());
  const std::uint32_t layer_count = r.u32();
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    LayerSpec l;
    l.kind = checked_enum<LayerKind>(r.u8(), 4, "layer kind");
    l.activation = checked_enum<Activation>(r.u8(), 2, "activation");
    l.filters = r.u32();
    l.kernel = r.u32();
    l.units = r.u32();
    l.rate = r.f64();
    model.spec.layers.push_back(l);
  }
  const std::uint32_t tensor_count = r.u32();
  std::size_t value_count = 0;
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    Parameter p;
    p.name = r.str(r.u16());
    p.kind = checked_enum<LayerKind>(r.u8(), 4, "tensor kind");
    p.role = checked_enum<ParamRole>(r.u8(), 1, "tensor role");
    p.layer = r.u32();
    p.trainable = r.u8() != 0;
    const std::uint8_t rank = r.u8();
    if (rank == 0 || rank > 8) throw FormatError("tensor " + p.name + " has an invalid rank");
    Shape shape;
    for (std::uint8_t k = 0; k < rank; ++k) {
      shape.push_back(r.u32());
      if (shape.back() == 0) throw FormatError("tensor " + p.name + " has a zero extent");
    }
    value_count += shape_size(shape);
    if (value_count * 4 > body) throw FormatError("weight file is truncated");
    p.value = Tensor(shape);
    model.weights.add(std::move(p));
  }
  const std::size_t expected_size = r.pos() + value_count * 4 + 4;
  if (bytes.size() < expected_size) throw FormatError("weight file is truncated");
  if (bytes.size() > expected_size) throw FormatError("weight file has trailing bytes");

  const std::uint32_t stored = static_cast<std::uint32_t>(bytes[body]) |
                               static_cast<std::uint32_t>(bytes[body + 1]) << 8 |
                               static_cast<std::uint32_t>(bytes[body + 2]) << 16 |
                               static_cast<std::uint32_t>(bytes[body + 3]) << 24;
  if (stored != crc(bytes.data(), body)) throw FormatError("weight file checksum mismatch");

  for (auto& p : model.weights.params()) {
    for (double& v : p.value.values()) v = static_cast<double>(r.f32());
  }
  try {
    model.spec.output_shapes();
    check_weights_match(model.spec, model.weights);
  } catch (const ShapeError& e) {
    throw FormatError(std::string("weight file is inconsistent: ") + e.what());
  }
  return model;
}

void save_weights(const ArchitectureSpec& spec, const WeightStore& weights,
                  const std::filesystem::path& path) {
  const auto bytes = encode_weights(spec, weights);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write weight file " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to weight file " + path.string());
}

void save_weights(const Model& model, const std::filesystem::path& path) {
  save_weights(model.spec, model.weights, path);
}

Model load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read weight file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

Model load_weights(const std::filesystem::path& path, const ArchitectureSpec& expected) {
  Model model = load_weights(path);
  check_weights_match(expected, model.weights);
  model.spec = expected;
  return model;
}

}  // namespace scnn

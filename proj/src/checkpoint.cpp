#include "m3net/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "m3net/image_io.hpp"

namespace m3net {

namespace {

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  template <class T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  void need(std::size_t n, const char* what) const {
    if (b_.size() - pos_ < n) {
      throw ParseError(std::string("checkpoint: truncated ") + what + " at byte " + std::to_string(pos_));
    }
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint Checkpoint::from_parameters(const ParameterList& params, const std::string& config_text,
                                       std::uint32_t step) {
  Checkpoint ck;
  ck.step = step;
  ck.config_text = config_text;
  for (const NamedParameter& p : params) {
    CheckpointTensor t{p.name, p.tensor.shape(), {}};
    t.values.reserve(p.tensor.size());
    for (Real v : p.tensor.data()) t.values.push_back(static_cast<float>(v));
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

void Checkpoint::apply_to(const ParameterList& params) const {
  for (const NamedParameter& p : params) {
    const CheckpointTensor* found = nullptr;
    for (const CheckpointTensor& t : tensors) {
      if (t.name == p.name) {
        found = &t;
        break;
      }
    }
    if (!found) throw DataError("checkpoint has no tensor '" + p.name + "'");
    if (found->shape != p.tensor.shape()) {
      throw DataError("checkpoint tensor '" + p.name + "' has shape " + shape_str(found->shape) +
                      ", model expects " + shape_str(p.tensor.shape()));
    }
    Tensor target = p.tensor;
    auto dst = target.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<Real>(found->values[i]);
  }
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  std::vector<std::uint8_t> out{'M', '3', 'N', 'T'};
  put<std::uint32_t>(out, Checkpoint::kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.tensors.size() + 1));
  auto tensor = [&](const std::string& name, const Shape& shape, auto&& value_at, std::size_t count) {
    if (name.size() > 0xffff) throw ContractError("checkpoint: tensor name too long");
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(static_cast<std::uint8_t>(shape.size()));
    for (std::size_t d : shape) put<std::uint64_t>(out, d);
    for (std::size_t i = 0; i < count; ++i) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(value_at(i)));
  };
  for (const CheckpointTensor& t : ck.tensors) {
    tensor(t.name, t.shape, [&](std::size_t i) { return t.values[i]; }, t.values.size());
  }
  const std::string& cfg = ck.config_text;
  tensor(Checkpoint::kConfigName, Shape{cfg.size()},
         [&](std::size_t i) { return static_cast<float>(static_cast<unsigned char>(cfg[i])); }, cfg.size());
  put<std::uint32_t>(out, ck.step);
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader rd(bytes);
  if (rd.bytes(4, "magic") != "M3NT") throw ParseError("checkpoint: bad magic at byte 0");
  const auto version = rd.get<std::uint32_t>("version");
  if (version != Checkpoint::kVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version) + " at byte 4");
  }
  const auto count = rd.get<std::uint32_t>("tensor count");
  Checkpoint ck;
  for (std::uint32_t t = 0; t < count; ++t) {
    CheckpointTensor ct;
    const auto len = rd.get<std::uint16_t>("name length");
    ct.name = rd.bytes(len, "name");
    const auto rank = rd.get<std::uint8_t>("rank");
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const auto ext = rd.get<std::uint64_t>("dims");
      ct.shape.push_back(static_cast<std::size_t>(ext));
      n *= static_cast<std::size_t>(ext);
    }
    rd.need(n * 4, "payload");
    ct.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) ct.values[i] = std::bit_cast<float>(rd.get<std::uint32_t>("payload"));
    if (ct.name == Checkpoint::kConfigName) {
      ck.config_text.clear();
      for (float v : ct.values) ck.config_text.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    } else {
      ck.tensors.push_back(std::move(ct));
    }
  }
  ck.step = rd.get<std::uint32_t>("step");
  if (!rd.done()) throw ParseError("checkpoint: trailing bytes at byte " + std::to_string(rd.pos()));
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  // Write then rename so an interrupted save never clobbers the last good file.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, encode_checkpoint(ck));
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void round_to_float32(const ParameterList& params) {
  for (const NamedParameter& p : params) {
    Tensor t = p.tensor;
    for (Real& v : t.mutable_data()) v = static_cast<Real>(static_cast<float>(v));
  }
}

}  // namespace m3net

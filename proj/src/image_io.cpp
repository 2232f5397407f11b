#include "m3net/image_io.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "m3net/upsample.hpp"

namespace m3net {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<std::uint8_t>& b) : b_(b) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("netpbm: " + what + " at byte " + std::to_string(pos_));
  }

  static bool space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (space(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* field) {
    skip_space_and_comments();
    if (pos_ >= b_.size()) fail(std::string("missing ") + field);
    if (b_[pos_] < '0' || b_[pos_] > '9') fail(std::string("expected ") + field);
    token_ = pos_;
    std::size_t v = 0;
    while (pos_ < b_.size() && b_[pos_] >= '0' && b_[pos_] <= '9') {
      v = v * 10 + (b_[pos_] - '0');
      if (v > (1u << 24)) fail(std::string(field) + " too large");
      ++pos_;
    }
    return v;
  }

  std::size_t pos_ = 0;
  std::size_t token_ = 0;  // start of the last number read

 private:
  const std::vector<std::uint8_t>& b_;
};

}  // namespace

Raster decode_netpbm(const std::vector<std::uint8_t>& bytes) {
  HeaderReader rd(bytes);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    rd.fail("expected P5 or P6 magic");
  }
  Raster r;
  r.channels = bytes[1] == '5' ? 1 : 3;
  rd.pos_ = 2;
  if (rd.pos_ < bytes.size() && !HeaderReader::space(bytes[rd.pos_])) rd.fail("expected whitespace after magic");
  r.width = rd.number("width");
  r.height = rd.number("height");
  const std::size_t maxval = rd.number("maxval");
  if (r.width == 0 || r.height == 0) rd.fail("zero image extent");
  if (maxval != 255) {
    rd.pos_ = rd.token_;
    rd.fail("maxval " + std::to_string(maxval) + " is not 255");
  }
  if (rd.pos_ >= bytes.size() || !HeaderReader::space(bytes[rd.pos_])) rd.fail("expected whitespace after maxval");
  ++rd.pos_;
  const std::size_t need = r.width * r.height * r.channels;
  if (bytes.size() - rd.pos_ < need) {
    rd.fail("truncated payload, " + std::to_string(bytes.size() - rd.pos_) + " of " + std::to_string(need) +
            " bytes");
  }
  r.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(rd.pos_),
                  bytes.begin() + static_cast<std::ptrdiff_t>(rd.pos_ + need));
  return r;
}

std::vector<std::uint8_t> encode_netpbm(const Raster& r) {
  if (r.channels != 1 && r.channels != 3) throw ContractError("netpbm: raster must have 1 or 3 channels");
  if (r.pixels.size() != r.width * r.height * r.channels) throw ContractError("netpbm: pixel count mismatch");
  const std::string header = std::string(r.channels == 1 ? "P5" : "P6") + "\n" + std::to_string(r.width) +
                             " " + std::to_string(r.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), r.pixels.begin(), r.pixels.end());
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to " + path.string());
}

namespace {

Raster load_kind(const std::filesystem::path& path, std::size_t channels) {
  try {
    Raster r = decode_netpbm(read_file(path));
    if (r.channels != channels) {
      throw ParseError(std::string("netpbm: expected ") + (channels == 1 ? "P5" : "P6") + " at byte 0");
    }
    return r;
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace

Raster load_pgm(const std::filesystem::path& path) { return load_kind(path, 1); }
Raster load_ppm(const std::filesystem::path& path) { return load_kind(path, 3); }

void save_pgm(const Raster& r, const std::filesystem::path& path) {
  if (r.channels != 1) throw ContractError("save_pgm: raster has " + std::to_string(r.channels) + " channels");
  write_file(path, encode_netpbm(r));
}

void save_ppm(const Raster& r, const std::filesystem::path& path) {
  if (r.channels != 3) throw ContractError("save_ppm: raster has " + std::to_string(r.channels) + " channels");
  write_file(path, encode_netpbm(r));
}

Raster quantize_gray(const std::vector<Real>& values, std::size_t h, std::size_t w) {
  if (values.size() != h * w) throw DimensionError("quantize_gray: value count mismatch");
  Raster r{w, h, 1, std::vector<std::uint8_t>(h * w)};
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Real v = std::clamp(values[i], 0.0, 1.0);
    r.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * v));
  }
  return r;
}

std::vector<Real> resize_bilinear(const std::vector<Real>& src, std::size_t planes, std::size_t h,
                                  std::size_t w, std::size_t oh, std::size_t ow) {
  if (src.size() != planes * h * w) throw DimensionError("resize_bilinear: size mismatch");
  const RowMix mix = bilinear_mix(h, w, oh, ow);
  std::vector<Real> out(planes * oh * ow, 0.0);
  for (std::size_t c = 0; c < planes; ++c)
    for (std::size_t o = 0; o < oh * ow; ++o) {
      Real acc = 0;
      for (std::size_t e = mix.offsets[o]; e < mix.offsets[o + 1]; ++e) acc += mix.weight[e] * src[c * h * w + mix.src[e]];
      out[c * oh * ow + o] = acc;
    }
  return out;
}

std::vector<Real> resize_nearest(const std::vector<Real>& src, std::size_t planes, std::size_t h,
                                 std::size_t w, std::size_t oh, std::size_t ow) {
  if (src.size() != planes * h * w) throw DimensionError("resize_nearest: size mismatch");
  std::vector<Real> out(planes * oh * ow);
  for (std::size_t c = 0; c < planes; ++c)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        out[(c * oh + y) * ow + x] = src[(c * h + y * h / oh) * w + x * w / ow];
  return out;
}

}  // namespace m3net

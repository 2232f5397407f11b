#include <filesystem>

#include "doctest.h"
#include "m3net/image_io.hpp"

using namespace m3net;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes(const std::string& header, std::vector<std::uint8_t> payload) {
  std::vector<std::uint8_t> b(header.begin(), header.end());
  b.insert(b.end(), payload.begin(), payload.end());
  return b;
}

}  // namespace

TEST_CASE("decode a 1x1 P5 pixel") {
  const Raster r = decode_netpbm(bytes("P5\n1 1\n255\n", {255}));
  CHECK(r.width == 1);
  CHECK(r.channels == 1);
  CHECK(r.pixels[0] / 255.0 == 1.0);
}

TEST_CASE("decode a 2x2 P6 with comments") {
  const Raster r = decode_netpbm(
      bytes("P6 # rgb\n2 # width\n2\n255\n", {255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30}));
  CHECK(r.width == 2);
  CHECK(r.height == 2);
  CHECK(r.channels == 3);
  CHECK(r.pixels == std::vector<std::uint8_t>{255, 0, 0, 0, 255, 0, 0, 0, 255, 10, 20, 30});
}

TEST_CASE("malformed input names the byte offset") {
  auto expect = [](const std::vector<std::uint8_t>& b, const std::string& offset) {
    try {
      decode_netpbm(b);
      FAIL("no error");
    } catch (const ParseError& e) {
      INFO(std::string(e.what()));
      CHECK(std::string(e.what()).find("byte " + offset) != std::string::npos);
    }
  };
  expect(bytes("P7\n1 1\n255\n", {0}), "0");
  expect(bytes("P5\n2 2\n255\n", {1, 2, 3}), "11");
  expect(bytes("P5\n1 1\n65535\n", {0, 0}), "7");
  expect(bytes("P5\nx 1\n255\n", {0}), "3");
}

TEST_CASE("encode and decode round-trip exactly") {
  Raster r{3, 2, 3, {}};
  for (std::size_t i = 0; i < 18; ++i) r.pixels.push_back(static_cast<std::uint8_t>(i * 14));
  const auto enc = encode_netpbm(r);
  CHECK(decode_netpbm(enc) == r);
  CHECK(encode_netpbm(decode_netpbm(enc)) == enc);
  const fs::path dir = fs::temp_directory_path() / "m3net_test_io";
  fs::create_directories(dir);
  save_ppm(r, dir / "x.ppm");
  CHECK(load_ppm(dir / "x.ppm") == r);
  CHECK(read_file(dir / "x.ppm") == enc);
  Raster g{2, 2, 1, {0, 1, 254, 255}};
  save_pgm(g, dir / "g.pgm");
  CHECK(load_pgm(dir / "g.pgm") == g);
  CHECK_THROWS_AS(load_pgm(dir / "x.ppm"), ParseError);
  CHECK_THROWS_AS(load_pgm(dir / "missing.pgm"), DataError);
}

TEST_CASE("quantization rounds to nearest") {
  const Raster q = quantize_gray({0.0, 1.0, 0.5, 0.2 / 255.0, 0.6 / 255.0}, 1, 5);
  CHECK(q.pixels == std::vector<std::uint8_t>{0, 255, 128, 0, 1});
}

TEST_CASE("resizing") {
  const std::vector<Real> src{0, 1, 2, 3};
  CHECK(resize_nearest(src, 1, 2, 2, 4, 4) ==
        std::vector<Real>{0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3});
  CHECK(resize_bilinear(src, 1, 2, 2, 2, 2) == src);
  const auto up = resize_bilinear(src, 1, 2, 2, 4, 4);
  CHECK(up[0] == 0);
  CHECK(up[15] == 3);
}

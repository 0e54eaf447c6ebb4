// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0

#include "meshpose/png.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace meshpose::png {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("png: " + msg); }

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

uint32_t get_u32(const uint8_t* p) {
  return (uint32_t(p[0]) << 24) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 8) | uint32_t(p[3]);
}

void put_chunk(std::vector<uint8_t>& out, const char type[4], const uint8_t* data, size_t len) {
  put_u32(out, static_cast<uint32_t>(len));
  size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  if (len > 0) out.insert(out.end(), data, data + len);
  uint32_t crc = crc32(0, out.data() + start, static_cast<uInt>(4 + len));
  put_u32(out, crc);
}

const uint8_t kSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

}  // namespace

std::vector<uint8_t> encode(const Image& img) {
  if (img.channels != 1 && img.channels != 3) fail("encode: channels must be 1 or 3");
  if (img.data.size() != size_t(img.w * img.h * img.channels)) fail("encode: bad buffer size");

  std::vector<uint8_t> raw;
  raw.reserve((img.w * img.channels + 1) * img.h);
  const int64_t stride = img.w * img.channels;
  for (int64_t y = 0; y < img.h; ++y) {
    raw.push_back(0);  // filter type 0
    raw.insert(raw.end(), img.data.begin() + y * stride, img.data.begin() + (y + 1) * stride);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> z(bound);
  if (compress2(z.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    fail("deflate failed");
  z.resize(bound);

  std::vector<uint8_t> out(kSig, kSig + 8);
  uint8_t ihdr[13];
  ihdr[0] = uint8_t(img.w >> 24); ihdr[1] = uint8_t(img.w >> 16);
  ihdr[2] = uint8_t(img.w >> 8);  ihdr[3] = uint8_t(img.w);
  ihdr[4] = uint8_t(img.h >> 24); ihdr[5] = uint8_t(img.h >> 16);
  ihdr[6] = uint8_t(img.h >> 8);  ihdr[7] = uint8_t(img.h);
  ihdr[8] = 8;                               // bit depth
  ihdr[9] = img.channels == 3 ? 2 : 0;       // color type
  ihdr[10] = 0; ihdr[11] = 0; ihdr[12] = 0;  // deflate, adaptive, no interlace
  put_chunk(out, "IHDR", ihdr, 13);
  put_chunk(out, "IDAT", z.data(), z.size());
  put_chunk(out, "IEND", nullptr, 0);
  return out;
}

Image decode(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSig, 8) != 0) fail("decode: bad signature");
  Image img;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  int bit_depth = 0, color_type = 0;
  while (pos + 8 <= bytes.size()) {
    uint32_t len = get_u32(bytes.data() + pos);
    if (pos + 12 + len > bytes.size()) fail("decode: truncated chunk");
    const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
    const uint8_t* data = bytes.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) fail("decode: bad IHDR");
      img.w = get_u32(data);
      img.h = get_u32(data + 4);
      bit_depth = data[8];
      color_type = data[9];
      if (data[12] != 0) fail("decode: interlacing unsupported");
      if (bit_depth != 8 || (color_type != 0 && color_type != 2))
        fail("decode: only 8-bit gray/rgb supported");
      img.channels = color_type == 2 ? 3 : 1;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (img.w <= 0 || img.h <= 0) fail("decode: missing IHDR");

  const int64_t stride = img.w * img.channels;
  std::vector<uint8_t> raw((stride + 1) * img.h);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    fail("decode: inflate failed");

  img.data.resize(stride * img.h);
  const int bpp = static_cast<int>(img.channels);
  for (int64_t y = 0; y < img.h; ++y) {
    const uint8_t filter = raw[(stride + 1) * y];
    const uint8_t* src = raw.data() + (stride + 1) * y + 1;
    uint8_t* dst = img.data.data() + stride * y;
    const uint8_t* prev = y > 0 ? img.data.data() + stride * (y - 1) : nullptr;
    for (int64_t x = 0; x < stride; ++x) {
      const int a = x >= bpp ? dst[x - bpp] : 0;          // left
      const int b = prev != nullptr ? prev[x] : 0;        // up
      const int c = (prev != nullptr && x >= bpp) ? prev[x - bpp] : 0;  // up-left
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: {
          const int p = a + b - c;
          const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
          v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
          break;
        }
        default: fail("decode: unknown filter");
      }
      dst[x] = static_cast<uint8_t>(v & 0xff);
    }
  }
  return img;
}

void write(const std::string& path, const Image& img) {
  auto bytes = encode(img);
  std::ofstream os(path, std::ios::binary);
  if (!os.good()) fail("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (!os.good()) fail("write failed for " + path);
}

Image read(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is.good()) fail("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
  return decode(bytes);
}

}  // namespace meshpose::png

// Copyright 2026 the meshpose authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Minimal 8-bit PNG codec over zlib: RGB and grayscale, non-interlaced.
// Encoding always emits filter-0 scanlines at a fixed compression level, so
// identical pixels produce identical files; the decoder handles any of the
// five standard filters.

namespace meshpose::png {

struct Image {
  int64_t w = 0, h = 0, channels = 0;  // channels: 1 or 3
  std::vector<uint8_t> data;           // row-major, interleaved
};

std::vector<uint8_t> encode(const Image& img);
Image decode(const std::vector<uint8_t>& bytes);

void write(const std::string& path, const Image& img);
Image read(const std::string& path);

}  // namespace meshpose::png

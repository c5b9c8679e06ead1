#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace panoda::io {

struct PngImage {
  int width = 0, height = 0, channels = 0;  // channels: 1 (gray) or 3 (rgb)
  std::vector<uint8_t> pixels;              // row-major, interleaved
};

// Reads an 8-bit PNG; palette/16-bit/alpha inputs are normalized to gray or
// RGB. Throws std::runtime_error naming the path on any failure.
PngImage read_png(const std::string& path);

void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<uint8_t>& rgb);
void write_png_gray(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& gray);

}  // namespace panoda::io

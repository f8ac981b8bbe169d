#pragma once

#include <string>
#include <vector>

namespace dcqa::img {

// Minimal RGB raster with a built-in 5x7 bitmap font (ASCII 32..95;
// lowercase is rendered as uppercase).
struct Image {
  int width = 0;
  int height = 0;
  std::vector<unsigned char> rgb;

  Image(int w, int h, unsigned char r = 255, unsigned char g = 255, unsigned char b = 255);
  void set(int x, int y, unsigned char r, unsigned char g, unsigned char b);
  void fill_rect(int x, int y, int w, int h, unsigned char r, unsigned char g, unsigned char b);
  void text(int x, int y, const std::string& s, int scale, unsigned char r, unsigned char g,
            unsigned char b);
};

// 8-bit RGB PNG via zlib.
void write_png(const std::string& path, const Image& image);

}  // namespace dcqa::img

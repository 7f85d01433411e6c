#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace adenet {

/// 8-bit interleaved RGB image, rows top to bottom.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t ch) { return pixels[(y * width + x) * 3 + ch]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t ch) const { return pixels[(y * width + x) * 3 + ch]; }
  bool empty() const { return width == 0 || height == 0; }
  bool operator==(const Image&) const = default;
};

/// Decodes PNG or JPEG (chosen by signature). Gray and alpha inputs are
/// converted to RGB. Throws DataError.
Image load_image(const std::filesystem::path& path);

/// Reads only the dimensions from the file header.
std::pair<std::size_t, std::size_t> image_size(const std::filesystem::path& path);

/// Writes an 8-bit RGB PNG. Output bytes depend only on the pixels.
void save_png(const Image& image, const std::filesystem::path& path);

/// Copy of the (x, y, w, h) region. The region must lie inside the image.
Image crop(const Image& image, std::size_t x, std::size_t y, std::size_t w, std::size_t h);

/// Luma 0.299 R + 0.587 G + 0.114 B, row-major, in [0, 255].
std::vector<double> to_gray(const Image& image);

/// Bilinear resample of a single-channel plane (half-pixel centers).
std::vector<double> resize_plane(const std::vector<double>& plane, std::size_t w, std::size_t h, std::size_t out_w,
                                 std::size_t out_h);

}  // namespace adenet

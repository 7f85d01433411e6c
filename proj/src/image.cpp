#include "adenet/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "adenet/error.hpp"

namespace adenet {
namespace {

enum class Format { kPng, kJpeg };

Format sniff(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image " + path.string());
  unsigned char head[8] = {};
  in.read(reinterpret_cast<char*>(head), sizeof head);
  if (in.gcount() >= 8 && png_sig_cmp(head, 0, 8) == 0) return Format::kPng;
  if (in.gcount() >= 3 && head[0] == 0xFF && head[1] == 0xD8 && head[2] == 0xFF) return Format::kJpeg;
  throw DataError("unrecognized image format: " + path.string());
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

using FilePtr = std::unique_ptr<FILE, int (*)(FILE*)>;

FilePtr open_file(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!file) throw DataError("cannot open image " + path.string());
  return file;
}

// Decodes the header only when `header_only` is set.
Image read_jpeg(const std::filesystem::path& path, bool header_only) {
  FilePtr file = open_file(path);
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw DataError("jpeg decode failed for " + path.string() + ": " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file.get());
  jpeg_read_header(&cinfo, TRUE);
  Image img;
  img.width = cinfo.image_width;
  img.height = cinfo.image_height;
  if (header_only) {
    jpeg_destroy_decompress(&cinfo);
    return img;
  }
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  img.pixels.resize(img.width * img.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * img.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

Image read_png(const std::filesystem::path& path, bool header_only) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str()))
    throw DataError("png decode failed for " + path.string() + ": " + png.message);
  Image img;
  img.width = png.width;
  img.height = png.height;
  if (header_only) {
    png_image_free(&png);
    return img;
  }
  png.format = PNG_FORMAT_RGB;
  img.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw DataError("png decode failed for " + path.string() + ": " + png.message);
  }
  return img;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
  return sniff(path) == Format::kPng ? read_png(path, false) : read_jpeg(path, false);
}

std::pair<std::size_t, std::size_t> image_size(const std::filesystem::path& path) {
  const Image header = sniff(path) == Format::kPng ? read_png(path, true) : read_jpeg(path, true);
  return {header.width, header.height};
}

void save_png(const Image& image, const std::filesystem::path& path) {
  if (image.empty() || image.pixels.size() != image.width * image.height * 3)
    throw ArgumentError("save_png: image buffer does not match its size");
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw DataError("cannot write png " + path.string() + ": " + png.message);
}

Image crop(const Image& image, std::size_t x, std::size_t y, std::size_t w, std::size_t h) {
  if (w == 0 || h == 0 || x + w > image.width || y + h > image.height)
    throw DataError("crop region outside image");
  Image out(w, h);
  for (std::size_t r = 0; r < h; ++r) {
    const auto* src = image.pixels.data() + ((y + r) * image.width + x) * 3;
    std::copy(src, src + w * 3, out.pixels.data() + r * w * 3);
  }
  return out;
}

std::vector<double> to_gray(const Image& image) {
  std::vector<double> gray(image.width * image.height);
  for (std::size_t i = 0; i < gray.size(); ++i)
    gray[i] = 0.299 * image.pixels[3 * i] + 0.587 * image.pixels[3 * i + 1] + 0.114 * image.pixels[3 * i + 2];
  return gray;
}

std::vector<double> resize_plane(const std::vector<double>& plane, std::size_t w, std::size_t h, std::size_t out_w,
                                 std::size_t out_h) {
  if (plane.size() != w * h || w == 0 || h == 0) throw ArgumentError("resize_plane: plane does not match its size");
  std::vector<double> out(out_w * out_h);
  const double sx = static_cast<double>(w) / static_cast<double>(out_w);
  const double sy = static_cast<double>(h) / static_cast<double>(out_h);
  for (std::size_t r = 0; r < out_h; ++r) {
    const double fy = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t c = 0; c < out_w; ++c) {
      const double fx = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - static_cast<double>(x0);
      const double top = plane[y0 * w + x0] * (1 - tx) + plane[y0 * w + x1] * tx;
      const double bottom = plane[y1 * w + x0] * (1 - tx) + plane[y1 * w + x1] * tx;
      out[r * out_w + c] = top * (1 - ty) + bottom * ty;
    }
  }
  return out;
}

}  // namespace adenet

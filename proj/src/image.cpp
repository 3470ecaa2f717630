#include "pip/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include <jpeglib.h>
#include <png.h>
#include <csetjmp>

namespace pip {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw ImageError(path.string() + ": cannot open");
  return f;
}

// ---- PNG ----

struct PngReadGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadGuard() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

ImageU8 decode_png(const std::filesystem::path& path, std::FILE* f) {
  PngReadGuard g;
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw ImageError(path.string() + ": png reader allocation failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw ImageError(path.string() + ": png info allocation failed");
  if (setjmp(png_jmpbuf(g.png))) throw ImageError(path.string() + ": undecodable PNG");

  png_init_io(g.png, f);
  png_read_info(g.png, g.info);

  // Normalize every variant to 8-bit RGB.
  png_set_expand(g.png);
  png_set_strip_16(g.png);
  png_set_strip_alpha(g.png);
  png_set_palette_to_rgb(g.png);
  if (png_get_color_type(g.png, g.info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(g.png, g.info) == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(g.png);
  png_read_update_info(g.png, g.info);

  ImageU8 img;
  img.width = static_cast<int>(png_get_image_width(g.png, g.info));
  img.height = static_cast<int>(png_get_image_height(g.png, g.info));
  if (png_get_channels(g.png, g.info) != 3)
    throw ImageError(path.string() + ": PNG did not normalize to RGB");
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);

  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y)
    rows[static_cast<std::size_t>(y)] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3;
  png_read_image(g.png, rows.data());
  png_read_end(g.png, nullptr);
  return img;
}

// ---- JPEG ----

struct JpegErrorMgr {
  jpeg_error_mgr base;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  longjmp(mgr->jump, 1);
}

ImageU8 decode_jpeg(const std::filesystem::path& path, std::FILE* f) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw ImageError(path.string() + ": undecodable JPEG");
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, f);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);

  ImageU8 img;
  img.width = static_cast<int>(cinfo.output_width);
  img.height = static_cast<int>(cinfo.output_height);
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = img.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * img.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

}  // namespace

ImageU8 decode_image(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  unsigned char magic[4] = {0, 0, 0, 0};
  const std::size_t got = std::fread(magic, 1, sizeof(magic), f.get());
  std::rewind(f.get());
  if (got >= 4 && magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G')
    return decode_png(path, f.get());
  if (got >= 2 && magic[0] == 0xFF && magic[1] == 0xD8) return decode_jpeg(path, f.get());
  throw ImageError(path.string() + ": unrecognized image format");
}

void write_png(const std::filesystem::path& path, const ImageU8& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3)
    throw ImageError(path.string() + ": refusing to write malformed image buffer");
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw ImageError(path.string() + ": png writer allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw ImageError(path.string() + ": png info allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ImageError(path.string() + ": PNG write failed");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y)
    png_write_row(png, const_cast<png_bytep>(image.pixels.data() +
                                             static_cast<std::size_t>(y) * image.width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageU8 center_crop_square(const ImageU8& image) {
  const int side = std::min(image.width, image.height);
  const int x0 = (image.width - side) / 2;
  const int y0 = (image.height - side) / 2;
  if (side == image.width && side == image.height) return image;
  ImageU8 out;
  out.width = side;
  out.height = side;
  out.pixels.resize(static_cast<std::size_t>(side) * side * 3);
  for (int y = 0; y < side; ++y)
    std::memcpy(out.pixels.data() + static_cast<std::size_t>(y) * side * 3,
                image.pixels.data() + (static_cast<std::size_t>(y + y0) * image.width + x0) * 3,
                static_cast<std::size_t>(side) * 3);
  return out;
}

ImageU8 resize_bilinear(const ImageU8& image, int out_width, int out_height) {
  if (out_width <= 0 || out_height <= 0) throw ImageError("resize_bilinear: bad target size");
  if (out_width == image.width && out_height == image.height) return image;
  ImageU8 out;
  out.width = out_width;
  out.height = out_height;
  out.pixels.resize(static_cast<std::size_t>(out_width) * out_height * 3);

  const double sx = static_cast<double>(image.width) / out_width;
  const double sy = static_cast<double>(image.height) / out_height;
  for (int oy = 0; oy < out_height; ++oy) {
    const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_width; ++ox) {
      const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(y0, x0, c) * (1.0 - wx) + image.at(y0, x1, c) * wx;
        const double bot = image.at(y1, x0, c) * (1.0 - wx) + image.at(y1, x1, c) * wx;
        const double v = top * (1.0 - wy) + bot * wy;
        out.pixels[(static_cast<std::size_t>(oy) * out_width + ox) * 3 + c] =
            static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
      }
    }
  }
  return out;
}

void image_to_float(const ImageU8& image, float* dst) {
  const std::size_t plane = static_cast<std::size_t>(image.width) * image.height;
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c)
      dst[static_cast<std::size_t>(c) * plane + p] =
          static_cast<float>(image.pixels[p * 3 + c]) / 127.5f - 1.0f;
}

ImageU8 float_to_image(const float* src, int height, int width) {
  ImageU8 out;
  out.width = width;
  out.height = height;
  const std::size_t plane = static_cast<std::size_t>(width) * height;
  out.pixels.resize(plane * 3);
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c) {
      const double v = (static_cast<double>(src[static_cast<std::size_t>(c) * plane + p]) + 1.0) *
                       127.5;
      out.pixels[p * 3 + c] =
          static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
    }
  return out;
}

}  // namespace pip

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

// 8-bit RGB image plumbing: PNG/JPEG codecs, the fixed center-crop +
// bilinear resize rule, and the [-1,1] float conversion used everywhere.

namespace pip {

class ImageError : public std::runtime_error {
 public:
  explicit ImageError(const std::string& what) : std::runtime_error(what) {}
};

struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // interleaved RGB rows (HWC)

  std::uint8_t at(int y, int x, int c) const {
    return pixels[static_cast<std::size_t>((y * width + x) * 3 + c)];
  }
};

// Decodes PNG or JPEG, sniffed from content, always to 8-bit RGB.
// Errors name the offending file.
ImageU8 decode_image(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const ImageU8& image);

// Largest centered square; for even overhang the extra pixel is trimmed from
// the right/bottom (offset = floor(excess/2)).
ImageU8 center_crop_square(const ImageU8& image);

// Bilinear, half-pixel-center sampling: src = (dst + 0.5) * scale - 0.5,
// edge-clamped. Matches the common align_corners=false convention.
ImageU8 resize_bilinear(const ImageU8& image, int out_width, int out_height);

// HWC uint8 -> CHW float in [-1, 1]; dst must hold 3*H*W floats.
void image_to_float(const ImageU8& image, float* dst);

// CHW float in [-1, 1] -> HWC uint8 via (v+1)*127.5, round-half-to-even,
// clamped to [0, 255].
ImageU8 float_to_image(const float* src, int height, int width);

}  // namespace pip

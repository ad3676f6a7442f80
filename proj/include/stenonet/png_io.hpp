#pragma once

#include <string>

#include "stenonet/tensor.hpp"

namespace stenonet {

/// 16-bit grayscale; values clamped from [0,1].
void write_png_gray16(const std::string& path, const TensorF& image);
TensorF read_png_gray16(const std::string& path);

/// 8-bit grayscale holding a binary mask as 0/255.
void write_png_mask(const std::string& path, const Mask& mask);
Mask read_png_mask(const std::string& path);

/// 8-bit RGB, shape [H, W, 3]; used by overlay rendering.
void write_png_rgb(const std::string& path, const TensorT<std::uint8_t>& rgb);

}  // namespace stenonet

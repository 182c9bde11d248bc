#pragma once

#include <string>

#include "uap/tensor.hpp"

namespace uap {

// Binary PPM (P6) / PGM (P5) decode, 8-bit, into [0,1] doubles. Grayscale is
// replicated to three channels. Throws IoError on unreadable paths and
// FormatError on anything that is not a valid P5/P6 file.
ImageTensor read_image(const std::string& path);

// 8-bit binary PPM write; values are clamped to [0,1] first.
void write_image_ppm(const ImageTensor& image, const std::string& path);

ImageTensor resize_bilinear(const ImageTensor& image, int out_h, int out_w);

// Transpose of resize_bilinear: scatters an out_h x out_w gradient back to
// an in_h x in_w grid with the same interpolation weights.
ImageTensor resize_bilinear_vjp(const ImageTensor& grad_output, int in_h, int in_w);

}  // namespace uap

#pragma once

// 8-bit RGB PNG in and out.  Values map [0,1] <-> [0,255] with round half up
// on write; reads normalize by 255.  Non-RGB inputs (palette, gray, alpha)
// are expanded to RGB on load.  Failures raise IoError.

#include <string>

#include "wsr/tensor.hpp"

namespace wsr {

Tensor<float> read_png(const std::string& path);                      // [1,3,h,w]
void write_png(const std::string& path, const Tensor<float>& image);  // [1,3,h,w] or [3,h,w]

}  // namespace wsr

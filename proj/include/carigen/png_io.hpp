#pragma once

#include <string>

#include "carigen/tensor.hpp"

namespace carigen {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// 8-bit RGB PNG <-> image tensor {3,H,W} in [-1,1].
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& image);

}  // namespace carigen

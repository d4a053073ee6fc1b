#pragma once

#include <string>

#include "stsrn/vision.hpp"

namespace stsrn {

// 8-bit RGB PNG <-> Image with values in [0, 255]. Gray, palette and alpha
// inputs are converted to RGB. Failures throw IngestError naming the path.
Image read_png_rgb(const std::string& path);
void write_png_rgb(const std::string& path, const Image& rgb);

}  // namespace stsrn

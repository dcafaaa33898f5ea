#pragma once

#include <string>
#include <vector>

namespace dna {

// Binary PPM (P6). Pixels are [channels, H, W] row-major in [0, 1], clamped
// and quantized to 8 bits on write.
void write_ppm(const std::string& path, const std::vector<double>& chw, int side);
std::vector<double> read_ppm(const std::string& path, int& side);

}  // namespace dna

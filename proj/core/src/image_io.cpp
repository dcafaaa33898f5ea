#include "dna/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dna/check.hpp"

namespace dna {

void write_ppm(const std::string& path, const std::vector<double>& chw, int side) {
    DNA_CHECK(static_cast<int>(chw.size()) == 3 * side * side,
              "write_ppm: expected 3*" << side << "*" << side << " values, got " << chw.size());
    std::ofstream os(path, std::ios::binary);
    DNA_CHECK(os.good(), "write_ppm: cannot open '" << path << "'");
    os << "P6\n" << side << " " << side << "\n255\n";
    const size_t plane = static_cast<size_t>(side) * side;
    for (size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(chw[static_cast<size_t>(c) * plane + p], 0.0, 1.0);
            os.put(static_cast<char>(std::lround(v * 255.0)));
        }
    }
    DNA_CHECK(os.good(), "write_ppm: write to '" << path << "' failed");
}

std::vector<double> read_ppm(const std::string& path, int& side) {
    std::ifstream is(path, std::ios::binary);
    DNA_CHECK(is.good(), "read_ppm: cannot open '" << path << "'");
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    is >> magic >> w >> h >> maxval;
    DNA_CHECK(magic == "P6" && w == h && maxval == 255,
              "read_ppm: '" << path << "' is not a square 8-bit P6 file");
    is.get();  // single whitespace after header
    side = w;
    const size_t plane = static_cast<size_t>(side) * side;
    std::vector<double> chw(3 * plane);
    for (size_t p = 0; p < plane; ++p) {
        for (int c = 0; c < 3; ++c) {
            const int byte = is.get();
            DNA_CHECK(byte >= 0, "read_ppm: truncated pixel data in '" << path << "'");
            chw[static_cast<size_t>(c) * plane + p] = static_cast<double>(byte) / 255.0;
        }
    }
    return chw;
}

}  // namespace dna

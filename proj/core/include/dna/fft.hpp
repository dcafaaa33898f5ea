#pragma once

#include <complex>
#include <vector>

#include "dna/check.hpp"

namespace dna {

inline bool is_power_of_two(int n) {
    return n > 0 && (n & (n - 1)) == 0;
}

// Iterative radix-2 Cooley-Tukey. inverse=true conjugates the twiddles and
// scales by 1/n.
template <typename S>
void fft_inplace(std::complex<S>* a, int n, bool inverse) {
    DNA_CHECK(is_power_of_two(n), "fft: length must be a power of two, got " << n);
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const S pi = static_cast<S>(3.141592653589793238462643383279502884L);
    for (int len = 2; len <= n; len <<= 1) {
        const S ang = (inverse ? S(2) : S(-2)) * pi / static_cast<S>(len);
        const std::complex<S> wl(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            std::complex<S> w(1);
            for (int j = 0; j < len / 2; ++j) {
                const std::complex<S> u = a[i + j];
                const std::complex<S> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse) {
        const S inv_n = S(1) / static_cast<S>(n);
        for (int i = 0; i < n; ++i) a[i] *= inv_n;
    }
}

// In-place 2-D transform of an n x n row-major grid: rows first, then columns.
template <typename S>
void fft2_inplace(std::vector<std::complex<S>>& grid, int n, bool inverse) {
    DNA_CHECK(static_cast<int>(grid.size()) == n * n,
              "fft2: grid size " << grid.size() << " does not match side " << n);
    for (int r = 0; r < n; ++r) {
        fft_inplace(grid.data() + static_cast<size_t>(r) * n, n, inverse);
    }
    std::vector<std::complex<S>> col(n);
    for (int c = 0; c < n; ++c) {
        for (int r = 0; r < n; ++r) col[r] = grid[static_cast<size_t>(r) * n + c];
        fft_inplace(col.data(), n, inverse);
        for (int r = 0; r < n; ++r) grid[static_cast<size_t>(r) * n + c] = col[r];
    }
}

}  // namespace dna

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <vector>

#include "dna/tensor.hpp"

namespace dna {

// Checkpoint container: a JSON manifest (name, shape, dtype, offset per
// tensor) followed by one flat little-endian scalar blob, guarded by an
// FNV-1a 64 checksum. Byte layout is documented in docs/formats.md so any
// language can read it.

enum class Dtype { F32, F64 };

inline const char* dtype_name(Dtype d) { return d == Dtype::F32 ? "f32" : "f64"; }
inline size_t dtype_size(Dtype d) { return d == Dtype::F32 ? 4 : 8; }
Dtype dtype_from_name(const std::string& name);

struct CheckpointEntry {
    std::string name;
    std::vector<int> shape;
    Dtype dtype = Dtype::F32;
    std::vector<unsigned char> bytes;
};

struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::vector<CheckpointEntry> entries;

    const CheckpointEntry* find(const std::string& name) const {
        for (const auto& e : entries) {
            if (e.name == name) return &e;
        }
        return nullptr;
    }
};

uint64_t fnv1a64(const unsigned char* data, size_t n);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

template <typename S>
constexpr Dtype dtype_of() {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint blobs are little-endian");
    return sizeof(S) == 4 ? Dtype::F32 : Dtype::F64;
}

template <typename S>
CheckpointEntry make_entry(std::string name, const Tensor<S>& t) {
    CheckpointEntry e;
    e.name = std::move(name);
    e.shape = t.shape();
    e.dtype = dtype_of<S>();
    e.bytes.resize(t.value().size() * sizeof(S));
    std::memcpy(e.bytes.data(), t.value().data(), e.bytes.size());
    return e;
}

// Reads an entry into a tensor of scalar type S, converting between f32 and
// f64 when the stored dtype differs.
template <typename S>
Tensor<S> entry_tensor(const CheckpointEntry& e) {
    const size_t n = e.bytes.size() / dtype_size(e.dtype);
    std::vector<S> values(n);
    if (e.dtype == dtype_of<S>()) {
        std::memcpy(values.data(), e.bytes.data(), e.bytes.size());
    } else if (e.dtype == Dtype::F32) {
        const float* src = reinterpret_cast<const float*>(e.bytes.data());
        for (size_t i = 0; i < n; ++i) values[i] = static_cast<S>(src[i]);
    } else {
        const double* src = reinterpret_cast<const double*>(e.bytes.data());
        for (size_t i = 0; i < n; ++i) values[i] = static_cast<S>(src[i]);
    }
    return Tensor<S>::from(e.shape, std::move(values));
}

}  // namespace dna

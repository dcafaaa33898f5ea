#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dna/model.hpp"
#include "dna/rng.hpp"

namespace dna {

// Desk-scale data: deterministic generators plus a char-level text loader.
// Vision examples are stored whole; language data is a token stream sampled
// as sliding windows of context+1 ids.
struct Dataset {
    TaskKind task = TaskKind::VisionClassify;
    int n_classes = 0;
    std::vector<Example> vision;

    int context = 0;
    int vocab = 0;
    std::vector<int> stream;

    size_t size() const {
        if (task == TaskKind::VisionClassify) return vision.size();
        return stream.size() > static_cast<size_t>(context) ? stream.size() - context : 0;
    }

    Example get(size_t i) const;
};

struct ShapeGenOptions {
    int image_size = 32;
    int n_classes = 4;    // square, circle, triangle, cross
    int jitter_px = 4;    // center offset; 0 makes the task linearly separable
    double noise = 0.1;   // background texture amplitude
    int radius_min = 0;   // 0 picks the defaults (size/5 .. size/5 + size/8)
    int radius_max = 0;
};

// Colored shapes on textured backgrounds, labeled by shape. Shape color is
// random and carries no label information.
Dataset make_shapes_dataset(int n, uint64_t seed, const ShapeGenOptions& opts = {});

// Token stream cycling through `period` distinct symbols (a seeded permutation
// of the vocabulary). The next symbol is a deterministic function of the
// current one, so the source entropy is zero.
Dataset make_periodic_dataset(int stream_length, int context, int period, int vocab,
                              uint64_t seed);

// Char-level LM data: bytes of the file become the vocabulary (capped at 128
// distinct symbols).
Dataset load_text_dataset(const std::string& path, int context);
Dataset text_dataset_from_string(const std::string& text, int context);

Batch sample_batch(const Dataset& data, int batch_size, Rng& rng);

}  // namespace dna

#include "dna/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "dna/check.hpp"

namespace dna {

Example Dataset::get(size_t i) const {
    DNA_CHECK(i < size(), "dataset: index " << i << " out of range [0, " << size() << ")");
    if (task == TaskKind::VisionClassify) return vision[i];
    Example ex;
    ex.tokens.assign(stream.begin() + static_cast<std::ptrdiff_t>(i),
                     stream.begin() + static_cast<std::ptrdiff_t>(i + context + 1));
    return ex;
}

namespace {

enum class Shape4 { Square, Circle, Triangle, Cross };

bool inside_shape(Shape4 s, int y, int x, int cy, int cx, int radius) {
    const int dy = y - cy, dx = x - cx;
    switch (s) {
        case Shape4::Square:
            return std::abs(dy) <= radius && std::abs(dx) <= radius;
        case Shape4::Circle:
            return dy * dy + dx * dx <= radius * radius;
        case Shape4::Triangle:
            // downward-pointing filled triangle
            return dy >= -radius && dy <= radius && std::abs(dx) <= (radius - dy) / 2 + 1;
        case Shape4::Cross:
            return (std::abs(dy) <= radius / 3 && std::abs(dx) <= radius) ||
                   (std::abs(dx) <= radius / 3 && std::abs(dy) <= radius);
    }
    return false;
}

}  // namespace

Dataset make_shapes_dataset(int n, uint64_t seed, const ShapeGenOptions& opts) {
    DNA_CHECK(opts.n_classes >= 2 && opts.n_classes <= 4,
              "shapes dataset: supports 2..4 classes, got " << opts.n_classes);
    Dataset data;
    data.task = TaskKind::VisionClassify;
    data.n_classes = opts.n_classes;
    Rng rng(seed);
    const int side = opts.image_size;
    const double palette[4][3] = {
        {0.95, 0.20, 0.15}, {0.15, 0.85, 0.25}, {0.20, 0.35, 0.95}, {0.95, 0.85, 0.10}};
    for (int i = 0; i < n; ++i) {
        Example ex;
        ex.label = rng.uniform_int(opts.n_classes);
        ex.pixels.assign(static_cast<size_t>(3) * side * side, 0.0);
        const double base = rng.uniform(0.2, 0.45);
        for (int c = 0; c < 3; ++c) {
            for (int p = 0; p < side * side; ++p) {
                ex.pixels[static_cast<size_t>(c) * side * side + p] =
                    base + rng.uniform(-opts.noise, opts.noise);
            }
        }
        const int cy = side / 2 + (opts.jitter_px > 0 ? rng.uniform_int(2 * opts.jitter_px + 1) -
                                                            opts.jitter_px
                                                      : 0);
        const int cx = side / 2 + (opts.jitter_px > 0 ? rng.uniform_int(2 * opts.jitter_px + 1) -
                                                            opts.jitter_px
                                                      : 0);
        const int r_lo = opts.radius_min > 0 ? opts.radius_min : side / 5;
        const int r_hi = opts.radius_max >= r_lo ? opts.radius_max : side / 5 + side / 8;
        const int radius = r_lo + (r_hi > r_lo ? rng.uniform_int(r_hi - r_lo + 1) : 0);
        const int color = rng.uniform_int(4);
        for (int y = 0; y < side; ++y) {
            for (int x = 0; x < side; ++x) {
                if (!inside_shape(static_cast<Shape4>(ex.label), y, x, cy, cx, radius)) continue;
                for (int c = 0; c < 3; ++c) {
                    ex.pixels[(static_cast<size_t>(c) * side + y) * side + x] = palette[color][c];
                }
            }
        }
        for (auto& v : ex.pixels) v = std::clamp(v, 0.0, 1.0);
        data.vision.push_back(std::move(ex));
    }
    return data;
}

Dataset make_periodic_dataset(int stream_length, int context, int period, int vocab,
                              uint64_t seed) {
    DNA_CHECK(period >= 2 && period <= vocab,
              "periodic dataset: period " << period << " must be in [2, vocab=" << vocab << "]");
    DNA_CHECK(stream_length > context, "periodic dataset: stream shorter than context");
    Dataset data;
    data.task = TaskKind::CausalLm;
    data.context = context;
    data.vocab = vocab;
    std::vector<int> symbols(static_cast<size_t>(vocab));
    std::iota(symbols.begin(), symbols.end(), 0);
    Rng rng(seed);
    for (int i = vocab - 1; i > 0; --i) {
        std::swap(symbols[static_cast<size_t>(i)], symbols[static_cast<size_t>(rng.uniform_int(i + 1))]);
    }
    data.stream.resize(static_cast<size_t>(stream_length));
    for (int i = 0; i < stream_length; ++i) {
        data.stream[static_cast<size_t>(i)] = symbols[static_cast<size_t>(i % period)];
    }
    return data;
}

Dataset text_dataset_from_string(const std::string& text, int context) {
    DNA_CHECK(static_cast<int>(text.size()) > context + 1,
              "text dataset: corpus of " << text.size() << " chars too small for context "
                                         << context);
    std::map<unsigned char, int> vocab_map;
    for (const char ch : text) vocab_map.emplace(static_cast<unsigned char>(ch), 0);
    DNA_CHECK(vocab_map.size() <= 128,
              "text dataset: " << vocab_map.size() << " distinct chars exceed the 128-symbol cap");
    int next_id = 0;
    for (auto& [ch, id] : vocab_map) id = next_id++;
    Dataset data;
    data.task = TaskKind::CausalLm;
    data.context = context;
    data.vocab = next_id;
    data.stream.reserve(text.size());
    for (const char ch : text) {
        data.stream.push_back(vocab_map[static_cast<unsigned char>(ch)]);
    }
    return data;
}

Dataset load_text_dataset(const std::string& path, int context) {
    std::ifstream is(path, std::ios::binary);
    DNA_CHECK(is.good(), "text dataset: cannot open '" << path << "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return text_dataset_from_string(text, context);
}

Batch sample_batch(const Dataset& data, int batch_size, Rng& rng) {
    DNA_CHECK(data.size() > 0, "sample_batch: dataset is empty");
    Batch batch;
    batch.reserve(static_cast<size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        batch.push_back(data.get(static_cast<size_t>(rng.uniform_int(static_cast<int>(data.size())))));
    }
    return batch;
}

}  // namespace dna

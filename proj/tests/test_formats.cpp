#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dna/checkpoint.hpp"
#include "dna/config.hpp"
#include "dna/image_io.hpp"
#include "dna/serialize.hpp"
#include "dna/trace.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using dna::Checkpoint;
using dna::IniDoc;
using dna::SequenceTrace;
using dna::Shape;
using dna::Tensor;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "dna_format_tests";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("checkpoint round-trips tensors, meta and dtypes") {
    Checkpoint ckpt;
    ckpt.meta["note"] = "roundtrip";
    auto a = Tensor<float>::from({2, 3}, {1.5f, -2.25f, 0.f, 4.f, 5.f, -6.5f});
    auto b = Tensor<double>::from({4}, {0.1, 0.2, 0.3, 0.4});
    ckpt.entries.push_back(dna::make_entry("a", a));
    ckpt.entries.push_back(dna::make_entry("b", b));

    const auto path = (temp_dir() / "roundtrip.dnackpt").string();
    dna::save_checkpoint(path, ckpt);
    auto loaded = dna::load_checkpoint(path);
    CHECK(loaded.meta.at("note") == "roundtrip");
    CHECK(loaded.meta.size() == 1);
    auto a2 = dna::entry_tensor<float>(*loaded.find("a"));
    CHECK(a2.value() == a.value());
    CHECK(a2.shape() == a.shape());
    auto b2 = dna::entry_tensor<double>(*loaded.find("b"));
    CHECK(b2.value() == b.value());
    // widening read of an f32 entry
    auto a_wide = dna::entry_tensor<double>(*loaded.find("a"));
    CHECK(a_wide.value()[1] == doctest::Approx(-2.25));
}

TEST_CASE("corrupted checkpoint fails with a checksum diagnostic") {
    Checkpoint ckpt;
    auto a = Tensor<float>::from({8}, {1, 2, 3, 4, 5, 6, 7, 8});
    ckpt.entries.push_back(dna::make_entry("w", a));
    const auto path = (temp_dir() / "corrupt.dnackpt").string();
    dna::save_checkpoint(path, ckpt);

    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-3, std::ios::end);
    f.put('\x7f');
    f.close();

    try {
        dna::load_checkpoint(path);
        FAIL("expected a checksum failure");
    } catch (const dna::Error& e) {
        CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }
}

TEST_CASE("model state round-trips through a checkpoint file") {
    dna::DnaConfig cfg;
    cfg.task = dna::TaskKind::CausalLm;
    cfg.d_embed = 8;
    cfg.d_mlp = 16;
    cfg.n_head = 2;
    cfg.n_backbone = 1;
    cfg.s_max = 3;
    cfg.top_k = 1;
    cfg.module_kinds = dna::make_pool(1, 0, 1, 1);
    cfg.vocab_size = 11;
    cfg.context = 6;
    cfg.skip_target_r = 0.2;
    cfg.skip_update_u = 0.001;
    dna::DnaModel<float> model(cfg, 7);
    model.bias_controller().set_bias(0, {0, 0, 0.25});
    const auto path = (temp_dir() / "model.dnackpt").string();
    dna::save_checkpoint(path, dna::model_checkpoint(model, {{"step", "12"}}));

    auto loaded = dna::load_checkpoint(path);
    CHECK(loaded.meta.at("step") == "12");
    auto restored = dna::model_from_checkpoint<float>(loaded, 99);
    auto pa = model.named_parameters();
    auto pb = restored.named_parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].tensor->value() == pb[i].tensor->value());
    }
    CHECK(restored.bias_controller().bias(0)[2] == 0.25);
    CHECK(restored.config().skip_target_r == cfg.skip_target_r);
}

TEST_CASE("trace JSONL round-trip") {
    SequenceTrace t;
    t.seq_id = 3;
    t.tokens = 2;
    t.k = 2;
    t.n_modules = 4;
    t.ribbons = {{{0, 2}, {1, 3}}, {{2, 3}, {0, 1}}};
    t.probs = {{{0.5, 0.25}, {0.5, 0.5}}, {{0.1, 0.9}, {0.4, 0.6}}};
    t.bias = {{0, 0, 0, 0.1}, {0, 0, 0, 0.1}};
    t.compute = {3, 2};
    t.identity = {3};
    t.module_params = {100, 100, 100, 0};

    std::ostringstream os;
    dna::write_trace_jsonl(os, {t, t});
    std::istringstream is(os.str());
    auto back = dna::read_trace_jsonl(is);
    REQUIRE(back.size() == 2);
    CHECK(back[0].ribbons == t.ribbons);
    CHECK(back[0].probs == t.probs);
    CHECK(back[0].bias == t.bias);
    CHECK(back[0].compute == t.compute);
    CHECK(back[0].identity == t.identity);
    CHECK(back[1].seq_id == 3);
}

TEST_CASE("malformed trace line reports its line number") {
    std::istringstream is("{\"seq_id\":0}\nnot json\n");
    try {
        dna::read_trace_jsonl(is);
        FAIL("expected a parse failure");
    } catch (const dna::Error& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
}

TEST_CASE("ini parse, serialize, override") {
    const std::string text =
        "# comment\n[model]\ntask = causal-lm\nd_embed = 24\n\n[trainer]\nsteps = 5\n";
    auto doc = IniDoc::parse(text);
    CHECK(doc.get("model", "task") == "causal-lm");
    CHECK(doc.get("model", "d_embed") == "24");
    CHECK(doc.get("trainer", "steps") == "5");
    CHECK(doc.get("trainer", "missing", "fallback") == "fallback");
    doc.apply_override("model.top_k=2");
    CHECK(doc.get("model", "top_k") == "2");
    auto round = IniDoc::parse(doc.serialize());
    CHECK(round.get("model", "task") == "causal-lm");
    CHECK(round.get("model", "top_k") == "2");
    CHECK_THROWS_AS(doc.apply_override("nodotshere"), dna::Error);
}

TEST_CASE("unknown config fields are named in the error") {
    auto doc = IniDoc::parse("[model]\ntask = causal-lm\nbanana = 3\n");
    try {
        dna::model_from_ini(doc);
        FAIL("expected an unknown-field error");
    } catch (const dna::Error& e) {
        CHECK(std::string(e.what()).find("model.banana") != std::string::npos);
    }
}

TEST_CASE("model config text round-trips") {
    dna::DnaConfig cfg;
    cfg.task = dna::TaskKind::VisionClassify;
    cfg.module_kinds = dna::make_pool(2, 1, 1, 2);
    cfg.top_k = 2;
    cfg.s_max = 6;
    auto text = dna::model_config_text(cfg);
    auto back = dna::model_from_config_text(text);
    CHECK(back.task == cfg.task);
    CHECK(back.module_kinds == cfg.module_kinds);
    CHECK(back.top_k == 2);
    CHECK(back.s_max == 6);
    CHECK(dna::parse_module_kinds("transformer:2,attention:1,mlp:1,identity:2") ==
          cfg.module_kinds);
}

TEST_CASE("ppm write/read round-trip at 8-bit precision") {
    const int side = 4;
    std::vector<double> img(3 * side * side);
    for (size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i) / img.size();
    const auto path = (temp_dir() / "img.ppm").string();
    dna::write_ppm(path, img, side);
    int got_side = 0;
    auto back = dna::read_ppm(path, got_side);
    CHECK(got_side == side);
    for (size_t i = 0; i < img.size(); ++i) {
        CHECK(std::fabs(back[i] - img[i]) <= 0.5 / 255.0 + 1e-9);
    }
}

TEST_CASE("fnv1a64 known value") {
    // FNV-1a of "hello" per the reference parameters
    const unsigned char hello[] = {'h', 'e', 'l', 'l', 'o'};
    CHECK(dna::fnv1a64(hello, 5) == 0xa430d84680aabd0bULL);
}

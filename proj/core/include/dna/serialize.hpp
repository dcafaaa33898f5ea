#pragma once

#include <map>
#include <string>

#include "dna/checkpoint.hpp"
#include "dna/config.hpp"
#include "dna/model.hpp"

namespace dna {

template <typename S>
Checkpoint model_checkpoint(DnaModel<S>& model,
                            std::map<std::string, std::string> extra_meta = {}) {
    Checkpoint ckpt;
    ckpt.meta = std::move(extra_meta);
    ckpt.meta["format"] = "dna-model";
    ckpt.meta["config"] = model_config_text(model.config());
    for (auto& p : model.named_parameters()) {
        ckpt.entries.push_back(make_entry(p.name, *p.tensor));
    }
    const int n_routed = model.config().n_routed();
    const int n_modules = model.config().n_modules();
    Tensor<double> biases(Shape{n_routed, n_modules});
    for (int s = 0; s < n_routed; ++s) {
        const auto& b = model.bias_controller().bias(s);
        for (int m = 0; m < n_modules; ++m) {
            biases.value()[static_cast<size_t>(s) * n_modules + m] = b[static_cast<size_t>(m)];
        }
    }
    ckpt.entries.push_back(make_entry("bias.values", biases));
    return ckpt;
}

template <typename S>
void load_model_state(DnaModel<S>& model, const Checkpoint& ckpt) {
    for (auto& p : model.named_parameters()) {
        const CheckpointEntry* e = ckpt.find(p.name);
        DNA_CHECK(e != nullptr, "checkpoint: tensor '" << p.name << "' missing");
        Tensor<S> t = entry_tensor<S>(*e);
        DNA_CHECK(t.shape() == p.tensor->shape(),
                  "checkpoint: tensor '" << p.name << "' has shape " << shape_str(t.shape())
                                         << ", model wants " << shape_str(p.tensor->shape()));
        p.tensor->value() = t.value();
    }
    if (const CheckpointEntry* e = ckpt.find("bias.values")) {
        const Tensor<double> b = entry_tensor<double>(*e);
        const int n_modules = model.config().n_modules();
        DNA_CHECK(b.shape() == (Shape{model.config().n_routed(), n_modules}),
                  "checkpoint: bias.values shape " << shape_str(b.shape()) << " does not match");
        for (int s = 0; s < model.config().n_routed(); ++s) {
            std::vector<double> row(b.value().begin() + static_cast<size_t>(s) * n_modules,
                                    b.value().begin() + static_cast<size_t>(s + 1) * n_modules);
            model.bias_controller().set_bias(s, row);
        }
    }
}

template <typename S>
DnaModel<S> model_from_checkpoint(const Checkpoint& ckpt, uint64_t seed = 0) {
    DNA_CHECK(ckpt.meta.count("config"), "checkpoint: manifest is missing the model config");
    const DnaConfig cfg = model_from_config_text(ckpt.meta.at("config"));
    DnaModel<S> model(cfg, seed);
    load_model_state(model, ckpt);
    return model;
}

}  // namespace dna

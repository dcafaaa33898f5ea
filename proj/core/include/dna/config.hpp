#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dna/analytics.hpp"
#include "dna/data.hpp"
#include "dna/model.hpp"
#include "dna/trainer.hpp"

namespace dna {

// Flat structured text: [section] headers, key = value lines, '#' comments.
// Sections mirror the module names; dotted command-line overrides
// ("model.top_k=2") win over file values.
struct IniDoc {
    using Section = std::vector<std::pair<std::string, std::string>>;
    std::vector<std::pair<std::string, Section>> sections;

    static IniDoc parse(const std::string& text);
    static IniDoc parse_file(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback = "") const;
    void set(const std::string& section, const std::string& key, const std::string& value);
    void apply_override(const std::string& dotted_assignment);  // "section.key=value"
    std::string serialize() const;
};

// Dreaming run parameters: optimization plus the regularization pipeline.
struct DreamRunConfig {
    int steps = 2048;
    double lr = 0.001;
    double tv_coeff = 0.01;
    int jitter_px = 6;
    double rotation_deg = 10.0;
    double scale_pct = 10.0;
    double noise_start = 1.0;  // per-pixel noise variance, decays linearly to 0
    bool transforms = true;    // jitter / rotation / scale
    bool color_shift = true;
    int objective_steps = -1;          // S horizon in routed steps; -1 = all
    std::vector<int> token_subset;     // empty = all tokens
    std::vector<int> context_patches;  // patches clamped to the reference image
    bool use_logits = false;
    double init_scale = 0.01;
    int reference_index = 0;  // dataset example the frozen selections come from
};

struct DataConfig {
    std::string kind = "shapes";  // shapes | periodic | text
    int n_examples = 512;
    int jitter_px = 4;
    double noise = 0.1;
    std::string path;
    int stream_length = 8192;
    int period = 64;
    int vocab = 64;
};

DnaConfig model_from_ini(const IniDoc& doc);
Schedule schedule_from_ini(const IniDoc& doc);
TrainerConfig trainer_from_ini(const IniDoc& doc);
DataConfig data_from_ini(const IniDoc& doc);
AnalyticsConfig analytics_from_ini(const IniDoc& doc);
DreamRunConfig dream_from_ini(const IniDoc& doc);

void model_to_ini(const DnaConfig& cfg, IniDoc& doc);
std::string model_config_text(const DnaConfig& cfg);
DnaConfig model_from_config_text(const std::string& text);

Dataset dataset_from_config(const DataConfig& dc, const DnaConfig& mc, uint64_t seed);

// "transformer:4,attention:2,identity:2" -> expanded kind list, in order.
std::vector<ModuleKind> parse_module_kinds(const std::string& text);
std::string module_kinds_text(const std::vector<ModuleKind>& kinds);

}  // namespace dna

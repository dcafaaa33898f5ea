#include "dna/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace dna {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string& section, const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int out = std::stoi(v, &pos);
        DNA_CHECK(pos == v.size(), "config: field " << section << "." << key
                                                    << " is not an integer: '" << v << "'");
        return out;
    } catch (const std::exception&) {
        DNA_CHECK(false, "config: field " << section << "." << key << " is not an integer: '" << v
                                          << "'");
    }
    return 0;
}

double to_double(const std::string& section, const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        DNA_CHECK(pos == v.size(), "config: field " << section << "." << key
                                                    << " is not a number: '" << v << "'");
        return out;
    } catch (const std::exception&) {
        DNA_CHECK(false, "config: field " << section << "." << key << " is not a number: '" << v
                                          << "'");
    }
    return 0.0;
}

bool to_bool(const std::string& section, const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    DNA_CHECK(false, "config: field " << section << "." << key << " is not a boolean: '" << v
                                      << "'");
    return false;
}

std::vector<int> to_int_list(const std::string& section, const std::string& key,
                             const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(to_int(section, key, item));
    }
    return out;
}

// Strict reader: every key consumed must be declared, leftovers are errors.
class SectionReader {
public:
    SectionReader(const IniDoc& doc, std::string section) : doc_(doc), section_(std::move(section)) {}

    ~SectionReader() = default;

    std::string str(const std::string& key, const std::string& fallback) {
        seen_.insert(key);
        return doc_.get(section_, key, fallback);
    }
    int integer(const std::string& key, int fallback) {
        seen_.insert(key);
        if (!doc_.has(section_, key)) return fallback;
        return to_int(section_, key, doc_.get(section_, key));
    }
    double number(const std::string& key, double fallback) {
        seen_.insert(key);
        if (!doc_.has(section_, key)) return fallback;
        return to_double(section_, key, doc_.get(section_, key));
    }
    bool boolean(const std::string& key, bool fallback) {
        seen_.insert(key);
        if (!doc_.has(section_, key)) return fallback;
        return to_bool(section_, key, doc_.get(section_, key));
    }
    std::vector<int> int_list(const std::string& key) {
        seen_.insert(key);
        if (!doc_.has(section_, key)) return {};
        return to_int_list(section_, key, doc_.get(section_, key));
    }

    void finish() const {
        for (const auto& [name, section] : doc_.sections) {
            if (name != section_) continue;
            for (const auto& [key, value] : section) {
                DNA_CHECK(seen_.count(key), "config: unknown field " << section_ << "." << key);
            }
        }
    }

private:
    const IniDoc& doc_;
    std::string section_;
    std::set<std::string> seen_;
};

}  // namespace

IniDoc IniDoc::parse(const std::string& text) {
    IniDoc doc;
    std::stringstream ss(text);
    std::string line;
    std::string current;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            DNA_CHECK(t.back() == ']', "config: malformed section header at line " << line_no
                                                                                   << ": " << t);
            current = trim(t.substr(1, t.size() - 2));
            DNA_CHECK(!current.empty(), "config: empty section name at line " << line_no);
            doc.sections.emplace_back(current, Section{});
            continue;
        }
        const size_t eq = t.find('=');
        DNA_CHECK(eq != std::string::npos, "config: expected key = value at line " << line_no
                                                                                   << ": " << t);
        DNA_CHECK(!current.empty(), "config: key outside any section at line " << line_no);
        doc.sections.back().second.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return doc;
}

IniDoc IniDoc::parse_file(const std::string& path) {
    std::ifstream is(path);
    DNA_CHECK(is.good(), "config: cannot open '" << path << "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse(text);
}

bool IniDoc::has(const std::string& section, const std::string& key) const {
    for (const auto& [name, sec] : sections) {
        if (name != section) continue;
        for (const auto& [k, v] : sec) {
            if (k == key) return true;
        }
    }
    return false;
}

std::string IniDoc::get(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
    std::string out = fallback;
    for (const auto& [name, sec] : sections) {
        if (name != section) continue;
        for (const auto& [k, v] : sec) {
            if (k == key) out = v;  // last occurrence wins
        }
    }
    return out;
}

void IniDoc::set(const std::string& section, const std::string& key, const std::string& value) {
    for (auto& [name, sec] : sections) {
        if (name != section) continue;
        for (auto& [k, v] : sec) {
            if (k == key) {
                v = value;
                return;
            }
        }
        sec.emplace_back(key, value);
        return;
    }
    sections.emplace_back(section, Section{{key, value}});
}

void IniDoc::apply_override(const std::string& dotted_assignment) {
    const size_t eq = dotted_assignment.find('=');
    DNA_CHECK(eq != std::string::npos,
              "override '" << dotted_assignment << "' is not of the form section.key=value");
    const std::string path = trim(dotted_assignment.substr(0, eq));
    const std::string value = trim(dotted_assignment.substr(eq + 1));
    const size_t dot = path.find('.');
    DNA_CHECK(dot != std::string::npos && dot > 0 && dot + 1 < path.size(),
              "override '" << dotted_assignment << "' is not of the form section.key=value");
    set(path.substr(0, dot), path.substr(dot + 1), value);
}

std::string IniDoc::serialize() const {
    std::ostringstream os;
    for (const auto& [name, sec] : sections) {
        os << "[" << name << "]\n";
        for (const auto& [k, v] : sec) os << k << " = " << v << "\n";
        os << "\n";
    }
    return os.str();
}

std::vector<ModuleKind> parse_module_kinds(const std::string& text) {
    std::vector<ModuleKind> kinds;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const size_t colon = item.find(':');
        std::string name = item;
        int count = 1;
        if (colon != std::string::npos) {
            name = trim(item.substr(0, colon));
            count = to_int("model", "modules", trim(item.substr(colon + 1)));
            DNA_CHECK(count >= 0, "config: negative module count in '" << item << "'");
        }
        const ModuleKind kind = module_kind_from_name(name);
        kinds.insert(kinds.end(), static_cast<size_t>(count), kind);
    }
    DNA_CHECK(!kinds.empty(), "config: modules list is empty");
    return kinds;
}

std::string module_kinds_text(const std::vector<ModuleKind>& kinds) {
    std::string out;
    size_t i = 0;
    while (i < kinds.size()) {
        size_t j = i;
        while (j < kinds.size() && kinds[j] == kinds[i]) ++j;
        if (!out.empty()) out += ",";
        out += std::string(module_kind_name(kinds[i])) + ":" + std::to_string(j - i);
        i = j;
    }
    return out;
}

DnaConfig model_from_ini(const IniDoc& doc) {
    SectionReader r(doc, "model");
    DnaConfig cfg;
    cfg.task = task_from_name(r.str("task", "vision-classify"));
    cfg.d_embed = r.integer("d_embed", cfg.d_embed);
    cfg.d_mlp = r.integer("d_mlp", cfg.d_mlp);
    cfg.n_head = r.integer("n_head", cfg.n_head);
    cfg.n_backbone = r.integer("n_backbone", cfg.n_backbone);
    cfg.s_max = r.integer("s_max", cfg.s_max);
    cfg.top_k = r.integer("top_k", cfg.top_k);
    cfg.module_kinds = parse_module_kinds(r.str("modules", "transformer:4,identity:2"));
    cfg.image_size = r.integer("image_size", cfg.image_size);
    cfg.patch_size = r.integer("patch_size", cfg.patch_size);
    cfg.n_classes = r.integer("n_classes", cfg.n_classes);
    cfg.vocab_size = r.integer("vocab_size", cfg.vocab_size);
    cfg.context = r.integer("context", cfg.context);
    cfg.skip_target_r = r.number("skip_target", cfg.skip_target_r);
    cfg.skip_update_u = r.number("skip_speed", cfg.skip_update_u);
    r.finish();
    cfg.validate();
    return cfg;
}

void model_to_ini(const DnaConfig& cfg, IniDoc& doc) {
    doc.set("model", "task", task_name(cfg.task));
    doc.set("model", "d_embed", std::to_string(cfg.d_embed));
    doc.set("model", "d_mlp", std::to_string(cfg.d_mlp));
    doc.set("model", "n_head", std::to_string(cfg.n_head));
    doc.set("model", "n_backbone", std::to_string(cfg.n_backbone));
    doc.set("model", "s_max", std::to_string(cfg.s_max));
    doc.set("model", "top_k", std::to_string(cfg.top_k));
    doc.set("model", "modules", module_kinds_text(cfg.module_kinds));
    if (cfg.task == TaskKind::VisionClassify) {
        doc.set("model", "image_size", std::to_string(cfg.image_size));
        doc.set("model", "patch_size", std::to_string(cfg.patch_size));
        doc.set("model", "n_classes", std::to_string(cfg.n_classes));
    } else {
        doc.set("model", "vocab_size", std::to_string(cfg.vocab_size));
        doc.set("model", "context", std::to_string(cfg.context));
    }
    std::ostringstream r, u;
    r << cfg.skip_target_r;
    u << cfg.skip_update_u;
    doc.set("model", "skip_target", r.str());
    doc.set("model", "skip_speed", u.str());
}

std::string model_config_text(const DnaConfig& cfg) {
    IniDoc doc;
    model_to_ini(cfg, doc);
    return doc.serialize();
}

DnaConfig model_from_config_text(const std::string& text) {
    return model_from_ini(IniDoc::parse(text));
}

Schedule schedule_from_ini(const IniDoc& doc) {
    SectionReader r(doc, "schedule");
    Schedule s;
    s.kind = schedule_kind_from_name(r.str("kind", "warmup-cosine"));
    s.warmup_steps = r.integer("warmup_steps", 100);
    s.total_steps = r.integer("total_steps", 1000);
    s.lr_init = r.number("lr_init", s.lr_init);
    s.lr_peak = r.number("lr_peak", s.lr_peak);
    s.lr_final = r.number("lr_final", s.lr_final);
    s.decay_fraction = r.number("decay_fraction", s.decay_fraction);
    r.finish();
    return s;
}

TrainerConfig trainer_from_ini(const IniDoc& doc) {
    SectionReader r(doc, "trainer");
    TrainerConfig tc;
    tc.steps = r.integer("steps", tc.steps);
    tc.batch_size = r.integer("batch_size", tc.batch_size);
    tc.beta1 = r.number("beta1", tc.beta1);
    tc.beta2 = r.number("beta2", tc.beta2);
    tc.eps = r.number("eps", tc.eps);
    tc.weight_decay = r.number("weight_decay", tc.weight_decay);
    tc.clip_norm = r.number("clip_norm", tc.clip_norm);
    tc.stochastic_routing = r.boolean("stochastic_routing", tc.stochastic_routing);
    tc.log_every = r.integer("log_every", tc.log_every);
    tc.seed = static_cast<uint64_t>(r.integer("seed", 0));
    r.finish();
    return tc;
}

DataConfig data_from_ini(const IniDoc& doc) {
    SectionReader r(doc, "data");
    DataConfig dc;
    dc.kind = r.str("kind", dc.kind);
    dc.n_examples = r.integer("n_examples", dc.n_examples);
    dc.jitter_px = r.integer("jitter_px", dc.jitter_px);
    dc.noise = r.number("noise", dc.noise);
    dc.path = r.str("path", dc.path);
    dc.stream_length = r.integer("stream_length", dc.stream_length);
    dc.period = r.integer("period", dc.period);
    dc.vocab = r.integer("vocab", dc.vocab);
    r.finish();
    DNA_CHECK(dc.kind == "shapes" || dc.kind == "periodic" || dc.kind == "text",
              "config: field data.kind must be shapes|periodic|text, got '" << dc.kind << "'");
    return dc;
}

AnalyticsConfig analytics_from_ini(const IniDoc& doc) {
    SectionReader r(doc, "analytics");
    AnalyticsConfig ac;
    ac.alpha = r.number("alpha", ac.alpha);
    ac.fit_lo_quantile = r.number("fit_lo", ac.fit_lo_quantile);
    ac.fit_hi_quantile = r.number("fit_hi", ac.fit_hi_quantile);
    r.finish();
    DNA_CHECK(ac.alpha > 1.0, "config: analytics.alpha must exceed 1");
    return ac;
}

DreamRunConfig dream_from_ini(const IniDoc& doc) {
    SectionReader r(doc, "dream");
    DreamRunConfig dc;
    dc.steps = r.integer("steps", dc.steps);
    dc.lr = r.number("lr", dc.lr);
    dc.tv_coeff = r.number("tv_coeff", dc.tv_coeff);
    dc.jitter_px = r.integer("jitter_px", dc.jitter_px);
    dc.rotation_deg = r.number("rotation_deg", dc.rotation_deg);
    dc.scale_pct = r.number("scale_pct", dc.scale_pct);
    dc.noise_start = r.number("noise_start", dc.noise_start);
    dc.transforms = r.boolean("transforms", dc.transforms);
    dc.color_shift = r.boolean("color_shift", dc.color_shift);
    dc.objective_steps = r.integer("objective_steps", dc.objective_steps);
    dc.token_subset = r.int_list("tokens");
    dc.context_patches = r.int_list("context_patches");
    dc.use_logits = r.boolean("use_logits", dc.use_logits);
    dc.init_scale = r.number("init_scale", dc.init_scale);
    dc.reference_index = r.integer("reference_index", dc.reference_index);
    r.finish();
    return dc;
}

Dataset dataset_from_config(const DataConfig& dc, const DnaConfig& mc, uint64_t seed) {
    if (dc.kind == "shapes") {
        DNA_CHECK(mc.task == TaskKind::VisionClassify,
                  "config: shapes data requires the vision-classify task");
        ShapeGenOptions opts;
        opts.image_size = mc.image_size;
        opts.n_classes = mc.n_classes;
        opts.jitter_px = dc.jitter_px;
        opts.noise = dc.noise;
        return make_shapes_dataset(dc.n_examples, seed, opts);
    }
    DNA_CHECK(mc.task == TaskKind::CausalLm, "config: " << dc.kind
                                             << " data requires the causal-lm task");
    if (dc.kind == "periodic") {
        DNA_CHECK(dc.vocab <= mc.vocab_size, "config: data vocab " << dc.vocab
                                             << " exceeds model vocab " << mc.vocab_size);
        return make_periodic_dataset(dc.stream_length, mc.context, dc.period, dc.vocab, seed);
    }
    DNA_CHECK(!dc.path.empty(), "config: field data.path required for text data");
    Dataset data = load_text_dataset(dc.path, mc.context);
    DNA_CHECK(data.vocab <= mc.vocab_size, "config: corpus vocabulary " << data.vocab
                                           << " exceeds model vocab " << mc.vocab_size);
    return data;
}

}  // namespace dna

// dna: train / trace / analyze / dream / verify for routed-module models.
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dna/analytics.hpp"
#include "dna/config.hpp"
#include "dna/data.hpp"
#include "dna/dreaming.hpp"
#include "dna/image_io.hpp"
#include "dna/serialize.hpp"
#include "dna/trainer.hpp"
#include "dna/verify.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    std::vector<std::string> overrides;
};

std::string default_out_dir(const std::string& subcommand) {
    const char* root = std::getenv("DNA_OUT_ROOT");
    const fs::path base = root != nullptr && *root != '\0' ? fs::path(root) : fs::path("runs");
    return (base / subcommand).string();
}

// Loads the config file, applies overrides, creates the output directory and
// echoes both the verbatim file and the resolved document into it.
dna::IniDoc prepare_run(const CommonArgs& args, const std::string& subcommand) {
    std::ifstream is(args.config_path);
    if (!is.good()) {
        throw dna::Error("config: cannot open '" + args.config_path + "'");
    }
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    dna::IniDoc doc = dna::IniDoc::parse(text);
    for (const auto& o : args.overrides) doc.apply_override(o);

    const fs::path out = args.out_dir.empty() ? default_out_dir(subcommand) : args.out_dir;
    fs::create_directories(out);
    std::ofstream verbatim(out / "config.ini", std::ios::binary);
    verbatim << text;
    std::ofstream resolved(out / "config_resolved.ini", std::ios::binary);
    resolved << doc.serialize();
    return doc;
}

fs::path out_path(const CommonArgs& args, const std::string& subcommand) {
    return args.out_dir.empty() ? fs::path(default_out_dir(subcommand)) : fs::path(args.out_dir);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os.good()) throw dna::Error("cannot open '" + path.string() + "' for writing");
    os << text;
    if (!os.good()) throw dna::Error("write to '" + path.string() + "' failed");
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

int cmd_train(const CommonArgs& args) {
    const dna::IniDoc doc = prepare_run(args, "train");
    const fs::path out = out_path(args, "train");
    const dna::DnaConfig mc = dna::model_from_ini(doc);
    const dna::Schedule sched = dna::schedule_from_ini(doc);
    dna::TrainerConfig tc = dna::trainer_from_ini(doc);
    if (args.seed != 0) tc.seed = args.seed;
    const dna::DataConfig dc = dna::data_from_ini(doc);
    const dna::Dataset data = dna::dataset_from_config(dc, mc, dna::Rng::derive(tc.seed, 7));

    dna::DnaModel<float> model(mc, dna::Rng::derive(tc.seed, 1));
    std::ofstream metrics(out / "metrics.tsv", std::ios::binary);
    const dna::TrainResult result = dna::train(model, data, sched, tc, &metrics);

    dna::save_checkpoint((out / "checkpoint.dnackpt").string(),
                         dna::model_checkpoint(model, {{"steps", std::to_string(tc.steps)},
                                                       {"seed", std::to_string(tc.seed)}}));
    std::cout << "trained " << tc.steps << " steps, final loss " << fmt(result.final_loss)
              << ", outputs in " << out.string() << "\n";
    return 0;
}

// The model always comes from the checkpoint; a [model] section in the run
// config must agree with it.
void check_model_section_matches(const dna::IniDoc& doc, const dna::DnaConfig& from_ckpt,
                                 const std::string& checkpoint_path) {
    bool has_model_section = false;
    for (const auto& [name, section] : doc.sections) {
        has_model_section = has_model_section || (name == "model" && !section.empty());
    }
    if (!has_model_section) return;
    const dna::DnaConfig from_file = dna::model_from_ini(doc);
    DNA_CHECK(dna::model_config_text(from_file) == dna::model_config_text(from_ckpt),
              "checkpoint/config mismatch: the [model] section disagrees with the model stored "
              "in '" << checkpoint_path << "'");
}

int cmd_trace(const CommonArgs& args, const std::string& checkpoint_path, int limit) {
    const dna::IniDoc doc = prepare_run(args, "trace");
    const fs::path out = out_path(args, "trace");
    const dna::Checkpoint ckpt = dna::load_checkpoint(checkpoint_path);
    dna::DnaModel<float> model = dna::model_from_checkpoint<float>(ckpt);
    check_model_section_matches(doc, model.config(), checkpoint_path);
    const dna::DataConfig dc = dna::data_from_ini(doc);
    const dna::Dataset data =
        dna::dataset_from_config(dc, model.config(), dna::Rng::derive(args.seed, 7));

    const size_t n = limit > 0 ? std::min<size_t>(static_cast<size_t>(limit), data.size())
                               : data.size();
    std::vector<dna::SequenceTrace> traces;
    dna::ForwardOptions<float> opts;
    opts.record_trace = true;
    for (size_t i = 0; i < n; ++i) {
        auto fwd = model.forward_sequence(data.get(i), opts, static_cast<int64_t>(i));
        traces.push_back(std::move(fwd.trace));
    }
    dna::write_trace_file((out / "trace.jsonl").string(), traces);
    std::cout << "traced " << n << " sequences into " << (out / "trace.jsonl").string() << "\n";
    return 0;
}

int cmd_analyze(const std::string& trace_path, const CommonArgs& args) {
    dna::AnalyticsConfig ac;
    if (!args.config_path.empty()) {
        const dna::IniDoc doc = prepare_run(args, "analyze");
        ac = dna::analytics_from_ini(doc);
    }
    const fs::path out = out_path(args, "analyze");
    fs::create_directories(out);
    const auto traces = dna::read_trace_file(trace_path);

    const dna::PathStats stats = dna::rank_frequency(traces);
    {
        std::ostringstream os;
        os << "rank\tcount\tribbon\n";
        for (size_t r = 0; r < stats.ranked.size(); ++r) {
            os << (r + 1) << "\t" << stats.ranked[r].second << "\t" << stats.ranked[r].first
               << "\n";
        }
        write_text(out / "rank_frequency.tsv", os.str());
    }
    {
        std::ostringstream os;
        os << "slope\tintercept\tr_squared\trank_lo\trank_hi\tn_points\n";
        try {
            const dna::PowerLawFit fit = dna::powerlaw_fit(stats, ac);
            os << fmt(fit.slope) << "\t" << fmt(fit.intercept) << "\t" << fmt(fit.r_squared)
               << "\t" << fit.rank_lo << "\t" << fit.rank_hi << "\t" << fit.n_points << "\n";
        } catch (const dna::Error& e) {
            os << "# fit unavailable: " << e.what() << "\n";
        }
        write_text(out / "powerlaw.tsv", os.str());
    }
    {
        const auto counts = dna::step_module_counts(traces);
        std::ostringstream os;
        os << "step\teffective_topk\n";
        for (size_t s = 0; s < counts.size(); ++s) {
            os << s << "\t" << fmt(dna::effective_topk(counts[s], ac.alpha)) << "\n";
        }
        write_text(out / "effective_topk.tsv", os.str());
    }
    {
        std::ostringstream os;
        os << "seq_id\treuse_count_weighted\treuse_param_weighted\tcompute\n";
        std::vector<double> reuse, compute;
        for (const auto& t : traces) {
            const dna::ReuseSummary r = dna::sequence_reuse(t);
            const int steps = t.n_steps();
            double c = 0.0;
            if (!t.ribbons.empty() && steps > 0) {
                for (const int used : t.compute) {
                    c += static_cast<double>(used) / (t.k * steps);
                }
                c /= static_cast<double>(t.compute.size());
            }
            reuse.push_back(r.by_count);
            compute.push_back(c);
            os << t.seq_id << "\t" << fmt(r.by_count) << "\t" << fmt(r.by_params) << "\t"
               << fmt(c) << "\n";
        }
        write_text(out / "reuse.tsv", os.str());

        std::ostringstream cs;
        cs << "pair\tpearson_r\n";
        try {
            cs << "skip_vs_reuse\t" << fmt(dna::pearson(compute, reuse)) << "\n";
        } catch (const dna::Error& e) {
            cs << "# skip_vs_reuse unavailable: " << e.what() << "\n";
        }
        write_text(out / "correlations.tsv", cs.str());

        std::ostringstream hs;
        hs << "bin_lo\tbin_hi\tcount\n";
        const int bins = 20;
        std::vector<int64_t> hist(bins, 0);
        for (const double c : compute) {
            int b = static_cast<int>(c * bins);
            if (b >= bins) b = bins - 1;
            if (b < 0) b = 0;
            ++hist[static_cast<size_t>(b)];
        }
        for (int b = 0; b < bins; ++b) {
            hs << fmt(static_cast<double>(b) / bins) << "\t"
               << fmt(static_cast<double>(b + 1) / bins) << "\t" << hist[static_cast<size_t>(b)]
               << "\n";
        }
        write_text(out / "compute_hist.tsv", hs.str());
    }
    {
        const dna::FlowSummary flow = dna::flow_export(traces);
        std::ostringstream os;
        os << "step\tmodule\tfrequency\n";
        for (size_t s = 0; s < flow.freq.size(); ++s) {
            for (int m = 0; m < flow.n_modules; ++m) {
                os << s << "\t" << m << "\t" << flow.freq[s][static_cast<size_t>(m)] << "\n";
            }
        }
        write_text(out / "flow_freq.tsv", os.str());

        std::ostringstream ts;
        ts << "step\tfrom\tto\tcount\n";
        for (size_t s = 0; s < flow.transitions.size(); ++s) {
            for (int a = 0; a < flow.n_modules; ++a) {
                for (int b = 0; b < flow.n_modules; ++b) {
                    const int64_t c =
                        flow.transitions[s][static_cast<size_t>(a)][static_cast<size_t>(b)];
                    if (c > 0) ts << s << "\t" << a << "\t" << b << "\t" << c << "\n";
                }
            }
        }
        write_text(out / "flow_transitions.tsv", ts.str());
    }
    std::cout << "analyzed " << traces.size() << " sequences into " << out.string() << "\n";
    return 0;
}

int cmd_dream(const CommonArgs& args, const std::string& checkpoint_path) {
    const dna::IniDoc doc = prepare_run(args, "dream");
    const fs::path out = out_path(args, "dream");
    const dna::Checkpoint ckpt = dna::load_checkpoint(checkpoint_path);
    dna::DnaModel<float> model = dna::model_from_checkpoint<float>(ckpt);
    check_model_section_matches(doc, model.config(), checkpoint_path);
    const dna::DreamRunConfig rc = dna::dream_from_ini(doc);
    const dna::DataConfig dc = dna::data_from_ini(doc);
    const dna::Dataset data =
        dna::dataset_from_config(dc, model.config(), dna::Rng::derive(args.seed, 7));
    DNA_CHECK(rc.reference_index >= 0 && static_cast<size_t>(rc.reference_index) < data.size(),
              "dream: reference_index " << rc.reference_index << " outside the dataset");
    const dna::Example ref = data.get(static_cast<size_t>(rc.reference_index));

    dna::DreamObjective obj = dna::record_dream_objective(
        model, ref, rc.objective_steps, rc.token_subset, rc.context_patches);
    obj.use_logits = rc.use_logits;
    const auto result = dna::dream(model, obj, ref, rc, args.seed == 0 ? 1 : args.seed);

    dna::write_ppm((out / "dream.ppm").string(), result.image, model.config().image_size);
    std::ostringstream os;
    os << "step\tobjective\n";
    for (size_t i = 0; i < result.objective_trace.size(); ++i) {
        os << i << "\t" << fmt(result.objective_trace[i]) << "\n";
    }
    write_text(out / "objective.tsv", os.str());
    std::cout << "dream objective " << fmt(result.initial_objective) << " -> "
              << fmt(result.final_objective) << ", outputs in " << out.string() << "\n";
    return 0;
}

int cmd_verify(const std::string& filter) {
    const auto results = dna::verify::run_acceptance(filter, &std::cout);
    if (results.empty()) {
        std::cerr << "no acceptance criteria match filter '" << filter << "'\n";
        return 1;
    }
    return dna::verify::all_passed(results) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Routed-module networks: training, tracing, analytics, dreaming"};
    app.require_subcommand(1);

    CommonArgs train_args, trace_args, analyze_args, dream_args;
    std::string trace_ckpt, dream_ckpt, analyze_trace, verify_filter;
    int trace_limit = 0;

    auto add_common = [](CLI::App* sub, CommonArgs& c, bool config_required) {
        sub->add_option("--config", c.config_path, "run configuration file")
            ->required(config_required);
        sub->add_option("--out", c.out_dir, "output directory (default $DNA_OUT_ROOT/<cmd>)");
        sub->add_option("--seed", c.seed, "run seed");
        sub->add_option("--override", c.overrides,
                        "dotted config override, e.g. model.top_k=2 (repeatable)");
    };

    CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
    add_common(train, train_args, true);

    CLI::App* trace = app.add_subcommand("trace", "run a checkpoint over a dataset, write traces");
    add_common(trace, trace_args, true);
    trace->add_option("--checkpoint", trace_ckpt, "model checkpoint")->required();
    trace->add_option("--limit", trace_limit, "max sequences to trace (0 = all)");

    CLI::App* analyze = app.add_subcommand("analyze", "compute statistics from a trace file");
    add_common(analyze, analyze_args, false);
    analyze->add_option("--trace", analyze_trace, "trace.jsonl input")->required();

    CLI::App* dream = app.add_subcommand("dream", "routing-objective activation maximization");
    add_common(dream, dream_args, true);
    dream->add_option("--checkpoint", dream_ckpt, "model checkpoint")->required();

    CLI::App* verify = app.add_subcommand("verify", "run the built-in acceptance suite");
    verify->add_option("--filter", verify_filter, "run only criteria whose name contains this");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (train->parsed()) return cmd_train(train_args);
        if (trace->parsed()) return cmd_trace(trace_args, trace_ckpt, trace_limit);
        if (analyze->parsed()) return cmd_analyze(analyze_trace, analyze_args);
        if (dream->parsed()) return cmd_dream(dream_args, dream_ckpt);
        if (verify->parsed()) return cmd_verify(verify_filter);
    } catch (const dna::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        // configuration and file-shape problems are usage errors
        const std::string msg = e.what();
        if (msg.rfind("config", 0) == 0 || msg.find("cannot open") != std::string::npos) {
            return 2;
        }
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

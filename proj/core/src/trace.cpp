#include "dna/trace.hpp"

#include <fstream>
#include <sstream>

#include "dna/check.hpp"
#include "json.hpp"

namespace dna {

using nlohmann::json;

void write_trace_jsonl(std::ostream& os, const std::vector<SequenceTrace>& traces) {
    for (const auto& t : traces) {
        json j;
        j["seq_id"] = t.seq_id;
        j["tokens"] = t.tokens;
        j["k"] = t.k;
        j["n_modules"] = t.n_modules;
        j["ribbons"] = t.ribbons;
        j["probs"] = t.probs;
        j["bias"] = t.bias;
        j["compute"] = t.compute;
        j["identity"] = t.identity;
        j["module_params"] = t.module_params;
        os << j.dump() << "\n";
    }
}

void write_trace_file(const std::string& path, const std::vector<SequenceTrace>& traces) {
    std::ofstream os(path, std::ios::binary);
    DNA_CHECK(os.good(), "trace: cannot open '" << path << "' for writing");
    write_trace_jsonl(os, traces);
    DNA_CHECK(os.good(), "trace: write to '" << path << "' failed");
}

std::vector<SequenceTrace> read_trace_jsonl(std::istream& is) {
    std::vector<SequenceTrace> out;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
            SequenceTrace t;
            t.seq_id = j.at("seq_id").get<int64_t>();
            t.tokens = j.at("tokens").get<int>();
            t.k = j.at("k").get<int>();
            t.n_modules = j.at("n_modules").get<int>();
            t.ribbons = j.at("ribbons").get<std::vector<std::vector<std::vector<int>>>>();
            t.probs = j.at("probs").get<std::vector<std::vector<std::vector<double>>>>();
            t.bias = j.at("bias").get<std::vector<std::vector<double>>>();
            t.compute = j.at("compute").get<std::vector<int>>();
            t.identity = j.at("identity").get<std::vector<int>>();
            t.module_params = j.at("module_params").get<std::vector<int64_t>>();
            DNA_CHECK(static_cast<int>(t.ribbons.size()) == t.tokens,
                      "ribbon count " << t.ribbons.size() << " != token count " << t.tokens);
            out.push_back(std::move(t));
        } catch (const json::exception& e) {
            DNA_CHECK(false, "trace: malformed line " << line_no << ": " << e.what());
        } catch (const Error& e) {
            DNA_CHECK(false, "trace: malformed line " << line_no << ": " << e.what());
        }
    }
    return out;
}

std::vector<SequenceTrace> read_trace_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    DNA_CHECK(is.good(), "trace: cannot open '" << path << "'");
    return read_trace_jsonl(is);
}

}  // namespace dna

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace dna {

// Record of one sequence's routed forward pass: the substrate every analytics
// operation reads. Plain values only; nothing here touches the graph.
struct SequenceTrace {
    int64_t seq_id = 0;
    int tokens = 0;
    int k = 1;
    int n_modules = 0;
    std::vector<std::vector<std::vector<int>>> ribbons;   // [token][step] -> ascending k-tuple
    std::vector<std::vector<std::vector<double>>> probs;  // selected rho, aligned to ribbons
    std::vector<std::vector<double>> bias;                // [step][module] snapshot
    std::vector<int> compute;                             // per-token non-identity selections
    std::vector<int> identity;                            // identity module indices
    std::vector<int64_t> module_params;                   // parameter count per module

    int n_steps() const {
        return ribbons.empty() ? 0 : static_cast<int>(ribbons.front().size());
    }
};

// Line-delimited JSON, one sequence per line.
void write_trace_jsonl(std::ostream& os, const std::vector<SequenceTrace>& traces);
void write_trace_file(const std::string& path, const std::vector<SequenceTrace>& traces);
std::vector<SequenceTrace> read_trace_jsonl(std::istream& is);
std::vector<SequenceTrace> read_trace_file(const std::string& path);

}  // namespace dna

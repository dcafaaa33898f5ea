#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dna::verify {

struct CriterionResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

// Runs every built-in acceptance criterion whose name contains `filter`
// (empty = all). When `live` is given, one PASS/FAIL line per criterion is
// printed as results arrive.
std::vector<CriterionResult> run_acceptance(const std::string& filter = "",
                                            std::ostream* live = nullptr);

bool all_passed(const std::vector<CriterionResult>& results);

}  // namespace dna::verify

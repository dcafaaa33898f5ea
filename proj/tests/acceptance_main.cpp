// Acceptance suite runner: one PASS/FAIL line per criterion, nonzero exit on
// any failure. `acceptance <filter>` runs the matching subset.
#include <iostream>

#include "dna/verify.hpp"

int main(int argc, char** argv) {
    const std::string filter = argc > 1 ? argv[1] : "";
    const auto results = dna::verify::run_acceptance(filter, &std::cout);
    if (results.empty()) {
        std::cerr << "no acceptance criteria match filter '" << filter << "'\n";
        return 1;
    }
    return dna::verify::all_passed(results) ? 0 : 1;
}

#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dna {

// Contract violations and malformed inputs surface as dna::Error. The CLI maps
// them to exit codes; library callers catch or let them propagate.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void raise(std::string msg) {
    throw Error(std::move(msg));
}
}  // namespace detail

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    s += "]";
    return s;
}

}  // namespace dna

#define DNA_CHECK(cond, stream_expr)                    \
    do {                                                \
        if (!(cond)) {                                  \
            std::ostringstream dna_check_os_;           \
            dna_check_os_ << stream_expr;               \
            ::dna::detail::raise(dna_check_os_.str());  \
        }                                               \
    } while (0)

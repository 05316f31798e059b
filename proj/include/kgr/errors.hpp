#pragma once

#include <stdexcept>
#include <string>

namespace kgr {

// Input that could not be read: malformed lines, bad file headers.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Input that parsed but is unusable: empty graphs, infeasible specs,
// out-of-range configuration.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// A caller broke an API contract: unknown ids, relation mismatches,
// missing blanket assignments.
struct DomainError : std::logic_error {
    explicit DomainError(const std::string& what) : std::logic_error(what) {}
};

// Numerical failure at run time: diverging weights, non-finite gradients,
// exhausted rejection sampling.
struct ComputeError : std::runtime_error {
    explicit ComputeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace kgr

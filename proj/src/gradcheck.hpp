#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace llgm {

struct GradcheckClass {
    std::string name;
    double max_error = 0.0; // worst relative error after a 1e-5 absolute floor
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GradcheckClass> classes;
    double tolerance = 1e-3;
    bool pass = true;
};

// Central finite differences in double precision against the analytic
// backward passes: splatting gradients for every primitive parameter class
// (both composite modes, including a level-to-render scale change) and the
// full gain-chain gradients for the mixing logits and bias.
GradcheckReport run_gradcheck(std::uint64_t seed);

} // namespace llgm

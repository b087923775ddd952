#pragma once

#include "pnerv/grad_check.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pnerv {

struct SuiteCheck {
    std::string name;
    GradCheckReport report;
};

/// Finite-difference checks for every differentiable op and for full tiny
/// models (KFc+BSM and Deconv+Concat). Inputs are part of the checked set.
std::vector<SuiteCheck> run_gradcheck_suite(std::uint64_t seed, const GradCheckOptions& opt = {});

}  // namespace pnerv

#pragma once

#include "pnerv/autodiff.hpp"

#include <functional>
#include <string>
#include <vector>

namespace pnerv {

/// Binds parameter tensors to tape leaves, remembering which leaf belongs to
/// which tensor so gradients can be read back after backward().
class Bindings {
public:
    explicit Bindings(ad::Tape& tape, bool requires_grad = true) : tape_(&tape), requires_grad_(requires_grad) {}

    /// Same tensor -> same leaf for the lifetime of this object.
    ad::Var operator()(const Tensor& param);

    ad::Tape& tape() const { return *tape_; }
    const std::vector<std::pair<const Tensor*, ad::Var>>& entries() const { return entries_; }
    ad::Var find(const Tensor& param) const;

private:
    ad::Tape* tape_;
    bool requires_grad_;
    std::vector<std::pair<const Tensor*, ad::Var>> entries_;
};

struct NamedTensor {
    std::string name;
    Tensor* value;
};

struct GradCheckOptions {
    double tol = 1e-4;
    double step = 1e-5;
    /// Denominator floor: rel = |a - n| / max(|a|, |n|, floor).
    double floor = 1e-3;
};

struct GradCheckEntry {
    std::string name;
    std::size_t count = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::size_t worst_index = 0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double tol = 0.0;
    double max_rel_error = 0.0;
    bool passed() const { return max_rel_error < tol; }
};

/// Builds a scalar on the tape from the bound parameters.
using ScalarFn = std::function<ad::Var(Bindings&)>;

/// Compares tape gradients of `f` against central finite differences for every
/// entry of every parameter. Parameters are perturbed in place and restored.
GradCheckReport grad_check(const ScalarFn& f, const std::vector<NamedTensor>& params, GradCheckOptions opt = {});

}  // namespace pnerv

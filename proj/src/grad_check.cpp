#include "pnerv/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace pnerv {

ad::Var Bindings::operator()(const Tensor& param) {
    for (const auto& [ptr, var] : entries_)
        if (ptr == &param) return var;
    const ad::Var v = tape_->leaf(param, requires_grad_, "param");
    entries_.emplace_back(&param, v);
    return v;
}

ad::Var Bindings::find(const Tensor& param) const {
    for (const auto& [ptr, var] : entries_)
        if (ptr == &param) return var;
    throw std::out_of_range("tensor was never bound");
}

namespace {
double evaluate(const ScalarFn& f) {
    ad::Tape tape;
    Bindings b(tape, false);
    return tape.value(f(b))[0];
}
}  // namespace

GradCheckReport grad_check(const ScalarFn& f, const std::vector<NamedTensor>& params, GradCheckOptions opt) {
    ad::Tape tape;
    Bindings bind(tape);
    for (const auto& p : params) bind(*p.value);
    const ad::Var root = f(bind);
    tape.backward(root);

    GradCheckReport report;
    report.tol = opt.tol;
    for (const auto& p : params) {
        const Tensor analytic = tape.grad(bind.find(*p.value));
        GradCheckEntry e{p.name, p.value->size()};
        for (std::size_t i = 0; i < p.value->size(); ++i) {
            double& x = (*p.value)[i];
            const double saved = x;
            x = saved + opt.step;
            const double up = evaluate(f);
            x = saved - opt.step;
            const double down = evaluate(f);
            x = saved;
            const double numeric = (up - down) / (2.0 * opt.step);
            const double err = std::abs(analytic[i] - numeric);
            const double rel = err / std::max({std::abs(analytic[i]), std::abs(numeric), opt.floor});
            e.max_abs_error = std::max(e.max_abs_error, err);
            if (rel > e.max_rel_error) {
                e.max_rel_error = rel;
                e.worst_index = i;
            }
        }
        report.max_rel_error = std::max(report.max_rel_error, e.max_rel_error);
        report.entries.push_back(std::move(e));
    }
    return report;
}

}  // namespace pnerv

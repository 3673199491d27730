#pragma once

#include <functional>
#include <string>
#include <vector>

#include "avic/ops.hpp"
#include "avic/rng.hpp"

namespace avic {

struct CheckReport {
    bool pass = false;
    double tol = 0.0;
    double max_rel_err = 0.0;
    std::vector<double> per_input;  // max relative error per checked input
    std::string worst;              // "input i, coord j" of the worst error
};

// f builds a scalar loss on the given tape from leaves created for `inputs`
// (in order). It must be deterministic.
template <typename T>
using CheckFn = std::function<TensorRef(Tape<T>&, const std::vector<TensorRef>&)>;

namespace detail {

template <typename T>
T eval_scalar(const CheckFn<T>& f, const std::vector<std::vector<T>>& data,
              const std::vector<Shape>& shapes) {
    Tape<T> tape;
    std::vector<TensorRef> leaves;
    leaves.reserve(data.size());
    for (size_t i = 0; i < data.size(); ++i) leaves.push_back(tape.leaf(data[i], shapes[i], false));
    TensorRef loss = f(tape, leaves);
    if (numel(tape.shape(loss)) != 1)
        throw ShapeError("finite_diff_check: function output is not scalar");
    return tape.value(loss)[0];
}

}  // namespace detail

// Central-difference check of the tape gradients. When coord_budget > 0 only
// that many coordinates per input are probed (seeded choice); 0 probes all.
template <typename T>
CheckReport finite_diff_check(const CheckFn<T>& f, const std::vector<std::vector<T>>& data,
                              const std::vector<Shape>& shapes, T step, double tol,
                              int64_t coord_budget = 0, uint64_t coord_seed = 0) {
    if (step <= T(0)) throw Error("finite_diff_check: step must be positive");
    if (data.size() != shapes.size()) throw Error("finite_diff_check: inputs/shapes size mismatch");

    // analytic gradients
    Tape<T> tape;
    std::vector<TensorRef> leaves;
    for (size_t i = 0; i < data.size(); ++i) leaves.push_back(tape.leaf(data[i], shapes[i], true));
    TensorRef loss = f(tape, leaves);
    if (numel(tape.shape(loss)) != 1)
        throw ShapeError("finite_diff_check: function output is not scalar");
    GradientMap<T> grads = tape.backward(loss);

    CheckReport rep;
    rep.tol = tol;
    rep.per_input.assign(data.size(), 0.0);
    auto mutable_data = data;

    for (size_t i = 0; i < data.size(); ++i) {
        const auto& analytic = grads.at(leaves[i]);
        int64_t n = static_cast<int64_t>(data[i].size());
        std::vector<int64_t> coords;
        if (coord_budget > 0 && coord_budget < n) {
            CounterRng rng(derive_seed(coord_seed, "fd_coords", i));
            for (int64_t c = 0; c < coord_budget; ++c)
                coords.push_back(static_cast<int64_t>(rng.next_u64() % uint64_t(n)));
        } else {
            coords.resize(size_t(n));
            for (int64_t c = 0; c < n; ++c) coords[size_t(c)] = c;
        }
        for (int64_t j : coords) {
            T saved = mutable_data[i][size_t(j)];
            mutable_data[i][size_t(j)] = saved + step;
            T fp = detail::eval_scalar(f, mutable_data, shapes);
            mutable_data[i][size_t(j)] = saved - step;
            T fm = detail::eval_scalar(f, mutable_data, shapes);
            mutable_data[i][size_t(j)] = saved;
            double fd = (double(fp) - double(fm)) / (2.0 * double(step));
            double an = double(analytic[size_t(j)]);
            double denom = std::max({std::fabs(an), std::fabs(fd), 1e-8});
            double rel = std::fabs(an - fd) / denom;
            rep.per_input[i] = std::max(rep.per_input[i], rel);
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst = "input " + std::to_string(i) + ", coord " + std::to_string(j) +
                            " (analytic " + std::to_string(an) + ", fd " + std::to_string(fd) + ")";
            }
        }
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace avic

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gda/error.hpp"
#include "gda/matrix.hpp"

namespace gda {

/// Named view of one trainable matrix. Models expose their parameters as a list of these.
struct NamedParam {
    std::string name;
    Matrix* value;
};

using ParamList = std::vector<NamedParam>;

struct SgdOptions {
    double lr = 0.01;
    double weight_decay = 0.0;
    double momentum = 0.0;
};

/// Per-parameter velocity buffers; created zeroed on the first step.
struct SgdState {
    std::vector<Matrix> velocity;
};

/// One SGD step with L2 weight decay and heavy-ball momentum:
///   v <- momentum * v + (g + weight_decay * theta);  theta <- theta - lr * v
inline void sgd_step(std::span<Matrix* const> params, std::span<const Matrix> grads, const SgdOptions& opt,
                     SgdState& state) {
    if (!(opt.lr > 0)) throw ConfigError("learning rate must be positive");
    if (!(opt.momentum >= 0 && opt.momentum < 1)) throw ConfigError("momentum must lie in [0, 1)");
    if (opt.weight_decay < 0) throw ConfigError("weight decay must be nonnegative");
    if (params.size() != grads.size()) throw ShapeError("sgd_step: parameter and gradient counts differ");
    if (state.velocity.empty()) {
        state.velocity.reserve(params.size());
        for (const Matrix* p : params) state.velocity.emplace_back(p->rows, p->cols);
    }
    if (state.velocity.size() != params.size()) throw ShapeError("sgd_step: optimizer state built for other params");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& theta = *params[i];
        const Matrix& g = grads[i];
        Matrix& v = state.velocity[i];
        if (!theta.same_shape(g) || !theta.same_shape(v))
            throw ShapeError("sgd_step: shape mismatch for parameter " + std::to_string(i) + " (" +
                             shape_str(theta) + " vs grad " + shape_str(g) + ")");
        for (std::size_t k = 0; k < theta.size(); ++k) {
            v.data[k] = opt.momentum * v.data[k] + (g.data[k] + opt.weight_decay * theta.data[k]);
            theta.data[k] -= opt.lr * v.data[k];
        }
    }
}

}  // namespace gda

#pragma once

#include <cmath>
#include <unordered_map>

#include "fastnn/parallel.hpp"
#include "fastnn/tensor.hpp"

namespace fastnn {

enum class OptimizerKind { SgdMomentum, Adagrad, Adadelta, Adam };

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::SgdMomentum;
    float lr = 0.1f;
    float momentum = 0.9f;
    float weight_decay = 0.0f;
    float eps = 1e-8f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float rho = 0.95f;

    struct Slot {
        Tensor velocity;    // sgd momentum
        Tensor acc;         // adagrad / adadelta squared-gradient average
        Tensor acc_update;  // adadelta squared-update average
        Tensor m, v;        // adam moments
        long long t = 0;    // adam step counter
        bool ready = false;
    };
    std::unordered_map<const float*, Slot> slots;  // keyed by parameter storage

    Slot& slot_for(const Tensor& param) {
        Slot& s = slots[param.data()];
        if (!s.ready) {
            const auto d = param.dims();
            const std::vector<long long> dims(d.begin(), d.end());
            s.velocity = make_tensor(dims, param.padded());
            s.acc = make_tensor(dims, param.padded());
            s.acc_update = make_tensor(dims, param.padded());
            s.m = make_tensor(dims, param.padded());
            s.v = make_tensor(dims, param.padded());
            s.ready = true;
        }
        return s;
    }
};

namespace detail {

inline void check_step(const OptimizerState& state, const Tensor& param, const Tensor& grad) {
    if (param.dims() != grad.dims()) throw ShapeError("optimizer step: param/grad shape mismatch");
    if (!(state.lr > 0.0f)) throw ParamError("optimizer step: lr must be > 0");
    if (state.momentum < 0.0f || state.momentum >= 1.0f) throw ParamError("optimizer step: momentum must be in [0, 1)");
}

template <class PerElement>
void for_each_param(Tensor& param, PerElement f) {
    const std::size_t cols = param.last_dim();
    parallel_for(0, param.rows_total(), [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t j = 0; j < cols; ++j) f(r, j);
    });
}

}  // namespace detail

// g' = grad + weight_decay*param; v = momentum*v - lr*g'; param += v
inline void sgd_momentum_step(OptimizerState& state, Tensor& param, const Tensor& grad) {
    detail::check_step(state, param, grad);
    OptimizerState::Slot& s = state.slot_for(param);
    const float lr = state.lr, mom = state.momentum, wd = state.weight_decay;
    detail::for_each_param(param, [&](std::size_t r, std::size_t j) {
        float* p = param.row_ptr(r) + j;
        float* v = s.velocity.row_ptr(r) + j;
        const float g = grad.row_ptr(r)[j] + wd * *p;
        *v = mom * *v - lr * g;
        *p += *v;
    });
}

// acc += grad^2; param -= lr*grad / (sqrt(acc) + eps)
inline void adagrad_step(OptimizerState& state, Tensor& param, const Tensor& grad) {
    detail::check_step(state, param, grad);
    OptimizerState::Slot& s = state.slot_for(param);
    const float lr = state.lr, eps = state.eps;
    detail::for_each_param(param, [&](std::size_t r, std::size_t j) {
        float* a = s.acc.row_ptr(r) + j;
        const float g = grad.row_ptr(r)[j];
        *a += g * g;
        param.row_ptr(r)[j] -= lr * g / (std::sqrt(*a) + eps);
    });
}

// Eg = rho*Eg + (1-rho)*g^2; delta = -sqrt(Ex+eps)/sqrt(Eg+eps)*g; Ex = rho*Ex + (1-rho)*delta^2
inline void adadelta_step(OptimizerState& state, Tensor& param, const Tensor& grad) {
    detail::check_step(state, param, grad);
    OptimizerState::Slot& s = state.slot_for(param);
    const float rho = state.rho, eps = state.eps;
    detail::for_each_param(param, [&](std::size_t r, std::size_t j) {
        float* eg = s.acc.row_ptr(r) + j;
        float* ex = s.acc_update.row_ptr(r) + j;
        const float g = grad.row_ptr(r)[j];
        *eg = rho * *eg + (1.0f - rho) * g * g;
        const float delta = -std::sqrt(*ex + eps) / std::sqrt(*eg + eps) * g;
        *ex = rho * *ex + (1.0f - rho) * delta * delta;
        param.row_ptr(r)[j] += delta;
    });
}

// t += 1; m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g^2; param -= lr*(m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps)
inline void adam_step(OptimizerState& state, Tensor& param, const Tensor& grad) {
    detail::check_step(state, param, grad);
    OptimizerState::Slot& s = state.slot_for(param);
    s.t += 1;
    const float b1 = state.beta1, b2 = state.beta2, lr = state.lr, eps = state.eps;
    const float c1 = 1.0f - std::pow(b1, static_cast<float>(s.t));
    const float c2 = 1.0f - std::pow(b2, static_cast<float>(s.t));
    detail::for_each_param(param, [&](std::size_t r, std::size_t j) {
        float* m = s.m.row_ptr(r) + j;
        float* v = s.v.row_ptr(r) + j;
        const float g = grad.row_ptr(r)[j];
        *m = b1 * *m + (1.0f - b1) * g;
        *v = b2 * *v + (1.0f - b2) * g * g;
        param.row_ptr(r)[j] -= lr * (*m / c1) / (std::sqrt(*v / c2) + eps);
    });
}

inline void optimizer_step(OptimizerState& state, Tensor& param, const Tensor& grad) {
    switch (state.kind) {
        case OptimizerKind::SgdMomentum: sgd_momentum_step(state, param, grad); return;
        case OptimizerKind::Adagrad: adagrad_step(state, param, grad); return;
        case OptimizerKind::Adadelta: adadelta_step(state, param, grad); return;
        case OptimizerKind::Adam: adam_step(state, param, grad); return;
    }
    throw ParamError("optimizer_step: unknown kind");
}

}  // namespace fastnn

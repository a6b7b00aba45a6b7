#pragma once

#include <cstdint>
#include <vector>

#include "disfas/kernels.hpp"
#include "disfas/nn.hpp"
#include "disfas/tensor.hpp"

namespace disfas {

// Decoupled-weight-decay adaptive-moment optimizer. Parameter tensors whose
// active flag is false this step are skipped entirely: no moment update, no
// decay. An all-zero weight mask therefore leaves parameters bit-identical
// while t still advances.
struct AdamState {
    std::vector<Tensor<float>> m, v;
    int64_t t = 0;
};

struct AdamW {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
    AdamState state;

    void reset(const std::vector<nn::Param<float>*>& params) {
        state.m.clear();
        state.v.clear();
        for (const auto* p : params) {
            state.m.emplace_back(p->value.shape());
            state.v.emplace_back(p->value.shape());
        }
        state.t = 0;
    }

    void step(const std::vector<nn::Param<float>*>& params, const std::vector<bool>& active) {
        check_contract(params.size() == state.m.size(), "optimizer state not sized for model");
        check_contract(params.size() == active.size(), "active mask size mismatch");
        ++state.t;
        const float bc1 = 1.0f / (1.0f - static_cast<float>(std::pow(beta1, state.t)));
        const float bc2 = 1.0f / (1.0f - static_cast<float>(std::pow(beta2, state.t)));
        for (size_t i = 0; i < params.size(); ++i) {
            if (!active[i]) continue;
            nn::Param<float>* p = params[i];
            const float wd = p->decay ? static_cast<float>(weight_decay) : 0.0f;
            kernels::adamw_update(p->value.size(), p->value.data(), p->grad.data(),
                                  state.m[i].data(), state.v[i].data(), static_cast<float>(lr),
                                  static_cast<float>(beta1), static_cast<float>(beta2),
                                  static_cast<float>(eps), wd, bc1, bc2);
        }
    }
};

}  // namespace disfas

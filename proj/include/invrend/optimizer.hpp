#pragma once

#include <span>
#include <vector>

#include "invrend/core.hpp"

namespace invrend {

// Adam with per-parameter learning rates (a rate of zero freezes the
// parameter, which is how the stages mask the nets they do not train).
struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    int64_t step_count = 0;

    void reset(size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step_count = 0;
    }
    void step(std::span<double> params, std::span<const double> grad,
              std::span<const double> lr) {
        if (m.size() != params.size()) reset(params.size());
        ++step_count;
        const double bc1 = 1.0 - std::pow(beta1, double(step_count));
        const double bc2 = 1.0 - std::pow(beta2, double(step_count));
        for (size_t i = 0; i < params.size(); ++i) {
            if (lr[i] == 0.0) continue;
            m[i] = beta1 * m[i] + (1 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1 - beta2) * grad[i] * grad[i];
            const double mh = m[i] / bc1, vh = v[i] / bc2;
            params[i] -= lr[i] * mh / (std::sqrt(vh) + eps);
        }
    }
};

inline double cosine_decay(int iter, int total, double base_lr, double floor_frac = 0.05) {
    if (total <= 1) return base_lr;
    const double t = clampd(double(iter) / double(total - 1), 0.0, 1.0);
    const double f = 0.5 * (1.0 + std::cos(kPi * t));
    return base_lr * (floor_frac + (1.0 - floor_frac) * f);
}

}  // namespace invrend

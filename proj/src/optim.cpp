#include "optim.hpp"

#include <cmath>

#include "errors.hpp"
#include "parallel.hpp"

namespace llgm {

Adam::Adam(std::size_t n, const AdamConfig& cfg) : cfg_(cfg), m_(n, 0.0f), v_(n, 0.0f) {
    if (cfg.schedule == LrSchedule::Cosine && cfg.total_steps < 1)
        throw InvalidArgument("Adam: cosine schedule needs total_steps >= 1");
}

double Adam::next_lr() const {
    if (cfg_.schedule == LrSchedule::Constant) return cfg_.lr;
    // Full lr at the first step, min_fraction*lr at the last.
    const double min_lr = cfg_.lr * cfg_.min_fraction;
    const int horizon = std::max(cfg_.total_steps - 1, 1);
    const double phase = M_PI * std::min(t_, horizon) / horizon;
    return min_lr + 0.5 * (cfg_.lr - min_lr) * (1.0 + std::cos(phase));
}

void Adam::step(float* params, const float* grads) {
    const double lr = next_lr();
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    const double b1 = cfg_.beta1, b2 = cfg_.beta2, eps = cfg_.eps;
    parallel_for(m_.size(), [&](std::size_t i) {
        const double g = grads[i];
        const double m = b1 * m_[i] + (1.0 - b1) * g;
        const double v = b2 * v_[i] + (1.0 - b2) * g * g;
        m_[i] = static_cast<float>(m);
        v_[i] = static_cast<float>(v);
        params[i] -= static_cast<float>(lr * (m / bc1) / (std::sqrt(v / bc2) + eps));
    });
}

} // namespace llgm

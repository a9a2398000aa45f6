#pragma once

#include <cstddef>
#include <vector>

namespace llgm {

enum class LrSchedule { Constant, Cosine };

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    LrSchedule schedule = LrSchedule::Constant;
    double min_fraction = 0.05; // cosine floor as a fraction of lr
    int total_steps = 0;        // cosine horizon; required for the cosine schedule
};

// Adam over one flat float parameter vector (PyTorch update convention:
// p -= lr * mhat / (sqrt(vhat) + eps), bias-corrected moments).
class Adam {
public:
    Adam(std::size_t n, const AdamConfig& cfg);

    // Learning rate the next step() will use.
    double next_lr() const;
    void step(float* params, const float* grads);
    int step_count() const { return t_; }

private:
    AdamConfig cfg_;
    std::vector<float> m_, v_;
    int t_ = 0;
};

} // namespace llgm

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "tinyrl/errors.hpp"

namespace tinyrl {

struct GroupAdvantages {
    std::vector<double> values;
    bool degenerate = false;  // all rewards equal; values are all zero
};

// (r_i - mean) / std over the group. Population std by default; the sample
// (Bessel-corrected) variant is available behind the flag. Zero-variance
// groups return all-zero advantages with the degenerate flag set instead of
// dividing by an epsilon.
inline GroupAdvantages group_advantages(std::span<const double> rewards, bool sample_std = false) {
    const std::size_t g = rewards.size();
    if (g < 2) throw EmptyBatch("group_advantages: need G >= 2");
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(sample_std ? g - 1 : g);
    double sd = std::sqrt(var);

    GroupAdvantages out;
    out.values.assign(g, 0.0);
    if (sd < 1e-8) {
        out.degenerate = true;
        return out;
    }
    for (std::size_t i = 0; i < g; ++i) out.values[i] = (rewards[i] - mean) / sd;
    return out;
}

// GAE backward recursion: A_t = delta_t + gamma * lambda * A_{t+1},
// delta_t = r_t + gamma * V_{t+1} - V_t. values has length T+1 with the
// terminal bootstrap at the end.
inline std::vector<double> gae_advantages(std::span<const double> rewards,
                                          std::span<const double> values, double gamma,
                                          double lambda) {
    const std::size_t t_len = rewards.size();
    if (values.size() != t_len + 1)
        throw LengthMismatch("gae_advantages: values must have length T+1");
    std::vector<double> adv(t_len, 0.0);
    double running = 0.0;
    for (std::size_t t = t_len; t-- > 0;) {
        double delta = rewards[t] + gamma * values[t + 1] - values[t];
        running = delta + gamma * lambda * running;
        adv[t] = running;
    }
    return adv;
}

}  // namespace tinyrl

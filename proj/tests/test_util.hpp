#pragma once

// Shared test helpers: finite-difference gradient oracle, random rollout
// construction. The oracle is independent of the analytic backprop path.

#include <cmath>
#include <functional>
#include <vector>

#include "tinyrl/objectives.hpp"
#include "tinyrl/policy.hpp"

namespace tinyrl_test {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int worst_component = -1;
};

// Central finite differences on the selected components of theta.
// rel err uses max(|analytic|, |numeric|, floor) as denominator.
inline GradCheckResult check_gradient(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> theta,
                                      const std::vector<double>& analytic,
                                      const std::vector<std::size_t>& components,
                                      double step = 1e-5, double floor = 1e-5) {
    GradCheckResult res;
    for (std::size_t i : components) {
        const double orig = theta[i];
        theta[i] = orig + step;
        const double fp = f(theta);
        theta[i] = orig - step;
        const double fm = f(theta);
        theta[i] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), floor});
        const double rel = std::abs(numeric - analytic[i]) / denom;
        if (rel > res.max_rel_err) {
            res.max_rel_err = rel;
            res.worst_component = static_cast<int>(i);
        }
    }
    return res;
}

inline std::vector<std::size_t> random_components(std::size_t dim, std::size_t count,
                                                  std::uint64_t seed) {
    tinyrl::Rng rng(seed);
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < count; ++i) out.push_back(rng.next_u64() % dim);
    return out;
}

inline std::vector<std::size_t> all_components(std::size_t dim) {
    std::vector<std::size_t> out(dim);
    for (std::size_t i = 0; i < dim; ++i) out[i] = i;
    return out;
}

inline tinyrl::PolicyDims small_dims(int vocab = 6) { return {vocab, 3, 4, 4}; }

// Rollouts sampled from `old` at temperature 1, top_p 1 so the stored
// old_logprobs are fresh raw log-probs.
inline tinyrl::Rollout make_rollout(const tinyrl::PolicyParams& old, std::uint64_t seed,
                                    double reward_value = 1.0, int prompt_len = 3,
                                    int max_len = 5) {
    tinyrl::Rng rng(seed);
    std::vector<int> prompt;
    for (int i = 0; i < prompt_len; ++i)
        prompt.push_back(2 + static_cast<int>(rng.next_u64() %
                                              static_cast<std::uint64_t>(old.dims.vocab - 2)));
    auto r = tinyrl::sample_response(old, prompt, 1.0, 1.0, max_len, seed);
    r.query_id = "q" + std::to_string(seed);
    r.reward = reward_value;
    r.base_reward = reward_value >= 0 ? 1.0 : -1.0;
    return r;
}

inline tinyrl::RolloutGroup make_group(const tinyrl::PolicyParams& old, std::uint64_t seed,
                                       const std::vector<double>& rewards) {
    tinyrl::RolloutGroup g;
    g.query_id = "q" + std::to_string(seed);
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        auto r = make_rollout(old, tinyrl::mix_seed(seed, i), rewards[i]);
        r.query_id = g.query_id;
        g.rollouts.push_back(std::move(r));
    }
    auto adv = tinyrl::group_advantages(rewards);
    g.advantages = std::move(adv.values);
    g.degenerate = adv.degenerate;
    return g;
}

}  // namespace tinyrl_test

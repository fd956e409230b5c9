#pragma once

// Policy-gradient objectives: GRPO (response-level and token-level
// normalization, asymmetric clipping), the optional KL penalty, PPO with GAE
// and a small critic. Every objective returns its value (to be maximized),
// the exact analytic gradient, and clip/entropy/KL diagnostics.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tinyrl/advantage.hpp"
#include "tinyrl/critic.hpp"
#include "tinyrl/errors.hpp"
#include "tinyrl/policy.hpp"

namespace tinyrl {

struct ClipConfig {
    double eps_low = 0.2;
    double eps_high = 0.28;     // >= eps_low; clip-higher default
    double symmetric_eps = 0.2;  // PPO only

    void validate() const {
        if (!(eps_low > 0.0) || !(eps_high >= eps_low) || !(symmetric_eps > 0.0))
            throw ConfigError("ClipConfig: need 0 < eps_low <= eps_high and symmetric_eps > 0");
    }
};

enum class LossNormalization { ResponseLevel, TokenLevel };

struct RolloutGroup {
    std::string query_id;
    std::vector<Rollout> rollouts;
    std::vector<double> advantages;  // one per rollout, shared by its tokens
    bool degenerate = false;
};

struct ObjectiveReport {
    double value = 0.0;
    std::vector<double> grad;
    double clip_fraction_low = 0.0;
    double clip_fraction_high = 0.0;
    double mean_ratio = 0.0;
    double mean_entropy = 0.0;
    double mean_kl = 0.0;
};

// Per-token clipped surrogate term and its gradient coefficient (the factor
// multiplying advantage * ratio * grad logpi). Shared by GRPO and PPO.
struct ClippedTerm {
    double value = 0.0;
    bool grad_flows = false;
};

inline ClippedTerm clipped_token_objective(double ratio, double advantage, double eps_low,
                                           double eps_high) {
    const double lo = 1.0 - eps_low;
    const double hi = 1.0 + eps_high;
    const double clipped = std::min(std::max(ratio, lo), hi);
    const double unclipped_term = ratio * advantage;
    const double clipped_term = clipped * advantage;
    // min picks the unclipped branch (ties included) -> d(ratio)/dtheta
    // flows; a saturated clip branch contributes zero gradient.
    return {std::min(unclipped_term, clipped_term),
            advantage != 0.0 && unclipped_term <= clipped_term};
}

namespace detail {

// Walks (context, token, old_logprob, rollout index) over a rollout.
template <typename Fn>
inline void for_each_token(const Rollout& r, int window, Fn&& fn) {
    std::vector<int> history = r.prompt_ids;
    for (std::size_t t = 0; t < r.token_ids.size(); ++t) {
        fn(context_window(history, window), r.token_ids[t], r.old_logprobs[t]);
        history.push_back(r.token_ids[t]);
    }
}

inline void check_fresh(const PolicyParams& old, const Rollout& r) {
    for_each_token(r, old.dims.window, [&](const std::vector<int>& ctx, int tok, double stored) {
        double lp = token_logprob(old, ctx, tok);
        if (std::abs(lp - stored) > 1e-9)
            throw StaleRollouts("rollout old_logprobs do not reproduce under pi_old (query " +
                                r.query_id + ")");
    });
}

inline double entropy_from_logprobs(std::span<const double> lp) {
    double h = 0.0;
    for (double l : lp) h -= std::exp(l) * l;
    return h;
}

}  // namespace detail

// Clipped surrogate over groups of standardized-advantage rollouts.
// KL term is NOT included here; see kl_penalty.
inline ObjectiveReport grpo_objective(const PolicyParams& params, const PolicyParams& old,
                                      std::span<const RolloutGroup> groups,
                                      const ClipConfig& clip, LossNormalization normalization,
                                      bool check_freshness = true) {
    clip.validate();
    if (groups.empty()) throw EmptyBatch("grpo_objective: no groups");

    // Token-level normalization counts every supplied token; response-level
    // averages over the responses of non-degenerate groups only, so a
    // force-included zero-advantage group leaves the response-level result
    // untouched.
    std::size_t total_tokens = 0, total_responses = 0;
    for (const auto& g : groups) {
        for (const auto& r : g.rollouts) {
            if (check_freshness) detail::check_fresh(old, r);
            total_tokens += r.token_ids.size();
            if (!g.degenerate) ++total_responses;
        }
    }
    if (total_tokens == 0) throw EmptyBatch("grpo_objective: zero tokens");
    if (total_responses == 0) total_responses = 1;  // all-degenerate batch; value is 0 anyway

    ObjectiveReport rep;
    rep.grad.assign(static_cast<std::size_t>(params.dims.theta_dim()), 0.0);
    const double lo = 1.0 - clip.eps_low;
    const double hi = 1.0 + clip.eps_high;
    std::size_t n_low = 0, n_high = 0;
    double ratio_sum = 0.0, entropy_sum = 0.0;

    for (const auto& g : groups) {
        for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
            const Rollout& r = g.rollouts[i];
            const double adv = g.advantages.at(i);
            const double w = normalization == LossNormalization::TokenLevel
                                 ? 1.0 / static_cast<double>(total_tokens)
                                 : 1.0 / (static_cast<double>(total_responses) *
                                          static_cast<double>(r.token_ids.size()));
            detail::for_each_token(r, params.dims.window,
                                   [&](const std::vector<int>& ctx, int tok, double old_lp) {
                auto f = forward(params, ctx);
                auto lp = log_softmax(f.logits);
                const double ratio = std::exp(lp[static_cast<std::size_t>(tok)] - old_lp);
                ratio_sum += ratio;
                entropy_sum += detail::entropy_from_logprobs(lp);
                if (ratio < lo) ++n_low;
                if (ratio > hi) ++n_high;

                auto term = clipped_token_objective(ratio, adv, clip.eps_low, clip.eps_high);
                rep.value += w * term.value;
                const double coeff = term.grad_flows ? w * adv * ratio : 0.0;
                if (coeff != 0.0) {
                    std::vector<double> dlogits(lp.size());
                    for (std::size_t v = 0; v < lp.size(); ++v)
                        dlogits[v] = -coeff * std::exp(lp[v]);
                    dlogits[static_cast<std::size_t>(tok)] += coeff;
                    backprop_logits(params, f, dlogits, rep.grad);
                }
            });
        }
    }
    rep.clip_fraction_low = static_cast<double>(n_low) / static_cast<double>(total_tokens);
    rep.clip_fraction_high = static_cast<double>(n_high) / static_cast<double>(total_tokens);
    rep.mean_ratio = ratio_sum / static_cast<double>(total_tokens);
    rep.mean_entropy = entropy_sum / static_cast<double>(total_tokens);
    return rep;
}

// beta * mean per-token exact full-vocab KL(pi_theta || pi_ref) over the
// rollouts' contexts, with gradient. This is the penalty contribution to be
// SUBTRACTED from the maximized objective. beta = 0 returns exact zeros.
inline ObjectiveReport kl_penalty(const PolicyParams& params, const PolicyParams& ref,
                                  std::span<const Rollout> rollouts, double beta) {
    if (beta < 0.0) throw ConfigError("kl_penalty: beta must be >= 0");
    ObjectiveReport rep;
    rep.grad.assign(static_cast<std::size_t>(params.dims.theta_dim()), 0.0);
    if (beta == 0.0) return rep;

    std::size_t total_tokens = 0;
    for (const auto& r : rollouts) total_tokens += r.token_ids.size();
    if (total_tokens == 0) return rep;
    const double w = beta / static_cast<double>(total_tokens);

    double kl_sum = 0.0;
    for (const auto& r : rollouts) {
        detail::for_each_token(r, params.dims.window,
                               [&](const std::vector<int>& ctx, int, double) {
            auto f = forward(params, ctx);
            auto lp = log_softmax(f.logits);
            auto lq = log_softmax(logits(ref, ctx));
            double kl = 0.0;
            for (std::size_t v = 0; v < lp.size(); ++v)
                kl += std::exp(lp[v]) * (lp[v] - lq[v]);
            kl_sum += kl;
            // dKL/dz_j = p_j * ((logp_j - logq_j) - KL)
            std::vector<double> dlogits(lp.size());
            for (std::size_t v = 0; v < lp.size(); ++v)
                dlogits[v] = w * std::exp(lp[v]) * ((lp[v] - lq[v]) - kl);
            backprop_logits(params, f, dlogits, rep.grad);
        });
    }
    rep.mean_kl = kl_sum / static_cast<double>(total_tokens);
    rep.value = beta * rep.mean_kl;
    return rep;
}

// Discounted Monte-Carlo return targets; terminal reward only.
inline std::vector<double> discounted_returns(const Rollout& r, double gamma) {
    std::vector<double> ret(r.token_ids.size(), 0.0);
    double running = 0.0;
    for (std::size_t t = r.token_ids.size(); t-- > 0;) {
        double step_reward = (t + 1 == r.token_ids.size()) ? r.reward : 0.0;
        running = step_reward + gamma * running;
        ret[t] = running;
    }
    return ret;
}

// Symmetric-clip PPO surrogate with per-token GAE advantages, averaged over
// all tokens. Gradient covers the policy parameters only.
inline ObjectiveReport ppo_objective(const PolicyParams& params, const PolicyParams& old,
                                     const CriticParams& critic, std::span<const Rollout> rollouts,
                                     const ClipConfig& clip, bool check_freshness = true) {
    clip.validate();
    if (rollouts.empty()) throw EmptyBatch("ppo_objective: no rollouts");

    std::size_t total_tokens = 0;
    for (const auto& r : rollouts) {
        if (check_freshness) detail::check_fresh(old, r);
        total_tokens += r.token_ids.size();
    }
    if (total_tokens == 0) throw EmptyBatch("ppo_objective: zero tokens");

    ObjectiveReport rep;
    rep.grad.assign(static_cast<std::size_t>(params.dims.theta_dim()), 0.0);
    const double lo = 1.0 - clip.symmetric_eps;
    const double hi = 1.0 + clip.symmetric_eps;
    const double w = 1.0 / static_cast<double>(total_tokens);
    std::size_t n_low = 0, n_high = 0;
    double ratio_sum = 0.0, entropy_sum = 0.0;

    for (const auto& r : rollouts) {
        // V(s_t) for each prefix state, terminal bootstrap 0.
        std::vector<double> values;
        values.reserve(r.token_ids.size() + 1);
        std::vector<double> step_rewards(r.token_ids.size(), 0.0);
        if (!step_rewards.empty()) step_rewards.back() = r.reward;
        {
            std::vector<int> history = r.prompt_ids;
            for (int tok : r.token_ids) {
                values.push_back(critic_value(critic, context_window(history, critic.dims.window)));
                history.push_back(tok);
            }
            values.push_back(0.0);
        }
        auto adv = gae_advantages(step_rewards, values, critic.gamma, critic.lambda);

        std::size_t t = 0;
        detail::for_each_token(r, params.dims.window,
                               [&](const std::vector<int>& ctx, int tok, double old_lp) {
            auto f = forward(params, ctx);
            auto lp = log_softmax(f.logits);
            const double ratio = std::exp(lp[static_cast<std::size_t>(tok)] - old_lp);
            const double a = adv[t++];
            ratio_sum += ratio;
            entropy_sum += detail::entropy_from_logprobs(lp);
            if (ratio < lo) ++n_low;
            if (ratio > hi) ++n_high;

            auto term = clipped_token_objective(ratio, a, clip.symmetric_eps, clip.symmetric_eps);
            rep.value += w * term.value;
            const double coeff = term.grad_flows ? w * a * ratio : 0.0;
            if (coeff != 0.0) {
                std::vector<double> dlogits(lp.size());
                for (std::size_t v = 0; v < lp.size(); ++v)
                    dlogits[v] = -coeff * std::exp(lp[v]);
                dlogits[static_cast<std::size_t>(tok)] += coeff;
                backprop_logits(params, f, dlogits, rep.grad);
            }
        });
    }
    rep.clip_fraction_low = static_cast<double>(n_low) / static_cast<double>(total_tokens);
    rep.clip_fraction_high = static_cast<double>(n_high) / static_cast<double>(total_tokens);
    rep.mean_ratio = ratio_sum / static_cast<double>(total_tokens);
    rep.mean_entropy = entropy_sum / static_cast<double>(total_tokens);
    return rep;
}

struct CriticLossReport {
    double loss = 0.0;
    std::vector<double> grad;  // over critic weights
};

// Mean squared error against discounted Monte-Carlo returns.
inline CriticLossReport critic_loss(const CriticParams& critic, std::span<const Rollout> rollouts,
                                    double gamma) {
    if (rollouts.empty()) throw EmptyBatch("critic_loss: no rollouts");
    std::size_t total_tokens = 0;
    for (const auto& r : rollouts) total_tokens += r.token_ids.size();
    if (total_tokens == 0) throw EmptyBatch("critic_loss: zero tokens");

    CriticLossReport rep;
    rep.grad.assign(static_cast<std::size_t>(critic.dims.theta_dim()), 0.0);
    const double w = 1.0 / static_cast<double>(total_tokens);

    for (const auto& r : rollouts) {
        auto targets = discounted_returns(r, gamma);
        std::vector<int> history = r.prompt_ids;
        for (std::size_t t = 0; t < r.token_ids.size(); ++t) {
            auto f = critic_forward(critic, context_window(history, critic.dims.window));
            const double err = f.value - targets[t];
            rep.loss += w * err * err;
            critic_backprop(critic, f, w * 2.0 * err, rep.grad);
            history.push_back(r.token_ids[t]);
        }
    }
    return rep;
}

}  // namespace tinyrl

#pragma once

// Group sampling, verifiable reward scoring, overlong reward shaping and the
// dynamic-sampling batch filter.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tinyrl/advantage.hpp"
#include "tinyrl/answer.hpp"
#include "tinyrl/errors.hpp"
#include "tinyrl/objectives.hpp"
#include "tinyrl/policy.hpp"
#include "tinyrl/task.hpp"
#include "tinyrl/vocab.hpp"

namespace tinyrl {

struct SamplingConfig {
    int group_size = 8;  // G >= 2
    double temperature = 1.0;
    double top_p = 1.0;
    int max_response_len = 64;  // L_max
    int overlong_buffer = 16;   // L_cache, 0 disables shaping
    double overlong_penalty_max = 1.0;
    bool refill = true;  // re-sample to replace filtered groups
    int max_resample_rounds = 10;

    void validate() const {
        if (group_size < 2) throw ConfigError("SamplingConfig: group_size must be >= 2");
        if (max_response_len < 1) throw ConfigError("SamplingConfig: max_response_len must be >= 1");
        if (overlong_buffer < 0 || overlong_buffer >= max_response_len)
            throw ConfigError("SamplingConfig: need 0 <= overlong_buffer < max_response_len");
        if (overlong_penalty_max < 0.0)
            throw ConfigError("SamplingConfig: overlong_penalty_max must be >= 0");
    }
};

struct BatchReport {
    int groups_kept = 0;
    int groups_filtered_all_correct = 0;
    int groups_filtered_all_wrong = 0;
    int resample_rounds = 0;
    double mean_reward = 0.0;         // shaped, over all generated rollouts
    double mean_base_accuracy = 0.0;  // fraction correct over all generated rollouts
    double mean_length = 0.0;
    double truncation_rate = 0.0;
};

// Linear soft penalty in the buffer zone (L_max - L_cache, L_max]; truncated
// responses take the full penalty. Result clamped to [-1, 1].
inline double overlong_shaping(double base_reward, int length, bool truncated,
                               const SamplingConfig& cfg) {
    double penalty = 0.0;
    if (truncated) {
        penalty = cfg.overlong_penalty_max;
    } else if (cfg.overlong_buffer > 0) {
        const int zone_start = cfg.max_response_len - cfg.overlong_buffer;
        if (length > zone_start)
            penalty = cfg.overlong_penalty_max * static_cast<double>(length - zone_start) /
                      static_cast<double>(cfg.overlong_buffer);
    }
    return std::clamp(base_reward - penalty, -1.0, 1.0);
}

// G independent scored rollouts for one query. Advantages are not set here;
// dynamic_filter assigns them for kept groups.
inline RolloutGroup rollout_group(const PolicyParams& params, const Vocab& vocab,
                                  const TaskItem& query, const SamplingConfig& cfg,
                                  std::uint64_t rng_seed) {
    cfg.validate();
    if (!try_parse_answer(query.answer))
        throw GroundTruthUnparseable("rollout_group: unparseable ground truth for " + query.id);

    auto prompt = vocab.encode(query.prompt);
    RolloutGroup group;
    group.query_id = query.id;
    for (int i = 0; i < cfg.group_size; ++i) {
        Rollout r = sample_response(params, prompt, cfg.temperature, cfg.top_p,
                                    cfg.max_response_len, mix_seed(rng_seed, static_cast<std::uint64_t>(i)));
        r.query_id = query.id;
        std::string pred = extract_final_answer(vocab.decode(r.token_ids));
        VerifyOutcome v = reward(pred, query.answer);
        r.base_reward = static_cast<double>(v.reward);
        r.reward = overlong_shaping(r.base_reward, static_cast<int>(r.token_ids.size()),
                                    r.truncated, cfg);
        group.rollouts.push_back(std::move(r));
    }
    group.advantages.assign(group.rollouts.size(), 0.0);
    return group;
}

// Drops groups whose BASE rewards (pre-shaping accuracy) are all equal;
// kept groups get standardized advantages over their shaped rewards.
inline std::pair<std::vector<RolloutGroup>, BatchReport> dynamic_filter(
    std::vector<RolloutGroup> groups) {
    std::vector<RolloutGroup> kept;
    BatchReport rep;
    for (auto& g : groups) {
        const bool all_correct = std::all_of(g.rollouts.begin(), g.rollouts.end(),
                                             [](const Rollout& r) { return r.base_reward > 0; });
        const bool all_wrong = std::all_of(g.rollouts.begin(), g.rollouts.end(),
                                           [](const Rollout& r) { return r.base_reward < 0; });
        if (all_correct) {
            ++rep.groups_filtered_all_correct;
            continue;
        }
        if (all_wrong) {
            ++rep.groups_filtered_all_wrong;
            continue;
        }
        std::vector<double> rewards;
        rewards.reserve(g.rollouts.size());
        for (const auto& r : g.rollouts) rewards.push_back(r.reward);
        auto adv = group_advantages(rewards);
        g.advantages = std::move(adv.values);
        g.degenerate = adv.degenerate;
        ++rep.groups_kept;
        kept.push_back(std::move(g));
    }
    return {std::move(kept), rep};
}

// Samples groups over the (seeded, cyclic) query stream and filters until
// `target` kept groups are collected or the round budget runs out.
inline std::pair<std::vector<RolloutGroup>, BatchReport> fill_batch(
    const PolicyParams& params, const Vocab& vocab, std::span<const TaskItem> queries, int target,
    const SamplingConfig& cfg, std::uint64_t rng_seed) {
    cfg.validate();
    BatchReport rep;
    std::vector<RolloutGroup> kept;
    if (target == 0) return {kept, rep};
    if (queries.empty()) throw EmptyCorpus("fill_batch: empty query stream");

    std::vector<std::size_t> order(queries.size());
    std::iota(order.begin(), order.end(), 0);
    {
        Rng rng(mix_seed(rng_seed, 0x0c0ffee));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next_u64() % i)]);
    }

    double reward_sum = 0.0, length_sum = 0.0;
    std::size_t rollout_count = 0, truncated_count = 0, correct_count = 0, stream_pos = 0;
    const int rounds = cfg.refill ? cfg.max_resample_rounds : 1;

    for (int round = 0; round < rounds && static_cast<int>(kept.size()) < target; ++round) {
        ++rep.resample_rounds;
        const int want = target - static_cast<int>(kept.size());
        std::vector<RolloutGroup> fresh;
        for (int k = 0; k < want; ++k) {
            const TaskItem& q = queries[order[stream_pos % order.size()]];
            auto g = rollout_group(params, vocab, q, cfg, mix_seed(rng_seed, stream_pos));
            ++stream_pos;
            for (const auto& r : g.rollouts) {
                reward_sum += r.reward;
                length_sum += static_cast<double>(r.token_ids.size());
                if (r.truncated) ++truncated_count;
                if (r.base_reward > 0) ++correct_count;
                ++rollout_count;
            }
            fresh.push_back(std::move(g));
        }
        auto [fresh_kept, delta] = dynamic_filter(std::move(fresh));
        rep.groups_filtered_all_correct += delta.groups_filtered_all_correct;
        rep.groups_filtered_all_wrong += delta.groups_filtered_all_wrong;
        rep.groups_kept += delta.groups_kept;
        for (auto& g : fresh_kept) kept.push_back(std::move(g));
    }

    if (kept.empty())
        throw NoEffectiveGroups("fill_batch: no mixed-outcome groups after " +
                                std::to_string(rep.resample_rounds) + " rounds");
    if (rollout_count > 0) {
        rep.mean_reward = reward_sum / static_cast<double>(rollout_count);
        rep.mean_base_accuracy =
            static_cast<double>(correct_count) / static_cast<double>(rollout_count);
        rep.mean_length = length_sum / static_cast<double>(rollout_count);
        rep.truncation_rate =
            static_cast<double>(truncated_count) / static_cast<double>(rollout_count);
    }
    return {std::move(kept), rep};
}

}  // namespace tinyrl

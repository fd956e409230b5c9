#pragma once

// On-policy training loop: staged curriculum, dynamic-sampling batch fill,
// mini-batch gradient ascent against a frozen iteration-start snapshot,
// checkpointing, metrics, and greedy/sampled evaluation.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tinyrl/checkpoint.hpp"
#include "tinyrl/corpus.hpp"
#include "tinyrl/critic.hpp"
#include "tinyrl/errors.hpp"
#include "tinyrl/objectives.hpp"
#include "tinyrl/pipeline.hpp"
#include "tinyrl/rollout.hpp"
#include "tinyrl/task.hpp"
#include "tinyrl/vocab.hpp"

namespace tinyrl {

enum class Algorithm { GrpoToken, GrpoResponse, Ppo };

inline Algorithm algorithm_from_string(const std::string& s) {
    if (s == "grpo-token") return Algorithm::GrpoToken;
    if (s == "grpo-response") return Algorithm::GrpoResponse;
    if (s == "ppo") return Algorithm::Ppo;
    throw ConfigError("unknown algorithm: " + s);
}

enum class Optimizer { Sgd, Adam };

inline Optimizer optimizer_from_string(const std::string& s) {
    if (s == "sgd") return Optimizer::Sgd;
    if (s == "adam") return Optimizer::Adam;
    throw ConfigError("unknown optimizer: " + s);
}

// Adam moment state for one parameter vector; step() applies one ascent
// step along `grad` (pass the negated gradient for descent).
struct AdamState {
    std::vector<double> m, v;
    long t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& w, const std::vector<double>& grad, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            w[i] += lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
        }
    }
};

struct StageConfig {
    std::string corpus;  // file name within the data dir, or a label
    int iterations = 0;
    double gate_pass_at_1 = 0.0;  // > 0: advance early once greedy pass@1
                                  // on the stage corpus reaches the gate
};

struct TrainConfig {
    int train_batch_size = 16;  // groups per iteration
    int mini_batch_size = 4;    // groups per gradient step
    int updates_per_iteration = 16;
    double learning_rate = 1e-3;
    int max_seq_len = 64;
    double temperature = 1.0;
    double top_p = 1.0;
    int group_size = 8;
    Algorithm algorithm = Algorithm::GrpoToken;
    Optimizer optimizer = Optimizer::Sgd;
    double kl_beta = 0.0;
    ClipConfig clip;
    std::uint64_t seed = 1;
    bool dynamic_sampling = true;
    int overlong_buffer = 16;
    double overlong_penalty_max = 1.0;
    int max_resample_rounds = 10;
    int embed = 8;
    int hidden = 16;
    int window = 8;
    std::vector<StageConfig> stages;

    void validate() const {
        if (train_batch_size < 1 || mini_batch_size < 1 || updates_per_iteration < 1)
            throw ConfigError("TrainConfig: batch sizes and update count must be >= 1");
        if (train_batch_size % mini_batch_size != 0)
            throw ConfigError("TrainConfig: train_batch_size must be a multiple of mini_batch_size");
        if ((updates_per_iteration * mini_batch_size) % train_batch_size != 0)
            throw ConfigError(
                "TrainConfig: updates_per_iteration * mini_batch_size must be a whole number of "
                "passes over train_batch_size");
        if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be > 0");
        if (kl_beta < 0.0) throw ConfigError("TrainConfig: kl_beta must be >= 0");
        if (stages.empty()) throw ConfigError("TrainConfig: at least one stage required");
        for (const auto& s : stages)
            if (s.iterations < 1) throw ConfigError("TrainConfig: stage iterations must be >= 1");
        clip.validate();
        sampling().validate();
    }

    int epochs_per_batch() const {
        return updates_per_iteration * mini_batch_size / train_batch_size;
    }

    SamplingConfig sampling() const {
        SamplingConfig s;
        s.group_size = group_size;
        s.temperature = temperature;
        s.top_p = top_p;
        s.max_response_len = max_seq_len;
        s.overlong_buffer = overlong_buffer;
        s.overlong_penalty_max = overlong_penalty_max;
        s.refill = true;
        s.max_resample_rounds = max_resample_rounds;
        return s;
    }

    static TrainConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

inline TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    static const std::vector<std::string> known = {
        "train_batch_size", "mini_batch_size", "updates_per_iteration", "learning_rate",
        "max_seq_len", "temperature", "top_p", "group_size", "algorithm", "optimizer", "kl_beta",
        "eps_low", "eps_high", "symmetric_eps", "seed", "dynamic_sampling", "overlong_buffer",
        "overlong_penalty_max", "max_resample_rounds", "embed", "hidden", "window", "stages"};
    for (const auto& [key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("TrainConfig: unknown key '" + key + "'");

    c.train_batch_size = j.value("train_batch_size", c.train_batch_size);
    c.mini_batch_size = j.value("mini_batch_size", c.mini_batch_size);
    c.updates_per_iteration = j.value("updates_per_iteration", c.updates_per_iteration);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.temperature = j.value("temperature", c.temperature);
    c.top_p = j.value("top_p", c.top_p);
    c.group_size = j.value("group_size", c.group_size);
    if (j.contains("algorithm")) c.algorithm = algorithm_from_string(j["algorithm"]);
    if (j.contains("optimizer")) c.optimizer = optimizer_from_string(j["optimizer"]);
    c.kl_beta = j.value("kl_beta", c.kl_beta);
    c.clip.eps_low = j.value("eps_low", c.clip.eps_low);
    c.clip.eps_high = j.value("eps_high", c.clip.eps_high);
    c.clip.symmetric_eps = j.value("symmetric_eps", c.clip.symmetric_eps);
    c.seed = j.value("seed", c.seed);
    c.dynamic_sampling = j.value("dynamic_sampling", c.dynamic_sampling);
    c.overlong_buffer = j.value("overlong_buffer", c.overlong_buffer);
    c.overlong_penalty_max = j.value("overlong_penalty_max", c.overlong_penalty_max);
    c.max_resample_rounds = j.value("max_resample_rounds", c.max_resample_rounds);
    c.embed = j.value("embed", c.embed);
    c.hidden = j.value("hidden", c.hidden);
    c.window = j.value("window", c.window);
    if (j.contains("stages")) {
        for (const auto& sj : j["stages"]) {
            StageConfig s;
            s.corpus = sj.value("corpus", "");
            s.iterations = sj.value("iterations", 0);
            s.gate_pass_at_1 = sj.value("gate_pass_at_1", 0.0);
            c.stages.push_back(std::move(s));
        }
    }
    return c;
}

inline nlohmann::json TrainConfig::to_json() const {
    nlohmann::json stages_j = nlohmann::json::array();
    for (const auto& s : stages)
        stages_j.push_back({{"corpus", s.corpus},
                            {"iterations", s.iterations},
                            {"gate_pass_at_1", s.gate_pass_at_1}});
    const char* algo = algorithm == Algorithm::GrpoToken      ? "grpo-token"
                       : algorithm == Algorithm::GrpoResponse ? "grpo-response"
                                                              : "ppo";
    return {{"train_batch_size", train_batch_size},
            {"mini_batch_size", mini_batch_size},
            {"updates_per_iteration", updates_per_iteration},
            {"learning_rate", learning_rate},
            {"max_seq_len", max_seq_len},
            {"temperature", temperature},
            {"top_p", top_p},
            {"group_size", group_size},
            {"algorithm", algo},
            {"optimizer", optimizer == Optimizer::Adam ? "adam" : "sgd"},
            {"kl_beta", kl_beta},
            {"eps_low", clip.eps_low},
            {"eps_high", clip.eps_high},
            {"symmetric_eps", clip.symmetric_eps},
            {"seed", seed},
            {"dynamic_sampling", dynamic_sampling},
            {"overlong_buffer", overlong_buffer},
            {"overlong_penalty_max", overlong_penalty_max},
            {"max_resample_rounds", max_resample_rounds},
            {"embed", embed},
            {"hidden", hidden},
            {"window", window},
            {"stages", stages_j}};
}

struct MetricsRow {
    int iteration = 0;
    int stage = 0;
    double objective = 0.0;
    double mean_reward = 0.0;
    double mean_base_accuracy = 0.0;
    double mean_entropy = 0.0;
    double clip_frac_low = 0.0;
    double clip_frac_high = 0.0;
    double mean_kl = 0.0;
    double mean_ratio = 0.0;
    int groups_kept = 0;
    int groups_filtered_all_correct = 0;
    int groups_filtered_all_wrong = 0;
    int resample_rounds = 0;
    double mean_length = 0.0;
    double truncation_rate = 0.0;
};

inline const char* kMetricsHeader =
    "iteration,stage,objective,mean_reward,mean_base_accuracy,mean_entropy,clip_frac_low,"
    "clip_frac_high,mean_kl,mean_ratio,groups_kept,groups_filtered_all_correct,"
    "groups_filtered_all_wrong,resample_rounds,mean_length,truncation_rate";

inline std::string format_metrics_row(const MetricsRow& m) {
    char buf[640];
    std::snprintf(buf, sizeof buf,
                  "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%d,%d,%.17g,%.17g",
                  m.iteration, m.stage, m.objective, m.mean_reward, m.mean_base_accuracy,
                  m.mean_entropy, m.clip_frac_low, m.clip_frac_high, m.mean_kl, m.mean_ratio,
                  m.groups_kept, m.groups_filtered_all_correct, m.groups_filtered_all_wrong,
                  m.resample_rounds, m.mean_length, m.truncation_rate);
    return buf;
}

struct DecodeMode {
    bool greedy = true;
    int k = 1;  // samples per item when not greedy
    double temperature = 1.0;
    double top_p = 1.0;
    std::uint64_t seed = 0;
};

struct EvalResult {
    std::string dataset_name;
    double pass_at_1 = 0.0;
    std::map<int, double> per_difficulty;
    int n_items = 0;
    std::string decode_mode;

    nlohmann::json to_json() const {
        nlohmann::json per = nlohmann::json::object();
        for (const auto& [lvl, acc] : per_difficulty) per[std::to_string(lvl)] = acc;
        return {{"dataset_name", dataset_name},
                {"pass_at_1", pass_at_1},
                {"per_difficulty", per},
                {"n_items", n_items},
                {"decode_mode", decode_mode}};
    }
};

inline EvalResult evaluate(const PolicyParams& params, const Vocab& vocab,
                           std::span<const TaskItem> corpus, const DecodeMode& decode,
                           int max_len = 64, const std::string& dataset_name = "eval") {
    if (corpus.empty()) throw EmptyCorpus("evaluate: empty corpus");
    EvalResult res;
    res.dataset_name = dataset_name;
    res.n_items = static_cast<int>(corpus.size());
    res.decode_mode = decode.greedy ? "greedy" : ("sampled-" + std::to_string(decode.k));

    std::map<int, double> level_sum;
    std::map<int, int> level_count;
    double total = 0.0;
    for (std::size_t idx = 0; idx < corpus.size(); ++idx) {
        const TaskItem& it = corpus[idx];
        auto prompt = vocab.encode(it.prompt);
        double item_acc = 0.0;
        const int k = decode.greedy ? 1 : decode.k;
        for (int s = 0; s < k; ++s) {
            const double temp = decode.greedy ? 1e-9 : decode.temperature;
            Rollout r = sample_response(params, prompt, temp, decode.greedy ? 1.0 : decode.top_p,
                                        max_len,
                                        mix_seed(decode.seed, mix_seed(idx, static_cast<std::uint64_t>(s))));
            std::string pred = extract_final_answer(vocab.decode(r.token_ids));
            if (reward(pred, it.answer).reward == 1) item_acc += 1.0;
        }
        item_acc /= static_cast<double>(k);
        total += item_acc;
        level_sum[it.difficulty] += item_acc;
        level_count[it.difficulty] += 1;
    }
    res.pass_at_1 = total / static_cast<double>(corpus.size());
    for (const auto& [lvl, n] : level_count) res.per_difficulty[lvl] = level_sum[lvl] / n;
    return res;
}

struct TrainResult {
    PolicyParams params;
    std::vector<MetricsRow> history;
};

namespace detail {

// Batch assembly without the dynamic filter: every group is kept and
// degenerate groups carry zero advantages.
inline std::pair<std::vector<RolloutGroup>, BatchReport> fill_batch_unfiltered(
    const PolicyParams& params, const Vocab& vocab, std::span<const TaskItem> queries, int target,
    const SamplingConfig& cfg, std::uint64_t rng_seed) {
    BatchReport rep;
    std::vector<RolloutGroup> groups;
    if (target == 0) return {groups, rep};
    if (queries.empty()) throw EmptyCorpus("fill_batch_unfiltered: empty query stream");

    std::vector<std::size_t> order(queries.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(rng_seed, 0x0c0ffee));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next_u64() % i)]);

    rep.resample_rounds = 1;
    double reward_sum = 0.0, length_sum = 0.0;
    std::size_t rollout_count = 0, truncated_count = 0, correct_count = 0;
    for (int k = 0; k < target; ++k) {
        const TaskItem& q = queries[order[static_cast<std::size_t>(k) % order.size()]];
        auto g = rollout_group(params, vocab, q, cfg, mix_seed(rng_seed, static_cast<std::uint64_t>(k)));
        std::vector<double> rewards;
        for (const auto& r : g.rollouts) {
            rewards.push_back(r.reward);
            reward_sum += r.reward;
            length_sum += static_cast<double>(r.token_ids.size());
            if (r.truncated) ++truncated_count;
            if (r.base_reward > 0) ++correct_count;
            ++rollout_count;
        }
        auto adv = group_advantages(rewards);
        g.advantages = std::move(adv.values);
        g.degenerate = adv.degenerate;
        ++rep.groups_kept;
        groups.push_back(std::move(g));
    }
    if (rollout_count > 0) {
        rep.mean_reward = reward_sum / static_cast<double>(rollout_count);
        rep.mean_base_accuracy =
            static_cast<double>(correct_count) / static_cast<double>(rollout_count);
        rep.mean_length = length_sum / static_cast<double>(rollout_count);
        rep.truncation_rate =
            static_cast<double>(truncated_count) / static_cast<double>(rollout_count);
    }
    return {std::move(groups), rep};
}

}  // namespace detail

// Full training run. stage_corpora[i] backs config.stages[i]. Writes
// metrics.csv, timing.csv (wall time lives there so metrics.csv is
// byte-reproducible), per-iteration checkpoint_latest.bin and a final
// checkpoint_final.bin into out_dir; out_dir empty disables file output.
inline TrainResult train(const TrainConfig& config,
                         const std::vector<std::vector<TaskItem>>& stage_corpora,
                         const std::string& out_dir, const Vocab& vocab) {
    config.validate();
    if (stage_corpora.size() != config.stages.size())
        throw ConfigError("train: stage_corpora count does not match config.stages");
    for (const auto& c : stage_corpora)
        if (c.empty()) throw EmptyCorpus("train: empty stage corpus");

    PolicyDims dims{vocab.size(), config.embed, config.hidden, config.window};
    PolicyParams params = init_params(dims, config.seed);
    const PolicyParams reference = params;  // pi_ref for the KL penalty
    CriticParams critic = init_critic({vocab.size(), config.embed, config.hidden, config.window},
                                      config.seed);
    const SamplingConfig scfg = config.sampling();

    std::ofstream metrics_os, timing_os;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        metrics_os.open(out_dir + "/metrics.csv", std::ios::trunc);
        timing_os.open(out_dir + "/timing.csv", std::ios::trunc);
        metrics_os << kMetricsHeader << '\n';
        timing_os << "iteration,wall_ms\n";
        std::ofstream(out_dir + "/vocab.json") << vocab.to_json().dump() << '\n';
        std::ofstream(out_dir + "/config.json") << config.to_json().dump(2) << '\n';
    }

    AdamState policy_adam(params.w.size());
    AdamState critic_adam(critic.w.size());
    // Ascent step on the policy (or descent on the critic via negated grad).
    auto apply_policy = [&](const std::vector<double>& grad) {
        if (config.optimizer == Optimizer::Adam) policy_adam.step(params.w, grad, config.learning_rate);
        else
            for (std::size_t i = 0; i < params.w.size(); ++i)
                params.w[i] += config.learning_rate * grad[i];
    };
    auto apply_critic = [&](std::vector<double> grad) {
        for (double& g : grad) g = -g;
        if (config.optimizer == Optimizer::Adam) critic_adam.step(critic.w, grad, config.learning_rate);
        else
            for (std::size_t i = 0; i < critic.w.size(); ++i)
                critic.w[i] += config.learning_rate * grad[i];
    };

    TrainResult result{params, {}};
    int global_iter = 0;
    for (std::size_t stage = 0; stage < config.stages.size(); ++stage) {
        const auto& corpus = stage_corpora[stage];
        for (int it = 0; it < config.stages[stage].iterations; ++it) {
            auto t0 = std::chrono::steady_clock::now();
            const PolicyParams old = params;
            const std::uint64_t iter_seed = mix_seed(config.seed, static_cast<std::uint64_t>(global_iter));

            auto [groups, breport] =
                config.dynamic_sampling
                    ? fill_batch(old, vocab, corpus, config.train_batch_size, scfg, iter_seed)
                    : detail::fill_batch_unfiltered(old, vocab, corpus, config.train_batch_size,
                                                    scfg, iter_seed);

            // Canonical order, then a seeded shuffle, decoupling mini-batch
            // contents from rollout scheduling.
            std::sort(groups.begin(), groups.end(),
                      [](const RolloutGroup& a, const RolloutGroup& b) {
                          return a.query_id < b.query_id;
                      });
            {
                Rng rng(mix_seed(iter_seed, 0x5f));
                for (std::size_t i = groups.size(); i > 1; --i)
                    std::swap(groups[i - 1], groups[static_cast<std::size_t>(rng.next_u64() % i)]);
            }

            // Accuracy over every rollout generated this iteration, including
            // groups the dynamic filter dropped; kept-only accuracy would be
            // biased (mixed groups are never all-correct).
            const double batch_accuracy = breport.mean_base_accuracy;

            const int n_mini = (static_cast<int>(groups.size()) + config.mini_batch_size - 1) /
                               config.mini_batch_size;
            ObjectiveReport last_rep;
            double last_kl = 0.0;
            for (int u = 0; u < config.updates_per_iteration; ++u) {
                const int mb = u % n_mini;
                const std::size_t begin = static_cast<std::size_t>(mb * config.mini_batch_size);
                const std::size_t end =
                    std::min(groups.size(), begin + static_cast<std::size_t>(config.mini_batch_size));
                std::span<const RolloutGroup> mini(groups.data() + begin, end - begin);

                if (config.algorithm == Algorithm::Ppo) {
                    std::vector<Rollout> flat;
                    for (const auto& g : mini)
                        for (const auto& r : g.rollouts) flat.push_back(r);
                    last_rep = ppo_objective(params, old, critic, flat, config.clip);
                    auto closs = critic_loss(critic, flat, critic.gamma);
                    apply_critic(closs.grad);
                    apply_policy(last_rep.grad);
                } else {
                    const auto norm = config.algorithm == Algorithm::GrpoToken
                                          ? LossNormalization::TokenLevel
                                          : LossNormalization::ResponseLevel;
                    last_rep = grpo_objective(params, old, mini, config.clip, norm);
                    if (config.kl_beta > 0.0) {
                        std::vector<Rollout> flat;
                        for (const auto& g : mini)
                            for (const auto& r : g.rollouts) flat.push_back(r);
                        auto kl = kl_penalty(params, reference, flat, config.kl_beta);
                        last_kl = kl.mean_kl;
                        std::vector<double> combined(params.w.size());
                        for (std::size_t i = 0; i < combined.size(); ++i)
                            combined[i] = last_rep.grad[i] - kl.grad[i];
                        apply_policy(combined);
                    } else {
                        apply_policy(last_rep.grad);
                    }
                }
                if (!params.finite())
                    throw NonFiniteParams("train: non-finite parameters at iteration " +
                                          std::to_string(global_iter) + ", update " +
                                          std::to_string(u));
            }

            MetricsRow row;
            row.iteration = global_iter;
            row.stage = static_cast<int>(stage);
            row.objective = last_rep.value;
            row.mean_reward = breport.mean_reward;
            row.mean_base_accuracy = batch_accuracy;
            row.mean_entropy = last_rep.mean_entropy;
            row.clip_frac_low = last_rep.clip_fraction_low;
            row.clip_frac_high = last_rep.clip_fraction_high;
            row.mean_kl = last_kl;
            row.mean_ratio = last_rep.mean_ratio;
            row.groups_kept = breport.groups_kept;
            row.groups_filtered_all_correct = breport.groups_filtered_all_correct;
            row.groups_filtered_all_wrong = breport.groups_filtered_all_wrong;
            row.resample_rounds = breport.resample_rounds;
            row.mean_length = breport.mean_length;
            row.truncation_rate = breport.truncation_rate;
            result.history.push_back(row);

            if (metrics_os.is_open()) {
                metrics_os << format_metrics_row(row) << '\n';
                auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::steady_clock::now() - t0)
                              .count();
                timing_os << global_iter << ',' << ms << '\n';
                save_checkpoint(params, out_dir + "/checkpoint_latest.bin");
            }

            ++global_iter;
            const double gate = config.stages[stage].gate_pass_at_1;
            if (gate > 0.0 &&
                evaluate(params, vocab, corpus, DecodeMode{}, config.max_seq_len).pass_at_1 >= gate)
                break;
        }
    }

    result.params = params;
    if (!out_dir.empty()) save_checkpoint(params, out_dir + "/checkpoint_final.bin");
    return result;
}

}  // namespace tinyrl

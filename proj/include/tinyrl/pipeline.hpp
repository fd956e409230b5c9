#pragma once

// Corpus curation: dedup, noise filtering, verification filtering,
// rollout-accuracy difficulty grading, and curriculum stage splits.

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <numeric>
#include <regex>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "tinyrl/answer.hpp"
#include "tinyrl/errors.hpp"
#include "tinyrl/rollout.hpp"
#include "tinyrl/task.hpp"

namespace tinyrl {

struct PipelineStats {
    std::size_t input_count = 0;
    std::size_t dedup_removed = 0;
    std::size_t noise_removed = 0;
    std::size_t unverifiable_removed = 0;
    std::map<int, std::size_t> graded_counts;

    nlohmann::json to_json() const {
        nlohmann::json levels = nlohmann::json::object();
        for (const auto& [lvl, n] : graded_counts) levels[std::to_string(lvl)] = n;
        return {{"input_count", input_count},
                {"dedup_removed", dedup_removed},
                {"noise_removed", noise_removed},
                {"unverifiable_removed", unverifiable_removed},
                {"graded_counts", levels}};
    }
};

// Lowercased, punctuation-stripped, whitespace-collapsed prompt key.
inline std::string normalize_prompt(const std::string& s) {
    std::string out;
    bool pending_space = false;
    for (char c : s) {
        unsigned char u = static_cast<unsigned char>(c);
        if (std::isspace(u)) {
            pending_space = !out.empty();
        } else if (std::ispunct(u)) {
            // dropped
        } else {
            if (pending_space) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(u)));
        }
    }
    return out;
}

// Exact-after-normalization dedup; first occurrence wins, order preserved.
inline std::pair<std::vector<TaskItem>, std::size_t> dedup(std::vector<TaskItem> items) {
    std::unordered_set<std::string> seen;
    std::vector<TaskItem> out;
    std::size_t removed = 0;
    for (auto& it : items) {
        if (seen.insert(normalize_prompt(it.prompt)).second) out.push_back(std::move(it));
        else ++removed;
    }
    return {std::move(out), removed};
}

// Versioned noise-pattern list (see README). Bump the version when the
// pattern set changes.
inline constexpr const char* kNoisePatternVersion = "1";

inline const std::vector<std::regex>& noise_patterns() {
    static const std::vector<std::regex> patterns = [] {
        std::vector<std::regex> v;
        auto flags = std::regex::ECMAScript | std::regex::icase;
        v.emplace_back(R"([a-z][a-z0-9+.\-]*://)", flags);       // scheme://
        v.emplace_back(R"((^|[^a-z0-9])www\.)", flags);          // bare www.
        v.emplace_back(R"(!\[[^\]]*\]\([^)]*\))", flags);        // markdown image
        v.emplace_back(R"(<img\b)", flags);                      // html img tag
        return v;
    }();
    return patterns;
}

inline bool is_noisy(const TaskItem& it) {
    for (const auto& re : noise_patterns())
        if (std::regex_search(it.prompt, re) || std::regex_search(it.answer, re)) return true;
    return false;
}

inline std::pair<std::vector<TaskItem>, std::size_t> noise_filter(std::vector<TaskItem> items) {
    std::vector<TaskItem> out;
    std::size_t removed = 0;
    for (auto& it : items) {
        if (is_noisy(it)) ++removed;
        else out.push_back(std::move(it));
    }
    return {std::move(out), removed};
}

// Keeps items whose answer parses; symbolic atoms longer than 16 characters
// count as unidentifiable and are dropped.
inline std::pair<std::vector<TaskItem>, std::size_t> verify_filter(std::vector<TaskItem> items) {
    std::vector<TaskItem> out;
    std::size_t removed = 0;
    for (auto& it : items) {
        auto parsed = try_parse_answer(it.answer);
        const bool ok = parsed && (parsed->numeric() || parsed->atom.size() <= 16);
        if (ok) out.push_back(std::move(it));
        else ++removed;
    }
    return {std::move(out), removed};
}

// Full curation pass: dedup, then noise filter, then verification filter.
inline std::pair<std::vector<TaskItem>, PipelineStats> curate(std::vector<TaskItem> items) {
    PipelineStats stats;
    stats.input_count = items.size();
    auto [d, dn] = dedup(std::move(items));
    stats.dedup_removed = dn;
    auto [n, nn] = noise_filter(std::move(d));
    stats.noise_removed = nn;
    auto [v, vn] = verify_filter(std::move(n));
    stats.unverifiable_removed = vn;
    return {std::move(v), stats};
}

// Quintile difficulty levels from per-item accuracies: rank by accuracy
// descending (ties by id ascending), top 20% -> level 1 ... bottom 20% ->
// level 5. Every item gets a level, including accuracy 0 and 1.
inline std::vector<TaskItem> grade_by_accuracy(
    std::vector<TaskItem> items, const std::function<double(const TaskItem&)>& accuracy) {
    if (items.empty()) throw EmptyCorpus("grade_by_accuracy: empty corpus");
    const std::size_t n = items.size();
    std::vector<std::pair<double, std::size_t>> ranked(n);
    for (std::size_t i = 0; i < n; ++i) ranked[i] = {accuracy(items[i]), i};
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return items[a.second].id < items[b.second].id;
    });
    for (std::size_t rank = 0; rank < n; ++rank) {
        int level = static_cast<int>(std::min<std::size_t>(4, rank * 5 / n)) + 1;
        items[ranked[rank].second].difficulty = level;
    }
    return items;
}

// Accuracy measured by sampling n_rollouts responses per item under the
// grader checkpoint.
inline std::vector<TaskItem> grade_difficulty(std::vector<TaskItem> items,
                                              const PolicyParams& grader_params,
                                              const Vocab& vocab, int n_rollouts,
                                              const SamplingConfig& cfg, std::uint64_t rng_seed) {
    if (n_rollouts < 4) throw ConfigError("grade_difficulty: n_rollouts must be >= 4");
    auto accuracy = [&](const TaskItem& it) {
        auto prompt = vocab.encode(it.prompt);
        std::uint64_t item_seed = mix_seed(rng_seed, std::hash<std::string>{}(it.id));
        int correct = 0;
        for (int k = 0; k < n_rollouts; ++k) {
            Rollout r = sample_response(grader_params, prompt, cfg.temperature, cfg.top_p,
                                        cfg.max_response_len,
                                        mix_seed(item_seed, static_cast<std::uint64_t>(k)));
            std::string pred = extract_final_answer(vocab.decode(r.token_ids));
            if (reward(pred, it.answer).reward == 1) ++correct;
        }
        return static_cast<double>(correct) / static_cast<double>(n_rollouts);
    };
    return grade_by_accuracy(std::move(items), accuracy);
}

struct StageSpec {
    std::string name;
    std::map<int, double> level_fractions;  // level -> fraction, sums to 1
    int count = 0;                          // items requested for the stage
};

inline std::vector<StageSpec> default_stages(int per_stage_count) {
    return {
        {"stage1", {{1, 1.0 / 3}, {2, 1.0 / 3}, {3, 1.0 / 3}}, per_stage_count},
        {"stage2", {{3, 1.0 / 3}, {4, 1.0 / 3}, {5, 1.0 / 3}}, per_stage_count},
    };
}

// Seeded sampling without replacement within each difficulty level.
inline std::vector<std::vector<TaskItem>> stage_split(std::span<const TaskItem> items,
                                                      std::span<const StageSpec> stages,
                                                      std::uint64_t rng_seed) {
    std::map<int, std::vector<TaskItem>> by_level;
    for (const auto& it : items) {
        if (it.difficulty < 1 || it.difficulty > 5)
            throw DataError("stage_split: item without difficulty: " + it.id);
        by_level[it.difficulty].push_back(it);
    }

    std::vector<std::vector<TaskItem>> out;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        const StageSpec& spec = stages[s];
        double frac_sum = 0.0;
        for (const auto& [lvl, f] : spec.level_fractions) frac_sum += f;
        if (std::abs(frac_sum - 1.0) > 1e-9)
            throw ConfigError("stage_split: fractions for " + spec.name + " do not sum to 1");

        // Largest-remainder allocation of spec.count across levels.
        std::vector<std::pair<int, double>> exact;
        int allocated = 0;
        std::vector<std::pair<int, int>> counts;
        for (const auto& [lvl, f] : spec.level_fractions) {
            double e = f * spec.count;
            int base = static_cast<int>(e);
            counts.emplace_back(lvl, base);
            exact.emplace_back(lvl, e - base);
            allocated += base;
        }
        std::sort(exact.begin(), exact.end(),
                  [](const auto& a, const auto& b) { return a.second > b.second; });
        for (int r = 0; allocated < spec.count; ++allocated, ++r) {
            int lvl = exact[static_cast<std::size_t>(r) % exact.size()].first;
            for (auto& [l, c] : counts)
                if (l == lvl) ++c;
        }

        std::vector<TaskItem> stage_items;
        for (const auto& [lvl, c] : counts) {
            auto pool = by_level[lvl];  // copy; stages sample independently
            if (static_cast<int>(pool.size()) < c)
                throw InsufficientItems("stage_split: stage " + spec.name + " needs " +
                                        std::to_string(c) + " items of level " +
                                        std::to_string(lvl) + ", have " +
                                        std::to_string(pool.size()));
            Rng rng(mix_seed(rng_seed, mix_seed(s, static_cast<std::uint64_t>(lvl))));
            for (std::size_t i = pool.size(); i > 1; --i)
                std::swap(pool[i - 1], pool[static_cast<std::size_t>(rng.next_u64() % i)]);
            for (int i = 0; i < c; ++i) stage_items.push_back(pool[static_cast<std::size_t>(i)]);
        }
        out.push_back(std::move(stage_items));
    }
    return out;
}

}  // namespace tinyrl

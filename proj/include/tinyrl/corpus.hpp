#pragma once

// Seeded synthetic arithmetic corpora ("3+5=" style), the desk-scale stand-in
// for a scraped math corpus. Answers always verify.

#include <cstdio>
#include <string>
#include <vector>

#include "tinyrl/errors.hpp"
#include "tinyrl/policy.hpp"
#include "tinyrl/task.hpp"

namespace tinyrl {

enum class TaskFamily { Add1Digit, Add2Digit, Sub, Mul1Digit, Mixed };

inline TaskFamily task_family_from_string(const std::string& s) {
    if (s == "add-1digit") return TaskFamily::Add1Digit;
    if (s == "add-2digit") return TaskFamily::Add2Digit;
    if (s == "sub") return TaskFamily::Sub;
    if (s == "mul-1digit") return TaskFamily::Mul1Digit;
    if (s == "mixed") return TaskFamily::Mixed;
    throw ConfigError("unknown task family: " + s);
}

namespace detail {

struct SynthProblem {
    std::string prompt;
    long long answer;
};

inline SynthProblem make_problem(TaskFamily fam, Rng& rng) {
    auto pick = [&](int lo, int hi) {
        return lo + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(hi - lo + 1));
    };
    TaskFamily f = fam;
    if (f == TaskFamily::Mixed) {
        static constexpr TaskFamily kAll[] = {TaskFamily::Add1Digit, TaskFamily::Add2Digit,
                                              TaskFamily::Sub, TaskFamily::Mul1Digit};
        f = kAll[rng.next_u64() % 4];
    }
    int a = 0, b = 0;
    char op = '+';
    switch (f) {
        case TaskFamily::Add1Digit: a = pick(0, 9); b = pick(0, 9); op = '+'; break;
        case TaskFamily::Add2Digit: a = pick(10, 99); b = pick(10, 99); op = '+'; break;
        case TaskFamily::Sub: a = pick(0, 99); b = pick(0, 99); op = '-'; break;
        case TaskFamily::Mul1Digit: a = pick(0, 9); b = pick(0, 9); op = '*'; break;
        case TaskFamily::Mixed: break;
    }
    long long ans = op == '+' ? a + b : op == '-' ? a - b : static_cast<long long>(a) * b;
    return {std::to_string(a) + op + std::to_string(b) + "=", ans};
}

}  // namespace detail

inline std::vector<TaskItem> synth_corpus(TaskFamily family, int n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("synth_corpus: n must be >= 1");
    Rng rng(mix_seed(seed, 0x5e19));
    std::vector<TaskItem> items;
    items.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto p = detail::make_problem(family, rng);
        TaskItem t;
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "syn-%06d", i);
        t.id = idbuf;
        t.prompt = p.prompt;
        t.answer = std::to_string(p.answer);
        t.source = "synthetic";
        items.push_back(std::move(t));
    }
    return items;
}

// Every distinct problem of a (finite) family exactly once, in a fixed order.
// Handy for disjoint train / held-out splits.
inline std::vector<TaskItem> enumerate_family(TaskFamily family) {
    std::vector<detail::SynthProblem> probs;
    auto add = [&](int a, int b, char op) {
        long long ans = op == '+' ? a + b : op == '-' ? a - b : static_cast<long long>(a) * b;
        probs.push_back({std::to_string(a) + op + std::to_string(b) + "=", ans});
    };
    switch (family) {
        case TaskFamily::Add1Digit:
            for (int a = 0; a <= 9; ++a)
                for (int b = 0; b <= 9; ++b) add(a, b, '+');
            break;
        case TaskFamily::Mul1Digit:
            for (int a = 0; a <= 9; ++a)
                for (int b = 0; b <= 9; ++b) add(a, b, '*');
            break;
        default:
            throw ConfigError("enumerate_family: only finite 1-digit families");
    }
    std::vector<TaskItem> items;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        TaskItem t;
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "enum-%04zu", i);
        t.id = idbuf;
        t.prompt = probs[i].prompt;
        t.answer = std::to_string(probs[i].answer);
        t.source = "synthetic";
        items.push_back(std::move(t));
    }
    return items;
}

}  // namespace tinyrl

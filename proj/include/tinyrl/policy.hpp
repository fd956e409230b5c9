#pragma once

// Tiny fixed-window autoregressive token policy: embedding table, one tanh
// hidden layer, linear output head. Small enough that analytic gradients can
// be swept against finite differences over the whole parameter vector.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tinyrl/errors.hpp"
#include "tinyrl/vocab.hpp"

namespace tinyrl {

struct PolicyDims {
    int vocab = 0;
    int embed = 8;
    int hidden = 16;
    int window = 8;  // context length W, left-padded

    int theta_dim() const {
        return vocab * embed + hidden * window * embed + hidden + vocab * hidden + vocab;
    }
    // Flat layout offsets: [embed | w1 | b1 | w2 | b2].
    int off_embed() const { return 0; }
    int off_w1() const { return vocab * embed; }
    int off_b1() const { return off_w1() + hidden * window * embed; }
    int off_w2() const { return off_b1() + hidden; }
    int off_b2() const { return off_w2() + vocab * hidden; }

    bool operator==(const PolicyDims&) const = default;
};

struct PolicyParams {
    PolicyDims dims;
    std::vector<double> w;

    static PolicyParams zeros(PolicyDims d) {
        return {d, std::vector<double>(static_cast<std::size_t>(d.theta_dim()), 0.0)};
    }

    bool finite() const {
        return std::all_of(w.begin(), w.end(), [](double x) { return std::isfinite(x); });
    }
};

// splitmix64; used everywhere derived seeds are needed.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x853c49e6748fea9bull) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution; platform-independent.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

inline PolicyParams init_params(PolicyDims d, std::uint64_t seed, double scale = 0.05) {
    PolicyParams p = PolicyParams::zeros(d);
    Rng rng(mix_seed(seed, 0x1417));
    for (double& x : p.w) x = (2.0 * rng.next_double() - 1.0) * scale;
    return p;
}

// Last `window` ids of `history`, left-padded with pad.
inline std::vector<int> context_window(std::span<const int> history, int window) {
    std::vector<int> ctx(static_cast<std::size_t>(window), Vocab::kPadId);
    int n = std::min<int>(window, static_cast<int>(history.size()));
    for (int i = 0; i < n; ++i)
        ctx[static_cast<std::size_t>(window - n + i)] = history[history.size() - static_cast<std::size_t>(n) + static_cast<std::size_t>(i)];
    return ctx;
}

struct ForwardPass {
    std::vector<int> ctx;
    std::vector<double> hidden;  // post-tanh
    std::vector<double> logits;
};

inline ForwardPass forward(const PolicyParams& p, std::span<const int> ctx) {
    const PolicyDims& d = p.dims;
    if (ctx.size() != static_cast<std::size_t>(d.window))
        throw LengthMismatch("forward: context must be padded to exactly `window` tokens");
    ForwardPass f;
    f.ctx.assign(ctx.begin(), ctx.end());
    const int in_dim = d.window * d.embed;
    f.hidden.assign(static_cast<std::size_t>(d.hidden), 0.0);
    f.logits.assign(static_cast<std::size_t>(d.vocab), 0.0);

    const double* emb = p.w.data() + d.off_embed();
    const double* w1 = p.w.data() + d.off_w1();
    const double* b1 = p.w.data() + d.off_b1();
    const double* w2 = p.w.data() + d.off_w2();
    const double* b2 = p.w.data() + d.off_b2();

    for (int h = 0; h < d.hidden; ++h) {
        double acc = b1[h];
        const double* row = w1 + h * in_dim;
        for (int s = 0; s < d.window; ++s) {
            const double* e = emb + ctx[static_cast<std::size_t>(s)] * d.embed;
            const double* wr = row + s * d.embed;
            for (int k = 0; k < d.embed; ++k) acc += wr[k] * e[k];
        }
        f.hidden[static_cast<std::size_t>(h)] = std::tanh(acc);
    }
    for (int v = 0; v < d.vocab; ++v) {
        double acc = b2[v];
        const double* row = w2 + v * d.hidden;
        for (int h = 0; h < d.hidden; ++h) acc += row[h] * f.hidden[static_cast<std::size_t>(h)];
        f.logits[static_cast<std::size_t>(v)] = acc;
    }
    return f;
}

inline std::vector<double> logits(const PolicyParams& p, std::span<const int> ctx) {
    return forward(p, ctx).logits;
}

inline double log_sum_exp(std::span<const double> z) {
    double m = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - m);
    return m + std::log(s);
}

inline std::vector<double> log_softmax(std::span<const double> z) {
    double lse = log_sum_exp(z);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
    return out;
}

inline std::vector<double> softmax(std::span<const double> z) {
    auto ls = log_softmax(z);
    for (double& v : ls) v = std::exp(v);
    return ls;
}

inline double token_logprob(const PolicyParams& p, std::span<const int> ctx, int token) {
    auto f = forward(p, ctx);
    return f.logits[static_cast<std::size_t>(token)] - log_sum_exp(f.logits);
}

// Accumulates dJ/dtheta into grad given dJ/dlogits at one context.
inline void backprop_logits(const PolicyParams& p, const ForwardPass& f,
                            std::span<const double> dlogits, std::span<double> grad) {
    const PolicyDims& d = p.dims;
    const int in_dim = d.window * d.embed;
    const double* w1 = p.w.data() + d.off_w1();
    const double* w2 = p.w.data() + d.off_w2();
    double* g_emb = grad.data() + d.off_embed();
    double* g_w1 = grad.data() + d.off_w1();
    double* g_b1 = grad.data() + d.off_b1();
    double* g_w2 = grad.data() + d.off_w2();
    double* g_b2 = grad.data() + d.off_b2();

    std::vector<double> dh(static_cast<std::size_t>(d.hidden), 0.0);
    for (int v = 0; v < d.vocab; ++v) {
        double dv = dlogits[static_cast<std::size_t>(v)];
        if (dv == 0.0) continue;
        g_b2[v] += dv;
        double* grow = g_w2 + v * d.hidden;
        const double* row = w2 + v * d.hidden;
        for (int h = 0; h < d.hidden; ++h) {
            grow[h] += dv * f.hidden[static_cast<std::size_t>(h)];
            dh[static_cast<std::size_t>(h)] += dv * row[h];
        }
    }
    for (int h = 0; h < d.hidden; ++h) {
        double hv = f.hidden[static_cast<std::size_t>(h)];
        double da = dh[static_cast<std::size_t>(h)] * (1.0 - hv * hv);
        if (da == 0.0) continue;
        g_b1[h] += da;
        double* grow = g_w1 + h * in_dim;
        const double* row = w1 + h * in_dim;
        for (int s = 0; s < d.window; ++s) {
            const int tok = f.ctx[static_cast<std::size_t>(s)];
            const double* e = p.w.data() + d.off_embed() + tok * d.embed;
            double* ge = g_emb + tok * d.embed;
            for (int k = 0; k < d.embed; ++k) {
                grow[s * d.embed + k] += da * e[k];
                ge[k] += da * row[s * d.embed + k];
            }
        }
    }
}

// Exact gradient of token_logprob w.r.t. the flat parameter vector.
inline std::vector<double> logprob_grad(const PolicyParams& p, std::span<const int> ctx, int token) {
    auto f = forward(p, ctx);
    auto probs = softmax(f.logits);
    std::vector<double> dlogits(probs.size());
    for (std::size_t v = 0; v < probs.size(); ++v) dlogits[v] = -probs[v];
    dlogits[static_cast<std::size_t>(token)] += 1.0;
    std::vector<double> grad(static_cast<std::size_t>(p.dims.theta_dim()), 0.0);
    backprop_logits(p, f, dlogits, grad);
    return grad;
}

constexpr double kGreedyTemperature = 1e-6;

// Temperature- and nucleus-adjusted distribution, renormalized over the
// nucleus. Tokens outside the nucleus get probability 0. Temperature below
// kGreedyTemperature is argmax (point mass, lowest id wins ties).
inline std::vector<double> sampling_distribution(std::span<const double> raw_logits,
                                                 double temperature, double top_p) {
    const std::size_t n = raw_logits.size();
    std::vector<double> dist(n, 0.0);
    if (temperature < kGreedyTemperature) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (raw_logits[i] > raw_logits[best]) best = i;
        dist[best] = 1.0;
        return dist;
    }
    std::vector<double> scaled(n);
    for (std::size_t i = 0; i < n; ++i) scaled[i] = raw_logits[i] / temperature;
    auto probs = softmax(scaled);
    if (top_p >= 1.0) return probs;

    // Nucleus: probability descending, ties by token id ascending; include
    // tokens until the cumulative mass reaches top_p.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    double cum = 0.0, mass = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t i = order[r];
        dist[i] = probs[i];
        cum += probs[i];
        mass += probs[i];
        if (cum >= top_p - 1e-15) break;
    }
    for (double& v : dist) v /= mass;
    return dist;
}

// Log-probability of `token` under the sampling-adjusted distribution.
// -inf for tokens outside the nucleus.
inline double adjusted_token_logprob(const PolicyParams& p, std::span<const int> ctx, int token,
                                     double temperature, double top_p) {
    auto dist = sampling_distribution(forward(p, ctx).logits, temperature, top_p);
    double pr = dist[static_cast<std::size_t>(token)];
    return pr > 0.0 ? std::log(pr) : -std::numeric_limits<double>::infinity();
}

struct Rollout {
    std::string query_id;
    std::vector<int> prompt_ids;
    std::vector<int> token_ids;        // response tokens; ends with eos unless truncated
    std::vector<double> old_logprobs;  // per response token, raw policy log-probs
                                       // (temperature/top-p shape exploration only;
                                       // importance ratios are defined on the raw policy)
    double reward = 0.0;               // shaped, in [-1, 1]
    double base_reward = 0.0;          // {1, -1} verifier outcome
    bool truncated = false;
};

inline Rollout sample_response(const PolicyParams& p, std::span<const int> prompt,
                               double temperature, double top_p, int max_len,
                               std::uint64_t rng_seed) {
    if (prompt.empty()) throw EmptyPrompt("sample_response: empty prompt");
    if (!(temperature > 0.0)) throw ConfigError("sample_response: temperature must be > 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("sample_response: top_p out of (0,1]");
    if (max_len < 1) throw ConfigError("sample_response: max_len must be >= 1");

    Rng rng(rng_seed);
    Rollout r;
    r.prompt_ids.assign(prompt.begin(), prompt.end());
    std::vector<int> history(prompt.begin(), prompt.end());
    const bool greedy = temperature < kGreedyTemperature;

    for (int t = 0; t < max_len; ++t) {
        auto ctx = context_window(history, p.dims.window);
        auto f = forward(p, ctx);
        auto dist = sampling_distribution(f.logits, temperature, top_p);
        int tok;
        if (greedy) {
            tok = static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        } else {
            double u = rng.next_double();
            double cum = 0.0;
            tok = static_cast<int>(dist.size()) - 1;
            for (std::size_t i = 0; i < dist.size(); ++i) {
                cum += dist[i];
                if (u < cum) {
                    tok = static_cast<int>(i);
                    break;
                }
            }
        }
        r.token_ids.push_back(tok);
        r.old_logprobs.push_back(log_softmax(f.logits)[static_cast<std::size_t>(tok)]);
        history.push_back(tok);
        if (tok == Vocab::kEosId) return r;
    }
    r.truncated = true;
    return r;
}

// Mean per-token Shannon entropy (nats) of the raw policy distribution over
// the rollout's contexts.
inline double sequence_entropy(const PolicyParams& p, const Rollout& r) {
    if (r.token_ids.empty()) return 0.0;
    std::vector<int> history = r.prompt_ids;
    double total = 0.0;
    for (int tok : r.token_ids) {
        auto ctx = context_window(history, p.dims.window);
        auto lp = log_softmax(forward(p, ctx).logits);
        double h = 0.0;
        for (double l : lp) h -= std::exp(l) * l;
        total += h;
        history.push_back(tok);
    }
    return total / static_cast<double>(r.token_ids.size());
}

}  // namespace tinyrl

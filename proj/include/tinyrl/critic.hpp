#pragma once

// Scalar value head over the same context features as the policy:
// embeddings -> tanh hidden -> linear scalar.

#include <cmath>
#include <span>
#include <vector>

#include "tinyrl/policy.hpp"

namespace tinyrl {

struct CriticDims {
    int vocab = 0;
    int embed = 8;
    int hidden = 16;
    int window = 8;

    int theta_dim() const {
        return vocab * embed + hidden * window * embed + hidden + hidden + 1;
    }
    int off_embed() const { return 0; }
    int off_w1() const { return vocab * embed; }
    int off_b1() const { return off_w1() + hidden * window * embed; }
    int off_w2() const { return off_b1() + hidden; }
    int off_b2() const { return off_w2() + hidden; }
};

struct CriticParams {
    CriticDims dims;
    std::vector<double> w;
    double gamma = 1.0;   // in (0, 1]
    double lambda = 1.0;  // in [0, 1]

    static CriticParams zeros(CriticDims d) {
        return {d, std::vector<double>(static_cast<std::size_t>(d.theta_dim()), 0.0), 1.0, 1.0};
    }
};

inline CriticParams init_critic(CriticDims d, std::uint64_t seed, double scale = 0.05) {
    CriticParams c = CriticParams::zeros(d);
    Rng rng(mix_seed(seed, 0xc417));
    for (double& x : c.w) x = (2.0 * rng.next_double() - 1.0) * scale;
    return c;
}

struct CriticForward {
    std::vector<int> ctx;
    std::vector<double> hidden;
    double value = 0.0;
};

inline CriticForward critic_forward(const CriticParams& c, std::span<const int> ctx) {
    const CriticDims& d = c.dims;
    const int in_dim = d.window * d.embed;
    CriticForward f;
    f.ctx.assign(ctx.begin(), ctx.end());
    f.hidden.assign(static_cast<std::size_t>(d.hidden), 0.0);

    const double* emb = c.w.data() + d.off_embed();
    const double* w1 = c.w.data() + d.off_w1();
    const double* b1 = c.w.data() + d.off_b1();
    const double* w2 = c.w.data() + d.off_w2();
    const double b2 = c.w[static_cast<std::size_t>(d.off_b2())];

    for (int h = 0; h < d.hidden; ++h) {
        double acc = b1[h];
        const double* row = w1 + h * in_dim;
        for (int s = 0; s < d.window; ++s) {
            const double* e = emb + ctx[static_cast<std::size_t>(s)] * d.embed;
            for (int k = 0; k < d.embed; ++k) acc += row[s * d.embed + k] * e[k];
        }
        f.hidden[static_cast<std::size_t>(h)] = std::tanh(acc);
    }
    double v = b2;
    for (int h = 0; h < d.hidden; ++h) v += w2[h] * f.hidden[static_cast<std::size_t>(h)];
    f.value = v;
    return f;
}

inline double critic_value(const CriticParams& c, std::span<const int> ctx) {
    return critic_forward(c, ctx).value;
}

// Accumulates dJ/dw into grad given dJ/dvalue at one context.
inline void critic_backprop(const CriticParams& c, const CriticForward& f, double dvalue,
                            std::span<double> grad) {
    const CriticDims& d = c.dims;
    const int in_dim = d.window * d.embed;
    const double* w1 = c.w.data() + d.off_w1();
    const double* w2 = c.w.data() + d.off_w2();
    double* g_emb = grad.data() + d.off_embed();
    double* g_w1 = grad.data() + d.off_w1();
    double* g_b1 = grad.data() + d.off_b1();
    double* g_w2 = grad.data() + d.off_w2();

    grad[static_cast<std::size_t>(d.off_b2())] += dvalue;
    for (int h = 0; h < d.hidden; ++h) {
        double hv = f.hidden[static_cast<std::size_t>(h)];
        g_w2[h] += dvalue * hv;
        double da = dvalue * w2[h] * (1.0 - hv * hv);
        if (da == 0.0) continue;
        g_b1[h] += da;
        for (int s = 0; s < d.window; ++s) {
            const int tok = f.ctx[static_cast<std::size_t>(s)];
            const double* e = c.w.data() + d.off_embed() + tok * d.embed;
            double* ge = g_emb + tok * d.embed;
            const double* row = w1 + h * in_dim + s * d.embed;
            double* grow = g_w1 + h * in_dim + s * d.embed;
            for (int k = 0; k < d.embed; ++k) {
                grow[k] += da * e[k];
                ge[k] += da * row[k];
            }
        }
    }
}

}  // namespace tinyrl

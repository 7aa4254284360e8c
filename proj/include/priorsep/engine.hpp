#pragma once

#include <chrono>
#include <cstdio>
#include <memory>
#include <ostream>

#include "priorsep/losses.hpp"
#include "priorsep/priors.hpp"

// Projected gradient descent over the latent spaces of K priors: evaluate the
// total spectral loss, back out per-latent gradients, take an Adam step, then
// clip every latent back onto the [-1,1] box.

namespace priorsep::engine {

struct PgdConfig {
    int iterations = 1000;
    double learning_rate = 0.05;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int trace_stride = 1;      // record the loss breakdown every n iterations
    bool return_best = false;  // return the best-loss iterate instead of the final one
    losses::LossConfig loss;

    void validate() const {
        if (iterations < 1) throw RangeError("pgd: iterations must be >= 1");
        if (!(learning_rate >= 0.0)) throw RangeError("pgd: learning rate must be >= 0");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
            throw RangeError("pgd: adam betas must lie in [0,1)");
        if (adam_eps <= 0.0) throw RangeError("pgd: adam_eps must be positive");
        if (trace_stride < 1) throw RangeError("pgd: trace_stride must be >= 1");
        loss.validate();
    }
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    explicit AdamState(std::size_t dim = 0) : m(dim, 0.0), v(dim, 0.0) {}
};

struct NonFiniteGradientError : Error {
    long step;
    explicit NonFiniteGradientError(long s)
        : Error("non-finite gradient at optimizer step " + std::to_string(s)), step(s) {}
};

struct NonFiniteLossError : Error {
    int iteration;
    explicit NonFiniteLossError(int it)
        : Error("non-finite loss at iteration " + std::to_string(it)), iteration(it) {}
};

/// One bias-corrected Adam update. Returns the advanced state and the
/// additive parameter delta.
inline std::pair<AdamState, std::vector<double>> adam_step(AdamState state,
                                                           const std::vector<double> &grad,
                                                           double learning_rate,
                                                           double beta1 = 0.9,
                                                           double beta2 = 0.999,
                                                           double eps = 1e-8) {
    if (grad.size() != state.m.size())
        throw DimensionError("adam_step: gradient dimension mismatch");
    state.step += 1;
    if (!all_finite(grad)) throw NonFiniteGradientError(state.step);
    const double c1 = 1.0 - std::pow(beta1, double(state.step));
    const double c2 = 1.0 - std::pow(beta2, double(state.step));
    std::vector<double> delta(grad.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        delta[i] = -learning_rate * mhat / (std::sqrt(vhat) + eps);
    }
    return {std::move(state), std::move(delta)};
}

struct TraceEntry {
    int iteration = 0;
    losses::LossBreakdown breakdown;
};

struct SeparationResult {
    std::vector<priors::LatentVector> latents;
    std::vector<Waveform> sources;
    std::vector<TraceEntry> trace;
    losses::LossBreakdown initial_loss;
    losses::LossBreakdown final_loss;
    double wall_seconds = 0.0;
    long box_violations = 0;  // latent coords found outside [-1,1] after projection
    int best_iteration = 0;
};

using PriorList = std::vector<std::shared_ptr<const priors::GeneratorPrior>>;

inline SeparationResult separate(const Waveform &mixture, const PriorList &prior_list,
                                 const PgdConfig &cfg) {
    cfg.validate();
    if (prior_list.empty()) throw DimensionError("separate: need at least one prior");
    const std::size_t k = prior_list.size();
    for (const auto &p : prior_list)
        if (p->output_length() != mixture.size())
            throw DimensionError("separate: mixture length does not match prior output");

    const auto t_start = std::chrono::steady_clock::now();

    std::vector<priors::LatentVector> latents(k);
    std::vector<AdamState> states;
    states.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        latents[i].assign(std::size_t(prior_list[i]->latent_dim()), 0.0);
        states.emplace_back(latents[i].size());
    }

    SeparationResult result;
    double best_total = 0.0;
    std::vector<priors::LatentVector> best_latents;

    std::vector<Waveform> sources(k);
    for (int it = 1; it <= cfg.iterations; ++it) {
        for (std::size_t i = 0; i < k; ++i) sources[i] = prior_list[i]->generate(latents[i]);
        losses::TotalLoss tl = losses::total_loss(mixture, sources, cfg.loss);
        if (!std::isfinite(tl.breakdown.total)) throw NonFiniteLossError(it);

        if (it == 1) result.initial_loss = tl.breakdown;
        if ((it - 1) % cfg.trace_stride == 0)
            result.trace.push_back({it, tl.breakdown});
        if (cfg.return_best && (best_latents.empty() || tl.breakdown.total < best_total)) {
            best_total = tl.breakdown.total;
            best_latents = latents;
            result.best_iteration = it;
        }

        for (std::size_t i = 0; i < k; ++i) {
            priors::LatentVector zgrad =
                prior_list[i]->generate_vjp(latents[i], tl.source_grads[i]);
            auto [ns, delta] = adam_step(std::move(states[i]), zgrad, cfg.learning_rate,
                                         cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
            states[i] = std::move(ns);
            for (std::size_t d = 0; d < latents[i].size(); ++d) latents[i][d] += delta[d];
            latents[i] = priors::project(std::move(latents[i]));
            for (double v : latents[i])
                if (std::abs(v) > 1.0) ++result.box_violations;
        }
    }

    if (cfg.return_best && !best_latents.empty()) latents = best_latents;
    result.latents = latents;
    result.sources.resize(k);
    for (std::size_t i = 0; i < k; ++i) result.sources[i] = prior_list[i]->generate(latents[i]);
    result.final_loss =
        losses::total_loss(mixture, result.sources, cfg.loss).breakdown;

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

/// One JSON object per trace entry, newline-delimited.
inline void write_trace(std::ostream &os, const SeparationResult &r) {
    char buf[512];
    for (const TraceEntry &e : r.trace) {
        std::snprintf(buf, sizeof(buf),
                      "{\"iteration\":%d,\"l_ms\":%.17g,\"l_sd\":%.17g,\"l_mc\":%.17g,"
                      "\"l_fc\":%.17g,\"total\":%.17g}\n",
                      e.iteration, e.breakdown.l_ms, e.breakdown.l_sd, e.breakdown.l_mc,
                      e.breakdown.l_fc, e.breakdown.total);
        os << buf;
    }
}

}  // namespace priorsep::engine

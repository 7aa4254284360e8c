#pragma once

#include <functional>
#include <random>

#include "priorsep/losses.hpp"
#include "priorsep/priors.hpp"

// Central-difference verification of every analytic gradient path. The
// numeric side differentiates value-only re-compositions built from the
// forward kernels; for the losses whose psi weights are stop-gradients, the
// differenced function holds those weights at their base-point values, which
// is exactly the function the analytic gradient differentiates.

namespace priorsep::gradcheck {

struct CheckReport {
    std::string name;
    int cases = 0;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct Options {
    std::size_t signal_len = 2048;
    int inputs = 20;       // random inputs per check
    int coords = 24;       // waveform coordinates sampled per input
    double step = 1e-5;    // central-difference half-step
    double tol_loss = 1e-4;
    double tol_harmonic = 1e-6;
    double tol_percussive = 1e-6;
    double tol_neural = 1e-5;
    std::uint64_t seed = 0x5EED06AD;
};

namespace detail {

inline double rel_err(const std::vector<double> &a, const std::vector<double> &b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
    return std::sqrt(diff) / denom;
}

/// Mixture-like test signal: two prior draws plus dither, peak-normalized.
inline Waveform random_signal(std::mt19937_64 &gen, std::size_t len) {
    priors::HarmonicParams hp;
    hp.length = len;
    priors::PercussiveParams pp;
    pp.length = len;
    const priors::HarmonicPrior harm(hp);
    const priors::PercussivePrior perc(pp);
    const Waveform a = harm.generate(priors::sample_latent(gen(), hp.latent_dim));
    const Waveform b = perc.generate(priors::sample_latent(gen(), pp.latent_dim));
    Waveform out(len);
    for (std::size_t i = 0; i < len; ++i) {
        out.samples[i] = a.samples[i] + b.samples[i] + 1e-3 * (2.0 * unit_double(gen()) - 1.0);
    }
    return peak_normalize(out);
}

inline std::vector<Mat> logpow_pyramid(const Waveform &w, const losses::LossConfig &cfg) {
    return dsp::pyramid(dsp::log_power(dsp::stft(w, cfg.stft)), cfg.levels).levels;
}

inline double l1_value(const std::vector<Mat> &a, const std::vector<Mat> &b) {
    double v = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l)
        for (std::size_t i = 0; i < a[l].size(); ++i)
            v += std::abs(a[l].data[i] - b[l].data[i]);
    return v;
}

inline double fc_value(const Waveform &m, const Waveform &m_hat, const losses::LossConfig &cfg) {
    const CMat ref = dsp::stft(m, cfg.stft).bins;
    const CMat est = dsp::stft(m_hat, cfg.stft).bins;
    double v = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) {
        const double num = std::log1p(std::abs(ref.data[i]));
        if (num == 0.0) continue;
        const double den = std::log1p(std::abs(est.data[i])) + cfg.eps_den;
        v += std::min(num / den, cfg.ratio_cap);
    }
    return v;
}

using Lambdas = std::vector<std::pair<double, double>>;  // per level

inline Lambdas base_lambdas(const std::vector<Mat> &a, const std::vector<Mat> &b,
                            double eps_den) {
    Lambdas out;
    out.reserve(a.size());
    for (std::size_t l = 0; l < a.size(); ++l)
        out.push_back(losses::psi_lambdas(a[l], b[l], eps_den));
    return out;
}

inline double psi_fro_value(const std::vector<Mat> &a, const std::vector<Mat> &b,
                            const Lambdas &lam) {
    double v = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l)
        v += frobenius_norm(losses::psi_weighted(a[l], b[l], lam[l].first, lam[l].second));
    return v;
}

/// One fourth-order central difference: two second-order stencils at h and
/// h/2, Richardson-combined. `consistent` reports whether the two stencils
/// agree; disagreement flags a non-smooth point (l1 tie, clamp edge, relu
/// kink) straddled by the stencil, which the comparison then excludes.
struct FdSample {
    double value = 0.0;
    bool consistent = true;
};

template <typename F>
inline FdSample fd_central4(const F &f, double &slot, double h) {
    const double keep = slot;
    slot = keep + h;
    const double up1 = f();
    slot = keep - h;
    const double dn1 = f();
    slot = keep + 0.5 * h;
    const double up2 = f();
    slot = keep - 0.5 * h;
    const double dn2 = f();
    slot = keep;
    const double d1 = (up1 - dn1) / (2.0 * h);
    const double d2 = (up2 - dn2) / h;
    FdSample s;
    s.value = (4.0 * d2 - d1) / 3.0;
    s.consistent = std::abs(d1 - d2) <= 1e-3 * std::max({std::abs(d1), std::abs(d2), 1e-12});
    return s;
}

/// Central differences of f over a sampled coordinate subset of x.
/// Coordinates sitting on a non-smooth point are reported unusable.
inline void fd_subset(const std::function<double(const Waveform &)> &f, Waveform x,
                      const std::vector<std::size_t> &coords, double h,
                      std::vector<double> &fd_out, std::vector<char> &usable_out) {
    fd_out.clear();
    usable_out.clear();
    for (std::size_t c : coords) {
        const FdSample s = fd_central4([&] { return f(x); }, x.samples[c], h);
        fd_out.push_back(s.value);
        usable_out.push_back(s.consistent ? 1 : 0);
    }
}

inline double rel_err_usable(const std::vector<double> &fd, const std::vector<double> &an,
                             const std::vector<char> &usable) {
    std::vector<double> a, b;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        if (!usable[i]) continue;
        a.push_back(fd[i]);
        b.push_back(an[i]);
    }
    if (a.empty()) return 0.0;
    return rel_err(a, b);
}

inline std::vector<std::size_t> sample_coords(std::mt19937_64 &gen, std::size_t len, int n) {
    std::vector<std::size_t> coords;
    coords.reserve(std::size_t(n));
    for (int i = 0; i < n; ++i) coords.push_back(gen() % len);
    return coords;
}

inline CheckReport finish(std::string name, int cases, double err, double tol) {
    return {std::move(name), cases, err, tol, err <= tol};
}

}  // namespace detail

inline CheckReport check_loss_ms(const Options &opt) {
    std::mt19937_64 gen(splitmix64(opt.seed ^ 0x11));
    losses::LossConfig cfg;
    double worst = 0.0;
    for (int i = 0; i < opt.inputs; ++i) {
        const Waveform m = detail::random_signal(gen, opt.signal_len);
        const Waveform est = detail::random_signal(gen, opt.signal_len);
        const auto res = losses::loss_ms(m, est, cfg);
        const auto coords = detail::sample_coords(gen, opt.signal_len, opt.coords);
        const auto a_pyr = detail::logpow_pyramid(m, cfg);
        std::vector<double> fd;
        std::vector<char> usable;
        detail::fd_subset(
            [&](const Waveform &w) {
                return detail::l1_value(a_pyr, detail::logpow_pyramid(w, cfg));
            },
            est, coords, opt.step, fd, usable);
        std::vector<double> an;
        an.reserve(coords.size());
        for (std::size_t c : coords) an.push_back(res.grad[c]);
        worst = std::max(worst, detail::rel_err_usable(fd, an, usable));
    }
    return detail::finish("loss_ms", opt.inputs, worst, opt.tol_loss);
}

inline CheckReport check_loss_sd(const Options &opt) {
    std::mt19937_64 gen(splitmix64(opt.seed ^ 0x22));
    losses::LossConfig cfg;
    double worst = 0.0;
    for (int i = 0; i < opt.inputs; ++i) {
        std::vector<Waveform> sources{detail::random_signal(gen, opt.signal_len),
                                      detail::random_signal(gen, opt.signal_len)};
        const auto res = losses::loss_sd(sources, cfg);
        const auto pyr0 = detail::logpow_pyramid(sources[0], cfg);
        const auto pyr1 = detail::logpow_pyramid(sources[1], cfg);
        const detail::Lambdas lam = detail::base_lambdas(pyr0, pyr1, cfg.eps_den);
        const auto coords = detail::sample_coords(gen, opt.signal_len, opt.coords);
        std::vector<double> fd;
        std::vector<char> usable;
        detail::fd_subset(
            [&](const Waveform &w) {
                return detail::psi_fro_value(detail::logpow_pyramid(w, cfg), pyr1, lam);
            },
            sources[0], coords, opt.step, fd, usable);
        std::vector<double> an;
        an.reserve(coords.size());
        for (std::size_t c : coords) an.push_back(res.grads[0][c]);
        worst = std::max(worst, detail::rel_err_usable(fd, an, usable));
    }
    return detail::finish("loss_sd", opt.inputs, worst, opt.tol_loss);
}

inline CheckReport check_loss_mc(const Options &opt) {
    std::mt19937_64 gen(splitmix64(opt.seed ^ 0x33));
    losses::LossConfig cfg;
    double worst = 0.0;
    for (int i = 0; i < opt.inputs; ++i) {
        const Waveform m = detail::random_signal(gen, opt.signal_len);
        const Waveform est = detail::random_signal(gen, opt.signal_len);
        const auto res = losses::loss_mc(m, est, cfg);
        const auto a_pyr = detail::logpow_pyramid(m, cfg);
        const detail::Lambdas lam =
            detail::base_lambdas(a_pyr, detail::logpow_pyramid(est, cfg), cfg.eps_den);
        const auto coords = detail::sample_coords(gen, opt.signal_len, opt.coords);
        std::vector<double> fd;
        std::vector<char> usable;
        detail::fd_subset(
            [&](const Waveform &w) {
                return -detail::psi_fro_value(a_pyr, detail::logpow_pyramid(w, cfg), lam);
            },
            est, coords, opt.step, fd, usable);
        std::vector<double> an;
        an.reserve(coords.size());
        for (std::size_t c : coords) an.push_back(res.grad[c]);
        worst = std::max(worst, detail::rel_err_usable(fd, an, usable));
    }
    return detail::finish("loss_mc", opt.inputs, worst, opt.tol_loss);
}

inline CheckReport check_loss_fc(const Options &opt) {
    std::mt19937_64 gen(splitmix64(opt.seed ^ 0x44));
    losses::LossConfig cfg;
    double worst = 0.0;
    for (int i = 0; i < opt.inputs; ++i) {
        const Waveform m = detail::random_signal(gen, opt.signal_len);
        const Waveform est = detail::random_signal(gen, opt.signal_len);
        const auto res = losses::loss_fc(m, est, cfg);
        const auto coords = detail::sample_coords(gen, opt.signal_len, opt.coords);
        std::vector<double> fd;
        std::vector<char> usable;
        detail::fd_subset([&](const Waveform &w) { return detail::fc_value(m, w, cfg); }, est,
                          coords, opt.step, fd, usable);
        std::vector<double> an;
        an.reserve(coords.size());
        for (std::size_t c : coords) an.push_back(res.grad[c]);
        worst = std::max(worst, detail::rel_err_usable(fd, an, usable));
    }
    return detail::finish("loss_fc", opt.inputs, worst, opt.tol_loss);
}

inline CheckReport check_total_loss(const Options &opt) {
    std::mt19937_64 gen(splitmix64(opt.seed ^ 0x55));
    losses::LossConfig cfg;
    double worst = 0.0;
    for (int i = 0; i < opt.inputs; ++i) {
        const Waveform m = detail::random_signal(gen, opt.signal_len);
        std::vector<Waveform> sources{detail::random_signal(gen, opt.signal_len),
                                      detail::random_signal(gen, opt.signal_len)};
        const auto res = losses::total_loss(m, sources, cfg);

        const auto m_pyr = detail::logpow_pyramid(m, cfg);
        Waveform mix_base(m.size());
        for (const auto &s : sources)
            for (std::size_t t = 0; t < m.size(); ++t) mix_base.samples[t] += s.samples[t];
        const auto mix_pyr = detail::logpow_pyramid(mix_base, cfg);
        const auto s0_pyr = detail::logpow_pyramid(sources[0], cfg);
        const auto s1_pyr = detail::logpow_pyramid(sources[1], cfg);
        const detail::Lambdas lam_mc = detail::base_lambdas(m_pyr, mix_pyr, cfg.eps_den);
        const detail::Lambdas lam_sd = detail::base_lambdas(s0_pyr, s1_pyr, cfg.eps_den);

        // perturb source 0; the mixture moves with it
        const auto frozen_total = [&](const Waveform &s0) {
            Waveform mix(m.size());
            for (std::size_t t = 0; t < m.size(); ++t)
                mix.samples[t] = s0.samples[t] + sources[1].samples[t];
            const auto mixp = detail::logpow_pyramid(mix, cfg);
            const auto s0p = detail::logpow_pyramid(s0, cfg);
            return cfg.beta_ms * detail::l1_value(m_pyr, mixp) +
                   cfg.beta_sd * detail::psi_fro_value(s0p, s1_pyr, lam_sd) -
                   cfg.beta_mc * detail::psi_fro_value(m_pyr, mixp, lam_mc) +
                   cfg.beta_fc * detail::fc_value(m, mix, cfg);
        };
        const auto coords = detail::sample_coords(gen, opt.signal_len, opt.coords);
        std::vector<double> fd;
        std::vector<char> usable;
        detail::fd_subset(frozen_total, sources[0], coords, opt.step, fd, usable);
        std::vector<double> an;
        an.reserve(coords.size());
        for (std::size_t c : coords) an.push_back(res.source_grads[0][c]);
        worst = std::max(worst, detail::rel_err_usable(fd, an, usable));
    }
    return detail::finish("total_loss", opt.inputs, worst, opt.tol_loss);
}

namespace detail {

inline CheckReport check_prior(const std::string &name, const priors::GeneratorPrior &prior,
                               const Options &opt, double tol, std::uint64_t salt) {
    std::mt19937_64 gen(splitmix64(opt.seed ^ salt));
    const int dz = prior.latent_dim();
    double worst = 0.0;
    for (int i = 0; i < opt.inputs; ++i) {
        priors::LatentVector z = priors::sample_latent(gen(), dz);
        for (double &v : z) v *= 0.95;  // keep clear of the box edge
        std::vector<double> u(prior.output_length());
        for (double &v : u) v = 2.0 * unit_double(gen()) - 1.0;
        const priors::LatentVector an = prior.generate_vjp(z, u);

        std::vector<double> fd(std::size_t(dz), 0.0);
        std::vector<char> usable(std::size_t(dz), 1);
        priors::LatentVector zp = z;
        const auto pay = [&] {
            const Waveform w = prior.generate(zp);
            double acc = 0.0;
            for (std::size_t t = 0; t < u.size(); ++t) acc += u[t] * w.samples[t];
            return acc;
        };
        for (int c = 0; c < dz; ++c) {
            const FdSample s = fd_central4(pay, zp[std::size_t(c)], opt.step);
            fd[std::size_t(c)] = s.value;
            usable[std::size_t(c)] = s.consistent ? 1 : 0;
        }
        worst = std::max(worst, rel_err_usable(fd, an, usable));
    }
    return finish(name, opt.inputs, worst, tol);
}

}  // namespace detail

inline CheckReport check_harmonic_prior(const Options &opt) {
    priors::HarmonicParams p;
    p.length = opt.signal_len;
    return detail::check_prior("harmonic_vjp", priors::HarmonicPrior(p), opt,
                               opt.tol_harmonic, 0x66);
}

inline CheckReport check_percussive_prior(const Options &opt) {
    priors::PercussiveParams p;
    p.length = opt.signal_len;
    return detail::check_prior("percussive_vjp", priors::PercussivePrior(p), opt,
                               opt.tol_percussive, 0x77);
}

/// Small random decoder: d_z=8, three deconv stages, 1024 output samples.
inline priors::NeuralDecoderParams tiny_decoder_params(std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    const auto randf = [&](double scale) {
        return double(float(scale * (2.0 * unit_double(gen()) - 1.0)));
    };
    priors::NeuralDecoderParams params;
    const std::uint32_t widths[] = {16, 8, 4, 1};
    priors::DecoderLayer dense;
    dense.in_dim = 8;
    dense.out_dim = widths[0] * std::uint32_t(priors::kDecoderBaseWidth);
    dense.kernel = 1;
    dense.stride = 1;
    dense.weights.resize(dense.weight_count());
    dense.bias.resize(dense.out_dim);
    for (double &w : dense.weights) w = randf(0.5);
    for (double &b : dense.bias) b = randf(0.1);
    params.layers.push_back(std::move(dense));
    for (int r = 0; r < 3; ++r) {
        priors::DecoderLayer l;
        l.in_dim = widths[r];
        l.out_dim = widths[r + 1];
        l.kernel = priors::kDecoderKernel;
        l.stride = priors::kDecoderStride;
        l.weights.resize(l.weight_count());
        l.bias.resize(l.out_dim);
        const double scale = 1.0 / std::sqrt(double(l.in_dim) * l.kernel);
        for (double &w : l.weights) w = randf(scale);
        for (double &b : l.bias) b = randf(0.05);
        params.layers.push_back(std::move(l));
    }
    return params;
}

inline CheckReport check_neural_prior(const Options &opt) {
    const priors::NeuralDecoderPrior prior(tiny_decoder_params(splitmix64(opt.seed ^ 0x88)));
    return detail::check_prior("neural_vjp", prior, opt, opt.tol_neural, 0x99);
}

inline std::vector<CheckReport> run_all(const Options &opt = {}) {
    return {check_loss_ms(opt),     check_loss_sd(opt),         check_loss_mc(opt),
            check_loss_fc(opt),     check_total_loss(opt),      check_harmonic_prior(opt),
            check_percussive_prior(opt), check_neural_prior(opt)};
}

}  // namespace priorsep::gradcheck

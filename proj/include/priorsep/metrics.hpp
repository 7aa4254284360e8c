#pragma once

#include "priorsep/dsp.hpp"

// Per-source evaluation against ground truth: magnitude-spectrogram SNR,
// RMS envelope distance on peak-normalized signals, and a projection-based
// signal-to-interference ratio. Estimated source i is always scored against
// ground-truth source i; there is no permutation search.

namespace priorsep::metrics {

inline constexpr double kDbCap = 100.0;
inline constexpr double kDenGuard = 1e-12;

struct DegenerateSourcesError : Error {
    using Error::Error;
};

inline double clamp_db(double v) {
    if (!(v > -kDbCap)) return -kDbCap;  // also catches -inf / nan from log10(0)
    return std::min(v, kDbCap);
}

/// 10*log10( sum|S|^2 / sum(|S| - |S_hat|)^2 ) over magnitude spectrograms.
inline double spectral_snr(const Waveform &s, const Waveform &s_hat,
                           const dsp::StftConfig &stft_cfg = {}) {
    if (s.size() != s_hat.size()) throw DimensionError("spectral_snr: length mismatch");
    const CMat a = dsp::stft(s, stft_cfg).bins;
    const CMat b = dsp::stft(s_hat, stft_cfg).bins;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double ma = std::abs(a.data[i]);
        const double mb = std::abs(b.data[i]);
        num += ma * ma;
        den += (ma - mb) * (ma - mb);
    }
    return clamp_db(10.0 * std::log10(num / (den + kDenGuard)));
}

/// Windowed RMS envelope (rectangular window). Signals shorter than one
/// window collapse to a single full-signal frame.
inline std::vector<double> rms_envelope(const Waveform &w, int win = 512, int hop = 256) {
    if (w.size() < std::size_t(win))
        return {rms(w)};
    const int frames = int((w.size() - std::size_t(win)) / std::size_t(hop)) + 1;
    std::vector<double> env(std::size_t(frames), 0.0);
    for (int t = 0; t < frames; ++t) {
        double acc = 0.0;
        const std::size_t off = std::size_t(t) * std::size_t(hop);
        for (int i = 0; i < win; ++i) {
            const double x = w.samples[off + std::size_t(i)];
            acc += x * x;
        }
        env[std::size_t(t)] = std::sqrt(acc / double(win));
    }
    return env;
}

/// RMS distance between the envelopes of the peak-normalized signals.
/// Scale-invariant by construction; a silent signal keeps a zero envelope.
inline double rms_env_distance(const Waveform &s, const Waveform &s_hat, int win = 512,
                               int hop = 256) {
    if (s.size() != s_hat.size()) throw DimensionError("rms_env_distance: length mismatch");
    const std::vector<double> ea = rms_envelope(peak_normalize(s), win, hop);
    const std::vector<double> eb = rms_envelope(peak_normalize(s_hat), win, hop);
    double acc = 0.0;
    for (std::size_t i = 0; i < ea.size(); ++i) {
        const double d = ea[i] - eb[i];
        acc += d * d;
    }
    return std::sqrt(acc / double(ea.size()));
}

namespace detail {

/// Solves (G + ridge I) c = b by Cholesky. Throws when the Gram matrix is
/// numerically singular.
inline std::vector<double> solve_gram(std::vector<double> g, int k, std::vector<double> b,
                                      double ridge) {
    double max_diag = 0.0;
    for (int i = 0; i < k; ++i) max_diag = std::max(max_diag, g[std::size_t(i) * k + i]);
    for (int i = 0; i < k; ++i) g[std::size_t(i) * k + i] += ridge;

    // lower-triangular Cholesky in place
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j <= i; ++j) {
            double sum = g[std::size_t(i) * k + j];
            for (int p = 0; p < j; ++p)
                sum -= g[std::size_t(i) * k + p] * g[std::size_t(j) * k + p];
            if (i == j) {
                if (!(sum > max_diag * 1e-10))
                    throw DegenerateSourcesError(
                        "sir: ground-truth sources are numerically linearly dependent");
                g[std::size_t(i) * k + j] = std::sqrt(sum);
            } else {
                g[std::size_t(i) * k + j] = sum / g[std::size_t(j) * k + j];
            }
        }
    }
    // forward then backward substitution
    for (int i = 0; i < k; ++i) {
        double sum = b[std::size_t(i)];
        for (int p = 0; p < i; ++p) sum -= g[std::size_t(i) * k + p] * b[std::size_t(p)];
        b[std::size_t(i)] = sum / g[std::size_t(i) * k + i];
    }
    for (int i = k - 1; i >= 0; --i) {
        double sum = b[std::size_t(i)];
        for (int p = i + 1; p < k; ++p) sum -= g[std::size_t(p) * k + i] * b[std::size_t(p)];
        b[std::size_t(i)] = sum / g[std::size_t(i) * k + i];
    }
    return b;
}

}  // namespace detail

/// Signal-to-interference ratio of estimate i against the truth set:
/// the target is the projection onto span{s_i}; the interference is the
/// remainder of the projection onto span{s_1..s_K}.
inline double sir(const Waveform &s_hat, const std::vector<Waveform> &truths, std::size_t index,
                  double ridge = 1e-12) {
    if (truths.empty() || index >= truths.size()) throw RangeError("sir: bad target index");
    const int k = int(truths.size());
    for (const Waveform &t : truths)
        if (t.size() != s_hat.size()) throw DimensionError("sir: length mismatch");

    std::vector<double> gram(std::size_t(k) * std::size_t(k));
    std::vector<double> rhs(std::size_t(k), 0.0);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j <= i; ++j) {
            const double v = dot(truths[std::size_t(i)].samples, truths[std::size_t(j)].samples);
            gram[std::size_t(i) * k + j] = v;
            gram[std::size_t(j) * k + i] = v;
        }
        rhs[std::size_t(i)] = dot(truths[std::size_t(i)].samples, s_hat.samples);
    }
    const std::vector<double> coef = detail::solve_gram(gram, k, rhs, ridge);

    const double target_energy_den = gram[index * std::size_t(k) + index] + ridge;
    const double c_target = rhs[index] / target_energy_den;

    const std::size_t n = s_hat.size();
    double target_sq = 0.0, interf_sq = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        double span = 0.0;
        for (int i = 0; i < k; ++i) span += coef[std::size_t(i)] * truths[std::size_t(i)][t];
        const double target = c_target * truths[index][t];
        const double interf = span - target;
        target_sq += target * target;
        interf_sq += interf * interf;
    }
    return clamp_db(10.0 * std::log10(target_sq / (interf_sq + kDenGuard)));
}

struct SourceMetrics {
    double spectral_snr_db = 0.0;
    double rms_env_distance = 0.0;
    double sir_db = 0.0;
};

struct MetricsReport {
    std::vector<SourceMetrics> per_source;
    SourceMetrics mean;
};

inline MetricsReport evaluate(const std::vector<Waveform> &truths,
                              const std::vector<Waveform> &estimates,
                              const dsp::StftConfig &stft_cfg = {}) {
    if (truths.size() != estimates.size() || truths.empty())
        throw DimensionError("evaluate: need matching non-empty source lists");
    MetricsReport rep;
    rep.per_source.resize(truths.size());
    for (std::size_t i = 0; i < truths.size(); ++i) {
        SourceMetrics &m = rep.per_source[i];
        m.spectral_snr_db = spectral_snr(truths[i], estimates[i], stft_cfg);
        m.rms_env_distance = rms_env_distance(truths[i], estimates[i]);
        m.sir_db = sir(estimates[i], truths, i);
        rep.mean.spectral_snr_db += m.spectral_snr_db;
        rep.mean.rms_env_distance += m.rms_env_distance;
        rep.mean.sir_db += m.sir_db;
    }
    const double k = double(truths.size());
    rep.mean.spectral_snr_db /= k;
    rep.mean.rms_env_distance /= k;
    rep.mean.sir_db /= k;
    return rep;
}

}  // namespace priorsep::metrics

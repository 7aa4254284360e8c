#pragma once

#include <optional>

#include "priorsep/dsp.hpp"

// Spectral-domain losses driving the separation. Each loss returns its scalar
// value together with the analytic gradient with respect to the estimated
// waveform(s), chained through the dsp kernels by hand.

namespace priorsep::losses {

struct LossConfig {
    double beta_ms = 0.8;
    double beta_sd = 0.3;
    double beta_mc = 0.1;
    double beta_fc = 0.4;
    int levels = 3;
    double eps_den = 1e-6;    // denominator guard for the psi weights and the ratio loss
    double ratio_cap = 1e3;   // upper clamp for ratio-loss terms
    dsp::StftConfig stft;

    void validate() const {
        if (beta_ms < 0 || beta_sd < 0 || beta_mc < 0 || beta_fc < 0)
            throw RangeError("loss weights must be non-negative");
        if (levels < 1) throw RangeError("levels must be >= 1");
        if (eps_den <= 0) throw RangeError("eps_den must be positive");
        if (ratio_cap <= 1) throw RangeError("ratio_cap must exceed 1");
    }
};

struct LossBreakdown {
    double l_ms = 0.0;
    double l_sd = 0.0;
    double l_mc = 0.0;
    double l_fc = 0.0;
    double total = 0.0;
    double beta_ms = 0.0, beta_sd = 0.0, beta_mc = 0.0, beta_fc = 0.0;
};

struct ScalarWithGrad {
    double value = 0.0;
    std::vector<double> grad;
};

namespace detail {

/// Forward spectral analysis of one waveform, cached for reuse by the vjps.
struct Features {
    dsp::ComplexSpectrogram spec;
    std::vector<Mat> pyr;  // pyramid of log(1+|S|^2), levels[0] full resolution
};

inline Features analyze(const Waveform &w, const LossConfig &cfg) {
    Features f;
    f.spec = dsp::stft(w, cfg.stft);
    f.pyr = dsp::pyramid(dsp::log_power(f.spec), cfg.levels).levels;
    return f;
}

inline std::vector<Mat> zero_like_levels(const std::vector<Mat> &levels) {
    std::vector<Mat> out;
    out.reserve(levels.size());
    for (const Mat &m : levels) out.emplace_back(m.rows, m.cols);
    return out;
}

/// Pyramid-level cotangents (plus an optional extra cotangent on the complex
/// spectrogram) chained back to a waveform gradient.
inline std::vector<double> backprop(const Waveform &w, const Features &f,
                                    const std::vector<Mat> &level_cots,
                                    const CMat *extra_spec_cot, const LossConfig &cfg) {
    Mat logpow_cot =
        dsp::pyramid_vjp(f.pyr[0].rows, f.pyr[0].cols, level_cots);
    CMat spec_cot = dsp::log_power_vjp(f.spec, logpow_cot);
    if (extra_spec_cot) {
        for (std::size_t i = 0; i < spec_cot.size(); ++i)
            spec_cot.data[i] += extra_spec_cot->data[i];
    }
    return dsp::stft_vjp(w, spec_cot, cfg.stft);
}

struct PsiContext {
    dsp::GradientField gx, gy;
    Mat tanh_x, tanh_y;  // tanh(lam1 |grad x|), tanh(lam2 |grad y|)
    Mat value;
    double lam1 = 1.0, lam2 = 1.0;
};

inline PsiContext psi_forward(const Mat &x, const Mat &y, double eps_den) {
    if (!x.same_shape(y)) throw DimensionError("psi: operand shape mismatch");
    PsiContext c;
    c.gx = dsp::grad_field(x);
    c.gy = dsp::grad_field(y);
    const double nx = frobenius_norm(c.gx.magnitude);
    const double ny = frobenius_norm(c.gy.magnitude);
    c.lam1 = std::sqrt(ny + eps_den) / std::sqrt(nx + eps_den);
    c.lam2 = std::sqrt(nx + eps_den) / std::sqrt(ny + eps_den);
    c.tanh_x = Mat(x.rows, x.cols);
    c.tanh_y = Mat(x.rows, x.cols);
    c.value = Mat(x.rows, x.cols);
    for (std::size_t i = 0; i < c.value.size(); ++i) {
        c.tanh_x.data[i] = std::tanh(c.lam1 * c.gx.magnitude.data[i]);
        c.tanh_y.data[i] = std::tanh(c.lam2 * c.gy.magnitude.data[i]);
        c.value.data[i] = c.tanh_x.data[i] * c.tanh_y.data[i];
    }
    return c;
}

/// Backpropagates a cotangent on psi's output to its two inputs. The lambda
/// weights are held constant (stop-gradient). Either accumulator may be null
/// when that side is not being optimized.
inline void psi_vjp(const PsiContext &c, const Mat &cot, Mat *x_acc, Mat *y_acc) {
    const std::size_t n = c.value.size();
    if (x_acc) {
        Mat mag_cot(c.value.rows, c.value.cols);
        for (std::size_t i = 0; i < n; ++i) {
            const double tx = c.tanh_x.data[i];
            mag_cot.data[i] = cot.data[i] * c.tanh_y.data[i] * c.lam1 * (1.0 - tx * tx);
        }
        Mat g = dsp::grad_field_vjp(c.gx, mag_cot);
        for (std::size_t i = 0; i < n; ++i) x_acc->data[i] += g.data[i];
    }
    if (y_acc) {
        Mat mag_cot(c.value.rows, c.value.cols);
        for (std::size_t i = 0; i < n; ++i) {
            const double ty = c.tanh_y.data[i];
            mag_cot.data[i] = cot.data[i] * c.tanh_x.data[i] * c.lam2 * (1.0 - ty * ty);
        }
        Mat g = dsp::grad_field_vjp(c.gy, mag_cot);
        for (std::size_t i = 0; i < n; ++i) y_acc->data[i] += g.data[i];
    }
}

/// || psi ||_F with the zero subgradient at an identically-zero psi.
/// Accumulates `scale * d||psi||_F` into the level accumulators.
inline double psi_frobenius_term(const PsiContext &c, double scale, Mat *x_acc, Mat *y_acc) {
    const double fro = frobenius_norm(c.value);
    if (fro > 0.0 && (x_acc || y_acc)) {
        Mat cot(c.value.rows, c.value.cols);
        const double s = scale / fro;
        for (std::size_t i = 0; i < c.value.size(); ++i) cot.data[i] = s * c.value.data[i];
        psi_vjp(c, cot, x_acc, y_acc);
    }
    return fro;
}

/// l1 distance between pyramids with the sign-cotangent accumulated on the
/// second argument (ties take the zero subgradient).
inline double l1_term(const std::vector<Mat> &a, const std::vector<Mat> &b, double scale,
                      std::vector<Mat> &b_acc) {
    double value = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) {
        for (std::size_t i = 0; i < a[l].size(); ++i) {
            const double diff = b[l].data[i] - a[l].data[i];
            value += std::abs(diff);
            if (diff > 0.0)
                b_acc[l].data[i] += scale;
            else if (diff < 0.0)
                b_acc[l].data[i] -= scale;
        }
    }
    return value;
}

/// Ratio loss over the full-resolution spectrograms; returns the value and
/// accumulates `scale * d(value)` as a complex cotangent on the estimate.
inline double ratio_term(const dsp::ComplexSpectrogram &ref, const dsp::ComplexSpectrogram &est,
                         const LossConfig &cfg, double scale, CMat &est_cot) {
    if (ref.bins.rows != est.bins.rows || ref.bins.cols != est.bins.cols)
        throw DimensionError("frequency-consistency loss: spectrogram shape mismatch");
    double value = 0.0;
    for (std::size_t i = 0; i < ref.bins.size(); ++i) {
        const double mag_ref = std::abs(ref.bins.data[i]);
        const double num = std::log1p(mag_ref);
        if (num == 0.0) continue;  // zero numerator contributes nothing
        const double mag_est = std::abs(est.bins.data[i]);
        const double den = std::log1p(mag_est) + cfg.eps_den;
        const double ratio = num / den;
        if (ratio >= cfg.ratio_cap) {
            value += cfg.ratio_cap;  // clamped: no gradient
            continue;
        }
        value += ratio;
        if (mag_est > 0.0) {
            // d(ratio)/d|S| = -num/den^2 * 1/(1+|S|)
            const double dmag = scale * (-num / (den * den)) / (1.0 + mag_est);
            est_cot.data[i] += (dmag / mag_est) * est.bins.data[i];
        }
    }
    return value;
}

}  // namespace detail

/// Gradient-similarity product tanh(lam1*|grad x|) .* tanh(lam2*|grad y|)
/// with the adaptive normalizing weights computed from the operands.
inline Mat psi(const Mat &x, const Mat &y, double eps_den = 1e-6) {
    return detail::psi_forward(x, y, eps_den).value;
}

/// Same product with explicitly supplied weights.
inline Mat psi_weighted(const Mat &x, const Mat &y, double lam1, double lam2) {
    if (!x.same_shape(y)) throw DimensionError("psi_weighted: operand shape mismatch");
    const dsp::GradientField gx = dsp::grad_field(x);
    const dsp::GradientField gy = dsp::grad_field(y);
    Mat out(x.rows, x.cols);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = std::tanh(lam1 * gx.magnitude.data[i]) *
                      std::tanh(lam2 * gy.magnitude.data[i]);
    return out;
}

/// The adaptive weights psi would use for this operand pair.
inline std::pair<double, double> psi_lambdas(const Mat &x, const Mat &y, double eps_den = 1e-6) {
    const double nx = frobenius_norm(dsp::grad_field(x).magnitude);
    const double ny = frobenius_norm(dsp::grad_field(y).magnitude);
    return {std::sqrt(ny + eps_den) / std::sqrt(nx + eps_den),
            std::sqrt(nx + eps_den) / std::sqrt(ny + eps_den)};
}

/// Multiresolution l1 distance between log-power pyramids.
inline ScalarWithGrad loss_ms(const Waveform &m, const Waveform &m_hat, const LossConfig &cfg) {
    if (m.size() != m_hat.size()) throw DimensionError("loss_ms: length mismatch");
    cfg.validate();
    const detail::Features a = detail::analyze(m, cfg);
    const detail::Features b = detail::analyze(m_hat, cfg);
    std::vector<Mat> acc = detail::zero_like_levels(b.pyr);
    ScalarWithGrad out;
    out.value = detail::l1_term(a.pyr, b.pyr, 1.0, acc);
    out.grad = detail::backprop(m_hat, b, acc, nullptr, cfg);
    return out;
}

/// Pairwise gradient-similarity penalty between estimated sources.
struct MultiSourceLoss {
    double value = 0.0;
    std::vector<std::vector<double>> grads;  // one per source
};

inline MultiSourceLoss loss_sd(const std::vector<Waveform> &sources, const LossConfig &cfg) {
    if (sources.empty()) throw DimensionError("loss_sd: empty source list");
    cfg.validate();
    const std::size_t k = sources.size();
    std::vector<detail::Features> feats;
    feats.reserve(k);
    for (const Waveform &s : sources) feats.push_back(detail::analyze(s, cfg));
    std::vector<std::vector<Mat>> acc;
    acc.reserve(k);
    for (const auto &f : feats) acc.push_back(detail::zero_like_levels(f.pyr));

    MultiSourceLoss out;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            for (int l = 0; l < cfg.levels; ++l) {
                const auto ctx =
                    detail::psi_forward(feats[i].pyr[std::size_t(l)],
                                        feats[j].pyr[std::size_t(l)], cfg.eps_den);
                out.value += detail::psi_frobenius_term(ctx, 1.0, &acc[i][std::size_t(l)],
                                                        &acc[j][std::size_t(l)]);
            }
        }
    }
    out.grads.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
        out.grads.push_back(detail::backprop(sources[i], feats[i], acc[i], nullptr, cfg));
    return out;
}

/// Negated gradient similarity between the true and estimated mixtures.
inline ScalarWithGrad loss_mc(const Waveform &m, const Waveform &m_hat, const LossConfig &cfg) {
    if (m.size() != m_hat.size()) throw DimensionError("loss_mc: length mismatch");
    cfg.validate();
    const detail::Features a = detail::analyze(m, cfg);
    const detail::Features b = detail::analyze(m_hat, cfg);
    std::vector<Mat> acc = detail::zero_like_levels(b.pyr);
    ScalarWithGrad out;
    for (int l = 0; l < cfg.levels; ++l) {
        const auto ctx = detail::psi_forward(a.pyr[std::size_t(l)], b.pyr[std::size_t(l)],
                                             cfg.eps_den);
        out.value -= detail::psi_frobenius_term(ctx, -1.0, nullptr, &acc[std::size_t(l)]);
    }
    out.grad = detail::backprop(m_hat, b, acc, nullptr, cfg);
    return out;
}

/// Per-bin log-magnitude ratio between mixtures, clamped to [0, ratio_cap].
inline ScalarWithGrad loss_fc(const Waveform &m, const Waveform &m_hat, const LossConfig &cfg) {
    if (m.size() != m_hat.size()) throw DimensionError("loss_fc: length mismatch");
    cfg.validate();
    const dsp::ComplexSpectrogram ref = dsp::stft(m, cfg.stft);
    const dsp::ComplexSpectrogram est = dsp::stft(m_hat, cfg.stft);
    CMat cot(est.bins.rows, est.bins.cols);
    ScalarWithGrad out;
    out.value = detail::ratio_term(ref, est, cfg, 1.0, cot);
    out.grad = dsp::stft_vjp(m_hat, cot, cfg.stft);
    return out;
}

struct TotalLoss {
    LossBreakdown breakdown;
    std::vector<std::vector<double>> source_grads;  // d(total)/d(source i)
};

/// Weighted combination of the four losses. The estimated mixture is the sum
/// of the sources, so every mixture-loss gradient passes through to each
/// source unchanged.
inline TotalLoss total_loss(const Waveform &m, const std::vector<Waveform> &sources,
                            const LossConfig &cfg) {
    if (sources.empty()) throw DimensionError("total_loss: empty source list");
    cfg.validate();
    const std::size_t k = sources.size();
    for (const Waveform &s : sources)
        if (s.size() != m.size()) throw DimensionError("total_loss: source length mismatch");

    Waveform m_hat(m.size(), m.sample_rate);
    for (const Waveform &s : sources)
        for (std::size_t i = 0; i < m_hat.size(); ++i) m_hat.samples[i] += s.samples[i];

    const detail::Features fm = detail::analyze(m, cfg);
    const detail::Features fh = detail::analyze(m_hat, cfg);
    std::vector<detail::Features> fs;
    fs.reserve(k);
    for (const Waveform &s : sources) fs.push_back(detail::analyze(s, cfg));

    TotalLoss out;
    LossBreakdown &bd = out.breakdown;
    bd.beta_ms = cfg.beta_ms;
    bd.beta_sd = cfg.beta_sd;
    bd.beta_mc = cfg.beta_mc;
    bd.beta_fc = cfg.beta_fc;

    // mixture-side losses share one backward pass through the m_hat features
    std::vector<Mat> acc_mix = detail::zero_like_levels(fh.pyr);
    bd.l_ms = detail::l1_term(fm.pyr, fh.pyr, cfg.beta_ms, acc_mix);
    for (int l = 0; l < cfg.levels; ++l) {
        const auto ctx = detail::psi_forward(fm.pyr[std::size_t(l)], fh.pyr[std::size_t(l)],
                                             cfg.eps_den);
        bd.l_mc -= detail::psi_frobenius_term(ctx, -cfg.beta_mc, nullptr,
                                              &acc_mix[std::size_t(l)]);
    }
    CMat spec_cot(fh.spec.bins.rows, fh.spec.bins.cols);
    bd.l_fc = detail::ratio_term(fm.spec, fh.spec, cfg, cfg.beta_fc, spec_cot);
    const std::vector<double> mix_grad = detail::backprop(m_hat, fh, acc_mix, &spec_cot, cfg);

    // dissociation between source pairs
    std::vector<std::vector<Mat>> acc_src;
    acc_src.reserve(k);
    for (const auto &f : fs) acc_src.push_back(detail::zero_like_levels(f.pyr));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            for (int l = 0; l < cfg.levels; ++l) {
                const auto ctx =
                    detail::psi_forward(fs[i].pyr[std::size_t(l)], fs[j].pyr[std::size_t(l)],
                                        cfg.eps_den);
                bd.l_sd += detail::psi_frobenius_term(ctx, cfg.beta_sd,
                                                      &acc_src[i][std::size_t(l)],
                                                      &acc_src[j][std::size_t(l)]);
            }
        }
    }

    bd.total = cfg.beta_ms * bd.l_ms + cfg.beta_sd * bd.l_sd + cfg.beta_mc * bd.l_mc +
               cfg.beta_fc * bd.l_fc;

    out.source_grads.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<double> g = detail::backprop(sources[i], fs[i], acc_src[i], nullptr, cfg);
        for (std::size_t t = 0; t < g.size(); ++t) g[t] += mix_grad[t];
        out.source_grads.push_back(std::move(g));
    }
    return out;
}

}  // namespace priorsep::losses

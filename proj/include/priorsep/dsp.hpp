#pragma once

#include <cstddef>
#include <utility>

#include "priorsep/core.hpp"

// Differentiable signal-processing kernels. Every forward transform here has
// a paired vector-Jacobian product (suffix _vjp) mapping an output cotangent
// back to an input gradient; the pairs satisfy the inner-product adjoint
// identity in double precision. All functions are pure.

namespace priorsep::dsp {

struct StftConfig {
    int frame_len = 256;
    int hop = 128;
    int fft_len = 256;
};

/// Complex short-time Fourier transform, non-negative frequency bins only.
/// bins is F x T with F = fft_len/2 + 1 and T = floor((d - frame_len)/hop) + 1.
struct ComplexSpectrogram {
    CMat bins;
    StftConfig config;

    int freq_bins() const { return bins.rows; }
    int frames() const { return bins.cols; }
};

struct SpectrogramPyramid {
    std::vector<Mat> levels;  // levels[0] is the full-resolution input
};

/// Forward differences of a real matrix along both axes, zero at the
/// trailing edge, plus the per-cell Euclidean magnitude.
struct GradientField {
    Mat d_time;
    Mat d_freq;
    Mat magnitude;
};

namespace detail {

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

/// In-place iterative radix-2 transform. inverse=true applies e^{+i...}
/// without the 1/n scale, i.e. the unnormalized inverse.
inline void fft_pow2(std::vector<std::complex<double>> &a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * kPi / double(len);
        const std::complex<double> step(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= step;
            }
        }
    }
}

inline void validate_stft_config(const StftConfig &c) {
    if (c.frame_len <= 0 || c.hop <= 0 || c.fft_len <= 0)
        throw RangeError("stft: frame_len, hop and fft_len must be positive");
    if (c.fft_len < c.frame_len)
        throw RangeError("stft: fft_len must be >= frame_len");
    if (!is_pow2(c.fft_len))
        throw RangeError("stft: fft_len must be a power of two");
}

}  // namespace detail

/// Periodic Hann window, w[0] = 0.
inline std::vector<double> hann_periodic(int n) {
    std::vector<double> w(std::size_t(n), 0.0);
    for (int i = 0; i < n; ++i) w[std::size_t(i)] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / n));
    return w;
}

inline int stft_frames(std::size_t signal_len, const StftConfig &c) {
    return int((signal_len - std::size_t(c.frame_len)) / std::size_t(c.hop)) + 1;
}

/// Windowed STFT over full frames only; no centering or padding.
inline ComplexSpectrogram stft(const Waveform &w, const StftConfig &cfg = {}) {
    detail::validate_stft_config(cfg);
    if (w.size() < std::size_t(cfg.frame_len))
        throw DimensionError("stft: signal shorter than one frame");

    const int F = cfg.fft_len / 2 + 1;
    const int T = stft_frames(w.size(), cfg);
    const std::vector<double> win = hann_periodic(cfg.frame_len);

    ComplexSpectrogram out;
    out.config = cfg;
    out.bins = CMat(F, T);
    std::vector<std::complex<double>> buf(std::size_t(cfg.fft_len));
    for (int t = 0; t < T; ++t) {
        const std::size_t off = std::size_t(t) * cfg.hop;
        for (int n = 0; n < cfg.frame_len; ++n)
            buf[std::size_t(n)] = w.samples[off + std::size_t(n)] * win[std::size_t(n)];
        for (int n = cfg.frame_len; n < cfg.fft_len; ++n) buf[std::size_t(n)] = 0.0;
        detail::fft_pow2(buf, false);
        for (int f = 0; f < F; ++f) out.bins(f, t) = buf[std::size_t(f)];
    }
    return out;
}

/// Adjoint of stft: maps dL/dS to dL/dw by windowed overlap-add of the
/// unnormalized inverse transform of each cotangent column.
inline std::vector<double> stft_vjp(const Waveform &w, const CMat &cotangent,
                                    const StftConfig &cfg = {}) {
    detail::validate_stft_config(cfg);
    const int F = cfg.fft_len / 2 + 1;
    if (w.size() < std::size_t(cfg.frame_len))
        throw DimensionError("stft_vjp: signal shorter than one frame");
    const int T = stft_frames(w.size(), cfg);
    if (cotangent.rows != F || cotangent.cols != T)
        throw DimensionError("stft_vjp: cotangent shape does not match stft output");

    const std::vector<double> win = hann_periodic(cfg.frame_len);
    std::vector<double> grad(w.size(), 0.0);
    std::vector<std::complex<double>> buf(std::size_t(cfg.fft_len));
    for (int t = 0; t < T; ++t) {
        for (int f = 0; f < F; ++f) buf[std::size_t(f)] = cotangent(f, t);
        for (int f = F; f < cfg.fft_len; ++f) buf[std::size_t(f)] = 0.0;
        detail::fft_pow2(buf, true);
        const std::size_t off = std::size_t(t) * cfg.hop;
        for (int n = 0; n < cfg.frame_len; ++n)
            grad[off + std::size_t(n)] += win[std::size_t(n)] * buf[std::size_t(n)].real();
    }
    return grad;
}

/// Elementwise log(1 + |S|^2).
inline Mat log_power(const ComplexSpectrogram &S) {
    Mat out(S.bins.rows, S.bins.cols);
    for (std::size_t i = 0; i < S.bins.size(); ++i) {
        const auto z = S.bins.data[i];
        out.data[i] = std::log1p(z.real() * z.real() + z.imag() * z.imag());
    }
    return out;
}

/// Maps dL/dlog_power back to a complex cotangent on the spectrogram bins
/// (real part = dL/dRe, imaginary part = dL/dIm).
inline CMat log_power_vjp(const ComplexSpectrogram &S, const Mat &cotangent) {
    if (S.bins.rows != cotangent.rows || S.bins.cols != cotangent.cols)
        throw DimensionError("log_power_vjp: cotangent shape mismatch");
    CMat out(S.bins.rows, S.bins.cols);
    for (std::size_t i = 0; i < S.bins.size(); ++i) {
        const auto z = S.bins.data[i];
        const double p = z.real() * z.real() + z.imag() * z.imag();
        const double scale = 2.0 * cotangent.data[i] / (1.0 + p);
        out.data[i] = {scale * z.real(), scale * z.imag()};
    }
    return out;
}

inline int pooled_extent(int n) { return (n + 1) / 2; }

/// 2x2 average pooling; edge blocks average over the cells that exist.
inline Mat pool_avg(const Mat &x) {
    Mat out(pooled_extent(x.rows), pooled_extent(x.cols));
    for (int r = 0; r < out.rows; ++r) {
        for (int c = 0; c < out.cols; ++c) {
            const int r1 = std::min(2 * r + 2, x.rows);
            const int c1 = std::min(2 * c + 2, x.cols);
            double s = 0.0;
            for (int i = 2 * r; i < r1; ++i)
                for (int j = 2 * c; j < c1; ++j) s += x(i, j);
            out(r, c) = s / double((r1 - 2 * r) * (c1 - 2 * c));
        }
    }
    return out;
}

/// Distributes each pooled cotangent uniformly over its contributing cells.
inline Mat pool_avg_vjp(int in_rows, int in_cols, const Mat &cotangent) {
    if (cotangent.rows != pooled_extent(in_rows) || cotangent.cols != pooled_extent(in_cols))
        throw DimensionError("pool_avg_vjp: cotangent shape mismatch");
    Mat out(in_rows, in_cols);
    for (int r = 0; r < cotangent.rows; ++r) {
        for (int c = 0; c < cotangent.cols; ++c) {
            const int r1 = std::min(2 * r + 2, in_rows);
            const int c1 = std::min(2 * c + 2, in_cols);
            const double v = cotangent(r, c) / double((r1 - 2 * r) * (c1 - 2 * c));
            for (int i = 2 * r; i < r1; ++i)
                for (int j = 2 * c; j < c1; ++j) out(i, j) += v;
        }
    }
    return out;
}

/// levels[0] = x, levels[l] = pool_avg(levels[l-1]).
inline SpectrogramPyramid pyramid(const Mat &x, int levels) {
    if (levels < 1) throw RangeError("pyramid: need at least one level");
    SpectrogramPyramid p;
    p.levels.reserve(std::size_t(levels));
    p.levels.push_back(x);
    for (int l = 1; l < levels; ++l) p.levels.push_back(pool_avg(p.levels.back()));
    return p;
}

/// Accumulates per-level cotangents back to the full-resolution input.
inline Mat pyramid_vjp(int rows, int cols, const std::vector<Mat> &cotangents) {
    if (cotangents.empty()) throw RangeError("pyramid_vjp: no cotangents");
    // walk shapes down, then fold cotangents back up
    std::vector<std::pair<int, int>> shapes{{rows, cols}};
    for (std::size_t l = 1; l < cotangents.size(); ++l)
        shapes.emplace_back(pooled_extent(shapes.back().first),
                            pooled_extent(shapes.back().second));
    for (std::size_t l = 0; l < cotangents.size(); ++l)
        if (cotangents[l].rows != shapes[l].first || cotangents[l].cols != shapes[l].second)
            throw DimensionError("pyramid_vjp: cotangent shape mismatch at level " +
                                 std::to_string(l + 1));

    Mat acc = cotangents.back();
    for (std::size_t l = cotangents.size() - 1; l > 0; --l) {
        Mat up = pool_avg_vjp(shapes[l - 1].first, shapes[l - 1].second, acc);
        acc = cotangents[l - 1];
        for (std::size_t i = 0; i < acc.size(); ++i) acc.data[i] += up.data[i];
    }
    return acc;
}

inline GradientField grad_field(const Mat &x) {
    if (x.rows < 2 || x.cols < 2) throw DimensionError("grad_field: input must be at least 2x2");
    GradientField g;
    g.d_time = Mat(x.rows, x.cols);
    g.d_freq = Mat(x.rows, x.cols);
    g.magnitude = Mat(x.rows, x.cols);
    for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c + 1 < x.cols; ++c) g.d_time(r, c) = x(r, c + 1) - x(r, c);
    for (int r = 0; r + 1 < x.rows; ++r)
        for (int c = 0; c < x.cols; ++c) g.d_freq(r, c) = x(r + 1, c) - x(r, c);
    for (std::size_t i = 0; i < g.magnitude.size(); ++i)
        g.magnitude.data[i] = std::sqrt(g.d_time.data[i] * g.d_time.data[i] +
                                        g.d_freq.data[i] * g.d_freq.data[i]);
    return g;
}

/// Maps a cotangent on the magnitude back to the input matrix. Cells where
/// the magnitude is zero take the zero subgradient.
inline Mat grad_field_vjp(const GradientField &g, const Mat &mag_cotangent) {
    if (!g.magnitude.same_shape(mag_cotangent))
        throw DimensionError("grad_field_vjp: cotangent shape mismatch");
    const int rows = g.magnitude.rows, cols = g.magnitude.cols;
    Mat out(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double m = g.magnitude(r, c);
            if (m == 0.0) continue;
            const double s = mag_cotangent(r, c) / m;
            const double dt = s * g.d_time(r, c);
            const double df = s * g.d_freq(r, c);
            if (c + 1 < cols) {
                out(r, c + 1) += dt;
                out(r, c) -= dt;
            }
            if (r + 1 < rows) {
                out(r + 1, c) += df;
                out(r, c) -= df;
            }
        }
    }
    return out;
}

}  // namespace priorsep::dsp

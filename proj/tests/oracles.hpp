#pragma once

// Test-side oracles, kept independent of the library's implementation paths:
// a naive per-frame DFT, brute-force pooling, a direct gradient-field
// re-computation, and hand-written forward-mode (JVP) rules for the two
// nonlinear kernels so adjoint identities can be checked without
// finite-difference noise.

#include <complex>
#include <random>
#include <vector>

#include "priorsep/core.hpp"

namespace oracles {

using priorsep::CMat;
using priorsep::Mat;
using priorsep::Waveform;

inline double urand(std::mt19937_64 &gen, double lo = -1.0, double hi = 1.0) {
    return lo + (hi - lo) * priorsep::unit_double(gen());
}

inline Waveform random_waveform(std::mt19937_64 &gen, std::size_t n, double amp = 1.0) {
    Waveform w(n);
    for (auto &x : w.samples) x = amp * urand(gen);
    return w;
}

inline Mat random_mat(std::mt19937_64 &gen, int rows, int cols, double amp = 1.0) {
    Mat m(rows, cols);
    for (auto &x : m.data) x = amp * urand(gen);
    return m;
}

/// Naive O(N^2) windowed DFT, non-negative bins only.
inline CMat naive_stft(const Waveform &w, int frame_len, int hop, int fft_len) {
    const int F = fft_len / 2 + 1;
    const int T = int((w.size() - std::size_t(frame_len)) / std::size_t(hop)) + 1;
    std::vector<double> win(std::size_t(frame_len), 0.0);
    for (int n = 0; n < frame_len; ++n)
        win[std::size_t(n)] = 0.5 * (1.0 - std::cos(2.0 * priorsep::kPi * n / frame_len));
    CMat out(F, T);
    for (int t = 0; t < T; ++t) {
        for (int f = 0; f < F; ++f) {
            std::complex<double> acc = 0.0;
            for (int n = 0; n < frame_len; ++n) {
                const double ang = -2.0 * priorsep::kPi * f * n / fft_len;
                const double x = w.samples[std::size_t(t) * hop + std::size_t(n)] *
                                 win[std::size_t(n)];
                acc += x * std::complex<double>(std::cos(ang), std::sin(ang));
            }
            out(f, t) = acc;
        }
    }
    return out;
}

/// Brute-force 2x2 average pooling with edge truncation.
inline Mat pool_reference(const Mat &x) {
    const int R = (x.rows + 1) / 2, C = (x.cols + 1) / 2;
    Mat out(R, C);
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
            double sum = 0.0;
            int count = 0;
            for (int i = 2 * r; i < std::min(2 * r + 2, x.rows); ++i)
                for (int j = 2 * c; j < std::min(2 * c + 2, x.cols); ++j) {
                    sum += x(i, j);
                    ++count;
                }
            out(r, c) = sum / count;
        }
    return out;
}

/// Direct forward-difference magnitude field.
inline Mat grad_mag_reference(const Mat &x) {
    Mat out(x.rows, x.cols);
    for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < x.cols; ++c) {
            const double dt = (c + 1 < x.cols) ? x(r, c + 1) - x(r, c) : 0.0;
            const double df = (r + 1 < x.rows) ? x(r + 1, c) - x(r, c) : 0.0;
            out(r, c) = std::sqrt(dt * dt + df * df);
        }
    return out;
}

/// Forward-mode rule for log(1+|S|^2): dY = 2(Re S dRe + Im S dIm)/(1+|S|^2).
inline Mat log_power_jvp(const CMat &s, const CMat &ds) {
    Mat out(s.rows, s.cols);
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        const auto z = s.data[i];
        const auto d = ds.data[i];
        const double p = z.real() * z.real() + z.imag() * z.imag();
        out.data[i] = 2.0 * (z.real() * d.real() + z.imag() * d.imag()) / (1.0 + p);
    }
    return out;
}

/// Forward-mode rule for the gradient-field magnitude.
inline Mat grad_mag_jvp(const Mat &x, const Mat &dx) {
    Mat out(x.rows, x.cols);
    for (int r = 0; r < x.rows; ++r)
        for (int c = 0; c < x.cols; ++c) {
            const double dt = (c + 1 < x.cols) ? x(r, c + 1) - x(r, c) : 0.0;
            const double df = (r + 1 < x.rows) ? x(r + 1, c) - x(r, c) : 0.0;
            const double m = std::sqrt(dt * dt + df * df);
            if (m == 0.0) continue;
            const double ddt = (c + 1 < x.cols) ? dx(r, c + 1) - dx(r, c) : 0.0;
            const double ddf = (r + 1 < x.rows) ? dx(r + 1, c) - dx(r, c) : 0.0;
            out(r, c) = (dt * ddt + df * ddf) / m;
        }
    return out;
}

inline double inner(const Mat &a, const Mat &b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

inline double inner_real(const CMat &a, const CMat &b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        s += a.data[i].real() * b.data[i].real() + a.data[i].imag() * b.data[i].imag();
    return s;
}

inline CMat random_cmat(std::mt19937_64 &gen, int rows, int cols, double amp = 1.0) {
    CMat m(rows, cols);
    for (auto &z : m.data) z = {amp * urand(gen), amp * urand(gen)};
    return m;
}

}  // namespace oracles

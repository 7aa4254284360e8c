#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace priorsep {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDefaultSampleRate = 16000.0;

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shape or length disagreement between operands.
struct DimensionError : Error {
    using Error::Error;
};

/// A numeric argument violated its documented range.
struct RangeError : Error {
    using Error::Error;
};

/// Mono time-domain signal with a fixed sample rate.
struct Waveform {
    std::vector<double> samples;
    double sample_rate = kDefaultSampleRate;

    Waveform() = default;
    explicit Waveform(std::size_t n, double rate = kDefaultSampleRate)
        : samples(n, 0.0), sample_rate(rate) {}
    Waveform(std::vector<double> s, double rate = kDefaultSampleRate)
        : samples(std::move(s)), sample_rate(rate) {}

    std::size_t size() const { return samples.size(); }
    double &operator[](std::size_t i) { return samples[i]; }
    double operator[](std::size_t i) const { return samples[i]; }
};

/// Dense row-major real matrix. Rows index frequency, columns index time.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), data(std::size_t(r) * c, fill) {}

    double &operator()(int r, int c) { return data[std::size_t(r) * cols + c]; }
    double operator()(int r, int c) const { return data[std::size_t(r) * cols + c]; }
    std::size_t size() const { return data.size(); }

    bool same_shape(const Mat &o) const { return rows == o.rows && cols == o.cols; }
};

/// Dense row-major complex matrix.
struct CMat {
    int rows = 0;
    int cols = 0;
    std::vector<std::complex<double>> data;

    CMat() = default;
    CMat(int r, int c) : rows(r), cols(c), data(std::size_t(r) * c) {}

    std::complex<double> &operator()(int r, int c) { return data[std::size_t(r) * cols + c]; }
    std::complex<double> operator()(int r, int c) const { return data[std::size_t(r) * cols + c]; }
    std::size_t size() const { return data.size(); }
};

inline double frobenius_norm(const Mat &m) {
    double s = 0.0;
    for (double v : m.data) s += v * v;
    return std::sqrt(s);
}

inline bool all_finite(const std::vector<double> &v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Mat &m) { return all_finite(m.data); }

inline double peak_abs(const Waveform &w) {
    double p = 0.0;
    for (double x : w.samples) p = std::max(p, std::abs(x));
    return p;
}

/// Scales to max |x| = 1. A silent input is returned unchanged.
inline Waveform peak_normalize(const Waveform &w) {
    double p = peak_abs(w);
    if (p == 0.0) return w;
    Waveform out = w;
    for (double &x : out.samples) x /= p;
    return out;
}

inline double rms(const Waveform &w) {
    if (w.samples.empty()) return 0.0;
    double s = 0.0;
    for (double x : w.samples) s += x * x;
    return std::sqrt(s / double(w.samples.size()));
}

inline double dot(const std::vector<double> &a, const std::vector<double> &b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// ---- deterministic bit mixing / hashing -----------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Maps 64 random bits to a double in [0, 1). Implementation-independent,
/// unlike std::uniform_real_distribution.
inline double unit_double(std::uint64_t bits) {
    return double(bits >> 11) * 0x1.0p-53;
}

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline std::uint64_t fnv1a64(const void *bytes, std::size_t n, std::uint64_t h = kFnvOffset) {
    const auto *p = static_cast<const unsigned char *>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

inline std::uint64_t fnv1a64(const std::string &s) { return fnv1a64(s.data(), s.size()); }

}  // namespace priorsep

#pragma once

#include <cstring>
#include <fstream>
#include <memory>
#include <random>

#include "priorsep/core.hpp"

// Source-specific differentiable generators. Each prior maps a latent vector
// in [-1,1]^d_z to a waveform and exposes the exact reverse-mode gradient of
// that map. Priors are immutable after construction.

namespace priorsep::priors {

using LatentVector = std::vector<double>;

/// Elementwise clamp onto the [-1,1] box. Idempotent and non-expansive.
inline LatentVector project(LatentVector z) {
    for (double &v : z) v = std::clamp(v, -1.0, 1.0);
    return z;
}

/// I.i.d. uniform draw from [-1,1]^d_z, reproducible across platforms.
inline LatentVector sample_latent(std::uint64_t seed, int d_z) {
    if (d_z <= 0) throw RangeError("sample_latent: d_z must be positive");
    std::mt19937_64 gen(seed);
    LatentVector z(std::size_t(d_z), 0.0);
    for (double &v : z) v = 2.0 * unit_double(gen()) - 1.0;
    return z;
}

class GeneratorPrior {
public:
    virtual ~GeneratorPrior() = default;
    virtual const char *kind() const = 0;
    virtual int latent_dim() const = 0;
    virtual std::size_t output_length() const = 0;
    virtual Waveform generate(const LatentVector &z) const = 0;
    /// dL/dz given dL/dx. Latent slots the generator ignores receive zero.
    virtual LatentVector generate_vjp(const LatentVector &z,
                                      const std::vector<double> &cotangent) const = 0;

protected:
    void check_latent(const LatentVector &z) const {
        if (int(z.size()) != latent_dim())
            throw DimensionError(std::string(kind()) + " prior: latent dimension mismatch");
    }
    void check_cotangent(const std::vector<double> &c) const {
        if (c.size() != output_length())
            throw DimensionError(std::string(kind()) + " prior: cotangent length mismatch");
    }
};

// ---- harmonic ---------------------------------------------------------------

/// Decaying harmonic stack. Latent slots: z[0] log-spaced fundamental,
/// z[1..H] per-harmonic gains, z[H+1] decay rate; the rest are unused.
struct HarmonicParams {
    double f_min = 80.0;
    double f_max = 1000.0;
    int harmonics = 8;
    double alpha_max = 8.0;  // max envelope decay, 1/s
    int latent_dim = 100;
    std::size_t length = 16384;
    double sample_rate = kDefaultSampleRate;
};

class HarmonicPrior final : public GeneratorPrior {
public:
    explicit HarmonicPrior(HarmonicParams p = {}) : p_(p) {
        if (p_.harmonics < 1) throw RangeError("harmonic prior: need at least one harmonic");
        if (!(p_.f_min > 0.0 && p_.f_min < p_.f_max))
            throw RangeError("harmonic prior: need 0 < f_min < f_max");
        if (p_.f_max * p_.harmonics > p_.sample_rate / 2.0)
            throw RangeError("harmonic prior: highest harmonic exceeds the Nyquist rate");
        if (p_.latent_dim < p_.harmonics + 2)
            throw RangeError("harmonic prior: latent_dim too small for the slot map");
        if (p_.length == 0) throw RangeError("harmonic prior: empty output");
    }

    const char *kind() const override { return "harmonic"; }
    int latent_dim() const override { return p_.latent_dim; }
    std::size_t output_length() const override { return p_.length; }
    const HarmonicParams &params() const { return p_; }

    double fundamental(const LatentVector &z) const {
        return p_.f_min * std::pow(p_.f_max / p_.f_min, (z[0] + 1.0) / 2.0);
    }

    Waveform generate(const LatentVector &z) const override {
        check_latent(z);
        const int H = p_.harmonics;
        const double f0 = fundamental(z);
        const double alpha = p_.alpha_max * (z[std::size_t(H) + 1] + 1.0) / 2.0;
        std::vector<double> gains(std::size_t(H), 0.0);
        for (int h = 1; h <= H; ++h)
            gains[std::size_t(h - 1)] = ((z[std::size_t(h)] + 1.0) / 2.0) / double(h);

        Waveform out(p_.length, p_.sample_rate);
        const double w0 = 2.0 * kPi * f0 / p_.sample_rate;
        for (std::size_t t = 0; t < p_.length; ++t) {
            const double tt = double(t);
            double sum = 0.0;
            for (int h = 1; h <= H; ++h)
                sum += gains[std::size_t(h - 1)] * std::sin(w0 * h * tt);
            out.samples[t] = std::exp(-alpha * tt / p_.sample_rate) * sum;
        }
        return out;
    }

    LatentVector generate_vjp(const LatentVector &z,
                              const std::vector<double> &cotangent) const override {
        check_latent(z);
        check_cotangent(cotangent);
        const int H = p_.harmonics;
        const double f0 = fundamental(z);
        const double alpha = p_.alpha_max * (z[std::size_t(H) + 1] + 1.0) / 2.0;
        const double w0 = 2.0 * kPi * f0 / p_.sample_rate;
        const double dw0_dz0 = w0 * std::log(p_.f_max / p_.f_min) / 2.0;
        std::vector<double> gains(std::size_t(H), 0.0);
        for (int h = 1; h <= H; ++h)
            gains[std::size_t(h - 1)] = ((z[std::size_t(h)] + 1.0) / 2.0) / double(h);

        LatentVector grad(z.size(), 0.0);
        for (std::size_t t = 0; t < p_.length; ++t) {
            const double tt = double(t);
            const double env = std::exp(-alpha * tt / p_.sample_rate);
            const double cbar = cotangent[t] * env;
            if (cbar == 0.0) continue;
            double sum = 0.0;        // carrier, for the decay slot
            double dsum_dw0 = 0.0;   // d(carrier)/d(w0)
            for (int h = 1; h <= H; ++h) {
                const double phase = w0 * h * tt;
                const double s = std::sin(phase);
                const double c = std::cos(phase);
                const double g = gains[std::size_t(h - 1)];
                sum += g * s;
                dsum_dw0 += g * c * double(h) * tt;
                grad[std::size_t(h)] += cbar * s / (2.0 * double(h));
            }
            grad[0] += cbar * dsum_dw0 * dw0_dz0;
            grad[std::size_t(H) + 1] +=
                cbar * sum * (-tt / p_.sample_rate) * (p_.alpha_max / 2.0);
        }
        return grad;
    }

private:
    HarmonicParams p_;
};

// ---- percussive -------------------------------------------------------------

/// Decaying filtered-noise burst. Latent slots: z[0] gain, z[1] decay rate,
/// z[2] one-pole lowpass coefficient; the rest are unused. The noise table is
/// drawn once from a fixed seed so generation stays deterministic.
struct PercussiveParams {
    double beta_min = 2.0;   // decay range, 1/s
    double beta_max = 24.0;
    double lp_min = 0.05;    // lowpass pole range
    double lp_max = 0.95;
    std::uint64_t noise_seed = 0x5EEDAB1E0DD17ULL;
    int latent_dim = 100;
    std::size_t length = 16384;
    double sample_rate = kDefaultSampleRate;
};

class PercussivePrior final : public GeneratorPrior {
public:
    explicit PercussivePrior(PercussiveParams p = {}) : p_(p) {
        if (!(p_.beta_min >= 0.0 && p_.beta_min < p_.beta_max))
            throw RangeError("percussive prior: need 0 <= beta_min < beta_max");
        if (!(p_.lp_min > 0.0 && p_.lp_min < p_.lp_max && p_.lp_max < 1.0))
            throw RangeError("percussive prior: need 0 < lp_min < lp_max < 1");
        if (p_.latent_dim < 3) throw RangeError("percussive prior: latent_dim too small");
        if (p_.length == 0) throw RangeError("percussive prior: empty output");
        std::mt19937_64 gen(p_.noise_seed);
        noise_.resize(p_.length);
        for (double &n : noise_) n = 2.0 * unit_double(gen()) - 1.0;
    }

    const char *kind() const override { return "percussive"; }
    int latent_dim() const override { return p_.latent_dim; }
    std::size_t output_length() const override { return p_.length; }
    const PercussiveParams &params() const { return p_; }

    Waveform generate(const LatentVector &z) const override {
        check_latent(z);
        const double g = (z[0] + 1.0) / 2.0;
        const double beta = p_.beta_min + (p_.beta_max - p_.beta_min) * (z[1] + 1.0) / 2.0;
        const double a = p_.lp_min + (p_.lp_max - p_.lp_min) * (z[2] + 1.0) / 2.0;

        Waveform out(p_.length, p_.sample_rate);
        double lp = 0.0;
        for (std::size_t t = 0; t < p_.length; ++t) {
            lp = a * lp + (1.0 - a) * noise_[t];
            out.samples[t] = g * std::exp(-beta * double(t) / p_.sample_rate) * lp;
        }
        return out;
    }

    LatentVector generate_vjp(const LatentVector &z,
                              const std::vector<double> &cotangent) const override {
        check_latent(z);
        check_cotangent(cotangent);
        const double g = (z[0] + 1.0) / 2.0;
        const double beta = p_.beta_min + (p_.beta_max - p_.beta_min) * (z[1] + 1.0) / 2.0;
        const double a = p_.lp_min + (p_.lp_max - p_.lp_min) * (z[2] + 1.0) / 2.0;

        LatentVector grad(z.size(), 0.0);
        double lp = 0.0;
        double dlp_da = 0.0;  // forward-mode sensitivity of the recurrence
        for (std::size_t t = 0; t < p_.length; ++t) {
            dlp_da = lp + a * dlp_da - noise_[t];
            lp = a * lp + (1.0 - a) * noise_[t];
            const double tt = double(t) / p_.sample_rate;
            const double env = std::exp(-beta * tt);
            const double cbar = cotangent[t];
            grad[0] += cbar * env * lp * 0.5;
            grad[1] += cbar * g * (-tt) * env * lp * (p_.beta_max - p_.beta_min) * 0.5;
            grad[2] += cbar * g * env * dlp_da * (p_.lp_max - p_.lp_min) * 0.5;
        }
        return grad;
    }

private:
    PercussiveParams p_;
    std::vector<double> noise_;
};

// ---- neural decoder ---------------------------------------------------------

struct WeightFileError : Error {
    using Error::Error;
};
struct BadMagicError : WeightFileError {
    using WeightFileError::WeightFileError;
};
struct WeightVersionError : WeightFileError {
    using WeightFileError::WeightFileError;
};
struct WeightDimensionError : WeightFileError {
    using WeightFileError::WeightFileError;
};
struct WeightChecksumError : WeightFileError {
    using WeightFileError::WeightFileError;
};
struct WeightTruncatedError : WeightFileError {
    using WeightFileError::WeightFileError;
};

inline constexpr int kDecoderBaseWidth = 16;  // time extent after the dense layer
inline constexpr std::uint32_t kDecoderKernel = 25;
inline constexpr std::uint32_t kDecoderStride = 4;
inline constexpr int kDecoderPad = 11;  // with output padding 1: out_len = 4 * in_len
inline constexpr std::uint32_t kWeightFileVersion = 1;

/// One layer of the decoder. Layer 0 is dense (kernel 1, stride 1, weights
/// [out][in] row-major); later layers are transposed convolutions (weights
/// [in][out][kernel] row-major). Biases follow the weights.
struct DecoderLayer {
    std::uint32_t in_dim = 0;
    std::uint32_t out_dim = 0;
    std::uint32_t kernel = 0;
    std::uint32_t stride = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    std::size_t weight_count() const {
        return std::size_t(in_dim) * out_dim * kernel;
    }
};

struct NeuralDecoderParams {
    std::vector<DecoderLayer> layers;

    int latent_dim() const { return int(layers.at(0).in_dim); }
    int deconv_layers() const { return int(layers.size()) - 1; }

    std::size_t output_length() const {
        std::size_t len = std::size_t(kDecoderBaseWidth);
        for (int r = 0; r < deconv_layers(); ++r) len *= kDecoderStride;
        return len;
    }

    /// Checks the layer-shape relationships only (usable before any weight
    /// payload has been read).
    void validate_dims() const {
        if (layers.empty()) throw WeightDimensionError("decoder: no layers");
        const DecoderLayer &dense = layers[0];
        if (dense.kernel != 1 || dense.stride != 1)
            throw WeightDimensionError("decoder: layer 0 must be dense (kernel 1, stride 1)");
        if (dense.in_dim == 0)
            throw WeightDimensionError("decoder: layer 0 input dimension is zero");
        if (dense.out_dim == 0 || dense.out_dim % kDecoderBaseWidth != 0)
            throw WeightDimensionError("decoder: layer 0 output must be a multiple of " +
                                       std::to_string(kDecoderBaseWidth));
        std::uint32_t channels = dense.out_dim / kDecoderBaseWidth;
        for (std::size_t r = 1; r < layers.size(); ++r) {
            const DecoderLayer &l = layers[r];
            if (l.kernel != kDecoderKernel || l.stride != kDecoderStride)
                throw WeightDimensionError("decoder: layer " + std::to_string(r) +
                                           " must have kernel 25 and stride 4");
            if (l.in_dim != channels)
                throw WeightDimensionError("decoder: layer " + std::to_string(r) +
                                           " input channels disagree with layer " +
                                           std::to_string(r - 1));
            channels = l.out_dim;
        }
        if (channels != 1)
            throw WeightDimensionError("decoder: final layer must emit one channel");
    }

    void validate() const {
        validate_dims();
        for (std::size_t r = 0; r < layers.size(); ++r) {
            const DecoderLayer &l = layers[r];
            if (l.weights.size() != l.weight_count() || l.bias.size() != l.out_dim)
                throw WeightDimensionError("decoder: layer " + std::to_string(r) +
                                           " parameter count mismatch");
            if (!all_finite(l.weights) || !all_finite(l.bias))
                throw RangeError("decoder: layer " + std::to_string(r) +
                                 " has non-finite parameters");
        }
    }
};

/// WaveGAN-shaped decoder: dense projection, then transposed convolutions
/// with rectifier activations and a final tanh.
class NeuralDecoderPrior final : public GeneratorPrior {
public:
    explicit NeuralDecoderPrior(NeuralDecoderParams params) : p_(std::move(params)) {
        p_.validate();
    }

    const char *kind() const override { return "neural"; }
    int latent_dim() const override { return p_.latent_dim(); }
    std::size_t output_length() const override { return p_.output_length(); }
    const NeuralDecoderParams &params() const { return p_; }

    Waveform generate(const LatentVector &z) const override {
        check_latent(z);
        std::vector<std::vector<double>> pre;
        Waveform out(output_length(), kDefaultSampleRate);
        out.samples = forward(z, pre);
        return out;
    }

    LatentVector generate_vjp(const LatentVector &z,
                              const std::vector<double> &cotangent) const override {
        check_latent(z);
        check_cotangent(cotangent);
        std::vector<std::vector<double>> pre;  // pre-activation of every layer
        const std::vector<double> y = forward(z, pre);

        // final activation: tanh
        std::vector<double> bar(y.size());
        for (std::size_t i = 0; i < y.size(); ++i)
            bar[i] = cotangent[i] * (1.0 - y[i] * y[i]);

        for (std::size_t r = p_.layers.size(); r-- > 1;) {
            const DecoderLayer &l = p_.layers[r];
            const int in_len = layer_in_len(int(r));
            std::vector<double> prev_bar(std::size_t(l.in_dim) * std::size_t(in_len), 0.0);
            const int out_len = in_len * int(kDecoderStride);
            for (std::uint32_t ci = 0; ci < l.in_dim; ++ci) {
                for (int i = 0; i < in_len; ++i) {
                    double acc = 0.0;
                    for (std::uint32_t co = 0; co < l.out_dim; ++co) {
                        const double *w =
                            &l.weights[(std::size_t(ci) * l.out_dim + co) * l.kernel];
                        const std::size_t out_base = std::size_t(co) * std::size_t(out_len);
                        for (std::uint32_t m = 0; m < l.kernel; ++m) {
                            const int j = i * int(kDecoderStride) + int(m) - kDecoderPad;
                            if (j >= 0 && j < out_len)
                                acc += bar[out_base + std::size_t(j)] * w[m];
                        }
                    }
                    prev_bar[std::size_t(ci) * std::size_t(in_len) + std::size_t(i)] = acc;
                }
            }
            // rectifier backward on the producing layer's pre-activations
            const std::vector<double> &prev_pre = pre[r - 1];
            for (std::size_t i = 0; i < prev_bar.size(); ++i)
                if (prev_pre[i] <= 0.0) prev_bar[i] = 0.0;
            bar = std::move(prev_bar);
        }

        const DecoderLayer &dense = p_.layers[0];
        LatentVector grad(z.size(), 0.0);
        for (std::uint32_t o = 0; o < dense.out_dim; ++o) {
            const double b = bar[o];
            if (b == 0.0) continue;
            const double *w = &dense.weights[std::size_t(o) * dense.in_dim];
            for (std::uint32_t i = 0; i < dense.in_dim; ++i) grad[i] += b * w[i];
        }
        return grad;
    }

private:
    int layer_in_len(int r) const {
        int len = kDecoderBaseWidth;
        for (int i = 1; i < r; ++i) len *= int(kDecoderStride);
        return len;
    }

    std::vector<double> forward(const LatentVector &z,
                                std::vector<std::vector<double>> &pre) const {
        const DecoderLayer &dense = p_.layers[0];
        std::vector<double> act(dense.out_dim);
        for (std::uint32_t o = 0; o < dense.out_dim; ++o) {
            double s = dense.bias[o];
            const double *w = &dense.weights[std::size_t(o) * dense.in_dim];
            for (std::uint32_t i = 0; i < dense.in_dim; ++i) s += w[i] * z[i];
            act[o] = s;
        }
        pre.push_back(act);
        const bool dense_only = p_.layers.size() == 1;
        if (!dense_only)
            for (double &v : act) v = std::max(v, 0.0);

        int in_len = kDecoderBaseWidth;
        for (std::size_t r = 1; r < p_.layers.size(); ++r) {
            const DecoderLayer &l = p_.layers[r];
            const int out_len = in_len * int(kDecoderStride);
            std::vector<double> next(std::size_t(l.out_dim) * std::size_t(out_len));
            for (std::uint32_t co = 0; co < l.out_dim; ++co)
                for (int j = 0; j < out_len; ++j)
                    next[std::size_t(co) * std::size_t(out_len) + std::size_t(j)] = l.bias[co];
            for (std::uint32_t ci = 0; ci < l.in_dim; ++ci) {
                for (int i = 0; i < in_len; ++i) {
                    const double x = act[std::size_t(ci) * std::size_t(in_len) + std::size_t(i)];
                    if (x == 0.0) continue;
                    for (std::uint32_t co = 0; co < l.out_dim; ++co) {
                        const double *w =
                            &l.weights[(std::size_t(ci) * l.out_dim + co) * l.kernel];
                        const std::size_t out_base = std::size_t(co) * std::size_t(out_len);
                        for (std::uint32_t m = 0; m < l.kernel; ++m) {
                            const int j = i * int(kDecoderStride) + int(m) - kDecoderPad;
                            if (j >= 0 && j < out_len) next[out_base + std::size_t(j)] += x * w[m];
                        }
                    }
                }
            }
            pre.push_back(next);
            const bool last = r + 1 == p_.layers.size();
            if (!last)
                for (double &v : next) v = std::max(v, 0.0);
            act = std::move(next);
            in_len = out_len;
        }
        for (double &v : act) v = std::tanh(v);
        return act;
    }

    NeuralDecoderParams p_;
};

// ---- weight file ------------------------------------------------------------
//
// Binary little-endian layout:
//   "GPRW" | u32 version | u32 layer_count
//   per layer: u32 in_dim, u32 out_dim, u32 kernel, u32 stride
//   per layer: f32 weights (in*out*kernel, row-major) then f32 bias (out)
//   u64 FNV-1a checksum of all preceding bytes

namespace detail {

inline void put_u32(std::string &buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(char((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string &buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(char((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string &buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

struct Reader {
    const unsigned char *p;
    std::size_t n;
    std::size_t pos = 0;

    bool need(std::size_t k) const { return pos + k <= n; }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[pos + std::size_t(i)]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[pos + std::size_t(i)]) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

}  // namespace detail

inline void save_weights(const NeuralDecoderParams &params, const std::string &path) {
    params.validate();
    std::string buf;
    buf += "GPRW";
    detail::put_u32(buf, kWeightFileVersion);
    detail::put_u32(buf, std::uint32_t(params.layers.size()));
    for (const DecoderLayer &l : params.layers) {
        detail::put_u32(buf, l.in_dim);
        detail::put_u32(buf, l.out_dim);
        detail::put_u32(buf, l.kernel);
        detail::put_u32(buf, l.stride);
    }
    for (const DecoderLayer &l : params.layers) {
        for (double w : l.weights) detail::put_f32(buf, float(w));
        for (double b : l.bias) detail::put_f32(buf, float(b));
    }
    detail::put_u64(buf, fnv1a64(buf.data(), buf.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("save_weights: cannot open " + path);
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw Error("save_weights: write failed for " + path);
}

inline NeuralDecoderParams load_weights(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("load_weights: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    constexpr std::size_t kMinSize = 4 + 4 + 4 + 8;
    if (buf.size() < kMinSize)
        throw WeightTruncatedError("load_weights: file shorter than the fixed header");

    const std::size_t body = buf.size() - 8;
    detail::Reader r{reinterpret_cast<const unsigned char *>(buf.data()), buf.size()};
    r.pos = body;
    const std::uint64_t stored = r.u64();
    const std::uint64_t computed = fnv1a64(buf.data(), body);
    if (stored != computed) throw WeightChecksumError("load_weights: checksum mismatch");

    r.pos = 0;
    if (std::memcmp(buf.data(), "GPRW", 4) != 0)
        throw BadMagicError("load_weights: bad magic bytes");
    r.pos = 4;
    const std::uint32_t version = r.u32();
    if (version != kWeightFileVersion)
        throw WeightVersionError("load_weights: unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    if (count == 0 || count > 64)
        throw WeightDimensionError("load_weights: implausible layer count " +
                                   std::to_string(count));
    if (!r.need(std::size_t(count) * 16 + 8))
        throw WeightTruncatedError("load_weights: header truncated");

    NeuralDecoderParams params;
    params.layers.resize(count);
    for (auto &l : params.layers) {
        l.in_dim = r.u32();
        l.out_dim = r.u32();
        l.kernel = r.u32();
        l.stride = r.u32();
    }
    params.validate_dims();
    std::size_t floats = 0;
    for (const auto &l : params.layers)
        floats += l.weight_count() + l.out_dim;
    if (body != r.pos + floats * 4)
        throw WeightTruncatedError("load_weights: payload size disagrees with the header");
    for (auto &l : params.layers) {
        l.weights.resize(l.weight_count());
        for (double &w : l.weights) w = double(r.f32());
        l.bias.resize(l.out_dim);
        for (double &b : l.bias) b = double(r.f32());
    }
    params.validate();
    return params;
}

}  // namespace priorsep::priors

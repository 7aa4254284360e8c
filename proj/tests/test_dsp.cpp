#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "priorsep/dsp.hpp"

using namespace priorsep;
using Catch::Approx;

namespace {
Waveform tone(std::size_t n, double freq, double amp = 1.0, double rate = 16000.0) {
    Waveform w(n, rate);
    for (std::size_t t = 0; t < n; ++t)
        w.samples[t] = amp * std::sin(2.0 * kPi * freq * double(t) / rate);
    return w;
}
}  // namespace

TEST_CASE("stft default shape is 129x127 for 16384 samples") {
    const auto s = dsp::stft(Waveform(16384));
    CHECK(s.freq_bins() == 129);
    CHECK(s.frames() == 127);
}

TEST_CASE("stft of silence is zero") {
    const auto s = dsp::stft(Waveform(16384));
    for (const auto &z : s.bins.data) CHECK(std::abs(z) == 0.0);
}

TEST_CASE("stft of a unit impulse at sample zero is zero (window null at origin)") {
    Waveform w(4096);
    w.samples[0] = 1.0;
    const auto s = dsp::stft(w);
    double peak = 0.0;
    for (const auto &z : s.bins.data) peak = std::max(peak, std::abs(z));
    CHECK(peak == 0.0);
}

TEST_CASE("stft of an exact-bin tone peaks at that bin and matches the naive DFT") {
    const Waveform w = tone(4096, 4000.0);  // bin 64 of a 256-point transform at 16 kHz
    const auto s = dsp::stft(w);
    const auto ref = oracles::naive_stft(w, 256, 128, 256);
    for (int t = 0; t < s.frames(); ++t) {
        int argmax = 0;
        double best = -1.0;
        for (int f = 0; f < s.freq_bins(); ++f) {
            const double m = std::abs(s.bins(f, t));
            if (m > best) {
                best = m;
                argmax = f;
            }
        }
        CHECK(argmax == 64);
        CHECK(best == Approx(std::abs(ref(64, t))).margin(1e-9));
        CHECK(best == Approx(64.0).margin(1e-6));  // amplitude * window sum / 2
    }
}

TEST_CASE("stft equals the naive DFT oracle on random signals") {
    std::mt19937_64 gen(101);
    for (int trial = 0; trial < 3; ++trial) {
        const Waveform w = oracles::random_waveform(gen, 2048);
        const auto fast = dsp::stft(w);
        const auto ref = oracles::naive_stft(w, 256, 128, 256);
        double max_err = 0.0;
        for (std::size_t i = 0; i < fast.bins.size(); ++i)
            max_err = std::max(max_err, std::abs(fast.bins.data[i] - ref.data[i]));
        CHECK(max_err <= 1e-9);
    }
}

TEST_CASE("stft is linear") {
    std::mt19937_64 gen(102);
    const Waveform a = oracles::random_waveform(gen, 2048);
    const Waveform b = oracles::random_waveform(gen, 2048);
    const double ca = 0.7, cb = -1.3;
    Waveform mix(2048);
    for (std::size_t i = 0; i < mix.size(); ++i)
        mix.samples[i] = ca * a.samples[i] + cb * b.samples[i];
    const auto sm = dsp::stft(mix);
    const auto sa = dsp::stft(a);
    const auto sb = dsp::stft(b);
    double scale = 0.0;
    for (const auto &z : sm.bins.data) scale = std::max(scale, std::abs(z));
    for (std::size_t i = 0; i < sm.bins.size(); ++i) {
        const auto expect = ca * sa.bins.data[i] + cb * sb.bins.data[i];
        CHECK(std::abs(sm.bins.data[i] - expect) <= 1e-12 * std::max(1.0, scale));
    }
}

TEST_CASE("stft rejects too-short signals") {
    CHECK_THROWS_AS(dsp::stft(Waveform(100)), DimensionError);
}

TEST_CASE("stft_vjp satisfies the adjoint identity") {
    std::mt19937_64 gen(103);
    for (int trial = 0; trial < 20; ++trial) {
        const Waveform w = oracles::random_waveform(gen, 1024);
        const auto s = dsp::stft(w);
        const auto cot = oracles::random_cmat(gen, s.freq_bins(), s.frames());
        const auto grad = dsp::stft_vjp(w, cot);

        // stft is linear, so <stft(w), C> = <w, vjp(C)> exactly
        const double lhs = oracles::inner_real(s.bins, cot);
        const double rhs = dot(w.samples, grad);
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max({std::abs(lhs), std::abs(rhs), 1.0}));
    }
}

TEST_CASE("stft_vjp of a zero cotangent is zero and shapes are enforced") {
    const Waveform w(1024);
    const auto s = dsp::stft(w);
    CMat zero(s.freq_bins(), s.frames());
    const auto grad = dsp::stft_vjp(w, zero);
    for (double g : grad) CHECK(g == 0.0);
    CMat bad(3, 3);
    CHECK_THROWS_AS(dsp::stft_vjp(w, bad), DimensionError);
}

TEST_CASE("d/dw of sum(|stft(w)|^2) matches central differences") {
    std::mt19937_64 gen(104);
    Waveform w = oracles::random_waveform(gen, 512);
    const auto s = dsp::stft(w);
    // dL/dS for L = sum |S|^2 is 2S under the real pairing
    CMat cot = s.bins;
    for (auto &z : cot.data) z *= 2.0;
    const auto grad = dsp::stft_vjp(w, cot);

    const auto energy = [](const Waveform &x) {
        const auto sp = dsp::stft(x);
        double e = 0.0;
        for (const auto &z : sp.bins.data) e += std::norm(z);
        return e;
    };
    const double h = 1e-6;
    std::vector<double> fd, an;
    for (std::size_t c = 37; c < w.size(); c += 41) {
        const double keep = w.samples[c];
        w.samples[c] = keep + h;
        const double up = energy(w);
        w.samples[c] = keep - h;
        const double dn = energy(w);
        w.samples[c] = keep;
        fd.push_back((up - dn) / (2.0 * h));
        an.push_back(grad[c]);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        num += (fd[i] - an[i]) * (fd[i] - an[i]);
        den += fd[i] * fd[i];
    }
    CHECK(std::sqrt(num) <= 1e-6 * std::sqrt(den));
}

TEST_CASE("log_power basics") {
    dsp::ComplexSpectrogram s;
    s.bins = CMat(2, 2);
    s.bins(0, 0) = 0.0;
    s.bins(0, 1) = std::sqrt(std::exp(1.0) - 1.0);
    s.bins(1, 0) = {3.0, 4.0};
    const Mat lp = dsp::log_power(s);
    CHECK(lp(0, 0) == 0.0);
    CHECK(lp(0, 1) == Approx(1.0).epsilon(1e-12));
    CHECK(lp(1, 0) == Approx(std::log1p(25.0)).epsilon(1e-12));
    for (double v : lp.data) CHECK(v >= 0.0);
}

TEST_CASE("log_power_vjp matches finite differences on a random 8x8 input") {
    std::mt19937_64 gen(105);
    dsp::ComplexSpectrogram s;
    s.bins = oracles::random_cmat(gen, 8, 8, 2.0);
    const Mat cot = oracles::random_mat(gen, 8, 8);
    const CMat g = dsp::log_power_vjp(s, cot);

    const auto f = [&](const CMat &bins) {
        dsp::ComplexSpectrogram tmp;
        tmp.bins = bins;
        const Mat lp = dsp::log_power(tmp);
        return oracles::inner(lp, cot);
    };
    const double h = 1e-7;
    double worst = 0.0;
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            CMat b = s.bins;
            b(i, j) += h;
            const double up_re = f(b);
            b(i, j) -= 2 * h;
            const double dn_re = f(b);
            const double dre = (up_re - dn_re) / (2 * h);

            b = s.bins;
            b(i, j) += std::complex<double>(0, h);
            const double up_im = f(b);
            b(i, j) -= std::complex<double>(0, 2 * h);
            const double dn_im = f(b);
            const double dim = (up_im - dn_im) / (2 * h);

            worst = std::max(worst, std::abs(dre - g(i, j).real()));
            worst = std::max(worst, std::abs(dim - g(i, j).imag()));
        }
    }
    CHECK(worst <= 1e-7);
}

TEST_CASE("log_power jvp/vjp adjoint identity") {
    std::mt19937_64 gen(106);
    for (int trial = 0; trial < 20; ++trial) {
        dsp::ComplexSpectrogram s;
        s.bins = oracles::random_cmat(gen, 6, 7, 2.0);
        const CMat ds = oracles::random_cmat(gen, 6, 7);
        const Mat cot = oracles::random_mat(gen, 6, 7);
        const Mat jvp = oracles::log_power_jvp(s.bins, ds);
        const CMat vjp = dsp::log_power_vjp(s, cot);
        const double lhs = oracles::inner(jvp, cot);
        const double rhs = oracles::inner_real(ds, vjp);
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max({std::abs(lhs), std::abs(rhs), 1.0}));
    }
}

TEST_CASE("pyramid of a constant matrix stays constant") {
    Mat x(9, 13, 3.25);
    const auto p = dsp::pyramid(x, 3);
    REQUIRE(p.levels.size() == 3);
    CHECK(p.levels[1].rows == 5);
    CHECK(p.levels[1].cols == 7);
    CHECK(p.levels[2].rows == 3);
    CHECK(p.levels[2].cols == 4);
    for (const auto &lvl : p.levels)
        for (double v : lvl.data) CHECK(v == Approx(3.25).epsilon(1e-15));
}

TEST_CASE("2x2 pooling averages exactly") {
    Mat x(2, 2);
    x(0, 0) = 0;
    x(0, 1) = 2;
    x(1, 0) = 4;
    x(1, 1) = 6;
    const auto p = dsp::pyramid(x, 2);
    REQUIRE(p.levels[1].rows == 1);
    REQUIRE(p.levels[1].cols == 1);
    CHECK(p.levels[1](0, 0) == Approx(3.0));
}

TEST_CASE("pooling matches the brute-force oracle and preserves weighted means") {
    std::mt19937_64 gen(107);
    const Mat x = oracles::random_mat(gen, 16, 12, 5.0);
    const Mat mine = dsp::pool_avg(x);
    const Mat ref = oracles::pool_reference(x);
    REQUIRE(mine.rows == ref.rows);
    REQUIRE(mine.cols == ref.cols);
    for (std::size_t i = 0; i < mine.size(); ++i)
        CHECK(mine.data[i] == Approx(ref.data[i]).margin(1e-12));

    // even extents: every block has 4 cells, so the global mean is preserved
    double mean_in = 0.0, mean_out = 0.0;
    for (double v : x.data) mean_in += v;
    for (double v : mine.data) mean_out += v;
    mean_in /= double(x.size());
    mean_out /= double(mine.size());
    CHECK(mean_out == Approx(mean_in).margin(1e-12));
}

TEST_CASE("pyramid vjp adjoint identity (linear map)") {
    std::mt19937_64 gen(108);
    for (int trial = 0; trial < 20; ++trial) {
        const int rows = 5 + int(gen() % 20);
        const int cols = 5 + int(gen() % 20);
        const Mat x = oracles::random_mat(gen, rows, cols);
        const auto p = dsp::pyramid(x, 3);
        std::vector<Mat> cots;
        for (const auto &lvl : p.levels) cots.push_back(oracles::random_mat(gen, lvl.rows, lvl.cols));
        const Mat grad = dsp::pyramid_vjp(rows, cols, cots);
        double lhs = 0.0;
        for (std::size_t l = 0; l < cots.size(); ++l) lhs += oracles::inner(p.levels[l], cots[l]);
        const double rhs = oracles::inner(x, grad);
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max({std::abs(lhs), std::abs(rhs), 1.0}));
    }
}

TEST_CASE("grad_field of a constant matrix is zero") {
    Mat x(6, 6, 2.0);
    const auto g = dsp::grad_field(x);
    for (double v : g.magnitude.data) CHECK(v == 0.0);
}

TEST_CASE("grad_field of a time ramp has |c| interior magnitude") {
    const double c = -0.75;
    Mat x(4, 9);
    for (int r = 0; r < 4; ++r)
        for (int t = 0; t < 9; ++t) x(r, t) = c * t;
    const auto g = dsp::grad_field(x);
    for (int r = 0; r < 3; ++r)
        for (int t = 0; t < 8; ++t) CHECK(g.magnitude(r, t) == Approx(std::abs(c)));
    for (int r = 0; r < 4; ++r) CHECK(g.d_time(r, 8) == 0.0);
    for (int t = 0; t < 9; ++t) CHECK(g.d_freq(3, t) == 0.0);
}

TEST_CASE("grad_field matches the direct oracle exactly") {
    std::mt19937_64 gen(109);
    const Mat x = oracles::random_mat(gen, 5, 7);
    const auto g = dsp::grad_field(x);
    const Mat ref = oracles::grad_mag_reference(x);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(g.magnitude.data[i] == ref.data[i]);
}

TEST_CASE("grad_field jvp/vjp adjoint identity") {
    std::mt19937_64 gen(110);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat x = oracles::random_mat(gen, 7, 9);
        const Mat dx = oracles::random_mat(gen, 7, 9);
        const Mat cot = oracles::random_mat(gen, 7, 9);
        const auto g = dsp::grad_field(x);
        const Mat jvp = oracles::grad_mag_jvp(x, dx);
        const Mat vjp = dsp::grad_field_vjp(g, cot);
        const double lhs = oracles::inner(jvp, cot);
        const double rhs = oracles::inner(dx, vjp);
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max({std::abs(lhs), std::abs(rhs), 1.0}));
    }
}

TEST_CASE("dsp kernels are deterministic") {
    std::mt19937_64 gen(111);
    const Waveform w = oracles::random_waveform(gen, 2048);
    const auto a = dsp::stft(w);
    const auto b = dsp::stft(w);
    CHECK(a.bins.data == b.bins.data);
    const Mat lp = dsp::log_power(a);
    CHECK(dsp::log_power(b).data == lp.data);
    CHECK(dsp::pool_avg(lp).data == dsp::pool_avg(lp).data);
}

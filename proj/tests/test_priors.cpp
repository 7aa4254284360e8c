#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "priorsep/gradcheck.hpp"
#include "priorsep/priors.hpp"

using namespace priorsep;
using Catch::Approx;

TEST_CASE("project clamps onto the box and is idempotent") {
    const auto z = priors::project({1.5, -2.0, 0.3});
    CHECK(z[0] == 1.0);
    CHECK(z[1] == -1.0);
    CHECK(z[2] == 0.3);
    CHECK(priors::project(z) == z);
}

TEST_CASE("project is non-expansive") {
    std::mt19937_64 gen(301);
    for (int i = 0; i < 50; ++i) {
        priors::LatentVector a(8), b(8);
        for (auto &v : a) v = 3.0 * oracles::urand(gen);
        for (auto &v : b) v = 3.0 * oracles::urand(gen);
        const auto pa = priors::project(a);
        const auto pb = priors::project(b);
        double dp = 0.0, d = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            dp += (pa[k] - pb[k]) * (pa[k] - pb[k]);
            d += (a[k] - b[k]) * (a[k] - b[k]);
        }
        CHECK(dp <= d + 1e-15);
    }
}

TEST_CASE("sample_latent stays in range and is reproducible") {
    const auto a = priors::sample_latent(42, 100);
    const auto b = priors::sample_latent(42, 100);
    CHECK(a == b);
    for (double v : a) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
    CHECK(priors::sample_latent(43, 100) != a);
    CHECK_THROWS_AS(priors::sample_latent(1, 0), RangeError);
}

TEST_CASE("sample_latent moments match a uniform distribution") {
    double mean = 0.0, mean_sq = 0.0;
    const int n = 1000;
    const int dz = 100;
    for (int s = 0; s < n; ++s) {
        const auto z = priors::sample_latent(std::uint64_t(s), dz);
        for (double v : z) {
            mean += v;
            mean_sq += v * v;
        }
    }
    mean /= double(n) * dz;
    mean_sq /= double(n) * dz;
    CHECK(std::abs(mean) <= 0.02);
    CHECK(std::abs((mean_sq - mean * mean) - 1.0 / 3.0) <= 0.02);
}

TEST_CASE("harmonic prior at the zero latent hits the geometric frequency midpoint") {
    priors::HarmonicParams p;
    p.length = 2048;
    const priors::HarmonicPrior prior(p);
    priors::LatentVector z(100, 0.0);
    CHECK(prior.fundamental(z) == Approx(std::sqrt(80.0 * 1000.0)).epsilon(1e-12));

    // gains 1/(2h), decay alpha_max/2: check one sample directly
    const Waveform w = prior.generate(z);
    const double fs = 16000.0;
    const double f0 = std::sqrt(80.0 * 1000.0);
    const std::size_t t = 321;
    double expect = 0.0;
    for (int h = 1; h <= 8; ++h)
        expect += (0.5 / h) * std::sin(2.0 * kPi * f0 * h * double(t) / fs);
    expect *= std::exp(-4.0 * double(t) / fs);
    CHECK(w.samples[t] == Approx(expect).margin(1e-12));
}

TEST_CASE("harmonic prior is silent when every gain slot is -1") {
    priors::HarmonicParams p;
    p.length = 1024;
    const priors::HarmonicPrior prior(p);
    std::mt19937_64 gen(302);
    priors::LatentVector z = priors::sample_latent(gen(), 100);
    for (int h = 1; h <= p.harmonics; ++h) z[std::size_t(h)] = -1.0;
    const Waveform w = prior.generate(z);
    for (double x : w.samples) CHECK(x == 0.0);
}

TEST_CASE("harmonic prior generation is deterministic") {
    priors::HarmonicParams p;
    p.length = 1024;
    const priors::HarmonicPrior prior(p);
    const auto z = priors::sample_latent(7, 100);
    CHECK(prior.generate(z).samples == prior.generate(z).samples);
}

TEST_CASE("harmonic prior validates its parameters") {
    priors::HarmonicParams p;
    p.f_min = 0.0;
    CHECK_THROWS_AS(priors::HarmonicPrior(p), RangeError);
    p = {};
    p.f_max = 70.0;  // below f_min
    CHECK_THROWS_AS(priors::HarmonicPrior(p), RangeError);
    p = {};
    p.f_max = 1500.0;  // 8th harmonic above Nyquist
    CHECK_THROWS_AS(priors::HarmonicPrior(p), RangeError);
    p = {};
    p.latent_dim = 5;
    CHECK_THROWS_AS(priors::HarmonicPrior(p), RangeError);
}

TEST_CASE("generator vjps reject mismatched shapes") {
    priors::HarmonicParams p;
    p.length = 512;
    const priors::HarmonicPrior prior(p);
    CHECK_THROWS_AS(prior.generate(priors::LatentVector(7, 0.0)), DimensionError);
    CHECK_THROWS_AS(prior.generate_vjp(priors::LatentVector(100, 0.0),
                                       std::vector<double>(100, 0.0)),
                    DimensionError);
}

TEST_CASE("zero cotangent produces a zero latent gradient for every kind") {
    priors::HarmonicParams hp;
    hp.length = 512;
    priors::PercussiveParams pp;
    pp.length = 512;
    const priors::HarmonicPrior harm(hp);
    const priors::PercussivePrior perc(pp);
    const priors::NeuralDecoderPrior neural(gradcheck::tiny_decoder_params(99));

    const std::vector<const priors::GeneratorPrior *> all{&harm, &perc, &neural};
    std::mt19937_64 gen(303);
    for (const auto *prior : all) {
        const auto z = priors::sample_latent(gen(), prior->latent_dim());
        const auto g = prior->generate_vjp(z, std::vector<double>(prior->output_length(), 0.0));
        for (double v : g) CHECK(v == 0.0);
    }
}

TEST_CASE("harmonic vjp matches finite differences") {
    gradcheck::Options opt;
    opt.signal_len = 1024;
    opt.inputs = 20;
    const auto rep = gradcheck::check_harmonic_prior(opt);
    INFO(rep.max_rel_err);
    CHECK(rep.max_rel_err <= 1e-6);
}

TEST_CASE("percussive vjp matches finite differences") {
    gradcheck::Options opt;
    opt.signal_len = 1024;
    opt.inputs = 20;
    const auto rep = gradcheck::check_percussive_prior(opt);
    INFO(rep.max_rel_err);
    CHECK(rep.max_rel_err <= 1e-6);
}

TEST_CASE("tiny neural decoder vjp matches finite differences") {
    gradcheck::Options opt;
    opt.inputs = 20;
    const auto rep = gradcheck::check_neural_prior(opt);
    INFO(rep.max_rel_err);
    CHECK(rep.max_rel_err <= 1e-5);
}

TEST_CASE("adjoint identity via directional finite differences (harmonic)") {
    priors::HarmonicParams p;
    p.length = 1024;
    const priors::HarmonicPrior prior(p);
    std::mt19937_64 gen(304);
    const double h = 3e-6;
    for (int trial = 0; trial < 10; ++trial) {
        auto z = priors::sample_latent(gen(), 100);
        for (double &v : z) v *= 0.9;
        priors::LatentVector dz(100);
        for (auto &v : dz) v = oracles::urand(gen);
        std::vector<double> xbar(p.length);
        for (auto &v : xbar) v = oracles::urand(gen);

        // fourth-order directional derivative along dz
        const auto eval = [&](double a) {
            priors::LatentVector zz = z;
            for (std::size_t i = 0; i < z.size(); ++i) zz[i] += a * dz[i];
            const Waveform w = prior.generate(zz);
            double acc = 0.0;
            for (std::size_t t = 0; t < p.length; ++t) acc += xbar[t] * w.samples[t];
            return acc;
        };
        const double d1 = (eval(h) - eval(-h)) / (2.0 * h);
        const double d2 = (eval(0.5 * h) - eval(-0.5 * h)) / h;
        const double lhs = (4.0 * d2 - d1) / 3.0;
        const auto vjp = prior.generate_vjp(z, xbar);
        const double rhs = dot(dz, vjp);
        CHECK(std::abs(lhs - rhs) <= 1e-8 * std::max({std::abs(lhs), std::abs(rhs), 1.0}));
    }
}

TEST_CASE("neural decoder with all-zero weights emits silence") {
    auto params = gradcheck::tiny_decoder_params(1);
    for (auto &l : params.layers) {
        std::fill(l.weights.begin(), l.weights.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    const priors::NeuralDecoderPrior prior(params);
    const Waveform w = prior.generate(priors::sample_latent(5, prior.latent_dim()));
    for (double x : w.samples) CHECK(x == 0.0);
}

TEST_CASE("neural decoder output length and bounds") {
    const priors::NeuralDecoderPrior prior(gradcheck::tiny_decoder_params(2));
    CHECK(prior.output_length() == 1024);  // 16 * 4^3
    CHECK(prior.latent_dim() == 8);
    const Waveform w = prior.generate(priors::sample_latent(11, 8));
    for (double x : w.samples) {
        CHECK(x > -1.0);
        CHECK(x < 1.0);
    }
}

TEST_CASE("weight files round-trip bitwise") {
    const auto params = gradcheck::tiny_decoder_params(3);
    const std::string path = (std::filesystem::temp_directory_path() / "psep_w1.bin").string();
    priors::save_weights(params, path);
    const auto loaded = priors::load_weights(path);
    REQUIRE(loaded.layers.size() == params.layers.size());
    for (std::size_t i = 0; i < loaded.layers.size(); ++i) {
        CHECK(loaded.layers[i].weights == params.layers[i].weights);
        CHECK(loaded.layers[i].bias == params.layers[i].bias);
    }
    // saving the loaded params reproduces the identical file
    const std::string path2 = path + ".again";
    priors::save_weights(loaded, path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    const std::string ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(ba == bb);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("truncated weight files are rejected without a partial object") {
    const auto params = gradcheck::tiny_decoder_params(4);
    const std::string path = (std::filesystem::temp_directory_path() / "psep_w2.bin").string();
    priors::save_weights(params, path);
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    bytes.resize(bytes.size() / 2);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), std::streamsize(bytes.size()));
    out.close();
    CHECK_THROWS_AS(priors::load_weights(path), priors::WeightFileError);
    std::filesystem::remove(path);
}

namespace {

std::string file_bytes(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string &path, const std::string &bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

void refresh_checksum(std::string &bytes) {
    const std::uint64_t sum = priorsep::fnv1a64(bytes.data(), bytes.size() - 8);
    for (int i = 0; i < 8; ++i) bytes[bytes.size() - 8 + std::size_t(i)] = char((sum >> (8 * i)) & 0xFF);
}

}  // namespace

TEST_CASE("weight file corruption reports distinct errors") {
    const auto params = gradcheck::tiny_decoder_params(5);
    const std::string path = (std::filesystem::temp_directory_path() / "psep_w3.bin").string();
    priors::save_weights(params, path);
    const std::string clean = file_bytes(path);

    SECTION("bad magic") {
        std::string bytes = clean;
        bytes[0] = 'X';
        refresh_checksum(bytes);
        write_bytes(path, bytes);
        CHECK_THROWS_AS(priors::load_weights(path), priors::BadMagicError);
    }
    SECTION("version mismatch") {
        std::string bytes = clean;
        bytes[4] = 9;
        refresh_checksum(bytes);
        write_bytes(path, bytes);
        CHECK_THROWS_AS(priors::load_weights(path), priors::WeightVersionError);
    }
    SECTION("corrupted layer dimension names the layer") {
        std::string bytes = clean;
        bytes[12 + 16] = 77;  // in_dim of layer 1
        refresh_checksum(bytes);
        write_bytes(path, bytes);
        try {
            priors::load_weights(path);
            FAIL("expected a dimension error");
        } catch (const priors::WeightDimensionError &e) {
            CHECK(std::string(e.what()).find("layer") != std::string::npos);
        }
    }
    SECTION("flipped payload byte fails the checksum") {
        std::string bytes = clean;
        bytes[bytes.size() / 2] = char(bytes[bytes.size() / 2] ^ 0x5A);
        write_bytes(path, bytes);
        CHECK_THROWS_AS(priors::load_weights(path), priors::WeightChecksumError);
    }
    std::filesystem::remove(path);
}

TEST_CASE("percussive prior stays deterministic across instances") {
    priors::PercussiveParams p;
    p.length = 2048;
    const priors::PercussivePrior a(p);
    const priors::PercussivePrior b(p);
    const auto z = priors::sample_latent(17, 100);
    CHECK(a.generate(z).samples == b.generate(z).samples);
}

TEST_CASE("percussive prior output is bounded by the gain envelope") {
    priors::PercussiveParams p;
    p.length = 2048;
    const priors::PercussivePrior prior(p);
    std::mt19937_64 gen(305);
    for (int i = 0; i < 5; ++i) {
        const auto z = priors::sample_latent(gen(), 100);
        const Waveform w = prior.generate(z);
        const double g = (z[0] + 1.0) / 2.0;
        for (double x : w.samples) CHECK(std::abs(x) <= g + 1e-12);
    }
}

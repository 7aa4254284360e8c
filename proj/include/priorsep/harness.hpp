#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <sstream>
#include <thread>

#include "priorsep/audio_io.hpp"
#include "priorsep/engine.hpp"
#include "priorsep/metrics.hpp"

// Closed-loop experiment runner: synthesize ground truth from the priors,
// mix additively, separate, score, and aggregate across seeded mixtures.

namespace priorsep::harness {

/// Construction recipe for one prior. Analytic kinds carry their parameter
/// structs; the neural kind points at a weight file.
struct PriorSpec {
    std::string kind = "harmonic";  // harmonic | percussive | neural
    priors::HarmonicParams harmonic;
    priors::PercussiveParams percussive;
    std::string weights_path;
};

inline std::shared_ptr<const priors::GeneratorPrior> make_prior(const PriorSpec &spec,
                                                                std::size_t length) {
    if (spec.kind == "harmonic") {
        priors::HarmonicParams p = spec.harmonic;
        p.length = length;
        return std::make_shared<priors::HarmonicPrior>(p);
    }
    if (spec.kind == "percussive") {
        priors::PercussiveParams p = spec.percussive;
        p.length = length;
        return std::make_shared<priors::PercussivePrior>(p);
    }
    if (spec.kind == "neural") {
        auto prior = std::make_shared<priors::NeuralDecoderPrior>(
            priors::load_weights(spec.weights_path));
        if (prior->output_length() != length)
            throw DimensionError("neural prior output length " +
                                 std::to_string(prior->output_length()) +
                                 " does not match the experiment sample length " +
                                 std::to_string(length));
        return prior;
    }
    throw RangeError("unknown prior kind '" + spec.kind + "'");
}

struct ExperimentConfig {
    std::vector<PriorSpec> priors;
    int num_mixtures = 50;
    std::uint64_t base_seed = 1234;
    std::size_t sample_length = 16384;
    int workers = 1;
    engine::PgdConfig pgd;

    void validate() const {
        if (num_mixtures < 1) throw RangeError("experiment: num_mixtures must be >= 1");
        if (priors.empty()) throw RangeError("experiment: need at least one prior");
        if (workers < 1) throw RangeError("experiment: workers must be >= 1");
        if (sample_length < std::size_t(pgd.loss.stft.frame_len))
            throw RangeError("experiment: sample_length shorter than one analysis frame");
        pgd.validate();
    }

    /// Deterministic fingerprint of every result-affecting field.
    std::uint64_t fingerprint() const {
        std::ostringstream os;
        os.precision(17);
        os << num_mixtures << '|' << base_seed << '|' << sample_length << '|'
           << pgd.iterations << '|' << pgd.learning_rate << '|' << pgd.adam_beta1 << '|'
           << pgd.adam_beta2 << '|' << pgd.adam_eps << '|' << pgd.trace_stride << '|'
           << pgd.return_best << '|' << pgd.loss.beta_ms << '|' << pgd.loss.beta_sd << '|'
           << pgd.loss.beta_mc << '|' << pgd.loss.beta_fc << '|' << pgd.loss.levels << '|'
           << pgd.loss.eps_den << '|' << pgd.loss.ratio_cap << '|' << pgd.loss.stft.frame_len
           << '|' << pgd.loss.stft.hop << '|' << pgd.loss.stft.fft_len;
        for (const PriorSpec &p : priors) {
            os << '|' << p.kind;
            if (p.kind == "harmonic")
                os << ':' << p.harmonic.f_min << ',' << p.harmonic.f_max << ','
                   << p.harmonic.harmonics << ',' << p.harmonic.alpha_max << ','
                   << p.harmonic.latent_dim;
            else if (p.kind == "percussive")
                os << ':' << p.percussive.beta_min << ',' << p.percussive.beta_max << ','
                   << p.percussive.lp_min << ',' << p.percussive.lp_max << ','
                   << p.percussive.noise_seed << ',' << p.percussive.latent_dim;
            else
                os << ':' << p.weights_path;
        }
        return fnv1a64(os.str());
    }
};

/// Elementwise sum; the mixing stays linear so spectrogram gradients pass
/// through unchanged. No renormalization.
inline Waveform make_mixture(const std::vector<Waveform> &sources) {
    if (sources.empty()) throw DimensionError("make_mixture: empty source list");
    Waveform out(sources[0].size(), sources[0].sample_rate);
    for (const Waveform &s : sources) {
        if (s.size() != out.size()) throw DimensionError("make_mixture: length mismatch");
        for (std::size_t i = 0; i < out.size(); ++i) out.samples[i] += s.samples[i];
    }
    return out;
}

/// Seed for the ground-truth latent of source `source` in mixture `index`.
inline std::uint64_t latent_seed(std::uint64_t base_seed, int index, std::size_t source) {
    return splitmix64(base_seed + std::uint64_t(index) +
                      0x9E3779B97F4A7C15ULL * (std::uint64_t(source) + 1));
}

struct MixtureRecord {
    int index = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::vector<metrics::SourceMetrics> per_source;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

struct MetricStats {
    double mean = 0.0;
    double median = 0.0;
};

struct SourceStats {
    MetricStats spectral_snr_db;
    MetricStats rms_env_distance;
    MetricStats sir_db;
};

struct AggregateTable {
    std::vector<SourceStats> per_source;
    int num_runs = 0;
    int num_failures = 0;
    std::uint64_t config_hash = 0;
    double wall_seconds = 0.0;
    std::vector<MixtureRecord> records;
};

namespace detail {

inline MetricStats stats_of(std::vector<double> v) {
    MetricStats s;
    if (v.empty()) return s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / double(v.size());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    s.median = (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    return s;
}

}  // namespace detail

/// Arithmetic mean and median per metric per source.
inline std::vector<SourceStats> aggregate(const std::vector<metrics::MetricsReport> &reports) {
    if (reports.empty()) throw RangeError("aggregate: empty report list");
    const std::size_t k = reports[0].per_source.size();
    std::vector<SourceStats> out(k);
    for (std::size_t s = 0; s < k; ++s) {
        std::vector<double> snr, env, sir_v;
        for (const auto &r : reports) {
            if (r.per_source.size() != k)
                throw DimensionError("aggregate: inconsistent source counts");
            snr.push_back(r.per_source[s].spectral_snr_db);
            env.push_back(r.per_source[s].rms_env_distance);
            sir_v.push_back(r.per_source[s].sir_db);
        }
        out[s].spectral_snr_db = detail::stats_of(std::move(snr));
        out[s].rms_env_distance = detail::stats_of(std::move(env));
        out[s].sir_db = detail::stats_of(std::move(sir_v));
    }
    return out;
}

/// Runs one seeded mixture end to end. Deterministic in (config, index).
/// With a non-empty export_dir, writes truth/estimate audio under
/// export_dir/mixture_<index>/.
inline MixtureRecord run_mixture(const ExperimentConfig &cfg, const engine::PriorList &plist,
                                 int index, const std::string &export_dir = "") {
    MixtureRecord rec;
    rec.index = index;
    rec.seed = cfg.base_seed + std::uint64_t(index);
    try {
        const std::size_t k = plist.size();
        std::vector<Waveform> truths(k);
        for (std::size_t i = 0; i < k; ++i) {
            const priors::LatentVector z = priors::sample_latent(
                latent_seed(cfg.base_seed, index, i), plist[i]->latent_dim());
            truths[i] = peak_normalize(plist[i]->generate(z));
        }
        const Waveform mixture = make_mixture(truths);
        const engine::SeparationResult sep = engine::separate(mixture, plist, cfg.pgd);
        const metrics::MetricsReport rep =
            metrics::evaluate(truths, sep.sources, cfg.pgd.loss.stft);
        rec.per_source = rep.per_source;
        rec.initial_loss = sep.initial_loss.total;
        rec.final_loss = sep.final_loss.total;
        rec.ok = true;
        if (!export_dir.empty()) {
            namespace fs = std::filesystem;
            const fs::path dir = fs::path(export_dir) / ("mixture_" + std::to_string(index));
            fs::create_directories(dir);
            io::write_audio(mixture, (dir / "mixture.wav").string());
            for (std::size_t i = 0; i < k; ++i) {
                const std::string n = std::to_string(i + 1);
                io::write_audio(truths[i], (dir / ("source_" + n + ".wav")).string());
                io::write_audio(sep.sources[i], (dir / ("estimate_" + n + ".wav")).string());
            }
        }
    } catch (const std::exception &e) {
        rec.ok = false;
        rec.error = e.what();
    }
    return rec;
}

/// Batch run over num_mixtures seeded cases. Results depend only on
/// (base_seed + index), so worker count never changes the records.
inline AggregateTable run_experiment(const ExperimentConfig &cfg,
                                     const std::string &export_dir = "") {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    engine::PriorList plist;
    plist.reserve(cfg.priors.size());
    for (const PriorSpec &spec : cfg.priors)
        plist.push_back(make_prior(spec, cfg.sample_length));

    AggregateTable table;
    table.config_hash = cfg.fingerprint();
    table.records.resize(std::size_t(cfg.num_mixtures));

    const int workers = std::min(cfg.workers, cfg.num_mixtures);
    if (workers <= 1) {
        for (int j = 0; j < cfg.num_mixtures; ++j)
            table.records[std::size_t(j)] = run_mixture(cfg, plist, j, export_dir);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(std::size_t(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (int j = next.fetch_add(1); j < cfg.num_mixtures; j = next.fetch_add(1))
                    table.records[std::size_t(j)] = run_mixture(cfg, plist, j, export_dir);
            });
        }
        for (std::thread &t : pool) t.join();
    }

    std::vector<metrics::MetricsReport> ok_reports;
    for (const MixtureRecord &r : table.records) {
        if (!r.ok) {
            ++table.num_failures;
            continue;
        }
        metrics::MetricsReport rep;
        rep.per_source = r.per_source;
        ok_reports.push_back(std::move(rep));
    }
    table.num_runs = int(ok_reports.size());
    if (!ok_reports.empty()) table.per_source = aggregate(ok_reports);

    table.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return table;
}

}  // namespace priorsep::harness

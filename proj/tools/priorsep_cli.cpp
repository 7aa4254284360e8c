// Command-line front end: mixture synthesis, separation, evaluation, batch
// benchmarking, gradient checking, and prior sampling.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "priorsep/priorsep.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace priorsep;

namespace {

std::string hex64(std::uint64_t v) {
    char buf[19];
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(v));
    return buf;
}

json metrics_json(const metrics::SourceMetrics &m) {
    return json{{"spectral_snr_db", m.spectral_snr_db},
                {"rms_env_distance", m.rms_env_distance},
                {"sir_db", m.sir_db}};
}

json record_json(const harness::MixtureRecord &r) {
    json j{{"index", r.index}, {"seed", r.seed}, {"ok", r.ok}};
    if (r.ok) {
        json per = json::array();
        for (const auto &m : r.per_source) per.push_back(metrics_json(m));
        j["per_source"] = per;
        j["initial_loss"] = r.initial_loss;
        j["final_loss"] = r.final_loss;
    } else {
        j["error"] = r.error;
    }
    return j;
}

json stats_json(const harness::MetricStats &s) {
    return json{{"mean", s.mean}, {"median", s.median}};
}

harness::ExperimentConfig load_config_or_default(const std::string &path) {
    if (path.empty()) return config::parse_config_json(json::object());
    return config::parse_config(path);
}

engine::PriorList build_priors(const harness::ExperimentConfig &cfg, std::size_t length) {
    engine::PriorList out;
    for (const auto &spec : cfg.priors) out.push_back(harness::make_prior(spec, length));
    return out;
}

std::vector<Waveform> ground_truth_sources(const harness::ExperimentConfig &cfg,
                                           const engine::PriorList &plist, int index) {
    std::vector<Waveform> truths;
    truths.reserve(plist.size());
    for (std::size_t i = 0; i < plist.size(); ++i) {
        const auto z = priors::sample_latent(harness::latent_seed(cfg.base_seed, index, i),
                                             plist[i]->latent_dim());
        truths.push_back(peak_normalize(plist[i]->generate(z)));
    }
    return truths;
}

int cmd_synth(const std::string &kind, const std::string &weights, std::uint64_t seed,
              std::size_t length, bool raw, const std::string &out) {
    harness::PriorSpec spec;
    if (!weights.empty()) {
        spec.kind = "neural";
        spec.weights_path = weights;
    } else {
        spec.kind = kind;
    }
    std::shared_ptr<const priors::GeneratorPrior> prior;
    if (spec.kind == "neural") {
        prior = std::make_shared<priors::NeuralDecoderPrior>(priors::load_weights(weights));
    } else {
        prior = harness::make_prior(spec, length);
    }
    const auto z = priors::sample_latent(seed, prior->latent_dim());
    Waveform w = prior->generate(z);
    if (!raw) w = peak_normalize(w);
    io::write_audio(w, out);
    std::cout << json{{"out", out},
                      {"kind", std::string(prior->kind())},
                      {"seed", seed},
                      {"samples", w.size()}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_mix_files(const std::vector<std::string> &inputs, const std::string &out) {
    std::vector<Waveform> sources;
    sources.reserve(inputs.size());
    for (const auto &p : inputs) sources.push_back(io::read_audio(p));
    io::write_audio(harness::make_mixture(sources), out);
    std::cout << json{{"out", out}, {"sources", inputs.size()}}.dump() << "\n";
    return 0;
}

int cmd_mix_config(const std::string &config_path, int index, const std::string &out_dir) {
    const auto cfg = load_config_or_default(config_path);
    const auto plist = build_priors(cfg, cfg.sample_length);
    fs::create_directories(out_dir);
    const auto truths = ground_truth_sources(cfg, plist, index);
    json files = json::array();
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const std::string p = (fs::path(out_dir) / ("source_" + std::to_string(i + 1) + ".wav"))
                                  .string();
        io::write_audio(truths[i], p);
        files.push_back(p);
    }
    const std::string mix_path = (fs::path(out_dir) / "mixture.wav").string();
    io::write_audio(harness::make_mixture(truths), mix_path);
    files.push_back(mix_path);
    std::cout << json{{"out_dir", out_dir}, {"files", files}, {"index", index}}.dump() << "\n";
    return 0;
}

int cmd_separate(const std::string &mixture_path, const std::string &config_path,
                 const std::string &out_dir) {
    const auto cfg = load_config_or_default(config_path);
    const Waveform mixture = io::read_audio(mixture_path);
    const auto plist = build_priors(cfg, mixture.size());
    fs::create_directories(out_dir);

    const auto result = engine::separate(mixture, plist, cfg.pgd);

    json files = json::array();
    for (std::size_t i = 0; i < result.sources.size(); ++i) {
        const std::string p =
            (fs::path(out_dir) / ("estimate_" + std::to_string(i + 1) + ".wav")).string();
        io::write_audio(result.sources[i], p);
        files.push_back(p);
    }
    {
        std::ostringstream trace;
        engine::write_trace(trace, result);
        io::atomic_write_file((fs::path(out_dir) / "trace.jsonl").string(), trace.str());
    }
    json latents = json::array();
    for (const auto &z : result.latents) latents.push_back(z);
    const json summary{{"mixture", mixture_path},
                       {"estimates", files},
                       {"initial_loss", result.initial_loss.total},
                       {"final_loss", result.final_loss.total},
                       {"iterations", cfg.pgd.iterations},
                       {"box_violations", result.box_violations},
                       {"latents", latents},
                       {"wall_seconds", result.wall_seconds}};
    io::atomic_write_file((fs::path(out_dir) / "result.json").string(), summary.dump(2) + "\n");
    std::cout << summary.dump() << "\n";
    return 0;
}

int cmd_eval(const std::vector<std::string> &refs, const std::vector<std::string> &ests,
             const std::string &out_path) {
    if (refs.size() != ests.size())
        throw DimensionError("eval: need equally many --ref and --est files");
    std::vector<Waveform> truths, estimates;
    for (const auto &p : refs) truths.push_back(io::read_audio(p));
    for (const auto &p : ests) estimates.push_back(io::read_audio(p));
    const auto rep = metrics::evaluate(truths, estimates);
    json per = json::array();
    for (const auto &m : rep.per_source) per.push_back(metrics_json(m));
    const json out{{"per_source", per}, {"mean", metrics_json(rep.mean)}};
    if (!out_path.empty()) io::atomic_write_file(out_path, out.dump(2) + "\n");
    std::cout << out.dump() << "\n";
    return 0;
}

int cmd_bench(const std::string &config_path, const std::string &out_dir, int workers_override,
              const std::string &export_dir) {
    auto cfg = load_config_or_default(config_path);
    if (workers_override > 0) cfg.workers = workers_override;
    fs::create_directories(out_dir);

    const auto table = harness::run_experiment(cfg, export_dir);

    std::string records;
    for (const auto &r : table.records) records += record_json(r).dump() + "\n";
    io::atomic_write_file((fs::path(out_dir) / "records.jsonl").string(), records);

    json per = json::array();
    for (const auto &s : table.per_source)
        per.push_back(json{{"spectral_snr_db", stats_json(s.spectral_snr_db)},
                           {"rms_env_distance", stats_json(s.rms_env_distance)},
                           {"sir_db", stats_json(s.sir_db)}});
    const json summary{{"config_hash", hex64(table.config_hash)},
                       {"num_runs", table.num_runs},
                       {"num_failures", table.num_failures},
                       {"per_source", per},
                       {"wall_seconds", table.wall_seconds}};
    io::atomic_write_file((fs::path(out_dir) / "summary.json").string(), summary.dump(2) + "\n");
    std::cout << summary.dump() << "\n";
    return table.num_failures == 0 ? 0 : 2;
}

int cmd_gradcheck(std::size_t signal_len, int inputs, int coords, bool quick) {
    gradcheck::Options opt;
    opt.signal_len = signal_len;
    opt.inputs = inputs;
    opt.coords = coords;
    if (quick) {
        opt.inputs = 4;
        opt.coords = 8;
    }
    const auto reports = gradcheck::run_all(opt);
    bool ok = true;
    json out = json::array();
    for (const auto &r : reports) {
        ok = ok && r.pass;
        out.push_back(json{{"name", r.name},
                           {"cases", r.cases},
                           {"max_rel_err", r.max_rel_err},
                           {"tolerance", r.tolerance},
                           {"pass", r.pass}});
        std::cout << (r.pass ? "PASS " : "FAIL ") << r.name << "  max_rel_err=" << r.max_rel_err
                  << "  tol=" << r.tolerance << "\n";
    }
    std::cout << out.dump() << "\n";
    return ok ? 0 : 1;
}

const char *error_category(const std::exception &e) {
    if (dynamic_cast<const config::ConfigError *>(&e)) return "config";
    if (dynamic_cast<const io::AudioError *>(&e)) return "audio";
    if (dynamic_cast<const priors::WeightFileError *>(&e)) return "weights";
    if (dynamic_cast<const metrics::DegenerateSourcesError *>(&e)) return "metrics";
    if (dynamic_cast<const DimensionError *>(&e)) return "dimension";
    if (dynamic_cast<const RangeError *>(&e)) return "range";
    if (dynamic_cast<const Error *>(&e)) return "runtime";
    return "internal";
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Unsupervised source separation with differentiable generative priors"};
    app.require_subcommand(1);

    // synth
    auto *synth = app.add_subcommand("synth", "Sample a prior to an audio file");
    std::string synth_prior = "harmonic", synth_weights, synth_out = "synth.wav";
    std::uint64_t synth_seed = 0;
    std::size_t synth_len = 16384;
    bool synth_raw = false;
    synth->add_option("--prior", synth_prior, "harmonic or percussive")
        ->check(CLI::IsMember({"harmonic", "percussive"}));
    synth->add_option("--weights", synth_weights, "neural decoder weight file");
    synth->add_option("--seed", synth_seed, "latent seed");
    synth->add_option("--length", synth_len, "output sample count");
    synth->add_flag("--raw", synth_raw, "skip peak normalization");
    synth->add_option("--out", synth_out, "output wav path")->required();

    // mix
    auto *mix = app.add_subcommand("mix", "Build an additive mixture");
    std::vector<std::string> mix_inputs;
    std::string mix_out = "mixture.wav", mix_config, mix_out_dir;
    int mix_index = 0;
    mix->add_option("--inputs", mix_inputs, "source wav files to sum");
    mix->add_option("--out", mix_out, "output wav path (with --inputs)");
    mix->add_option("--config", mix_config, "experiment config (prior-generated mixture)");
    mix->add_option("--index", mix_index, "mixture index for seeding");
    mix->add_option("--out-dir", mix_out_dir, "output directory (with --config)");

    // separate
    auto *sep = app.add_subcommand("separate", "Recover sources from a mixture file");
    std::string sep_mixture, sep_config, sep_out_dir = "separated";
    sep->add_option("--mixture", sep_mixture, "mixture wav file")->required();
    sep->add_option("--config", sep_config, "experiment config file");
    sep->add_option("--out-dir", sep_out_dir, "output directory");

    // eval
    auto *eval = app.add_subcommand("eval", "Score estimates against references");
    std::vector<std::string> eval_refs, eval_ests;
    std::string eval_out;
    eval->add_option("--ref", eval_refs, "reference wav files")->required();
    eval->add_option("--est", eval_ests, "estimate wav files")->required();
    eval->add_option("--out", eval_out, "write the report to this path");

    // bench
    auto *bench = app.add_subcommand("bench", "Run a seeded batch experiment");
    std::string bench_config, bench_out_dir = "bench", bench_export;
    int bench_workers = 0;
    bench->add_option("--config", bench_config, "experiment config file");
    bench->add_option("--out-dir", bench_out_dir, "output directory");
    bench->add_option("--workers", bench_workers, "override worker count");
    bench->add_option("--export-audio", bench_export, "also write per-mixture audio here");

    // gradcheck
    auto *gc = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    std::size_t gc_len = 2048;
    int gc_inputs = 20, gc_coords = 24;
    bool gc_quick = false;
    gc->add_option("--signal-len", gc_len, "test signal length");
    gc->add_option("--inputs", gc_inputs, "random inputs per check");
    gc->add_option("--coords", gc_coords, "sampled coordinates per input");
    gc->add_flag("--quick", gc_quick, "reduced case counts");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed())
            return cmd_synth(synth_prior, synth_weights, synth_seed, synth_len, synth_raw,
                             synth_out);
        if (mix->parsed()) {
            if (!mix_inputs.empty()) return cmd_mix_files(mix_inputs, mix_out);
            if (!mix_out_dir.empty()) return cmd_mix_config(mix_config, mix_index, mix_out_dir);
            throw RangeError("mix: need either --inputs/--out or --config/--out-dir");
        }
        if (sep->parsed()) return cmd_separate(sep_mixture, sep_config, sep_out_dir);
        if (eval->parsed()) return cmd_eval(eval_refs, eval_ests, eval_out);
        if (bench->parsed())
            return cmd_bench(bench_config, bench_out_dir, bench_workers, bench_export);
        if (gc->parsed()) return cmd_gradcheck(gc_len, gc_inputs, gc_coords, gc_quick);
    } catch (const std::exception &e) {
        std::cerr << json{{"error", {{"type", error_category(e)}, {"message", e.what()}}}}.dump()
                  << "\n";
        return 1;
    }
    return 0;
}

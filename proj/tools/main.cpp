#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "disfas/config.hpp"
#include "disfas/eval.hpp"
#include "disfas/kernels.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace disfas;

namespace {

// Exit codes: 0 ok, 1 internal, 2 config, 3 I/O, 4 divergence, 5 protocol.
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitDiverged = 4;
constexpr int kExitProtocol = 5;

struct DatasetBundle {
    std::vector<data::LabeledSample> samples;
    int n_domains = 0;
    std::string root;  // empty for in-memory synthetic data
};

void apply_env_seed(RunConfig& cfg) {
    const char* env = std::getenv("DISFAS_SEED");
    if (!env) return;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0') throw ConfigError("DISFAS_SEED must be an integer");
    if (!cfg.data_seed_set) cfg.data.seed = v;
    if (!cfg.train_seed_set) cfg.train.seed = v;
}

DatasetBundle resolve_dataset(const RunConfig& cfg, const std::string& manifest_flag, int workers) {
    DatasetBundle out;
    const std::string mpath = manifest_flag.empty() ? cfg.manifest_path : manifest_flag;
    if (!mpath.empty()) {
        data::Manifest m = data::load_manifest(mpath);
        out.samples = data::load_samples(m);
        out.n_domains = m.n_domains;
        out.root = m.root;
    } else {
        auto [samples, manifest] = data::generate_synthetic_dataset(cfg.data, workers);
        out.samples = std::move(samples);
        out.n_domains = manifest.n_domains;
    }
    return out;
}

ProtocolSplit resolve_split(const RunConfig& cfg, int n_domains) {
    ProtocolSplit split = cfg.protocol;
    if (split.target_domain < 0) {
        throw ConfigError("protocol.target_domain is required for training/evaluation");
    }
    if (split.source_domains.empty()) {
        for (int d = 0; d < n_domains; ++d) {
            if (d != split.target_domain) split.source_domains.push_back(d);
        }
    }
    return split;
}

int run_generate(const std::string& config_path, const std::string& out_dir, bool force,
                 int64_t seed_override, int workers) {
    RunConfig cfg = load_run_config(config_path);
    apply_env_seed(cfg);
    if (seed_override >= 0) cfg.data.seed = static_cast<uint64_t>(seed_override);

    if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
        if (!force) {
            std::cerr << "refusing to write into non-empty directory " << out_dir
                      << " (use --force)\n";
            return kExitIo;
        }
    }
    auto [samples, manifest] = data::generate_synthetic_dataset(cfg.data, workers);
    data::write_dataset(samples, manifest, out_dir);
    write_run_config(cfg, (fs::path(out_dir) / "resolved.ini").string());

    std::map<int, std::pair<int, int>> counts;  // domain -> (real, spoof)
    for (const auto& s : samples) {
        auto& c = counts[s.domain];
        (s.liveness == 1 ? c.first : c.second) += 1;
    }
    for (const auto& [d, c] : counts) {
        std::cout << "domain=" << d << " real=" << c.first << " spoof=" << c.second << "\n";
    }
    std::cout << "wrote " << samples.size() << " images + manifest.tsv to " << out_dir << "\n";
    return 0;
}

int run_train(const std::string& config_path, const std::string& manifest_flag,
              const std::string& out_dir, int epochs_override, int64_t seed_override,
              const std::string& ablation_override) {
    RunConfig cfg = load_run_config(config_path);
    apply_env_seed(cfg);
    if (epochs_override >= 0) cfg.train.epochs = epochs_override;
    if (seed_override >= 0) cfg.train.seed = static_cast<uint64_t>(seed_override);
    if (!ablation_override.empty()) cfg.train.ablation = ablation_from_string(ablation_override);

    DatasetBundle ds = resolve_dataset(cfg, manifest_flag, static_cast<int>(std::thread::hardware_concurrency()));
    ProtocolSplit split = resolve_split(cfg, ds.n_domains);

    fs::create_directories(out_dir);
    write_run_config(cfg, (fs::path(out_dir) / "resolved.ini").string());

    std::cout << "kernels: " << kernels::backend_name(kernels::active_backend()) << ", "
              << ds.samples.size() << " samples, " << split.source_domains.size()
              << " source domains, target " << split.target_domain << "\n";
    TrainReport report =
        train(ds.samples, ds.n_domains, split, cfg.train, out_dir, nullptr, nullptr, ds.root,
              [&](int epoch, const LossBundle& b) {
                  std::printf("epoch %3d/%d  total=%.4f live=%.4f cont=%.4f dom=%.4f\n", epoch,
                              cfg.train.epochs, b.total, b.l_live, b.l_cont, b.l_dom);
                  std::fflush(stdout);
              });
    if (!report.val_metrics.empty()) {
        const auto& [epoch, m] = report.val_metrics.back();
        std::printf("validation (epoch %d): AUC=%.4f HTER=%.4f\n", epoch, m.auc, m.hter);
    }
    std::cout << "report: " << (fs::path(out_dir) / "report.json").string() << "\n";
    std::cout << "checkpoint: " << report.final_checkpoint << "\n";
    return 0;
}

int run_eval(const std::string& checkpoint_path, const std::string& manifest_path, int target,
             const std::string& policy_str, const std::string& out_dir) {
    eval::ThresholdPolicy policy;
    if (policy_str == "fixed_half") policy = eval::ThresholdPolicy::fixed_half;
    else if (policy_str == "eer_on_validation") policy = eval::ThresholdPolicy::eer_on_validation;
    else throw ConfigError("--policy must be fixed_half|eer_on_validation");

    Checkpoint ck = load_checkpoint(checkpoint_path);
    data::Manifest manifest = data::load_manifest(manifest_path);
    std::vector<data::LabeledSample> samples = data::load_samples(manifest);

    ProtocolSplit split;
    split.source_domains = ck.meta.source_domains;
    split.target_domain = target;
    split.held_out_spoof_types = ck.meta.held_out_spoof_types;

    // The protocol guard runs before any output is written.
    std::vector<eval::ScoredSample> scored;
    eval::MetricsReport report =
        eval::evaluate_protocol(ck.model, ck.meta, samples, split, policy, &scored);

    fs::create_directories(out_dir);
    eval::write_metrics_json(report, (fs::path(out_dir) / "metrics.json").string());
    eval::write_scores_tsv(scored, (fs::path(out_dir) / "scores.tsv").string());
    std::printf("target=%d AUC=%.4f HTER=%.4f\n", target, report.auc, report.hter);
    return 0;
}

struct SweepCell {
    int target;
    Ablation ablation;
    uint64_t seed;

    std::string dir_name() const {
        return "t" + std::to_string(target) + "_" + ablation_name(ablation) + "_s" +
               std::to_string(seed);
    }
};

int run_sweep(const std::string& config_path, const std::string& manifest_flag,
              const std::string& out_dir, bool leave_one_out, const std::string& ablations_csv,
              const std::string& seeds_csv, int jobs, bool resume) {
    RunConfig cfg = load_run_config(config_path);
    apply_env_seed(cfg);

    DatasetBundle ds = resolve_dataset(cfg, manifest_flag, std::max(1, jobs));

    std::vector<int> targets;
    if (leave_one_out) {
        if (ds.n_domains < 3) throw ConfigError("--leave-one-out needs at least 3 domains");
        for (int d = 0; d < ds.n_domains; ++d) targets.push_back(d);
    } else {
        targets.push_back(resolve_split(cfg, ds.n_domains).target_domain);
    }

    std::vector<Ablation> ablations;
    {
        std::stringstream ss(ablations_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) ablations.push_back(ablation_from_string(item));
        }
        if (ablations.empty()) ablations.push_back(cfg.train.ablation);
    }
    std::vector<uint64_t> seeds;
    {
        std::stringstream ss(seeds_csv);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) seeds.push_back(std::stoull(item));
        }
        if (seeds.empty()) seeds.push_back(cfg.train.seed);
    }

    std::vector<SweepCell> cells;
    for (int t : targets) {
        for (Ablation a : ablations) {
            for (uint64_t s : seeds) cells.push_back({t, a, s});
        }
    }

    fs::create_directories(fs::path(out_dir) / "cells");
    write_run_config(cfg, (fs::path(out_dir) / "resolved.ini").string());

    std::mutex io_mutex;
    std::atomic<size_t> next{0};
    std::atomic<int> failures{0};
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const SweepCell& cell = cells[i];
            const fs::path cell_dir = fs::path(out_dir) / "cells" / cell.dir_name();
            const fs::path metrics_path = cell_dir / "metrics.json";
            if (resume && fs::exists(metrics_path)) {
                std::lock_guard<std::mutex> lock(io_mutex);
                std::cout << "cell " << cell.dir_name() << ": already complete, skipping\n";
                continue;
            }
            try {
                fs::create_directories(cell_dir);
                TrainConfig tc = cfg.train;
                tc.seed = cell.seed;
                tc.ablation = cell.ablation;
                ProtocolSplit split;
                split.target_domain = cell.target;
                for (int d = 0; d < ds.n_domains; ++d) {
                    if (d != cell.target) split.source_domains.push_back(d);
                }
                split.held_out_spoof_types = cfg.protocol.held_out_spoof_types;

                Model<float> model(Model<float>::build(tc.model, tc.seed));
                TrainReport report = train(ds.samples, ds.n_domains, split, tc, cell_dir.string(),
                                           &model, nullptr, ds.root);
                std::vector<eval::ScoredSample> scored;
                eval::MetricsReport m =
                    eval::evaluate_protocol(model, report.meta, ds.samples, split, cfg.policy, &scored);
                eval::write_metrics_json(m, metrics_path.string());
                eval::write_scores_tsv(scored, (cell_dir / "scores.tsv").string());
                std::lock_guard<std::mutex> lock(io_mutex);
                std::printf("cell %s: AUC=%.4f HTER=%.4f\n", cell.dir_name().c_str(), m.auc, m.hter);
                std::fflush(stdout);
            } catch (const std::exception& e) {
                failures.fetch_add(1);
                std::lock_guard<std::mutex> lock(io_mutex);
                std::cerr << "cell " << cell.dir_name() << " FAILED: " << e.what() << "\n";
                std::ofstream fail(cell_dir / "FAILED.txt");
                fail << e.what() << "\n";
            }
        }
    };
    jobs = std::max(1, jobs);
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();

    // Aggregate from the per-cell files so resumed sweeps stay consistent.
    std::ofstream tsv(fs::path(out_dir) / "sweep.tsv");
    tsv << "target\tablation\tseed\tauc\thter\n";
    std::map<std::pair<int, std::string>, std::vector<std::pair<double, double>>> grouped;
    for (const auto& cell : cells) {
        const fs::path metrics_path = fs::path(out_dir) / "cells" / cell.dir_name() / "metrics.json";
        if (!fs::exists(metrics_path)) continue;
        std::ifstream in(metrics_path);
        json j = json::parse(in);
        const double auc = j.at("auc").get<double>();
        const double hter = j.at("hter").get<double>();
        tsv << cell.target << '\t' << ablation_name(cell.ablation) << '\t' << cell.seed << '\t'
            << auc << '\t' << hter << "\n";
        grouped[{cell.target, ablation_name(cell.ablation)}].push_back({auc, hter});
    }
    tsv.close();

    auto mean_std = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double s = 0.0;
        for (double x : v) s += (x - m) * (x - m);
        s = v.size() > 1 ? std::sqrt(s / static_cast<double>(v.size() - 1)) : 0.0;
        return std::make_pair(m, s);
    };

    std::ofstream summary(fs::path(out_dir) / "summary.tsv");
    summary << "target\tablation\tn\tauc_mean\tauc_std\thter_mean\thter_std\n";
    std::map<std::string, std::vector<std::pair<double, double>>> by_ablation;
    for (const auto& [key, vals] : grouped) {
        std::vector<double> aucs, hters;
        for (const auto& [a, h] : vals) {
            aucs.push_back(a);
            hters.push_back(h);
        }
        const auto [am, as] = mean_std(aucs);
        const auto [hm, hs] = mean_std(hters);
        summary << key.first << '\t' << key.second << '\t' << vals.size() << '\t' << am << '\t' << as
                << '\t' << hm << '\t' << hs << "\n";
        auto& acc = by_ablation[key.second];
        acc.insert(acc.end(), vals.begin(), vals.end());
    }
    for (const auto& [abl, vals] : by_ablation) {
        std::vector<double> aucs, hters;
        for (const auto& [a, h] : vals) {
            aucs.push_back(a);
            hters.push_back(h);
        }
        const auto [am, as] = mean_std(aucs);
        const auto [hm, hs] = mean_std(hters);
        summary << "ALL\t" << abl << '\t' << vals.size() << '\t' << am << '\t' << as << '\t' << hm
                << '\t' << hs << "\n";
        std::printf("ablation %-13s mean AUC %.4f +- %.4f  mean HTER %.4f\n", abl.c_str(), am, as, hm);
    }

    if (failures.load() > 0) {
        std::cerr << failures.load() << " cell(s) failed\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Disentangled liveness representation training and cross-domain evaluation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, manifest_path, checkpoint_path;
    std::string ablation, policy = "eer_on_validation", ablations_csv, seeds_csv;
    bool force = false, leave_one_out = false, resume = false;
    int64_t seed = -1;
    int epochs = -1, target = -1, workers = 2, jobs = 2;

    auto* gen = app.add_subcommand("generate", "Generate a synthetic multi-domain dataset");
    gen->add_option("--config", config_path, "Run config (INI)")->required();
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_flag("--force", force, "Write into a non-empty directory");
    gen->add_option("--seed", seed, "Override [data] seed");
    gen->add_option("--workers", workers, "Generation worker threads");

    auto* tr = app.add_subcommand("train", "Train on the source domains of a protocol split");
    tr->add_option("--config", config_path, "Run config (INI)")->required();
    tr->add_option("--out", out_dir, "Output directory")->required();
    tr->add_option("--manifest", manifest_path, "Dataset manifest (overrides [data] manifest)");
    tr->add_option("--epochs", epochs, "Override [train] epochs");
    tr->add_option("--seed", seed, "Override [train] seed");
    tr->add_option("--ablation", ablation, "full|content_only|domain_only|baseline");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a target domain");
    ev->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
    ev->add_option("--manifest", manifest_path, "Dataset manifest")->required();
    ev->add_option("--target", target, "Target domain id")->required();
    ev->add_option("--policy", policy, "fixed_half|eer_on_validation");
    ev->add_option("--out", out_dir, "Output directory")->required();

    auto* sw = app.add_subcommand("sweep", "Train/evaluate a (target x ablation x seed) grid");
    sw->add_option("--config", config_path, "Run config (INI)")->required();
    sw->add_option("--out", out_dir, "Output directory")->required();
    sw->add_option("--manifest", manifest_path, "Dataset manifest (overrides [data] manifest)");
    sw->add_flag("--leave-one-out", leave_one_out, "One cell per held-out target domain");
    sw->add_option("--ablations", ablations_csv, "Comma list of ablations");
    sw->add_option("--seeds", seeds_csv, "Comma list of seeds");
    sw->add_option("--jobs", jobs, "Concurrent cells");
    sw->add_flag("--resume", resume, "Skip cells with existing metrics.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "argument error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        if (gen->parsed()) return run_generate(config_path, out_dir, force, seed, workers);
        if (tr->parsed()) return run_train(config_path, manifest_path, out_dir, epochs, seed, ablation);
        if (ev->parsed()) return run_eval(checkpoint_path, manifest_path, target, policy, out_dir);
        if (sw->parsed())
            return run_sweep(config_path, manifest_path, out_dir, leave_one_out, ablations_csv,
                             seeds_csv, jobs, resume);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericsError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitDiverged;
    } catch (const ProtocolError& e) {
        std::cerr << "protocol violation: " << e.what() << "\n";
        return kExitProtocol;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

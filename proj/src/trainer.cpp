#include "disfas/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "disfas/eval.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace disfas {

Ablation ablation_from_string(const std::string& s) {
    if (s == "full") return Ablation::full;
    if (s == "content_only") return Ablation::content_only;
    if (s == "domain_only") return Ablation::domain_only;
    if (s == "baseline") return Ablation::baseline;
    throw ConfigError("unknown ablation '" + s + "' (full|content_only|domain_only|baseline)");
}

const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::full: return "full";
        case Ablation::content_only: return "content_only";
        case Ablation::domain_only: return "domain_only";
        case Ablation::baseline: return "baseline";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (val_fraction < 0.0 || val_fraction >= 1.0) throw ConfigError("val_fraction must be in [0,1)");
    model.validate();
}

LossWeights TrainConfig::effective_weights() const {
    LossWeights w = loss_weights;
    switch (ablation) {
        case Ablation::full:
            break;
        case Ablation::content_only:
            w.dom = w.dom_cnf = w.live_cnf = 0.0;
            break;
        case Ablation::domain_only:
            w.cont = w.cont_cnf = 0.0;
            break;
        case Ablation::baseline:
            w.cont = w.cont_cnf = w.dom = w.dom_cnf = w.live_cnf = 0.0;
            break;
    }
    return w;
}

std::vector<bool> active_param_mask(const std::vector<nn::Param<float>*>& params,
                                    const LossWeights& w) {
    std::set<nn::ParamGroup> active;
    auto weight_of = [&](LossId id) {
        switch (id) {
            case LossId::cont: return w.cont;
            case LossId::cont_cnf: return w.cont_cnf;
            case LossId::dom: return w.dom;
            case LossId::dom_cnf: return w.dom_cnf;
            case LossId::live: return w.live;
            case LossId::live_cnf: return w.live_cnf;
        }
        return 0.0;
    };
    for (const auto& route : routing_table()) {
        if (weight_of(route.loss) == 0.0) continue;
        active.insert(route.updated.begin(), route.updated.end());
    }
    std::vector<bool> mask(params.size());
    for (size_t i = 0; i < params.size(); ++i) mask[i] = active.count(params[i]->group) > 0;
    return mask;
}

int steps_per_epoch(int64_t n_train, int batch_size) {
    return static_cast<int>(n_train / batch_size);
}

namespace {

void throw_if_diverged(const LossBundle& b) {
    if (const char* c = b.nonfinite_component()) {
        throw NumericsError(std::string("training diverged: non-finite ") + c);
    }
}

LossBundle joint_step(Model<float>& model, AdamW& opt, const TrainBatch<float>& batch,
                      const LossWeights& w) {
    model.zero_grads();
    LossBundle bundle = run_training_graph(model, batch, w, /*backward=*/true);
    throw_if_diverged(bundle);
    auto params = model.params();
    opt.step(params, active_param_mask(params, w));
    return bundle;
}

}  // namespace

LossBundle train_step(Model<float>& model, AdamW& opt, const TrainBatch<float>& batch,
                      const TrainConfig& cfg) {
    const LossWeights w = cfg.effective_weights();
    if (cfg.update_mode == UpdateMode::joint) {
        return joint_step(model, opt, batch, w);
    }

    // Sequential mode: content, domain, liveness sub-steps in that order, each
    // an independent optimizer step on its own objectives.
    LossBundle out;
    out.weights = w;
    LossWeights sub;

    sub = LossWeights{w.cont, w.cont_cnf, 0, 0, 0, 0};
    if (sub.cont != 0.0 || sub.cont_cnf != 0.0) {
        LossBundle b = joint_step(model, opt, batch, sub);
        out.l_cont = b.l_cont;
        out.l_cont_cnf = b.l_cont_cnf;
    }
    sub = LossWeights{0, 0, w.dom, w.dom_cnf, 0, 0};
    if (sub.dom != 0.0 || sub.dom_cnf != 0.0) {
        LossBundle b = joint_step(model, opt, batch, sub);
        out.l_dom = b.l_dom;
        out.l_dom_cnf = b.l_dom_cnf;
    }
    sub = LossWeights{0, 0, 0, 0, w.live, w.live_cnf};
    if (sub.live != 0.0 || sub.live_cnf != 0.0) {
        LossBundle b = joint_step(model, opt, batch, sub);
        out.l_live = b.l_live;
        out.l_live_cnf = b.l_live_cnf;
    }
    out.finalize();
    throw_if_diverged(out);
    return out;
}

namespace {

// Assemble a batch tensor set from dataset indices.
TrainBatch<float> make_batch(const std::vector<data::LabeledSample>& samples,
                             const std::vector<data::ContentTarget>& targets,
                             const std::vector<int>& pool, const ProtocolSplit& split, size_t begin,
                             size_t count) {
    const auto& first = samples[static_cast<size_t>(pool[begin])];
    const int h = first.image.h, w = first.image.w;
    const int ts = targets.empty() ? 0 : targets[static_cast<size_t>(pool[begin])].h;
    TrainBatch<float> batch;
    batch.images_nchw = Tensor<float>({static_cast<int64_t>(count), 3, h, w});
    if (ts > 0) batch.targets = Tensor<float>({static_cast<int64_t>(count), 1, ts, ts});
    batch.liveness.resize(count);
    batch.domains.resize(count);
    for (size_t i = 0; i < count; ++i) {
        const auto& s = samples[static_cast<size_t>(pool[begin + i])];
        check_contract(s.image.h == h && s.image.w == w, "mixed image sizes in one batch");
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    batch.images_nchw.at(static_cast<int64_t>(i), c, y, x) = s.image.at(y, x, c);
                }
            }
        }
        if (ts > 0) {
            const auto& t = targets[static_cast<size_t>(pool[begin + i])];
            std::copy(t.map.begin(), t.map.end(),
                      batch.targets.data() + static_cast<int64_t>(i) * ts * ts);
        }
        batch.liveness[i] = s.liveness;
        batch.domains[i] = split.reindex(s.domain);
    }
    return batch;
}

// Guarantee each batch holds at least one sample of each liveness class where
// the pool makes that attainable: scan batches, swap with a donor batch that
// has a surplus of the missing class.
void repair_batches(std::vector<int>& order, const std::vector<data::LabeledSample>& samples,
                    int batch_size) {
    const int n_batches = static_cast<int>(order.size()) / batch_size;
    if (n_batches <= 1) return;
    auto live_count = [&](int b) {
        int c = 0;
        for (int i = 0; i < batch_size; ++i) {
            c += samples[static_cast<size_t>(order[static_cast<size_t>(b * batch_size + i)])].liveness;
        }
        return c;
    };
    for (int b = 0; b < n_batches; ++b) {
        const int lc = live_count(b);
        const int want = (lc == 0) ? 1 : (lc == batch_size ? 0 : -1);
        if (want == -1) continue;
        for (int d = 0; d < n_batches && want != -1; ++d) {
            if (d == b) continue;
            const int dlc = live_count(d);
            const bool donor_ok = want == 1 ? dlc >= 2 : (batch_size - dlc) >= 2;
            if (!donor_ok) continue;
            // Swap the first mismatching pair.
            for (int i = 0; i < batch_size; ++i) {
                int& mine = order[static_cast<size_t>(b * batch_size + i)];
                if (samples[static_cast<size_t>(mine)].liveness == want) continue;
                for (int j = 0; j < batch_size; ++j) {
                    int& theirs = order[static_cast<size_t>(d * batch_size + j)];
                    if (samples[static_cast<size_t>(theirs)].liveness != want) continue;
                    std::swap(mine, theirs);
                    i = batch_size;  // done with this batch
                    break;
                }
            }
            break;
        }
    }
}

json bundle_to_json(const LossBundle& b) {
    return json{{"l_cont", b.l_cont},       {"l_cont_cnf", b.l_cont_cnf}, {"l_dom", b.l_dom},
                {"l_dom_cnf", b.l_dom_cnf}, {"l_live", b.l_live},         {"l_live_cnf", b.l_live_cnf},
                {"total", b.total}};
}

json metrics_to_json_obj(const eval::MetricsReport& r) {
    json j{{"auc", r.auc},       {"hter", r.hter}, {"threshold", r.threshold},
           {"far", r.far},       {"frr", r.frr},   {"n_real", r.n_real},
           {"n_spoof", r.n_spoof}, {"policy", r.policy}};
    if (r.hter_fixed_half) j["hter_fixed_half"] = *r.hter_fixed_half;
    if (r.hter_eer) j["hter_eer"] = *r.hter_eer;
    if (r.threshold_eer) j["threshold_eer"] = *r.threshold_eer;
    if (!r.per_spoof_type.empty()) {
        json b = json::object();
        for (const auto& [k, v] : r.per_spoof_type) {
            b[k] = json{{"auc", v.auc}, {"hter", v.hter}, {"n_real", v.n_real}, {"n_spoof", v.n_spoof}};
        }
        j["per_spoof_type"] = b;
    }
    if (!r.per_domain.empty()) {
        json b = json::object();
        for (const auto& [k, v] : r.per_domain) {
            b[std::to_string(k)] =
                json{{"auc", v.auc}, {"hter", v.hter}, {"n_real", v.n_real}, {"n_spoof", v.n_spoof}};
        }
        j["per_domain"] = b;
    }
    return j;
}

json config_to_json_obj(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"learning_rate", c.learning_rate},
                {"weight_decay", c.weight_decay},
                {"seed", c.seed},
                {"loss_weights",
                 {{"cont", c.loss_weights.cont},
                  {"cont_cnf", c.loss_weights.cont_cnf},
                  {"dom", c.loss_weights.dom},
                  {"dom_cnf", c.loss_weights.dom_cnf},
                  {"live", c.loss_weights.live},
                  {"live_cnf", c.loss_weights.live_cnf}}},
                {"ablation", ablation_name(c.ablation)},
                {"eval_every", c.eval_every},
                {"update_mode", c.update_mode == UpdateMode::joint ? "joint" : "sequential"},
                {"balance_domains", c.balance_domains},
                {"val_fraction", c.val_fraction},
                {"content_mode",
                 c.content_mode == data::ContentMode::shape_mask ? "shape_mask" : "precomputed"},
                {"model",
                 {{"image_size", c.model.image_size},
                  {"target_size", c.model.target_size},
                  {"feat_dim", c.model.feat_dim},
                  {"hidden_dim", c.model.hidden_dim},
                  {"stem_channels", c.model.stem_channels},
                  {"alpha", c.model.alpha},
                  {"margin", c.model.margin}}}};
}

}  // namespace

TrainReport train(const std::vector<data::LabeledSample>& samples, int dataset_domains,
                  const ProtocolSplit& split, const TrainConfig& cfg, const std::string& out_dir,
                  Model<float>* out_model, AdamState* out_opt, const std::string& data_root,
                  const std::function<void(int, const LossBundle&)>& on_epoch) {
    const auto t_start = std::chrono::steady_clock::now();
    cfg.validate();
    split.validate(dataset_domains);

    // Training pool: source domains, held-out spoof types excluded.
    std::vector<int> pool;
    for (size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (in_training_set(split, s.domain, s.liveness, s.spoof_type)) {
            pool.push_back(static_cast<int>(i));
        }
    }
    for (int d : split.sorted_sources()) {
        const bool any = std::any_of(pool.begin(), pool.end(), [&](int i) {
            return samples[static_cast<size_t>(i)].domain == d;
        });
        if (!any) {
            throw ProtocolError("source domain " + std::to_string(d) +
                                " has no samples after filtering");
        }
    }

    // Stratified validation split by (domain, liveness), fixed by seed.
    std::vector<int> train_idx, val_idx;
    {
        std::map<std::pair<int, int>, std::vector<int>> groups;
        for (int i : pool) {
            const auto& s = samples[static_cast<size_t>(i)];
            groups[{s.domain, s.liveness}].push_back(i);
        }
        Rng rng = Rng::stream(cfg.seed, 0x76616c73u);  // validation split stream
        for (auto& [key, g] : groups) {
            shuffle(g, rng);
            const size_t n_val = static_cast<size_t>(static_cast<double>(g.size()) * cfg.val_fraction);
            for (size_t i = 0; i < g.size(); ++i) {
                (i < n_val ? val_idx : train_idx).push_back(g[i]);
            }
        }
        std::sort(train_idx.begin(), train_idx.end());
        std::sort(val_idx.begin(), val_idx.end());
    }

    // Content supervision, computed once per sample.
    const LossWeights eff = cfg.effective_weights();
    std::vector<data::ContentTarget> targets;
    if (eff.cont != 0.0) {
        targets.resize(samples.size());
        for (int i : train_idx) {
            const auto& s = samples[static_cast<size_t>(i)];
            targets[static_cast<size_t>(i)] =
                data::content_target(s.image, cfg.model.target_size, cfg.content_mode, data_root,
                                     s.sample_id);
        }
    }

    ModelConfig mc = cfg.model;
    mc.n_domains = static_cast<int>(split.sorted_sources().size());
    Model<float> model = Model<float>::build(mc, cfg.seed);
    AdamW opt;
    opt.lr = cfg.learning_rate;
    opt.weight_decay = cfg.weight_decay;
    opt.reset(model.params());

    TrainReport report;
    report.steps_per_epoch = steps_per_epoch(static_cast<int64_t>(train_idx.size()), cfg.batch_size);
    for (int i : train_idx) report.train_sample_ids.push_back(samples[static_cast<size_t>(i)].sample_id);
    for (int i : val_idx) report.val_sample_ids.push_back(samples[static_cast<size_t>(i)].sample_id);

    TrainMeta meta;
    meta.source_domains = split.sorted_sources();
    meta.target_domain = split.target_domain;
    meta.held_out_spoof_types = split.held_out_spoof_types;
    meta.val_sample_ids = report.val_sample_ids;
    meta.train_seed = cfg.seed;
    report.meta = meta;

    std::vector<data::LabeledSample> val_samples;
    for (int i : val_idx) val_samples.push_back(samples[static_cast<size_t>(i)]);

    const bool writing = !out_dir.empty();
    if (writing) fs::create_directories(out_dir);

    double best_auc = -1.0;
    auto maybe_eval = [&](int epoch) {
        if (val_samples.empty()) return;
        std::vector<double> scores = eval::score(model, val_samples);
        std::vector<double> sr, ss;
        for (size_t i = 0; i < val_samples.size(); ++i) {
            (val_samples[i].liveness == 1 ? sr : ss).push_back(scores[i]);
        }
        if (sr.empty() || ss.empty()) return;
        eval::MetricsReport r;
        r.auc = eval::roc_auc(sr, ss);
        const auto h = eval::hter(sr, ss, 0.5);
        r.hter = h.hter;
        r.far = h.far;
        r.frr = h.frr;
        r.threshold = 0.5;
        r.n_real = static_cast<int>(sr.size());
        r.n_spoof = static_cast<int>(ss.size());
        r.policy = eval::policy_name(eval::ThresholdPolicy::fixed_half);
        report.val_metrics.emplace_back(epoch, r);
        if (r.auc > best_auc) {
            best_auc = r.auc;
            if (writing) {
                report.best_checkpoint = (fs::path(out_dir) / "checkpoint_best.ckpt").string();
                save_checkpoint(model, &opt.state, epoch, meta, report.best_checkpoint);
            }
        }
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order = train_idx;
        Rng rng = Rng::stream(cfg.seed, 0x65706f00u + static_cast<uint64_t>(epoch));
        if (cfg.balance_domains) {
            // Round-robin over per-domain shuffled queues.
            std::map<int, std::vector<int>> per_dom;
            for (int i : order) per_dom[samples[static_cast<size_t>(i)].domain].push_back(i);
            for (auto& [d, q] : per_dom) shuffle(q, rng);
            order.clear();
            bool more = true;
            size_t k = 0;
            while (more) {
                more = false;
                for (auto& [d, q] : per_dom) {
                    if (k < q.size()) {
                        order.push_back(q[k]);
                        more = true;
                    }
                }
                ++k;
            }
        } else {
            shuffle(order, rng);
        }
        repair_batches(order, samples, cfg.batch_size);

        LossBundle epoch_mean;
        epoch_mean.weights = eff;
        const int n_steps = steps_per_epoch(static_cast<int64_t>(order.size()), cfg.batch_size);
        for (int s = 0; s < n_steps; ++s) {
            TrainBatch<float> batch =
                make_batch(samples, targets, order, split, static_cast<size_t>(s) * cfg.batch_size,
                           static_cast<size_t>(cfg.batch_size));
            LossBundle b = train_step(model, opt, batch, cfg);
            epoch_mean.l_cont += b.l_cont;
            epoch_mean.l_cont_cnf += b.l_cont_cnf;
            epoch_mean.l_dom += b.l_dom;
            epoch_mean.l_dom_cnf += b.l_dom_cnf;
            epoch_mean.l_live += b.l_live;
            epoch_mean.l_live_cnf += b.l_live_cnf;
        }
        if (n_steps > 0) {
            const double inv = 1.0 / n_steps;
            epoch_mean.l_cont *= inv;
            epoch_mean.l_cont_cnf *= inv;
            epoch_mean.l_dom *= inv;
            epoch_mean.l_dom_cnf *= inv;
            epoch_mean.l_live *= inv;
            epoch_mean.l_live_cnf *= inv;
        }
        epoch_mean.finalize();
        report.loss_history.push_back(epoch_mean);
        if (on_epoch) on_epoch(epoch + 1, epoch_mean);

        if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs) maybe_eval(epoch + 1);
    }
    if (cfg.epochs == 0) maybe_eval(0);

    if (writing) {
        report.final_checkpoint = (fs::path(out_dir) / "checkpoint_last.ckpt").string();
        save_checkpoint(model, &opt.state, cfg.epochs, meta, report.final_checkpoint);
        if (report.best_checkpoint.empty()) report.best_checkpoint = report.final_checkpoint;
    }

    report.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (writing) write_report_json(report, cfg, (fs::path(out_dir) / "report.json").string());
    if (out_model) *out_model = std::move(model);
    if (out_opt) *out_opt = opt.state;
    return report;
}

void write_report_json(const TrainReport& report, const TrainConfig& cfg, const std::string& path) {
    json j;
    j["epochs"] = cfg.epochs;
    json hist = json::array();
    for (const auto& b : report.loss_history) hist.push_back(bundle_to_json(b));
    j["loss_history"] = hist;
    json vals = json::array();
    for (const auto& [epoch, r] : report.val_metrics) {
        json v = metrics_to_json_obj(r);
        v["epoch"] = epoch;
        vals.push_back(v);
    }
    j["val_metrics"] = vals;
    j["config"] = config_to_json_obj(cfg);
    j["checkpoints"] = json{{"last", report.final_checkpoint}, {"best", report.best_checkpoint}};
    j["steps_per_epoch"] = report.steps_per_epoch;
    j["wall_clock_sec"] = report.wall_clock_sec;
    j["train_sample_ids"] = report.train_sample_ids;
    j["val_sample_ids"] = report.val_sample_ids;
    j["source_domains"] = report.meta.source_domains;
    j["target_domain"] = report.meta.target_domain;
    j["held_out_spoof_types"] = report.meta.held_out_spoof_types;

    std::ofstream out(path);
    if (!out) throw IoError("cannot write report " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("short write to " + path);
}

}  // namespace disfas

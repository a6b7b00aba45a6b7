#include "disfas/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <json.hpp>

#include "disfas/errors.hpp"

using nlohmann::json;

namespace disfas::eval {

double roc_auc(const std::vector<double>& scores_real, const std::vector<double>& scores_spoof) {
    if (scores_real.empty() || scores_spoof.empty()) {
        throw ContractError("roc_auc: both classes must be non-empty");
    }
    std::vector<double> sorted_real = scores_real;
    std::sort(sorted_real.begin(), sorted_real.end());
    int64_t wins2 = 0;  // 2*wins + ties, to stay in integer arithmetic
    for (double s : scores_spoof) {
        const auto lo = std::lower_bound(sorted_real.begin(), sorted_real.end(), s);
        const auto hi = std::upper_bound(lo, sorted_real.end(), s);
        const int64_t greater = sorted_real.end() - hi;
        const int64_t ties = hi - lo;
        wins2 += 2 * greater + ties;
    }
    return static_cast<double>(wins2) /
           (2.0 * static_cast<double>(sorted_real.size()) * static_cast<double>(scores_spoof.size()));
}

HterResult hter(const std::vector<double>& scores_real, const std::vector<double>& scores_spoof,
                double threshold) {
    if (scores_real.empty() || scores_spoof.empty()) {
        throw ContractError("hter: both classes must be non-empty");
    }
    int64_t fa = 0, fr = 0;
    for (double s : scores_spoof) fa += (s >= threshold) ? 1 : 0;
    for (double s : scores_real) fr += (s < threshold) ? 1 : 0;
    HterResult r;
    r.far = static_cast<double>(fa) / static_cast<double>(scores_spoof.size());
    r.frr = static_cast<double>(fr) / static_cast<double>(scores_real.size());
    r.hter = (r.far + r.frr) / 2.0;
    return r;
}

double select_threshold(const std::vector<double>& val_real, const std::vector<double>& val_spoof,
                        ThresholdPolicy policy) {
    if (policy == ThresholdPolicy::fixed_half) return 0.5;
    if (val_real.empty() || val_spoof.empty()) {
        throw ContractError("select_threshold: eer policy needs non-empty validation classes");
    }
    std::set<double> distinct(val_real.begin(), val_real.end());
    distinct.insert(val_spoof.begin(), val_spoof.end());
    std::vector<double> s(distinct.begin(), distinct.end());

    constexpr double kEps = 1e-6;
    std::vector<double> candidates;
    candidates.push_back(s.front() - kEps);
    for (size_t i = 0; i + 1 < s.size(); ++i) candidates.push_back(0.5 * (s[i] + s[i + 1]));
    candidates.push_back(s.back() + kEps);

    double best_tau = candidates.front();
    double best_gap = std::numeric_limits<double>::infinity();
    for (double tau : candidates) {  // increasing order; ties keep the smaller tau
        const HterResult h = hter(val_real, val_spoof, tau);
        const double gap = std::abs(h.far - h.frr);
        if (gap < best_gap) {
            best_gap = gap;
            best_tau = tau;
        }
    }
    return best_tau;
}

std::vector<double> score(const Model<float>& model,
                          const std::vector<data::LabeledSample>& samples, int batch_size) {
    std::vector<double> out;
    out.reserve(samples.size());
    const int sz = model.cfg.image_size;
    for (size_t begin = 0; begin < samples.size(); begin += static_cast<size_t>(batch_size)) {
        const size_t count = std::min(static_cast<size_t>(batch_size), samples.size() - begin);
        Tensor<float> images({static_cast<int64_t>(count), sz, sz, 3});
        for (size_t i = 0; i < count; ++i) {
            const auto& img = samples[begin + i].image;
            check_contract(img.h == sz && img.w == sz, "sample image size mismatch with model");
            std::copy(img.pix.begin(), img.pix.end(),
                      images.data() + static_cast<int64_t>(i) * sz * sz * 3);
        }
        Tensor<float> f = model.encode(images, Head::liveness);
        LivenessOutput<float> lo = model.classify_liveness(f);
        for (size_t i = 0; i < count; ++i) out.push_back(static_cast<double>(lo.prob_real[i]));
    }
    return out;
}

namespace {

SubReport sub_metrics(const std::vector<double>& real, const std::vector<double>& spoof,
                      double threshold) {
    SubReport r;
    r.n_real = static_cast<int>(real.size());
    r.n_spoof = static_cast<int>(spoof.size());
    if (!real.empty() && !spoof.empty()) {
        r.auc = roc_auc(real, spoof);
        r.hter = hter(real, spoof, threshold).hter;
    }
    return r;
}

}  // namespace

MetricsReport evaluate_protocol(const Model<float>& model, const TrainMeta& meta,
                                const std::vector<data::LabeledSample>& samples,
                                const ProtocolSplit& split, ThresholdPolicy policy,
                                std::vector<ScoredSample>* scored_out) {
    if (std::find(meta.source_domains.begin(), meta.source_domains.end(), split.target_domain) !=
        meta.source_domains.end()) {
        throw ProtocolError("protocol violation: checkpoint was trained on domain " +
                            std::to_string(split.target_domain));
    }
    if (!split.source_domains.empty() && split.sorted_sources() != meta.source_domains) {
        throw ProtocolError("protocol violation: checkpoint source domains differ from split");
    }

    std::vector<data::LabeledSample> eval_set;
    for (const auto& s : samples) {
        if (in_eval_set(split, s.domain, s.liveness, s.spoof_type)) eval_set.push_back(s);
    }
    if (eval_set.empty()) throw ProtocolError("evaluation set is empty for target domain " +
                                              std::to_string(split.target_domain));

    // Scores are computed for the whole evaluation set before any label is
    // consulted.
    const std::vector<double> scores = score(model, eval_set);

    std::vector<double> sr, ss;
    for (size_t i = 0; i < eval_set.size(); ++i) {
        (eval_set[i].liveness == 1 ? sr : ss).push_back(scores[i]);
    }
    if (sr.empty() || ss.empty()) {
        throw ProtocolError("evaluation set lacks one liveness class (n_real=" +
                            std::to_string(sr.size()) + ", n_spoof=" + std::to_string(ss.size()) + ")");
    }

    MetricsReport r;
    r.n_real = static_cast<int>(sr.size());
    r.n_spoof = static_cast<int>(ss.size());
    r.auc = roc_auc(sr, ss);
    r.policy = policy_name(policy);

    // The eer policy derives its threshold from the training run's validation
    // slice, re-scored with the current parameters.
    std::optional<double> tau_eer;
    {
        std::vector<data::LabeledSample> val_samples;
        std::set<std::string> val_ids(meta.val_sample_ids.begin(), meta.val_sample_ids.end());
        for (const auto& s : samples) {
            if (val_ids.count(s.sample_id)) val_samples.push_back(s);
        }
        if (!val_samples.empty()) {
            const std::vector<double> vscores = score(model, val_samples);
            std::vector<double> vr, vs;
            for (size_t i = 0; i < val_samples.size(); ++i) {
                (val_samples[i].liveness == 1 ? vr : vs).push_back(vscores[i]);
            }
            if (!vr.empty() && !vs.empty()) {
                tau_eer = select_threshold(vr, vs, ThresholdPolicy::eer_on_validation);
            }
        }
    }
    if (policy == ThresholdPolicy::eer_on_validation && !tau_eer) {
        throw ProtocolError("eer_on_validation policy: validation samples unavailable in manifest");
    }

    r.threshold = (policy == ThresholdPolicy::eer_on_validation) ? *tau_eer : 0.5;
    const HterResult h = hter(sr, ss, r.threshold);
    r.far = h.far;
    r.frr = h.frr;
    r.hter = h.hter;
    r.hter_fixed_half = hter(sr, ss, 0.5).hter;
    if (tau_eer) {
        r.threshold_eer = *tau_eer;
        r.hter_eer = hter(sr, ss, *tau_eer).hter;
    }

    // Breakdown per spoof type (each type against all target reals) and per
    // domain (single-entry for a one-target protocol).
    std::map<std::string, std::vector<double>> by_type;
    for (size_t i = 0; i < eval_set.size(); ++i) {
        if (eval_set[i].liveness == 0) by_type[eval_set[i].spoof_type].push_back(scores[i]);
    }
    for (const auto& [type, sc] : by_type) {
        r.per_spoof_type[type] = sub_metrics(sr, sc, r.threshold);
    }
    r.per_domain[split.target_domain] = sub_metrics(sr, ss, r.threshold);

    if (scored_out) {
        scored_out->clear();
        for (size_t i = 0; i < eval_set.size(); ++i) {
            scored_out->push_back({eval_set[i].sample_id, eval_set[i].domain, eval_set[i].liveness,
                                   eval_set[i].spoof_type, scores[i]});
        }
    }
    return r;
}

void write_scores_tsv(const std::vector<ScoredSample>& scored, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write score dump " + path);
    out.precision(17);
    for (const auto& s : scored) {
        out << s.sample_id << '\t' << s.domain << '\t' << s.liveness << '\t' << s.spoof_type << '\t'
            << s.score << "\n";
    }
    if (!out) throw IoError("short write to " + path);
}

void write_metrics_json(const MetricsReport& r, const std::string& path) {
    json j{{"auc", r.auc},         {"hter", r.hter}, {"threshold", r.threshold},
           {"far", r.far},         {"frr", r.frr},   {"n_real", r.n_real},
           {"n_spoof", r.n_spoof}, {"policy", r.policy}};
    if (r.hter_fixed_half) j["hter_fixed_half"] = *r.hter_fixed_half;
    if (r.hter_eer) j["hter_eer"] = *r.hter_eer;
    if (r.threshold_eer) j["threshold_eer"] = *r.threshold_eer;
    json types = json::object();
    for (const auto& [k, v] : r.per_spoof_type) {
        types[k] = json{{"auc", v.auc}, {"hter", v.hter}, {"n_real", v.n_real}, {"n_spoof", v.n_spoof}};
    }
    j["per_spoof_type"] = types;
    json doms = json::object();
    for (const auto& [k, v] : r.per_domain) {
        doms[std::to_string(k)] =
            json{{"auc", v.auc}, {"hter", v.hter}, {"n_real", v.n_real}, {"n_spoof", v.n_spoof}};
    }
    j["per_domain"] = doms;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write metrics " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("short write to " + path);
}

double domain_probe(const Model<float>& model, const std::vector<data::LabeledSample>& samples,
                    const ProtocolSplit& split, Head encoder, bool shuffle_labels) {
    const auto sources = split.sorted_sources();
    if (sources.size() < 2) throw ProtocolError("domain probe undefined for fewer than 2 source domains");
    const int s_eff = static_cast<int>(sources.size());
    const int feat = model.cfg.feat_dim;

    std::vector<const data::LabeledSample*> pool;
    for (const auto& s : samples) {
        if (std::find(sources.begin(), sources.end(), s.domain) != sources.end()) {
            pool.push_back(&s);
        }
    }
    check_contract(!pool.empty(), "domain probe: no source-domain samples");

    // Frozen features.
    std::vector<data::LabeledSample> pool_copy;
    pool_copy.reserve(pool.size());
    for (const auto* p : pool) pool_copy.push_back(*p);
    const int sz = model.cfg.image_size;
    std::vector<std::vector<double>> feats(pool.size());
    {
        const int bsz = 64;
        for (size_t begin = 0; begin < pool.size(); begin += bsz) {
            const size_t count = std::min(static_cast<size_t>(bsz), pool.size() - begin);
            Tensor<float> images({static_cast<int64_t>(count), sz, sz, 3});
            for (size_t i = 0; i < count; ++i) {
                std::copy(pool_copy[begin + i].image.pix.begin(), pool_copy[begin + i].image.pix.end(),
                          images.data() + static_cast<int64_t>(i) * sz * sz * 3);
            }
            Tensor<float> f = model.encode(images, encoder);
            for (size_t i = 0; i < count; ++i) {
                feats[begin + i].resize(static_cast<size_t>(feat));
                for (int j = 0; j < feat; ++j) {
                    feats[begin + i][static_cast<size_t>(j)] =
                        static_cast<double>(f.at(static_cast<int64_t>(i), j));
                }
            }
        }
    }

    std::vector<int> labels(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) labels[i] = split.reindex(pool[i]->domain);

    Rng rng(0xd15fa5ULL);  // fixed: probe results must be comparable across runs
    if (shuffle_labels) shuffle(labels, rng);

    // 70/30 split stratified by domain label.
    std::vector<int> train_i, test_i;
    {
        std::map<int, std::vector<int>> groups;
        for (size_t i = 0; i < pool.size(); ++i) groups[labels[i]].push_back(static_cast<int>(i));
        for (auto& [d, g] : groups) {
            shuffle(g, rng);
            const size_t n_train = (g.size() * 7) / 10;
            for (size_t i = 0; i < g.size(); ++i) (i < n_train ? train_i : test_i).push_back(g[i]);
        }
    }
    check_contract(!train_i.empty() && !test_i.empty(), "domain probe: degenerate split");

    // Standardize on the training split.
    std::vector<double> mean(static_cast<size_t>(feat), 0.0), stdev(static_cast<size_t>(feat), 0.0);
    for (int i : train_i) {
        for (int j = 0; j < feat; ++j) mean[static_cast<size_t>(j)] += feats[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    for (auto& v : mean) v /= static_cast<double>(train_i.size());
    for (int i : train_i) {
        for (int j = 0; j < feat; ++j) {
            const double d = feats[static_cast<size_t>(i)][static_cast<size_t>(j)] - mean[static_cast<size_t>(j)];
            stdev[static_cast<size_t>(j)] += d * d;
        }
    }
    for (auto& v : stdev) v = std::max(std::sqrt(v / static_cast<double>(train_i.size())), 1e-6);

    auto feature_of = [&](int i, int j) {
        return (feats[static_cast<size_t>(i)][static_cast<size_t>(j)] - mean[static_cast<size_t>(j)]) /
               stdev[static_cast<size_t>(j)];
    };

    // Multinomial logistic regression, zero init, full-batch gradient descent,
    // fixed 100-epoch schedule.
    std::vector<double> w(static_cast<size_t>(s_eff) * (feat + 1), 0.0);  // [s, feat+bias]
    const double lr = 0.5;
    std::vector<double> logits(static_cast<size_t>(s_eff));
    std::vector<double> grad(w.size());
    for (int epoch = 0; epoch < 100; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (int i : train_i) {
            for (int c = 0; c < s_eff; ++c) {
                double z = w[static_cast<size_t>(c) * (feat + 1) + static_cast<size_t>(feat)];
                for (int j = 0; j < feat; ++j) {
                    z += w[static_cast<size_t>(c) * (feat + 1) + static_cast<size_t>(j)] * feature_of(i, j);
                }
                logits[static_cast<size_t>(c)] = z;
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double denom = 0.0;
            for (double& z : logits) {
                z = std::exp(z - mx);
                denom += z;
            }
            for (int c = 0; c < s_eff; ++c) {
                const double p = logits[static_cast<size_t>(c)] / denom;
                const double err = p - (labels[static_cast<size_t>(i)] == c ? 1.0 : 0.0);
                double* gw = grad.data() + static_cast<size_t>(c) * (feat + 1);
                for (int j = 0; j < feat; ++j) gw[j] += err * feature_of(i, j);
                gw[feat] += err;
            }
        }
        const double inv = lr / static_cast<double>(train_i.size());
        for (size_t k = 0; k < w.size(); ++k) w[k] -= inv * grad[k];
    }

    int correct = 0;
    for (int i : test_i) {
        int best = 0;
        double best_z = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < s_eff; ++c) {
            double z = w[static_cast<size_t>(c) * (feat + 1) + static_cast<size_t>(feat)];
            for (int j = 0; j < feat; ++j) {
                z += w[static_cast<size_t>(c) * (feat + 1) + static_cast<size_t>(j)] * feature_of(i, j);
            }
            if (z > best_z) {
                best_z = z;
                best = c;
            }
        }
        correct += (best == labels[static_cast<size_t>(i)]) ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(test_i.size());
}

}  // namespace disfas::eval

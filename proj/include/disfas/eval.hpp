#pragma once

#include <string>
#include <vector>

#include "disfas/checkpoint.hpp"
#include "disfas/data.hpp"
#include "disfas/metrics.hpp"
#include "disfas/model.hpp"
#include "disfas/protocol.hpp"

namespace disfas::eval {

// Real-face probability per sample, from the liveness encoder and classifier
// only; the content/domain branches are never evaluated here.
std::vector<double> score(const Model<float>& model,
                          const std::vector<data::LabeledSample>& samples, int batch_size = 64);

struct ScoredSample {
    std::string sample_id;
    int domain = 0;
    int liveness = 1;
    std::string spoof_type;
    double score = 0.0;
};

// Scores the split's evaluation set and computes AUC/HTER under the chosen
// threshold policy, with per-spoof-type and per-domain breakdowns. The
// eer_on_validation policy re-scores the checkpoint's validation slice, which
// must be present in `samples`.
MetricsReport evaluate_protocol(const Model<float>& model, const TrainMeta& meta,
                                const std::vector<data::LabeledSample>& samples,
                                const ProtocolSplit& split, ThresholdPolicy policy,
                                std::vector<ScoredSample>* scored_out = nullptr);

void write_scores_tsv(const std::vector<ScoredSample>& scored, const std::string& path);
void write_metrics_json(const MetricsReport& report, const std::string& path);

// Fits a fresh linear softmax probe (fixed 100-epoch full-batch schedule,
// feature standardization, zero init) from frozen encoder features to
// re-indexed source-domain labels; returns held-out accuracy. Never mutates
// the model.
double domain_probe(const Model<float>& model, const std::vector<data::LabeledSample>& samples,
                    const ProtocolSplit& split, Head encoder = Head::liveness,
                    bool shuffle_labels = false);

}  // namespace disfas::eval

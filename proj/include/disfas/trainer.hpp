#pragma once

#include <functional>
#include <string>
#include <vector>

#include "disfas/checkpoint.hpp"
#include "disfas/data.hpp"
#include "disfas/graph.hpp"
#include "disfas/metrics.hpp"
#include "disfas/optimizer.hpp"
#include "disfas/protocol.hpp"

namespace disfas {

enum class Ablation { full, content_only, domain_only, baseline };
enum class UpdateMode { joint, sequential };

Ablation ablation_from_string(const std::string& s);
const char* ablation_name(Ablation a);

struct TrainConfig {
    int epochs = 30;
    int batch_size = 10;
    double learning_rate = 1e-3;
    double weight_decay = 1e-2;
    uint64_t seed = 1;
    LossWeights loss_weights;
    Ablation ablation = Ablation::full;
    int eval_every = 5;
    UpdateMode update_mode = UpdateMode::joint;
    bool balance_domains = false;
    double val_fraction = 0.1;
    data::ContentMode content_mode = data::ContentMode::shape_mask;
    ModelConfig model;

    void validate() const;

    // Ablation switches zero out loss weights; the remaining ones are taken
    // from loss_weights unchanged.
    LossWeights effective_weights() const;
};

struct TrainReport {
    std::vector<LossBundle> loss_history;  // one per epoch (mean over steps)
    std::vector<std::pair<int, eval::MetricsReport>> val_metrics;
    double wall_clock_sec = 0.0;
    std::string final_checkpoint;
    std::string best_checkpoint;
    std::vector<std::string> train_sample_ids;
    std::vector<std::string> val_sample_ids;
    int steps_per_epoch = 0;
    TrainMeta meta;
};

// One optimizer step on the routed weighted total. Joint mode takes a single
// step; sequential mode applies the content, domain and liveness objectives
// as three consecutive sub-steps.
LossBundle train_step(Model<float>& model, AdamW& opt, const TrainBatch<float>& batch,
                      const TrainConfig& cfg);

// Per-parameter activity under the given weights: a group participates iff
// some loss with a nonzero weight routes into it.
std::vector<bool> active_param_mask(const std::vector<nn::Param<float>*>& params,
                                    const LossWeights& w);

int steps_per_epoch(int64_t n_train, int batch_size);

// Full training run over the source portion of `samples`. Checkpoints and the
// report are written under out_dir when it is non-empty; the trained model and
// optimizer state are returned through the out-pointers when provided.
TrainReport train(const std::vector<data::LabeledSample>& samples, int dataset_domains,
                  const ProtocolSplit& split, const TrainConfig& cfg, const std::string& out_dir,
                  Model<float>* out_model = nullptr, AdamState* out_opt = nullptr,
                  const std::string& data_root = "",
                  const std::function<void(int, const LossBundle&)>& on_epoch = {});

void write_report_json(const TrainReport& report, const TrainConfig& cfg, const std::string& path);

}  // namespace disfas

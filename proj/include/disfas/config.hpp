#pragma once

#include <string>

#include "disfas/data.hpp"
#include "disfas/metrics.hpp"
#include "disfas/protocol.hpp"
#include "disfas/trainer.hpp"

namespace disfas {

// The operator-facing run configuration: INI-style sections [data], [model],
// [train], [protocol], [eval]. Unknown keys are a hard error. Every command
// writes the fully resolved configuration next to its outputs.
struct RunConfig {
    data::SyntheticFactorSpec data;
    std::string manifest_path;  // optional; empty means generate synthetically
    TrainConfig train;
    ProtocolSplit protocol;
    eval::ThresholdPolicy policy = eval::ThresholdPolicy::eer_on_validation;

    // Whether the file set these explicitly (DISFAS_SEED only fills the gaps).
    bool data_seed_set = false;
    bool train_seed_set = false;

    // data.image_size/target sizes must agree with the model config; keep one
    // source of truth.
    void harmonize() {
        data.image_size = train.model.image_size;
    }
};

RunConfig load_run_config(const std::string& path);
void write_run_config(const RunConfig& cfg, const std::string& path);

}  // namespace disfas

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "disfas/model.hpp"
#include "disfas/optimizer.hpp"

namespace disfas {

// Provenance carried by a trained model: which protocol produced it and which
// samples formed its validation slice. evaluate_protocol's target guard and
// the eer_on_validation policy both rely on it.
struct TrainMeta {
    std::vector<int> source_domains;  // original dataset domain ids
    int target_domain = -1;
    std::vector<std::string> held_out_spoof_types;
    std::vector<std::string> val_sample_ids;
    uint64_t train_seed = 0;
};

struct Checkpoint {
    Model<float> model;
    std::optional<AdamState> optimizer;
    int epoch = 0;
    TrainMeta meta;
};

// Single-file container: one line of UTF-8 JSON (format "DISFAS-CKPT v1",
// epoch, architecture config, array directory with name/shape/offset, train
// meta) terminated by '\n', followed by the raw little-endian float32 arrays
// at the listed offsets. Round-trips are bit-exact at float32.
void save_checkpoint(Model<float>& model, const AdamState* optimizer, int epoch,
                     const TrainMeta& meta, const std::string& path);

Checkpoint load_checkpoint(const std::string& path);

// Rewrite a checkpoint without the arrays whose name starts with any of the
// given prefixes (e.g. {"enc_cont", "enc_dom", "dec."}). Loading the result
// zero-fills the dropped parameters.
void strip_checkpoint_arrays(const std::string& in_path, const std::string& out_path,
                             const std::vector<std::string>& drop_prefixes);

}  // namespace disfas

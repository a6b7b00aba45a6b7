#include "disfas/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "disfas/errors.hpp"

namespace disfas {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "DISFAS-CKPT v1";

json config_to_json(const ModelConfig& c) {
    return json{{"image_size", c.image_size},   {"target_size", c.target_size},
                {"feat_dim", c.feat_dim},       {"hidden_dim", c.hidden_dim},
                {"stem_channels", c.stem_channels}, {"n_domains", c.n_domains},
                {"alpha", c.alpha},             {"margin", c.margin}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.image_size = j.at("image_size").get<int>();
    c.target_size = j.at("target_size").get<int>();
    c.feat_dim = j.at("feat_dim").get<int>();
    c.hidden_dim = j.at("hidden_dim").get<int>();
    c.stem_channels = j.at("stem_channels").get<int>();
    c.n_domains = j.at("n_domains").get<int>();
    c.alpha = j.at("alpha").get<double>();
    c.margin = j.at("margin").get<double>();
    return c;
}

json meta_to_json(const TrainMeta& m) {
    return json{{"source_domains", m.source_domains},
                {"target_domain", m.target_domain},
                {"held_out_spoof_types", m.held_out_spoof_types},
                {"val_sample_ids", m.val_sample_ids},
                {"train_seed", m.train_seed}};
}

TrainMeta meta_from_json(const json& j) {
    TrainMeta m;
    m.source_domains = j.at("source_domains").get<std::vector<int>>();
    m.target_domain = j.at("target_domain").get<int>();
    m.held_out_spoof_types = j.at("held_out_spoof_types").get<std::vector<std::string>>();
    m.val_sample_ids = j.at("val_sample_ids").get<std::vector<std::string>>();
    m.train_seed = j.at("train_seed").get<uint64_t>();
    return m;
}

struct ArrayEntry {
    std::string name;
    std::vector<int64_t> shape;
    int64_t offset;  // bytes into the binary section
};

}  // namespace

void save_checkpoint(Model<float>& model, const AdamState* optimizer, int epoch,
                     const TrainMeta& meta, const std::string& path) {
    auto params = model.params();

    json dir = json::array();
    std::vector<const Tensor<float>*> payload;
    int64_t offset = 0;
    auto add = [&](const std::string& name, const Tensor<float>& t) {
        dir.push_back(json{{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        payload.push_back(&t);
        offset += t.size() * static_cast<int64_t>(sizeof(float));
    };
    for (const auto* p : params) add(p->name, p->value);
    if (optimizer) {
        check_contract(optimizer->m.size() == params.size(), "optimizer state size mismatch");
        for (size_t i = 0; i < params.size(); ++i) add("adam_m:" + params[i]->name, optimizer->m[i]);
        for (size_t i = 0; i < params.size(); ++i) add("adam_v:" + params[i]->name, optimizer->v[i]);
    }

    json header{{"format", kFormat},
                {"epoch", epoch},
                {"config", config_to_json(model.cfg)},
                {"arrays", dir},
                {"train_meta", meta_to_json(meta)}};
    if (optimizer) header["optimizer"] = json{{"t", optimizer->t}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out << header.dump() << "\n";
    for (const auto* t : payload) {
        out.write(reinterpret_cast<const char*>(t->data()),
                  static_cast<std::streamsize>(t->size() * sizeof(float)));
    }
    if (!out) throw IoError("short write to checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw IoError("checkpoint " + path + ": missing header");

    json header;
    try {
        header = json::parse(header_line);
    } catch (const json::exception& e) {
        throw IoError("checkpoint " + path + ": bad header: " + e.what());
    }

    const std::string fmt = header.value("format", "");
    if (fmt != kFormat) {
        throw IoError("checkpoint " + path + ": unsupported format version '" + fmt + "' (expected '" +
                      std::string(kFormat) + "')");
    }

    Checkpoint ck;
    try {
        ck.epoch = header.at("epoch").get<int>();
        ck.meta = meta_from_json(header.at("train_meta"));
        ck.model = Model<float>::build(config_from_json(header.at("config")), 0);
    } catch (const json::exception& e) {
        throw IoError("checkpoint " + path + ": bad header field: " + e.what());
    }

    // Arrays absent from the directory stay zero (supports deliberately
    // stripped checkpoints).
    for (auto* p : ck.model.params()) p->value.zero();

    auto params = ck.model.params();
    bool has_optimizer = header.contains("optimizer");
    if (has_optimizer) {
        ck.optimizer = AdamState{};
        ck.optimizer->t = header.at("optimizer").at("t").get<int64_t>();
        for (const auto* p : params) {
            ck.optimizer->m.emplace_back(p->value.shape());
            ck.optimizer->v.emplace_back(p->value.shape());
        }
    }

    auto find_target = [&](const std::string& name) -> Tensor<float>* {
        std::string base = name;
        int which = 0;  // 0 value, 1 adam m, 2 adam v
        if (base.rfind("adam_m:", 0) == 0) {
            base = base.substr(7);
            which = 1;
        } else if (base.rfind("adam_v:", 0) == 0) {
            base = base.substr(7);
            which = 2;
        }
        for (size_t i = 0; i < params.size(); ++i) {
            if (params[i]->name != base) continue;
            if (which == 0) return &params[i]->value;
            if (!ck.optimizer) {
                throw IoError("checkpoint " + path + ": array '" + name +
                              "' present without optimizer state header");
            }
            return which == 1 ? &ck.optimizer->m[i] : &ck.optimizer->v[i];
        }
        return nullptr;
    };

    const std::streampos data_start = in.tellg();
    for (const auto& entry : header.at("arrays")) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<int64_t>>();
        const int64_t offset = entry.at("offset").get<int64_t>();
        Tensor<float>* target = find_target(name);
        if (!target) throw IoError("checkpoint " + path + ": unknown array '" + name + "'");
        if (shape != target->shape()) {
            throw IoError("checkpoint load error on array '" + name + "': stored shape does not match architecture config");
        }
        in.clear();
        in.seekg(data_start + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(target->data()),
                static_cast<std::streamsize>(target->size() * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(target->size() * sizeof(float))) {
            throw IoError("checkpoint " + path + ": truncated while reading array '" + name + "'");
        }
    }
    return ck;
}

void strip_checkpoint_arrays(const std::string& in_path, const std::string& out_path,
                             const std::vector<std::string>& drop_prefixes) {
    std::ifstream in(in_path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + in_path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw IoError("checkpoint " + in_path + ": missing header");
    json header = json::parse(header_line);
    const std::streampos data_start = in.tellg();

    json kept = json::array();
    std::vector<std::string> blobs;
    int64_t offset = 0;
    for (const auto& entry : header.at("arrays")) {
        const std::string name = entry.at("name").get<std::string>();
        bool drop = false;
        for (const auto& prefix : drop_prefixes) {
            if (name.rfind(prefix, 0) == 0 ||
                name.rfind("adam_m:" + prefix, 0) == 0 ||
                name.rfind("adam_v:" + prefix, 0) == 0) {
                drop = true;
                break;
            }
        }
        if (drop) continue;
        int64_t count = 1;
        for (int64_t d : entry.at("shape").get<std::vector<int64_t>>()) count *= d;
        std::string blob(static_cast<size_t>(count) * sizeof(float), '\0');
        in.clear();
        in.seekg(data_start + static_cast<std::streamoff>(entry.at("offset").get<int64_t>()));
        in.read(blob.data(), static_cast<std::streamsize>(blob.size()));
        if (in.gcount() != static_cast<std::streamsize>(blob.size())) {
            throw IoError("checkpoint " + in_path + ": truncated array '" + name + "'");
        }
        json e = entry;
        e["offset"] = offset;
        offset += static_cast<int64_t>(blob.size());
        kept.push_back(e);
        blobs.push_back(std::move(blob));
    }
    header["arrays"] = kept;

    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + out_path);
    out << header.dump() << "\n";
    for (const auto& b : blobs) out.write(b.data(), static_cast<std::streamsize>(b.size()));
    if (!out) throw IoError("short write to checkpoint " + out_path);
}

}  // namespace disfas

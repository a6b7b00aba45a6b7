#include "disfas/config.hpp"

#include <fstream>
#include <sstream>

#include "disfas/errors.hpp"

namespace disfas {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

int to_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const int x = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad integer '" + v + "'");
    }
}

uint64_t to_u64(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad integer '" + v + "'");
    }
}

double to_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': bad number '" + v + "'");
    }
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': bad boolean '" + v + "'");
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);

    RunConfig cfg;
    std::string section;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const size_t comment = line.find_first_of("#;");
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config line " + std::to_string(line_no) + ": bad section header");
            }
            section = line.substr(1, line.size() - 2);
            if (section != "data" && section != "model" && section != "train" &&
                section != "protocol" && section != "eval") {
                throw ConfigError("config line " + std::to_string(line_no) + ": unknown section [" +
                                  section + "]");
            }
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string qkey = section + "." + key;

        if (section == "data") {
            if (key == "n_domains") cfg.data.n_domains = to_int(value, qkey);
            else if (key == "n_per_domain") cfg.data.n_per_domain = to_int(value, qkey);
            else if (key == "image_size") { cfg.data.image_size = to_int(value, qkey); cfg.train.model.image_size = cfg.data.image_size; }
            else if (key == "spoof_textures") cfg.data.spoof_textures = split_csv(value);
            else if (key == "seed") { cfg.data.seed = to_u64(value, qkey); cfg.data_seed_set = true; }
            else if (key == "manifest") cfg.manifest_path = value;
            else throw ConfigError("unknown config key '" + qkey + "'");
        } else if (section == "model") {
            if (key == "feat_dim") cfg.train.model.feat_dim = to_int(value, qkey);
            else if (key == "hidden_dim") cfg.train.model.hidden_dim = to_int(value, qkey);
            else if (key == "stem_channels") cfg.train.model.stem_channels = to_int(value, qkey);
            else if (key == "target_size") cfg.train.model.target_size = to_int(value, qkey);
            else if (key == "alpha") cfg.train.model.alpha = to_double(value, qkey);
            else if (key == "margin") cfg.train.model.margin = to_double(value, qkey);
            else throw ConfigError("unknown config key '" + qkey + "'");
        } else if (section == "train") {
            if (key == "epochs") cfg.train.epochs = to_int(value, qkey);
            else if (key == "batch_size") cfg.train.batch_size = to_int(value, qkey);
            else if (key == "learning_rate") cfg.train.learning_rate = to_double(value, qkey);
            else if (key == "weight_decay") cfg.train.weight_decay = to_double(value, qkey);
            else if (key == "seed") { cfg.train.seed = to_u64(value, qkey); cfg.train_seed_set = true; }
            else if (key == "lambda_cont") cfg.train.loss_weights.cont = to_double(value, qkey);
            else if (key == "lambda_cont_cnf") cfg.train.loss_weights.cont_cnf = to_double(value, qkey);
            else if (key == "lambda_dom") cfg.train.loss_weights.dom = to_double(value, qkey);
            else if (key == "lambda_dom_cnf") cfg.train.loss_weights.dom_cnf = to_double(value, qkey);
            else if (key == "lambda_live") cfg.train.loss_weights.live = to_double(value, qkey);
            else if (key == "lambda_live_cnf") cfg.train.loss_weights.live_cnf = to_double(value, qkey);
            else if (key == "ablation") cfg.train.ablation = ablation_from_string(value);
            else if (key == "eval_every") cfg.train.eval_every = to_int(value, qkey);
            else if (key == "update_mode") {
                if (value == "joint") cfg.train.update_mode = UpdateMode::joint;
                else if (value == "sequential") cfg.train.update_mode = UpdateMode::sequential;
                else throw ConfigError("config key '" + qkey + "': expected joint|sequential");
            } else if (key == "balance_domains") cfg.train.balance_domains = to_bool(value, qkey);
            else if (key == "val_fraction") cfg.train.val_fraction = to_double(value, qkey);
            else if (key == "content_mode") {
                if (value == "shape_mask") cfg.train.content_mode = data::ContentMode::shape_mask;
                else if (value == "precomputed") cfg.train.content_mode = data::ContentMode::precomputed;
                else throw ConfigError("config key '" + qkey + "': expected shape_mask|precomputed");
            } else throw ConfigError("unknown config key '" + qkey + "'");
        } else if (section == "protocol") {
            if (key == "source_domains") {
                cfg.protocol.source_domains.clear();
                for (const auto& v : split_csv(value)) {
                    cfg.protocol.source_domains.push_back(to_int(v, qkey));
                }
            } else if (key == "target_domain") cfg.protocol.target_domain = to_int(value, qkey);
            else if (key == "held_out_spoof_types") cfg.protocol.held_out_spoof_types = split_csv(value);
            else throw ConfigError("unknown config key '" + qkey + "'");
        } else if (section == "eval") {
            if (key == "threshold_policy") {
                if (value == "fixed_half") cfg.policy = eval::ThresholdPolicy::fixed_half;
                else if (value == "eer_on_validation") cfg.policy = eval::ThresholdPolicy::eer_on_validation;
                else throw ConfigError("config key '" + qkey + "': expected fixed_half|eer_on_validation");
            } else throw ConfigError("unknown config key '" + qkey + "'");
        } else {
            throw ConfigError("config line " + std::to_string(line_no) + ": key outside any section");
        }
    }
    cfg.harmonize();
    return cfg;
}

void write_run_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config " + path);
    auto join = [](const auto& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            if constexpr (std::is_same_v<std::decay_t<decltype(v[i])>, std::string>) s += v[i];
            else s += std::to_string(v[i]);
        }
        return s;
    };
    out << "[data]\n";
    out << "n_domains = " << cfg.data.n_domains << "\n";
    out << "n_per_domain = " << cfg.data.n_per_domain << "\n";
    out << "image_size = " << cfg.data.image_size << "\n";
    out << "spoof_textures = " << join(cfg.data.spoof_textures) << "\n";
    out << "seed = " << cfg.data.seed << "\n";
    if (!cfg.manifest_path.empty()) out << "manifest = " << cfg.manifest_path << "\n";
    out << "\n[model]\n";
    out << "feat_dim = " << cfg.train.model.feat_dim << "\n";
    out << "hidden_dim = " << cfg.train.model.hidden_dim << "\n";
    out << "stem_channels = " << cfg.train.model.stem_channels << "\n";
    out << "target_size = " << cfg.train.model.target_size << "\n";
    out << "alpha = " << cfg.train.model.alpha << "\n";
    out << "margin = " << cfg.train.model.margin << "\n";
    out << "\n[train]\n";
    out << "epochs = " << cfg.train.epochs << "\n";
    out << "batch_size = " << cfg.train.batch_size << "\n";
    out << "learning_rate = " << cfg.train.learning_rate << "\n";
    out << "weight_decay = " << cfg.train.weight_decay << "\n";
    out << "seed = " << cfg.train.seed << "\n";
    out << "lambda_cont = " << cfg.train.loss_weights.cont << "\n";
    out << "lambda_cont_cnf = " << cfg.train.loss_weights.cont_cnf << "\n";
    out << "lambda_dom = " << cfg.train.loss_weights.dom << "\n";
    out << "lambda_dom_cnf = " << cfg.train.loss_weights.dom_cnf << "\n";
    out << "lambda_live = " << cfg.train.loss_weights.live << "\n";
    out << "lambda_live_cnf = " << cfg.train.loss_weights.live_cnf << "\n";
    out << "ablation = " << ablation_name(cfg.train.ablation) << "\n";
    out << "eval_every = " << cfg.train.eval_every << "\n";
    out << "update_mode = " << (cfg.train.update_mode == UpdateMode::joint ? "joint" : "sequential")
        << "\n";
    out << "balance_domains = " << (cfg.train.balance_domains ? "true" : "false") << "\n";
    out << "val_fraction = " << cfg.train.val_fraction << "\n";
    out << "content_mode = "
        << (cfg.train.content_mode == data::ContentMode::shape_mask ? "shape_mask" : "precomputed")
        << "\n";
    out << "\n[protocol]\n";
    out << "source_domains = " << join(cfg.protocol.source_domains) << "\n";
    out << "target_domain = " << cfg.protocol.target_domain << "\n";
    out << "held_out_spoof_types = " << join(cfg.protocol.held_out_spoof_types) << "\n";
    out << "\n[eval]\n";
    out << "threshold_policy = " << eval::policy_name(cfg.policy) << "\n";
    if (!out) throw IoError("short write to " + path);
}

}  // namespace disfas

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "disfas/data.hpp"
#include "disfas/errors.hpp"

namespace disfas {

// Leave-one-domain-out split, optionally with spoof types held out of
// training (the unseen-attack protocol: held-out types appear only in the
// evaluation set).
struct ProtocolSplit {
    std::vector<int> source_domains;
    int target_domain = -1;
    std::vector<std::string> held_out_spoof_types;

    bool is_held_out(const std::string& spoof_type) const {
        return std::find(held_out_spoof_types.begin(), held_out_spoof_types.end(), spoof_type) !=
               held_out_spoof_types.end();
    }

    void validate(int dataset_domains) const {
        if (source_domains.empty()) throw ProtocolError("protocol split: no source domains");
        for (int d : source_domains) {
            if (d < 0 || d >= dataset_domains) {
                throw ProtocolError("protocol split: source domain " + std::to_string(d) +
                                    " outside dataset range [0," + std::to_string(dataset_domains) + ")");
            }
            if (d == target_domain) {
                throw ProtocolError("protocol split: target domain " + std::to_string(d) +
                                    " also listed as a source");
            }
        }
        if (target_domain < 0 || target_domain >= dataset_domains) {
            throw ProtocolError("protocol split: target domain " + std::to_string(target_domain) +
                                " outside dataset range");
        }
    }

    // Dense re-indexing of the source domains to [0, S_eff); losses and the
    // domain classifier always see these, never raw dataset ids.
    std::vector<int> sorted_sources() const {
        std::vector<int> s = source_domains;
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
        return s;
    }

    int reindex(int domain) const {
        const auto s = sorted_sources();
        const auto it = std::lower_bound(s.begin(), s.end(), domain);
        check_contract(it != s.end() && *it == domain, "domain not in source set");
        return static_cast<int>(it - s.begin());
    }
};

// Training-eligible samples: source domains only, held-out spoof types removed.
inline bool in_training_set(const ProtocolSplit& split, int domain, int liveness,
                            const std::string& spoof_type) {
    if (std::find(split.source_domains.begin(), split.source_domains.end(), domain) ==
        split.source_domains.end()) {
        return false;
    }
    return liveness == 1 || !split.is_held_out(spoof_type);
}

// Evaluation samples: the target domain; when spoof types are held out, only
// those spoof types (plus all reals) are scored.
inline bool in_eval_set(const ProtocolSplit& split, int domain, int liveness,
                        const std::string& spoof_type) {
    if (domain != split.target_domain) return false;
    if (split.held_out_spoof_types.empty()) return true;
    return liveness == 1 || split.is_held_out(spoof_type);
}

}  // namespace disfas

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace disfas::eval {

enum class ThresholdPolicy { fixed_half, eer_on_validation };

inline const char* policy_name(ThresholdPolicy p) {
    return p == ThresholdPolicy::fixed_half ? "fixed_half" : "eer_on_validation";
}

struct HterResult {
    double far = 0.0;
    double frr = 0.0;
    double hter = 0.0;
};

struct SubReport {
    double auc = 0.0;
    double hter = 0.0;
    int n_real = 0;
    int n_spoof = 0;
};

struct MetricsReport {
    double auc = 0.0;
    double hter = 0.0;
    double threshold = 0.5;
    double far = 0.0;
    double frr = 0.0;
    int n_real = 0;
    int n_spoof = 0;
    std::string policy;

    // Emitted alongside whichever policy was requested.
    std::optional<double> hter_fixed_half;
    std::optional<double> hter_eer;
    std::optional<double> threshold_eer;

    std::map<std::string, SubReport> per_spoof_type;
    std::map<int, SubReport> per_domain;
};

// Rank statistic with tie credit: (#{r>s} + 0.5*#{r==s}) / (n_real*n_spoof).
// Integer pair counting, so it matches exhaustive enumeration exactly.
double roc_auc(const std::vector<double>& scores_real, const std::vector<double>& scores_spoof);

// FAR counts spoofs with score >= threshold (a tie at the threshold is an
// accept); FRR counts reals below it.
HterResult hter(const std::vector<double>& scores_real, const std::vector<double>& scores_spoof,
                double threshold);

// fixed_half: 0.5. eer_on_validation: candidate thresholds are midpoints of
// consecutive distinct validation scores plus one sentinel beyond each end;
// the smallest candidate minimizing |FAR-FRR| wins.
double select_threshold(const std::vector<double>& val_real, const std::vector<double>& val_spoof,
                        ThresholdPolicy policy);

}  // namespace disfas::eval

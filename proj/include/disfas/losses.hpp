#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "disfas/nn.hpp"
#include "disfas/tensor.hpp"

namespace disfas {

// Per-loss coefficients. Order everywhere: cont, cont_cnf, dom, dom_cnf,
// live, live_cnf.
struct LossWeights {
    double cont = 1.0;
    double cont_cnf = 1.0;
    double dom = 1.0;
    double dom_cnf = 1.0;
    double live = 1.0;
    double live_cnf = 1.0;
};

struct LossBundle {
    double l_cont = 0.0;
    double l_cont_cnf = 0.0;
    double l_dom = 0.0;
    double l_dom_cnf = 0.0;
    double l_live = 0.0;
    double l_live_cnf = 0.0;
    LossWeights weights;
    double total = 0.0;

    void finalize() {
        total = weights.cont * l_cont + weights.cont_cnf * l_cont_cnf + weights.dom * l_dom +
                weights.dom_cnf * l_dom_cnf + weights.live * l_live + weights.live_cnf * l_live_cnf;
    }

    // Name of the first non-finite component, or nullptr if all are finite.
    const char* nonfinite_component() const {
        if (!std::isfinite(l_cont)) return "l_cont";
        if (!std::isfinite(l_cont_cnf)) return "l_cont_cnf";
        if (!std::isfinite(l_dom)) return "l_dom";
        if (!std::isfinite(l_dom_cnf)) return "l_dom_cnf";
        if (!std::isfinite(l_live)) return "l_live";
        if (!std::isfinite(l_live_cnf)) return "l_live_cnf";
        if (!std::isfinite(total)) return "total";
        return nullptr;
    }
};

enum class LossId { cont, cont_cnf, dom, dom_cnf, live, live_cnf };

inline const char* loss_name(LossId id) {
    switch (id) {
        case LossId::cont: return "l_cont";
        case LossId::cont_cnf: return "l_cont_cnf";
        case LossId::dom: return "l_dom";
        case LossId::dom_cnf: return "l_dom_cnf";
        case LossId::live: return "l_live";
        case LossId::live_cnf: return "l_live_cnf";
    }
    return "?";
}

// Which parameter groups each loss updates. Confusion losses deliberately
// leave the classifier they confuse untouched: gradient flows through it into
// the encoder, but the classifier's own parameters are treated as constants.
struct GradientRoute {
    LossId loss;
    std::vector<nn::ParamGroup> updated;
    std::vector<nn::ParamGroup> detached;
};

inline const std::vector<GradientRoute>& routing_table() {
    using G = nn::ParamGroup;
    static const std::vector<GradientRoute> table = {
        {LossId::cont, {G::enc_content, G::dec_content, G::stem}, {}},
        {LossId::cont_cnf, {G::enc_content, G::stem}, {G::w_live, G::cls_domain}},
        {LossId::dom, {G::enc_domain, G::cls_domain, G::stem}, {}},
        {LossId::dom_cnf, {G::enc_domain, G::stem}, {G::w_live}},
        {LossId::live, {G::enc_liveness, G::w_live, G::stem}, {}},
        {LossId::live_cnf, {G::enc_liveness, G::stem}, {G::cls_domain}},
    };
    return table;
}

namespace losses {

namespace detail {

template <typename T>
void check_prob_rows(const Tensor<T>& p, const char* what) {
    const int64_t bsz = p.dim(0), k = p.dim(1);
    for (int64_t i = 0; i < bsz; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < k; ++j) {
            const double v = static_cast<double>(p.at(i, j));
            check_contract(std::isfinite(v) && v >= 0.0, std::string(what) + ": invalid probability");
            s += v;
        }
        check_contract(std::abs(s - 1.0) <= 1e-4,
                       std::string(what) + ": row " + std::to_string(i) + " does not sum to 1");
    }
}

// Mean over rows of || p - uniform ||^2.
template <typename T>
double mean_sq_dist_to_uniform(const Tensor<T>& p) {
    const int64_t bsz = p.dim(0), k = p.dim(1);
    const double u = 1.0 / static_cast<double>(k);
    double acc = 0.0;
    for (int64_t i = 0; i < bsz; ++i) {
        for (int64_t j = 0; j < k; ++j) {
            const double d = static_cast<double>(p.at(i, j)) - u;
            acc += d * d;
        }
    }
    return acc / static_cast<double>(bsz);
}

inline double softplus(double z) {
    // log(1 + e^z) without overflow.
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace detail

// Per-sample sum of squared pixel errors, mean over the batch.
template <typename T>
double content_loss(const Tensor<T>& decoded, const Tensor<T>& targets) {
    check_contract(decoded.same_shape(targets), "content_loss: shape mismatch " +
                                                    decoded.shape_str() + " vs " + targets.shape_str());
    check_contract(decoded.dim(0) > 0, "content_loss: empty batch");
    const double sse = kernels::sumsqdiff(decoded.size(), decoded.data(), targets.data());
    return sse / static_cast<double>(decoded.dim(0));
}

// Mean over the batch of ||p_live - (1/2,1/2)||^2 + ||p_dom - uniform||^2.
template <typename T>
double content_confusion_loss(const Tensor<T>& p_live, const Tensor<T>& p_dom) {
    check_contract(p_live.dim(1) == 2, "content_confusion_loss: p_live must be Bx2");
    check_contract(p_live.dim(0) == p_dom.dim(0), "content_confusion_loss: batch mismatch");
    detail::check_prob_rows(p_live, "p_live");
    detail::check_prob_rows(p_dom, "p_dom");
    return detail::mean_sq_dist_to_uniform(p_live) + detail::mean_sq_dist_to_uniform(p_dom);
}

// Cross-entropy against the one-hot domain label, natural log, mean over the
// batch. Log arguments are clamped to [1e-7, 1-1e-7].
template <typename T>
double domain_loss(const Tensor<T>& p_dom, const std::vector<int>& domain_labels) {
    const int64_t bsz = p_dom.dim(0), s = p_dom.dim(1);
    check_contract(static_cast<int64_t>(domain_labels.size()) == bsz, "domain_loss: label count");
    detail::check_prob_rows(p_dom, "p_dom");
    double acc = 0.0;
    for (int64_t i = 0; i < bsz; ++i) {
        const int d = domain_labels[static_cast<size_t>(i)];
        check_contract(d >= 0 && d < s, "domain_loss: label out of range");
        double p = static_cast<double>(p_dom.at(i, d));
        p = std::min(std::max(p, 1e-7), 1.0 - 1e-7);
        acc -= std::log(p);
    }
    return acc / static_cast<double>(bsz);
}

template <typename T>
double domain_confusion_loss(const Tensor<T>& p_live_on_domain_features) {
    check_contract(p_live_on_domain_features.dim(1) == 2, "domain_confusion_loss: p_live must be Bx2");
    detail::check_prob_rows(p_live_on_domain_features, "p_live");
    return detail::mean_sq_dist_to_uniform(p_live_on_domain_features);
}

// Simplified large-margin cosine loss: mean over the batch of
// softplus(alpha * (c_other - c_true + m)).
template <typename T>
double liveness_loss(const Tensor<T>& cosines, const std::vector<int>& labels, double alpha,
                     double margin) {
    if (alpha <= 0.0) throw ConfigError("liveness_loss: alpha must be > 0");
    check_contract(margin >= 0.0, "liveness_loss: margin must be >= 0");
    const int64_t bsz = cosines.dim(0);
    check_contract(cosines.dim(1) == 2, "liveness_loss: cosines must be Bx2");
    check_contract(static_cast<int64_t>(labels.size()) == bsz, "liveness_loss: label count");
    double acc = 0.0;
    for (int64_t i = 0; i < bsz; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        check_contract(y == 0 || y == 1, "liveness_loss: labels must be binary");
        const double cy = static_cast<double>(cosines.at(i, y));
        const double co = static_cast<double>(cosines.at(i, 1 - y));
        check_contract(std::abs(cy) <= 1.0 + 1e-6 && std::abs(co) <= 1.0 + 1e-6,
                       "liveness_loss: cosines out of [-1,1]");
        acc += detail::softplus(alpha * (co - cy + margin));
    }
    return acc / static_cast<double>(bsz);
}

template <typename T>
double liveness_confusion_loss(const Tensor<T>& p_dom_on_liveness_features) {
    detail::check_prob_rows(p_dom_on_liveness_features, "p_dom");
    return detail::mean_sq_dist_to_uniform(p_dom_on_liveness_features);
}

// Assembles a bundle from the six components; throws if anything is
// non-finite, naming the offending component.
inline LossBundle total_loss(double l_cont, double l_cont_cnf, double l_dom, double l_dom_cnf,
                             double l_live, double l_live_cnf, const LossWeights& weights) {
    LossBundle b;
    b.l_cont = l_cont;
    b.l_cont_cnf = l_cont_cnf;
    b.l_dom = l_dom;
    b.l_dom_cnf = l_dom_cnf;
    b.l_live = l_live;
    b.l_live_cnf = l_live_cnf;
    b.weights = weights;
    b.finalize();
    if (const char* c = b.nonfinite_component()) {
        throw NumericsError(std::string("non-finite loss component: ") + c);
    }
    return b;
}

}  // namespace losses
}  // namespace disfas

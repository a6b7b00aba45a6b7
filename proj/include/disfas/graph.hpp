#pragma once

#include <vector>

#include "disfas/losses.hpp"
#include "disfas/model.hpp"

// Joint forward/backward over the six objectives with the gradient-routing
// table applied. Each loss back-propagates only into the parameter groups
// listed for it in routing_table(); classifiers under a confusion loss pass
// gradient through to the encoder but accumulate none themselves.

namespace disfas {

template <typename T>
struct TrainBatch {
    Tensor<T> images_nchw;      // [B,3,H,W], values in [0,1]
    std::vector<int> liveness;  // 1 = real, 0 = spoof
    std::vector<int> domains;   // re-indexed source-domain labels in [0, S_eff)
    Tensor<T> targets;          // [B,1,h,w] content supervision
};

// Losses whose weight is exactly zero are skipped entirely: their component
// stays 0 and their paths contribute no gradient (and no compute).
template <typename T>
LossBundle run_training_graph(Model<T>& model, const TrainBatch<T>& batch, const LossWeights& w,
                              bool backward) {
    const bool need_live = w.live != 0.0 || w.live_cnf != 0.0;
    const bool need_cont = w.cont != 0.0 || w.cont_cnf != 0.0;
    const bool need_dom = w.dom != 0.0 || w.dom_cnf != 0.0;

    LossBundle bundle;
    bundle.weights = w;
    if (!need_live && !need_cont && !need_dom) {
        bundle.finalize();
        return bundle;
    }

    const int bsz = static_cast<int>(batch.images_nchw.dim(0));
    const int feat = model.cfg.feat_dim;
    const T alpha = static_cast<T>(model.cfg.alpha);
    const double inv_b = 1.0 / static_cast<double>(bsz);

    typename Model<T>::StemCache stem_cache;
    Tensor<T> stem_act = model.stem_forward(batch.images_nchw, &stem_cache);

    typename EncoderTrunk<T>::Cache cache_live, cache_cont, cache_dom;
    Tensor<T> f_live, f_cont, f_dom;
    if (need_live) f_live = model.enc_live.forward(stem_act, &cache_live);
    if (need_cont) f_cont = model.enc_cont.forward(stem_act, &cache_cont);
    if (need_dom) f_dom = model.enc_dom.forward(stem_act, &cache_dom);

    // Normalized prototypes, shared by every cosine head in this step.
    Tensor<T> w_hat;
    std::vector<T> w_norms;
    const bool need_protos = w.live != 0.0 || w.cont_cnf != 0.0 || w.dom_cnf != 0.0;
    if (need_protos) {
        auto nw = nn::l2_normalize_rows(model.w_live.value, "prototype");
        w_hat = std::move(nw.first);
        w_norms = std::move(nw.second);
    }

    auto cosine_head = [&](const Tensor<T>& f, Tensor<T>& f_hat, std::vector<T>& f_norms) {
        auto nf = nn::l2_normalize_rows(f, "feature");
        f_hat = std::move(nf.first);
        f_norms = std::move(nf.second);
        Tensor<T> cos({bsz, 2});
        kernels::gemm(false, true, bsz, 2, feat, T(1), f_hat.data(), feat, w_hat.data(), feat,
                      T(0), cos.data(), 2);
        return cos;
    };

    // Backprop helper for a cosine head: routes gradient into the feature and,
    // optionally, into the prototype matrix.
    auto cosine_head_backward = [&](const Tensor<T>& g_cos, const Tensor<T>& f_hat,
                                    const std::vector<T>& f_norms, bool proto_grads) {
        Tensor<T> g_fhat({bsz, feat});
        kernels::gemm(false, false, bsz, feat, 2, T(1), g_cos.data(), 2, w_hat.data(), feat, T(0),
                      g_fhat.data(), feat);
        if (proto_grads) {
            Tensor<T> g_what({2, feat});
            kernels::gemm(true, false, 2, feat, bsz, T(1), g_cos.data(), 2, f_hat.data(), feat,
                          T(0), g_what.data(), feat);
            Tensor<T> g_w = nn::l2_normalize_rows_backward(w_hat, w_norms, g_what);
            kernels::axpy(g_w.size(), T(1), g_w.data(), model.w_live.grad.data());
        }
        return nn::l2_normalize_rows_backward(f_hat, f_norms, g_fhat);
    };

    struct DomainHead {
        typename nn::Linear<T>::Cache k1, k2;
        Tensor<T> z1;  // pre-relu hidden
        Tensor<T> p;   // softmax output
    };
    auto domain_head = [&](const Tensor<T>& f, DomainHead& hc) {
        hc.z1 = model.dom_fc1.forward(f, &hc.k1);
        Tensor<T> h = nn::relu(hc.z1);
        hc.p = nn::softmax_rows(model.dom_fc2.forward(h, &hc.k2));
        return hc.p;
    };
    auto domain_head_backward = [&](DomainHead& hc, const Tensor<T>& g_logits, bool param_grads) {
        Tensor<T> gh = model.dom_fc2.backward(hc.k2, g_logits, param_grads);
        Tensor<T> gz1 = nn::relu_backward(hc.z1, gh);
        return model.dom_fc1.backward(hc.k1, gz1, param_grads);
    };

    auto grad_to_uniform = [&](const Tensor<T>& p, double weight) {
        // d/dp of weight * mean_b ||p - uniform||^2
        const int64_t k = p.dim(1);
        const double u = 1.0 / static_cast<double>(k);
        Tensor<T> gp(p.shape());
        const double c = 2.0 * weight * inv_b;
        for (int64_t i = 0; i < p.size(); ++i) {
            gp[i] = static_cast<T>(c * (static_cast<double>(p[i]) - u));
        }
        return gp;
    };

    Tensor<T> g_flive, g_fcont, g_fdom;
    if (backward) {
        g_flive = Tensor<T>({bsz, feat});
        g_fcont = Tensor<T>({bsz, feat});
        g_fdom = Tensor<T>({bsz, feat});
    }

    // --- liveness path ---
    if (w.live != 0.0) {
        Tensor<T> fhat;
        std::vector<T> fnorms;
        Tensor<T> cos = cosine_head(f_live, fhat, fnorms);
        bundle.l_live = losses::liveness_loss(cos, batch.liveness, model.cfg.alpha, model.cfg.margin);
        if (backward) {
            Tensor<T> g_cos({bsz, 2});
            for (int i = 0; i < bsz; ++i) {
                const int y = batch.liveness[static_cast<size_t>(i)];
                const double z = model.cfg.alpha * (static_cast<double>(cos.at(i, 1 - y)) -
                                                    static_cast<double>(cos.at(i, y)) +
                                                    model.cfg.margin);
                const double sig = 1.0 / (1.0 + std::exp(-z));
                const double g = w.live * inv_b * model.cfg.alpha * sig;
                g_cos.at(i, y) = static_cast<T>(-g);
                g_cos.at(i, 1 - y) = static_cast<T>(g);
            }
            Tensor<T> gf = cosine_head_backward(g_cos, fhat, fnorms, /*proto_grads=*/true);
            kernels::axpy(gf.size(), T(1), gf.data(), g_flive.data());
        }
    }
    if (w.live_cnf != 0.0) {
        DomainHead hd;
        Tensor<T> p = domain_head(f_live, hd);
        bundle.l_live_cnf = losses::liveness_confusion_loss(p);
        if (backward) {
            Tensor<T> gp = grad_to_uniform(p, w.live_cnf);
            Tensor<T> g_logits = nn::softmax_rows_backward(p, gp);
            Tensor<T> gf = domain_head_backward(hd, g_logits, /*param_grads=*/false);
            kernels::axpy(gf.size(), T(1), gf.data(), g_flive.data());
        }
    }

    // --- content path ---
    if (w.cont != 0.0) {
        typename ContentDecoder<T>::Cache dc;
        Tensor<T> decoded = model.decoder.forward(f_cont, &dc);
        bundle.l_cont = losses::content_loss(decoded, batch.targets);
        if (backward) {
            Tensor<T> g_dec(decoded.shape());
            const double c = 2.0 * w.cont * inv_b;
            for (int64_t i = 0; i < decoded.size(); ++i) {
                g_dec[i] = static_cast<T>(c * (static_cast<double>(decoded[i]) - batch.targets[i]));
            }
            Tensor<T> gf = model.decoder.backward(dc, g_dec, /*param_grads=*/true);
            kernels::axpy(gf.size(), T(1), gf.data(), g_fcont.data());
        }
    }
    if (w.cont_cnf != 0.0) {
        Tensor<T> fhat;
        std::vector<T> fnorms;
        Tensor<T> cos = cosine_head(f_cont, fhat, fnorms);
        Tensor<T> p_live = nn::softmax_rows(cos, alpha);
        DomainHead hd;
        Tensor<T> p_dom = domain_head(f_cont, hd);
        bundle.l_cont_cnf = losses::content_confusion_loss(p_live, p_dom);
        if (backward) {
            Tensor<T> gp_live = grad_to_uniform(p_live, w.cont_cnf);
            Tensor<T> g_cos = nn::softmax_rows_backward(p_live, gp_live, alpha);
            Tensor<T> gf = cosine_head_backward(g_cos, fhat, fnorms, /*proto_grads=*/false);
            kernels::axpy(gf.size(), T(1), gf.data(), g_fcont.data());

            Tensor<T> gp_dom = grad_to_uniform(p_dom, w.cont_cnf);
            Tensor<T> g_logits = nn::softmax_rows_backward(hd.p, gp_dom);
            Tensor<T> gf2 = domain_head_backward(hd, g_logits, /*param_grads=*/false);
            kernels::axpy(gf2.size(), T(1), gf2.data(), g_fcont.data());
        }
    }

    // --- domain path ---
    if (w.dom != 0.0) {
        DomainHead hd;
        Tensor<T> p = domain_head(f_dom, hd);
        bundle.l_dom = losses::domain_loss(p, batch.domains);
        if (backward) {
            // Fused softmax cross-entropy gradient.
            Tensor<T> g_logits(p.shape());
            const double c = w.dom * inv_b;
            for (int i = 0; i < bsz; ++i) {
                const int d = batch.domains[static_cast<size_t>(i)];
                for (int64_t j = 0; j < p.dim(1); ++j) {
                    const double onehot = (j == d) ? 1.0 : 0.0;
                    g_logits.at(i, j) = static_cast<T>(c * (static_cast<double>(p.at(i, j)) - onehot));
                }
            }
            Tensor<T> gf = domain_head_backward(hd, g_logits, /*param_grads=*/true);
            kernels::axpy(gf.size(), T(1), gf.data(), g_fdom.data());
        }
    }
    if (w.dom_cnf != 0.0) {
        Tensor<T> fhat;
        std::vector<T> fnorms;
        Tensor<T> cos = cosine_head(f_dom, fhat, fnorms);
        Tensor<T> p_live = nn::softmax_rows(cos, alpha);
        bundle.l_dom_cnf = losses::domain_confusion_loss(p_live);
        if (backward) {
            Tensor<T> gp = grad_to_uniform(p_live, w.dom_cnf);
            Tensor<T> g_cos = nn::softmax_rows_backward(p_live, gp, alpha);
            Tensor<T> gf = cosine_head_backward(g_cos, fhat, fnorms, /*proto_grads=*/false);
            kernels::axpy(gf.size(), T(1), gf.data(), g_fdom.data());
        }
    }

    bundle.finalize();

    if (backward) {
        Tensor<T> g_stem_act(stem_act.shape());
        if (need_live) {
            Tensor<T> g = model.enc_live.backward(cache_live, g_flive, true);
            kernels::axpy(g.size(), T(1), g.data(), g_stem_act.data());
        }
        if (need_cont) {
            Tensor<T> g = model.enc_cont.backward(cache_cont, g_fcont, true);
            kernels::axpy(g.size(), T(1), g.data(), g_stem_act.data());
        }
        if (need_dom) {
            Tensor<T> g = model.enc_dom.backward(cache_dom, g_fdom, true);
            kernels::axpy(g.size(), T(1), g.data(), g_stem_act.data());
        }
        model.stem_backward(stem_cache, g_stem_act, true);
    }
    return bundle;
}

}  // namespace disfas

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "disfas/nn.hpp"

namespace disfas {

// Architecture hyperparameters. Trunk channel widths are derived from
// stem_channels (x2 per downsampling block) with the final block at feat_dim;
// the decoder depth is derived from target_size (4x4 seed, one 2x upsampling
// block per factor of two).
struct ModelConfig {
    int image_size = 32;
    int target_size = 16;
    int feat_dim = 64;     // F
    int hidden_dim = 32;   // H, domain classifier hidden width
    int stem_channels = 8;
    int n_domains = 3;     // S the domain classifier is built for
    double alpha = 8.0;    // cosine logit scale
    double margin = 0.35;  // additive cosine margin, training only

    int decoder_ups() const {
        int t = target_size, n = 0;
        while (t > 4 && t % 2 == 0) {
            t /= 2;
            ++n;
        }
        check_contract(t == 4, "target_size must be 4*2^k, got " + std::to_string(target_size));
        return n;
    }

    void validate() const {
        check_contract(image_size >= 8, "image_size must be >= 8");
        check_contract(feat_dim >= 2 && hidden_dim >= 1, "feature/hidden dims too small");
        check_contract(stem_channels >= 1, "stem_channels must be >= 1");
        check_contract(n_domains >= 1, "n_domains must be >= 1");
        if (alpha <= 0.0) throw ConfigError("alpha must be > 0");
        if (margin < 0.0) throw ConfigError("margin must be >= 0");
        (void)decoder_ups();
    }
};

enum class Head { liveness, content, domain };

inline const char* head_name(Head h) {
    switch (h) {
        case Head::liveness: return "liveness";
        case Head::content: return "content";
        case Head::domain: return "domain";
    }
    return "?";
}

// One encoder trunk: three stride-2 conv blocks on top of the shared stem,
// global average pool to a length-F feature.
template <typename T>
struct EncoderTrunk {
    nn::Conv2d<T> c1, c2, c3;

    struct Cache {
        typename nn::Conv2d<T>::Cache k1, k2, k3;
        Tensor<T> z1, z2, z3;  // pre-activation
        int out_h = 0, out_w = 0;
    };

    void configure(const std::string& prefix, nn::ParamGroup g, const ModelConfig& cfg) {
        c1.configure(prefix + ".c1", g, cfg.stem_channels, 2 * cfg.stem_channels, 3, 2, 1);
        c2.configure(prefix + ".c2", g, 2 * cfg.stem_channels, 4 * cfg.stem_channels, 3, 2, 1);
        c3.configure(prefix + ".c3", g, 4 * cfg.stem_channels, cfg.feat_dim, 3, 2, 1);
    }

    void init(Rng& rng) {
        c1.init(rng);
        c2.init(rng);
        c3.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& stem_act, Cache* cc) const {
        cc->z1 = c1.forward(stem_act, &cc->k1);
        Tensor<T> a1 = nn::relu(cc->z1);
        cc->z2 = c2.forward(a1, &cc->k2);
        Tensor<T> a2 = nn::relu(cc->z2);
        cc->z3 = c3.forward(a2, &cc->k3);
        Tensor<T> a3 = nn::relu(cc->z3);
        cc->out_h = static_cast<int>(a3.dim(2));
        cc->out_w = static_cast<int>(a3.dim(3));
        return nn::global_avg_pool(a3);
    }

    // gf: [B,F] -> gradient w.r.t. the stem activation.
    Tensor<T> backward(Cache& cc, const Tensor<T>& gf, bool param_grads) {
        Tensor<T> ga3 = nn::global_avg_pool_backward(gf, cc.out_h, cc.out_w);
        Tensor<T> gz3 = nn::relu_backward(cc.z3, ga3);
        Tensor<T> ga2 = c3.backward(cc.k3, gz3, param_grads);
        Tensor<T> gz2 = nn::relu_backward(cc.z2, ga2);
        Tensor<T> ga1 = c2.backward(cc.k2, gz2, param_grads);
        Tensor<T> gz1 = nn::relu_backward(cc.z1, ga1);
        return c1.backward(cc.k1, gz1, param_grads);
    }

    void collect(std::vector<nn::Param<T>*>& out) {
        out.push_back(&c1.w);
        out.push_back(&c1.b);
        out.push_back(&c2.w);
        out.push_back(&c2.b);
        out.push_back(&c3.w);
        out.push_back(&c3.b);
    }
};

template <typename T>
struct ContentDecoder {
    nn::Linear<T> fc;  // F -> c0*4*4
    std::vector<nn::TConv2d<T>> ups;
    int c0 = 1;

    struct Cache {
        typename nn::Linear<T>::Cache kfc;
        Tensor<T> zfc;                                    // pre-relu fc output (unused when n_up==0)
        std::vector<typename nn::TConv2d<T>::Cache> kup;  // one per up block
        std::vector<Tensor<T>> zup;                       // pre-activation per up block
        Tensor<T> y;                                      // sigmoid output
    };

    void configure(const ModelConfig& cfg) {
        const int n_up = cfg.decoder_ups();
        c0 = (n_up == 0) ? 1 : (16 << (n_up - 1));
        fc.configure("dec.fc", nn::ParamGroup::dec_content, cfg.feat_dim, c0 * 16);
        ups.resize(static_cast<size_t>(n_up));
        for (int i = 0; i < n_up; ++i) {
            const int in_c = c0 >> i;
            const int out_c = (i == n_up - 1) ? 1 : (c0 >> (i + 1));
            ups[static_cast<size_t>(i)].configure("dec.up" + std::to_string(i),
                                                  nn::ParamGroup::dec_content, in_c, out_c);
        }
    }

    void init(Rng& rng) {
        fc.init(rng);
        for (auto& u : ups) u.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& f, Cache* cc) const {
        const int bsz = static_cast<int>(f.dim(0));
        cc->zfc = fc.forward(f, &cc->kfc);
        Tensor<T> cur;
        if (ups.empty()) {
            cur = cc->zfc;
            cur.reshape({bsz, 1, 4, 4});
            cc->y = nn::sigmoid(cur);
            return cc->y;
        }
        cur = nn::relu(cc->zfc);
        cur.reshape({bsz, c0, 4, 4});
        cc->kup.resize(ups.size());
        cc->zup.resize(ups.size());
        for (size_t i = 0; i < ups.size(); ++i) {
            cc->zup[i] = ups[i].forward(cur, &cc->kup[i]);
            cur = (i + 1 == ups.size()) ? nn::sigmoid(cc->zup[i]) : nn::relu(cc->zup[i]);
        }
        cc->y = cur;
        return cc->y;
    }

    Tensor<T> backward(Cache& cc, const Tensor<T>& gy, bool param_grads) {
        const int bsz = static_cast<int>(gy.dim(0));
        Tensor<T> g = nn::sigmoid_backward(cc.y, gy);
        if (ups.empty()) {
            g.reshape({bsz, static_cast<int64_t>(16)});
            return fc.backward(cc.kfc, g, param_grads);
        }
        for (size_t i = ups.size(); i-- > 0;) {
            if (i + 1 != ups.size()) g = nn::relu_backward(cc.zup[i], g);
            g = ups[i].backward(cc.kup[i], g, param_grads);
        }
        g.reshape({bsz, static_cast<int64_t>(c0) * 16});
        g = nn::relu_backward(cc.zfc, g);
        return fc.backward(cc.kfc, g, param_grads);
    }

    void collect(std::vector<nn::Param<T>*>& out) {
        out.push_back(&fc.w);
        out.push_back(&fc.b);
        for (auto& u : ups) {
            out.push_back(&u.w);
            out.push_back(&u.b);
        }
    }
};

template <typename T>
struct LivenessOutput {
    Tensor<T> cosines;         // [B,2]; column 0 = spoof prototype, 1 = real
    std::vector<T> prob_real;  // [B]
};

// The full network: one shared stem convolution feeding three encoder trunks,
// a prototype-cosine liveness classifier, a two-layer domain classifier and a
// transposed-conv content decoder. Parameters are immutable during forward
// passes; updates go through the enumerated grad buffers.
template <typename T>
struct Model {
    ModelConfig cfg;
    nn::Conv2d<T> stem;
    EncoderTrunk<T> enc_live, enc_cont, enc_dom;
    nn::Param<T> w_live;  // [2, F], rows are the spoof/real prototypes
    nn::Linear<T> dom_fc1, dom_fc2;
    ContentDecoder<T> decoder;

    struct StemCache {
        typename nn::Conv2d<T>::Cache k;
        Tensor<T> z;
    };

    static Model build(const ModelConfig& config, uint64_t seed) {
        config.validate();
        Model m;
        m.cfg = config;
        m.stem.configure("stem", nn::ParamGroup::stem, 3, config.stem_channels, 3, 1, 1);
        m.enc_live.configure("enc_live", nn::ParamGroup::enc_liveness, config);
        m.enc_cont.configure("enc_cont", nn::ParamGroup::enc_content, config);
        m.enc_dom.configure("enc_dom", nn::ParamGroup::enc_domain, config);
        m.w_live.setup("W_live", nn::ParamGroup::w_live, {2, config.feat_dim}, true);
        m.dom_fc1.configure("cls_dom.fc1", nn::ParamGroup::cls_domain, config.feat_dim,
                            config.hidden_dim);
        m.dom_fc2.configure("cls_dom.fc2", nn::ParamGroup::cls_domain, config.hidden_dim,
                            config.n_domains);
        m.decoder.configure(config);

        Rng rng(seed);
        m.stem.init(rng);
        m.enc_live.init(rng);
        m.enc_cont.init(rng);
        m.enc_dom.init(rng);
        const double wstd = 1.0 / std::sqrt(static_cast<double>(config.feat_dim));
        for (int64_t i = 0; i < m.w_live.value.size(); ++i) {
            m.w_live.value[i] = static_cast<T>(rng.normal(0.0, wstd));
        }
        m.dom_fc1.init(rng);
        m.dom_fc2.init(rng);
        m.decoder.init(rng);
        return m;
    }

    // Fixed enumeration order; checkpoint layout and optimizer slots rely on it.
    std::vector<nn::Param<T>*> params() {
        std::vector<nn::Param<T>*> out;
        out.push_back(&stem.w);
        out.push_back(&stem.b);
        enc_live.collect(out);
        enc_cont.collect(out);
        enc_dom.collect(out);
        out.push_back(&w_live);
        out.push_back(&dom_fc1.w);
        out.push_back(&dom_fc1.b);
        out.push_back(&dom_fc2.w);
        out.push_back(&dom_fc2.b);
        decoder.collect(out);
        return out;
    }

    void zero_grads() {
        for (auto* p : params()) p->grad.zero();
    }

    // [B,H,W,3] in [0,1] -> [B,3,H,W]
    static Tensor<T> to_nchw(const Tensor<T>& images) {
        check_contract(images.rank() == 4 && images.dim(3) == 3,
                       "expected B x H x W x 3 images, got " + images.shape_str());
        const int64_t bsz = images.dim(0), h = images.dim(1), w = images.dim(2);
        Tensor<T> x({bsz, 3, h, w});
        for (int64_t n = 0; n < bsz; ++n) {
            for (int64_t y = 0; y < h; ++y) {
                for (int64_t xw = 0; xw < w; ++xw) {
                    for (int64_t c = 0; c < 3; ++c) {
                        x.at(n, c, y, xw) = images.at(n, y, xw, c);
                    }
                }
            }
        }
        return x;
    }

    Tensor<T> stem_forward(const Tensor<T>& x_nchw, StemCache* cc) const {
        check_contract(static_cast<int>(x_nchw.dim(2)) == cfg.image_size &&
                           static_cast<int>(x_nchw.dim(3)) == cfg.image_size,
                       "image size mismatch with config: " + x_nchw.shape_str());
        cc->z = stem.forward(x_nchw, &cc->k);
        return nn::relu(cc->z);
    }

    Tensor<T> stem_backward(StemCache& cc, const Tensor<T>& g_act, bool param_grads) {
        Tensor<T> gz = nn::relu_backward(cc.z, g_act);
        return stem.backward(cc.k, gz, param_grads);
    }

    EncoderTrunk<T>& trunk(Head head) {
        switch (head) {
            case Head::liveness: return enc_live;
            case Head::content: return enc_cont;
            case Head::domain: return enc_dom;
        }
        throw ContractError("bad head");
    }
    const EncoderTrunk<T>& trunk(Head head) const {
        return const_cast<Model*>(this)->trunk(head);
    }

    // Deterministic forward pass to features; the spec-level encode operation.
    Tensor<T> encode(const Tensor<T>& images_bhwc, Head head) const {
        for (int64_t i = 0; i < images_bhwc.size(); ++i) {
            const double v = static_cast<double>(images_bhwc[i]);
            check_contract(v >= 0.0 && v <= 1.0 && std::isfinite(v), "image values must be in [0,1]");
        }
        Tensor<T> x = to_nchw(images_bhwc);
        StemCache sc;
        Tensor<T> act = stem_forward(x, &sc);
        typename EncoderTrunk<T>::Cache ec;
        return trunk(head).forward(act, &ec);
    }

    // Cosine scores against the normalized prototypes plus the scaled-softmax
    // real probability. The margin is a training-time construct and is never
    // applied here.
    LivenessOutput<T> classify_liveness(const Tensor<T>& features) const {
        check_contract(features.rank() == 2 && features.dim(1) == cfg.feat_dim,
                       "feature dim mismatch: " + features.shape_str());
        auto [fhat, fnorms] = nn::l2_normalize_rows(features, "feature");
        auto [what, wnorms] = nn::l2_normalize_rows(w_live.value, "prototype");
        const int bsz = static_cast<int>(features.dim(0));
        LivenessOutput<T> out;
        out.cosines = Tensor<T>({bsz, 2});
        kernels::gemm(false, true, bsz, 2, cfg.feat_dim, T(1), fhat.data(), cfg.feat_dim,
                      what.data(), cfg.feat_dim, T(0), out.cosines.data(), 2);
        Tensor<T> p = nn::softmax_rows(out.cosines, static_cast<T>(cfg.alpha));
        out.prob_real.resize(static_cast<size_t>(bsz));
        for (int i = 0; i < bsz; ++i) out.prob_real[static_cast<size_t>(i)] = p.at(i, 1);
        return out;
    }

    // Two linear layers with one ReLU, then a row-normalized exponential.
    Tensor<T> classify_domain(const Tensor<T>& features) const {
        typename nn::Linear<T>::Cache k1, k2;
        Tensor<T> h = nn::relu(dom_fc1.forward(features, &k1));
        return nn::softmax_rows(dom_fc2.forward(h, &k2));
    }

    Tensor<T> decode_content(const Tensor<T>& features) const {
        typename ContentDecoder<T>::Cache cc;
        return decoder.forward(features, &cc);
    }
};

}  // namespace disfas

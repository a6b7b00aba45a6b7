#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "disfas/checkpoint.hpp"
#include "disfas/graph.hpp"
#include "disfas/model.hpp"
#include "disfas/rng.hpp"

using namespace disfas;
namespace fs = std::filesystem;

namespace {

ModelConfig desk_config() {
    ModelConfig c;  // the defaults
    return c;
}

Tensor<float> random_images(int b, int size, uint64_t seed) {
    Rng rng(seed);
    Tensor<float> t({b, size, size, 3});
    for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform());
    return t;
}

fs::path temp_dir() {
    auto p = fs::temp_directory_path() / ("disfas_model_test_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("encode produces BxF features and is deterministic") {
    auto model = Model<float>::build(desk_config(), 1);
    auto images = random_images(4, 32, 2);
    Tensor<float> f = model.encode(images, Head::liveness);
    CHECK(f.shape() == std::vector<int64_t>{4, 64});

    Tensor<float> f2 = model.encode(images, Head::liveness);
    for (int64_t i = 0; i < f.size(); ++i) CHECK(f[i] == f2[i]);

    // Two identical images in one batch come out as identical rows.
    Tensor<float> twins({2, 32, 32, 3});
    for (int64_t i = 0; i < twins.size() / 2; ++i) twins[i] = twins[twins.size() / 2 + i] = images[i];
    Tensor<float> ft = model.encode(twins, Head::content);
    for (int64_t j = 0; j < 64; ++j) CHECK(ft.at(0, j) == ft.at(1, j));

    // Zero image: finite features.
    Tensor<float> zeros({1, 32, 32, 3});
    for (Head h : {Head::liveness, Head::content, Head::domain}) {
        Tensor<float> fz = model.encode(zeros, h);
        CHECK(all_finite(fz));
    }

    Tensor<float> wrong({1, 16, 16, 3});
    CHECK_THROWS_AS(model.encode(wrong, Head::liveness), ContractError);
    Tensor<float> out_of_range({1, 32, 32, 3});
    out_of_range[0] = 1.5f;
    CHECK_THROWS_AS(model.encode(out_of_range, Head::liveness), ContractError);
}

TEST_CASE("paper-scale shapes: 256x256 input, 64x64 decoder output") {
    ModelConfig c;
    c.image_size = 256;
    c.target_size = 64;
    auto model = Model<float>::build(c, 1);
    auto images = random_images(10, 256, 3);
    Tensor<float> f = model.encode(images, Head::liveness);
    CHECK(f.shape() == std::vector<int64_t>{10, 64});

    Tensor<float> maps = model.decode_content(f);
    CHECK(maps.shape() == std::vector<int64_t>{10, 1, 64, 64});
}

TEST_CASE("classify_liveness cosine geometry") {
    ModelConfig c = desk_config();
    c.alpha = 1.0;
    auto model = Model<float>::build(c, 1);

    // Orthonormal prototypes, feature aligned with the real prototype.
    model.w_live.value.zero();
    model.w_live.value.at(0, 0) = 1.0f;  // spoof prototype = e0
    model.w_live.value.at(1, 1) = 1.0f;  // real prototype = e1
    Tensor<float> f({1, c.feat_dim});
    f.at(0, 1) = 2.5f;  // scaled copy of the real prototype

    auto out = model.classify_liveness(f);
    CHECK(out.cosines.at(0, 0) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(out.cosines.at(0, 1) == doctest::Approx(1.0).epsilon(1e-6));
    const double e = std::exp(1.0);
    CHECK(out.prob_real[0] == doctest::Approx(e / (e + 1.0)).epsilon(1e-6));

    // Equal cosines give exactly one half.
    Tensor<float> mid({1, c.feat_dim});
    mid.at(0, 0) = 1.0f;
    mid.at(0, 1) = 1.0f;
    CHECK(model.classify_liveness(mid).prob_real[0] == 0.5f);

    // Zero-norm feature is a surfaced degeneracy.
    Tensor<float> dead({1, c.feat_dim});
    CHECK_THROWS_AS(model.classify_liveness(dead), NumericsError);
}

TEST_CASE("classify_liveness: cosines bounded, scale invariant") {
    auto model = Model<float>::build(desk_config(), 5);
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor<float> f({3, 64});
        for (int64_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(rng.normal(0.0, 2.0));
        auto out = model.classify_liveness(f);
        for (int64_t i = 0; i < out.cosines.size(); ++i) {
            CHECK(out.cosines[i] >= -1.0f - 1e-6f);
            CHECK(out.cosines[i] <= 1.0f + 1e-6f);
        }
        const float scale = static_cast<float>(rng.uniform(0.1, 50.0));
        Tensor<float> fs = f;
        for (int64_t i = 0; i < fs.size(); ++i) fs[i] *= scale;
        auto out2 = model.classify_liveness(fs);
        for (size_t i = 0; i < out.prob_real.size(); ++i) {
            CHECK(std::abs(out.prob_real[i] - out2.prob_real[i]) <= 1e-6f);
        }
    }
}

TEST_CASE("classify_domain produces proper probability rows") {
    ModelConfig c = desk_config();
    c.n_domains = 3;
    auto model = Model<float>::build(c, 2);
    Rng rng(4);
    Tensor<float> f({5, 64});
    for (int64_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(rng.normal(0.0, 1.0));

    Tensor<float> p = model.classify_domain(f);
    CHECK(p.shape() == std::vector<int64_t>{5, 3});
    for (int i = 0; i < 5; ++i) {
        double s = 0.0;
        for (int j = 0; j < 3; ++j) {
            CHECK(p.at(i, j) > 0.0f);
            CHECK(p.at(i, j) < 1.0f);
            s += p.at(i, j);
        }
        CHECK(std::abs(s - 1.0) <= 1e-6);
    }

    // Zero final layer: exactly uniform rows.
    model.dom_fc2.w.value.zero();
    model.dom_fc2.b.value.zero();
    Tensor<float> pu = model.classify_domain(f);
    for (int64_t i = 0; i < pu.size(); ++i) CHECK(pu[i] == doctest::Approx(1.0f / 3.0f).epsilon(1e-7));
}

TEST_CASE("decode_content stays strictly inside (0,1) and validates depth") {
    auto model = Model<float>::build(desk_config(), 3);
    Rng rng(5);
    Tensor<float> f({3, 64});
    for (int64_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(rng.normal(0.0, 1.0));
    Tensor<float> maps = model.decode_content(f);
    CHECK(maps.shape() == std::vector<int64_t>{3, 1, 16, 16});
    for (int64_t i = 0; i < maps.size(); ++i) {
        CHECK(maps[i] > 0.0f);
        CHECK(maps[i] < 1.0f);
    }

    ModelConfig bad = desk_config();
    bad.target_size = 12;  // not 4*2^k
    CHECK_THROWS_AS(Model<float>::build(bad, 1), ContractError);
}

TEST_CASE("shared stem accumulates gradients from all three encoder paths") {
    ModelConfig c;
    c.image_size = 8;
    c.target_size = 8;
    c.feat_dim = 8;
    c.hidden_dim = 4;
    c.stem_channels = 2;
    c.n_domains = 3;
    auto model = Model<double>::build(c, 11);

    Rng rng(13);
    TrainBatch<double> batch;
    batch.images_nchw = Tensor<double>({3, 3, 8, 8});
    for (int64_t i = 0; i < batch.images_nchw.size(); ++i) batch.images_nchw[i] = rng.uniform();
    batch.targets = Tensor<double>({3, 1, 8, 8});
    for (int64_t i = 0; i < batch.targets.size(); ++i) batch.targets[i] = rng.uniform(0.1, 0.9);
    batch.liveness = {1, 0, 0};
    batch.domains = {2, 0, 1};

    model.zero_grads();
    run_training_graph(model, batch, LossWeights{1, 1, 1, 1, 1, 1}, true);
    Tensor<double> joint_w = model.stem.w.grad;
    Tensor<double> joint_b = model.stem.b.grad;

    Tensor<double> sum_w(joint_w.shape()), sum_b(joint_b.shape());
    const LossWeights paths[3] = {{1, 1, 0, 0, 0, 0}, {0, 0, 1, 1, 0, 0}, {0, 0, 0, 0, 1, 1}};
    for (const auto& w : paths) {
        model.zero_grads();
        run_training_graph(model, batch, w, true);
        for (int64_t i = 0; i < sum_w.size(); ++i) sum_w[i] += model.stem.w.grad[i];
        for (int64_t i = 0; i < sum_b.size(); ++i) sum_b[i] += model.stem.b.grad[i];
    }
    for (int64_t i = 0; i < joint_w.size(); ++i) {
        const double rel = std::abs(joint_w[i] - sum_w[i]) /
                           std::max({std::abs(joint_w[i]), std::abs(sum_w[i]), 1e-12});
        CHECK(rel < 1e-5);
    }
    for (int64_t i = 0; i < joint_b.size(); ++i) {
        const double rel = std::abs(joint_b[i] - sum_b[i]) /
                           std::max({std::abs(joint_b[i]), std::abs(sum_b[i]), 1e-12});
        CHECK(rel < 1e-5);
    }
}

TEST_CASE("checkpoint round-trip is bitwise at float32") {
    auto dir = temp_dir();
    ModelConfig c;
    c.image_size = 16;
    c.target_size = 8;
    c.feat_dim = 16;
    c.hidden_dim = 8;
    c.stem_channels = 4;
    c.n_domains = 3;
    auto model = Model<float>::build(c, 21);

    AdamState opt;
    Rng rng(6);
    for (auto* p : model.params()) {
        opt.m.emplace_back(p->value.shape());
        opt.v.emplace_back(p->value.shape());
        for (int64_t i = 0; i < p->value.size(); ++i) {
            opt.m.back()[i] = static_cast<float>(rng.normal(0.0, 0.1));
            opt.v.back()[i] = static_cast<float>(rng.uniform(0.0, 0.01));
        }
    }
    opt.t = 137;

    TrainMeta meta;
    meta.source_domains = {0, 2, 3};
    meta.target_domain = 1;
    meta.held_out_spoof_types = {"grid"};
    meta.val_sample_ids = {"d0_s00001", "d2_s00007"};
    meta.train_seed = 99;

    const std::string path = (dir / "ck.ckpt").string();
    save_checkpoint(model, &opt, 12, meta, path);
    Checkpoint ck = load_checkpoint(path);

    CHECK(ck.epoch == 12);
    CHECK(ck.meta.source_domains == meta.source_domains);
    CHECK(ck.meta.target_domain == 1);
    CHECK(ck.meta.held_out_spoof_types == meta.held_out_spoof_types);
    CHECK(ck.meta.val_sample_ids == meta.val_sample_ids);
    REQUIRE(ck.optimizer.has_value());
    CHECK(ck.optimizer->t == 137);

    auto orig = model.params();
    auto loaded = ck.model.params();
    REQUIRE(orig.size() == loaded.size());
    for (size_t i = 0; i < orig.size(); ++i) {
        REQUIRE(orig[i]->value.shape() == loaded[i]->value.shape());
        for (int64_t j = 0; j < orig[i]->value.size(); ++j) {
            CHECK(orig[i]->value[j] == loaded[i]->value[j]);  // bitwise at float32
        }
        for (int64_t j = 0; j < opt.m[i].size(); ++j) {
            CHECK(ck.optimizer->m[i][j] == opt.m[i][j]);
            CHECK(ck.optimizer->v[i][j] == opt.v[i][j]);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("checkpoint error paths") {
    auto dir = temp_dir();
    ModelConfig c;
    c.image_size = 16;
    c.target_size = 8;
    c.feat_dim = 16;
    c.hidden_dim = 8;
    c.stem_channels = 4;
    auto model = Model<float>::build(c, 22);
    const std::string path = (dir / "ck.ckpt").string();
    save_checkpoint(model, nullptr, 1, TrainMeta{}, path);

    SUBCASE("version mismatch is explicit, never silently reinterpreted") {
        std::ifstream in(path, std::ios::binary);
        std::string header;
        std::getline(in, header);
        std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        auto j = nlohmann::json::parse(header);
        j["format"] = "DISFAS-CKPT v0";
        std::ofstream out(path, std::ios::binary);
        out << j.dump() << "\n" << rest;
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(path),
                             doctest::Contains("unsupported format version 'DISFAS-CKPT v0'"), IoError);
    }

    SUBCASE("declared shape inconsistent with config names the offending array") {
        std::ifstream in(path, std::ios::binary);
        std::string header;
        std::getline(in, header);
        std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        auto j = nlohmann::json::parse(header);
        for (auto& e : j["arrays"]) {
            if (e["name"] == "W_live") e["shape"] = {2, 65};
        }
        std::ofstream out(path, std::ios::binary);
        out << j.dump() << "\n" << rest;
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("'W_live'"), IoError);
    }

    SUBCASE("truncated payload is detected") {
        const auto full = fs::file_size(path);
        fs::resize_file(path, full - 64);
        CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("truncated"), IoError);
    }

    fs::remove_all(dir);
}

TEST_CASE("stripping liveness-irrelevant arrays zero-fills on load") {
    auto dir = temp_dir();
    ModelConfig c;
    c.image_size = 16;
    c.target_size = 8;
    c.feat_dim = 16;
    c.hidden_dim = 8;
    c.stem_channels = 4;
    auto model = Model<float>::build(c, 23);
    Rng rng(8);
    for (auto* p : model.params()) {  // biases init to zero; randomize everything
        for (int64_t i = 0; i < p->value.size(); ++i) {
            p->value[i] = static_cast<float>(rng.normal(0.0, 0.5));
        }
    }
    const std::string path = (dir / "ck.ckpt").string();
    const std::string stripped = (dir / "stripped.ckpt").string();
    save_checkpoint(model, nullptr, 1, TrainMeta{}, path);
    strip_checkpoint_arrays(path, stripped, {"enc_cont", "enc_dom", "dec.", "cls_dom"});

    Checkpoint ck = load_checkpoint(stripped);
    for (auto* p : ck.model.params()) {
        bool expect_zero = p->group == nn::ParamGroup::enc_content ||
                           p->group == nn::ParamGroup::enc_domain ||
                           p->group == nn::ParamGroup::dec_content ||
                           p->group == nn::ParamGroup::cls_domain;
        bool is_zero = true;
        for (int64_t i = 0; i < p->value.size(); ++i) is_zero &= (p->value[i] == 0.0f);
        CHECK(is_zero == expect_zero);
    }
    fs::remove_all(dir);
}

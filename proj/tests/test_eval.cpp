#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "disfas/checkpoint.hpp"
#include "disfas/eval.hpp"
#include "disfas/rng.hpp"

using namespace disfas;
namespace fs = std::filesystem;

namespace {

// Independent oracle: exhaustive pair enumeration.
double auc_bruteforce(const std::vector<double>& real, const std::vector<double>& spoof) {
    int64_t wins2 = 0;
    for (double r : real) {
        for (double s : spoof) {
            if (r > s) wins2 += 2;
            else if (r == s) wins2 += 1;
        }
    }
    return static_cast<double>(wins2) / (2.0 * real.size() * spoof.size());
}

// Independent oracle: direct recount at a threshold.
eval::HterResult hter_bruteforce(const std::vector<double>& real, const std::vector<double>& spoof,
                                 double tau) {
    eval::HterResult r;
    for (double s : spoof) r.far += (s >= tau) ? 1.0 : 0.0;
    for (double s : real) r.frr += (s < tau) ? 1.0 : 0.0;
    r.far /= static_cast<double>(spoof.size());
    r.frr /= static_cast<double>(real.size());
    r.hter = 0.5 * (r.far + r.frr);
    return r;
}

std::vector<double> random_scores(Rng& rng, int n, bool quantized) {
    std::vector<double> v(static_cast<size_t>(n));
    for (auto& x : v) {
        x = quantized ? std::floor(rng.uniform() * 8.0) / 8.0 : rng.uniform();
    }
    return v;
}

std::vector<data::LabeledSample> tiny_dataset(int n_domains, int per_domain, uint64_t seed) {
    data::SyntheticFactorSpec spec;
    spec.n_domains = n_domains;
    spec.n_per_domain = per_domain;
    spec.image_size = 32;
    spec.seed = seed;
    return data::generate_synthetic_dataset(spec, 2).first;
}

}  // namespace

TEST_CASE("roc_auc worked examples") {
    CHECK(eval::roc_auc({0.9, 0.8}, {0.2, 0.1}) == 1.0);
    CHECK(eval::roc_auc({0.5}, {0.5}) == 0.5);
    CHECK(eval::roc_auc({0.9, 0.4}, {0.6, 0.1}) == 0.75);
    CHECK_THROWS_AS(eval::roc_auc({}, {0.5}), ContractError);
}

TEST_CASE("roc_auc equals exhaustive pair enumeration on random score sets") {
    Rng rng(100);
    for (int trial = 0; trial < 200; ++trial) {
        const int nr = 1 + static_cast<int>(rng.uniform_int(20));
        const int ns = 1 + static_cast<int>(rng.uniform_int(20));
        const bool q = trial % 2 == 0;  // quantized scores exercise ties
        auto real = random_scores(rng, nr, q);
        auto spoof = random_scores(rng, ns, q);
        CHECK(eval::roc_auc(real, spoof) == auc_bruteforce(real, spoof));  // exact
    }
}

TEST_CASE("roc_auc is invariant under strictly monotone transforms") {
    Rng rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        auto real = random_scores(rng, 8, false);
        auto spoof = random_scores(rng, 11, false);
        const double base = eval::roc_auc(real, spoof);
        auto squash = [](std::vector<double> v) {
            for (auto& x : v) x = 1.0 / (1.0 + std::exp(-(3.0 * x - 1.0)));
            return v;
        };
        CHECK(eval::roc_auc(squash(real), squash(spoof)) == doctest::Approx(base).epsilon(1e-12));
    }
}

TEST_CASE("hter worked examples") {
    auto r = eval::hter({0.9, 0.8}, {0.1, 0.2}, 0.5);
    CHECK(r.far == 0.0);
    CHECK(r.frr == 0.0);
    CHECK(r.hter == 0.0);

    r = eval::hter({0.9, 0.4}, {0.6, 0.1}, 0.5);
    CHECK(r.far == 0.5);
    CHECK(r.frr == 0.5);
    CHECK(r.hter == 0.5);

    // Threshold below every score accepts everything.
    r = eval::hter({0.9, 0.4}, {0.6, 0.1}, 0.0);
    CHECK(r.far == 1.0);
    CHECK(r.frr == 0.0);
    CHECK(r.hter == 0.5);

    // Tie at the threshold counts as an accept.
    r = eval::hter({0.5}, {0.5}, 0.5);
    CHECK(r.far == 1.0);
    CHECK(r.frr == 0.0);
}

TEST_CASE("hter matches a brute-force recount and hter = (far+frr)/2 exactly") {
    Rng rng(102);
    for (int trial = 0; trial < 200; ++trial) {
        auto real = random_scores(rng, 1 + static_cast<int>(rng.uniform_int(20)), trial % 2 == 0);
        auto spoof = random_scores(rng, 1 + static_cast<int>(rng.uniform_int(20)), trial % 2 == 0);
        const double tau = rng.uniform();
        const auto a = eval::hter(real, spoof, tau);
        const auto b = hter_bruteforce(real, spoof, tau);
        CHECK(std::abs(a.far - b.far) <= 1e-12);
        CHECK(std::abs(a.frr - b.frr) <= 1e-12);
        CHECK(std::abs(a.hter - b.hter) <= 1e-12);
        CHECK(a.hter == (a.far + a.frr) / 2.0);
    }
}

TEST_CASE("FAR/FRR move monotonically as the threshold sweeps") {
    Rng rng(103);
    auto real = random_scores(rng, 15, false);
    auto spoof = random_scores(rng, 12, false);
    double prev_far = 1.0, prev_frr = 0.0;
    for (double tau = -0.1; tau <= 1.1; tau += 0.01) {
        const auto h = eval::hter(real, spoof, tau);
        CHECK(h.far <= prev_far + 1e-12);
        CHECK(h.frr >= prev_frr - 1e-12);
        prev_far = h.far;
        prev_frr = h.frr;
    }
}

TEST_CASE("threshold selection") {
    CHECK(eval::select_threshold({0.9}, {0.1}, eval::ThresholdPolicy::fixed_half) == 0.5);

    // Any tau in (0.2,0.8) gives EER 0; the candidate sweep returns the
    // midpoint 0.5*(0.2+0.8).
    CHECK(eval::select_threshold({0.9, 0.8}, {0.1, 0.2}, eval::ThresholdPolicy::eer_on_validation) ==
          doctest::Approx(0.5).epsilon(1e-12));

    // Single-score classes must not divide by zero.
    const double tau = eval::select_threshold({0.7}, {0.7}, eval::ThresholdPolicy::eer_on_validation);
    CHECK(std::isfinite(tau));

    // Brute-force oracle over the same candidate family.
    Rng rng(104);
    for (int trial = 0; trial < 100; ++trial) {
        auto real = random_scores(rng, 1 + static_cast<int>(rng.uniform_int(10)), trial % 2 == 0);
        auto spoof = random_scores(rng, 1 + static_cast<int>(rng.uniform_int(10)), trial % 2 == 0);
        const double got = eval::select_threshold(real, spoof, eval::ThresholdPolicy::eer_on_validation);

        std::vector<double> all = real;
        all.insert(all.end(), spoof.begin(), spoof.end());
        std::sort(all.begin(), all.end());
        all.erase(std::unique(all.begin(), all.end()), all.end());
        std::vector<double> cands;
        cands.push_back(all.front() - 1e-6);
        for (size_t i = 0; i + 1 < all.size(); ++i) cands.push_back(0.5 * (all[i] + all[i + 1]));
        cands.push_back(all.back() + 1e-6);
        double best = cands.front(), best_gap = 1e300;
        for (double t : cands) {
            const auto h = hter_bruteforce(real, spoof, t);
            const double gap = std::abs(h.far - h.frr);
            if (gap < best_gap) {
                best_gap = gap;
                best = t;
            }
        }
        CHECK(got == best);
    }
}

TEST_CASE("score: deterministic, strictly inside (0,1), liveness path only") {
    auto samples = tiny_dataset(3, 8, 3);
    ModelConfig mc;
    mc.n_domains = 2;
    auto model = Model<float>::build(mc, 5);

    auto s1 = eval::score(model, samples);
    auto s2 = eval::score(model, samples);
    CHECK(s1 == s2);
    for (double s : s1) {
        CHECK(s > 0.0);
        CHECK(s < 1.0);
    }

    // Duplicated sample scores identically inside one batch.
    std::vector<data::LabeledSample> twins = {samples[0], samples[0]};
    auto st = eval::score(model, twins);
    CHECK(st[0] == st[1]);
}

TEST_CASE("scores are unchanged after stripping content/domain/decoder arrays") {
    auto dir = fs::temp_directory_path() / ("disfas_eval_strip_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    auto samples = tiny_dataset(3, 6, 9);

    ModelConfig mc;
    mc.n_domains = 2;
    auto model = Model<float>::build(mc, 31);
    const std::string full_path = (dir / "full.ckpt").string();
    const std::string stripped_path = (dir / "stripped.ckpt").string();
    save_checkpoint(model, nullptr, 3, TrainMeta{}, full_path);
    strip_checkpoint_arrays(full_path, stripped_path, {"enc_cont", "enc_dom", "dec.", "cls_dom"});

    auto full = load_checkpoint(full_path);
    auto stripped = load_checkpoint(stripped_path);
    const auto s_full = eval::score(full.model, samples);
    const auto s_stripped = eval::score(stripped.model, samples);
    CHECK(s_full == s_stripped);  // bitwise: the liveness path reads none of it
    fs::remove_all(dir);
}

TEST_CASE("evaluate_protocol guards the protocol and emits breakdowns") {
    auto samples = tiny_dataset(3, 40, 11);
    ModelConfig mc;
    mc.n_domains = 2;
    auto model = Model<float>::build(mc, 6);

    TrainMeta meta;
    meta.source_domains = {0, 1};
    meta.target_domain = 2;

    ProtocolSplit split;
    split.source_domains = {0, 1};
    split.target_domain = 2;

    std::vector<eval::ScoredSample> scored;
    auto report = eval::evaluate_protocol(model, meta, samples, split,
                                          eval::ThresholdPolicy::fixed_half, &scored);
    CHECK(report.policy == "fixed_half");
    CHECK(report.threshold == 0.5);
    CHECK(report.n_real + report.n_spoof == 40);
    CHECK(scored.size() == 40);
    CHECK(report.hter == doctest::Approx((report.far + report.frr) / 2.0).epsilon(1e-15));
    CHECK(!report.per_spoof_type.empty());
    CHECK(report.per_domain.count(2) == 1);
    for (const auto& s : scored) CHECK(s.domain == 2);

    // Evaluating on a training domain is a hard protocol violation.
    ProtocolSplit bad = split;
    bad.target_domain = 0;
    bad.source_domains = {1, 2};
    CHECK_THROWS_AS(
        eval::evaluate_protocol(model, meta, samples, bad, eval::ThresholdPolicy::fixed_half),
        ProtocolError);
}

TEST_CASE("domain probe behavior on frozen features") {
    auto samples = tiny_dataset(3, 60, 7);
    ProtocolSplit split;
    split.source_domains = {0, 1, 2};
    split.target_domain = -1;

    ModelConfig mc;
    mc.n_domains = 3;
    auto model = Model<float>::build(mc, 1);

    // Untrained features already expose the color transform to a linear
    // probe; the confusion losses exist to remove exactly this.
    const double acc = eval::domain_probe(model, samples, split, Head::liveness);
    CHECK(acc > 0.9);

    // Shuffled labels: statistically at chance.
    const double shuffled = eval::domain_probe(model, samples, split, Head::liveness, true);
    CHECK(shuffled > 0.15);
    CHECK(shuffled < 0.55);

    // The probe never mutates model parameters.
    std::vector<Tensor<float>> before;
    for (auto* p : model.params()) before.push_back(p->value);
    (void)eval::domain_probe(model, samples, split, Head::domain);
    auto params = model.params();
    for (size_t i = 0; i < params.size(); ++i) {
        for (int64_t j = 0; j < params[i]->value.size(); ++j) {
            CHECK(params[i]->value[j] == before[i][j]);
        }
    }

    // Fewer than 2 source domains: undefined.
    ProtocolSplit single;
    single.source_domains = {0};
    single.target_domain = -1;
    CHECK_THROWS_AS(eval::domain_probe(model, samples, single, Head::liveness), ProtocolError);
}

TEST_CASE("score dump has one row per scored sample") {
    auto dir = fs::temp_directory_path() / ("disfas_eval_tsv_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    std::vector<eval::ScoredSample> scored = {{"a", 0, 1, "", 0.9}, {"b", 0, 0, "grid", 0.2}};
    const std::string path = (dir / "scores.tsv").string();
    eval::write_scores_tsv(scored, path);
    std::ifstream in(path);
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 2);
    fs::remove_all(dir);
}

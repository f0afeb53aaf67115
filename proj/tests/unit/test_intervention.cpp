#include <doctest.h>
#include <omp.h>

#include <algorithm>
#include <random>

#include "memrecall/errors.hpp"
#include "memrecall/idiomem.hpp"
#include "memrecall/intervention.hpp"
#include "memrecall/zeroing.hpp"
#include "test_support.hpp"

using namespace memrecall;

TEST_CASE("dominance scores are |m| times value norm") {
    const std::vector<float> m{0.f, -2.f, 3.f, 0.5f, -1.f, 4.f}, norms{1.f, 0.5f, 2.f, 3.f, 1.f, 0.25f};
    const auto s = dominance_scores(m, norms);
    for (std::size_t j = 0; j < m.size(); ++j) CHECK(s[j] == std::fabs(m[j]) * norms[j]);
    CHECK(dominance_scores(std::vector<float>(6, 0.f), norms) == std::vector<float>(6, 0.f));
    CHECK(dominance_scores(m, std::vector<float>(6, 1.f)) == std::vector<float>{0.f, 2.f, 3.f, 0.5f, 1.f, 4.f});
}

TEST_CASE("model-level dominance scores use the layer's value norms") {
    const auto& model = testing::mini_model();
    std::vector<float> m(model.config().d_ff, 1.0f);
    const auto s = dominance_scores(model, m, 2);
    const auto norms = model.value_norms(2);
    CHECK(std::equal(s.begin(), s.end(), norms.begin()));
    CHECK_THROWS_AS(dominance_scores(model, m, 0), std::out_of_range);
    CHECK_THROWS_AS(dominance_scores(model, m, 5), std::out_of_range);
}

TEST_CASE("top-k zeroing follows the sort order, ties to the lower index") {
    const std::vector<float> scores{3.f, 1.f, 4.f, 2.f};
    std::vector<float> m{10.f, 11.f, 12.f, 13.f};
    apply_zeroing(m, scores, ZeroMode::Dominant, 2);
    CHECK(m == std::vector<float>{0.f, 11.f, 0.f, 13.f});
    CHECK(top_k_indices(scores, 2) == std::vector<std::size_t>{2, 0});
    CHECK(top_k_indices(std::vector<float>{1.f, 1.f, 1.f}, 2) == std::vector<std::size_t>{0, 1});

    std::vector<float> all{1.f, 2.f, 3.f, 4.f};
    apply_zeroing(all, scores, ZeroMode::Dominant, 9);
    CHECK(all == std::vector<float>(4, 0.f));
    std::vector<float> same{1.f, 2.f, 3.f, 4.f};
    apply_zeroing(same, scores, ZeroMode::Dominant, 0);
    CHECK(same == std::vector<float>{1.f, 2.f, 3.f, 4.f});
}

TEST_CASE("dominant and non-dominant zeroing are complementary") {
    std::mt19937 g(21);
    std::normal_distribution<float> n(0.f, 1.f);
    std::uniform_int_distribution<std::size_t> kd(0, 70);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<float> m(64), norms(64);
        for (auto& x : m) x = n(g);
        for (auto& x : norms) x = std::fabs(n(g));
        const auto s = dominance_scores(m, norms);
        const auto k = kd(g);
        auto a = m, b = m;
        apply_zeroing(a, s, ZeroMode::Dominant, k);
        apply_zeroing(b, s, ZeroMode::NonDominant, k);
        for (std::size_t j = 0; j < m.size(); ++j) {
            CHECK((a[j] == 0.f || b[j] == 0.f));
            CHECK(a[j] + b[j] == m[j]);
        }
        CHECK(static_cast<std::size_t>(std::count(a.begin(), a.end(), 0.f)) >= std::min<std::size_t>(k, 64));
    }
}

TEST_CASE("layer ranges cover every span up to max_span") {
    const auto r = layer_ranges(24, 3);
    CHECK(r.size() == 69);
    CHECK(std::count_if(r.begin(), r.end(), [](auto p) { return p.second - p.first == 2; }) == 22);
    CHECK(layer_ranges(24, 1).size() == 24);
    CHECK(layer_ranges(4, 10).size() == 10);
    CHECK_THROWS_AS(layer_ranges(4, 0), UsageError);
}

namespace {

std::vector<ProbeItem> memorized_items(const Model& model) {
    // Targets are whatever the model predicts, so every item is memorized by construction.
    const auto words = split_words(
        "think outside the box make a mountain out of a molehill there is no such thing as a free lunch "
        "go back to the drawing board boys will be boys take it or leave it in one ear and out the other");
    std::vector<ProbeItem> items;
    for (std::size_t start = 0; start + 3 <= words.size() && items.size() < 5; ++start) {
        std::string prompt;
        for (std::size_t i = start; i < start + 3; ++i) prompt += (i > start ? " " : "") + words[i];
        const auto pred = static_cast<TokenId>(argmax(model.forward_trace(model.tokenizer().encode(prompt)).logits));
        auto word = model.tokenizer().token(pred);
        if (word.rfind("\xC4\xA0", 0) != 0) continue;
        word = word.substr(2);
        // Skip predictions that do not survive the " " + word round trip.
        if (word.empty() || model.target_token(word) != pred) continue;
        items.push_back({"m" + std::to_string(start), prompt, word});
    }
    return items;
}

}  // namespace

TEST_CASE("run_intervention: no-op spec changes nothing") {
    const auto& model = testing::mini_model();
    const auto items = memorized_items(model);
    REQUIRE(items.size() >= 2);
    const auto res = run_intervention(model, items, {1, model.config().n_layers, ZeroMode::Dominant, 0});
    CHECK(res.pct_changed == 0.0);
    CHECK(res.mean_rank_delta == 0.0);
    CHECK(res.mean_prob_delta == 0.0);
    for (const auto& r : res.rows) CHECK(r.target_rank_before == 0);
}

TEST_CASE("run_intervention rejects examples the model does not predict") {
    const auto& model = testing::mini_model();
    auto items = memorized_items(model);
    REQUIRE(!items.empty());
    const auto pred = static_cast<TokenId>(
        argmax(model.forward_trace(model.tokenizer().encode(items.front().prompt)).logits));
    items.front().target = model.target_token("zzz") != pred ? "zzz" : "qqq";
    CHECK_THROWS_AS(run_intervention(model, items, {1, 1, ZeroMode::Dominant, 3}), DataError);
}

TEST_CASE("sweep covers all cells and is deterministic across thread counts") {
    const auto& model = testing::mini_model();
    const auto items = memorized_items(model);
    auto run = [&](int threads) {
        omp_set_num_threads(threads);
        return sweep_ranges(model, items, 3, {ZeroMode::Dominant, ZeroMode::NonDominant}, 5);
    };
    const auto a = run(1), b = run(4);
    omp_set_num_threads(omp_get_num_procs());
    REQUIRE(a.size() == 2 * 9);  // L=4: 4 + 3 + 2 spans per mode
    for (std::size_t c = 0; c < a.size(); ++c) {
        CHECK(a[c].spec.start_layer == b[c].spec.start_layer);
        CHECK(a[c].pct_changed == b[c].pct_changed);
        CHECK(a[c].mean_rank_delta == b[c].mean_rank_delta);
        CHECK(a[c].mean_prob_delta == b[c].mean_prob_delta);
        CHECK(a[c].pct_changed >= 0.0);
        CHECK(a[c].pct_changed <= 100.0);
    }
    // zeroing every sub-update of every layer must move something on this model
    const auto all = run_intervention(model, items, {1, 4, ZeroMode::NonDominant, 0});
    CHECK(all.mean_prob_delta != 0.0);
}

TEST_CASE("zeroing every sub-update leaves only the output bias") {
    const auto& model = testing::mini_model();
    const auto ids = model.tokenizer().encode("boys will be");
    ForwardOptions o;
    o.intervention = InterventionSpec{2, 2, ZeroMode::NonDominant, 0};
    o.record_ffn_coeffs = true;
    const auto fwd = model.forward_trace(ids, o);
    for (float m : fwd.trace.ffn_coeffs[1][0]) CHECK(m == 0.0f);
}

#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <random>

#include "memrecall/errors.hpp"
#include "memrecall/stats.hpp"
#include "test_support.hpp"

#ifdef MEMRECALL_HAVE_BOOST_MATH
#include <boost/math/special_functions/beta.hpp>
#endif

using namespace memrecall;

namespace {

FeatureMatrix matrix(std::size_t cols, const std::vector<std::vector<double>>& rows, const std::vector<int>& y) {
    FeatureMatrix m;
    m.rows = rows.size();
    m.cols = cols;
    for (const auto& r : rows) m.x.insert(m.x.end(), r.begin(), r.end());
    m.y = y;
    m.rank_column.assign(cols, false);
    for (std::size_t i = 0; i < rows.size(); ++i) m.ids.push_back(std::to_string(i));
    return m;
}

std::vector<LensRecord> fake_records(std::size_t n, std::size_t L) {
    std::vector<LensRecord> recs;
    for (std::size_t i = 0; i < n; ++i) {
        LensRecord r;
        r.example_id = "e" + std::to_string(1000 + i);
        r.set = i % 3 == 0 ? SetLabel::Wiki : (i % 3 == 1 ? SetLabel::Mem : SetLabel::NonMem);
        r.predicted_token = static_cast<TokenId>(i);
        for (std::size_t l = 0; l <= L; ++l) {
            r.rank.push_back(i * 10 + l);
            r.prob.push_back(0.01 * static_cast<double>(l + i % 7));
        }
        recs.push_back(r);
    }
    return recs;
}

}  // namespace

TEST_CASE("feature widths follow the spec") {
    const auto recs = fake_records(30, 24);
    CHECK(extract_features(recs, nullptr, FeatureSpec::ProbsAllLayers).cols == 24);
    CHECK(extract_features(recs, nullptr, FeatureSpec::RanksAllLayers).cols == 24);
    CHECK(extract_features(recs, nullptr, FeatureSpec::ProbsRanks).cols == 48);
    CHECK(extract_features(recs, nullptr, FeatureSpec::Ranks1To12Probs).cols == 36);
    CHECK(extract_features(recs, nullptr, FeatureSpec::ProbLastLayer).cols == 1);
    CHECK(extract_features(recs, nullptr, FeatureSpec::TokenId).cols == 1);
    CHECK(extract_features(recs, nullptr, FeatureSpec::Random).cols == 24);
    CHECK_THROWS_AS(extract_features(recs, nullptr, FeatureSpec::FinalHiddenState), UsageError);
    std::map<std::string, std::vector<float>> hidden;
    for (const auto& r : recs) hidden[r.example_id] = std::vector<float>(16, 1.0f);
    CHECK(extract_features(recs, &hidden, FeatureSpec::FinalHiddenState).cols == 16);
    hidden.erase("e1001");
    CHECK_THROWS_AS(extract_features(recs, &hidden, FeatureSpec::FinalHiddenState), DataError);
    for (auto f : all_feature_specs()) CHECK(parse_feature_spec(to_string(f)) == f);
    CHECK_THROWS_AS(parse_feature_spec("logits"), UsageError);
}

TEST_CASE("features: mem/non-mem rows only, sorted by id, rank columns flagged") {
    auto recs = fake_records(12, 4);
    std::reverse(recs.begin(), recs.end());
    const auto m = extract_features(recs, nullptr, FeatureSpec::ProbsRanks);
    CHECK(m.rows == 8);
    CHECK(std::is_sorted(m.ids.begin(), m.ids.end()));
    CHECK(m.rank_column == std::vector<bool>{false, false, false, false, true, true, true, true});
    CHECK(m.row(0)[4] == 10 + 1);  // e1001: rank at layer 1
    CHECK(m.y[0] == 1);
    const auto a = extract_features(recs, nullptr, FeatureSpec::Random, 5);
    const auto b = extract_features(recs, nullptr, FeatureSpec::Random, 5);
    const auto c = extract_features(recs, nullptr, FeatureSpec::Random, 6);
    CHECK(a.x == b.x);
    CHECK(a.x != c.x);
}

TEST_CASE("classifier separates two distant clusters perfectly") {
    std::mt19937 g(1);
    std::normal_distribution<double> n(0, 0.3);
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    for (int i = 0; i < 100; ++i) {
        const int label = i % 2;
        rows.push_back({label * 5.0 + n(g), label * 5.0 + n(g)});
        y.push_back(label);
    }
    const auto res = train_eval_classifier(matrix(2, rows, y), 10, 0.8, 7);
    CHECK(res.mean_accuracy == 1.0);
    CHECK(res.std_accuracy == 0.0);
    CHECK(res.fold_accuracies.size() == 10);
}

TEST_CASE("classifier is at chance on random labels") {
    std::mt19937 g(2);
    std::normal_distribution<double> n(0, 1);
    std::bernoulli_distribution coin(0.5);
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    for (int i = 0; i < 600; ++i) {
        rows.push_back({n(g), n(g), n(g), n(g), n(g)});
        y.push_back(coin(g));
    }
    const auto res = train_eval_classifier(matrix(5, rows, y), 10, 0.8, 3);
    CHECK(res.mean_accuracy >= 0.4);
    CHECK(res.mean_accuracy <= 0.6);
}

TEST_CASE("vanishing C drives weights to zero and accuracy to one half") {
    std::mt19937 g(3);
    std::normal_distribution<double> n(0, 1);
    std::vector<std::vector<double>> rows;
    std::vector<int> y;
    std::vector<double> flat;
    for (int i = 0; i < 200; ++i) {
        const int label = i % 3 == 0;
        rows.push_back({label + n(g), n(g)});
        flat.insert(flat.end(), rows.back().begin(), rows.back().end());
        y.push_back(label);
    }
    L1LogisticOptions weak;
    weak.C = 1e-8;
    const auto model = fit_l1_logistic(flat, 2, y, weak);
    CHECK(model.w == std::vector<double>{0.0, 0.0});
    const auto res = train_eval_classifier(matrix(2, rows, y), 10, 0.8, 1, weak);
    CHECK(res.mean_accuracy == 0.5);
    L1LogisticOptions strong;
    const auto fitted = fit_l1_logistic(flat, 2, y, strong);
    CHECK(fitted.w[0] > 0.0);
}

TEST_CASE("L1 fit reaches the optimality conditions") {
    std::mt19937 g(4);
    std::normal_distribution<double> n(0, 1);
    const std::size_t N = 300, D = 6;
    std::vector<double> x(N * D);
    std::vector<int> y(N);
    for (std::size_t i = 0; i < N; ++i) {
        double z = 0;
        for (std::size_t j = 0; j < D; ++j) {
            x[i * D + j] = n(g);
            z += (j < 2 ? 1.5 : 0.0) * x[i * D + j];
        }
        y[i] = n(g) < z;
    }
    L1LogisticOptions opts;
    opts.C = 0.05;
    opts.tol = 1e-10;
    opts.max_sweeps = 20000;
    const auto m = fit_l1_logistic(x, D, y, opts);
    // subgradient: |C * grad_j| <= 1 with equality (and matching sign) when w_j != 0
    for (std::size_t j = 0; j < D; ++j) {
        double grad = 0;
        for (std::size_t i = 0; i < N; ++i) {
            const double p = 1.0 / (1.0 + std::exp(-m.decision({x.data() + i * D, D})));
            grad += (p - y[i]) * x[i * D + j];
        }
        grad *= opts.C;
        if (m.w[j] == 0.0)
            CHECK(std::fabs(grad) <= 1.0 + 1e-6);
        else
            CHECK(grad == doctest::Approx(m.w[j] > 0 ? -1.0 : 1.0).epsilon(1e-4));
    }
}

TEST_CASE("classifier results do not depend on thread count") {
    const auto recs = fake_records(90, 6);
    const auto X = extract_features(recs, nullptr, FeatureSpec::ProbsRanks);
    omp_set_num_threads(1);
    const auto a = train_eval_classifier(X, 10, 0.8, 9);
    omp_set_num_threads(4);
    const auto b = train_eval_classifier(X, 10, 0.8, 9);
    omp_set_num_threads(omp_get_num_procs());
    CHECK(a.fold_accuracies == b.fold_accuracies);
}

TEST_CASE("classifier input validation") {
    const auto m = matrix(1, {{0}, {1}, {2}}, {0, 1, 1});
    CHECK_THROWS_AS(train_eval_classifier(m), DataError);
}

TEST_CASE("token frequencies") {
    const std::vector<TokenId> toks{0, 0, 1};
    const auto f = token_frequencies(toks, 3);
    CHECK(f.frequency(0) == doctest::Approx(2.0 / 3));
    CHECK(f.frequency(1) == doctest::Approx(1.0 / 3));
    CHECK(f.frequency(2) == 0.0);
    CHECK(f.total == 3);
    const std::vector<TokenId> perm{1, 0, 0};
    CHECK(token_frequencies(perm, 3).counts == f.counts);
    CHECK_THROWS_AS(token_frequencies(std::vector<TokenId>{5}, 3), DataError);
}

TEST_CASE("\" the\" is among the most frequent tokens of English text") {
    testing::TempDir dir("freq");
    testing::write_file(dir / "c.txt",
                        "The cat sat on the mat and the dog ate the bone.\n"
                        "In the beginning the world was without form, and the sea was dark.\n"
                        "Most of the people in the town went to the market on the first day of the week.\n");
    const auto& tok = testing::gpt2_tokenizer();
    const auto f = token_frequencies(dir / "c.txt", tok, tok.size());
    std::uint64_t sum = 0;
    for (auto c : f.counts) sum += c;
    CHECK(sum == f.total);
    const TokenId the = tok.encode(" the").front();
    std::size_t better = 0;
    for (auto c : f.counts) better += c > f.counts[static_cast<std::size_t>(the)];
    CHECK(better < 20);
    CHECK(better == 0);
}

TEST_CASE("pearson basics") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    const std::vector<double> neg{-1, -2, -3, -4, -5};
    CHECK(pearson(x, x).r == 1.0);
    CHECK(pearson(x, x).p == 0.0);
    CHECK(pearson(x, neg).r == -1.0);
    CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), DataError);
    CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}), DataError);
    CHECK_THROWS_AS(pearson(x, std::vector<double>(5, 1.0)), DataError);
}

TEST_CASE("pearson r matches brute force; p matches the t distribution") {
    std::mt19937 g(10);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t N = 3 + static_cast<std::size_t>(trial) * 7;
        std::vector<double> x(N), y(N);
        for (std::size_t i = 0; i < N; ++i) {
            x[i] = n(g) * 100;
            y[i] = 0.3 * x[i] + n(g) * 50;
        }
        // brute force in long double
        long double mx = 0, my = 0;
        for (std::size_t i = 0; i < N; ++i) mx += x[i], my += y[i];
        mx /= N;
        my /= N;
        long double sxy = 0, sxx = 0, syy = 0;
        for (std::size_t i = 0; i < N; ++i) {
            sxy += (x[i] - mx) * (y[i] - my);
            sxx += (x[i] - mx) * (x[i] - mx);
            syy += (y[i] - my) * (y[i] - my);
        }
        const double r_ref = static_cast<double>(sxy / std::sqrt(sxx * syy));
        const auto c = pearson(x, y);
        CHECK(std::fabs(c.r - r_ref) < 1e-10);
        CHECK(c.p >= 0.0);
        CHECK(c.p <= 1.0);
#ifdef MEMRECALL_HAVE_BOOST_MATH
        const double df = static_cast<double>(N) - 2;
        const double t2 = c.r * c.r * df / (1 - c.r * c.r);
        const double p_ref = boost::math::ibeta(df / 2, 0.5, df / (df + t2));
        CHECK(c.p == doctest::Approx(p_ref).epsilon(1e-9));
#endif
    }
}

TEST_CASE("incomplete beta against known values") {
    CHECK(incomplete_beta(1, 1, 0.3) == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(incomplete_beta(2, 3, 0.4) == doctest::Approx(0.5248).epsilon(1e-12));
    CHECK(incomplete_beta(0.5, 0.5, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(incomplete_beta(3, 2, 0.0) == 0.0);
    CHECK(incomplete_beta(3, 2, 1.0) == 1.0);
#ifdef MEMRECALL_HAVE_BOOST_MATH
    for (double a : {0.5, 1.5, 10.0, 400.0})
        for (double b : {0.5, 2.0, 30.0})
            for (double x : {0.01, 0.2, 0.5, 0.77, 0.999})
                CHECK(incomplete_beta(a, b, x) == doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-10));
#endif
}

TEST_CASE("report CSVs") {
    testing::TempDir dir("stats");
    write_correlation_csv(dir / "c.csv", "gpt2-medium", {814, -0.22, 2.9e-21});
    CHECK(testing::read_file(dir / "c.csv") == "model,n,r,p\ngpt2-medium,814,-0.22,2.9e-21\n");
    CVResult cv{0.846, 0.028, 10, {}};
    write_classifier_csv(dir / "k.csv", {{"m", FeatureSpec::ProbsAllLayers, cv, 0}});
    CHECK(testing::read_file(dir / "k.csv") ==
          "model,feature_spec,mean_acc,std_acc,n_folds,seed\nm,probs_all_layers,0.846,0.028,10,0\n");
}

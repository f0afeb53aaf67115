#include "memrecall/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "memrecall/errors.hpp"
#include "memrecall/report.hpp"
#include "memrecall/rng.hpp"

namespace memrecall {

std::string to_string(FeatureSpec f) {
    switch (f) {
        case FeatureSpec::ProbsAllLayers: return "probs_all_layers";
        case FeatureSpec::RanksAllLayers: return "ranks_all_layers";
        case FeatureSpec::ProbsRanks: return "probs+ranks";
        case FeatureSpec::Ranks1To12Probs: return "ranks_1_12+probs";
        case FeatureSpec::ProbLastLayer: return "prob_last_layer";
        case FeatureSpec::FinalHiddenState: return "final_hidden_state";
        case FeatureSpec::TokenId: return "token_id";
        case FeatureSpec::Random: return "random";
    }
    return "?";
}

std::vector<FeatureSpec> all_feature_specs() {
    return {FeatureSpec::ProbsAllLayers, FeatureSpec::RanksAllLayers, FeatureSpec::ProbsRanks,
            FeatureSpec::Ranks1To12Probs, FeatureSpec::ProbLastLayer,  FeatureSpec::FinalHiddenState,
            FeatureSpec::TokenId,         FeatureSpec::Random};
}

FeatureSpec parse_feature_spec(std::string_view s) {
    for (auto f : all_feature_specs())
        if (to_string(f) == s) return f;
    throw UsageError("unknown feature spec '" + std::string(s) + "'");
}

FeatureMatrix extract_features(const std::vector<LensRecord>& records,
                               const std::map<std::string, std::vector<float>>* final_hidden, FeatureSpec spec,
                               std::uint64_t seed) {
    std::vector<const LensRecord*> rows;
    for (const auto& r : records)
        if (r.set == SetLabel::Mem || r.set == SetLabel::NonMem) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->example_id < b->example_id; });
    if (rows.empty()) throw DataError("extract_features: no mem or non-mem records");
    const std::size_t L = rows.front()->rank.size() - 1;
    for (auto* r : rows)
        if (r->rank.size() != L + 1 || r->prob.size() != L + 1)
            throw DataError("extract_features: record '" + r->example_id + "' has a different layer count");
    if (spec == FeatureSpec::FinalHiddenState && !final_hidden)
        throw UsageError("feature spec final_hidden_state needs final hidden states");

    FeatureMatrix m;
    m.rows = rows.size();
    std::size_t d = 0;
    if (spec == FeatureSpec::FinalHiddenState) {
        auto it = final_hidden->find(rows.front()->example_id);
        if (it == final_hidden->end())
            throw DataError("no final hidden state for example '" + rows.front()->example_id + "'");
        d = it->second.size();
    }
    const std::size_t r12 = std::min<std::size_t>(12, L);
    switch (spec) {
        case FeatureSpec::ProbsAllLayers:
        case FeatureSpec::RanksAllLayers:
        case FeatureSpec::Random: m.cols = L; break;
        case FeatureSpec::ProbsRanks: m.cols = 2 * L; break;
        case FeatureSpec::Ranks1To12Probs: m.cols = r12 + L; break;
        case FeatureSpec::ProbLastLayer:
        case FeatureSpec::TokenId: m.cols = 1; break;
        case FeatureSpec::FinalHiddenState: m.cols = d; break;
    }
    m.rank_column.assign(m.cols, false);
    if (spec == FeatureSpec::RanksAllLayers || spec == FeatureSpec::ProbsRanks)
        std::fill(m.rank_column.end() - static_cast<std::ptrdiff_t>(L), m.rank_column.end(), true);
    if (spec == FeatureSpec::Ranks1To12Probs) std::fill_n(m.rank_column.begin(), r12, true);
    m.x.reserve(m.rows * m.cols);

    Rng rng(derive_seed(seed, 0x7261'6e64));
    for (auto* r : rows) {
        m.ids.push_back(r->example_id);
        m.y.push_back(r->set == SetLabel::Mem ? 1 : 0);
        auto probs = [&] {
            for (std::size_t l = 1; l <= L; ++l) m.x.push_back(r->prob[l]);
        };
        auto ranks = [&](std::size_t upto) {
            for (std::size_t l = 1; l <= upto; ++l) m.x.push_back(static_cast<double>(r->rank[l]));
        };
        switch (spec) {
            case FeatureSpec::ProbsAllLayers: probs(); break;
            case FeatureSpec::RanksAllLayers: ranks(L); break;
            case FeatureSpec::ProbsRanks: probs(); ranks(L); break;
            case FeatureSpec::Ranks1To12Probs: ranks(r12); probs(); break;
            case FeatureSpec::ProbLastLayer: m.x.push_back(r->prob[L]); break;
            case FeatureSpec::TokenId: m.x.push_back(static_cast<double>(r->predicted_token)); break;
            case FeatureSpec::Random:
                for (std::size_t c = 0; c < L; ++c) m.x.push_back(rng.uniform());
                break;
            case FeatureSpec::FinalHiddenState: {
                auto it = final_hidden->find(r->example_id);
                if (it == final_hidden->end())
                    throw DataError("no final hidden state for example '" + r->example_id + "'");
                if (it->second.size() != d)
                    throw DataError("final hidden state of '" + r->example_id + "' has a different width");
                m.x.insert(m.x.end(), it->second.begin(), it->second.end());
                break;
            }
        }
    }
    return m;
}

double LogisticModel::decision(std::span<const double> x) const {
    double z = b;
    for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * x[j];
    return z;
}

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double soft_threshold(double v, double t) { return v > t ? v - t : (v < -t ? v + t : 0.0); }

}  // namespace

LogisticModel fit_l1_logistic(const std::vector<double>& x, std::size_t cols, const std::vector<int>& y,
                              const L1LogisticOptions& opts) {
    const std::size_t n = y.size();
    if (cols == 0 || x.size() != n * cols) throw std::invalid_argument("fit_l1_logistic: shape mismatch");
    if (!(opts.C > 0)) throw UsageError("regularization strength C must be positive");
    LogisticModel m;
    m.w.assign(cols, 0.0);
    std::vector<double> z(n, 0.0), sq(cols, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cols; ++j) sq[j] += x[i * cols + j] * x[i * cols + j];

    const double hb = opts.C * 0.25 * static_cast<double>(n);
    for (m.sweeps = 0; m.sweeps < opts.max_sweeps;) {
        ++m.sweeps;
        double max_delta = 0.0;
        double g = 0.0;
        for (std::size_t i = 0; i < n; ++i) g += sigmoid(z[i]) - y[i];
        const double db = -opts.C * g / hb;
        m.b += db;
        for (auto& zi : z) zi += db;
        max_delta = std::fabs(db);
        for (std::size_t j = 0; j < cols; ++j) {
            const double h = opts.C * 0.25 * sq[j];
            if (h == 0.0) continue;
            g = 0.0;
            for (std::size_t i = 0; i < n; ++i) g += (sigmoid(z[i]) - y[i]) * x[i * cols + j];
            const double wj = soft_threshold(m.w[j] - opts.C * g / h, 1.0 / h);
            const double dw = wj - m.w[j];
            if (dw != 0.0) {
                for (std::size_t i = 0; i < n; ++i) z[i] += dw * x[i * cols + j];
                m.w[j] = wj;
            }
            max_delta = std::max(max_delta, std::fabs(dw));
        }
        if (max_delta < opts.tol) break;
    }
    return m;
}

namespace {

double fold_accuracy(const FeatureMatrix& X, double train_frac, std::uint64_t fold_seed,
                     const L1LogisticOptions& opts) {
    constexpr int kRetries = 100;
    const std::size_t n = X.rows;
    for (int attempt = 0; attempt < kRetries; ++attempt) {
        Rng rng(derive_seed(fold_seed, static_cast<std::uint64_t>(attempt)));
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        const auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
        std::vector<std::size_t> train(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        std::vector<std::size_t> test_pos, test_neg;
        for (std::size_t k = n_train; k < n; ++k) (X.y[idx[k]] ? test_pos : test_neg).push_back(idx[k]);
        const auto train_pos = std::count_if(train.begin(), train.end(), [&](auto i) { return X.y[i] == 1; });
        if (train_pos == 0 || train_pos == static_cast<std::ptrdiff_t>(train.size()) || test_pos.empty() ||
            test_neg.empty())
            continue;

        // balance: random subsample of the larger class
        auto& larger = test_pos.size() > test_neg.size() ? test_pos : test_neg;
        const std::size_t keep = std::min(test_pos.size(), test_neg.size());
        rng.shuffle(larger);
        larger.resize(keep);

        // standardize on train statistics; ranks go through log1p first
        const std::size_t c = X.cols;
        auto value = [&](std::size_t i, std::size_t j) {
            const double v = X.x[i * c + j];
            return X.rank_column[j] ? std::log1p(v) : v;
        };
        std::vector<double> mean(c, 0.0), sd(c, 0.0);
        for (auto i : train)
            for (std::size_t j = 0; j < c; ++j) mean[j] += value(i, j);
        for (auto& v : mean) v /= static_cast<double>(train.size());
        for (auto i : train)
            for (std::size_t j = 0; j < c; ++j) sd[j] += (value(i, j) - mean[j]) * (value(i, j) - mean[j]);
        for (auto& v : sd) {
            v = std::sqrt(v / static_cast<double>(train.size()));
            if (v == 0.0) v = 1.0;
        }
        auto scaled = [&](const std::vector<std::size_t>& rows) {
            std::vector<double> out;
            out.reserve(rows.size() * c);
            for (auto i : rows)
                for (std::size_t j = 0; j < c; ++j) out.push_back((value(i, j) - mean[j]) / sd[j]);
            return out;
        };
        std::vector<int> ytrain;
        for (auto i : train) ytrain.push_back(X.y[i]);
        const auto model = fit_l1_logistic(scaled(train), c, ytrain, opts);

        std::vector<std::size_t> test = test_pos;
        test.insert(test.end(), test_neg.begin(), test_neg.end());
        const auto xt = scaled(test);
        std::size_t correct = 0;
        for (std::size_t k = 0; k < test.size(); ++k) {
            const int pred = model.decision({xt.data() + k * c, c}) > 0.0 ? 1 : 0;
            correct += pred == X.y[test[k]];
        }
        return static_cast<double>(correct) / static_cast<double>(test.size());
    }
    throw DataError("classifier: could not draw a split with both classes in train and test after " +
                    std::to_string(kRetries) + " attempts");
}

}  // namespace

CVResult train_eval_classifier(const FeatureMatrix& X, std::size_t folds, double train_frac, std::uint64_t seed,
                               const L1LogisticOptions& opts) {
    const auto pos = std::count(X.y.begin(), X.y.end(), 1);
    const auto neg = static_cast<std::ptrdiff_t>(X.y.size()) - pos;
    if (pos < 2 || neg < 2) throw DataError("classifier needs at least two examples of each class");
    if (folds == 0) throw UsageError("folds must be positive");
    if (!(train_frac > 0 && train_frac < 1)) throw UsageError("train fraction must be in (0, 1)");

    CVResult res;
    res.n_folds = folds;
    res.fold_accuracies.assign(folds, 0.0);
    std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t f = 0; f < static_cast<std::ptrdiff_t>(folds); ++f) {
        try {
            res.fold_accuracies[static_cast<std::size_t>(f)] =
                fold_accuracy(X, train_frac, derive_seed(seed, static_cast<std::uint64_t>(f)), opts);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    const double nf = static_cast<double>(folds);
    res.mean_accuracy = std::accumulate(res.fold_accuracies.begin(), res.fold_accuracies.end(), 0.0) / nf;
    double v = 0.0;
    for (double a : res.fold_accuracies) v += (a - res.mean_accuracy) * (a - res.mean_accuracy);
    res.std_accuracy = std::sqrt(v / nf);
    return res;
}

double FrequencyTable::frequency(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= counts.size()) throw std::out_of_range("token id out of range");
    return total ? static_cast<double>(counts[static_cast<std::size_t>(id)]) / static_cast<double>(total) : 0.0;
}

FrequencyTable token_frequencies(std::span<const TokenId> tokens, std::size_t vocab_size) {
    FrequencyTable t;
    t.counts.assign(vocab_size, 0);
    for (auto id : tokens) {
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
            throw DataError("token id " + std::to_string(id) + " outside vocabulary");
        ++t.counts[static_cast<std::size_t>(id)];
    }
    t.total = tokens.size();
    return t;
}

FrequencyTable token_frequencies(const std::filesystem::path& corpus, const Tokenizer& tokenizer,
                                 std::size_t vocab_size) {
    std::ifstream in(corpus);
    if (!in) throw DataError("cannot open " + corpus.string());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) lines.push_back(line + "\n");
    std::vector<std::vector<std::uint64_t>> partial;
    std::exception_ptr error;
#pragma omp parallel
    {
        std::vector<std::uint64_t> local(vocab_size, 0);
#pragma omp for schedule(dynamic, 64)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(lines.size()); ++i) {
            try {
                for (auto id : tokenizer.encode(lines[static_cast<std::size_t>(i)])) {
                    if (static_cast<std::size_t>(id) >= vocab_size) throw DataError("token id outside vocabulary");
                    ++local[static_cast<std::size_t>(id)];
                }
            } catch (...) {
#pragma omp critical
                if (!error) error = std::current_exception();
            }
        }
#pragma omp critical
        partial.push_back(std::move(local));
    }
    if (error) std::rethrow_exception(error);
    FrequencyTable t;
    t.counts.assign(vocab_size, 0);
    for (const auto& p : partial)
        for (std::size_t i = 0; i < vocab_size; ++i) t.counts[i] += p[i];
    t.total = std::accumulate(t.counts.begin(), t.counts.end(), std::uint64_t{0});
    return t;
}

namespace {

// Continued fraction for I_x(a, b), modified Lentz.
double beta_cf(double a, double b, double x) {
    constexpr double kTiny = 1e-300, kEps = 1e-16;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0 && b > 0)) throw std::invalid_argument("incomplete_beta: a and b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(ln_front) * beta_cf(a, b, x) / a;
    return 1.0 - std::exp(ln_front) * beta_cf(b, a, 1.0 - x) / b;
}

Correlation pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw DataError("pearson: length mismatch");
    if (x.size() < 3) throw DataError("pearson: need at least 3 points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0 || syy == 0) throw DataError("pearson: zero variance");
    Correlation c;
    c.n = x.size();
    c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double df = n - 2.0;
    const double one_minus = 1.0 - c.r * c.r;
    if (one_minus <= 0.0) {
        c.p = 0.0;
    } else {
        const double t2 = c.r * c.r * df / one_minus;
        c.p = incomplete_beta(df / 2.0, 0.5, df / (df + t2));
    }
    return c;
}

void write_classifier_csv(const std::filesystem::path& path, const std::vector<ClassifierRow>& rows) {
    report::CsvWriter w(path, {"model", "feature_spec", "mean_acc", "std_acc", "n_folds", "seed"});
    for (const auto& r : rows)
        w.row({r.model, to_string(r.spec), report::fmt(r.result.mean_accuracy), report::fmt(r.result.std_accuracy),
               std::to_string(r.result.n_folds), std::to_string(r.seed)});
    w.close();
}

void write_correlation_csv(const std::filesystem::path& path, const std::string& model, const Correlation& c) {
    report::CsvWriter w(path, {"model", "n", "r", "p"});
    w.row({model, std::to_string(c.n), report::fmt(c.r), report::fmt(c.p)});
    w.close();
}

}  // namespace memrecall

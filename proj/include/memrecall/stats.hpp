#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memrecall/lens.hpp"

namespace memrecall {

enum class FeatureSpec {
    ProbsAllLayers,
    RanksAllLayers,
    ProbsRanks,
    Ranks1To12Probs,
    ProbLastLayer,
    FinalHiddenState,
    TokenId,
    Random,
};

std::string to_string(FeatureSpec f);
FeatureSpec parse_feature_spec(std::string_view s);
std::vector<FeatureSpec> all_feature_specs();

/// Which columns hold ranks; those are log1p-transformed before standardizing.
struct FeatureMatrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> x;  // row-major
    std::vector<int> y;     // 1 = memorized
    std::vector<std::string> ids;
    std::vector<bool> rank_column;

    std::span<const double> row(std::size_t r) const { return {x.data() + r * cols, cols}; }
};

/// Builds features from mem and non-mem records (other sets are ignored),
/// rows sorted by example_id. Layer features use layers 1..L; the random spec
/// has L columns of seeded uniform noise.
FeatureMatrix extract_features(const std::vector<LensRecord>& records,
                               const std::map<std::string, std::vector<float>>* final_hidden, FeatureSpec spec,
                               std::uint64_t seed = 0);

struct LogisticModel {
    std::vector<double> w;
    double b = 0.0;
    std::size_t sweeps = 0;

    double decision(std::span<const double> x) const;
};

struct L1LogisticOptions {
    double C = 1.0;
    double tol = 1e-6;
    std::size_t max_sweeps = 1000;
};

/// Minimizes ||w||_1 + C * sum log-loss by cyclic coordinate descent with
/// per-coordinate quadratic upper bounds. The intercept is not penalized.
LogisticModel fit_l1_logistic(const std::vector<double>& x, std::size_t cols, const std::vector<int>& y,
                              const L1LogisticOptions& opts = {});

struct CVResult {
    double mean_accuracy = 0.0;
    double std_accuracy = 0.0;  // population standard deviation over folds
    std::size_t n_folds = 0;
    std::vector<double> fold_accuracies;
};

/// `folds` repeated seeded random train/test splits; the test split is
/// balanced by subsampling the larger class.
CVResult train_eval_classifier(const FeatureMatrix& X, std::size_t folds = 10, double train_frac = 0.8,
                               std::uint64_t seed = 0, const L1LogisticOptions& opts = {});

struct FrequencyTable {
    std::vector<std::uint64_t> counts;
    std::uint64_t total = 0;

    double frequency(TokenId id) const;
};

FrequencyTable token_frequencies(std::span<const TokenId> tokens, std::size_t vocab_size);
/// Tokenizes every line of a text file with the model's tokenizer and counts.
FrequencyTable token_frequencies(const std::filesystem::path& corpus, const Tokenizer& tokenizer,
                                 std::size_t vocab_size);

struct Correlation {
    std::size_t n = 0;
    double r = 0.0;
    double p = 1.0;
};

/// Pearson r with the two-tailed p-value of its t statistic.
Correlation pearson(std::span<const double> x, std::span<const double> y);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// model,feature_spec,mean_acc,std_acc,n_folds,seed
struct ClassifierRow {
    std::string model;
    FeatureSpec spec;
    CVResult result;
    std::uint64_t seed;
};
void write_classifier_csv(const std::filesystem::path& path, const std::vector<ClassifierRow>& rows);

// model,n,r,p
void write_correlation_csv(const std::filesystem::path& path, const std::string& model, const Correlation& c);

}  // namespace memrecall

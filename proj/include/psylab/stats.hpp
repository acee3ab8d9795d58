#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "psylab/errors.hpp"

namespace psylab::stats {

struct ZeroVariance : StatsError {
    using StatsError::StatsError;
};
struct SampleSizeOutOfRange : StatsError {
    using StatsError::StatsError;
};
struct ZeroErrorVariance : StatsError {
    using StatsError::StatsError;
};
struct InsufficientData : StatsError {
    using StatsError::StatsError;
};
struct BadInput : StatsError {
    using StatsError::StatsError;
};

// One scored factor value: the statistical unit of the whole experiment.
struct FactorSample {
    std::string model_id;
    std::string session_id;
    std::string participant_id;
    int stage = 0;       // 1..3
    int repetition = 0;  // 1..R
    std::string questionnaire_id;
    std::string factor_id;
    double value = 0.0;
};

// Complete-case subjects x conditions matrix for the repeated-measures tests.
struct RepeatedMeasures {
    std::vector<std::string> subject_ids;       // n entries
    std::vector<std::vector<double>> values;    // n rows, k columns, no gaps
    std::vector<std::string> condition_labels;  // k entries

    std::size_t n_subjects() const { return values.size(); }
    std::size_t n_conditions() const { return condition_labels.size(); }

    // Enforces: rectangular, n >= 3, k >= 2.
    void validate() const;
};

struct NormalityResult {
    double w = 0.0;
    double p_value = 0.0;
    int n = 0;
};

enum class TestFamily { rm_anova, friedman };

struct OmnibusResult {
    TestFamily family = TestFamily::friedman;
    double statistic = 0.0;  // F or chi-squared
    double effect = 0.0;     // partial eta^2 or Kendall's W
    std::pair<double, double> df{0.0, 0.0};
    double p_value = 1.0;
};

// One post-hoc stage-pair comparison. `delta` is a signed summary of the
// post-hoc statistic with later-minus-earlier orientation: positive means the
// later snapshot scored higher.
struct PairwiseComparison {
    int earlier_label = 0;  // snapshot labels: 12, 24, 36
    int later_label = 0;
    double delta = 0.0;
    double p_raw = 1.0;
    double p_adjusted = 1.0;
    bool significant = false;
};

enum class Trend { stay, up, down, random };

const char* to_string(Trend trend);

struct FactorAnalysis {
    std::string questionnaire_id;
    std::string factor_id;
    std::optional<NormalityResult> normality;  // absent on the constant shortcut
    std::optional<OmnibusResult> omnibus;
    std::vector<PairwiseComparison> pairwise;
    Trend trend = Trend::stay;
    double alpha = 0.05;
    bool constant_input = false;  // every pooled value identical
    int n_complete_subjects = 0;
};

// Shapiro-Wilk W and upper-tail p following Royston's AS R94 formulation
// (complete samples, 3 <= n <= 5000). Throws ZeroVariance on constant input.
NormalityResult shapiro_wilk(std::span<const double> samples);

// One-way repeated-measures ANOVA. Throws ZeroErrorVariance when the
// subject-by-condition interaction term vanishes.
OmnibusResult rm_anova(const RepeatedMeasures& data);

// Friedman rank test with midranks and tie correction; effect is Kendall's W.
OmnibusResult friedman(const RepeatedMeasures& data);

// Tukey HSD over all condition pairs; p from the studentized range
// distribution with (k, (k-1)(n-1)) and delta the signed q statistic.
std::vector<PairwiseComparison> tukey_hsd(const RepeatedMeasures& data, double alpha = 0.05);

struct SignedRankResult {
    double w_plus = 0.0;
    double p_value = 1.0;
    double delta = 0.0;  // signed standardized statistic, later minus earlier
    int n_used = 0;      // pairs remaining after dropping zero differences
    bool all_zero = false;
    bool exact = false;
};

// Two-sided Wilcoxon signed-rank test of y against x (paired). Zero
// differences are dropped; p is exact (sign-assignment distribution) when the
// remaining pair count is at most exact_threshold, otherwise the tie- and
// continuity-corrected normal approximation.
SignedRankResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y, int exact_threshold = 25);

// p_adj = min(1, m * p) with m the family size; order preserved.
std::vector<double> bonferroni_adjust(std::span<const double> p_values);

// Trend rule: omnibus not significant -> stay; no significant adjusted
// pairwise -> stay; all significant deltas one sign -> up/down; else random.
Trend classify_trend(const OmnibusResult& omnibus, std::span<const PairwiseComparison> pairwise, double alpha);

// The full three-step pipeline for one factor: normality gate on the pooled
// values, parametric or rank-based branch, and trend classification.
// Subjects (participant x repetition) missing any stage are dropped listwise.
FactorAnalysis analyze_factor(std::span<const FactorSample> samples, double alpha = 0.05);

}  // namespace psylab::stats

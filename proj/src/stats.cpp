#include "psylab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <sstream>

#include "psylab/distributions.hpp"

namespace psylab::stats {

namespace {

double poly(std::span<const double> c, double x) {
    // c[0] + c[1] x + ... evaluated Horner-style from the top.
    double p = 0.0;
    for (std::size_t i = c.size(); i-- > 0;) p = p * x + c[i];
    return p;
}

// Midranks of |values| in ascending order; also accumulates sum(t^3 - t) over
// tie groups for the callers' tie corrections.
std::vector<double> midranks(std::vector<double> values, double* tie_term = nullptr) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    double ties = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
        const double g = static_cast<double>(j - i + 1);
        ties += g * g * g - g;
        i = j + 1;
    }
    if (tie_term != nullptr) *tie_term = ties;
    return ranks;
}

struct SsDecomposition {
    double ss_conditions = 0.0;
    double ss_subjects = 0.0;
    double ss_error = 0.0;
    std::vector<double> condition_means;
};

SsDecomposition sums_of_squares(const RepeatedMeasures& data) {
    const std::size_t n = data.n_subjects();
    const std::size_t k = data.n_conditions();
    double grand = 0.0;
    for (const auto& row : data.values) grand = std::accumulate(row.begin(), row.end(), grand);
    grand /= static_cast<double>(n * k);

    SsDecomposition out;
    out.condition_means.assign(k, 0.0);
    for (const auto& row : data.values)
        for (std::size_t j = 0; j < k; ++j) out.condition_means[j] += row[j];
    for (auto& m : out.condition_means) m /= static_cast<double>(n);

    double ss_total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        const double d = out.condition_means[j] - grand;
        out.ss_conditions += d * d;
    }
    out.ss_conditions *= static_cast<double>(n);
    for (const auto& row : data.values) {
        const double subject_mean = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(k);
        const double ds = subject_mean - grand;
        out.ss_subjects += ds * ds;
        for (double v : row) {
            const double d = v - grand;
            ss_total += d * d;
        }
    }
    out.ss_subjects *= static_cast<double>(k);
    out.ss_error = std::max(0.0, ss_total - out.ss_conditions - out.ss_subjects);
    // Kill rounding residue so exactly-additive data registers as zero error.
    if (out.ss_error <= 1e-10 * std::max(1.0, ss_total)) out.ss_error = 0.0;
    return out;
}

int condition_label_as_int(const RepeatedMeasures& data, std::size_t index) {
    const std::string& label = data.condition_labels[index];
    try {
        std::size_t pos = 0;
        int value = std::stoi(label, &pos);
        if (pos == label.size()) return value;
    } catch (...) {
    }
    return static_cast<int>(index) + 1;
}

// Pair order fixed as (1,2), (2,3), (1,3) for k=3; generalized by span.
std::vector<std::pair<std::size_t, std::size_t>> condition_pairs(std::size_t k) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t span = 1; span < k; ++span)
        for (std::size_t i = 0; i + span < k; ++i) pairs.emplace_back(i, i + span);
    if (k == 3) {
        // Canonical snapshot order: adjacent pairs first, then the endpoints.
        return {{0, 1}, {1, 2}, {0, 2}};
    }
    return pairs;
}

}  // namespace

void RepeatedMeasures::validate() const {
    const std::size_t k = condition_labels.size();
    if (k < 2) throw BadInput("repeated measures need at least two conditions");
    if (values.size() < 3) throw BadInput("repeated measures need at least three subjects");
    if (!subject_ids.empty() && subject_ids.size() != values.size())
        throw BadInput("subject_ids must match the number of value rows");
    for (const auto& row : values)
        if (row.size() != k) throw BadInput("ragged repeated-measures matrix");
}

const char* to_string(Trend trend) {
    switch (trend) {
        case Trend::stay: return "stay";
        case Trend::up: return "up";
        case Trend::down: return "down";
        case Trend::random: return "random";
    }
    return "stay";
}

NormalityResult shapiro_wilk(std::span<const double> samples) {
    const int n = static_cast<int>(samples.size());
    if (n < 3 || n > 5000) throw SampleSizeOutOfRange("shapiro_wilk: n must be in [3, 5000]");

    std::vector<double> x(samples.begin(), samples.end());
    std::sort(x.begin(), x.end());
    const double range = x.back() - x.front();
    if (!(range > 0.0)) throw ZeroVariance("shapiro_wilk: sample has zero variance");

    // AS R94 coefficient construction (Royston 1995), complete samples.
    static constexpr double c1[6] = {0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
    static constexpr double c2[6] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};
    static constexpr double c3[4] = {0.5440, -0.39978, 0.025054, -6.714e-4};
    static constexpr double c4[4] = {1.3822, -0.77857, 0.062767, -2.0322e-3};
    static constexpr double c5[4] = {-1.5861, -0.31082, -0.083751, 3.8915e-3};
    static constexpr double c6[3] = {-0.4803, -0.082676, 3.0302e-3};
    static constexpr double g[2] = {-2.273, 0.459};

    const int n2 = n / 2;
    const double an = static_cast<double>(n);
    std::vector<double> a(n2, 0.0);
    if (n == 3) {
        a[0] = std::sqrt(0.5);
    } else {
        const double an25 = an + 0.25;
        double summ2 = 0.0;
        for (int i = 0; i < n2; ++i) {
            a[i] = dist::normal_quantile((i + 1 - 0.375) / an25);
            summ2 += a[i] * a[i];
        }
        summ2 *= 2.0;
        const double ssumm2 = std::sqrt(summ2);
        const double rsn = 1.0 / std::sqrt(an);
        const double a1 = poly(c1, rsn) - a[0] / ssumm2;
        int start;
        double fac;
        if (n > 5) {
            const double a2 = -a[1] / ssumm2 + poly(c2, rsn);
            fac = std::sqrt((summ2 - 2.0 * a[0] * a[0] - 2.0 * a[1] * a[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2));
            a[0] = a1;
            a[1] = a2;
            start = 2;
        } else {
            fac = std::sqrt((summ2 - 2.0 * a[0] * a[0]) / (1.0 - 2.0 * a1 * a1));
            a[0] = a1;
            start = 1;
        }
        for (int i = start; i < n2; ++i) a[i] = -a[i] / fac;
    }

    // Full antisymmetric coefficient vector against the order statistics.
    std::vector<double> coef(n, 0.0);
    for (int i = 0; i < n2; ++i) {
        coef[i] = -a[i];
        coef[n - 1 - i] = a[i];
    }

    double sa = 0.0, sx = 0.0;
    for (int i = 0; i < n; ++i) {
        sa += coef[i];
        sx += x[i] / range;
    }
    sa /= an;
    sx /= an;
    double ssa = 0.0, ssx = 0.0, sax = 0.0;
    for (int i = 0; i < n; ++i) {
        const double da = coef[i] - sa;
        const double dx = x[i] / range - sx;
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }
    // w1 = 1 - W, kept in this form to avoid cancellation for W near 1.
    const double ssassx = std::sqrt(ssa * ssx);
    const double w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    const double w = 1.0 - w1;

    double pw;
    if (n == 3) {
        constexpr double pi6 = 1.90985931710274;   // 6/pi
        constexpr double stqr = 1.04719755119660;  // asin(sqrt(3/4))
        pw = pi6 * (std::asin(std::sqrt(w)) - stqr);
        pw = std::clamp(pw, 0.0, 1.0);
    } else {
        const double y = std::log(w1);
        const double xx = std::log(an);
        double m, s;
        if (n <= 11) {
            const double gamma = poly(g, an);
            if (y >= gamma) {
                return {w, 1e-19, n};
            }
            const double yt = -std::log(gamma - y);
            m = poly(c3, an);
            s = std::exp(poly(c4, an));
            pw = dist::normal_sf((yt - m) / s);
        } else {
            m = poly(c5, xx);
            s = std::exp(poly(c6, xx));
            pw = dist::normal_sf((y - m) / s);
        }
    }
    return {w, pw, n};
}

OmnibusResult rm_anova(const RepeatedMeasures& data) {
    data.validate();
    const double n = static_cast<double>(data.n_subjects());
    const double k = static_cast<double>(data.n_conditions());
    const auto ss = sums_of_squares(data);

    OmnibusResult out;
    out.family = TestFamily::rm_anova;
    out.df = {k - 1.0, (k - 1.0) * (n - 1.0)};
    if (ss.ss_error == 0.0) {
        if (ss.ss_conditions == 0.0) {
            // Every subject flat across conditions: nothing to test.
            out.statistic = 0.0;
            out.p_value = 1.0;
            out.effect = 0.0;
            return out;
        }
        throw ZeroErrorVariance("rm_anova: error sum of squares is zero");
    }
    const double ms_cond = ss.ss_conditions / out.df.first;
    const double ms_err = ss.ss_error / out.df.second;
    out.statistic = ms_cond / ms_err;
    out.p_value = dist::f_sf(out.statistic, out.df.first, out.df.second);
    out.effect = ss.ss_conditions / (ss.ss_conditions + ss.ss_error);
    return out;
}

OmnibusResult friedman(const RepeatedMeasures& data) {
    data.validate();
    const double n = static_cast<double>(data.n_subjects());
    const double k = static_cast<double>(data.n_conditions());

    std::vector<double> rank_sums(data.n_conditions(), 0.0);
    double tie_total = 0.0;
    for (const auto& row : data.values) {
        double row_ties = 0.0;
        const auto ranks = midranks(row, &row_ties);
        tie_total += row_ties;
        for (std::size_t j = 0; j < ranks.size(); ++j) rank_sums[j] += ranks[j];
    }

    double chi2 = 0.0;
    for (double r : rank_sums) chi2 += r * r;
    chi2 = 12.0 / (n * k * (k + 1.0)) * chi2 - 3.0 * n * (k + 1.0);

    const double correction = 1.0 - tie_total / (n * k * (k * k - 1.0));
    OmnibusResult out;
    out.family = TestFamily::friedman;
    out.df = {k - 1.0, 0.0};
    if (correction <= 0.0) {
        // Every row fully tied: the rankings carry no information.
        out.statistic = 0.0;
        out.p_value = 1.0;
        out.effect = 0.0;
        return out;
    }
    out.statistic = std::max(0.0, chi2 / correction);
    out.p_value = dist::chi_squared_sf(out.statistic, k - 1.0);
    out.effect = std::clamp(out.statistic / (n * (k - 1.0)), 0.0, 1.0);
    return out;
}

std::vector<PairwiseComparison> tukey_hsd(const RepeatedMeasures& data, double alpha) {
    data.validate();
    const double n = static_cast<double>(data.n_subjects());
    const double k = static_cast<double>(data.n_conditions());
    const auto ss = sums_of_squares(data);
    const double df_err = (k - 1.0) * (n - 1.0);
    const double ms_err = ss.ss_error / df_err;

    const auto pairs = condition_pairs(data.n_conditions());
    std::vector<PairwiseComparison> out;
    out.reserve(pairs.size());
    if (ms_err == 0.0) {
        for (auto [i, j] : pairs)
            if (ss.condition_means[i] != ss.condition_means[j])
                throw ZeroErrorVariance("tukey_hsd: error variance is zero");
    }
    const double se = ms_err > 0.0 ? std::sqrt(ms_err / n) : 0.0;
    for (auto [i, j] : pairs) {
        PairwiseComparison cmp;
        cmp.earlier_label = condition_label_as_int(data, i);
        cmp.later_label = condition_label_as_int(data, j);
        const double diff = ss.condition_means[j] - ss.condition_means[i];
        cmp.delta = se > 0.0 ? diff / se : 0.0;
        const double q = std::abs(cmp.delta);
        cmp.p_raw = q > 0.0 ? dist::studentized_range_sf(q, static_cast<int>(k), df_err) : 1.0;
        // The studentized-range p is already family-wise.
        cmp.p_adjusted = cmp.p_raw;
        cmp.significant = cmp.p_adjusted < alpha;
        out.push_back(cmp);
    }
    return out;
}

SignedRankResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y, int exact_threshold) {
    if (x.size() != y.size()) throw BadInput("wilcoxon_signed_rank: length mismatch");
    if (x.empty()) throw BadInput("wilcoxon_signed_rank: empty input");

    std::vector<double> diffs;
    diffs.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = y[i] - x[i];
        if (d != 0.0) diffs.push_back(d);
    }

    SignedRankResult res;
    if (diffs.empty()) {
        res.all_zero = true;
        res.p_value = 1.0;
        res.delta = 0.0;
        return res;
    }

    const int m = static_cast<int>(diffs.size());
    res.n_used = m;
    std::vector<double> abs_d(diffs.size());
    std::transform(diffs.begin(), diffs.end(), abs_d.begin(), [](double d) { return std::abs(d); });
    double tie_term = 0.0;
    const auto ranks = midranks(abs_d, &tie_term);

    double w_plus = 0.0;
    for (std::size_t i = 0; i < diffs.size(); ++i)
        if (diffs[i] > 0.0) w_plus += ranks[i];
    res.w_plus = w_plus;

    const double mm = static_cast<double>(m);
    const double mean = mm * (mm + 1.0) / 4.0;
    const double var = mm * (mm + 1.0) * (2.0 * mm + 1.0) / 24.0 - tie_term / 48.0;
    const double sd = std::sqrt(var);
    res.delta = sd > 0.0 ? (w_plus - mean) / sd : 0.0;

    if (m <= exact_threshold) {
        res.exact = true;
        // Distribution of W+ under random signs, on doubled ranks so midranks
        // become integers. counts[s] = #sign assignments with doubled sum s.
        std::vector<int> doubled(ranks.size());
        long long total = 0;
        for (std::size_t i = 0; i < ranks.size(); ++i) {
            doubled[i] = static_cast<int>(std::llround(2.0 * ranks[i]));
            total += doubled[i];
        }
        std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
        counts[0] = 1.0;
        long long reach = 0;
        for (int r : doubled) {
            reach += r;
            for (long long s = reach; s >= r; --s) counts[static_cast<std::size_t>(s)] += counts[static_cast<std::size_t>(s - r)];
        }
        const double denom = std::ldexp(1.0, m);  // 2^m
        const long long w2 = std::llround(2.0 * w_plus);
        double le = 0.0, ge = 0.0;
        for (long long s = 0; s <= total; ++s) {
            if (s <= w2) le += counts[static_cast<std::size_t>(s)];
            if (s >= w2) ge += counts[static_cast<std::size_t>(s)];
        }
        res.p_value = std::min(1.0, 2.0 * std::min(le, ge) / denom);
    } else {
        double z = 0.0;
        if (sd > 0.0) {
            if (w_plus > mean) {
                z = (w_plus - mean - 0.5) / sd;
            } else if (w_plus < mean) {
                z = (w_plus - mean + 0.5) / sd;
            }
        }
        res.p_value = std::min(1.0, 2.0 * dist::normal_sf(std::abs(z)));
    }
    return res;
}

std::vector<double> bonferroni_adjust(std::span<const double> p_values) {
    const double m = static_cast<double>(p_values.size());
    std::vector<double> out;
    out.reserve(p_values.size());
    for (double p : p_values) {
        if (p < 0.0 || p > 1.0) throw BadInput("bonferroni_adjust: p outside [0, 1]");
        out.push_back(std::min(1.0, m * p));
    }
    return out;
}

Trend classify_trend(const OmnibusResult& omnibus, std::span<const PairwiseComparison> pairwise, double alpha) {
    if (omnibus.p_value >= alpha) return Trend::stay;
    bool any = false;
    bool any_positive = false;
    bool any_nonpositive = false;
    bool any_negative = false;
    bool any_nonnegative = false;
    for (const auto& cmp : pairwise) {
        if (!cmp.significant) continue;
        any = true;
        if (cmp.delta > 0.0) any_positive = true;
        if (cmp.delta <= 0.0) any_nonpositive = true;
        if (cmp.delta < 0.0) any_negative = true;
        if (cmp.delta >= 0.0) any_nonnegative = true;
    }
    if (!any) return Trend::stay;
    if (any_positive && !any_nonpositive) return Trend::up;
    if (any_negative && !any_nonnegative) return Trend::down;
    return Trend::random;
}

FactorAnalysis analyze_factor(std::span<const FactorSample> samples, double alpha) {
    if (samples.empty()) throw InsufficientData("analyze_factor: no samples");

    const std::string& factor_id = samples.front().factor_id;
    const std::string& questionnaire_id = samples.front().questionnaire_id;
    std::map<std::pair<std::string, int>, std::array<std::optional<double>, 3>> units;
    for (const auto& s : samples) {
        if (s.factor_id != factor_id) throw BadInput("analyze_factor: mixed factor ids");
        if (s.stage < 1 || s.stage > 3) throw BadInput("analyze_factor: stage outside 1..3");
        units[{s.participant_id, s.repetition}][static_cast<std::size_t>(s.stage - 1)] = s.value;
    }

    RepeatedMeasures data;
    data.condition_labels = {"12", "24", "36"};
    for (const auto& [key, stages] : units) {
        if (!stages[0] || !stages[1] || !stages[2]) continue;  // listwise drop
        std::ostringstream id;
        id << key.first << "#r" << key.second;
        data.subject_ids.push_back(id.str());
        data.values.push_back({*stages[0], *stages[1], *stages[2]});
    }
    if (data.values.size() < 3) throw InsufficientData("analyze_factor: fewer than 3 complete subjects");

    FactorAnalysis analysis;
    analysis.questionnaire_id = questionnaire_id;
    analysis.factor_id = factor_id;
    analysis.alpha = alpha;
    analysis.n_complete_subjects = static_cast<int>(data.values.size());

    std::vector<double> pooled;
    pooled.reserve(data.values.size() * 3);
    for (const auto& row : data.values) pooled.insert(pooled.end(), row.begin(), row.end());

    const bool constant = std::all_of(pooled.begin(), pooled.end(), [&](double v) { return v == pooled.front(); });
    if (constant) {
        analysis.constant_input = true;
        analysis.trend = Trend::stay;
        return analysis;
    }

    // Normality gate on the pooled per-factor sample. Shapiro-Wilk caps at
    // n = 5000, so larger pools are thinned by an even deterministic stride.
    std::vector<double> gate = pooled;
    if (gate.size() > 5000) {
        const std::size_t stride = (gate.size() + 4999) / 5000;
        std::vector<double> thinned;
        thinned.reserve(5000);
        for (std::size_t i = 0; i < gate.size(); i += stride) thinned.push_back(gate[i]);
        gate = std::move(thinned);
    }
    analysis.normality = shapiro_wilk(gate);

    if (analysis.normality->p_value >= alpha) {
        analysis.omnibus = rm_anova(data);
        if (analysis.omnibus->p_value < alpha) analysis.pairwise = tukey_hsd(data, alpha);
    } else {
        analysis.omnibus = friedman(data);
        if (analysis.omnibus->p_value < alpha) {
            const std::size_t n = data.values.size();
            auto column = [&](std::size_t j) {
                std::vector<double> col(n);
                for (std::size_t i = 0; i < n; ++i) col[i] = data.values[i][j];
                return col;
            };
            const auto s1 = column(0), s2 = column(1), s3 = column(2);
            struct PairSpec {
                int earlier, later;
                const std::vector<double>*x, *y;
            };
            const PairSpec specs[3] = {{12, 24, &s1, &s2}, {24, 36, &s2, &s3}, {12, 36, &s1, &s3}};
            std::vector<double> raw;
            for (const auto& spec : specs) {
                const auto res = wilcoxon_signed_rank(*spec.x, *spec.y);
                PairwiseComparison cmp;
                cmp.earlier_label = spec.earlier;
                cmp.later_label = spec.later;
                cmp.delta = res.delta;
                cmp.p_raw = res.p_value;
                analysis.pairwise.push_back(cmp);
                raw.push_back(res.p_value);
            }
            const auto adjusted = bonferroni_adjust(raw);
            for (std::size_t i = 0; i < adjusted.size(); ++i) {
                analysis.pairwise[i].p_adjusted = adjusted[i];
                analysis.pairwise[i].significant = adjusted[i] < alpha;
            }
        }
    }
    analysis.trend = classify_trend(*analysis.omnibus, analysis.pairwise, alpha);
    return analysis;
}

}  // namespace psylab::stats

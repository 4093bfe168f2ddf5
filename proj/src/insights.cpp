// SPDX-License-Identifier: Apache-2.0
#include <dex/insights.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dex {

std::string_view insight_type_name(InsightType type)
{
    switch (type)
    {
        case InsightType::Trend: return "trend";
        case InsightType::Outlier: return "outlier";
        case InsightType::ChangePoint: return "change_point";
        case InsightType::Top1: return "top1";
        case InsightType::Correlation: return "correlation";
        case InsightType::Unimodality: return "unimodality";
        case InsightType::Summary: return "summary";
        case InsightType::Comparison: return "comparison";
        case InsightType::Explanation: return "explanation";
    }
    return "unknown";
}

std::optional<InsightType> parse_insight_type(std::string_view text)
{
    for (auto t: {InsightType::Trend, InsightType::Outlier, InsightType::ChangePoint, InsightType::Top1,
                  InsightType::Correlation, InsightType::Unimodality, InsightType::Summary, InsightType::Comparison,
                  InsightType::Explanation})
        if (insight_type_name(t) == text)
            return t;
    return std::nullopt;
}

bool is_compound_type(InsightType type) noexcept
{
    return type == InsightType::Summary || type == InsightType::Comparison || type == InsightType::Explanation;
}

namespace {

std::string direction_name(Direction d)
{
    return d == Direction::Rising ? "rising" : "falling";
}

std::string extreme_name(ExtremeKind k)
{
    return k == ExtremeKind::Peak ? "peak" : "valley";
}

std::string property_key(const InsightProperty& property)
{
    return std::visit(
        [](const auto& p) -> std::string {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, TrendProperty>)
                return direction_name(p.direction);
            else if constexpr (std::is_same_v<P, OutlierProperty> || std::is_same_v<P, ChangePointProperty>)
                return p.breakdown_value;
            else if constexpr (std::is_same_v<P, Top1Property>)
                return p.leader_value;
            else if constexpr (std::is_same_v<P, CorrelationProperty>)
                return p.other_ae.key();
            else if constexpr (std::is_same_v<P, UnimodalityProperty>)
                return extreme_name(p.extreme_kind) + "@" + p.extreme_value;
            else
                return {};
        },
        property);
}

double squash(double x)
{
    if (std::isinf(x))
        return 1.0;
    return x / (1.0 + x);
}

} // namespace

std::string comparison_key(const Insight& insight)
{
    if (insight.kind == InsightKind::Compound)
        return insight.id;
    return property_key(insight.property);
}

std::string basic_insight_id(InsightType type, const AnalysisEntity& ae, std::string_view property_key)
{
    std::string canonical = std::string(insight_type_name(type)) + "|" + ae.key() + "|" + std::string(property_key);
    return "ins-" + hex64(fnv1a64(canonical));
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json property_json(const InsightProperty& property)
{
    return std::visit(
        [](const auto& p) -> nlohmann::json {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, TrendProperty>)
                return {{"direction", direction_name(p.direction)}, {"slope", p.slope}, {"p_value", p.p_value}};
            else if constexpr (std::is_same_v<P, OutlierProperty>)
                return {{"breakdown_value", p.breakdown_value}, {"deviation_score", p.deviation_score}};
            else if constexpr (std::is_same_v<P, ChangePointProperty>)
                return {{"breakdown_value", p.breakdown_value}, {"pre_mean", p.pre_mean}, {"post_mean", p.post_mean}};
            else if constexpr (std::is_same_v<P, Top1Property>)
                return {{"leader_value", p.leader_value}, {"dominance_ratio", p.dominance_ratio}};
            else if constexpr (std::is_same_v<P, CorrelationProperty>)
                return {{"other_ae", to_json(p.other_ae)}, {"r", p.r}};
            else if constexpr (std::is_same_v<P, UnimodalityProperty>)
                return {{"extreme_value", p.extreme_value}, {"extreme_kind", extreme_name(p.extreme_kind)}};
            else if constexpr (std::is_same_v<P, FamilyProperty>)
            {
                auto exceptions = nlohmann::json::array();
                for (const auto& e: p.exceptions)
                    exceptions.push_back(
                        {{"label", e.label}, {"child", e.child ? nlohmann::json(*e.child) : nlohmann::json(nullptr)}});
                return {
                    {"axis", p.axis},
                    {"reference_type", insight_type_name(p.reference_type)},
                    {"reference_key", p.reference_key},
                    {"verified_ratio", p.verified_ratio},
                    {"conforming", p.conforming},
                    {"exceptions", std::move(exceptions)},
                };
            }
            else
            {
                return {
                    {"cause", {{"dim", p.cause.dimension}, {"val", p.cause.value}}},
                    {"residual_score", p.residual_score},
                    {"anomaly_score", p.anomaly_score},
                    {"strength", p.strength},
                    {"excluded_fraction", p.excluded_fraction},
                    {"target", p.target},
                    {"target_type", insight_type_name(p.target_type)},
                    {"target_value", p.target_value},
                };
            }
        },
        property);
}

InsightType require_type(const nlohmann::json& j)
{
    auto t = parse_insight_type(j.get<std::string>());
    if (!t)
        throw ValidationError("unknown insight type '" + j.get<std::string>() + "'");
    return *t;
}

InsightProperty property_from_json(InsightType type, const nlohmann::json& j)
{
    switch (type)
    {
        case InsightType::Trend:
            return TrendProperty {j.at("direction") == "rising" ? Direction::Rising : Direction::Falling,
                                  j.at("slope").get<double>(), j.at("p_value").get<double>()};
        case InsightType::Outlier:
            return OutlierProperty {j.at("breakdown_value").get<std::string>(), j.at("deviation_score").get<double>()};
        case InsightType::ChangePoint:
            return ChangePointProperty {j.at("breakdown_value").get<std::string>(), j.at("pre_mean").get<double>(),
                                        j.at("post_mean").get<double>()};
        case InsightType::Top1:
            return Top1Property {j.at("leader_value").get<std::string>(), j.at("dominance_ratio").get<double>()};
        case InsightType::Correlation:
            return CorrelationProperty {analysis_entity_from_json(j.at("other_ae")), j.at("r").get<double>()};
        case InsightType::Unimodality:
            return UnimodalityProperty {j.at("extreme_value").get<std::string>(),
                                        j.at("extreme_kind") == "peak" ? ExtremeKind::Peak : ExtremeKind::Valley};
        case InsightType::Summary:
        case InsightType::Comparison:
        {
            FamilyProperty p;
            p.axis = j.at("axis").get<std::string>();
            p.reference_type = require_type(j.at("reference_type"));
            p.reference_key = j.at("reference_key").get<std::string>();
            p.verified_ratio = j.at("verified_ratio").get<double>();
            p.conforming = j.at("conforming").get<std::vector<std::string>>();
            for (const auto& e: j.at("exceptions"))
            {
                FamilyException ex {e.at("label").get<std::string>(), std::nullopt};
                if (!e.at("child").is_null())
                    ex.child = e.at("child").get<std::string>();
                p.exceptions.push_back(std::move(ex));
            }
            return p;
        }
        case InsightType::Explanation:
        {
            ExplanationProperty p;
            p.cause = {j.at("cause").at("dim").get<std::string>(), j.at("cause").at("val").get<std::string>()};
            p.residual_score = j.at("residual_score").get<double>();
            p.anomaly_score = j.at("anomaly_score").get<double>();
            p.strength = j.at("strength").get<double>();
            p.excluded_fraction = j.at("excluded_fraction").get<double>();
            p.target = j.at("target").get<std::string>();
            p.target_type = require_type(j.at("target_type"));
            p.target_value = j.at("target_value").get<std::string>();
            return p;
        }
    }
    throw ValidationError("unsupported insight type");
}

} // namespace

nlohmann::json to_json(const Insight& insight)
{
    return {
        {"id", insight.id},
        {"ae", to_json(insight.ae)},
        {"type", insight_type_name(insight.type)},
        {"property", property_json(insight.property)},
        {"score", insight.score},
        {"kind", insight.kind == InsightKind::Basic ? "basic" : "compound"},
        {"children", insight.children},
        {"text", insight.text},
    };
}

Insight insight_from_json(const nlohmann::json& j)
{
    Insight insight;
    insight.id = j.at("id").get<std::string>();
    insight.ae = analysis_entity_from_json(j.at("ae"));
    insight.type = require_type(j.at("type"));
    insight.property = property_from_json(insight.type, j.at("property"));
    insight.score = j.at("score").get<double>();
    insight.kind = j.at("kind") == "basic" ? InsightKind::Basic : InsightKind::Compound;
    insight.children = j.at("children").get<std::vector<std::string>>();
    insight.text = j.value("text", std::string {});
    return insight;
}

// ---------------------------------------------------------------------------
// Statistics

namespace stats {

double median(std::vector<double> values)
{
    if (values.empty())
        return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double robust_sigma(const std::vector<double>& values, const DetectorConfig& config)
{
    const double med = median(values);
    std::vector<double> deviations;
    deviations.reserve(values.size());
    for (double v: values)
        deviations.push_back(std::fabs(v - med));
    const double mad = median(deviations);
    if (mad > 0.0)
        return config.mad_consistency * mad;
    const double mean_ad = std::accumulate(deviations.begin(), deviations.end(), 0.0) /
                           static_cast<double>(std::max<std::size_t>(1, deviations.size()));
    return config.mean_ad_consistency * mean_ad;
}

long mann_kendall_s(const std::vector<double>& values)
{
    long s = 0;
    for (std::size_t i = 0; i < values.size(); ++i)
        for (std::size_t j = i + 1; j < values.size(); ++j)
            s += (values[j] > values[i]) - (values[j] < values[i]);
    return s;
}

double ols_slope(const std::vector<double>& values)
{
    const double n = static_cast<double>(values.size());
    if (values.size() < 2)
        return 0.0;
    const double x_mean = (n - 1.0) / 2.0;
    const double y_mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
    {
        const double dx = static_cast<double>(i) - x_mean;
        sxy += dx * (values[i] - y_mean);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

namespace {

// splitmix64: small, portable, and fully specified (std::shuffle is not).
struct SplitMix
{
    std::uint64_t state;

    std::uint64_t next()
    {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t below(std::uint64_t bound)
    {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do
            x = next();
        while (x >= limit);
        return x % bound;
    }
};

// Half the permutations are drawn at random, the other half compose them with
// index reversal, so the set is closed under reversal and the p-value of a
// reversed series is exactly the same.
std::vector<std::vector<std::size_t>> permutation_set(std::size_t n, const DetectorConfig& config)
{
    SplitMix rng {config.seed ^ (0xA5A5A5A5ULL * (n + 1))};
    const std::size_t drawn = std::max<std::size_t>(1, config.trend_permutations / 2);
    std::vector<std::vector<std::size_t>> perms;
    perms.reserve(2 * drawn);
    for (std::size_t k = 0; k < drawn; ++k)
    {
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), std::size_t {0});
        for (std::size_t i = n; i > 1; --i)
            std::swap(p[i - 1], p[rng.below(i)]);
        perms.push_back(p);
        for (auto& i: p)
            i = n - 1 - i;
        perms.push_back(std::move(p));
    }
    return perms;
}

} // namespace

double trend_p_value(const std::vector<double>& values, const DetectorConfig& config)
{
    const long observed = std::labs(mann_kendall_s(values));
    if (observed == 0)
        return 1.0;
    const auto perms = permutation_set(values.size(), config);
    std::size_t at_least = 0;
    std::vector<double> shuffled(values.size());
    for (const auto& p: perms)
    {
        for (std::size_t i = 0; i < p.size(); ++i)
            shuffled[i] = values[p[i]];
        at_least += std::labs(mann_kendall_s(shuffled)) >= observed;
    }
    return static_cast<double>(1 + at_least) / static_cast<double>(1 + perms.size());
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() != b.size() || a.size() < 2)
        return std::nullopt;
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0)
        return std::nullopt;
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

} // namespace stats

// ---------------------------------------------------------------------------
// Detectors

namespace {

bool is_constant(const std::vector<double>& v)
{
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

Insight make_basic(InsightType type, const AnalysisEntity& ae, InsightProperty property, double score)
{
    Insight insight;
    insight.id = basic_insight_id(type, ae, property_key(property));
    insight.ae = ae;
    insight.type = type;
    insight.property = std::move(property);
    insight.score = std::clamp(score, 0.0, 1.0);
    insight.kind = InsightKind::Basic;
    return insight;
}

double residual_sigma(const std::vector<double>& y, double slope)
{
    const double n = static_cast<double>(y.size());
    const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
    const double x_mean = (n - 1.0) / 2.0;
    double ssr = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
    {
        const double fit = y_mean + slope * (static_cast<double>(i) - x_mean);
        ssr += (y[i] - fit) * (y[i] - fit);
    }
    return y.size() > 2 ? std::sqrt(ssr / (n - 2.0)) : 0.0;
}

// |slope| sqrt(n) / residual sigma; infinite for an exact line.
double trend_strength(const std::vector<double>& y, double slope)
{
    const double sigma = residual_sigma(y, slope);
    double scale = 0.0;
    for (double v: y)
        scale = std::max(scale, std::fabs(v));
    if (sigma <= 1e-12 * std::max(1.0, scale))
        return std::numeric_limits<double>::infinity();
    return std::fabs(slope) * std::sqrt(static_cast<double>(y.size())) / sigma;
}

std::optional<Insight> detect_trend(const SeriesResult& series, const AnalysisEntity& ae, const DetectorConfig& config)
{
    if (!series.ordered || series.size() < config.trend_min_groups)
        return std::nullopt;
    const auto y = series.values();
    if (is_constant(y))
        return std::nullopt;
    const long s = stats::mann_kendall_s(y);
    const double slope = stats::ols_slope(y);
    if (s == 0 || slope == 0.0 || (s > 0) != (slope > 0.0))
        return std::nullopt;
    const double p = stats::trend_p_value(y, config);
    if (p > config.trend_alpha)
        return std::nullopt;
    const double t = trend_strength(y, slope);
    const double score = std::isinf(t) ? 1.0 : t / (t + config.trend_score_scale);
    return make_basic(InsightType::Trend, ae,
                      TrendProperty {slope > 0 ? Direction::Rising : Direction::Falling, slope, p}, score);
}

/// Every group at or beyond the threshold, most extreme first (ties by position).
std::vector<Insight> detect_outliers(const SeriesResult& series, const AnalysisEntity& ae,
                                     const DetectorConfig& config)
{
    std::vector<Insight> out;
    if (series.size() < config.outlier_min_groups)
        return out;
    const auto y = series.values();
    const double sigma = stats::robust_sigma(y, config);
    if (sigma <= 0.0)
        return out;
    const double med = stats::median(y);
    std::vector<std::pair<double, std::size_t>> flagged;
    for (std::size_t i = 0; i < y.size(); ++i)
    {
        const double z = (y[i] - med) / sigma;
        if (std::fabs(z) >= config.outlier_threshold)
            flagged.emplace_back(z, i);
    }
    std::stable_sort(flagged.begin(), flagged.end(),
                     [](const auto& a, const auto& b) { return std::fabs(a.first) > std::fabs(b.first); });
    for (const auto& [z, i]: flagged)
        out.push_back(make_basic(InsightType::Outlier, ae, OutlierProperty {series.groups[i].label, z},
                                 squash(std::fabs(z) / 6.0)));
    return out;
}

std::optional<Insight> detect_outlier(const SeriesResult& series, const AnalysisEntity& ae,
                                      const DetectorConfig& config)
{
    auto all = detect_outliers(series, ae, config);
    if (all.empty())
        return std::nullopt;
    return std::move(all.front());
}

struct Split
{
    std::size_t at = 0;
    double gap = 0.0;
    double pre_mean = 0.0;
    double post_mean = 0.0;
    double pooled = 0.0;
};

Split split_gap(const std::vector<double>& y, std::size_t k)
{
    const auto mid = y.begin() + static_cast<std::ptrdiff_t>(k);
    const double pre = std::accumulate(y.begin(), mid, 0.0) / static_cast<double>(k);
    const double post = std::accumulate(mid, y.end(), 0.0) / static_cast<double>(y.size() - k);
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i)
    {
        const double m = i < k ? pre : post;
        ss += (y[i] - m) * (y[i] - m);
    }
    const double pooled = std::sqrt(ss / static_cast<double>(y.size() - 2));
    const double diff = std::fabs(post - pre);
    double gap = 0.0;
    if (pooled > 1e-12 * std::max({1.0, std::fabs(pre), std::fabs(post)}))
        gap = diff / pooled;
    else if (diff > 0.0)
        gap = std::numeric_limits<double>::infinity();
    return {k, gap, pre, post, pooled};
}

std::optional<Insight> detect_change_point(const SeriesResult& series, const AnalysisEntity& ae,
                                           const DetectorConfig& config)
{
    const std::size_t m = std::max<std::size_t>(1, config.changepoint_min_segment);
    if (!series.ordered || series.size() < config.changepoint_min_groups || series.size() < 2 * m)
        return std::nullopt;
    const auto y = series.values();
    if (is_constant(y))
        return std::nullopt;
    Split best;
    for (std::size_t k = m; k + m <= y.size(); ++k)
    {
        auto s = split_gap(y, k);
        if (s.gap > best.gap)
            best = s;
    }
    if (best.gap < config.changepoint_threshold)
        return std::nullopt;
    if (best.pooled >= residual_sigma(y, stats::ols_slope(y)))
        return std::nullopt;
    return make_basic(InsightType::ChangePoint, ae,
                      ChangePointProperty {series.groups[best.at].label, best.pre_mean, best.post_mean},
                      squash(best.gap / config.changepoint_threshold));
}

std::optional<Insight> detect_top1(const SeriesResult& series, const AnalysisEntity& ae, const DetectorConfig& config)
{
    if (series.size() < config.top1_min_groups)
        return std::nullopt;
    std::vector<std::size_t> order(series.size());
    std::iota(order.begin(), order.end(), std::size_t {0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return series.groups[a].value > series.groups[b].value; });
    const double v1 = series.groups[order[0]].value;
    const double v2 = series.groups[order[1]].value;
    const double vmin = series.groups[order.back()].value;

    double dominance = 0.0;
    double x = 0.0;
    if (ae.aggregate == Aggregate::Avg)
    {
        const double lead = v1 - v2;
        const double runner_margin = v2 - vmin;
        if (lead <= 0.0 || lead < config.top1_ratio * runner_margin)
            return std::nullopt;
        const auto& g1 = series.groups[order[0]];
        const auto& g2 = series.groups[order[1]];
        const double se = std::sqrt(g1.spread * g1.spread / static_cast<double>(std::max<std::size_t>(1, g1.rows)) +
                                    g2.spread * g2.spread / static_cast<double>(std::max<std::size_t>(1, g2.rows)));
        if (lead < config.top1_min_z * se)
            return std::nullopt;
        double total = 0.0;
        for (const auto& g: series.groups)
            total += g.value - vmin;
        dominance = (v1 - vmin) / total;
        x = runner_margin > 0.0 ? lead / (config.top1_ratio * runner_margin) : std::numeric_limits<double>::infinity();
        if (se > 0.0)
            x = std::min(x, lead / (config.top1_min_z * se));
    }
    else
    {
        if (v1 <= 0.0 || v1 < config.top1_ratio * v2)
            return std::nullopt;
        double positive_total = 0.0;
        for (const auto& g: series.groups)
            positive_total += std::max(0.0, g.value);
        dominance = v1 / positive_total;
        x = v2 > 0.0 ? (v1 / v2 - 1.0) / (config.top1_ratio - 1.0) : std::numeric_limits<double>::infinity();
    }
    return make_basic(InsightType::Top1, ae, Top1Property {series.groups[order[0]].label, std::clamp(dominance, 0.0, 1.0)},
                      squash(x));
}

std::optional<Insight> detect_unimodality(const SeriesResult& series, const AnalysisEntity& ae,
                                          const DetectorConfig& config)
{
    if (!series.ordered || series.size() < config.unimodality_min_groups)
        return std::nullopt;
    const auto y = series.values();
    const std::size_t n = y.size();
    const std::size_t run = std::max<std::size_t>(1, config.unimodality_min_run);

    auto check = [&](ExtremeKind kind) -> std::optional<Insight> {
        const bool peak = kind == ExtremeKind::Peak;
        const auto it = peak ? std::max_element(y.begin(), y.end()) : std::min_element(y.begin(), y.end());
        const auto at = static_cast<std::size_t>(it - y.begin());
        if (at < run || n - 1 - at < run)
            return std::nullopt;
        for (std::size_t i = 1; i <= at; ++i)
            if (peak ? !(y[i] > y[i - 1]) : !(y[i] < y[i - 1]))
                return std::nullopt;
        for (std::size_t i = at + 1; i < n; ++i)
            if (peak ? !(y[i] < y[i - 1]) : !(y[i] > y[i - 1]))
                return std::nullopt;
        const double range = *std::max_element(y.begin(), y.end()) - *std::min_element(y.begin(), y.end());
        const double prominence = std::min(std::fabs(y[at] - y.front()), std::fabs(y[at] - y.back()));
        return make_basic(InsightType::Unimodality, ae, UnimodalityProperty {series.groups[at].label, kind},
                          range > 0.0 ? prominence / range : 0.0);
    };
    if (auto found = check(ExtremeKind::Peak))
        return found;
    return check(ExtremeKind::Valley);
}

std::optional<Insight> run_detector(InsightType type, const SeriesResult& series, const AnalysisEntity& ae,
                                    const DetectorConfig& config)
{
    switch (type)
    {
        case InsightType::Trend: return detect_trend(series, ae, config);
        case InsightType::Outlier: return detect_outlier(series, ae, config);
        case InsightType::ChangePoint: return detect_change_point(series, ae, config);
        case InsightType::Top1: return detect_top1(series, ae, config);
        case InsightType::Unimodality: return detect_unimodality(series, ae, config);
        default: return std::nullopt;
    }
}

} // namespace

std::vector<Insight> detect_all(const SeriesResult& series, const AnalysisEntity& ae, const DetectorConfig& config)
{
    std::vector<Insight> out;
    if (series.empty())
        return out;
    for (auto type: {InsightType::Trend, InsightType::Outlier, InsightType::ChangePoint, InsightType::Top1,
                     InsightType::Unimodality})
    {
        if (type == InsightType::Outlier)
        {
            for (auto& o: detect_outliers(series, ae, config))
                out.push_back(std::move(o));
            continue;
        }
        if (auto found = run_detector(type, series, ae, config))
            out.push_back(std::move(*found));
    }
    return out;
}

std::optional<Detection> detect_one(const SeriesResult& series, const AnalysisEntity& ae, InsightType type,
                                    const InsightProperty& reference, const DetectorConfig& config)
{
    if (is_compound_type(type))
        throw ValidationError("detect_one needs a basic insight type");
    auto found = run_detector(type, series, ae, config);
    if (!found)
        return std::nullopt;
    bool match = true;
    if (type == InsightType::Trend)
    {
        const auto* ref = std::get_if<TrendProperty>(&reference);
        const auto& got = std::get<TrendProperty>(found->property);
        match = ref && ref->direction == got.direction;
    }
    else if (type == InsightType::Unimodality)
    {
        const auto* ref = std::get_if<UnimodalityProperty>(&reference);
        const auto& got = std::get<UnimodalityProperty>(found->property);
        match = ref && ref->extreme_kind == got.extreme_kind;
    }
    return Detection {std::move(*found), match};
}

std::optional<Insight> correlate(const SeriesResult& a, const AnalysisEntity& a_ae, const SeriesResult& b,
                                 const AnalysisEntity& b_ae, const DetectorConfig& config)
{
    std::vector<double> xs;
    std::vector<double> ys;
    for (const auto& g: a.groups)
        if (auto j = b.index_of(g.label))
        {
            xs.push_back(g.value);
            ys.push_back(b.groups[*j].value);
        }
    if (xs.size() < config.correlation_min_points)
        return std::nullopt;
    auto r = stats::pearson(xs, ys);
    if (!r || std::fabs(*r) < config.correlation_threshold)
        return std::nullopt;
    const double t = std::atanh(std::min(std::fabs(*r), 1.0 - 1e-15)) * std::sqrt(static_cast<double>(xs.size() - 3));
    return make_basic(InsightType::Correlation, a_ae, CorrelationProperty {b_ae, *r},
                      t / (t + config.correlation_score_scale));
}

std::optional<double> deviation_statistic(const Insight& target, const SeriesResult& series,
                                          const DetectorConfig& config)
{
    const auto y = series.values();
    switch (target.type)
    {
        case InsightType::Outlier:
        {
            const auto& p = std::get<OutlierProperty>(target.property);
            auto at = series.index_of(p.breakdown_value);
            if (!at || y.size() < 3)
                return std::nullopt;
            const double med = stats::median(y);
            const double sigma = stats::robust_sigma(y, config);
            const double dev = std::fabs(y[*at] - med);
            if (sigma <= 0.0)
                return dev > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
            return dev / sigma;
        }
        case InsightType::ChangePoint:
        {
            const auto& p = std::get<ChangePointProperty>(target.property);
            auto at = series.index_of(p.breakdown_value);
            if (!at || *at == 0 || *at >= y.size() || y.size() < 3)
                return std::nullopt;
            return split_gap(y, *at).gap;
        }
        case InsightType::Trend:
        {
            const auto& p = std::get<TrendProperty>(target.property);
            if (y.size() < 3)
                return std::nullopt;
            const double slope = stats::ols_slope(y);
            const double signed_slope = p.direction == Direction::Rising ? slope : -slope;
            if (signed_slope <= 0.0)
                return 0.0;
            return trend_strength(y, slope);
        }
        default: return std::nullopt;
    }
}

} // namespace dex

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Insight representation <AE, Type, Property> and the basic insight
// detectors that run over a single AE's series.

#include <dex/dataset.hpp>

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace dex {

enum class InsightType
{
    Trend,
    Outlier,
    ChangePoint,
    Top1,
    Correlation,
    Unimodality,
    // compound only
    Summary,
    Comparison,
    Explanation,
};

enum class InsightKind
{
    Basic,
    Compound,
};

std::string_view insight_type_name(InsightType type);
std::optional<InsightType> parse_insight_type(std::string_view text);
bool is_compound_type(InsightType type) noexcept;

enum class Direction
{
    Rising,
    Falling,
};

enum class ExtremeKind
{
    Peak,
    Valley,
};

struct TrendProperty
{
    Direction direction = Direction::Rising;
    double slope = 0.0;
    double p_value = 1.0;
};

struct OutlierProperty
{
    std::string breakdown_value;
    /// Signed robust z-score of the flagged group.
    double deviation_score = 0.0;
};

struct ChangePointProperty
{
    /// First breakdown value of the post-change segment.
    std::string breakdown_value;
    double pre_mean = 0.0;
    double post_mean = 0.0;
};

struct Top1Property
{
    std::string leader_value;
    double dominance_ratio = 0.0;
};

struct CorrelationProperty
{
    AnalysisEntity other_ae;
    double r = 0.0;
};

struct UnimodalityProperty
{
    std::string extreme_value;
    ExtremeKind extreme_kind = ExtremeKind::Peak;
};

struct FamilyException
{
    std::string label;
    /// Most salient insight of the non-conforming sibling, when one fired.
    std::optional<std::string> child;
};

/// Shared by Summary (siblings along an unconstrained dimension) and
/// Comparison (neighbors that vary one existing filter).
struct FamilyProperty
{
    std::string axis;
    InsightType reference_type = InsightType::Trend;
    /// Canonical description of the reference pattern, e.g. "rising".
    std::string reference_key;
    double verified_ratio = 0.0;
    std::vector<std::string> conforming;
    std::vector<FamilyException> exceptions;
};

struct ExplanationProperty
{
    Filter cause;
    /// Deviation statistic of the target after excluding `cause`.
    double residual_score = 0.0;
    /// Deviation statistic of the target on its own series.
    double anomaly_score = 0.0;
    double strength = 0.0;
    double excluded_fraction = 0.0;
    std::string target;
    InsightType target_type = InsightType::Outlier;
    /// Breakdown value the target flags (empty for trends).
    std::string target_value;
};

using InsightProperty = std::variant<TrendProperty, OutlierProperty, ChangePointProperty, Top1Property,
                                     CorrelationProperty, UnimodalityProperty, FamilyProperty, ExplanationProperty>;

struct Insight
{
    std::string id;
    AnalysisEntity ae;
    InsightType type = InsightType::Trend;
    InsightProperty property;
    double score = 0.0;
    InsightKind kind = InsightKind::Basic;
    std::vector<std::string> children;
    std::string text;
};

/// Value compared when deciding whether two insights say "the same thing"
/// (Trend direction, Top1 leader, flagged value, ...). Compounds return their id.
std::string comparison_key(const Insight& insight);

/// Deterministic id derived from the insight's content.
std::string basic_insight_id(InsightType type, const AnalysisEntity& ae, std::string_view property_key);

nlohmann::json to_json(const Insight& insight);
Insight insight_from_json(const nlohmann::json& j);

/// Thresholds and calibration for the basic detectors.
struct DetectorConfig
{
    std::uint64_t seed = 0x5EED5EEDULL;

    // Trend: OLS slope, significance from a permutation test on the
    // Mann-Kendall S statistic.
    std::size_t trend_min_groups = 5;
    std::size_t trend_permutations = 200;
    double trend_alpha = 0.05;
    /// score = t / (t + trend_score_scale), t = |slope| sqrt(n) / residual sigma
    double trend_score_scale = 3.0;

    // Outlier: robust z = (x - median) / (1.4826 MAD)
    std::size_t outlier_min_groups = 6;
    double outlier_threshold = 5.0;
    double mad_consistency = 1.4826;
    double mean_ad_consistency = 1.2533;

    // ChangePoint: best single split, gap = |mean_post - mean_pre| / pooled sigma
    // (the two-mean fit must also beat the OLS line)
    std::size_t changepoint_min_groups = 5;
    std::size_t changepoint_min_segment = 2;
    double changepoint_threshold = 2.6;

    // Top1: leader >= ratio x runner-up (share for SUM/COUNT, margin for AVG).
    // AVG leads must also clear top1_min_z standard errors of the two means.
    // score = x / (1 + x) with x = 1 at the threshold: (v1/v2 - 1) / (ratio - 1)
    // for SUM/COUNT, lead / (ratio x runner margin) capped by the z margin for AVG
    std::size_t top1_min_groups = 3;
    double top1_ratio = 1.25;
    double top1_min_z = 3.0;

    // Unimodality: one interior extremum with strictly monotone sides
    std::size_t unimodality_min_groups = 5;
    std::size_t unimodality_min_run = 2;

    // Correlation: Pearson r over aligned breakdown values
    std::size_t correlation_min_points = 5;
    double correlation_threshold = 0.7;
    /// score = t / (t + scale), t = atanh(|r|) sqrt(n - 3)
    double correlation_score_scale = 3.0;
};

/// Runs every applicable basic detector. Returned insights carry no text. Each
/// group past the outlier threshold yields its own Outlier, most extreme first.
std::vector<Insight> detect_all(const SeriesResult& series, const AnalysisEntity& ae, const DetectorConfig& config = {});

struct Detection
{
    Insight insight;
    /// Whether the insight matches the reference on the type's comparison key.
    bool match = false;
};

/// Runs one basic detector and compares against `reference`:
/// Trend same direction; Top1 any leader; Outlier/ChangePoint any flagged
/// point; Unimodality same extreme kind.
std::optional<Detection> detect_one(const SeriesResult& series, const AnalysisEntity& ae, InsightType type,
                                    const InsightProperty& reference, const DetectorConfig& config = {});

/// Pearson correlation of two series aligned on shared breakdown values.
std::optional<Insight> correlate(const SeriesResult& a, const AnalysisEntity& a_ae, const SeriesResult& b,
                                 const AnalysisEntity& b_ae, const DetectorConfig& config = {});

/// Deviation statistic an explanation tries to remove: |robust z| at the
/// flagged value (Outlier), normalized gap at the flagged split (ChangePoint),
/// signed standardized slope in the flagged direction (Trend). Absent when the
/// flagged value is missing from `series` or the type has no such statistic.
std::optional<double> deviation_statistic(const Insight& target, const SeriesResult& series,
                                          const DetectorConfig& config = {});

namespace stats {

double median(std::vector<double> values);

/// Robust scale: 1.4826 MAD, falling back to 1.2533 x mean absolute deviation
/// around the median when MAD is zero.
double robust_sigma(const std::vector<double>& values, const DetectorConfig& config = {});

/// Mann-Kendall S: sum over i<j of sign(x_j - x_i).
long mann_kendall_s(const std::vector<double>& values);

double ols_slope(const std::vector<double>& values);

/// Permutation p-value of |S| using the deterministic permutation set for (seed, n).
double trend_p_value(const std::vector<double>& values, const DetectorConfig& config = {});

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b);

} // namespace stats

} // namespace dex

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Natural-language templates, chart specifications and the final report.

#include <dex/dataset.hpp>
#include <dex/insights.hpp>

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace dex {

inline constexpr std::string_view kTemplateVersion = "v1";

/// Fills `{name}` placeholders from `fields`. Unknown placeholders are left as is.
std::string fill_template(std::string_view pattern, const std::vector<std::pair<std::string, std::string>>& fields);

/// " for School=A, Subject=Math", or "" for the whole dataset.
std::string subspace_clause(const Subspace& subspace);

/// "average Score", "total Sales", "record count".
std::string measure_phrase(const AnalysisEntity& ae);

std::string render_text(const Insight& insight);

// ---------------------------------------------------------------------------
// Charts

enum class Mark
{
    Line,
    Bar,
    Point,
};

std::string_view mark_name(Mark mark);

struct ChartAnnotation
{
    std::string kind; // outlier | changepoint | extreme
    std::string x;
    std::string label;

    friend bool operator==(const ChartAnnotation&, const ChartAnnotation&) = default;
};

struct ChartRow
{
    std::string x;
    double y = 0.0;
    std::string series;

    friend bool operator==(const ChartRow&, const ChartRow&) = default;
};

struct ChartSpec
{
    Mark mark = Mark::Bar;
    std::string x_field;
    bool x_ordered = false;
    std::string y_field;
    std::string y_aggregate;
    std::optional<std::string> series_field;
    std::vector<ChartAnnotation> annotations;
    std::string title;
    std::vector<ChartRow> data;

    friend bool operator==(const ChartSpec&, const ChartSpec&) = default;
};

nlohmann::json to_json(const ChartSpec& spec);
ChartSpec chart_from_json(const nlohmann::json& j);

/// Chart for a basic insight over its own evaluated series.
ChartSpec render_chart(const Insight& insight, const SeriesResult& series);

/// Chart for any insight; compounds evaluate their sibling/neighbor AEs.
ChartSpec render_chart(const Dataset& dataset, const Insight& insight);

// ---------------------------------------------------------------------------
// Report

struct ReportItem
{
    std::size_t rank = 0;
    Insight insight;
    ChartSpec chart;
};

struct Report
{
    std::string question;
    std::string narrative;
    std::vector<ReportItem> insights;
    std::string trace_ref;
    bool degraded = false;
};

nlohmann::json to_json(const Report& report);

/// Returns a narrative for a prompt, or nothing on failure.
using NarrativeFn = std::function<std::optional<std::string>(const std::string& prompt)>;

/// Deterministic narrative: sentences grouped by insight type, each tagged [#rank].
std::string template_narrative(const std::string& question, const std::vector<Insight>& top_k);

/// Prompt asking a language model for a narrative that cites insights by [#n].
std::string narrative_prompt(const std::string& question, const std::vector<Insight>& top_k);

/// Every [#n] tag in `narrative` names a rank in 1..count (and at least one is present when count > 0).
bool citations_valid(std::string_view narrative, std::size_t count);

/// [#n] tags in order of appearance.
std::vector<std::size_t> extract_citations(std::string_view narrative);

/// Builds the report. With `remote`, asks it for the narrative and falls back to
/// the template (marking the report degraded) when it fails or cites badly.
Report make_report(const Dataset& dataset, const std::string& question, const std::vector<Insight>& top_k,
                   const NarrativeFn& remote = {});

/// Self-contained Markdown export with chart data embedded as JSON blocks.
std::string report_markdown(const Report& report);

} // namespace dex

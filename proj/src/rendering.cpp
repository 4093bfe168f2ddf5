// SPDX-License-Identifier: Apache-2.0
#include <dex/rendering.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <regex>
#include <sstream>

namespace dex {

namespace {

using Fields = std::vector<std::pair<std::string, std::string>>;

// Templates, keyed by (type, branch). Wording changes must bump kTemplateVersion.
const std::map<std::string, std::string, std::less<>>& templates()
{
    static const std::map<std::string, std::string, std::less<>> table = {
        {"trend", "The {measure}{subspace} has been {direction} over {breakdown}."},
        {"outlier", "The {measure}{subspace} has an outlier at {breakdown}={value}, {side} than usual (robust z = {z})."},
        {"change_point", "The {measure}{subspace} shifts from {pre} to {post} starting at {breakdown}={value}."},
        {"top1.share", "{breakdown}={leader} has the Rank#1 {measure}{subspace}, with {share}% of the total."},
        {"top1.avg", "{breakdown}={leader} has the Rank#1 {measure}{subspace}, clearly ahead of the rest."},
        {"correlation",
         "The {measure}{subspace} is {sign} correlated with the {other_measure}{other_subspace} over {breakdown} "
         "(r = {r})."},
        {"unimodality.peak", "The {measure}{subspace} rises to a peak at {breakdown}={value} and falls afterwards."},
        {"unimodality.valley",
         "The {measure}{subspace} falls to a low at {breakdown}={value} and recovers afterwards."},
        {"summary.universal",
         "The {measure}{subspace} {pattern} for every {axis} ({members}); the pattern is universal among these AEs."},
        {"summary.some",
         "The {measure}{subspace} {pattern} for most {axis} values ({members}), barring {exceptions}; the pattern "
         "is present in some AEs."},
        {"comparison.universal", "Compared across {axis}, the {measure}{subspace} {pattern} for {members}."},
        {"comparison.some",
         "Compared across {axis}, the {measure}{subspace} {pattern} for {members}, except {exceptions}."},
        {"explanation.outlier",
         "The outlier at {breakdown}={value} in the {measure}{subspace} is caused by {cause}. When excluding "
         "{cause}, {value} is no longer an outlier."},
        {"explanation.change_point",
         "The change at {breakdown}={value} in the {measure}{subspace} is caused by {cause}. When excluding "
         "{cause}, the change at {value} disappears."},
        {"explanation.trend",
         "The trend in the {measure}{subspace} is caused by {cause}. When excluding {cause}, the trend fades."},
    };
    return table;
}

const std::string& pattern_of(std::string_view key)
{
    return templates().find(key)->second;
}

std::string number(double v)
{
    if (!std::isfinite(v))
        return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
    std::string s = format_fixed(v, std::fabs(v) >= 100.0 ? 1 : 2);
    if (s.find('.') != std::string::npos)
    {
        while (s.back() == '0')
            s.pop_back();
        if (s.back() == '.')
            s.pop_back();
    }
    if (s == "-0")
        s = "0";
    return s;
}

std::string join_list(const std::vector<std::string>& items)
{
    if (items.empty())
        return "none";
    if (items.size() == 1)
        return items[0];
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i)
    {
        if (i)
            out += i + 1 == items.size() ? " and " : ", ";
        out += items[i];
    }
    return out;
}

std::vector<std::string> qualified(const std::string& axis, const std::vector<std::string>& labels)
{
    std::vector<std::string> out;
    for (const auto& l: labels)
        out.push_back(axis + "=" + l);
    return out;
}

std::string pattern_phrase(InsightType type, const std::string& key, const std::string& breakdown)
{
    switch (type)
    {
        case InsightType::Trend:
            return std::string("has been ") + (key == "rising" ? "increasing" : "decreasing") + " over " + breakdown;
        case InsightType::Outlier: return "has an outlier over " + breakdown;
        case InsightType::ChangePoint: return "has a change point over " + breakdown;
        case InsightType::Top1: return "has a clear Rank#1 " + breakdown;
        case InsightType::Unimodality:
            return std::string(key.starts_with("peak") ? "peaks" : "bottoms out") + " over " + breakdown;
        default: return "shows the same pattern over " + breakdown;
    }
}

Fields base_fields(const AnalysisEntity& ae)
{
    return {
        {"measure", measure_phrase(ae)},
        {"subspace", subspace_clause(ae.subspace)},
        {"breakdown", ae.breakdown},
    };
}

} // namespace

std::string fill_template(std::string_view pattern, const Fields& fields)
{
    std::string out;
    out.reserve(pattern.size() + 32);
    std::size_t i = 0;
    while (i < pattern.size())
    {
        if (pattern[i] == '{')
        {
            const auto close = pattern.find('}', i);
            if (close != std::string_view::npos)
            {
                const auto name = pattern.substr(i + 1, close - i - 1);
                auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == name; });
                if (it != fields.end())
                {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += pattern[i++];
    }
    return out;
}

std::string subspace_clause(const Subspace& subspace)
{
    if (subspace.empty())
        return {};
    std::string out = " for ";
    for (std::size_t i = 0; i < subspace.size(); ++i)
    {
        if (i)
            out += ", ";
        out += subspace.filters()[i].dimension + "=" + subspace.filters()[i].value;
    }
    return out;
}

std::string measure_phrase(const AnalysisEntity& ae)
{
    switch (ae.aggregate)
    {
        case Aggregate::Avg: return "average " + ae.measure;
        case Aggregate::Sum: return "total " + ae.measure;
        case Aggregate::Count: return "record count";
    }
    return ae.measure;
}

std::string render_text(const Insight& insight)
{
    Fields f = base_fields(insight.ae);
    const auto& ae = insight.ae;
    switch (insight.type)
    {
        case InsightType::Trend:
        {
            const auto& p = std::get<TrendProperty>(insight.property);
            f.emplace_back("direction", p.direction == Direction::Rising ? "increasing" : "decreasing");
            return fill_template(pattern_of("trend"), f);
        }
        case InsightType::Outlier:
        {
            const auto& p = std::get<OutlierProperty>(insight.property);
            f.emplace_back("value", p.breakdown_value);
            f.emplace_back("side", p.deviation_score >= 0 ? "higher" : "lower");
            f.emplace_back("z", number(p.deviation_score));
            return fill_template(pattern_of("outlier"), f);
        }
        case InsightType::ChangePoint:
        {
            const auto& p = std::get<ChangePointProperty>(insight.property);
            f.emplace_back("value", p.breakdown_value);
            f.emplace_back("pre", number(p.pre_mean));
            f.emplace_back("post", number(p.post_mean));
            return fill_template(pattern_of("change_point"), f);
        }
        case InsightType::Top1:
        {
            const auto& p = std::get<Top1Property>(insight.property);
            f.emplace_back("leader", p.leader_value);
            if (ae.aggregate == Aggregate::Avg)
                return fill_template(pattern_of("top1.avg"), f);
            f.emplace_back("share", number(100.0 * p.dominance_ratio));
            return fill_template(pattern_of("top1.share"), f);
        }
        case InsightType::Correlation:
        {
            const auto& p = std::get<CorrelationProperty>(insight.property);
            f.emplace_back("sign", p.r >= 0 ? "positively" : "negatively");
            f.emplace_back("other_measure", measure_phrase(p.other_ae));
            const std::string other = subspace_clause(p.other_ae.subspace);
            f.emplace_back("other_subspace", other.empty() ? " overall" : other);
            f.emplace_back("r", number(p.r));
            return fill_template(pattern_of("correlation"), f);
        }
        case InsightType::Unimodality:
        {
            const auto& p = std::get<UnimodalityProperty>(insight.property);
            f.emplace_back("value", p.extreme_value);
            return fill_template(
                pattern_of(p.extreme_kind == ExtremeKind::Peak ? "unimodality.peak" : "unimodality.valley"), f);
        }
        case InsightType::Summary:
        case InsightType::Comparison:
        {
            const auto& p = std::get<FamilyProperty>(insight.property);
            std::vector<std::string> exception_labels;
            for (const auto& e: p.exceptions)
                exception_labels.push_back(e.label);
            const bool universal = p.exceptions.empty();
            f.emplace_back("pattern", pattern_phrase(p.reference_type, p.reference_key, ae.breakdown));
            f.emplace_back("axis", p.axis);
            if (insight.type == InsightType::Comparison)
            {
                Subspace rest;
                for (const auto& flt: ae.subspace.filters())
                    if (flt.dimension != p.axis)
                        rest = rest.with(flt);
                f[1].second = subspace_clause(rest);
                f.emplace_back("members", join_list(qualified(p.axis, p.conforming)));
                f.emplace_back("exceptions", join_list(qualified(p.axis, exception_labels)));
                return fill_template(pattern_of(universal ? "comparison.universal" : "comparison.some"), f);
            }
            f.emplace_back("members", join_list(qualified(p.axis, p.conforming)));
            f.emplace_back("exceptions", join_list(qualified(p.axis, exception_labels)));
            return fill_template(pattern_of(universal ? "summary.universal" : "summary.some"), f);
        }
        case InsightType::Explanation:
        {
            const auto& p = std::get<ExplanationProperty>(insight.property);
            f.emplace_back("value", p.target_value);
            f.emplace_back("cause", p.cause.dimension + "=" + p.cause.value);
            const char* key = p.target_type == InsightType::ChangePoint ? "explanation.change_point"
                              : p.target_type == InsightType::Trend     ? "explanation.trend"
                                                                        : "explanation.outlier";
            return fill_template(pattern_of(key), f);
        }
    }
    return {};
}

// ---------------------------------------------------------------------------
// Charts

std::string_view mark_name(Mark mark)
{
    switch (mark)
    {
        case Mark::Line: return "line";
        case Mark::Bar: return "bar";
        case Mark::Point: return "point";
    }
    return "bar";
}

namespace {

Mark parse_mark(const std::string& s)
{
    if (s == "line")
        return Mark::Line;
    if (s == "point")
        return Mark::Point;
    if (s == "bar")
        return Mark::Bar;
    throw ValidationError("unknown chart mark '" + s + "'");
}

std::string y_field(const AnalysisEntity& ae)
{
    return ae.aggregate == Aggregate::Count ? "count" : ae.measure;
}

ChartSpec base_chart(const AnalysisEntity& ae, bool ordered)
{
    ChartSpec spec;
    spec.mark = ordered ? Mark::Line : Mark::Bar;
    spec.x_field = ae.breakdown;
    spec.x_ordered = ordered;
    spec.y_field = y_field(ae);
    spec.y_aggregate = std::string(aggregate_name(ae.aggregate));
    std::string title = measure_phrase(ae) + " by " + ae.breakdown + subspace_clause(ae.subspace);
    title[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(title[0])));
    spec.title = std::move(title);
    return spec;
}

void append_series(ChartSpec& spec, const SeriesResult& series, const std::string& name)
{
    for (const auto& g: series.groups)
        spec.data.push_back({g.label, g.value, name});
}

bool has_x(const ChartSpec& spec, const std::string& x)
{
    return std::any_of(spec.data.begin(), spec.data.end(), [&](const ChartRow& r) { return r.x == x; });
}

void annotate(ChartSpec& spec, std::string kind, const std::string& x, std::string label)
{
    if (has_x(spec, x))
        spec.annotations.push_back({std::move(kind), x, std::move(label)});
}

} // namespace

nlohmann::json to_json(const ChartSpec& spec)
{
    auto annotations = nlohmann::json::array();
    for (const auto& a: spec.annotations)
        annotations.push_back({{"kind", a.kind}, {"x", a.x}, {"label", a.label}});
    auto data = nlohmann::json::array();
    for (const auto& r: spec.data)
    {
        nlohmann::json row = {{"x", r.x}, {"y", r.y}};
        if (spec.series_field)
            row["series"] = r.series;
        data.push_back(std::move(row));
    }
    return {
        {"mark", mark_name(spec.mark)},
        {"x", {{"field", spec.x_field}, {"ordered", spec.x_ordered}}},
        {"y", {{"field", spec.y_field}, {"aggregate", spec.y_aggregate}}},
        {"series", spec.series_field ? nlohmann::json(*spec.series_field) : nlohmann::json(nullptr)},
        {"annotations", std::move(annotations)},
        {"title", spec.title},
        {"data", std::move(data)},
    };
}

ChartSpec chart_from_json(const nlohmann::json& j)
{
    ChartSpec spec;
    spec.mark = parse_mark(j.at("mark").get<std::string>());
    spec.x_field = j.at("x").at("field").get<std::string>();
    spec.x_ordered = j.at("x").at("ordered").get<bool>();
    spec.y_field = j.at("y").at("field").get<std::string>();
    spec.y_aggregate = j.at("y").at("aggregate").get<std::string>();
    if (!j.at("series").is_null())
        spec.series_field = j.at("series").get<std::string>();
    for (const auto& a: j.at("annotations"))
        spec.annotations.push_back(
            {a.at("kind").get<std::string>(), a.at("x").get<std::string>(), a.at("label").get<std::string>()});
    spec.title = j.at("title").get<std::string>();
    for (const auto& r: j.at("data"))
        spec.data.push_back({r.at("x").get<std::string>(), r.at("y").get<double>(), r.value("series", std::string {})});
    return spec;
}

ChartSpec render_chart(const Insight& insight, const SeriesResult& series)
{
    ChartSpec spec = base_chart(insight.ae, series.ordered);
    append_series(spec, series, {});
    std::visit(
        [&](const auto& p) {
            using P = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<P, OutlierProperty>)
            {
                if (!series.ordered)
                    spec.mark = Mark::Bar;
                annotate(spec, "outlier", p.breakdown_value, "outlier");
            }
            else if constexpr (std::is_same_v<P, ChangePointProperty>)
                annotate(spec, "changepoint", p.breakdown_value, "change point");
            else if constexpr (std::is_same_v<P, UnimodalityProperty>)
                annotate(spec, "extreme", p.extreme_value, p.extreme_kind == ExtremeKind::Peak ? "peak" : "valley");
            else if constexpr (std::is_same_v<P, Top1Property>)
                spec.mark = Mark::Bar;
            else if constexpr (std::is_same_v<P, ExplanationProperty>)
            {
                if (!p.target_value.empty())
                    annotate(spec, p.target_type == InsightType::ChangePoint ? "changepoint" : "outlier",
                             p.target_value, insight_type_name(p.target_type).data());
            }
        },
        insight.property);
    return spec;
}

ChartSpec render_chart(const Dataset& dataset, const Insight& insight)
{
    const auto& ae = insight.ae;
    const auto own = evaluate(dataset, ae);
    switch (insight.type)
    {
        case InsightType::Summary:
        case InsightType::Comparison:
        {
            const auto& p = std::get<FamilyProperty>(insight.property);
            ChartSpec spec = base_chart(ae, own.ordered);
            spec.mark = own.ordered ? Mark::Line : Mark::Point;
            spec.series_field = p.axis;
            std::vector<std::string> members = p.conforming;
            for (const auto& e: p.exceptions)
                members.push_back(e.label);
            for (const auto& label: members)
            {
                AnalysisEntity sibling = ae;
                sibling.subspace = ae.subspace.constrains(p.axis) ? ae.subspace.replaced(p.axis, label)
                                                                  : ae.subspace.with({p.axis, label});
                append_series(spec, evaluate(dataset, sibling), label);
            }
            return spec;
        }
        case InsightType::Correlation:
        {
            const auto& p = std::get<CorrelationProperty>(insight.property);
            ChartSpec spec = base_chart(ae, own.ordered);
            spec.series_field = "series";
            append_series(spec, own, ae.key());
            append_series(spec, evaluate(dataset, p.other_ae), p.other_ae.key());
            return spec;
        }
        case InsightType::Explanation:
        {
            const auto& p = std::get<ExplanationProperty>(insight.property);
            ChartSpec spec = render_chart(insight, own);
            spec.series_field = "rows";
            for (auto& row: spec.data)
                row.series = "all rows";
            EvalOptions opts;
            opts.exclude.push_back(p.cause);
            append_series(spec, evaluate(dataset, ae, opts), "excluding " + p.cause.dimension + "=" + p.cause.value);
            return spec;
        }
        default: return render_chart(insight, own);
    }
}

// ---------------------------------------------------------------------------
// Report

nlohmann::json to_json(const Report& report)
{
    auto items = nlohmann::json::array();
    for (const auto& item: report.insights)
        items.push_back({{"rank", item.rank}, {"insight", to_json(item.insight)}, {"chart", to_json(item.chart)}});
    return {
        {"question", report.question},
        {"narrative", report.narrative},
        {"insights", std::move(items)},
        {"trace_ref", report.trace_ref},
        {"degraded", report.degraded},
    };
}

std::string template_narrative(const std::string& question, const std::vector<Insight>& top_k)
{
    if (top_k.empty())
        return "No significant insights were found for \"" + question + "\".";

    // Types in order of their best-ranked insight.
    std::vector<InsightType> order;
    for (const auto& ins: top_k)
        if (std::find(order.begin(), order.end(), ins.type) == order.end())
            order.push_back(ins.type);

    std::string out = "In answer to \"" + question + "\":";
    for (auto type: order)
        for (std::size_t i = 0; i < top_k.size(); ++i)
            if (top_k[i].type == type)
                out += " " + (top_k[i].text.empty() ? render_text(top_k[i]) : top_k[i].text) + " [#" +
                       std::to_string(i + 1) + "]";
    return out;
}

std::string narrative_prompt(const std::string& question, const std::vector<Insight>& top_k)
{
    std::ostringstream os;
    os << "You are a data analyst writing the final answer of an exploratory analysis.\n"
       << "Question: " << question << "\n\nInsights:\n";
    for (std::size_t i = 0; i < top_k.size(); ++i)
        os << "[#" << i + 1 << "] " << top_k[i].text << "\n";
    os << "\nWrite a short, coherent report answering the question using only these insights. "
       << "Cite every insight you use with its [#n] tag. Do not invent numbers.\n";
    return os.str();
}

std::vector<std::size_t> extract_citations(std::string_view narrative)
{
    static const std::regex tag(R"(\[#(\d+)\])");
    std::vector<std::size_t> out;
    const std::string text(narrative);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), tag); it != std::sregex_iterator(); ++it)
    {
        const auto digits = (*it)[1].str();
        out.push_back(digits.size() > 9 ? 0 : std::stoul(digits));
    }
    return out;
}

bool citations_valid(std::string_view narrative, std::size_t count)
{
    const auto tags = extract_citations(narrative);
    if (count > 0 && tags.empty())
        return false;
    return std::all_of(tags.begin(), tags.end(), [&](std::size_t n) { return n >= 1 && n <= count; });
}

Report make_report(const Dataset& dataset, const std::string& question, const std::vector<Insight>& top_k,
                   const NarrativeFn& remote)
{
    Report report;
    report.question = question;
    for (std::size_t i = 0; i < top_k.size(); ++i)
    {
        ReportItem item {i + 1, top_k[i], render_chart(dataset, top_k[i])};
        if (item.insight.text.empty())
            item.insight.text = render_text(item.insight);
        report.insights.push_back(std::move(item));
    }

    if (remote && !top_k.empty())
    {
        std::optional<std::string> narrative;
        try
        {
            narrative = remote(narrative_prompt(question, top_k));
        }
        catch (const std::exception&)
        {
            narrative.reset();
        }
        if (narrative && citations_valid(*narrative, top_k.size()))
        {
            report.narrative = *narrative;
            return report;
        }
        report.degraded = true;
    }
    report.narrative = template_narrative(question, top_k);
    return report;
}

std::string report_markdown(const Report& report)
{
    std::ostringstream os;
    os << "# " << report.question << "\n\n" << report.narrative << "\n\n";
    if (report.degraded)
        os << "> Some results were produced by fallbacks (degraded run).\n\n";
    for (const auto& item: report.insights)
    {
        os << "## " << item.rank << ". " << item.insight.text << "\n\n";
        os << "- type: " << insight_type_name(item.insight.type) << "\n";
        os << "- score: " << number(item.insight.score) << "\n";
        os << "- analysis entity: `" << item.insight.ae.key() << "`\n\n";
        os << "```json\n" << to_json(item.chart).dump(2) << "\n```\n\n";
    }
    os << "trace: `" << report.trace_ref << "`\n";
    return os.str();
}

} // namespace dex

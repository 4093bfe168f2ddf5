// SPDX-License-Identifier: Apache-2.0
#include <dex/actions.hpp>
#include <dex/rendering.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

namespace dex {

std::string_view action_name(ActionKind kind)
{
    switch (kind)
    {
        case ActionKind::Init: return "init";
        case ActionKind::Understand: return "understand";
        case ActionKind::Summarize: return "summarize";
        case ActionKind::Compare: return "compare";
        case ActionKind::Explain: return "explain";
        case ActionKind::Back: return "back";
        case ActionKind::Terminate: return "terminate";
    }
    return "terminate";
}

std::optional<ActionKind> parse_action(std::string_view text)
{
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    for (auto k: {ActionKind::Init, ActionKind::Understand, ActionKind::Summarize, ActionKind::Compare,
                  ActionKind::Explain, ActionKind::Back, ActionKind::Terminate})
        if (action_name(k) == lower)
            return k;
    return std::nullopt;
}

bool InsightStore::add(const Insight& insight)
{
    if (index_.count(insight.id))
        return false;
    index_.emplace(insight.id, items_.size());
    items_.push_back(insight);
    return true;
}

const Insight* InsightStore::find(std::string_view id) const
{
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &items_[it->second];
}

bool applicable(ActionKind kind, const Insight& insight)
{
    switch (kind)
    {
        case ActionKind::Understand: return true;
        case ActionKind::Summarize:
            return insight.kind == InsightKind::Basic && insight.type != InsightType::Correlation;
        case ActionKind::Compare:
            return insight.kind == InsightKind::Basic && insight.type != InsightType::Correlation &&
                   !insight.ae.subspace.empty();
        case ActionKind::Explain:
            if (insight.type == InsightType::Outlier || insight.type == InsightType::ChangePoint)
                return true;
            if (const auto* p = std::get_if<FamilyProperty>(&insight.property))
                return std::any_of(p->exceptions.begin(), p->exceptions.end(),
                                   [](const FamilyException& e) { return e.child.has_value(); });
            return false;
        case ActionKind::Init:
        case ActionKind::Back:
        case ActionKind::Terminate: return true;
    }
    return false;
}

std::vector<ActionKind> applicable_actions(const Insight& insight)
{
    std::vector<ActionKind> out;
    for (auto k: kInsightActions)
        if (applicable(k, insight))
            out.push_back(k);
    return out;
}

void order_and_truncate(std::vector<Insight>& insights, std::size_t max_outputs)
{
    std::stable_sort(insights.begin(), insights.end(), [](const Insight& a, const Insight& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.id < b.id;
    });
    std::set<std::string> seen;
    std::erase_if(insights, [&](const Insight& i) { return !seen.insert(i.id).second; });
    if (insights.size() > max_outputs)
        insights.resize(max_outputs);
}

namespace {

using Clock = std::chrono::steady_clock;

class Timer
{
public:
    explicit Timer(ActionStats& stats): stats_(stats), start_(Clock::now()) {}
    ~Timer() { stats_.elapsed_ms = std::chrono::duration<double, std::milli>(Clock::now() - start_).count(); }

private:
    ActionStats& stats_;
    Clock::time_point start_;
};

void render_all(std::vector<Insight>& insights)
{
    for (auto& i: insights)
        if (i.text.empty())
            i.text = render_text(i);
}

std::vector<const Column*> dimensions_by_name(const Dataset& dataset)
{
    auto dims = dataset.dimensions();
    std::sort(dims.begin(), dims.end(), [](const Column* a, const Column* b) { return a->name() < b->name(); });
    return dims;
}

bool explainable_type(InsightType t)
{
    return t == InsightType::Outlier || t == InsightType::ChangePoint;
}

// Exception children prefer differences an explanation can act on.
std::optional<Insight> salient(std::vector<Insight> found)
{
    if (found.empty())
        return std::nullopt;
    std::stable_sort(found.begin(), found.end(), [](const Insight& a, const Insight& b) {
        if (explainable_type(a.type) != explainable_type(b.type))
            return explainable_type(a.type);
        if (a.score != b.score)
            return a.score > b.score;
        return a.id < b.id;
    });
    return found.front();
}

std::string compound_id(InsightType type, const AnalysisEntity& ae, const nlohmann::json& property)
{
    return basic_insight_id(type, ae, property.dump());
}

struct FamilyMember
{
    std::string label;
    AnalysisEntity ae;
    /// Set when the member is the input insight itself.
    const Insight* self = nullptr;
};

std::optional<Insight> family_insight(const ActionContext& ctx, const Insight& input, InsightType compound_type,
                                      const std::string& axis, const std::vector<FamilyMember>& members,
                                      ActionResult& result)
{
    FamilyProperty prop;
    prop.axis = axis;
    prop.reference_type = input.type;
    prop.reference_key = comparison_key(input);
    std::vector<Insight> children;

    for (const auto& m: members)
    {
        if (m.self)
        {
            prop.conforming.push_back(m.label);
            children.push_back(*m.self);
            continue;
        }
        const auto series = evaluate(ctx.dataset, m.ae);
        ++result.stats.ae_evaluated;
        if (series.empty())
            continue;
        auto det = detect_one(series, m.ae, input.type, input.property, ctx.detector);
        if (det && det->match)
        {
            prop.conforming.push_back(m.label);
            children.push_back(std::move(det->insight));
            continue;
        }
        std::optional<Insight> child;
        if (det)
            child = std::move(det->insight);
        else
            child = salient(detect_all(series, m.ae, ctx.detector));
        FamilyException ex {m.label, std::nullopt};
        if (child)
        {
            ex.child = child->id;
            children.push_back(std::move(*child));
        }
        prop.exceptions.push_back(std::move(ex));
    }

    const std::size_t family = prop.conforming.size() + prop.exceptions.size();
    if (family < 3)
        return std::nullopt;
    prop.verified_ratio = static_cast<double>(prop.conforming.size()) / static_cast<double>(family);
    if (prop.verified_ratio < 0.5)
        return std::nullopt;

    Insight out;
    out.ae = input.ae;
    out.type = compound_type;
    out.kind = InsightKind::Compound;
    out.score = std::min(1.0, prop.verified_ratio + (prop.exceptions.empty() ? 0.0 : 0.1));
    out.property = prop;
    out.id = compound_id(compound_type, out.ae, to_json(out).at("property"));
    for (auto& c: children)
    {
        out.children.push_back(c.id);
        if (c.id != input.id)
            result.auxiliary.push_back(std::move(c));
    }
    return out;
}

void require_family_input(const Insight& insight, std::string_view action)
{
    if (insight.kind != InsightKind::Basic)
        throw ApplicabilityError(std::string(action) + " needs a basic insight");
    if (insight.type == InsightType::Correlation)
        throw ApplicabilityError(std::string(action) + " does not apply to correlation insights");
}

void finish(ActionResult& result, const EnumLimits& limits)
{
    order_and_truncate(result.outputs, limits.max_outputs);
    render_all(result.outputs);
    std::set<std::string> seen;
    for (const auto& o: result.outputs)
        seen.insert(o.id);
    std::erase_if(result.auxiliary, [&](const Insight& i) { return !seen.insert(i.id).second; });
    render_all(result.auxiliary);
}

} // namespace

std::vector<AnalysisEntity> initial_aes(const Dataset& dataset, const EnumLimits& limits)
{
    auto out = enumerate_roots(dataset, limits);
    const auto roots = out;
    if (limits.init_depth == 0 || limits.max_subspace_depth == 0)
        return out;
    for (const auto* d: dimensions_by_name(dataset))
    {
        if (d->distinct_count() > limits.max_distinct_for_filter)
            continue;
        for (const auto& v: d->values())
            for (const auto& r: roots)
            {
                if (out.size() >= limits.max_total_aes)
                    return out;
                if (r.breakdown == d->name())
                    continue;
                auto ae = r;
                ae.subspace = Subspace({{d->name(), v}});
                out.push_back(std::move(ae));
            }
    }
    return out;
}

ActionResult init(const ActionContext& ctx)
{
    ActionResult result;
    result.action = ActionKind::Init;
    {
        Timer timer(result.stats);
        const auto aes = initial_aes(ctx.dataset, ctx.limits);
        if (aes.empty())
            result.note = "no valid analysis entity: need at least one usable dimension and one measure";
        for (const auto& ae: aes)
        {
            const auto series = evaluate(ctx.dataset, ae);
            ++result.stats.ae_evaluated;
            if (series.empty())
                continue;
            auto found = detect_all(series, ae, ctx.detector);
            result.outputs.insert(result.outputs.end(), found.begin(), found.end());
        }
        finish(result, ctx.limits);
    }
    return result;
}

ActionResult understand(const ActionContext& ctx, const Insight& insight)
{
    ActionResult result;
    result.action = ActionKind::Understand;
    result.input_insight = insight.id;
    Timer timer(result.stats);

    const auto& parent_ae = insight.ae;
    std::optional<SeriesResult> parent;
    for (const auto& child: enumerate_children(ctx.dataset, parent_ae, ctx.limits))
    {
        const auto series = evaluate(ctx.dataset, child);
        ++result.stats.ae_evaluated;
        if (series.empty())
            continue;
        auto found = detect_all(series, child, ctx.detector);
        result.outputs.insert(result.outputs.end(), found.begin(), found.end());

        // A drill-down along the same ordered breakdown is compared with its parent.
        if (series.ordered && child.breakdown == parent_ae.breakdown && child.subspace.size() > parent_ae.subspace.size())
        {
            if (!parent)
            {
                parent = evaluate(ctx.dataset, parent_ae);
                ++result.stats.ae_evaluated;
            }
            if (auto c = correlate(series, child, *parent, parent_ae, ctx.detector))
                result.outputs.push_back(std::move(*c));
        }
    }
    finish(result, ctx.limits);
    return result;
}

ActionResult summarize(const ActionContext& ctx, const Insight& insight)
{
    require_family_input(insight, "summarize");
    ActionResult result;
    result.action = ActionKind::Summarize;
    result.input_insight = insight.id;
    Timer timer(result.stats);

    const auto& ae = insight.ae;
    for (const auto* d: dimensions_by_name(ctx.dataset))
    {
        if (d->name() == ae.breakdown || ae.subspace.constrains(d->name()))
            continue;
        if (d->distinct_count() > ctx.limits.max_distinct_for_filter)
            continue;
        std::vector<FamilyMember> members;
        for (const auto& v: d->values())
        {
            auto sibling = ae;
            sibling.subspace = ae.subspace.with({d->name(), v});
            members.push_back({v, std::move(sibling), nullptr});
        }
        if (auto out = family_insight(ctx, insight, InsightType::Summary, d->name(), members, result))
            result.outputs.push_back(std::move(*out));
    }
    finish(result, ctx.limits);
    return result;
}

ActionResult compare(const ActionContext& ctx, const Insight& insight)
{
    require_family_input(insight, "compare");
    if (insight.ae.subspace.empty())
        throw ApplicabilityError("compare needs a filtered insight; use summarize for the whole dataset");
    ActionResult result;
    result.action = ActionKind::Compare;
    result.input_insight = insight.id;
    Timer timer(result.stats);

    const auto& ae = insight.ae;
    for (const auto& f: ae.subspace.filters())
    {
        const auto& column = ctx.dataset.column(f.dimension);
        if (column.distinct_count() < 2)
            continue;
        std::vector<FamilyMember> members;
        for (const auto& v: column.values())
        {
            if (v == f.value)
            {
                members.push_back({v, ae, &insight});
                continue;
            }
            auto neighbor = ae;
            neighbor.subspace = ae.subspace.replaced(f.dimension, v);
            members.push_back({v, std::move(neighbor), nullptr});
        }
        if (auto out = family_insight(ctx, insight, InsightType::Comparison, f.dimension, members, result))
            result.outputs.push_back(std::move(*out));
    }
    finish(result, ctx.limits);
    return result;
}

namespace {

std::string target_value(const Insight& target)
{
    if (const auto* p = std::get_if<OutlierProperty>(&target.property))
        return p->breakdown_value;
    if (const auto* p = std::get_if<ChangePointProperty>(&target.property))
        return p->breakdown_value;
    return {};
}

void explain_target(const ActionContext& ctx, const Insight& target, ActionResult& result)
{
    const auto& ae = target.ae;
    const auto own = evaluate(ctx.dataset, ae);
    ++result.stats.ae_evaluated;
    const auto a0 = deviation_statistic(target, own, ctx.detector);
    if (!a0 || *a0 <= 0.0)
        return;
    const std::size_t total = count_rows(ctx.dataset, ae.subspace);
    if (total == 0)
        return;

    for (const auto* d: dimensions_by_name(ctx.dataset))
    {
        if (d->name() == ae.breakdown || ae.subspace.constrains(d->name()))
            continue;
        if (d->distinct_count() > ctx.limits.max_distinct_for_filter)
            continue;
        for (const auto& v: d->values())
        {
            const Filter cause {d->name(), v};
            const std::size_t excluded = count_rows(ctx.dataset, ae.subspace.with(cause));
            if (excluded == 0)
                continue;
            const double fraction = static_cast<double>(excluded) / static_cast<double>(total);
            if (fraction > 0.5)
                continue;
            EvalOptions opts;
            opts.exclude.push_back(cause);
            const auto series = evaluate(ctx.dataset, ae, opts);
            ++result.stats.ae_evaluated;
            const auto a1 = deviation_statistic(target, series, ctx.detector);
            if (!a1)
                continue;
            double strength;
            if (std::isinf(*a0))
                strength = std::isinf(*a1) ? 0.0 : 1.0;
            else
                strength = std::clamp((*a0 - *a1) / *a0, 0.0, 1.0);
            if (strength < 0.8)
                continue;

            ExplanationProperty prop;
            prop.cause = cause;
            prop.residual_score = *a1;
            prop.anomaly_score = *a0;
            prop.strength = strength;
            prop.excluded_fraction = fraction;
            prop.target = target.id;
            prop.target_type = target.type;
            prop.target_value = target_value(target);

            Insight out;
            out.ae = ae;
            out.type = InsightType::Explanation;
            out.kind = InsightKind::Compound;
            out.property = prop;
            out.score = strength;
            out.children = {target.id};
            out.id = basic_insight_id(InsightType::Explanation, ae, target.id + "|" + cause.dimension + "=" + cause.value);
            result.outputs.push_back(std::move(out));
        }
    }
}

} // namespace

ActionResult explain(const ActionContext& ctx, const Insight& insight)
{
    if (!applicable(ActionKind::Explain, insight))
        throw ApplicabilityError("explain needs an outlier, a change point, or a compound insight with exceptions");
    ActionResult result;
    result.action = ActionKind::Explain;
    result.input_insight = insight.id;
    Timer timer(result.stats);

    std::vector<const Insight*> targets;
    if (insight.kind == InsightKind::Basic)
        targets.push_back(&insight);
    else if (ctx.store)
    {
        for (const auto& e: std::get<FamilyProperty>(insight.property).exceptions)
            if (e.child)
                if (const auto* child = ctx.store->find(*e.child))
                    targets.push_back(child);
    }

    for (const auto* t: targets)
        explain_target(ctx, *t, result);

    std::stable_sort(result.outputs.begin(), result.outputs.end(), [](const Insight& a, const Insight& b) {
        const auto& pa = std::get<ExplanationProperty>(a.property);
        const auto& pb = std::get<ExplanationProperty>(b.property);
        if (pa.strength != pb.strength)
            return pa.strength > pb.strength;
        if (pa.excluded_fraction != pb.excluded_fraction)
            return pa.excluded_fraction < pb.excluded_fraction;
        return a.id < b.id;
    });
    if (result.outputs.size() > ctx.limits.max_explanations)
        result.outputs.resize(ctx.limits.max_explanations);
    if (result.outputs.size() > ctx.limits.max_outputs)
        result.outputs.resize(ctx.limits.max_outputs);
    render_all(result.outputs);
    if (targets.empty())
        result.note = "no exception child could be resolved";
    return result;
}

ActionResult run_action(ActionKind kind, const ActionContext& ctx, const Insight& insight)
{
    switch (kind)
    {
        case ActionKind::Understand: return understand(ctx, insight);
        case ActionKind::Summarize: return summarize(ctx, insight);
        case ActionKind::Compare: return compare(ctx, insight);
        case ActionKind::Explain: return explain(ctx, insight);
        default: throw ApplicabilityError(std::string(action_name(kind)) + " is not an insight action");
    }
}

} // namespace dex

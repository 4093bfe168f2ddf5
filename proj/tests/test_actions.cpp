#include "fixtures.hpp"
#include "oracles.hpp"

#include <dex/actions.hpp>

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

using namespace dex;

namespace {

const Insight* find_if(const std::vector<Insight>& v, auto pred)
{
    auto it = std::find_if(v.begin(), v.end(), pred);
    return it == v.end() ? nullptr : &*it;
}

bool is_math_trend(const Insight& i, const Subspace& subspace)
{
    return i.type == InsightType::Trend && i.ae.aggregate == Aggregate::Avg && i.ae.breakdown == "Year" &&
           i.ae.subspace == subspace && std::get<TrendProperty>(i.property).direction == Direction::Rising;
}

Insight basic(const Dataset& ds, const AnalysisEntity& ae, InsightType type)
{
    for (auto& i: detect_all(evaluate(ds, ae), ae))
        if (i.type == type)
            return i;
    throw std::runtime_error("no " + std::string(insight_type_name(type)) + " on " + ae.key());
}

std::vector<std::string> ids(const std::vector<Insight>& v)
{
    std::vector<std::string> out;
    for (const auto& i: v)
        out.push_back(i.id);
    return out;
}

void check_outputs_valid(const Dataset& ds, const ActionResult& r, const EnumLimits& limits)
{
    CHECK(r.outputs.size() <= limits.max_outputs);
    for (const auto& o: r.outputs)
    {
        CHECK_NOTHROW(validate(ds, o.ae));
        CHECK(o.score >= 0.0);
        CHECK(o.score <= 1.0);
        CHECK(!o.text.empty());
        CHECK((o.kind == InsightKind::Compound) == is_compound_type(o.type));
        if (const auto* p = std::get_if<FamilyProperty>(&o.property))
        {
            const double members = static_cast<double>(p->conforming.size() + p->exceptions.size());
            CHECK(p->verified_ratio * members == doctest::Approx(static_cast<double>(p->conforming.size())));
            for (const auto& e: p->exceptions)
                CHECK(std::find(p->conforming.begin(), p->conforming.end(), e.label) == p->conforming.end());
        }
    }
}

} // namespace

TEST_CASE("init surfaces the school A lead and the rising math trend")
{
    const auto& ds = test::student();
    const auto r = init({ds});
    check_outputs_valid(ds, r, {});
    CHECK(find_if(r.outputs, [](const Insight& i) { return is_math_trend(i, Subspace({{"Subject", "Math"}})); }));
    CHECK(find_if(r.outputs, [](const Insight& i) {
        return i.type == InsightType::Top1 && i.ae.aggregate == Aggregate::Avg && i.ae.breakdown == "School" &&
               std::get<Top1Property>(i.property).leader_value == "A";
    }));
}

TEST_CASE("init equals exhaustive enumeration plus detectors")
{
    const auto& ds = test::student();
    const auto r = init({ds});
    // Independent enumeration: roots and one-filter subspaces over every
    // aggregate/measure/breakdown combination.
    std::vector<Insight> all;
    std::set<std::string> seen;
    std::vector<Subspace> subspaces {Subspace {}};
    for (const auto* d: ds.dimensions())
        for (const auto& v: d->values())
            subspaces.push_back(Subspace({{d->name(), v}}));
    for (const auto& s: subspaces)
        for (const auto* b: ds.dimensions())
            for (auto agg: {Aggregate::Sum, Aggregate::Avg, Aggregate::Count})
            {
                if (s.constrains(b->name()))
                    continue;
                AnalysisEntity ae {agg, agg == Aggregate::Count ? "" : "Score", s, b->name()};
                if (!seen.insert(ae.key()).second)
                    continue;
                const auto series = evaluate(ds, ae);
                for (auto& i: detect_all(series, ae))
                    all.push_back(std::move(i));
            }
    std::stable_sort(all.begin(), all.end(), [](const Insight& a, const Insight& b) {
        return a.score != b.score ? a.score > b.score : a.id < b.id;
    });
    all.resize(std::min<std::size_t>(all.size(), 30));
    CHECK(ids(r.outputs) == ids(all));
}

TEST_CASE("init on a constant measure yields nothing")
{
    std::string csv = "Group,Year,Value\n";
    for (int y = 2000; y < 2010; ++y)
        for (auto g: {"a", "b", "c"})
            csv += std::string(g) + "," + std::to_string(y) + ",5.5\n";
    const auto ds = load_csv(csv);
    // COUNT is constant too: every (group, year) cell has one row.
    CHECK(init({ds}).outputs.empty());
}

TEST_CASE("init with no usable dimension explains itself")
{
    std::string csv = "Value\n";
    for (int i = 0; i < 100; ++i)
        csv += std::to_string(i) + ".5\n";
    const auto r = init({load_csv(csv)});
    CHECK(r.outputs.empty());
    CHECK(!r.note.empty());
}

TEST_CASE("understand the math trend reaches school C's 2020 outlier")
{
    const auto& ds = test::student();
    const auto trend = basic(ds, {Aggregate::Avg, "Score", Subspace({{"Subject", "Math"}}), "Year"}, InsightType::Trend);
    EnumLimits limits;
    limits.max_outputs = 200;
    const auto r = understand({ds, limits}, trend);
    check_outputs_valid(ds, r, limits);
    CHECK(find_if(r.outputs, [](const Insight& i) {
        return i.type == InsightType::Outlier && i.ae.subspace.find("School") &&
               i.ae.subspace.find("School")->value == "C" && std::get<OutlierProperty>(i.property).breakdown_value == "2020";
    }));
}

TEST_CASE("understand equals detectors over the child enumeration oracle")
{
    const auto& ds = test::student();
    const auto trend = basic(ds, {Aggregate::Avg, "Score", Subspace({{"Subject", "Math"}}), "Year"}, InsightType::Trend);
    EnumLimits limits;
    limits.max_outputs = 1000;
    const auto r = understand({ds, limits}, trend);

    std::set<std::string> expected;
    const auto parent = evaluate(ds, trend.ae);
    for (const auto& [key, ae]: oracle::children(ds, trend.ae, limits))
    {
        const auto series = evaluate(ds, ae);
        for (const auto& i: detect_all(series, ae))
            expected.insert(i.id);
        if (ae.breakdown == trend.ae.breakdown && ae.subspace.size() > trend.ae.subspace.size())
            if (auto c = correlate(series, ae, parent, trend.ae))
                expected.insert(c->id);
    }
    const auto got = ids(r.outputs);
    CHECK(std::set<std::string>(got.begin(), got.end()) == expected);
}

TEST_CASE("understand at the depth cap only swaps breakdowns")
{
    const auto& ds = test::student();
    EnumLimits limits;
    limits.max_subspace_depth = 1;
    limits.max_outputs = 500;
    const auto trend = basic(ds, {Aggregate::Avg, "Score", Subspace({{"Subject", "Math"}}), "Year"}, InsightType::Trend);
    for (const auto& o: understand({ds, limits}, trend).outputs)
        CHECK(o.ae.subspace == trend.ae.subspace);
}

TEST_CASE("summarize the overall math trend across schools")
{
    const auto& ds = test::student();
    const auto trend = basic(ds, {Aggregate::Avg, "Score", Subspace({{"Subject", "Math"}}), "Year"}, InsightType::Trend);
    const auto r = summarize({ds}, trend);
    check_outputs_valid(ds, r, {});
    const auto* s = find_if(r.outputs, [](const Insight& i) {
        return i.type == InsightType::Summary && std::get<FamilyProperty>(i.property).axis == "School";
    });
    REQUIRE(s);
    const auto& p = std::get<FamilyProperty>(s->property);
    CHECK(p.conforming == std::vector<std::string> {"A", "B"});
    REQUIRE(p.exceptions.size() == 1);
    CHECK(p.exceptions[0].label == "C");
    CHECK(p.verified_ratio == doctest::Approx(2.0 / 3.0));
    CHECK(s->score == doctest::Approx(2.0 / 3.0 + 0.1));
    CHECK(s->text.find("barring School=C") != std::string::npos);
    CHECK_THROWS_AS(summarize({ds}, *s), ApplicabilityError);
}

TEST_CASE("summarize counts conforming siblings on a hand-built five-school table")
{
    // Schools S1..S4 rise, S5 falls.
    std::string csv = "School,Year,Value\n";
    for (int s = 1; s <= 5; ++s)
        for (int y = 0; y < 8; ++y)
        {
            const double v = s == 5 ? 100.0 - 5.0 * y : 10.0 * s + 3.0 * y + (y % 2 ? 0.3 : -0.3);
            csv += "S" + std::to_string(s) + "," + std::to_string(2010 + y) + "," + format_fixed(v, 2) + "\n";
        }
    const auto ds = load_csv(csv);
    const AnalysisEntity all {Aggregate::Sum, "Value", {}, "Year"};
    const auto trend = basic(ds, all, InsightType::Trend);
    REQUIRE(std::get<TrendProperty>(trend.property).direction == Direction::Rising);
    const auto r = summarize({ds}, trend);
    REQUIRE(r.outputs.size() == 1);
    const auto& p = std::get<FamilyProperty>(r.outputs[0].property);

    // oracle: detect_one loop
    int conforming = 0;
    for (int s = 1; s <= 5; ++s)
    {
        AnalysisEntity ae = all;
        ae.subspace = Subspace({{"School", "S" + std::to_string(s)}});
        auto d = detect_one(evaluate(ds, ae), ae, InsightType::Trend, trend.property);
        conforming += d && d->match;
    }
    CHECK(conforming == 4);
    CHECK(p.verified_ratio == doctest::Approx(0.8));
    CHECK(p.exceptions.size() == 1);
}

TEST_CASE("summarize with every sibling conforming is universal")
{
    std::string csv = "School,Year,Value\n";
    for (int s = 1; s <= 3; ++s)
        for (int y = 0; y < 8; ++y)
            csv += "S" + std::to_string(s) + "," + std::to_string(2010 + y) + "," +
                   format_fixed(5.0 * s + 2.0 * y + (y % 3 == 0 ? 0.2 : 0.0), 2) + "\n";
    const auto ds = load_csv(csv);
    const auto trend = basic(ds, {Aggregate::Sum, "Value", {}, "Year"}, InsightType::Trend);
    const auto r = summarize({ds}, trend);
    REQUIRE(r.outputs.size() == 1);
    const auto& p = std::get<FamilyProperty>(r.outputs[0].property);
    CHECK(p.verified_ratio == 1.0);
    CHECK(p.exceptions.empty());
    CHECK(r.outputs[0].score == 1.0);
    CHECK(r.outputs[0].text.find("universal") != std::string::npos);
}

TEST_CASE("compare school A's math trend with the other schools")
{
    const auto& ds = test::student();
    const auto trend = basic(ds, {Aggregate::Avg, "Score", Subspace({{"School", "A"}, {"Subject", "Math"}}), "Year"},
                             InsightType::Trend);
    const auto r = compare({ds}, trend);
    check_outputs_valid(ds, r, {});
    const auto* c = find_if(r.outputs, [](const Insight& i) {
        return i.type == InsightType::Comparison && std::get<FamilyProperty>(i.property).axis == "School";
    });
    REQUIRE(c);
    const auto& p = std::get<FamilyProperty>(c->property);
    CHECK(p.conforming == std::vector<std::string> {"A", "B"});
    REQUIRE(p.exceptions.size() == 1);
    CHECK(p.exceptions[0].label == "C");
    REQUIRE(p.exceptions[0].child);
    const auto* child = find_if(r.auxiliary, [&](const Insight& i) { return i.id == *p.exceptions[0].child; });
    REQUIRE(child);
    CHECK(child->type == InsightType::Outlier);
    CHECK(std::get<OutlierProperty>(child->property).breakdown_value == "2020");

    // Partition oracle over the neighbor AEs.
    for (auto school: {"B", "C"})
    {
        AnalysisEntity ae = trend.ae;
        ae.subspace = ae.subspace.replaced("School", school);
        const auto d = detect_one(evaluate(ds, ae), ae, InsightType::Trend, trend.property);
        const bool conforms = d && d->match;
        CHECK(conforms == (std::find(p.conforming.begin(), p.conforming.end(), school) != p.conforming.end()));
    }
}

TEST_CASE("compare needs a filter and skips single-valued dimensions")
{
    const auto& ds = test::student();
    const auto trend = basic(ds, {Aggregate::Avg, "Score", Subspace({{"Subject", "Math"}}), "Year"}, InsightType::Trend);
    CHECK_THROWS_AS(compare({ds}, basic(ds, {Aggregate::Avg, "Score", {}, "Year"}, InsightType::Trend)),
                    ApplicabilityError);

    std::string csv = "Kind,Year,Value\n";
    for (int y = 0; y < 8; ++y)
        csv += "only," + std::to_string(2010 + y) + "," + format_fixed(3.0 * y + (y % 2) * 0.5, 2) + "\n";
    const auto single = load_csv(csv);
    const auto t = basic(single, {Aggregate::Sum, "Value", Subspace({{"Kind", "only"}}), "Year"}, InsightType::Trend);
    CHECK(compare({single}, t).outputs.empty());
}

TEST_CASE("explain school C's outlier points at take-home exams")
{
    const auto& ds = test::student();
    const auto trend = basic(ds, {Aggregate::Avg, "Score", Subspace({{"School", "A"}, {"Subject", "Math"}}), "Year"},
                             InsightType::Trend);
    const auto cmp = compare({ds}, trend);
    InsightStore store;
    for (const auto& i: cmp.outputs)
        store.add(i);
    for (const auto& i: cmp.auxiliary)
        store.add(i);
    const auto* comparison = find_if(cmp.outputs, [](const Insight& i) { return i.type == InsightType::Comparison; });
    REQUIRE(comparison);

    const auto r = explain({ds, {}, {}, &store}, *comparison);
    REQUIRE(!r.outputs.empty());
    CHECK(r.outputs.size() <= 3);
    const auto& top = std::get<ExplanationProperty>(r.outputs[0].property);
    CHECK(top.cause == Filter {"Exam Form", "Take-home"});
    CHECK(top.strength >= 0.8);
    CHECK(top.excluded_fraction <= 0.5);
    CHECK(r.outputs[0].text.find("When excluding Exam Form=Take-home, 2020 is no longer an outlier") !=
          std::string::npos);

    // Hand recomputation with the row-scan evaluator.
    test::RawTable table;
    table.names = {"School", "Year", "Subject", "Exam Form", "Score"};
    table.dimension_columns = {0, 1, 2, 3};
    table.measure_columns = {4};
    for (auto name: {"School", "Year", "Subject", "Exam Form"})
        table.universes.push_back(ds.column(name).values());
    std::istringstream in(test::read_text(test::source_path("data/student_performance.csv")));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line))
    {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ','))
            cells.push_back(cell);
        table.rows.push_back(cells);
    }
    const AnalysisEntity target {Aggregate::Avg, "Score", Subspace({{"School", "C"}, {"Subject", "Math"}}), "Year"};
    const double a0 = std::fabs(oracle::robust_z(oracle::row_scan(table, target), "2020"));
    const double a1 = std::fabs(oracle::robust_z(oracle::row_scan(table, target, {top.cause}), "2020"));
    CHECK(top.anomaly_score == doctest::Approx(a0).epsilon(1e-9));
    CHECK(top.residual_score == doctest::Approx(a1).epsilon(1e-9));
    CHECK(top.strength == doctest::Approx(std::clamp((a0 - a1) / a0, 0.0, 1.0)).epsilon(1e-9));

    // Self-consistency: re-running the detector statistic on the filtered series.
    const auto* child = store.find(top.target);
    REQUIRE(child);
    EvalOptions opts;
    opts.exclude.push_back(top.cause);
    CHECK(*deviation_statistic(*child, evaluate(ds, child->ae, opts)) == doctest::Approx(top.residual_score));
}

TEST_CASE("a uniform outlier has no explanation")
{
    // Every row of year 2015 is inflated, whatever the group or channel.
    std::string csv = "Group,Channel,Year,Value\n";
    for (auto g: {"a", "b", "c"})
        for (auto ch: {"x", "y"})
            for (int y = 2010; y < 2020; ++y)
                csv += std::string(g) + "," + ch + "," + std::to_string(y) + "," +
                       format_fixed(10.0 + (y % 3) * 0.4 + (y == 2015 ? 30.0 : 0.0), 2) + "\n";
    const auto ds = load_csv(csv);
    const AnalysisEntity ae {Aggregate::Avg, "Value", {}, "Year"};
    const auto outlier = basic(ds, ae, InsightType::Outlier);
    CHECK(explain({ds}, outlier).outputs.empty());
}

TEST_CASE("explain rejects insights without a difference")
{
    const auto& ds = test::student();
    const auto trend = basic(ds, {Aggregate::Avg, "Score", Subspace({{"Subject", "Math"}}), "Year"}, InsightType::Trend);
    CHECK_FALSE(applicable(ActionKind::Explain, trend));
    CHECK_THROWS_AS(explain({ds}, trend), ApplicabilityError);
    CHECK_THROWS_AS(run_action(ActionKind::Back, {ds}, trend), ApplicabilityError);
}

TEST_CASE("actions are deterministic and bounded")
{
    const auto& ds = test::cars();
    EnumLimits limits;
    limits.max_outputs = 12;
    const auto a = init({ds, limits});
    const auto b = init({ds, limits});
    CHECK(ids(a.outputs) == ids(b.outputs));
    CHECK(a.outputs.size() <= 12);
    for (const auto& i: a.outputs)
        for (auto kind: applicable_actions(i))
        {
            InsightStore store;
            const auto x = run_action(kind, {ds, limits, {}, &store}, i);
            const auto y = run_action(kind, {ds, limits, {}, &store}, i);
            CHECK(ids(x.outputs) == ids(y.outputs));
            check_outputs_valid(ds, x, limits);
        }
}

TEST_CASE("order_and_truncate sorts, dedupes and caps")
{
    AnalysisEntity ae {Aggregate::Sum, "M", {}, "B"};
    std::vector<Insight> v {
        test::make_insight("b", InsightType::Trend, ae, TrendProperty {}, 0.5),
        test::make_insight("a", InsightType::Trend, ae, TrendProperty {}, 0.5),
        test::make_insight("c", InsightType::Trend, ae, TrendProperty {}, 0.9),
        test::make_insight("a", InsightType::Trend, ae, TrendProperty {}, 0.5),
    };
    order_and_truncate(v, 2);
    CHECK(ids(v) == std::vector<std::string> {"c", "a"});
}

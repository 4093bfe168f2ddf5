// SPDX-License-Identifier: Apache-2.0
#include <dex/agent.hpp>

#include "fixtures.hpp"

#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <random>
#include <set>

using namespace dex;

namespace {

class FixedPolicy: public Policy
{
public:
    explicit FixedPolicy(std::string reply): reply_(std::move(reply)) {}
    std::string name() const override { return "fixed"; }
    std::string respond(const PolicyRequest&) override
    {
        ++calls;
        return reply_;
    }
    std::size_t calls = 0;

private:
    std::string reply_;
};

class ThrowingPolicy: public Policy
{
public:
    std::string name() const override { return "throwing"; }
    std::string respond(const PolicyRequest&) override { throw Error("connection reset"); }
};

/// Picks a random candidate and a random applicable action; records what it saw.
class RandomPolicy: public Policy
{
public:
    explicit RandomPolicy(std::uint64_t seed): rng_(seed) {}
    std::string name() const override { return "random"; }
    std::string respond(const PolicyRequest& request) override
    {
        seen.push_back({});
        for (const auto& c: request.candidates)
            seen.back().push_back(c.id);
        if (rng_() % 6 == 0)
            return R"({"action":"back"})";
        const std::size_t pick = rng_() % request.candidates.size();
        const auto acts = applicable_actions(request.candidates[pick]);
        const auto act = acts[rng_() % acts.size()];
        return nlohmann::json {{"pick", pick + 1}, {"action", action_name(act)}}.dump();
    }
    std::vector<std::vector<std::string>> seen;

private:
    std::mt19937_64 rng_;
};

DecisionContext five_candidates()
{
    DecisionContext ctx;
    for (int i = 0; i < 5; ++i)
        ctx.applicable.push_back({ActionKind::Understand, ActionKind::Summarize, ActionKind::Compare});
    ctx.applicable[2] = {ActionKind::Understand, ActionKind::Explain};
    ctx.back_allowed = true;
    return ctx;
}

SessionOutcome run(Policy& policy, SessionConfig config = {}, const Dataset& ds = test::student())
{
    LocalEmbedding local;
    return run_session(ds, test::kStudentQuestion, config, policy, local);
}

} // namespace

TEST_CASE("parse_decision")
{
    const auto ctx = five_candidates();

    auto ok = parse_decision(R"(Sure! {"pick": 2, "action": "compare", "rationale": "r"} thanks)", ctx);
    REQUIRE(ok);
    CHECK(ok.decision->pick == 1);
    CHECK(ok.decision->action == ActionKind::Compare);
    CHECK(ok.decision->rationale == "r");

    CHECK(parse_decision(R"({"pick": 5, "action": "UNDERSTAND"})", ctx));
    CHECK(parse_decision(R"({"action": "terminate"})", ctx).decision->action == ActionKind::Terminate);
    CHECK(parse_decision(R"({"action": "back"})", ctx).decision->action == ActionKind::Back);

    auto fails = [&](std::string_view raw, ParseFailure why, const DecisionContext& c) {
        const auto r = parse_decision(raw, c);
        CHECK_FALSE(r);
        CHECK(r.failure == why);
        CHECK_FALSE(r.message.empty());
    };
    fails(R"({"pick": 6, "action": "understand"})", ParseFailure::Bounds, ctx);
    fails(R"({"pick": 0, "action": "understand"})", ParseFailure::Bounds, ctx);
    fails(R"({"pick": -1, "action": "understand"})", ParseFailure::Bounds, ctx);
    fails(R"({"pick": 3, "action": "compare"})", ParseFailure::Inapplicable, ctx);
    fails(R"({"pick": 1, "action": "explain"})", ParseFailure::Inapplicable, ctx);
    fails(R"({"pick": 1, "action": "dance"})", ParseFailure::UnknownAction, ctx);
    fails(R"({"pick": 1, "action": "init"})", ParseFailure::UnknownAction, ctx);
    fails(R"({"pick": "1", "action": "understand"})", ParseFailure::Schema, ctx);
    fails(R"({"pick": 1})", ParseFailure::Schema, ctx);
    fails("I would pick the second one.", ParseFailure::NoJson, ctx);
    fails("{not json", ParseFailure::NoJson, ctx);
    fails("", ParseFailure::NoJson, ctx);

    auto first = ctx;
    first.back_allowed = false;
    fails(R"({"action": "back"})", ParseFailure::Inapplicable, first);

    CHECK(first_json_object(R"(x {"a": "}{", "b": {"c": 1}} y {"d": 2})")->at("b").at("c") == 1);
    CHECK_FALSE(first_json_object("[1,2]"));
}

TEST_CASE("explain is not applicable to a trend")
{
    const AnalysisEntity ae {Aggregate::Avg, "Score", Subspace({{"Subject", "Math"}}), "Year"};
    const auto t = test::make_insight("t", InsightType::Trend, ae, TrendProperty {}, 0.5);
    const auto acts = applicable_actions(t);
    CHECK(std::find(acts.begin(), acts.end(), ActionKind::Explain) == acts.end());
    DecisionContext ctx {{acts}, false};
    CHECK(parse_decision(R"({"pick": 1, "action": "explain"})", ctx).failure == ParseFailure::Inapplicable);
}

TEST_CASE("prompt rendering")
{
    const auto& ds = test::student();
    const auto init_result = init({ds});
    auto candidates = rank_candidates(init_result.outputs, {});
    REQUIRE(candidates.size() >= 10);
    candidates.resize(10);

    PromptInput in;
    in.question = test::kStudentQuestion;
    in.schema_summary = schema_summary(ds);
    in.candidates = candidates;
    for (const auto& c: candidates)
        in.context.applicable.push_back(applicable_actions(c));
    for (int h = 0; h < 30; ++h)
        in.history.push_back("understand: an earlier insight number " + std::to_string(h));

    const auto full = render_step_prompt(in);
    CHECK(full.fits);
    CHECK(full.candidates_listed == 10);
    CHECK(full.history_elided == 0);
    for (std::size_t i = 0; i < candidates.size(); ++i)
        CHECK(full.text.find(candidates[i].text) != std::string::npos);
    CHECK(full.text.find(test::kStudentQuestion) != std::string::npos);
    CHECK(render_step_prompt(in).text == full.text);

    SUBCASE("overflow drops history then candidates")
    {
        for (std::size_t budget: {full.text.size() - 1, full.text.size() / 2, full.text.size() / 4})
        {
            in.max_chars = budget;
            const auto r = render_step_prompt(in);
            if (r.fits)
            {
                CHECK(r.text.size() <= budget);
                CHECK(r.candidates_listed >= kMinPromptCandidates);
            }
            else
                CHECK(r.candidates_listed == kMinPromptCandidates);
            CHECK(r.history_elided <= in.history.size());
            if (r.candidates_listed < 10)
                CHECK(r.history_elided == in.history.size());
        }
        in.max_chars = 50;
        CHECK_FALSE(render_step_prompt(in).fits);
    }

    const auto suffix = retry_suffix(parse_decision("nope", in.context));
    CHECK(suffix.find("no_json") != std::string::npos);
    CHECK(suffix.size() < kRetryReserve);
}

TEST_CASE("adversarial policies terminate within budget")
{
    SessionConfig cfg;
    cfg.max_steps = 6;
    cfg.max_prompt_chars = 6000;

    SUBCASE("always back")
    {
        FixedPolicy p(R"({"action":"back"})");
        const auto r = run(p, cfg);
        CHECK(r.sequence.steps.size() <= cfg.max_steps);
        CHECK(r.status != SessionStatus::Failed);
        for (auto n: r.prompt_sizes)
            CHECK(n <= cfg.max_prompt_chars);
        // The first step cannot go back, so it falls back to candidate 1.
        REQUIRE(!r.sequence.steps.empty());
        CHECK(r.sequence.steps[0].fallback);
    }
    SUBCASE("always invalid")
    {
        FixedPolicy p("I refuse to answer in JSON.");
        const auto r = run(p, cfg);
        CHECK(r.sequence.steps.size() <= cfg.max_steps);
        CHECK(p.calls == 2 * r.sequence.steps.size());
        for (const auto& s: r.sequence.steps)
            CHECK(s.fallback);
        for (auto n: r.prompt_sizes)
            CHECK(n <= cfg.max_prompt_chars);
        CHECK(!r.report.insights.empty());
    }
    SUBCASE("tiny prompt budget")
    {
        cfg.max_prompt_chars = kRetryReserve + 200;
        FixedPolicy p(R"({"pick":1,"action":"understand"})");
        const auto r = run(p, cfg);
        CHECK(r.sequence.terminated == Termination::TokenBudget);
        CHECK(r.prompt_sizes.empty());
    }
}

TEST_CASE("transport failures degrade the session")
{
    ThrowingPolicy p;
    const auto r = run(p);
    CHECK(r.sequence.terminated == Termination::TransportFailure);
    CHECK(r.status == SessionStatus::Degraded);
    CHECK(r.report.degraded);
    CHECK(r.sequence.steps.empty());
}

TEST_CASE("zero step budget reports the init insights")
{
    SessionConfig cfg;
    cfg.max_steps = 0;
    FixedPolicy p(R"({"pick":1,"action":"understand"})");
    const auto r = run(p, cfg);
    CHECK(r.sequence.steps.empty());
    CHECK(r.sequence.terminated == Termination::StepBudget);
    CHECK(p.calls == 0);
    CHECK(r.status == SessionStatus::Done);
    CHECK(!r.report.insights.empty());
}

TEST_CASE("random sessions produce valid sequences")
{
    for (std::uint64_t seed = 1; seed <= 12; ++seed)
    {
        RandomPolicy p(seed);
        SessionConfig cfg;
        cfg.max_steps = 6;
        const auto& ds = seed % 2 ? test::student() : test::cars();
        const auto r = run(p, cfg, ds);
        CHECK(r.sequence.steps.size() <= cfg.max_steps);

        // Replays the candidate stack and checks each pick came from the shown set.
        std::vector<std::vector<std::string>> stack {{}};
        for (const auto& i: r.sequence.init.outputs)
            stack.back().push_back(i.id);
        PickedSet picked;
        std::vector<std::string> picked_in_order;
        for (std::size_t s = 0; s < r.sequence.steps.size(); ++s)
        {
            const auto& step = r.sequence.steps[s];
            CHECK(step.index == s);
            if (step.action == ActionKind::Back)
            {
                REQUIRE(stack.size() > 1);
                stack.pop_back();
                std::vector<std::string> restored;
                for (const auto& i: step.result.outputs)
                    restored.push_back(i.id);
                CHECK(restored == stack.back());
                continue;
            }
            const auto& top = stack.back();
            CHECK(std::find(top.begin(), top.end(), step.picked) != top.end());
            CHECK(r.sequence.store.contains(step.picked));
            picked.insert(step.picked);
            picked_in_order.push_back(step.picked);
            stack.push_back({});
            for (const auto& i: step.result.outputs)
            {
                stack.back().push_back(i.id);
                CHECK(r.sequence.store.contains(i.id));
            }
        }
        // Every picked insight is in the report.
        for (const auto& id: picked)
            CHECK(std::any_of(r.report.insights.begin(), r.report.insights.end(),
                              [&](const ReportItem& it) { return it.insight.id == id; }));
        CHECK(r.sequence.picked() == picked_in_order);
    }
}

TEST_CASE("back restores the previous candidate list")
{
    struct Recorder: Policy
    {
        std::string name() const override { return "recorder"; }
        std::string respond(const PolicyRequest& request) override
        {
            std::vector<std::string> ids;
            for (const auto& c: request.candidates)
                ids.push_back(c.id);
            seen.push_back(ids);
            static const char* replies[] = {R"({"pick":1,"action":"understand"})", R"({"action":"back"})",
                                            R"({"action":"terminate"})"};
            return replies[std::min<std::size_t>(seen.size() - 1, 2)];
        }
        std::vector<std::vector<std::string>> seen;
    } p;
    const auto r = run(p);
    REQUIRE(p.seen.size() == 3);
    CHECK(p.seen[2] == p.seen[0]);
    CHECK(p.seen[1] != p.seen[0]);
    REQUIRE(r.sequence.steps.size() == 2);
    CHECK(r.sequence.steps[1].action == ActionKind::Back);
    CHECK(r.sequence.steps[1].picked.empty());
}

TEST_CASE("sessions are deterministic")
{
    const auto a = test::run_scripted(test::student(), test::kStudentQuestion, test::student_script());
    const auto b = test::run_scripted(test::student(), test::kStudentQuestion, test::student_script());
    CHECK(a.trace == b.trace);
    CHECK(to_json(a.report).dump() == to_json(b.report).dump());
    CHECK(trace_text(a.trace) == trace_text(b.trace));
    for (const auto& line: a.trace)
        CHECK_NOTHROW(nlohmann::json::parse(line));
}

TEST_CASE("student walk-through")
{
    const auto start = std::chrono::steady_clock::now();
    const auto r = test::run_scripted(test::student(), test::kStudentQuestion, test::student_script());
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(seconds < 10.0);
    CHECK(r.status == SessionStatus::Done);
    CHECK(r.sequence.terminated == Termination::PolicyChoseTerminate);
    REQUIRE(r.sequence.steps.size() == 3);
    CHECK(r.sequence.steps[0].action == ActionKind::Understand);
    CHECK(r.sequence.steps[1].action == ActionKind::Compare);
    CHECK(r.sequence.steps[2].action == ActionKind::Explain);

    const auto* first = r.sequence.store.find(r.sequence.steps[0].picked);
    REQUIRE(first);
    CHECK(first->type == InsightType::Trend);
    CHECK(std::get<TrendProperty>(first->property).direction == Direction::Rising);

    const auto* cmp = r.sequence.store.find(r.sequence.steps[2].picked);
    REQUIRE(cmp);
    CHECK(cmp->type == InsightType::Comparison);
    const auto& fam = std::get<FamilyProperty>(cmp->property);
    REQUIRE(fam.exceptions.size() == 1);
    CHECK(fam.exceptions[0].label == "C");

    const auto& expl = r.sequence.steps[2].result.outputs;
    REQUIRE(!expl.empty());
    const auto& p = std::get<ExplanationProperty>(expl[0].property);
    CHECK(p.cause == Filter {"Exam Form", "Take-home"});
    CHECK(p.strength >= 0.8);
}

TEST_CASE("toyota case study")
{
    const auto r = test::run_scripted(test::cars(), test::kToyotaQuestion, test::toyota_script());
    CHECK(r.status == SessionStatus::Done);
    CHECK(r.sequence.steps.size() == 5);
    auto has = [&](auto pred) {
        return std::any_of(r.report.insights.begin(), r.report.insights.end(),
                           [&](const ReportItem& it) { return pred(it.insight); });
    };
    CHECK(has([](const Insight& i) {
        return i.type == InsightType::Trend && i.ae.subspace.find("Brand") && i.ae.subspace.size() == 1 &&
               std::get<TrendProperty>(i.property).direction == Direction::Falling;
    }));
    for (auto model: {"Camry", "Corolla"})
        CHECK(has([&](const Insight& i) {
            return i.type == InsightType::Top1 && std::get<Top1Property>(i.property).leader_value == model;
        }));
    CHECK(has([](const Insight& i) {
        return i.type == InsightType::Correlation && std::get<CorrelationProperty>(i.property).r > 0.9;
    }));
}

TEST_CASE("config")
{
    SessionConfig c;
    CHECK_NOTHROW(c.validate());
    const auto d = apply_overrides(c, {{"max_steps", 3}, {"limits", {{"max_outputs", 40}}}, {"lambda", 0.25}});
    CHECK(d.max_steps == 3);
    CHECK(d.limits.max_outputs == 40);
    CHECK(d.lambda == 0.25);
    CHECK_THROWS_AS(apply_overrides(c, {{"max_stepz", 3}}), ValidationError);
    CHECK_THROWS_AS(apply_overrides(c, {{"limits", {{"depth", 2}}}}), ValidationError);
    CHECK_THROWS_AS(apply_overrides(c, nlohmann::json::array()), ValidationError);
    CHECK(to_json(apply_overrides(c, to_json(c))) == to_json(c));

    auto bad = c;
    bad.top_k = 2;
    bad.max_steps = 5;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = c;
    bad.max_prompt_chars = 100;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = c;
    bad.policy.kind = PolicySpec::Kind::Remote;
    CHECK_THROWS_AS(bad.validate(), ValidationError);

    CHECK_THROWS_AS(ScriptedPolicy(nlohmann::json::object()), ValidationError);
    CHECK_THROWS_AS(ScriptedPolicy(nlohmann::json::parse(R"([{"pick_by": 1}])")), ValidationError);
    CHECK(trace_ref(test::student(), "q", c) == trace_ref(test::student(), "q", c));
    CHECK(trace_ref(test::student(), "q", c) != trace_ref(test::student(), "r", c));
}

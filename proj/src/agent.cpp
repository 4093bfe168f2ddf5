// SPDX-License-Identifier: Apache-2.0
#include <dex/agent.hpp>

#include "http_client.hpp"

#include <algorithm>
#include <sstream>

namespace dex {

// ---------------------------------------------------------------------------
// Config

DetectorConfig SessionConfig::detector() const
{
    DetectorConfig d;
    d.seed = seed;
    return d;
}

void SessionConfig::validate() const
{
    ranking().validate();
    if (top_k < max_steps)
        throw ValidationError("top_k must be at least max_steps so every picked insight fits in the report");
    if (candidates_shown == 0)
        throw ValidationError("candidates_shown must be positive");
    if (max_prompt_chars <= kRetryReserve)
        throw ValidationError("max_prompt_chars is too small");
    if (policy.kind == PolicySpec::Kind::Scripted && !policy.script.is_array())
        throw ValidationError("scripted policy needs a JSON array script");
    if (policy.kind == PolicySpec::Kind::Remote && policy.url.empty())
        throw ValidationError("remote policy needs an endpoint URL");
}

namespace {

nlohmann::json limits_json(const EnumLimits& l)
{
    return {
        {"max_subspace_depth", l.max_subspace_depth},
        {"max_distinct_for_filter", l.max_distinct_for_filter},
        {"max_group_count", l.max_group_count},
        {"max_total_aes", l.max_total_aes},
        {"max_outputs", l.max_outputs},
        {"max_explanations", l.max_explanations},
        {"init_depth", l.init_depth},
    };
}

template <typename T>
void take(const nlohmann::json& j, const char* key, T& out)
{
    if (j.contains(key))
    {
        try
        {
            out = j.at(key).get<T>();
        }
        catch (const nlohmann::json::exception&)
        {
            throw ValidationError(std::string("config field '") + key + "' has the wrong type");
        }
    }
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> known, std::string_view where)
{
    for (const auto& [key, _]: j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ValidationError("unknown " + std::string(where) + " field '" + key + "'");
}

} // namespace

nlohmann::json to_json(const SessionConfig& c)
{
    nlohmann::json policy = {{"kind", c.policy.kind == PolicySpec::Kind::Scripted ? "scripted" : "remote"}};
    if (c.policy.kind == PolicySpec::Kind::Scripted)
        policy["script"] = c.policy.script;
    else
    {
        policy["url"] = c.policy.url;
        policy["model"] = c.policy.model;
        policy["key_env"] = c.policy.key_env;
        policy["temperature"] = c.policy.temperature;
        policy["timeout_seconds"] = c.policy.timeout_seconds;
    }
    return {
        {"max_steps", c.max_steps},
        {"max_prompt_chars", c.max_prompt_chars},
        {"candidates_shown", c.candidates_shown},
        {"top_k", c.top_k},
        {"top_k_prime", c.top_k_prime},
        {"lambda", c.lambda},
        {"seed", c.seed},
        {"limits", limits_json(c.limits)},
        {"policy", std::move(policy)},
    };
}

SessionConfig apply_overrides(SessionConfig c, const nlohmann::json& j)
{
    if (j.is_null())
        return c;
    if (!j.is_object())
        throw ValidationError("config overrides must be a JSON object");
    reject_unknown(j,
                   {"max_steps", "max_prompt_chars", "candidates_shown", "top_k", "top_k_prime", "lambda", "seed",
                    "limits", "policy"},
                   "config");
    take(j, "max_steps", c.max_steps);
    take(j, "max_prompt_chars", c.max_prompt_chars);
    take(j, "candidates_shown", c.candidates_shown);
    take(j, "top_k", c.top_k);
    take(j, "top_k_prime", c.top_k_prime);
    take(j, "lambda", c.lambda);
    take(j, "seed", c.seed);
    if (j.contains("limits"))
    {
        const auto& l = j["limits"];
        if (!l.is_object())
            throw ValidationError("limits must be an object");
        reject_unknown(l,
                       {"max_subspace_depth", "max_distinct_for_filter", "max_group_count", "max_total_aes",
                        "max_outputs", "max_explanations", "init_depth"},
                       "limits");
        take(l, "max_subspace_depth", c.limits.max_subspace_depth);
        take(l, "max_distinct_for_filter", c.limits.max_distinct_for_filter);
        take(l, "max_group_count", c.limits.max_group_count);
        take(l, "max_total_aes", c.limits.max_total_aes);
        take(l, "max_outputs", c.limits.max_outputs);
        take(l, "max_explanations", c.limits.max_explanations);
        take(l, "init_depth", c.limits.init_depth);
    }
    if (j.contains("policy"))
    {
        const auto& p = j["policy"];
        if (!p.is_object())
            throw ValidationError("policy must be an object");
        reject_unknown(p, {"kind", "script", "url", "model", "key_env", "temperature", "timeout_seconds"}, "policy");
        std::string kind = c.policy.kind == PolicySpec::Kind::Scripted ? "scripted" : "remote";
        take(p, "kind", kind);
        if (kind == "scripted")
            c.policy.kind = PolicySpec::Kind::Scripted;
        else if (kind == "remote")
            c.policy.kind = PolicySpec::Kind::Remote;
        else
            throw ValidationError("policy kind must be 'scripted' or 'remote'");
        if (p.contains("script"))
            c.policy.script = p["script"];
        take(p, "url", c.policy.url);
        take(p, "model", c.policy.model);
        take(p, "key_env", c.policy.key_env);
        take(p, "temperature", c.policy.temperature);
        take(p, "timeout_seconds", c.policy.timeout_seconds);
    }
    return c;
}

std::string_view termination_name(Termination t)
{
    switch (t)
    {
        case Termination::PolicyChoseTerminate: return "policy_chose_terminate";
        case Termination::StepBudget: return "step_budget";
        case Termination::TokenBudget: return "token_budget";
        case Termination::NoCandidates: return "no_candidates";
        case Termination::Cancelled: return "cancelled";
        case Termination::TransportFailure: return "transport_failure";
    }
    return "unknown";
}

std::string_view status_name(SessionStatus s)
{
    switch (s)
    {
        case SessionStatus::Running: return "running";
        case SessionStatus::Done: return "done";
        case SessionStatus::Degraded: return "degraded";
        case SessionStatus::Failed: return "failed";
    }
    return "unknown";
}

std::vector<std::string> ExplorationSequence::picked() const
{
    std::vector<std::string> out;
    for (const auto& s: steps)
        if (s.action != ActionKind::Back)
            out.push_back(s.picked);
    return out;
}

// ---------------------------------------------------------------------------
// Decisions

std::string_view parse_failure_name(ParseFailure f)
{
    switch (f)
    {
        case ParseFailure::NoJson: return "no_json";
        case ParseFailure::Schema: return "schema";
        case ParseFailure::Bounds: return "bounds";
        case ParseFailure::UnknownAction: return "unknown_action";
        case ParseFailure::Inapplicable: return "inapplicable";
    }
    return "unknown";
}

std::optional<nlohmann::json> first_json_object(std::string_view raw)
{
    for (std::size_t start = raw.find('{'); start != std::string_view::npos; start = raw.find('{', start + 1))
    {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < raw.size(); ++i)
        {
            const char c = raw[i];
            if (in_string)
            {
                if (escaped)
                    escaped = false;
                else if (c == '\\')
                    escaped = true;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"')
                in_string = true;
            else if (c == '{')
                ++depth;
            else if (c == '}' && --depth == 0)
            {
                auto parsed = nlohmann::json::parse(raw.substr(start, i - start + 1), nullptr, false);
                if (!parsed.is_discarded() && parsed.is_object())
                    return parsed;
                break;
            }
        }
    }
    return std::nullopt;
}

namespace {

ParseResult fail(ParseFailure f, std::string message)
{
    ParseResult r;
    r.failure = f;
    r.message = std::move(message);
    return r;
}

} // namespace

ParseResult parse_decision(std::string_view raw, const DecisionContext& context)
{
    const auto obj = first_json_object(raw);
    if (!obj)
        return fail(ParseFailure::NoJson, "no JSON object found in the reply");
    if (!obj->contains("action") || !(*obj)["action"].is_string())
        return fail(ParseFailure::Schema, "field 'action' must be a string");

    const auto action = parse_action((*obj)["action"].get<std::string>());
    if (!action || *action == ActionKind::Init)
        return fail(ParseFailure::UnknownAction, "unknown action '" + (*obj)["action"].get<std::string>() + "'");

    PolicyDecision d;
    d.action = *action;
    if (obj->contains("rationale") && (*obj)["rationale"].is_string())
        d.rationale = (*obj)["rationale"].get<std::string>();

    if (d.action == ActionKind::Terminate)
        return {d, {}, {}};
    if (d.action == ActionKind::Back)
    {
        if (!context.back_allowed)
            return fail(ParseFailure::Inapplicable, "back is not available at the first step");
        return {d, {}, {}};
    }

    if (!obj->contains("pick") || !(*obj)["pick"].is_number_integer())
        return fail(ParseFailure::Schema, "field 'pick' must be an integer candidate number");
    const auto pick = (*obj)["pick"].get<long long>();
    const auto n = static_cast<long long>(context.applicable.size());
    if (pick < 1 || pick > n)
        return fail(ParseFailure::Bounds,
                    "pick " + std::to_string(pick) + " is outside 1.." + std::to_string(n));
    d.pick = static_cast<std::size_t>(pick - 1);
    const auto& allowed = context.applicable[d.pick];
    if (std::find(allowed.begin(), allowed.end(), d.action) == allowed.end())
        return fail(ParseFailure::Inapplicable, std::string(action_name(d.action)) + " does not apply to candidate " +
                                                    std::to_string(pick));
    return {d, {}, {}};
}

// ---------------------------------------------------------------------------
// Prompts

std::string schema_summary(const Dataset& dataset)
{
    std::ostringstream os;
    for (const auto& c: dataset.columns())
    {
        os << "- " << c.name() << ": ";
        if (c.is_measure())
            os << "measure";
        else
            os << (c.ordered() ? "ordered dimension" : "dimension") << " (" << c.distinct_count() << " values)";
        os << "\n";
    }
    os << "Rows: " << dataset.row_count() << "\n";
    return os.str();
}

namespace {

constexpr std::string_view kPromptHeader =
    "You are a data analyst exploring a dataset to answer a question. At every step you pick one candidate insight "
    "and one analysis action to apply to it.\n";

constexpr std::string_view kActionGuide =
    "Actions:\n"
    "- understand: drill into the insight by adding a filter or changing the breakdown\n"
    "- summarize: check whether the insight holds for every value of another dimension\n"
    "- compare: check the insight against neighbors that change one of its filter values\n"
    "- explain: find a filter value whose exclusion removes the insight's difference\n"
    "- back: return to the previous list of candidates\n"
    "- terminate: stop exploring and write the report\n";

constexpr std::string_view kFormat =
    "Reply with a single JSON object and nothing else:\n"
    "{\"pick\": <candidate number>, \"action\": \"<action>\", \"rationale\": \"<one sentence>\"}\n"
    "Use only an action listed for the picked candidate, or back/terminate.\n";

std::string join_actions(const std::vector<ActionKind>& actions)
{
    std::string out;
    for (auto a: actions)
    {
        if (!out.empty())
            out += ", ";
        out += action_name(a);
    }
    return out;
}

std::string compose(const PromptInput& in, std::size_t elided, std::size_t listed)
{
    std::ostringstream os;
    os << kPromptHeader << "\nDataset columns:\n" << in.schema_summary << "\nQuestion: " << in.question << "\n\n";
    os << "Exploration so far:\n";
    if (in.history.empty())
        os << "(nothing yet)\n";
    if (elided)
        os << "(" << elided << " earlier step" << (elided == 1 ? "" : "s") << " omitted)\n";
    for (std::size_t i = elided; i < in.history.size(); ++i)
        os << i + 1 << ". " << in.history[i] << "\n";
    os << "\nCandidate insights:\n";
    for (std::size_t i = 0; i < listed; ++i)
    {
        os << i + 1 << ". " << in.candidates[i].text << "\n   actions: ";
        const auto& acts = i < in.context.applicable.size() ? in.context.applicable[i] : std::vector<ActionKind> {};
        os << join_actions(acts) << "\n";
    }
    os << "\n" << kActionGuide;
    os << (in.context.back_allowed ? "back is available.\n" : "back is not available yet.\n");
    os << "\n" << kFormat;
    return os.str();
}

} // namespace

PromptRender render_step_prompt(const PromptInput& in)
{
    PromptRender r;
    std::size_t listed = in.candidates.size();
    std::size_t elided = 0;
    r.text = compose(in, elided, listed);
    while (r.text.size() > in.max_chars && elided < in.history.size())
        r.text = compose(in, ++elided, listed);
    const std::size_t floor = std::min(listed, kMinPromptCandidates);
    while (r.text.size() > in.max_chars && listed > floor)
        r.text = compose(in, elided, --listed);
    r.candidates_listed = listed;
    r.history_elided = elided;
    r.fits = r.text.size() <= in.max_chars;
    return r;
}

std::string retry_suffix(const ParseResult& failure)
{
    std::string message = failure.message.substr(0, 200);
    return "\nYour previous reply was rejected (" + std::string(parse_failure_name(failure.failure)) + ": " + message +
           "). Reply again with only the JSON object.\n";
}

// ---------------------------------------------------------------------------
// Policies

ScriptedPolicy::ScriptedPolicy(nlohmann::json script): script_(std::move(script))
{
    if (!script_.is_array())
        throw ValidationError("script must be a JSON array");
    for (const auto& entry: script_)
    {
        if (!entry.is_object() || !entry.contains("action") || !entry["action"].is_string())
            throw ValidationError("every script entry needs an 'action' string");
        if (entry.contains("pick_by") && !entry["pick_by"].is_string() && !entry["pick_by"].is_number_integer())
            throw ValidationError("'pick_by' must be a substring or a 1-based index");
    }
}

std::string ScriptedPolicy::respond(const PolicyRequest& request)
{
    if (request.retry && !last_.empty())
        return last_;
    auto terminate = [&](const std::string& why) {
        last_ = nlohmann::json {{"action", "terminate"}, {"rationale", why}}.dump();
        return last_;
    };
    if (cursor_ >= script_.size())
        return terminate("script finished");

    const auto& entry = script_[cursor_++];
    const std::string action = entry["action"].get<std::string>();
    std::size_t pick = 1;
    if (entry.contains("pick_by"))
    {
        const auto& by = entry["pick_by"];
        if (by.is_number_integer())
            pick = static_cast<std::size_t>(std::max<long long>(0, by.get<long long>()));
        else
        {
            const auto needle = by.get<std::string>();
            const auto it = std::find_if(request.candidates.begin(), request.candidates.end(),
                                         [&](const Insight& i) { return i.text.find(needle) != std::string::npos; });
            if (it == request.candidates.end())
                return terminate("script entry " + std::to_string(cursor_) + " matched no candidate");
            pick = static_cast<std::size_t>(it - request.candidates.begin()) + 1;
        }
    }
    last_ = nlohmann::json {{"pick", pick}, {"action", action}, {"rationale", "script entry " + std::to_string(cursor_)}}
                .dump();
    return last_;
}

RemotePolicy::RemotePolicy(PolicySpec spec): spec_(std::move(spec)) {}

std::string RemotePolicy::complete(const std::string& prompt)
{
    const nlohmann::json body = {
        {"model", spec_.model},
        {"temperature", spec_.temperature},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
    };
    const auto reply = detail::post_json(spec_.url, body, spec_.key_env, spec_.timeout_seconds);
    try
    {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    }
    catch (const nlohmann::json::exception&)
    {
        throw detail::TransportError("chat completion reply has no message content");
    }
}

std::string RemotePolicy::respond(const PolicyRequest& request)
{
    return complete(std::string(request.prompt));
}

NarrativeFn RemotePolicy::narrator()
{
    return [this](const std::string& prompt) -> std::optional<std::string> { return complete(prompt); };
}

std::unique_ptr<Policy> make_policy(const PolicySpec& spec)
{
    if (spec.kind == PolicySpec::Kind::Remote)
        return std::make_unique<RemotePolicy>(spec);
    return std::make_unique<ScriptedPolicy>(spec.script);
}

// ---------------------------------------------------------------------------
// Sessions

std::string trace_ref(const Dataset& dataset, const std::string& question, const SessionConfig& config)
{
    const std::string material = dataset.id() + "\n" + hex64(dataset.fingerprint()) + "\n" + question + "\n" +
                                 to_json(config).dump();
    return "tr-" + hex64(fnv1a64(material));
}

std::vector<Insight> rank_candidates(const std::vector<Insight>& outputs, const PickedSet& picked)
{
    auto out = eliminate_redundant(outputs, picked);
    std::stable_sort(out.begin(), out.end(), [](const Insight& a, const Insight& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.id < b.id;
    });
    return out;
}

std::string trace_text(const std::vector<std::string>& trace)
{
    std::string out;
    for (const auto& line: trace)
        out += line + "\n";
    return out;
}

namespace {

nlohmann::json ids_of(const std::vector<Insight>& insights)
{
    auto out = nlohmann::json::array();
    for (const auto& i: insights)
        out.push_back(i.id);
    return out;
}

void store_result(InsightStore& store, const ActionResult& r)
{
    for (const auto& i: r.auxiliary)
        store.add(i);
    for (const auto& i: r.outputs)
        store.add(i);
}

class Tracer
{
public:
    explicit Tracer(std::vector<std::string>& lines): lines_(lines) {}
    void operator()(nlohmann::json record) { lines_.push_back(record.dump()); }

private:
    std::vector<std::string>& lines_;
};

} // namespace

SessionOutcome run_session(const Dataset& dataset, const std::string& question, const SessionConfig& config,
                           Policy& policy, EmbeddingProvider& embeddings, const SessionHooks& hooks)
{
    config.validate();
    SessionOutcome out;
    auto& seq = out.sequence;
    Tracer trace(out.trace);
    const ActionContext base_ctx {dataset, config.limits, config.detector(), nullptr};
    const std::string summary = schema_summary(dataset);
    const std::string ref = trace_ref(dataset, question, config);

    trace({{"record", "session"}, {"trace_ref", ref}, {"question", question}, {"policy", policy.name()},
           {"config", to_json(config)}});

    seq.init = init(base_ctx);
    store_result(seq.store, seq.init);
    trace({{"record", "init"}, {"outputs", ids_of(seq.init.outputs)}, {"ae_evaluated", seq.init.stats.ae_evaluated},
           {"note", seq.init.note}});
    if (hooks.on_init)
        hooks.on_init(seq.init);

    std::vector<std::vector<Insight>> stack {seq.init.outputs};
    PickedSet picked;
    std::vector<std::string> history;
    bool transport_failed = false;

    while (true)
    {
        if (hooks.cancelled && hooks.cancelled())
        {
            seq.terminated = Termination::Cancelled;
            break;
        }
        if (seq.steps.size() >= config.max_steps)
        {
            seq.terminated = Termination::StepBudget;
            break;
        }
        auto candidates = rank_candidates(stack.back(), picked);
        if (candidates.empty())
        {
            seq.terminated = Termination::NoCandidates;
            break;
        }
        if (candidates.size() > config.candidates_shown)
            candidates.resize(config.candidates_shown);

        PromptInput input;
        input.question = question;
        input.schema_summary = summary;
        input.history = history;
        input.candidates = candidates;
        input.context.back_allowed = stack.size() > 1;
        for (const auto& c: candidates)
            input.context.applicable.push_back(applicable_actions(c));
        input.max_chars = config.max_prompt_chars - kRetryReserve;

        const auto prompt = render_step_prompt(input);
        if (!prompt.fits)
        {
            trace({{"record", "budget"}, {"step", seq.steps.size()}, {"chars", prompt.text.size()}});
            seq.terminated = Termination::TokenBudget;
            break;
        }
        candidates.resize(prompt.candidates_listed);
        input.context.applicable.resize(prompt.candidates_listed);

        const std::size_t step_index = seq.steps.size();
        std::optional<PolicyDecision> decision;
        std::optional<ParseResult> last_failure;
        int transport_errors = 0;
        for (int attempt = 0; attempt < 2 && !decision;)
        {
            std::string text = prompt.text;
            if (last_failure)
                text += retry_suffix(*last_failure);
            out.prompt_sizes.push_back(text.size());
            trace({{"record", "prompt"}, {"step", step_index}, {"attempt", attempt}, {"chars", text.size()},
                   {"text", text}});
            std::string raw;
            try
            {
                raw = policy.respond({text, candidates, step_index, attempt > 0});
            }
            catch (const std::exception& e)
            {
                trace({{"record", "transport_error"}, {"step", step_index}, {"message", e.what()}});
                if (++transport_errors >= 2)
                    break;
                continue;
            }
            trace({{"record", "response"}, {"step", step_index}, {"attempt", attempt}, {"text", raw}});
            auto parsed = parse_decision(raw, input.context);
            if (parsed)
                decision = parsed.decision;
            else
            {
                trace({{"record", "parse_failure"}, {"step", step_index}, {"attempt", attempt},
                       {"reason", parse_failure_name(parsed.failure)}, {"message", parsed.message}});
                last_failure = std::move(parsed);
            }
            ++attempt;
        }
        if (transport_errors >= 2)
        {
            transport_failed = true;
            seq.terminated = Termination::TransportFailure;
            break;
        }

        bool fallback = false;
        if (!decision)
        {
            fallback = true;
            PolicyDecision d;
            d.pick = 0;
            d.rationale = "fallback after repeated invalid replies";
            const auto& acts = input.context.applicable[0];
            d.action = acts.empty() ? ActionKind::Terminate : acts.front();
            decision = d;
        }
        trace({{"record", "decision"},
               {"step", step_index},
               {"action", action_name(decision->action)},
               {"pick", decision->action == ActionKind::Terminate || decision->action == ActionKind::Back
                            ? nlohmann::json(nullptr)
                            : nlohmann::json(candidates[decision->pick].id)},
               {"rationale", decision->rationale},
               {"fallback", fallback}});

        if (decision->action == ActionKind::Terminate)
        {
            seq.terminated = Termination::PolicyChoseTerminate;
            break;
        }

        ExplorationStep step;
        step.index = step_index;
        step.action = decision->action;
        step.fallback = fallback;
        if (decision->action == ActionKind::Back)
        {
            stack.pop_back();
            step.result.action = ActionKind::Back;
            step.result.outputs = stack.back();
        }
        else
        {
            const Insight& target = candidates[decision->pick];
            step.picked = target.id;
            ActionContext ctx = base_ctx;
            ctx.store = &seq.store;
            step.result = run_action(decision->action, ctx, target);
            store_result(seq.store, step.result);
            stack.push_back(step.result.outputs);
            picked.insert(target.id);
            history.push_back(std::string(action_name(decision->action)) + ": " + target.text);
        }
        trace({{"record", "step"},
               {"step", step_index},
               {"action", action_name(step.action)},
               {"picked", step.picked.empty() ? nlohmann::json(nullptr) : nlohmann::json(step.picked)},
               {"outputs", ids_of(step.result.outputs)},
               {"ae_evaluated", step.result.stats.ae_evaluated},
               {"note", step.result.note}});
        seq.steps.push_back(std::move(step));
        if (hooks.on_step)
            hooks.on_step(seq.steps.back());
    }

    trace({{"record", "terminal"},
           {"reason", termination_name(seq.terminated)},
           {"steps", seq.steps.size()},
           {"picked", seq.picked()}});

    const auto top = flatten_top_k(seq.store.all(), picked, question, config.ranking(), embeddings);
    out.report = make_report(dataset, question, top.insights, transport_failed ? NarrativeFn {} : policy.narrator());
    out.report.trace_ref = ref;
    const bool degraded = top.degraded || out.report.degraded || transport_failed ||
                          seq.terminated == Termination::Cancelled;
    out.report.degraded = degraded;
    out.status = degraded ? SessionStatus::Degraded : SessionStatus::Done;
    trace({{"record", "report"}, {"top_k", ids_of(top.insights)}, {"degraded", degraded}});
    return out;
}

} // namespace dex

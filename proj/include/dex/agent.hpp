// SPDX-License-Identifier: Apache-2.0
#pragma once

// The exploration loop: prompts a policy for (insight, action) decisions,
// runs actions, enforces budgets and assembles the final report.

#include <dex/actions.hpp>
#include <dex/ranking.hpp>
#include <dex/rendering.hpp>

#include <json.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dex {

struct PolicySpec
{
    enum class Kind
    {
        Scripted,
        Remote,
    };

    Kind kind = Kind::Scripted;
    /// [{pick_by: "substring" | 1-based index, action}]
    nlohmann::json script = nlohmann::json::array();
    std::string url;
    std::string model;
    std::string key_env = "DEX_POLICY_API_KEY";
    double temperature = 0.0;
    int timeout_seconds = 60;
};

struct SessionConfig
{
    std::size_t max_steps = 8;
    /// Characters stand in for tokens (roughly four characters per token).
    std::size_t max_prompt_chars = 24000;
    std::size_t candidates_shown = 10;
    std::size_t top_k = 10;
    std::size_t top_k_prime = 50;
    double lambda = 0.5;
    std::uint64_t seed = 0x5EED5EEDULL;
    EnumLimits limits {};
    PolicySpec policy {};

    /// Throws ValidationError on inconsistent budgets.
    void validate() const;
    RankingConfig ranking() const { return {top_k, top_k_prime, lambda}; }
    DetectorConfig detector() const;
};

nlohmann::json to_json(const SessionConfig& config);
/// Applies a partial JSON object on top of `base`; unknown keys are rejected.
SessionConfig apply_overrides(SessionConfig base, const nlohmann::json& overrides);

enum class Termination
{
    PolicyChoseTerminate,
    StepBudget,
    TokenBudget,
    NoCandidates,
    Cancelled,
    TransportFailure,
};

std::string_view termination_name(Termination t);

enum class SessionStatus
{
    Running,
    Done,
    Degraded,
    Failed,
};

std::string_view status_name(SessionStatus s);

struct ExplorationStep
{
    std::size_t index = 0;
    /// Empty for Back.
    std::string picked;
    ActionKind action = ActionKind::Understand;
    ActionResult result;
    bool fallback = false;
};

struct ExplorationSequence
{
    ActionResult init;
    std::vector<ExplorationStep> steps;
    Termination terminated = Termination::PolicyChoseTerminate;
    InsightStore store;

    /// Ids picked by non-Back steps, in order.
    std::vector<std::string> picked() const;
};

// ---------------------------------------------------------------------------
// Decisions

struct PolicyDecision
{
    /// 0-based candidate index (the wire format is 1-based).
    std::size_t pick = 0;
    ActionKind action = ActionKind::Terminate;
    std::string rationale;
};

enum class ParseFailure
{
    NoJson,
    Schema,
    Bounds,
    UnknownAction,
    Inapplicable,
};

std::string_view parse_failure_name(ParseFailure f);

struct ParseResult
{
    std::optional<PolicyDecision> decision;
    ParseFailure failure = ParseFailure::NoJson;
    std::string message;

    explicit operator bool() const noexcept { return decision.has_value(); }
};

struct DecisionContext
{
    /// Applicable insight actions per shown candidate.
    std::vector<std::vector<ActionKind>> applicable;
    bool back_allowed = false;
};

/// First balanced JSON object in `raw`, if any.
std::optional<nlohmann::json> first_json_object(std::string_view raw);

ParseResult parse_decision(std::string_view raw, const DecisionContext& context);

// ---------------------------------------------------------------------------
// Prompts

struct PromptInput
{
    std::string question;
    std::string schema_summary;
    /// One-liners for previously picked insights, oldest first.
    std::vector<std::string> history;
    std::vector<Insight> candidates;
    DecisionContext context;
    std::size_t max_chars = 24000;
};

struct PromptRender
{
    std::string text;
    /// Candidates that made it into the prompt (a prefix of the input).
    std::size_t candidates_listed = 0;
    std::size_t history_elided = 0;
    bool fits = true;
};

inline constexpr std::size_t kMinPromptCandidates = 3;
/// Characters kept free so the retry suffix always fits.
inline constexpr std::size_t kRetryReserve = 400;

std::string schema_summary(const Dataset& dataset);

/// Deterministic step prompt. Elides the oldest history first, then trailing
/// candidates down to three; `fits` is false when even that is too long.
PromptRender render_step_prompt(const PromptInput& input);

std::string retry_suffix(const ParseResult& failure);

// ---------------------------------------------------------------------------
// Policies

struct PolicyRequest
{
    std::string_view prompt;
    const std::vector<Insight>& candidates;
    std::size_t step = 0;
    bool retry = false;
};

class Policy
{
public:
    virtual ~Policy() = default;
    virtual std::string name() const = 0;
    /// Raw reply text. Throws Error on transport failure.
    virtual std::string respond(const PolicyRequest& request) = 0;
    /// Narrative generator for the final report; empty for template narratives.
    virtual NarrativeFn narrator() { return {}; }
};

/// Replays a JSON script, matching `pick_by` substrings against candidate texts.
class ScriptedPolicy: public Policy
{
public:
    explicit ScriptedPolicy(nlohmann::json script);
    std::string name() const override { return "scripted"; }
    std::string respond(const PolicyRequest& request) override;

private:
    nlohmann::json script_;
    std::size_t cursor_ = 0;
    std::string last_;
};

/// Chat-completion endpoint: {model, temperature, messages} -> choices[0].message.content.
class RemotePolicy: public Policy
{
public:
    explicit RemotePolicy(PolicySpec spec);
    std::string name() const override { return "remote:" + spec_.model; }
    std::string respond(const PolicyRequest& request) override;
    NarrativeFn narrator() override;

private:
    std::string complete(const std::string& prompt);
    PolicySpec spec_;
};

std::unique_ptr<Policy> make_policy(const PolicySpec& spec);

// ---------------------------------------------------------------------------
// Sessions

struct SessionHooks
{
    std::function<void(const ActionResult&)> on_init;
    std::function<void(const ExplorationStep&)> on_step;
    /// Polled at every step boundary.
    std::function<bool()> cancelled;
};

struct SessionOutcome
{
    ExplorationSequence sequence;
    Report report;
    /// JSON-lines records (prompt, response, decision, step, terminal, report).
    std::vector<std::string> trace;
    SessionStatus status = SessionStatus::Done;
    /// Every prompt's size, for budget checks.
    std::vector<std::size_t> prompt_sizes;
};

std::string trace_ref(const Dataset& dataset, const std::string& question, const SessionConfig& config);

SessionOutcome run_session(const Dataset& dataset, const std::string& question, const SessionConfig& config,
                           Policy& policy, EmbeddingProvider& embeddings, const SessionHooks& hooks = {});

/// Candidate ordering used at each step: redundancy elimination, then score
/// descending (ties by id).
std::vector<Insight> rank_candidates(const std::vector<Insight>& outputs, const PickedSet& picked);

std::string trace_text(const std::vector<std::string>& trace);

} // namespace dex

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Analysis actions: functions from one insight to a set of insights.

#include <dex/dataset.hpp>
#include <dex/insights.hpp>

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace dex {

enum class ActionKind
{
    Init,
    Understand,
    Summarize,
    Compare,
    Explain,
    Back,
    Terminate,
};

std::string_view action_name(ActionKind kind);
std::optional<ActionKind> parse_action(std::string_view text);

/// The four actions that run in this module, in default fallback order.
inline constexpr ActionKind kInsightActions[] = {ActionKind::Understand, ActionKind::Summarize, ActionKind::Compare,
                                                 ActionKind::Explain};

/// Every insight ever produced in a session, in first-seen order.
class InsightStore
{
public:
    /// Adds the insight unless its id is already present. Returns true when added.
    bool add(const Insight& insight);
    const Insight* find(std::string_view id) const;
    bool contains(std::string_view id) const { return find(id) != nullptr; }
    const std::vector<Insight>& all() const noexcept { return items_; }
    std::size_t size() const noexcept { return items_.size(); }

private:
    std::vector<Insight> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct ActionStats
{
    std::size_t ae_evaluated = 0;
    double elapsed_ms = 0.0;
};

struct ActionResult
{
    ActionKind action = ActionKind::Init;
    std::optional<std::string> input_insight;
    std::vector<Insight> outputs;
    /// Insights referenced by outputs' children/exceptions that are not outputs
    /// themselves; they go to the insight store but are not candidates.
    std::vector<Insight> auxiliary;
    ActionStats stats;
    std::string note;
};

struct ActionContext
{
    const Dataset& dataset;
    EnumLimits limits {};
    DetectorConfig detector {};
    /// Used by explain to resolve compound children.
    const InsightStore* store = nullptr;
};

/// Whether `kind` can run on `insight` (Back/Terminate are always true here).
bool applicable(ActionKind kind, const Insight& insight);

/// Actions among kInsightActions that apply to `insight`.
std::vector<ActionKind> applicable_actions(const Insight& insight);

/// Root AEs plus, up to limits.init_depth, AEs over one-filter subspaces.
std::vector<AnalysisEntity> initial_aes(const Dataset& dataset, const EnumLimits& limits);

ActionResult init(const ActionContext& ctx);
ActionResult understand(const ActionContext& ctx, const Insight& insight);
ActionResult summarize(const ActionContext& ctx, const Insight& insight);
ActionResult compare(const ActionContext& ctx, const Insight& insight);
ActionResult explain(const ActionContext& ctx, const Insight& insight);

/// Dispatches to one of the four insight actions. Throws ApplicabilityError.
ActionResult run_action(ActionKind kind, const ActionContext& ctx, const Insight& insight);

/// Sorts by score descending (ties by id), drops duplicate ids, truncates.
void order_and_truncate(std::vector<Insight>& insights, std::size_t max_outputs);

} // namespace dex

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared test data: bundled demo datasets, seeded random tables and
// hand-built insights/series.

#include <dex/agent.hpp>
#include <dex/dataset.hpp>
#include <dex/insights.hpp>

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace dex::test {

std::string source_path(const std::string& relative);
std::string read_text(const std::string& path);

const Dataset& student();
const Dataset& cars();

inline const char* kStudentQuestion = "show me any interesting trend in mathematics scores for students";
inline const char* kToyotaQuestion = "I want to know the overall trend of Toyota";

nlohmann::json student_script();
nlohmann::json toyota_script();

/// Row-major table kept as text cells, used to cross-check the columnar engine.
struct RawTable
{
    std::vector<std::string> names;
    /// Column indexes that hold dimensions / measures in the generated schema.
    std::vector<std::size_t> dimension_columns;
    std::vector<std::size_t> measure_columns;
    /// Possible values per dimension column (index into names).
    std::vector<std::vector<std::string>> universes;
    std::vector<std::vector<std::string>> rows;

    std::string csv() const;
    std::size_t column(const std::string& name) const;
};

/// 5 dimensions (3 categorical, 2 integer ordinal), 2 measures with ~3% blanks.
RawTable random_table(std::uint64_t seed, std::size_t rows);

AnalysisEntity random_ae(std::mt19937_64& rng, const RawTable& table);

SeriesResult make_series(const std::vector<double>& values, bool ordered, int first_label = 2000);

/// Basic insight with an explicit id and score, for ranking tests.
Insight make_insight(std::string id, InsightType type, AnalysisEntity ae, InsightProperty property, double score);

struct RandomInsightOptions
{
    std::size_t dims = 3;
    std::size_t values_per_dim = 2;
    std::size_t max_depth = 3;
    /// Pool of comparison keys, so same-key families occur often.
    std::size_t leaders = 2;
    bool mixed_types = true;
};

std::vector<Insight> random_insights(std::mt19937_64& rng, std::size_t n, const RandomInsightOptions& options = {},
                                     const std::string& id_prefix = "r");

/// Scripted session on a bundled dataset with the default configuration.
SessionOutcome run_scripted(const Dataset& dataset, const std::string& question, const nlohmann::json& script,
                            SessionConfig config = {});

/// Runs a shell command and returns its exit status (-1 when it did not exit normally).
int run_command(const std::string& command);

/// Fresh empty directory under the system temp dir.
std::string scratch_dir(const std::string& name);

} // namespace dex::test

// SPDX-License-Identifier: Apache-2.0
#include "fixtures.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <sys/wait.h>

namespace dex::test {

std::string source_path(const std::string& relative)
{
    return std::string(DEX_SOURCE_DIR) + "/" + relative;
}

std::string read_text(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

const Dataset& student()
{
    static const Dataset ds = load_csv(read_text(source_path("data/student_performance.csv")));
    return ds;
}

const Dataset& cars()
{
    static const Dataset ds = load_csv(read_text(source_path("data/car_sales.csv")));
    return ds;
}

nlohmann::json student_script()
{
    return nlohmann::json::parse(read_text(source_path("scripts/student_walk.json")));
}

nlohmann::json toyota_script()
{
    return nlohmann::json::parse(read_text(source_path("scripts/toyota.json")));
}

std::string RawTable::csv() const
{
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i)
        {
            if (i)
                out += ',';
            out += cells[i];
        }
        out += '\n';
    };
    line(names);
    for (const auto& r: rows)
        line(r);
    return out;
}

std::size_t RawTable::column(const std::string& name) const
{
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end())
        throw std::runtime_error("no column " + name);
    return static_cast<std::size_t>(it - names.begin());
}

RawTable random_table(std::uint64_t seed, std::size_t rows)
{
    std::mt19937_64 rng(seed);
    RawTable t;
    t.names = {"Region", "Product", "Channel", "Year", "Tier", "Sales", "Units"};
    t.dimension_columns = {0, 1, 2, 3, 4};
    t.measure_columns = {5, 6};
    t.universes = {
        {"East", "North", "South", "West"},
        {"Alpha", "Beta", "Delta", "Epsilon", "Gamma", "Zeta"},
        {"Online", "Retail", "Wholesale"},
        {"2015", "2016", "2017", "2018", "2019", "2020", "2021", "2022"},
        {"1", "2", "3", "4", "5"},
    };
    std::uniform_real_distribution<double> sales(0.0, 1000.0);
    std::uniform_int_distribution<int> units(0, 5000);
    std::uniform_real_distribution<double> blank(0.0, 1.0);
    for (std::size_t r = 0; r < rows; ++r)
    {
        std::vector<std::string> row;
        for (const auto& u: t.universes)
            row.push_back(u[std::uniform_int_distribution<std::size_t>(0, u.size() - 1)(rng)]);
        row.push_back(blank(rng) < 0.03 ? std::string() : format_fixed(sales(rng), 2));
        row.push_back(blank(rng) < 0.03 ? std::string() : std::to_string(units(rng)));
        t.rows.push_back(std::move(row));
    }
    return t;
}

AnalysisEntity random_ae(std::mt19937_64& rng, const RawTable& table)
{
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    AnalysisEntity ae;
    ae.aggregate = std::array {Aggregate::Sum, Aggregate::Avg, Aggregate::Count}[pick(3)];
    if (ae.aggregate != Aggregate::Count)
        ae.measure = table.names[table.measure_columns[pick(table.measure_columns.size())]];
    const std::size_t b = pick(table.dimension_columns.size());
    ae.breakdown = table.names[table.dimension_columns[b]];

    std::vector<std::size_t> others;
    for (std::size_t d = 0; d < table.dimension_columns.size(); ++d)
        if (d != b)
            others.push_back(d);
    std::shuffle(others.begin(), others.end(), rng);
    const std::size_t depth = pick(4);
    std::vector<Filter> filters;
    for (std::size_t i = 0; i < depth; ++i)
    {
        const auto& u = table.universes[others[i]];
        filters.push_back({table.names[table.dimension_columns[others[i]]], u[pick(u.size())]});
    }
    ae.subspace = Subspace(std::move(filters));
    return ae;
}

SeriesResult make_series(const std::vector<double>& values, bool ordered, int first_label)
{
    SeriesResult s;
    s.ordered = ordered;
    for (std::size_t i = 0; i < values.size(); ++i)
        s.groups.push_back({std::to_string(first_label + static_cast<int>(i)), values[i], 1, 0.0});
    if (!ordered)
        std::stable_sort(s.groups.begin(), s.groups.end(),
                         [](const SeriesGroup& a, const SeriesGroup& b) { return a.value > b.value; });
    return s;
}

Insight make_insight(std::string id, InsightType type, AnalysisEntity ae, InsightProperty property, double score)
{
    Insight i;
    i.id = std::move(id);
    i.type = type;
    i.ae = std::move(ae);
    i.property = std::move(property);
    i.score = score;
    return i;
}

std::vector<Insight> random_insights(std::mt19937_64& rng, std::size_t n, const RandomInsightOptions& o,
                                     const std::string& id_prefix)
{
    auto pick = [&](std::size_t k) { return std::uniform_int_distribution<std::size_t>(0, k - 1)(rng); };
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Insight> out;
    for (std::size_t i = 0; i < n; ++i)
    {
        std::vector<Filter> filters;
        const std::size_t depth = pick(std::min(o.max_depth, o.dims) + 1);
        std::vector<std::size_t> dims(o.dims);
        std::iota(dims.begin(), dims.end(), std::size_t {0});
        std::shuffle(dims.begin(), dims.end(), rng);
        for (std::size_t k = 0; k < depth; ++k)
            filters.push_back({"D" + std::to_string(dims[k]), "v" + std::to_string(pick(o.values_per_dim))});

        AnalysisEntity ae;
        ae.aggregate = Aggregate::Sum;
        ae.measure = "M";
        ae.subspace = Subspace(std::move(filters));
        ae.breakdown = "B";

        const std::string leader = "L" + std::to_string(pick(o.leaders));
        InsightType type = InsightType::Top1;
        InsightProperty prop = Top1Property {leader, 0.5};
        if (o.mixed_types && pick(2) == 0)
        {
            type = InsightType::Trend;
            prop = TrendProperty {pick(o.leaders) == 0 ? Direction::Rising : Direction::Falling, 1.0, 0.01};
        }
        char id[32];
        std::snprintf(id, sizeof id, "%03zu", i);
        out.push_back(make_insight(id_prefix + id, type, std::move(ae), std::move(prop), unit(rng)));
    }
    return out;
}

SessionOutcome run_scripted(const Dataset& dataset, const std::string& question, const nlohmann::json& script,
                            SessionConfig config)
{
    config.policy.kind = PolicySpec::Kind::Scripted;
    config.policy.script = script;
    ScriptedPolicy policy(script);
    LocalEmbedding embeddings;
    return run_session(dataset, question, config, policy, embeddings);
}

int run_command(const std::string& command)
{
    const int raw = std::system(command.c_str());
    if (raw == -1 || !WIFEXITED(raw))
        return -1;
    return WEXITSTATUS(raw);
}

std::string scratch_dir(const std::string& name)
{
    const auto dir = std::filesystem::temp_directory_path() / ("dex-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

} // namespace dex::test

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Columnar in-memory tables and the grouped-aggregation evaluator behind
// analysis entities (AEs).
//
// An AE <agg(M), S, B> is the query
//   SELECT agg(M) FROM D WHERE S GROUP BY B
// where S is a conjunction of equality filters on distinct dimensions.

#include <dex/common.hpp>

#include <json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace dex {

enum class ColumnKind
{
    Dimension,
    Measure,
};

/// One attribute of a dataset. Dimensions are dictionary encoded: `codes[row]`
/// indexes `values()`. Measures hold a double per row plus a validity byte.
class Column
{
public:
    static Column dimension(std::string name, bool ordered, std::vector<std::string> values,
                            std::vector<std::uint32_t> codes, std::string inference = {});
    static Column measure(std::string name, std::vector<double> numbers, std::vector<std::uint8_t> valid,
                          std::string inference = {});

    const std::string& name() const noexcept { return name_; }
    ColumnKind kind() const noexcept { return kind_; }
    bool is_dimension() const noexcept { return kind_ == ColumnKind::Dimension; }
    bool is_measure() const noexcept { return kind_ == ColumnKind::Measure; }

    /// True for temporal/ordinal dimensions whose values sort naturally (e.g. Year).
    bool ordered() const noexcept { return ordered_; }

    /// Distinct dimension values in natural order (numeric for ordered, lexicographic otherwise).
    const std::vector<std::string>& values() const noexcept { return values_; }
    std::span<const std::uint32_t> codes() const noexcept { return codes_; }
    std::optional<std::uint32_t> code_of(std::string_view value) const;

    std::span<const double> numbers() const noexcept { return numbers_; }
    std::span<const std::uint8_t> valid() const noexcept { return valid_; }

    std::size_t size() const noexcept { return is_dimension() ? codes_.size() : numbers_.size(); }
    std::size_t distinct_count() const noexcept;

    /// Human-readable record of why schema inference chose this kind.
    const std::string& inference() const noexcept { return inference_; }

private:
    Column() = default;

    std::string name_;
    ColumnKind kind_ = ColumnKind::Dimension;
    bool ordered_ = false;
    std::vector<std::string> values_;
    std::vector<std::uint32_t> codes_;
    std::vector<double> numbers_;
    std::vector<std::uint8_t> valid_;
    std::size_t measure_distinct_ = 0;
    std::string inference_;
};

/// Immutable table. Share it as `std::shared_ptr<const Dataset>`.
class Dataset
{
public:
    Dataset(std::string id, std::vector<Column> columns);

    const std::string& id() const noexcept { return id_; }
    std::size_t row_count() const noexcept { return row_count_; }
    const std::vector<Column>& columns() const noexcept { return columns_; }

    const Column* find(std::string_view name) const noexcept;
    const Column& column(std::string_view name) const;

    std::vector<const Column*> dimensions() const;
    std::vector<const Column*> measures() const;

    /// Hash over every column's contents; unchanged for the lifetime of the object.
    std::uint64_t fingerprint() const;

private:
    std::string id_;
    std::vector<Column> columns_;
    std::size_t row_count_ = 0;
};

using DatasetPtr = std::shared_ptr<const Dataset>;

struct LoadOptions
{
    char delimiter = ',';
    bool header = true;
    /// Integer-valued numeric columns with at most this many distinct values become
    /// ordered dimensions; dimensions above it are excluded from filter enumeration.
    std::size_t max_distinct_for_dimension = 50;
    /// Share of non-empty cells that must parse as numbers for a column to be numeric.
    double numeric_parse_rate = 0.95;
};

/// Parses delimited UTF-8 text with a header row and infers the schema.
/// Throws LoadError naming the offending line.
Dataset load_csv(std::string_view text, const LoadOptions& options = {});

/// Convenience wrapper around load_csv that reads a file.
Dataset load_csv_file(const std::string& path, const LoadOptions& options = {});

/// {columns:[{name, kind, ordered, distinct_count, inference}], row_count}
nlohmann::json schema_json(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Analysis entities

struct Filter
{
    std::string dimension;
    std::string value;

    friend bool operator==(const Filter&, const Filter&) = default;
    friend auto operator<=>(const Filter&, const Filter&) = default;
};

/// Conjunction of equality filters on pairwise-distinct dimensions, kept sorted
/// by dimension name so equal subspaces compare equal.
class Subspace
{
public:
    Subspace() = default;
    explicit Subspace(std::vector<Filter> filters);
    Subspace(std::initializer_list<Filter> filters): Subspace(std::vector<Filter>(filters)) {}

    const std::vector<Filter>& filters() const noexcept { return filters_; }
    bool empty() const noexcept { return filters_.empty(); }
    std::size_t size() const noexcept { return filters_.size(); }

    bool constrains(std::string_view dimension) const noexcept;
    const Filter* find(std::string_view dimension) const noexcept;

    /// Copy with one more filter. Throws ValidationError if the dimension is already constrained.
    Subspace with(Filter filter) const;
    /// Copy with the filter on `dimension` replaced by `value`.
    Subspace replaced(std::string_view dimension, std::string value) const;

    /// Set inclusion over filters.
    bool contains(const Subspace& other) const noexcept;
    Subspace united(const Subspace& other) const;

    std::string key() const;

    friend bool operator==(const Subspace&, const Subspace&) = default;

private:
    std::vector<Filter> filters_;
};

enum class Aggregate
{
    Sum,
    Avg,
    Count,
};

std::string_view aggregate_name(Aggregate agg);
std::optional<Aggregate> parse_aggregate(std::string_view text);

struct AnalysisEntity
{
    Aggregate aggregate = Aggregate::Sum;
    /// Ignored (kept empty) for COUNT.
    std::string measure;
    Subspace subspace;
    std::string breakdown;

    /// Canonical single-line form, e.g. "AVG(Score)|Subject=Math|Year".
    std::string key() const;

    friend bool operator==(const AnalysisEntity&, const AnalysisEntity&) = default;
};

nlohmann::json to_json(const AnalysisEntity& ae);
AnalysisEntity analysis_entity_from_json(const nlohmann::json& j);

/// Throws ValidationError when `ae` does not fit the dataset schema.
void validate(const Dataset& dataset, const AnalysisEntity& ae);

struct SeriesGroup
{
    std::string label;
    double value = 0.0;
    std::size_t rows = 0;
    /// Sample standard deviation of the measure within the group (0 for COUNT
    /// or single-row groups).
    double spread = 0.0;

    friend bool operator==(const SeriesGroup&, const SeriesGroup&) = default;
};

/// Materialized AE result. Ordered breakdowns keep natural order; others are
/// sorted by value, descending (ties by natural order).
struct SeriesResult
{
    std::vector<SeriesGroup> groups;
    bool ordered = false;

    bool empty() const noexcept { return groups.empty(); }
    std::size_t size() const noexcept { return groups.size(); }
    std::vector<double> values() const;
    std::optional<std::size_t> index_of(std::string_view label) const;
};

struct EvalOptions
{
    /// Rows matching any of these filters are dropped before grouping.
    std::vector<Filter> exclude;
};

/// Evaluates the AE. Rows with a missing measure value do not contribute to
/// SUM/AVG; COUNT counts rows. Groups without contributing rows are omitted.
SeriesResult evaluate(const Dataset& dataset, const AnalysisEntity& ae, const EvalOptions& options = {});

/// Rows satisfying the subspace and not matching any exclusion.
std::size_t count_rows(const Dataset& dataset, const Subspace& subspace, std::span<const Filter> exclude = {});

struct EnumLimits
{
    /// Maximum number of filters in a generated subspace.
    std::size_t max_subspace_depth = 3;
    /// Dimensions with more distinct values are never used as filters.
    std::size_t max_distinct_for_filter = 50;
    /// Dimensions with more distinct values are never used as breakdowns.
    std::size_t max_group_count = 100;
    std::size_t max_total_aes = 5000;
    /// Truncation for action outputs.
    std::size_t max_outputs = 30;
    std::size_t max_explanations = 3;
    /// Subspace depth explored by the initial action (0 = whole dataset only).
    std::size_t init_depth = 1;
};

/// Dimensions usable as a breakdown under `limits`, in column order.
std::vector<const Column*> breakdown_candidates(const Dataset& dataset, const EnumLimits& limits);

/// AEs "under" `ae`: first every alternative breakdown on the same subspace,
/// then the subspace extended by one filter d=v (d not constrained and not the
/// breakdown), each with every valid breakdown. Order: dimension name, value
/// order, breakdown name. Capped by `limits`.
std::vector<AnalysisEntity> enumerate_children(const Dataset& dataset, const AnalysisEntity& ae,
                                               const EnumLimits& limits);

/// Root AEs (empty subspace) for every breakdown and aggregate/measure pair,
/// ordered by breakdown name then aggregate then measure.
std::vector<AnalysisEntity> enumerate_roots(const Dataset& dataset, const EnumLimits& limits);

} // namespace dex

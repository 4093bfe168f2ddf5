// SPDX-License-Identifier: Apache-2.0
#include <dex/dataset.hpp>
#include <dex/simd.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace dex {

std::string format_fixed(double value, int decimals)
{
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, "%.*f", decimals, value);
    std::string out(buffer);
    if (out == "-0" || out.rfind("-0.", 0) == 0)
    {
        // avoid "-0.00" for values that round to zero
        bool all_zero = std::all_of(out.begin() + 1, out.end(), [](char c) { return c == '0' || c == '.'; });
        if (all_zero)
            out.erase(0, 1);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Column / Dataset

Column Column::dimension(std::string name, bool ordered, std::vector<std::string> values,
                         std::vector<std::uint32_t> codes, std::string inference)
{
    Column c;
    c.name_ = std::move(name);
    c.kind_ = ColumnKind::Dimension;
    c.ordered_ = ordered;
    c.values_ = std::move(values);
    c.codes_ = std::move(codes);
    c.inference_ = std::move(inference);
    std::unordered_set<std::string_view> seen;
    for (const auto& v: c.values_)
        if (!seen.insert(v).second)
            throw ValidationError("column '" + c.name_ + "' has duplicate dimension value '" + v + "'");
    for (auto code: c.codes_)
        if (code >= c.values_.size())
            throw ValidationError("column '" + c.name_ + "' has an out-of-range dictionary code");
    return c;
}

Column Column::measure(std::string name, std::vector<double> numbers, std::vector<std::uint8_t> valid,
                       std::string inference)
{
    if (numbers.size() != valid.size())
        throw ValidationError("measure '" + name + "' has mismatched validity mask");
    Column c;
    c.name_ = std::move(name);
    c.kind_ = ColumnKind::Measure;
    c.numbers_ = std::move(numbers);
    c.valid_ = std::move(valid);
    c.inference_ = std::move(inference);
    std::set<double> distinct;
    for (std::size_t i = 0; i < c.numbers_.size(); ++i)
        if (c.valid_[i])
            distinct.insert(c.numbers_[i]);
    c.measure_distinct_ = distinct.size();
    return c;
}

std::optional<std::uint32_t> Column::code_of(std::string_view value) const
{
    for (std::size_t i = 0; i < values_.size(); ++i)
        if (values_[i] == value)
            return static_cast<std::uint32_t>(i);
    return std::nullopt;
}

std::size_t Column::distinct_count() const noexcept
{
    return is_dimension() ? values_.size() : measure_distinct_;
}

Dataset::Dataset(std::string id, std::vector<Column> columns): id_(std::move(id)), columns_(std::move(columns))
{
    std::unordered_set<std::string_view> names;
    for (const auto& c: columns_)
        if (!names.insert(c.name()).second)
            throw ValidationError("duplicate column name '" + c.name() + "'");
    row_count_ = columns_.empty() ? 0 : columns_.front().size();
    for (const auto& c: columns_)
        if (c.size() != row_count_)
            throw ValidationError("column '" + c.name() + "' length differs from row count");
}

const Column* Dataset::find(std::string_view name) const noexcept
{
    for (const auto& c: columns_)
        if (c.name() == name)
            return &c;
    return nullptr;
}

const Column& Dataset::column(std::string_view name) const
{
    if (const auto* c = find(name))
        return *c;
    throw ValidationError("unknown column '" + std::string(name) + "'");
}

std::vector<const Column*> Dataset::dimensions() const
{
    std::vector<const Column*> out;
    for (const auto& c: columns_)
        if (c.is_dimension())
            out.push_back(&c);
    return out;
}

std::vector<const Column*> Dataset::measures() const
{
    std::vector<const Column*> out;
    for (const auto& c: columns_)
        if (c.is_measure())
            out.push_back(&c);
    return out;
}

std::uint64_t Dataset::fingerprint() const
{
    std::uint64_t h = fnv1a64(id_);
    auto mix_bytes = [&h](const void* data, std::size_t n) {
        h = fnv1a64(std::string_view(static_cast<const char*>(data), n), h);
    };
    for (const auto& c: columns_)
    {
        h = fnv1a64(c.name(), h);
        for (const auto& v: c.values())
            h = fnv1a64(v, h);
        mix_bytes(c.codes().data(), c.codes().size_bytes());
        mix_bytes(c.numbers().data(), c.numbers().size_bytes());
        mix_bytes(c.valid().data(), c.valid().size_bytes());
    }
    return h;
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

struct Record
{
    std::size_t line = 0;
    std::vector<std::string> fields;
};

// RFC 4180 style: quoted fields may contain delimiters, doubled quotes and newlines.
std::vector<Record> split_records(std::string_view text, char delimiter)
{
    std::vector<Record> records;
    Record current;
    std::string field;
    std::size_t line = 1;
    current.line = 1;
    bool in_quotes = false;
    bool field_started = false;
    bool record_has_content = false;

    auto end_field = [&] {
        current.fields.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        if (record_has_content || current.fields.size() > 1 || !current.fields.front().empty())
            records.push_back(std::move(current));
        current = Record {};
        record_has_content = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i)
    {
        const char c = text[i];
        if (in_quotes)
        {
            if (c == '"')
            {
                if (i + 1 < text.size() && text[i + 1] == '"')
                {
                    field.push_back('"');
                    ++i;
                }
                else
                    in_quotes = false;
            }
            else
            {
                if (c == '\n')
                    ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && !field_started)
        {
            in_quotes = true;
            field_started = true;
            record_has_content = true;
        }
        else if (c == delimiter)
        {
            end_field();
            record_has_content = true;
        }
        else if (c == '\r')
        {
            // tolerate CRLF
        }
        else if (c == '\n')
        {
            end_record();
            ++line;
            current.line = line;
        }
        else
        {
            field.push_back(c);
            field_started = true;
            record_has_content = true;
        }
    }
    if (in_quotes)
        throw LoadError(current.line, "unterminated quoted field");
    if (field_started || !current.fields.empty() || !field.empty())
        end_record();
    return records;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t'))
        s.remove_suffix(1);
    return s;
}

std::optional<double> parse_number(std::string_view s)
{
    s = trim(s);
    if (s.empty())
        return std::nullopt;
    if (s.front() == '+')
        s.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc {} || ptr != s.data() + s.size() || !std::isfinite(value))
        return std::nullopt;
    return value;
}

std::string integer_label(double v)
{
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%lld", static_cast<long long>(v));
    return buffer;
}

Column infer_column(std::string name, const std::vector<std::string_view>& cells, const LoadOptions& options)
{
    std::size_t non_empty = 0;
    std::size_t parsed = 0;
    bool integral = true;
    std::set<double> distinct_numbers;
    std::vector<std::optional<double>> numbers(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i)
    {
        if (trim(cells[i]).empty())
            continue;
        ++non_empty;
        numbers[i] = parse_number(cells[i]);
        if (numbers[i])
        {
            ++parsed;
            integral = integral && std::floor(*numbers[i]) == *numbers[i] && std::fabs(*numbers[i]) < 9.0e15;
            distinct_numbers.insert(*numbers[i]);
        }
    }

    const double rate = non_empty ? static_cast<double>(parsed) / static_cast<double>(non_empty) : 0.0;
    const bool numeric = non_empty > 0 && rate >= options.numeric_parse_rate;
    const std::string rate_text = format_fixed(100.0 * rate, 1) + "% numeric";
    const std::size_t cap = options.max_distinct_for_dimension;

    if (numeric && (distinct_numbers.size() > cap || !integral))
    {
        std::vector<double> values(cells.size(), 0.0);
        std::vector<std::uint8_t> valid(cells.size(), 0);
        for (std::size_t i = 0; i < cells.size(); ++i)
            if (numbers[i])
            {
                values[i] = *numbers[i];
                valid[i] = 1;
            }
        std::string why = rate_text + ", " +
                          (!integral ? std::string("non-integer values")
                                     : std::to_string(distinct_numbers.size()) + " distinct > " + std::to_string(cap)) +
                          " -> measure";
        return Column::measure(std::move(name), std::move(values), std::move(valid), std::move(why));
    }

    if (numeric && parsed == non_empty && non_empty == cells.size())
    {
        // small set of integers (e.g. Year): ordered dimension
        std::vector<double> sorted(distinct_numbers.begin(), distinct_numbers.end());
        std::vector<std::string> labels;
        labels.reserve(sorted.size());
        for (double v: sorted)
            labels.push_back(integer_label(v));
        std::vector<std::uint32_t> codes(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i)
        {
            auto it = std::lower_bound(sorted.begin(), sorted.end(), *numbers[i]);
            codes[i] = static_cast<std::uint32_t>(it - sorted.begin());
        }
        std::string why = rate_text + ", integer-valued with " + std::to_string(sorted.size()) + " distinct <= " +
                          std::to_string(cap) + " -> ordered dimension";
        return Column::dimension(std::move(name), true, std::move(labels), std::move(codes), std::move(why));
    }

    std::set<std::string_view> distinct;
    for (auto cell: cells)
        distinct.insert(trim(cell));
    std::vector<std::string> labels(distinct.begin(), distinct.end());
    std::map<std::string_view, std::uint32_t> index;
    for (std::size_t i = 0; i < labels.size(); ++i)
        index.emplace(labels[i], static_cast<std::uint32_t>(i));
    std::vector<std::uint32_t> codes(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i)
        codes[i] = index.at(trim(cells[i]));
    std::string why = rate_text + ", " + std::to_string(labels.size()) + " distinct -> dimension";
    if (labels.size() > cap)
        why += " (above filter cap " + std::to_string(cap) + ")";
    return Column::dimension(std::move(name), false, std::move(labels), std::move(codes), std::move(why));
}

} // namespace

Dataset load_csv(std::string_view text, const LoadOptions& options)
{
    if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
        static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF)
        text.remove_prefix(3);

    auto records = split_records(text, options.delimiter);
    if (records.empty())
        throw LoadError(0, "empty file");

    std::vector<std::string> names;
    std::size_t first_data = 0;
    const std::size_t width = records.front().fields.size();
    if (options.header)
    {
        for (auto& f: records.front().fields)
        {
            auto name = std::string(trim(f));
            if (name.empty())
                throw LoadError(records.front().line, "empty column name");
            names.push_back(std::move(name));
        }
        first_data = 1;
    }
    else
    {
        for (std::size_t i = 0; i < width; ++i)
            names.push_back("column" + std::to_string(i + 1));
    }
    {
        std::unordered_set<std::string_view> seen;
        for (const auto& n: names)
            if (!seen.insert(n).second)
                throw LoadError(records.front().line, "duplicate column name '" + n + "'");
    }
    if (records.size() == first_data)
        throw LoadError(0, "no data rows");

    for (std::size_t r = first_data; r < records.size(); ++r)
        if (records[r].fields.size() != width)
            throw LoadError(records[r].line, "expected " + std::to_string(width) + " fields, found " +
                                                 std::to_string(records[r].fields.size()));

    std::vector<Column> columns;
    columns.reserve(width);
    for (std::size_t c = 0; c < width; ++c)
    {
        std::vector<std::string_view> cells;
        cells.reserve(records.size() - first_data);
        for (std::size_t r = first_data; r < records.size(); ++r)
            cells.push_back(records[r].fields[c]);
        columns.push_back(infer_column(names[c], cells, options));
    }
    return Dataset("ds-" + hex64(fnv1a64(text), 12), std::move(columns));
}

Dataset load_csv_file(const std::string& path, const LoadOptions& options)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw LoadError(0, "cannot open '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return load_csv(buffer.str(), options);
}

nlohmann::json schema_json(const Dataset& dataset)
{
    auto columns = nlohmann::json::array();
    for (const auto& c: dataset.columns())
    {
        columns.push_back({
            {"name", c.name()},
            {"kind", c.is_dimension() ? "dimension" : "measure"},
            {"ordered", c.ordered()},
            {"distinct_count", c.distinct_count()},
            {"inference", c.inference()},
        });
    }
    return {{"dataset_id", dataset.id()}, {"columns", std::move(columns)}, {"row_count", dataset.row_count()}};
}

// ---------------------------------------------------------------------------
// Subspace / AE

Subspace::Subspace(std::vector<Filter> filters): filters_(std::move(filters))
{
    std::sort(filters_.begin(), filters_.end());
    for (std::size_t i = 1; i < filters_.size(); ++i)
        if (filters_[i].dimension == filters_[i - 1].dimension)
            throw ValidationError("subspace constrains dimension '" + filters_[i].dimension + "' twice");
}

bool Subspace::constrains(std::string_view dimension) const noexcept
{
    return find(dimension) != nullptr;
}

const Filter* Subspace::find(std::string_view dimension) const noexcept
{
    for (const auto& f: filters_)
        if (f.dimension == dimension)
            return &f;
    return nullptr;
}

Subspace Subspace::with(Filter filter) const
{
    auto filters = filters_;
    filters.push_back(std::move(filter));
    return Subspace(std::move(filters));
}

Subspace Subspace::replaced(std::string_view dimension, std::string value) const
{
    auto copy = *this;
    for (auto& f: copy.filters_)
        if (f.dimension == dimension)
            f.value = std::move(value);
    return copy;
}

bool Subspace::contains(const Subspace& other) const noexcept
{
    return std::includes(filters_.begin(), filters_.end(), other.filters_.begin(), other.filters_.end());
}

Subspace Subspace::united(const Subspace& other) const
{
    std::vector<Filter> merged;
    std::set_union(filters_.begin(), filters_.end(), other.filters_.begin(), other.filters_.end(),
                   std::back_inserter(merged));
    Subspace out;
    out.filters_ = std::move(merged);
    return out;
}

std::string Subspace::key() const
{
    std::string out;
    for (const auto& f: filters_)
    {
        if (!out.empty())
            out += ';';
        out += f.dimension + "=" + f.value;
    }
    return out;
}

std::string_view aggregate_name(Aggregate agg)
{
    switch (agg)
    {
        case Aggregate::Sum: return "SUM";
        case Aggregate::Avg: return "AVG";
        case Aggregate::Count: return "COUNT";
    }
    return "?";
}

std::optional<Aggregate> parse_aggregate(std::string_view text)
{
    if (text == "SUM" || text == "sum")
        return Aggregate::Sum;
    if (text == "AVG" || text == "avg")
        return Aggregate::Avg;
    if (text == "COUNT" || text == "count")
        return Aggregate::Count;
    return std::nullopt;
}

std::string AnalysisEntity::key() const
{
    return std::string(aggregate_name(aggregate)) + "(" + measure + ")|" + subspace.key() + "|" + breakdown;
}

nlohmann::json to_json(const AnalysisEntity& ae)
{
    auto filters = nlohmann::json::array();
    for (const auto& f: ae.subspace.filters())
        filters.push_back({{"dim", f.dimension}, {"val", f.value}});
    return {
        {"agg", aggregate_name(ae.aggregate)},
        {"measure", ae.measure},
        {"filters", std::move(filters)},
        {"breakdown", ae.breakdown},
    };
}

AnalysisEntity analysis_entity_from_json(const nlohmann::json& j)
{
    AnalysisEntity ae;
    auto agg = parse_aggregate(j.at("agg").get<std::string>());
    if (!agg)
        throw ValidationError("unknown aggregate '" + j.at("agg").get<std::string>() + "'");
    ae.aggregate = *agg;
    ae.measure = j.value("measure", std::string {});
    std::vector<Filter> filters;
    for (const auto& f: j.at("filters"))
        filters.push_back({f.at("dim").get<std::string>(), f.at("val").get<std::string>()});
    ae.subspace = Subspace(std::move(filters));
    ae.breakdown = j.at("breakdown").get<std::string>();
    return ae;
}

void validate(const Dataset& dataset, const AnalysisEntity& ae)
{
    const auto* breakdown = dataset.find(ae.breakdown);
    if (!breakdown)
        throw ValidationError("unknown breakdown column '" + ae.breakdown + "'");
    if (!breakdown->is_dimension())
        throw ValidationError("breakdown '" + ae.breakdown + "' is not a dimension");
    if (ae.subspace.constrains(ae.breakdown))
        throw ValidationError("breakdown '" + ae.breakdown + "' is constrained by the subspace");
    if (ae.aggregate == Aggregate::Count)
    {
        if (!ae.measure.empty())
            throw ValidationError("COUNT takes no measure");
    }
    else
    {
        const auto* measure = dataset.find(ae.measure);
        if (!measure)
            throw ValidationError("unknown measure column '" + ae.measure + "'");
        if (!measure->is_measure())
            throw ValidationError("'" + ae.measure + "' is not a measure");
    }
    for (const auto& f: ae.subspace.filters())
    {
        const auto* dim = dataset.find(f.dimension);
        if (!dim)
            throw ValidationError("unknown filter column '" + f.dimension + "'");
        if (!dim->is_dimension())
            throw ValidationError("filter column '" + f.dimension + "' is not a dimension");
        if (!dim->code_of(f.value))
            throw ValidationError("value '" + f.value + "' not found in dimension '" + f.dimension + "'");
    }
}

std::vector<double> SeriesResult::values() const
{
    std::vector<double> out;
    out.reserve(groups.size());
    for (const auto& g: groups)
        out.push_back(g.value);
    return out;
}

std::optional<std::size_t> SeriesResult::index_of(std::string_view label) const
{
    for (std::size_t i = 0; i < groups.size(); ++i)
        if (groups[i].label == label)
            return i;
    return std::nullopt;
}

namespace {

void validate_filter(const Dataset& dataset, const Filter& f)
{
    const auto* dim = dataset.find(f.dimension);
    if (!dim || !dim->is_dimension())
        throw ValidationError("unknown dimension '" + f.dimension + "'");
    if (!dim->code_of(f.value))
        throw ValidationError("value '" + f.value + "' not found in dimension '" + f.dimension + "'");
}

std::vector<std::uint8_t> selection_mask(const Dataset& dataset, const Subspace& subspace,
                                         std::span<const Filter> exclude)
{
    std::vector<std::uint8_t> mask(dataset.row_count(), 1);
    for (const auto& f: subspace.filters())
    {
        const auto& dim = dataset.column(f.dimension);
        simd::mask_equal(dim.codes(), *dim.code_of(f.value), mask);
    }
    for (const auto& f: exclude)
    {
        validate_filter(dataset, f);
        const auto& dim = dataset.column(f.dimension);
        simd::mask_not_equal(dim.codes(), *dim.code_of(f.value), mask);
    }
    return mask;
}

} // namespace

SeriesResult evaluate(const Dataset& dataset, const AnalysisEntity& ae, const EvalOptions& options)
{
    validate(dataset, ae);
    auto mask = selection_mask(dataset, ae.subspace, options.exclude);

    const Column& breakdown = dataset.column(ae.breakdown);
    const Column* measure = ae.aggregate == Aggregate::Count ? nullptr : &dataset.column(ae.measure);
    if (measure)
        simd::mask_and(measure->valid(), mask);

    const std::size_t n_groups = breakdown.values().size();
    std::vector<double> sums(n_groups, 0.0);
    std::vector<double> squares(n_groups, 0.0);
    std::vector<std::size_t> counts(n_groups, 0);
    const auto codes = breakdown.codes();
    const std::size_t n = dataset.row_count();
    if (measure)
    {
        const auto numbers = measure->numbers();
        for (std::size_t r = 0; r < n; ++r)
            if (mask[r])
            {
                sums[codes[r]] += numbers[r];
                squares[codes[r]] += numbers[r] * numbers[r];
                ++counts[codes[r]];
            }
    }
    else
    {
        for (std::size_t r = 0; r < n; ++r)
            if (mask[r])
                ++counts[codes[r]];
    }

    SeriesResult result;
    result.ordered = breakdown.ordered();
    for (std::size_t g = 0; g < n_groups; ++g)
    {
        if (counts[g] == 0)
            continue;
        double value = 0.0;
        switch (ae.aggregate)
        {
            case Aggregate::Sum: value = sums[g]; break;
            case Aggregate::Avg: value = sums[g] / static_cast<double>(counts[g]); break;
            case Aggregate::Count: value = static_cast<double>(counts[g]); break;
        }
        double spread = 0.0;
        if (measure && counts[g] > 1)
        {
            const double c = static_cast<double>(counts[g]);
            const double mean = sums[g] / c;
            spread = std::sqrt(std::max(0.0, (squares[g] - c * mean * mean) / (c - 1.0)));
        }
        result.groups.push_back({breakdown.values()[g], value, counts[g], spread});
    }
    if (!result.ordered)
        std::stable_sort(result.groups.begin(), result.groups.end(),
                         [](const SeriesGroup& a, const SeriesGroup& b) { return a.value > b.value; });
    return result;
}

std::size_t count_rows(const Dataset& dataset, const Subspace& subspace, std::span<const Filter> exclude)
{
    for (const auto& f: subspace.filters())
        validate_filter(dataset, f);
    return simd::count_set(selection_mask(dataset, subspace, exclude));
}

// ---------------------------------------------------------------------------
// Enumeration

std::vector<const Column*> breakdown_candidates(const Dataset& dataset, const EnumLimits& limits)
{
    std::vector<const Column*> out;
    for (const auto* c: dataset.dimensions())
        if (c->distinct_count() <= limits.max_group_count && c->distinct_count() > 0)
            out.push_back(c);
    return out;
}

namespace {

std::vector<const Column*> by_name(std::vector<const Column*> columns)
{
    std::sort(columns.begin(), columns.end(), [](const Column* a, const Column* b) { return a->name() < b->name(); });
    return columns;
}

} // namespace

std::vector<AnalysisEntity> enumerate_children(const Dataset& dataset, const AnalysisEntity& ae,
                                               const EnumLimits& limits)
{
    validate(dataset, ae);
    std::vector<AnalysisEntity> out;
    const auto breakdowns = by_name(breakdown_candidates(dataset, limits));
    auto full = [&] { return out.size() >= limits.max_total_aes; };

    for (const auto* b: breakdowns)
    {
        if (full())
            return out;
        if (b->name() == ae.breakdown || ae.subspace.constrains(b->name()))
            continue;
        auto child = ae;
        child.breakdown = b->name();
        out.push_back(std::move(child));
    }

    if (ae.subspace.size() + 1 > limits.max_subspace_depth)
        return out;

    for (const auto* d: by_name(dataset.dimensions()))
    {
        if (d->name() == ae.breakdown || ae.subspace.constrains(d->name()))
            continue;
        if (d->distinct_count() > limits.max_distinct_for_filter)
            continue;
        for (const auto& value: d->values())
        {
            auto subspace = ae.subspace.with({d->name(), value});
            for (const auto* b: breakdowns)
            {
                if (full())
                    return out;
                if (subspace.constrains(b->name()))
                    continue;
                out.push_back({ae.aggregate, ae.measure, subspace, b->name()});
            }
        }
    }
    return out;
}

std::vector<AnalysisEntity> enumerate_roots(const Dataset& dataset, const EnumLimits& limits)
{
    std::vector<AnalysisEntity> out;
    auto measures = by_name(dataset.measures());
    for (const auto* b: by_name(breakdown_candidates(dataset, limits)))
    {
        for (auto agg: {Aggregate::Sum, Aggregate::Avg, Aggregate::Count})
        {
            if (agg == Aggregate::Count)
            {
                if (out.size() >= limits.max_total_aes)
                    return out;
                out.push_back({agg, {}, {}, b->name()});
                continue;
            }
            for (const auto* m: measures)
            {
                if (out.size() >= limits.max_total_aes)
                    return out;
                out.push_back({agg, m->name(), {}, b->name()});
            }
        }
    }
    return out;
}

} // namespace dex

// SPDX-License-Identifier: Apache-2.0
#include <dex/ranking.hpp>
#include <dex/simd.hpp>

#include "http_client.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>

namespace dex {

// ---------------------------------------------------------------------------
// Embeddings

std::vector<std::string> LocalEmbedding::tokenize(std::string_view text)
{
    std::vector<std::string> tokens;
    std::string current;
    for (char ch: text)
    {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c))
            current += static_cast<char>(std::tolower(c));
        else if (!current.empty())
            tokens.push_back(std::exchange(current, {}));
    }
    if (!current.empty())
        tokens.push_back(std::move(current));
    return tokens;
}

Embedding LocalEmbedding::embed_one(std::string_view text)
{
    std::vector<double> acc(kDimensions, 0.0);
    for (const auto& token: tokenize(text))
    {
        const std::uint64_t h = fnv1a64(token, kFnvOffset ^ kSeed);
        acc[h % kDimensions] += (h >> 63) ? -1.0 : 1.0;
    }
    const double norm = std::sqrt(std::inner_product(acc.begin(), acc.end(), acc.begin(), 0.0));
    Embedding out(kDimensions, 0.0f);
    if (norm == 0.0)
    {
        out[0] = 1.0f;
        return out;
    }
    for (std::size_t i = 0; i < kDimensions; ++i)
        out[i] = static_cast<float>(acc[i] / norm);
    return out;
}

std::vector<Embedding> LocalEmbedding::embed(const std::vector<std::string>& texts)
{
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t: texts)
        out.push_back(embed_one(t));
    return out;
}

RemoteEmbedding::RemoteEmbedding(RemoteEmbeddingOptions options): options_(std::move(options)) {}

std::vector<Embedding> RemoteEmbedding::embed(const std::vector<std::string>& texts)
{
    if (texts.empty())
        return {};
    const nlohmann::json request = {{"model", options_.model}, {"input", texts}};
    const auto reply = detail::post_json(options_.url, request, options_.key_env, options_.timeout_seconds);
    if (!reply.contains("data") || !reply["data"].is_array() || reply["data"].size() != texts.size())
        throw Error("embedding response does not match the request");

    std::vector<Embedding> out(texts.size());
    for (std::size_t i = 0; i < texts.size(); ++i)
    {
        const auto& item = reply["data"][i];
        const std::size_t slot = item.contains("index") ? item["index"].get<std::size_t>() : i;
        if (slot >= texts.size())
            throw Error("embedding response index out of range");
        auto v = item.at("embedding").get<std::vector<double>>();
        const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (v.empty() || norm == 0.0 || (dimensions_ && v.size() != dimensions_))
            throw Error("embedding response has a degenerate vector");
        dimensions_ = v.size();
        out[slot].resize(v.size());
        for (std::size_t j = 0; j < v.size(); ++j)
            out[slot][j] = static_cast<float>(v[j] / norm);
    }
    return out;
}

double cosine(const Embedding& a, const Embedding& b)
{
    if (a.size() != b.size() || a.empty())
        return 0.0;
    return static_cast<double>(simd::dot(a, b));
}

void RankingConfig::validate() const
{
    if (k == 0)
        throw ValidationError("k must be positive");
    if (k_prime < 2 * k)
        throw ValidationError("k_prime must be at least 2k");
    if (!(lambda >= 0.0 && lambda <= 1.0))
        throw ValidationError("lambda must lie in [0,1]");
}

// ---------------------------------------------------------------------------
// Redundancy

namespace {

std::string family_key(const Insight& i)
{
    return std::string(insight_type_name(i.type)) + "|" + comparison_key(i) + "|" +
           std::string(aggregate_name(i.ae.aggregate)) + "|" + i.ae.measure + "|" + i.ae.breakdown;
}

bool strictly_inside(const Subspace& inner, const Subspace& outer)
{
    return inner.size() < outer.size() && outer.contains(inner);
}

} // namespace

std::vector<Insight> eliminate_redundant(const std::vector<Insight>& insights, const PickedSet& picked)
{
    std::map<std::string, std::vector<std::size_t>> families;
    for (std::size_t i = 0; i < insights.size(); ++i)
        families[family_key(insights[i])].push_back(i);

    std::vector<Insight> out;
    for (std::size_t i = 0; i < insights.size(); ++i)
    {
        const auto& ins = insights[i];
        bool redundant = false;
        if (!picked.count(ins.id) && ins.ae.subspace.size() >= 2)
        {
            std::vector<std::size_t> inside;
            for (auto j: families[family_key(ins)])
                if (j != i && strictly_inside(insights[j].ae.subspace, ins.ae.subspace))
                    inside.push_back(j);
            for (std::size_t a = 0; a < inside.size() && !redundant; ++a)
                for (std::size_t b = a + 1; b < inside.size() && !redundant; ++b)
                    redundant = insights[inside[a]].ae.subspace.united(insights[inside[b]].ae.subspace) ==
                                ins.ae.subspace;
        }
        if (!redundant)
            out.push_back(ins);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Similarity

SimilarityOutcome similarity_filter(const std::string& question, const std::vector<Insight>& insights,
                                    EmbeddingProvider& provider, std::size_t k_prime, const PickedSet& picked)
{
    SimilarityOutcome outcome;
    std::vector<std::string> texts {question};
    for (const auto& i: insights)
        texts.push_back(i.text);

    std::vector<Embedding> vectors;
    try
    {
        vectors = provider.embed(texts);
        if (vectors.size() != texts.size())
            throw Error("embedding provider returned the wrong number of vectors");
    }
    catch (const std::exception&)
    {
        LocalEmbedding fallback;
        vectors = fallback.embed(texts);
        outcome.degraded = true;
    }

    std::vector<double> sim(insights.size());
    for (std::size_t i = 0; i < insights.size(); ++i)
        sim[i] = cosine(vectors[0], vectors[i + 1]);

    std::vector<std::size_t> order(insights.size());
    std::iota(order.begin(), order.end(), std::size_t {0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (sim[a] != sim[b])
            return sim[a] > sim[b];
        if (insights[a].score != insights[b].score)
            return insights[a].score > insights[b].score;
        if (insights[a].id != insights[b].id)
            return insights[a].id < insights[b].id;
        return a < b;
    });

    std::vector<bool> keep(order.size(), false);
    std::size_t kept = 0;
    for (std::size_t r = 0; r < order.size() && kept < k_prime; ++r, ++kept)
        keep[r] = true;
    // Picked insights displace the unpicked tail.
    for (std::size_t r = kept; r < order.size(); ++r)
    {
        if (!picked.count(insights[order[r]].id))
            continue;
        std::size_t victim = r;
        while (victim > 0)
        {
            --victim;
            if (keep[victim] && !picked.count(insights[order[victim]].id))
                break;
        }
        if (keep[victim] && !picked.count(insights[order[victim]].id))
            keep[victim] = false;
        keep[r] = true;
    }

    for (std::size_t r = 0; r < order.size(); ++r)
        if (keep[r])
        {
            outcome.insights.push_back(insights[order[r]]);
            outcome.similarity.push_back(sim[order[r]]);
        }
    return outcome;
}

// ---------------------------------------------------------------------------
// Diversity

namespace {

std::vector<std::string> overlap_items(const Insight& i)
{
    std::vector<std::string> items;
    for (const auto& f: i.ae.subspace.filters())
        items.push_back(f.dimension + "=" + f.value);
    items.push_back("\x1f" + i.ae.breakdown);
    std::sort(items.begin(), items.end());
    return items;
}

} // namespace

double overlap(const Insight& a, const Insight& b)
{
    const auto x = overlap_items(a);
    const auto y = overlap_items(b);
    std::vector<std::string> common;
    std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(common));
    const double uni = static_cast<double>(x.size() + y.size() - common.size());
    double v = uni > 0 ? static_cast<double>(common.size()) / uni : 0.0;
    if (a.type == b.type)
        v += 0.5;
    return std::clamp(v, 0.0, 1.0);
}

std::vector<Insight> rerank_diverse(const std::vector<Insight>& insights, std::size_t k, double lambda,
                                    const PickedSet& picked)
{
    std::vector<const Insight*> selected;
    std::vector<const Insight*> pool;
    for (const auto& i: insights)
        (picked.count(i.id) ? selected : pool).push_back(&i);

    auto duplicate = [&](const Insight* c) {
        return std::any_of(selected.begin(), selected.end(),
                           [&](const Insight* s) { return s->type == c->type && s->ae == c->ae; });
    };

    while (selected.size() < k && !pool.empty())
    {
        bool avoid_duplicates = false;
        if (lambda >= 0.5)
            avoid_duplicates = std::any_of(pool.begin(), pool.end(), [&](const Insight* c) { return !duplicate(c); });

        std::size_t best = pool.size();
        double best_gain = 0.0;
        for (std::size_t c = 0; c < pool.size(); ++c)
        {
            if (avoid_duplicates && duplicate(pool[c]))
                continue;
            double penalty = 0.0;
            for (const auto* s: selected)
                penalty = std::max(penalty, overlap(*pool[c], *s));
            const double gain = pool[c]->score - lambda * penalty;
            if (best == pool.size() || gain > best_gain || (gain == best_gain && pool[c]->id < pool[best]->id))
            {
                best = c;
                best_gain = gain;
            }
        }
        selected.push_back(pool[best]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
    }

    std::vector<Insight> out;
    for (const auto* s: selected)
        out.push_back(*s);
    return out;
}

TopK flatten_top_k(const std::vector<Insight>& all, const PickedSet& picked, const std::string& question,
                   const RankingConfig& config, EmbeddingProvider& provider)
{
    TopK out;
    const auto survivors = eliminate_redundant(all, picked);
    auto similar = similarity_filter(question, survivors, provider, config.k_prime, picked);
    out.degraded = similar.degraded;
    out.insights = rerank_diverse(similar.insights, config.k, config.lambda, picked);
    return out;
}

} // namespace dex

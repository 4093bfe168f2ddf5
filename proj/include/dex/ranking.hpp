// SPDX-License-Identifier: Apache-2.0
#pragma once

// Final top-K selection: redundancy elimination, semantic-similarity
// filtering and diversity-aware reranking.

#include <dex/insights.hpp>

#include <memory>
#include <set>
#include <string>
#include <vector>

namespace dex {

using Embedding = std::vector<float>;

class EmbeddingProvider
{
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string name() const = 0;
    virtual std::size_t dimensions() const = 0;
    /// Unit-norm vectors, one per text. Throws Error on transport failure.
    virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;
};

/// Hashed bag of words: lowercase alphanumeric tokens, FNV-1a bucket and sign,
/// L2 normalized. Empty text maps to the first basis vector.
class LocalEmbedding: public EmbeddingProvider
{
public:
    static constexpr std::size_t kDimensions = 256;
    static constexpr std::uint64_t kSeed = 0x9E3779B97F4A7C15ULL;

    std::string name() const override { return "local-hashed-bow"; }
    std::size_t dimensions() const override { return kDimensions; }
    std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

    static std::vector<std::string> tokenize(std::string_view text);
    static Embedding embed_one(std::string_view text);
};

struct RemoteEmbeddingOptions
{
    std::string url;
    std::string model;
    /// Environment variable holding the bearer token; empty for none.
    std::string key_env;
    int timeout_seconds = 60;
};

/// OpenAI-style /embeddings endpoint: {model, input:[...]} -> {data:[{embedding:[...]}]}.
class RemoteEmbedding: public EmbeddingProvider
{
public:
    explicit RemoteEmbedding(RemoteEmbeddingOptions options);
    std::string name() const override { return "remote:" + options_.model; }
    std::size_t dimensions() const override { return dimensions_; }
    std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

private:
    RemoteEmbeddingOptions options_;
    std::size_t dimensions_ = 0;
};

double cosine(const Embedding& a, const Embedding& b);

struct RankingConfig
{
    std::size_t k = 10;
    std::size_t k_prime = 50;
    double lambda = 0.5;

    /// Throws ValidationError unless k > 0, k_prime >= 2k and lambda in [0,1].
    void validate() const;
};

using PickedSet = std::set<std::string>;

/// Drops I when two other insights of the same type, comparison key and
/// aggregate/measure/breakdown have strictly smaller subspaces whose union is
/// I's subspace. Picked insights are never dropped. Order is preserved.
std::vector<Insight> eliminate_redundant(const std::vector<Insight>& insights, const PickedSet& picked = {});

struct SimilarityOutcome
{
    std::vector<Insight> insights;
    std::vector<double> similarity;
    bool degraded = false;
};

/// Orders by cosine(question, text) descending, then score descending, then id;
/// keeps the first k_prime while forcing picked insights in.
SimilarityOutcome similarity_filter(const std::string& question, const std::vector<Insight>& insights,
                                    EmbeddingProvider& provider, std::size_t k_prime, const PickedSet& picked = {});

/// Jaccard over filters plus {breakdown}, +0.5 for the same type, clamped to [0,1].
double overlap(const Insight& a, const Insight& b);

/// Greedy marginal gain score - lambda * max overlap with the selection. Picked
/// insights are seeded first; ties go to the smaller id. With lambda >= 0.5 an
/// exact (type, AE) duplicate of a selected insight is only taken when nothing
/// else is left.
std::vector<Insight> rerank_diverse(const std::vector<Insight>& insights, std::size_t k, double lambda,
                                    const PickedSet& picked = {});

struct TopK
{
    std::vector<Insight> insights;
    bool degraded = false;
};

TopK flatten_top_k(const std::vector<Insight>& all, const PickedSet& picked, const std::string& question,
                   const RankingConfig& config, EmbeddingProvider& provider);

} // namespace dex

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace mhx {

/// Produces one unit-norm vector per input text. Texts with no features map
/// to the zero vector; callers treat cosine against it as 0.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;
    virtual std::size_t dimension() const = 0;
};

/// Deterministic reference provider: lowercase the text, collapse whitespace
/// runs to single spaces, hash every character trigram with 64-bit FNV-1a
/// into `dim` buckets, accumulate counts, L2-normalize. Texts shorter than
/// three characters hash as a single feature.
class HashedTrigramProvider : public EmbeddingProvider {
public:
    explicit HashedTrigramProvider(std::size_t dim = 256);
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
    std::size_t dimension() const override { return dim_; }

private:
    std::size_t dim_;
};

/// Client for the embedding HTTP protocol: POST /embed with
/// {"texts": [...]}, response {"vectors": [[...]]}. Re-normalizes any vector
/// whose norm strays more than 1e-6 from 1.
class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    /// `expected_dim` 0 adopts the first response's dimension.
    HttpEmbeddingProvider(std::string base_url, std::size_t expected_dim = 0);
    ~HttpEmbeddingProvider() override;
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
    std::size_t dimension() const override { return dim_; }

private:
    std::string base_url_;
    std::size_t dim_;
};

std::shared_ptr<EmbeddingProvider> make_provider(const std::string& name, const std::string& url,
                                                 std::size_t dim);

} // namespace mhx

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mhx/corpus.hpp"
#include "mhx/embedding.hpp"
#include "mhx/segmenter.hpp"

namespace mhx {

/// The fixed retrieval query covering all five attributes.
inline constexpr std::string_view kDefaultRetrievalQuery =
    "dysmenorrhea, regularity, period pattern, menses, flow volume, bleeding pattern, "
    "intermenstrual bleeding, spotting";

struct RetrievalConfig {
    std::string query{kDefaultRetrievalQuery};
    std::size_t k = 10;
    double alpha = 0.5;  ///< weight of the lexical score in the fusion
    double k1 = 1.2;
    double b = 0.75;
    void validate() const;
};

struct RankedSegment {
    Segment segment;
    double lexical;   ///< BM25, >= 0
    double semantic;  ///< cosine similarity in [-1, 1]
    double fused;     ///< convex combination of min-max normalized scores
};

/// Lowercase alphanumeric runs; punctuation is discarded. Used for BM25 and
/// for the query terms.
std::vector<std::string> lexical_tokens(std::string_view text);

/// Okapi BM25 of each segment against the query's distinct terms. The IDF
/// collection is exactly this note's segment list;
/// IDF(t) = ln((N - n_t + 0.5)/(n_t + 0.5) + 1) stays non-negative on tiny
/// collections.
std::vector<double> bm25_scores(const std::vector<Segment>& segments, std::string_view query,
                                double k1, double b);

/// Cosine similarity of each segment against the query embedding; cosine with
/// a zero vector is 0 by convention.
std::vector<double> semantic_scores(const std::vector<Segment>& segments, std::string_view query,
                                    EmbeddingProvider& provider);

/// Min-max normalizes both score lists within the note (constant lists map to
/// all zeros), fuses with alpha * lex + (1 - alpha) * sem, and returns indices
/// sorted by descending fused score, ties broken by ascending ordinal.
/// `fused_out`, when given, receives the fused score per input index.
std::vector<std::size_t> fuse_and_rank(const std::vector<double>& lexical,
                                       const std::vector<double>& semantic, double alpha,
                                       std::vector<double>* fused_out = nullptr);

struct RetrievalResult {
    std::vector<RankedSegment> segments;  ///< top-k, re-ordered by ordinal
    std::string retrieved_text;           ///< selected segments joined by single spaces
    std::size_t tokens_before = 0;
    std::size_t tokens_after = 0;
};

RetrievalResult retrieve(const ClinicalNote& note, const RetrievalConfig& cfg,
                         EmbeddingProvider& provider);

} // namespace mhx

#include "mhx/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <unordered_map>

#include "mhx/errors.hpp"
#include "mhx/tokenizer.hpp"

namespace mhx {

void RetrievalConfig::validate() const {
    if (k < 1) throw ValidationError("retrieval k must be >= 1");
    if (alpha < 0.0 || alpha > 1.0) throw ValidationError("retrieval alpha must lie in [0,1]");
    if (!(k1 > 0.0)) throw ValidationError("BM25 k1 must be positive");
    if (b < 0.0 || b > 1.0) throw ValidationError("BM25 b must lie in [0,1]");
}

std::vector<std::string> lexical_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!std::isalnum(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t start = i;
        while (i < text.size() && std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
        std::string tok(text.substr(start, i - start));
        for (char& c : tok) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        out.push_back(std::move(tok));
    }
    return out;
}

std::vector<double> bm25_scores(const std::vector<Segment>& segments, std::string_view query,
                                double k1, double b) {
    if (segments.empty()) return {};

    const auto query_terms = [&] {
        std::set<std::string> distinct;
        for (auto& t : lexical_tokens(query)) distinct.insert(std::move(t));
        return distinct;
    }();

    const std::size_t n_docs = segments.size();
    std::vector<std::unordered_map<std::string, std::size_t>> term_freq(n_docs);
    std::vector<double> doc_len(n_docs, 0.0);
    double total_len = 0.0;
    for (std::size_t d = 0; d < n_docs; ++d) {
        const auto toks = lexical_tokens(segments[d].text);
        doc_len[d] = static_cast<double>(toks.size());
        total_len += doc_len[d];
        for (const auto& t : toks) ++term_freq[d][t];
    }
    const double avgdl = total_len / static_cast<double>(n_docs);

    std::vector<double> scores(n_docs, 0.0);
    for (const auto& term : query_terms) {
        std::size_t df = 0;
        for (std::size_t d = 0; d < n_docs; ++d) {
            if (term_freq[d].count(term)) ++df;
        }
        if (df == 0) continue;
        const double idf = std::log((static_cast<double>(n_docs) - static_cast<double>(df) + 0.5) /
                                        (static_cast<double>(df) + 0.5) +
                                    1.0);
        for (std::size_t d = 0; d < n_docs; ++d) {
            auto it = term_freq[d].find(term);
            if (it == term_freq[d].end()) continue;
            const double tf = static_cast<double>(it->second);
            const double norm = avgdl > 0.0 ? doc_len[d] / avgdl : 0.0;
            scores[d] += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
        }
    }
    return scores;
}

std::vector<double> semantic_scores(const std::vector<Segment>& segments, std::string_view query,
                                    EmbeddingProvider& provider) {
    if (segments.empty()) return {};
    std::vector<std::string> texts;
    texts.reserve(segments.size() + 1);
    texts.emplace_back(query);
    for (const auto& seg : segments) texts.push_back(seg.text);
    const auto vectors = provider.embed(texts);
    if (vectors.size() != texts.size()) {
        throw RemoteError("embedding provider returned a vector count that does not match its input");
    }
    const auto& q = vectors.front();
    std::vector<double> scores;
    scores.reserve(segments.size());
    for (std::size_t i = 1; i < vectors.size(); ++i) {
        const auto& v = vectors[i];
        if (v.size() != q.size()) {
            throw RemoteError("embedding provider returned inconsistent dimensions within one call");
        }
        double dot = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) dot += q[j] * v[j];
        // Unit-norm contract makes the dot product the cosine; a zero vector
        // on either side yields 0.
        scores.push_back(dot);
    }
    return scores;
}

namespace {

std::vector<double> min_max_normalize(const std::vector<double>& v) {
    std::vector<double> out(v.size(), 0.0);
    if (v.empty()) return out;
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi == lo) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / (hi - lo);
    return out;
}

} // namespace

std::vector<std::size_t> fuse_and_rank(const std::vector<double>& lexical,
                                       const std::vector<double>& semantic, double alpha,
                                       std::vector<double>* fused_out) {
    if (lexical.size() != semantic.size()) {
        throw ValidationError("fuse_and_rank requires equal-length score lists");
    }
    const auto lex = min_max_normalize(lexical);
    const auto sem = min_max_normalize(semantic);
    std::vector<double> fused(lex.size());
    for (std::size_t i = 0; i < lex.size(); ++i) fused[i] = alpha * lex[i] + (1.0 - alpha) * sem[i];
    std::vector<std::size_t> order(lex.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (fused[a] != fused[b]) return fused[a] > fused[b];
        return a < b;
    });
    if (fused_out) *fused_out = std::move(fused);
    return order;
}

RetrievalResult retrieve(const ClinicalNote& note, const RetrievalConfig& cfg,
                         EmbeddingProvider& provider) {
    cfg.validate();
    RetrievalResult result;
    result.tokens_before = count_tokens(normalize_whitespace(note.text));
    const auto segments = segment_note(note.text);
    if (segments.empty()) {
        return result;
    }
    const auto lexical = bm25_scores(segments, cfg.query, cfg.k1, cfg.b);
    const auto semantic = semantic_scores(segments, cfg.query, provider);
    std::vector<double> fused;
    const auto order = fuse_and_rank(lexical, semantic, cfg.alpha, &fused);

    const std::size_t keep = std::min<std::size_t>(cfg.k, segments.size());
    std::vector<std::size_t> selected(order.begin(), order.begin() + keep);
    std::sort(selected.begin(), selected.end());  // restore document order

    for (std::size_t idx : selected) {
        result.segments.push_back({segments[idx], lexical[idx], semantic[idx], fused[idx]});
        if (!result.retrieved_text.empty()) result.retrieved_text += ' ';
        result.retrieved_text += segments[idx].text;
    }
    result.tokens_after = count_tokens(result.retrieved_text);
    return result;
}

} // namespace mhx

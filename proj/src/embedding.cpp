#include "mhx/embedding.hpp"

#include <cctype>
#include <cmath>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mhx/errors.hpp"
#include "mhx/hash.hpp"

using nlohmann::json;

namespace mhx {

namespace {

std::string canonicalize(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

void l2_normalize(std::vector<double>& v) {
    double sum_sq = 0.0;
    for (double x : v) sum_sq += x * x;
    if (sum_sq <= 0.0) return;  // zero vector stays zero
    const double norm = std::sqrt(sum_sq);
    for (double& x : v) x /= norm;
}

} // namespace

HashedTrigramProvider::HashedTrigramProvider(std::size_t dim) : dim_(dim) {
    if (dim_ == 0) {
        throw ValidationError("embedding dimension must be positive");
    }
}

std::vector<std::vector<double>> HashedTrigramProvider::embed(const std::vector<std::string>& texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<double> v(dim_, 0.0);
        const std::string canon = canonicalize(text);
        if (!canon.empty()) {
            if (canon.size() < 3) {
                v[fnv1a64(canon) % dim_] += 1.0;
            } else {
                for (std::size_t i = 0; i + 3 <= canon.size(); ++i) {
                    v[fnv1a64(std::string_view(canon).substr(i, 3)) % dim_] += 1.0;
                }
            }
            l2_normalize(v);
        }
        out.push_back(std::move(v));
    }
    return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url, std::size_t expected_dim)
    : base_url_(std::move(base_url)), dim_(expected_dim) {}

HttpEmbeddingProvider::~HttpEmbeddingProvider() = default;

std::vector<std::vector<double>> HttpEmbeddingProvider::embed(const std::vector<std::string>& texts) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(30, 0);
    const json request{{"texts", texts}};
    auto res = client.Post("/embed", request.dump(), "application/json");
    if (!res) {
        throw RemoteError("embedding service unreachable at " + base_url_ + ": " +
                          httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw RemoteError("embedding service returned status " + std::to_string(res->status) + ": " +
                          res->body);
    }
    json body;
    try {
        body = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw RemoteError(std::string("embedding service returned invalid JSON: ") + e.what());
    }
    if (!body.contains("vectors") || !body["vectors"].is_array()) {
        throw RemoteError("embedding response missing 'vectors' array");
    }
    std::vector<std::vector<double>> out;
    for (const auto& vec : body["vectors"]) {
        out.push_back(vec.get<std::vector<double>>());
    }
    if (out.size() != texts.size()) {
        throw RemoteError("embedding service returned " + std::to_string(out.size()) + " vectors for " +
                          std::to_string(texts.size()) + " texts");
    }
    for (auto& v : out) {
        if (dim_ == 0 && !v.empty()) dim_ = v.size();
        if (v.size() != dim_) {
            throw RemoteError("embedding dimension mismatch: expected " + std::to_string(dim_) +
                              ", got " + std::to_string(v.size()));
        }
        double sum_sq = 0.0;
        for (double x : v) sum_sq += x * x;
        const double norm = std::sqrt(sum_sq);
        if (norm > 0.0 && std::abs(norm - 1.0) > 1e-6) {
            for (double& x : v) x /= norm;
        }
    }
    return out;
}

std::shared_ptr<EmbeddingProvider> make_provider(const std::string& name, const std::string& url,
                                                 std::size_t dim) {
    if (name == "hash") {
        return std::make_shared<HashedTrigramProvider>(dim == 0 ? 256 : dim);
    }
    if (name == "http") {
        if (url.empty()) {
            throw ValidationError("http embedding provider requires --embed-url");
        }
        return std::make_shared<HttpEmbeddingProvider>(url, dim);
    }
    throw ValidationError("unknown embedding provider '" + name + "' (expected hash or http)");
}

} // namespace mhx

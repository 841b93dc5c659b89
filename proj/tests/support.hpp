#pragma once

// Shared test scaffolding: temp files, a Table-1-shaped fixture corpus, and
// in-process mock HTTP services.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "mhx/corpus.hpp"
#include "mhx/tasks.hpp"

namespace mhx::testing {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("mhx-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// A corpus with dummy texts reproducing the reference train-split label
/// counts used throughout the fixtures.
inline std::vector<ClinicalNote> table1_train_fixture() {
    const std::map<TaskId, std::vector<std::pair<std::string, int>>> counts = {
        {TaskId::dysmenorrhea, {{"yes", 29}, {"no", 21}, {"unknown", 41}}},
        {TaskId::dysmenorrhea_severity, {{"mild", 7}, {"moderate", 11}, {"severe", 10}, {"unknown", 63}}},
        {TaskId::regularity, {{"regular", 68}, {"irregular", 9}, {"unknown", 14}}},
        {TaskId::flow, {{"scanty", 3}, {"normal", 46}, {"abundant", 10}, {"unknown", 32}}},
        {TaskId::intermenstrual_bleeding, {{"yes", 3}, {"no", 11}, {"unknown", 77}}},
    };
    std::vector<ClinicalNote> notes(91);
    for (std::size_t i = 0; i < notes.size(); ++i) {
        notes[i].id = "t1-" + std::to_string(i);
        notes[i].text = "dummy note " + std::to_string(i);
    }
    for (const auto& [task, dist] : counts) {
        std::size_t i = 0;
        for (const auto& [label, n] : dist) {
            for (int c = 0; c < n; ++c) notes.at(i++).labels[task] = label;
        }
        REQUIRE(i == notes.size());
    }
    return notes;
}

/// Minimal HTTP mock bound to an ephemeral loopback port.
class MockServer {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    MockServer(const std::string& route, Handler handler) {
        server_.Post(route, std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

/// Embedding mock that returns fixed vectors per text, else a fallback.
inline MockServer::Handler scripted_embed_handler(
    std::map<std::string, std::vector<double>> vectors, std::vector<double> fallback) {
    return [vectors = std::move(vectors), fallback = std::move(fallback)](
               const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        nlohmann::json out = nlohmann::json::array();
        for (const auto& text : body.at("texts")) {
            auto it = vectors.find(text.get<std::string>());
            out.push_back(it == vectors.end() ? fallback : it->second);
        }
        res.set_content(nlohmann::json{{"vectors", out}}.dump(), "application/json");
    };
}

/// Generative mock that always answers with the same text.
inline MockServer::Handler fixed_generate_handler(std::string text) {
    return [text = std::move(text)](const httplib::Request&, httplib::Response& res) {
        res.set_content(nlohmann::json{{"text", text}}.dump(), "application/json");
    };
}

} // namespace mhx::testing

#include <thread>

#include <httplib.h>

#include "stackdetect/scorers.hpp"

namespace stackdetect {

using nlohmann::json;

namespace {

struct Endpoint {
    std::string origin;  // scheme://host:port
    std::string path;
};

Endpoint split_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ValidationError("remote endpoint must be a URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

std::vector<ProbVector> parse_remote_response(const json& body, std::size_t expected) {
    if (!body.is_object() || !body.contains("probs") || !body["probs"].is_array()) {
        throw ValidationError("invalid remote response: expected an object with a 'probs' array");
    }
    const auto& probs = body["probs"];
    if (probs.size() != expected) {
        throw ValidationError("invalid remote response: " + std::to_string(probs.size()) + " rows for " +
                              std::to_string(expected) + " texts");
    }
    std::vector<ProbVector> out;
    out.reserve(expected);
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const auto& row = probs[i];
        if (!row.is_array() || row.size() != 2 || !row[0].is_number() || !row[1].is_number()) {
            throw ValidationError("invalid remote response: row " + std::to_string(i) + " is not [p_human, p_ai]");
        }
        ProbVector p{row[0].get<double>(), row[1].get<double>()};
        try {
            p.validate(1e-6);
        } catch (const ValidationError& e) {
            throw ValidationError("invalid remote response: row " + std::to_string(i) + ": " + e.what());
        }
        if (p.p_human + p.p_ai != 1.0) p = ProbVector::from_ai(p.p_ai / (p.p_human + p.p_ai));
        out.push_back(p);
    }
    return out;
}

std::vector<ProbVector> remote_score(const RemoteConfig& cfg, std::span<const std::string> texts) {
    if (texts.size() > cfg.max_batch) {
        throw ValidationError("remote_score: batch of " + std::to_string(texts.size()) + " exceeds max_batch " +
                              std::to_string(cfg.max_batch));
    }
    if (texts.empty()) return {};
    const Endpoint ep = split_endpoint(cfg.endpoint);
    const std::string body = json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}}.dump();

    httplib::Client client(ep.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout).count();
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout).count() % 1000000;
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    std::string last_error;
    auto backoff = cfg.initial_backoff;
    const int attempts = std::max(cfg.max_attempts, 1);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        auto res = client.Post(ep.path, body, "application/json");
        if (res && res->status == 200) {
            json decoded;
            try {
                decoded = json::parse(res->body);
            } catch (const json::exception& e) {
                throw ValidationError(std::string("invalid remote response: ") + e.what());
            }
            return parse_remote_response(decoded, texts.size());
        }
        if (res && res->status < 500) {
            throw ValidationError("invalid remote response: HTTP " + std::to_string(res->status));
        }
        last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
        if (attempt < attempts) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
    }
    throw TransportError("remote scorer at " + cfg.endpoint + " failed after " + std::to_string(attempts) +
                         " attempts: " + last_error);
}

RemoteScorer::RemoteScorer(std::string id, RemoteConfig cfg) : id_(std::move(id)), cfg_(std::move(cfg)) {
    if (cfg_.max_batch == 0) throw ValidationError("remote scorer: max_batch must be >= 1");
    split_endpoint(cfg_.endpoint);
}

ProbVector RemoteScorer::score(std::string_view text) const {
    const std::string one(text);
    return remote_score(cfg_, std::span<const std::string>(&one, 1)).front();
}

std::vector<ProbVector> RemoteScorer::score_samples(std::span<const Sample* const> samples) const {
    std::vector<ProbVector> out;
    out.reserve(samples.size());
    std::vector<std::string> batch;
    for (std::size_t start = 0; start < samples.size(); start += cfg_.max_batch) {
        const std::size_t stop = std::min(samples.size(), start + cfg_.max_batch);
        batch.clear();
        for (std::size_t i = start; i < stop; ++i) batch.push_back(samples[i]->text);
        auto probs = remote_score(cfg_, batch);
        out.insert(out.end(), probs.begin(), probs.end());
    }
    return out;
}

json RemoteScorer::to_json() const {
    return json{{"kind", "remote"},
                {"id", id_},
                {"endpoint", cfg_.endpoint},
                {"max_batch", cfg_.max_batch},
                {"max_attempts", cfg_.max_attempts},
                {"initial_backoff_ms", cfg_.initial_backoff.count()},
                {"timeout_ms", cfg_.timeout.count()}};
}

}  // namespace stackdetect

// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#include "vldnp/detector.hpp"

#include <atomic>
#include <mutex>
#include <thread>

#include <httplib.h>

namespace vldnp {

std::string_view to_string(DetectorKind k) {
    switch (k) {
    case DetectorKind::null: return "null";
    case DetectorKind::fixed: return "static";
    case DetectorKind::oracle: return "oracle";
    case DetectorKind::remote: return "remote";
    }
    return "?";
}

DetectorKind parse_detector_kind(std::string_view name) {
    for (auto k : {DetectorKind::null, DetectorKind::fixed, DetectorKind::oracle, DetectorKind::remote}) {
        if (to_string(k) == name) return k;
    }
    throw Error("unknown detector kind '" + std::string(name) + "'");
}

void DetectorSpec::validate(const MixtureWorld& world) const {
    const auto unsafe = world.unsafe_concepts().bits();
    if ((vocabulary.bits() & ~unsafe) != 0) throw Error("detector vocabulary must contain only unsafe concepts");
    if ((static_concepts.bits() & ~unsafe) != 0) throw Error("static detector concepts must be unsafe");
    if (!(threshold > 0.0 && threshold < 1.0)) throw Error("detector threshold must be in (0, 1)");
    if (kind == DetectorKind::remote && endpoint.empty()) throw Error("remote detector needs an endpoint");
    if (!(timeout_seconds > 0.0)) throw Error("detector timeout must be positive");
    for (const auto& d : demonstrations) {
        if ((d.concepts.bits() & ~world.all_concepts().bits()) != 0) throw Error("demonstration uses undeclared concept");
    }
}

DetectorSpec DetectorSpec::from_json(const nlohmann::json& doc, const MixtureWorld& world) {
    DetectorSpec spec;
    spec.vocabulary = world.unsafe_concepts();
    try {
        if (doc.contains("kind")) spec.kind = parse_detector_kind(doc.at("kind").get<std::string>());
        if (doc.contains("vocabulary"))
            spec.vocabulary = world.concepts_of(doc.at("vocabulary").get<std::vector<std::string>>());
        spec.static_concepts = doc.contains("static_concepts")
                                   ? world.concepts_of(doc.at("static_concepts").get<std::vector<std::string>>())
                                   : spec.vocabulary;
        spec.threshold = doc.value("threshold", spec.threshold);
        spec.endpoint = doc.value("endpoint", spec.endpoint);
        spec.timeout_seconds = doc.value("timeout_seconds", spec.timeout_seconds);
        if (doc.contains("demonstrations")) {
            for (const auto& d : doc.at("demonstrations")) {
                const auto x0 = d.at("x0").get<std::vector<double>>();
                if (x0.size() != 2) throw Error("demonstration x0 must have 2 entries");
                spec.demonstrations.push_back(
                    {Vec2(x0[0], x0[1]), world.concepts_of(d.at("concepts").get<std::vector<std::string>>())});
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("invalid detector config: ") + e.what());
    }
    spec.validate(world);
    return spec;
}

nlohmann::json DetectorSpec::to_json(const MixtureWorld& world) const {
    nlohmann::json demos = nlohmann::json::array();
    for (const auto& d : demonstrations) {
        demos.push_back({{"x0", {d.x0.x(), d.x0.y()}}, {"concepts", world.names_of(d.concepts)}});
    }
    return {{"kind", to_string(kind)},
            {"vocabulary", world.names_of(vocabulary)},
            {"static_concepts", world.names_of(static_concepts)},
            {"threshold", threshold},
            {"endpoint", endpoint},
            {"timeout_seconds", timeout_seconds},
            {"demonstrations", demos}};
}

ConceptSet oracle_concepts(const MixtureWorld& world, ConceptSet vocabulary, double threshold, const Vec2& x0_hat) {
    ConceptSet out;
    for (auto c : vocabulary.indices()) {
        if (concept_posterior(world, x0_hat, ConceptSet::single(c)) > threshold) out.insert(c);
    }
    return out;
}

nlohmann::json make_detect_request(const MixtureWorld& world, const DetectorSpec& spec, const Vec2& x0_hat, int step) {
    nlohmann::json demos = nlohmann::json::array();
    for (const auto& d : spec.demonstrations) {
        demos.push_back({{"x0", {d.x0.x(), d.x0.y()}}, {"concepts", world.names_of(d.concepts)}});
    }
    return {{"x0", {x0_hat.x(), x0_hat.y()}},
            {"step", step},
            {"vocabulary", world.names_of(spec.vocabulary)},
            {"demonstrations", demos}};
}

namespace {

class NullDetector final : public Detector {
public:
    NegativeCondition detect(const Vec2&, int step) const override { return {ConceptSet{}, step}; }
};

class FixedDetector final : public Detector {
public:
    explicit FixedDetector(ConceptSet concepts) : concepts_(concepts) {}
    NegativeCondition detect(const Vec2&, int step) const override { return {concepts_, step}; }

private:
    ConceptSet concepts_;
};

class OracleDetector final : public Detector {
public:
    OracleDetector(MixtureWorld world, ConceptSet vocabulary, double threshold)
        : world_(std::move(world)), vocabulary_(vocabulary), threshold_(threshold) {}

    NegativeCondition detect(const Vec2& x0_hat, int step) const override {
        return {oracle_concepts(world_, vocabulary_, threshold_, x0_hat), step};
    }

private:
    MixtureWorld world_;
    ConceptSet vocabulary_;
    double threshold_;
};

// Splits "http://host:port/prefix" into the client base and the path prefix.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
    const auto scheme = endpoint.find("://");
    const auto start = scheme == std::string::npos ? 0 : scheme + 3;
    const auto slash = endpoint.find('/', start);
    if (slash == std::string::npos) return {endpoint, ""};
    std::string prefix = endpoint.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {endpoint.substr(0, slash), prefix};
}

class RemoteDetector final : public Detector {
public:
    RemoteDetector(MixtureWorld world, DetectorSpec spec) : world_(std::move(world)), spec_(std::move(spec)) {
        auto [base, prefix] = split_endpoint(spec_.endpoint);
        path_ = prefix + "/detect";
        client_ = std::make_unique<httplib::Client>(base);
        const auto secs = static_cast<time_t>(spec_.timeout_seconds);
        const auto usecs = static_cast<time_t>((spec_.timeout_seconds - static_cast<double>(secs)) * 1e6);
        client_->set_connection_timeout(secs, usecs);
        client_->set_read_timeout(secs, usecs);
        client_->set_write_timeout(secs, usecs);
    }

    NegativeCondition detect(const Vec2& x0_hat, int step) const override {
        const auto body = make_detect_request(world_, spec_, x0_hat, step).dump();
        httplib::Result res;
        {
            std::lock_guard lock(mutex_);
            res = client_->Post(path_, body, "application/json");
        }
        if (!res) {
            throw DetectorError("remote detector transport failure: " + httplib::to_string(res.error()), step);
        }
        if (res->status != 200) {
            throw DetectorError("remote detector returned HTTP " + std::to_string(res->status) + ": " + res->body,
                                step);
        }
        nlohmann::json reply;
        try {
            reply = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw DetectorError(std::string("remote detector reply is not JSON: ") + e.what(), step);
        }
        if (!reply.is_object() || !reply.contains("concepts") || !reply["concepts"].is_array())
            throw DetectorError("remote detector reply lacks a concepts array", step);
        ConceptSet out;
        for (const auto& item : reply["concepts"]) {
            if (!item.is_string()) throw DetectorError("remote detector reply has a non-string concept", step);
            const auto name = item.get<std::string>();
            const auto idx = world_.find_concept(name);
            if (!idx || !spec_.vocabulary.contains(*idx)) throw DetectorError("undeclared concept '" + name + "'", step);
            out.insert(*idx);
        }
        return {out, step};
    }

private:
    MixtureWorld world_;
    DetectorSpec spec_;
    std::string path_;
    mutable std::mutex mutex_;
    std::unique_ptr<httplib::Client> client_;
};

}  // namespace

std::unique_ptr<Detector> make_detector(const DetectorSpec& spec, const MixtureWorld& world) {
    spec.validate(world);
    switch (spec.kind) {
    case DetectorKind::null: return std::make_unique<NullDetector>();
    case DetectorKind::fixed: return std::make_unique<FixedDetector>(spec.static_concepts);
    case DetectorKind::oracle: return std::make_unique<OracleDetector>(world, spec.vocabulary, spec.threshold);
    case DetectorKind::remote: return std::make_unique<RemoteDetector>(world, spec);
    }
    throw Error("unhandled detector kind");
}

NegativeCondition detect(const DetectorSpec& spec, const MixtureWorld& world, const Vec2& x0_hat, int step) {
    return make_detector(spec, world)->detect(x0_hat, step);
}

// ---------------------------------------------------------------------------
// Mock server

struct MockDetectorServer::Impl {
    Impl(MixtureWorld w, DetectorSpec s) : world(std::move(w)), spec(std::move(s)) {
        // httplib's default also sets SO_REUSEPORT, which would let a second
        // server share a busy port instead of failing to start.
        server.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
        });
    }

    MixtureWorld world;
    DetectorSpec spec;
    httplib::Server server;
    std::thread thread;
    std::string host;
    int port = 0;
};

namespace {

void reply_error(httplib::Response& res, int status, const std::string& message) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", message}}.dump(), "application/json");
}

bool is_vec2(const nlohmann::json& v) {
    return v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number();
}

bool is_string_array(const nlohmann::json& v) {
    if (!v.is_array()) return false;
    for (const auto& item : v) {
        if (!item.is_string()) return false;
    }
    return true;
}

}  // namespace

MockDetectorServer::MockDetectorServer(MixtureWorld world, DetectorSpec spec)
    : impl_(std::make_unique<Impl>(std::move(world), std::move(spec))) {
    impl_->spec.validate(impl_->world);
    Impl* self = impl_.get();
    impl_->server.Post("/detect", [self](const httplib::Request& req, httplib::Response& res) {
        nlohmann::json body;
        try {
            body = nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::exception&) {
            return reply_error(res, 400, "request body is not valid JSON");
        }
        if (!body.is_object()) return reply_error(res, 400, "request body must be a JSON object");
        if (!body.contains("x0") || !is_vec2(body["x0"])) return reply_error(res, 400, "x0 must be [f64, f64]");
        if (!body.contains("step") || !body["step"].is_number_integer())
            return reply_error(res, 400, "step must be an integer");
        if (!body.contains("vocabulary") || !is_string_array(body["vocabulary"]))
            return reply_error(res, 400, "vocabulary must be an array of strings");
        if (body.contains("demonstrations")) {
            const auto& demos = body["demonstrations"];
            if (!demos.is_array()) return reply_error(res, 400, "demonstrations must be an array");
            for (const auto& d : demos) {
                if (!d.is_object() || !d.contains("x0") || !is_vec2(d["x0"]) || !d.contains("concepts") ||
                    !is_string_array(d["concepts"]))
                    return reply_error(res, 400, "malformed demonstration");
            }
        }
        ConceptSet vocabulary;
        for (const auto& item : body["vocabulary"]) {
            const auto name = item.get<std::string>();
            const auto idx = self->world.find_concept(name);
            if (!idx || !self->spec.vocabulary.contains(*idx))
                return reply_error(res, 422, "concept outside vocabulary: " + name);
            vocabulary.insert(*idx);
        }
        const Vec2 x0(body["x0"][0].get<double>(), body["x0"][1].get<double>());
        const auto found = oracle_concepts(self->world, vocabulary, self->spec.threshold, x0);
        res.status = 200;
        res.set_content(nlohmann::json{{"concepts", self->world.names_of(found)}}.dump(), "application/json");
    });
}

MockDetectorServer::~MockDetectorServer() { stop(); }

int MockDetectorServer::start(const std::string& host, int port) {
    if (impl_->thread.joinable()) throw Error("mock detector already running");
    const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound <= 0) throw Error("mock detector failed to bind " + host + ":" + std::to_string(port));
    impl_->host = host;
    impl_->port = bound;
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void MockDetectorServer::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

void MockDetectorServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::string MockDetectorServer::endpoint() const {
    return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

}  // namespace vldnp

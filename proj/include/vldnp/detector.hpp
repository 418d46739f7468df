// Copyright (C) 2026 The vldnp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vldnp/guidance.hpp"
#include "vldnp/mixture_world.hpp"

namespace vldnp {

enum class DetectorKind { null, fixed, oracle, remote };

std::string_view to_string(DetectorKind k);
DetectorKind parse_detector_kind(std::string_view name);

struct Demonstration {
    Vec2 x0 = Vec2::Zero();
    ConceptSet concepts;
};

struct DetectorSpec {
    DetectorKind kind = DetectorKind::oracle;
    ConceptSet vocabulary;       // unsafe concepts the detector may report
    ConceptSet static_concepts;  // reply of the fixed detector
    double threshold = 0.3;      // oracle posterior threshold
    std::vector<Demonstration> demonstrations;
    std::string endpoint;        // remote base URL, e.g. http://127.0.0.1:8080
    double timeout_seconds = 5.0;

    /// Throws unless this detector configuration is usable with `world`.
    void validate(const MixtureWorld& world) const;

    static DetectorSpec from_json(const nlohmann::json& doc, const MixtureWorld& world);
    nlohmann::json to_json(const MixtureWorld& world) const;
};

/// Raised by a detector query; carries the grid position of the failed query.
class DetectorError : public Error {
public:
    DetectorError(const std::string& what, int step) : Error(what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

/// Maps an x0 prediction to a negative condition. Implementations are safe
/// to call from several threads at once.
class Detector {
public:
    virtual ~Detector() = default;
    virtual NegativeCondition detect(const Vec2& x0_hat, int step) const = 0;
};

std::unique_ptr<Detector> make_detector(const DetectorSpec& spec, const MixtureWorld& world);

/// One-shot query; builds a detector for the call.
NegativeCondition detect(const DetectorSpec& spec, const MixtureWorld& world, const Vec2& x0_hat, int step);

/// Concepts c in `vocabulary` with p(c | x0_hat) > threshold.
ConceptSet oracle_concepts(const MixtureWorld& world, ConceptSet vocabulary, double threshold, const Vec2& x0_hat);

// Wire protocol: POST {endpoint}/detect
//   request  {"x0": [f64, f64], "step": int, "vocabulary": [string],
//             "demonstrations": [{"x0": [f64, f64], "concepts": [string]}]}
//   response {"concepts": [string]}
// 400 for malformed bodies, 422 for concepts outside the served vocabulary.
nlohmann::json make_detect_request(const MixtureWorld& world, const DetectorSpec& spec, const Vec2& x0_hat, int step);

/// HTTP test double answering the detect protocol with the oracle detector.
class MockDetectorServer {
public:
    MockDetectorServer(MixtureWorld world, DetectorSpec spec);
    ~MockDetectorServer();
    MockDetectorServer(const MockDetectorServer&) = delete;
    MockDetectorServer& operator=(const MockDetectorServer&) = delete;

    /// Binds and serves on a background thread. Port 0 picks a free port.
    /// Returns the bound port; throws vldnp::Error when binding fails.
    int start(const std::string& host, int port);
    /// Blocks until stop() is called from elsewhere.
    void wait();
    void stop();

    std::string endpoint() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace vldnp

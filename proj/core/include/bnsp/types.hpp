#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bnsp {

using Vec2 = Eigen::Vector2d;
using Mat3 = Eigen::Matrix3d;

/// One pedestrian at one frame. Positions are pixels, velocities pixels/second.
struct AgentState {
    Vec2 position = Vec2::Zero();
    Vec2 velocity = Vec2::Zero();
};

// Error taxonomy. The CLI maps these to exit codes:
// usage/parse -> 2, validation -> 3, numeric -> 4.
struct ParseError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ValidationError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ShapeError : std::runtime_error { using std::runtime_error::runtime_error; };
struct LookupError : std::runtime_error { using std::runtime_error::runtime_error; };
struct NumericError : std::runtime_error { using std::runtime_error::runtime_error; };
struct UsageError : std::runtime_error { using std::runtime_error::runtime_error; };
struct ContractError : std::logic_error { using std::logic_error::logic_error; };

/// Structured record of a numeric event (singularity clamp, non-finite abort).
struct DiagnosticRecord {
    std::string kind;
    std::string detail;
};

struct Diagnostics {
    std::vector<DiagnosticRecord> records;

    void note(std::string kind, std::string detail) {
        records.push_back({std::move(kind), std::move(detail)});
    }
};

inline bool is_finite(const Vec2& v) {
    return std::isfinite(v.x()) && std::isfinite(v.y());
}

inline bool is_finite(const AgentState& s) {
    return is_finite(s.position) && is_finite(s.velocity);
}

}  // namespace bnsp

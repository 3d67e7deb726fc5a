#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace glot {

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& msg) : Error("shape mismatch: " + msg) {}
};
struct DegenerateRotation : Error {
    explicit DegenerateRotation(const std::string& msg) : Error("degenerate rotation: " + msg) {}
};
struct IndexOutOfRange : Error {
    explicit IndexOutOfRange(const std::string& msg) : Error("index out of range: " + msg) {}
};
struct DegenerateCloud : Error {
    explicit DegenerateCloud(const std::string& msg) : Error("degenerate point cloud: " + msg) {}
};
struct SequenceTooShort : Error {
    explicit SequenceTooShort(const std::string& msg) : Error("sequence too short: " + msg) {}
};
struct EmptyInput : Error {
    explicit EmptyInput(const std::string& msg) : Error("empty input: " + msg) {}
};
struct EmptyMemory : Error {
    explicit EmptyMemory(const std::string& msg) : Error("empty memory: " + msg) {}
};
struct IndexMismatch : Error {
    explicit IndexMismatch(const std::string& msg) : Error("index mismatch: " + msg) {}
};
struct TopologyError : Error {
    explicit TopologyError(const std::string& msg) : Error("topology error: " + msg) {}
};
struct NaNGradient : Error {
    explicit NaNGradient(const std::string& msg) : Error("NaN gradient: " + msg) {}
};
struct NaNLoss : Error {
    explicit NaNLoss(const std::string& msg) : Error("NaN loss: " + msg) {}
};
struct CorruptFile : Error {
    explicit CorruptFile(const std::string& msg) : Error("corrupt file: " + msg) {}
};
struct VersionMismatch : Error {
    explicit VersionMismatch(const std::string& msg) : Error("version mismatch: " + msg) {}
};
struct ConfigMismatch : Error {
    explicit ConfigMismatch(const std::string& msg) : Error("config mismatch: " + msg) {}
};
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("i/o error: " + msg) {}
};
struct UsageError : Error {
    explicit UsageError(const std::string& msg) : Error("usage error: " + msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// mt19937_64 produces a standardized stream, but the std <random>
// distributions are implementation-defined, so the transforms below are
// hand-rolled to keep every draw bit-reproducible.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::int64_t uniform_int(std::int64_t n) {
        // Rejection sampling keeps the distribution exact.
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return static_cast<std::int64_t>(x % un);
    }

    // Standard normal via Box-Muller (no caching, two uniforms per draw).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Derive an independent stream; useful for per-sequence seeding.
    std::uint64_t fork_seed() { return engine_(); }

    static constexpr double kPi = 3.14159265358979323846;

private:
    std::mt19937_64 engine_;
};

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace glot

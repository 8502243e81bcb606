#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace curvlab {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Error taxonomy. All computational failures are reported through these so
// callers (and the CLI exit-code mapping) can tell configuration mistakes
// from numerical breakdowns.
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateInput : Error { using Error::Error; };
struct SingularMetric : Error { using Error::Error; };
struct BadOrder : Error { using Error::Error; };
struct BadSpec : Error { using Error::Error; };
struct BadShape : Error { using Error::Error; };
struct NotTraceless : Error { using Error::Error; };
struct NonpositiveWeight : Error { using Error::Error; };
struct NotCritical : Error { using Error::Error; };
struct IncompleteSlicing : Error { using Error::Error; };
struct WrongOrder : Error { using Error::Error; };
struct InfeasiblePair : Error { using Error::Error; };
struct IterationLimit : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Deterministic random numbers. mt19937_64 is fully specified by the
// standard and the Box-Muller transform is ours, so streams are reproducible
// across platforms for a fixed seed.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent child seed for trial/restart `index` of a sweep.
inline uint64_t derive_seed(uint64_t seed, uint64_t index) {
    return splitmix64(seed ^ splitmix64(index + 1));
}

class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    // uniform in (0, 1]
    double uniform() {
        const uint64_t bits = engine_() >> 11;
        return static_cast<double>(bits + 1) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// ---------------------------------------------------------------------------
// Compensated (Neumaier) summation. Quadrature totals obtained this way are
// correctly rounded for our magnitudes, which makes them invariant under
// reorderings such as integer grid shifts.
// ---------------------------------------------------------------------------

class NeumaierSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

// ---------------------------------------------------------------------------
// Slot-writing parallel loop. Work item i must write only to its own output
// slot; aggregation stays with the caller, so results do not depend on
// scheduling order.
// ---------------------------------------------------------------------------

inline unsigned default_thread_count() {
    const char* env = std::getenv("CURVLAB_THREADS");
    if (env != nullptr) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         unsigned threads = 0) {
    if (threads == 0) threads = default_thread_count();
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            body(i);
        }
    };
    std::vector<std::thread> pool;
    const unsigned count = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    pool.reserve(count);
    for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

// FD steps balancing truncation against roundoff, scaled per coordinate.
inline double fd_step_first(double coord) {
    static const double base = std::cbrt(std::numeric_limits<double>::epsilon());
    return base * std::max(1.0, std::abs(coord));
}

inline double fd_step_second(double coord) {
    static const double base = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
    return base * std::max(1.0, std::abs(coord));
}

}  // namespace curvlab

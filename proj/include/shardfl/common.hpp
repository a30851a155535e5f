// Shared plumbing: error taxonomy, deterministic RNG, hashing, byte I/O.
#pragma once

#include <atomic>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace shardfl {

// ---------------------------------------------------------------------------
// Errors. Each class maps to a distinct CLI exit code.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CacheError : std::runtime_error {
    enum class Kind { Io, VersionMismatch, DigestMismatch, Truncated, Schema };
    CacheError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
    Kind kind;
};

struct RequestError : std::runtime_error {
    explicit RequestError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid arguments to library operations (dimension mismatches, empty
// batches, degenerate vectors, ...).
struct InvalidInputError : std::runtime_error {
    explicit InvalidInputError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Hashing. FNV-1a 64 over raw bytes; used for stream keys, config digests
// and blob integrity checks.

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

namespace detail {
inline void hash_accum(std::uint64_t& h, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    h = fnv1a64(b, 8, h);
}
}  // namespace detail

// Keyed digest of a sequence of 64-bit words. Stream keys are derived as
// digest64(master_seed, stage, shard, round, client).
template <typename... Words>
std::uint64_t digest64(Words... words) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    (detail::hash_accum(h, static_cast<std::uint64_t>(words)), ...);
    return h;
}

std::string to_hex(std::uint64_t v);

// ---------------------------------------------------------------------------
// Deterministic RNG. splitmix64 core; all distributions are hand-built from
// raw bits so results do not depend on the standard library implementation.

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97f4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double normal();
    double gamma(double alpha);

    // Unbiased integer in [0, n); n must be > 0.
    std::uint64_t below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
    bool has_spare_{false};
    double spare_{0.0};
};

// Dirichlet(alpha * 1_L) draw.
std::vector<double> dirichlet(Rng& rng, double alpha, int dims);

// ---------------------------------------------------------------------------
// Little-endian byte I/O helpers for the parameter blob format.

void append_u64_le(std::vector<unsigned char>& out, std::uint64_t v);
void append_f64_le(std::vector<unsigned char>& out, double v);
std::uint64_t read_u64_le(const unsigned char* p);
double read_f64_le(const unsigned char* p);

// ---------------------------------------------------------------------------
// Deterministic-result parallel loop: f(i) writes only to slot i, so the
// outcome is independent of scheduling. threads <= 1 runs inline.

template <typename F>
void parallel_for(int n, int threads, F&& f) {
    if (n <= 0) return;
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (threads <= 0) threads = hw > 0 ? hw : 1;
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::atomic<bool> failed{false};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                if (failed.load()) return;
                try {
                    f(i);
                } catch (...) {
                    if (!failed.exchange(true)) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace shardfl

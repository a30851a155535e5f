#include "shardfl/common.hpp"

#include <cmath>

namespace shardfl {

std::string to_hex(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    double u1 = 1.0 - uniform01();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

double Rng::gamma(double alpha) {
    if (alpha <= 0.0) throw InvalidInputError("gamma: alpha must be positive");
    if (alpha < 1.0) {
        // Boost to alpha + 1, then scale back by u^(1/alpha).
        double u = 1.0 - uniform01();
        return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    // Marsaglia-Tsang squeeze.
    double d = alpha - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        double v = t * t * t;
        double u = uniform01();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw InvalidInputError("below: n must be positive");
    // Rejection with a power-of-two mask keeps the draw unbiased.
    std::uint64_t mask = n - 1;
    mask |= mask >> 1;
    mask |= mask >> 2;
    mask |= mask >> 4;
    mask |= mask >> 8;
    mask |= mask >> 16;
    mask |= mask >> 32;
    for (;;) {
        std::uint64_t v = next_u64() & mask;
        if (v < n) return v;
    }
}

std::vector<double> dirichlet(Rng& rng, double alpha, int dims) {
    if (dims <= 0) throw InvalidInputError("dirichlet: dims must be positive");
    std::vector<double> v(static_cast<std::size_t>(dims));
    double sum = 0.0;
    for (auto& x : v) {
        x = rng.gamma(alpha);
        sum += x;
    }
    if (sum < 1e-300) {
        double u = 1.0 / static_cast<double>(dims);
        for (auto& x : v) x = u;
        return v;
    }
    for (auto& x : v) x /= sum;
    return v;
}

void append_u64_le(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void append_f64_le(std::vector<unsigned char>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    append_u64_le(out, bits);
}

std::uint64_t read_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

double read_f64_le(const unsigned char* p) {
    std::uint64_t bits = read_u64_le(p);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace shardfl

#include "feast/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "feast/errors.hpp"

namespace feast {

int Rng::uniform_int(int bound) {
    if (bound <= 0) throw IndexError("uniform_int: bound must be positive, got " + std::to_string(bound));
    const uint64_t b = static_cast<uint64_t>(bound);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % b;
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<int>(x % b);
}

double Rng::normal() {
    // u1 in (0, 1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<int> Rng::sample_without_replacement(int n, int k) {
    if (k > n) throw IndexError("sample_without_replacement: k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int i = 0; i < k; ++i) {
        int j = i + uniform_int(n - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

void Rng::shuffle(std::vector<int>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
        int j = uniform_int(i + 1);
        std::swap(v[i], v[j]);
    }
}

std::string Rng::serialize() const {
    std::ostringstream out;
    out << engine_;
    return out.str();
}

void Rng::deserialize(const std::string& text) {
    std::istringstream in(text);
    in >> engine_;
    if (in.fail()) throw StateError("Rng::deserialize: malformed state string");
}

uint64_t Rng::mix(uint64_t a, uint64_t b) {
    // splitmix64 finalizer over a simple combine.
    uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace feast

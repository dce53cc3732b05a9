#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nht {

struct Vec2 {
    double x = 0.0, y = 0.0;
    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}
    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double cross(const Vec2& o) const { return x * o.y - y * o.x; }
    double norm() const { return std::sqrt(x * x + y * y); }
};
inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}
    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
};

class NhtError : public std::runtime_error {
public:
    explicit NhtError(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic RNG. mt19937_64 output is pinned by the standard; the
// distribution helpers are hand-rolled because std:: distributions are
// implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : gen_(seed) {}

    double uniform() {  // [0, 1)
        return double(gen_() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        if (have_spare_) { have_spare_ = false; return spare_; }
        double u1, u2;
        do { u1 = uniform(); } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }
    // [0, n)
    uint64_t index(uint64_t n) {
        return n ? uint64_t(uniform() * double(n)) % n : 0;
    }
    uint64_t raw() { return gen_(); }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

inline int max_threads() {
    if (const char* env = std::getenv("NHT_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? int(hc) : 1;
}

// Splits [0, n) into at most max_threads() contiguous ranges and runs
// fn(thread_index, begin, end) on each. The partition depends only on n and
// the thread count, so per-thread accumulation reduced in thread order is
// reproducible run to run.
inline void parallel_ranges(size_t n,
                            const std::function<void(int, size_t, size_t)>& fn,
                            int threads = 0) {
    if (threads <= 0) threads = max_threads();
    size_t nt = std::min<size_t>(threads, n ? n : 1);
    if (nt <= 1) { fn(0, 0, n); return; }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    size_t chunk = (n + nt - 1) / nt;
    for (size_t t = 0; t < nt; ++t) {
        size_t b = t * chunk, e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, t, b, e] { fn(int(t), b, e); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace nht

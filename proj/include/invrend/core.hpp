#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace invrend {

constexpr double kPi = 3.14159265358979323846;

struct Vec2 {
    double x = 0, y = 0;
    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}
    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::sqrt(x * x + y * y); }
};

struct Vec3 {
    double x = 0, y = 0, z = 0;
    Vec3() = default;
    Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}
    double& operator[](int i) { return (&x)[i]; }
    double operator[](int i) const { return (&x)[i]; }
    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3 cwiseMul(const Vec3& o) const { return {x * o.x, y * o.y, z * o.z}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    double squaredNorm() const { return dot(*this); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0 ? (*this) / n : Vec3{0, 0, 0};
    }
    bool allFinite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }
inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

// Row-major 3x3.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};
    static Mat3 identity() { return {}; }
    double operator()(int r, int c) const { return m[r * 3 + c]; }
    double& operator()(int r, int c) { return m[r * 3 + c]; }
    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 transposed() const {
        Mat3 t;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) t(r, c) = (*this)(c, r);
        return t;
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }
};

template <typename T>
struct Image {
    int width = 0, height = 0, channels = 0;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, int c, T fill = T(0))
        : width(w), height(h), channels(c), data(size_t(w) * h * c, fill) {}

    T& at(int x, int y, int c = 0) { return data[(size_t(y) * width + x) * channels + c]; }
    T at(int x, int y, int c = 0) const { return data[(size_t(y) * width + x) * channels + c]; }
    size_t pixels() const { return size_t(width) * height; }
    bool sameShape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

using Imagef = Image<float>;
using Imaged = Image<double>;
using Maskimg = Image<uint8_t>;

// Deterministic 64-bit generator (splitmix64 core). All project randomness
// flows through this so runs are reproducible from one seed.
struct Rng {
    uint64_t state;
    explicit Rng(uint64_t seed = 0) : state(seed + 0x9e3779b97f4a7c15ULL) {}

    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    // Uniform in [0,1).
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    uint64_t below(uint64_t n) { return next() % n; }
    double normal() {
        // Box-Muller; one value per call keeps the stream simple.
        double u1 = std::max(uniform(), 1e-300), u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }
    Vec3 unitVector() {
        double z = uniform(-1.0, 1.0);
        double phi = uniform(0.0, 2.0 * kPi);
        double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        return {r * std::cos(phi), r * std::sin(phi), z};
    }
    // Decorrelated child stream, e.g. per-iteration or per-pixel.
    Rng fork(uint64_t salt) const {
        Rng r(state ^ (salt * 0x9e3779b97f4a7c15ULL + 0x7f4a7c15ULL));
        r.next();
        return r;
    }
};

struct NumericalFault : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

inline double sqr(double v) { return v * v; }

}  // namespace invrend

#pragma once

#include "invrend/tape.hpp"

namespace invrend {

// Thin scalar/vector handles over tape nodes so shading formulas can be
// written once and instantiated for plain doubles and for tape recording.

struct TScal {
    GradientTape* t = nullptr;
    NodeId id = kNoNode;
    double value() const { return t->scalar(id); }
};

struct TVec3 {
    GradientTape* t = nullptr;
    NodeId id = kNoNode;  // length-3 node
    Vec3 value() const {
        auto v = t->value(id);
        return {v[0], v[1], v[2]};
    }
};

inline TScal operator+(TScal a, TScal b) { return {a.t, a.t->add(a.id, b.id)}; }
inline TScal operator-(TScal a, TScal b) { return {a.t, a.t->sub(a.id, b.id)}; }
inline TScal operator*(TScal a, TScal b) { return {a.t, a.t->mul(a.id, b.id)}; }
inline TScal operator/(TScal a, TScal b) { return {a.t, a.t->div(a.id, b.id)}; }
inline TScal operator*(TScal a, double c) { return {a.t, a.t->scale_shift(a.id, c)}; }
inline TScal operator*(double c, TScal a) { return a * c; }
inline TScal operator+(TScal a, double c) { return {a.t, a.t->scale_shift(a.id, 1.0, c)}; }
inline TScal operator+(double c, TScal a) { return a + c; }
inline TScal operator-(TScal a, double c) { return a + (-c); }
inline TScal operator-(double c, TScal a) { return {a.t, a.t->scale_shift(a.id, -1.0, c)}; }
inline TScal operator/(TScal a, double c) { return a * (1.0 / c); }
inline TScal operator/(double c, TScal a) {
    return TScal{a.t, a.t->constant(c)} / a;
}
inline TScal operator-(TScal a) { return a * -1.0; }

inline TVec3 operator+(TVec3 a, TVec3 b) { return {a.t, a.t->add(a.id, b.id)}; }
inline TVec3 operator-(TVec3 a, TVec3 b) { return {a.t, a.t->sub(a.id, b.id)}; }
inline TVec3 operator*(TVec3 a, TScal s) { return {a.t, a.t->mul(a.id, s.id)}; }
inline TVec3 operator*(TVec3 a, double c) { return {a.t, a.t->scale_shift(a.id, c)}; }
inline TVec3 operator*(double c, TVec3 a) { return a * c; }
inline TVec3 operator/(TVec3 a, TScal s) { return {a.t, a.t->div(a.id, s.id)}; }
inline TVec3 operator-(TVec3 a) { return a * -1.0; }

inline TScal dot(TVec3 a, TVec3 b) { return {a.t, a.t->dot(a.id, b.id)}; }
inline TScal norm(TVec3 a) { return {a.t, a.t->norm(a.id)}; }
inline TVec3 normalized(TVec3 a) { return a / norm(a); }
inline TScal sqrt_s(TScal a) { return {a.t, a.t->sqrt_(a.id)}; }
inline TScal sin_s(TScal a) { return {a.t, a.t->sin_(a.id)}; }
inline TScal acos_clamp_s(TScal a) { return {a.t, a.t->acos_clamp(a.id)}; }
inline TScal comp(TVec3 a, int i) { return {a.t, a.t->slice(a.id, i, 1)}; }
inline double value_of(TScal a) { return a.value(); }

// Primal counterparts so templated formulas compile for doubles.
inline double dot(const Vec3& a, const Vec3& b) { return a.dot(b); }
inline double norm(const Vec3& a) { return a.norm(); }
inline Vec3 normalized(const Vec3& a) { return a.normalized(); }
inline double sqrt_s(double a) { return std::sqrt(a); }
inline double sin_s(double a) { return std::sin(a); }
inline double acos_clamp_s(double a) { return std::acos(clampd(a, -1.0, 1.0)); }
inline double comp(const Vec3& a, int i) { return a[i]; }
inline double value_of(double a) { return a; }

// Factory contexts.
struct PrimalCtx {
    using S = double;
    using V3 = Vec3;
    S scalar(double v) const { return v; }
    V3 vec3(const Vec3& v) const { return v; }
};
struct TapeCtx {
    GradientTape* t;
    using S = TScal;
    using V3 = TVec3;
    S scalar(double v) const { return {t, t->constant(v)}; }
    V3 vec3(const Vec3& v) const { return {t, t->constant3(v)}; }
};

}  // namespace invrend

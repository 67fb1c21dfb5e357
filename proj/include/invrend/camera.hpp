#pragma once

#include "invrend/core.hpp"

namespace invrend {

struct Ray {
    Vec3 o, d;  // d unit length
    Vec3 at(double t) const { return o + t * d; }
};

// Pinhole camera, OpenCV conventions: +x right, +y down, +z forward in
// camera space; pixel (u,v) has u growing right and v growing down. The
// pose is camera-to-world.
struct Camera {
    int width = 0, height = 0;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Mat3 rot;   // cam-to-world rotation
    Vec3 pos;   // camera center in world space

    Vec3 origin() const { return pos; }

    Ray ray_through(const Vec2& pixel) const {
        Vec3 dir_cam{(pixel.x - cx) / fx, (pixel.y - cy) / fy, 1.0};
        return {pos, (rot * dir_cam).normalized()};
    }

    // Projects a world point; returns false behind the camera.
    bool project(const Vec3& x, Vec2* uv, double* z_depth = nullptr) const {
        Vec3 xc = rot.transposed() * (x - pos);
        if (xc.z <= 1e-9) return false;
        if (uv) *uv = {fx * xc.x / xc.z + cx, fy * xc.y / xc.z + cy};
        if (z_depth) *z_depth = xc.z;
        return true;
    }

    Vec3 unproject(const Vec2& uv, double z_depth) const {
        Vec3 xc{(uv.x - cx) / fx * z_depth, (uv.y - cy) / fy * z_depth, z_depth};
        return rot * xc + pos;
    }

    // Image-plane image of a 3D direction attached at x (the projection
    // Jacobian applied to d). Not normalized.
    Vec2 project_dir(const Vec3& x, const Vec3& d) const {
        Vec3 xc = rot.transposed() * (x - pos);
        Vec3 dc = rot.transposed() * d;
        const double z = xc.z;
        return {fx * (dc.x / z - xc.x * dc.z / (z * z)),
                fy * (dc.y / z - xc.y * dc.z / (z * z))};
    }

    bool contains(const Vec2& uv) const {
        return uv.x >= 0 && uv.y >= 0 && uv.x < width && uv.y < height;
    }

    // Faults unless fx,fy positive and the rotation is orthonormal to 1e-6.
    void validate() const;

    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, int width,
                          int height, double focal_px);
};

}  // namespace invrend

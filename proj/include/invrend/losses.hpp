#pragma once

#include "invrend/field.hpp"

namespace invrend {

// HDR-to-loss tone curve: clamp then a stabilized gamma. The epsilon shift
// keeps the derivative finite at zero radiance.
struct ToneConfig {
    double clamp_max = 4.0;
    double gamma = 2.2;
    double eps = 1e-4;
};
double tone_map(double v, const ToneConfig& tc);
Imaged tone_map_image(const Imaged& img, const ToneConfig& tc);
NodeId record_tone(GradientTape& t, NodeId img, const ToneConfig& tc);

// ---------------------------------------------------------------------------
// Gaussian-pyramid L2. Level 0 is the raw image; each further level is a
// [1 4 6 4 1]/16 blur (replicated borders) followed by a 2x decimation.
// The loss sums the per-level mean squared differences (mean over pixels
// and channels). Faults when the patch cannot sustain the pyramid.
double pyramid_l2(const Imaged& a, const Imaged& b, int levels);
NodeId record_pyramid_l2(GradientTape& t, const std::array<NodeId, 3>& a_channels, int w, int h,
                         const Imaged& b, int levels);

// ---------------------------------------------------------------------------
// SSIM with an 11x11 Gaussian window (sigma 1.5), C1=(0.01 R)^2,
// C2=(0.03 R)^2, channel-averaged, window-interior mean. Images smaller
// than the window fall back to global statistics.
double ssim(const Imaged& a, const Imaged& b, double dynamic_range = 1.0);
inline double ssim_loss(const Imaged& a, const Imaged& b, double dynamic_range = 1.0) {
    return 1.0 - ssim(a, b, dynamic_range);
}
NodeId record_ssim_loss(GradientTape& t, const std::array<NodeId, 3>& a_channels, int w, int h,
                        const Imaged& b, double dynamic_range = 1.0);

// ---------------------------------------------------------------------------
// Eikonal regularizer: mean (|grad S| - 1)^2 over the sample points.
double eikonal_loss(const SdfField& field, std::span<const Vec3> points);
NodeId record_eikonal_loss(GradientTape& t, const FieldStack& field, std::span<const Vec3> points);

// Roughness range penalty: mean max(alpha_r - 0.5, 0).
double roughness_hinge(std::span<const double> alphas);
NodeId record_roughness_loss(GradientTape& t, const FieldStack& field,
                             std::span<const Vec3> points, std::span<const Vec3> normals);

// PSNR over [0, peak] images.
double psnr(const Imaged& a, const Imaged& b, double peak = 1.0);

}  // namespace invrend

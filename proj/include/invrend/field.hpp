#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "invrend/encoding.hpp"
#include "invrend/mlp.hpp"

namespace invrend {

// Geometry interface shared by the neural field and the analytic test
// adapters. Gradients here are exact spatial derivatives, never finite
// differences.
class SdfField {
  public:
    virtual ~SdfField() = default;
    virtual double sdf(const Vec3& x) const = 0;
    virtual void sdf_full(const Vec3& x, double* s, Vec3* grad,
                          std::vector<double>* feature) const = 0;
    virtual int feature_dim() const { return 0; }

    Vec3 sdf_grad(const Vec3& x) const {
        double s;
        Vec3 g;
        sdf_full(x, &s, &g, nullptr);
        return g;
    }
    Vec3 normal(const Vec3& x) const { return sdf_grad(x).normalized(); }
};

struct MaterialSample {
    Vec3 beta;       // diffuse albedo, each channel in (0,1)
    Vec3 kappa;      // specular albedo
    double alpha_r;  // roughness in (0,1)
};

class MaterialSource {
  public:
    virtual ~MaterialSource() = default;
    virtual MaterialSample eval(const Vec3& x, const Vec3& n,
                                std::span<const double> feature) const = 0;
};

// ---------------------------------------------------------------------------
// Analytic adapters (the test oracles).

struct SphereSdf final : SdfField {
    Vec3 center{0, 0, 0};
    double radius = 1.0;
    SphereSdf() = default;
    SphereSdf(const Vec3& c, double r) : center(c), radius(r) {}
    double sdf(const Vec3& x) const override { return (x - center).norm() - radius; }
    void sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const override;
};

// Axis of symmetry is z; ring radius R, tube radius r.
struct TorusSdf final : SdfField {
    double R = 1.0, r = 0.3;
    TorusSdf() = default;
    TorusSdf(double R_, double r_) : R(R_), r(r_) {}
    double sdf(const Vec3& x) const override;
    void sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const override;
};

struct BoxSdf final : SdfField {
    Vec3 half{0.5, 0.5, 0.5};
    explicit BoxSdf(const Vec3& h) : half(h) {}
    double sdf(const Vec3& x) const override;
    void sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const override;
};

struct PlaneSdf final : SdfField {
    Vec3 n{0, 0, 1};
    double d = 0;
    PlaneSdf(const Vec3& n_, double d_) : n(n_.normalized()), d(d_) {}
    double sdf(const Vec3& x) const override { return n.dot(x) - d; }
    void sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const override;
};

struct ScaledSdf final : SdfField {
    const SdfField* base;
    double scale = 1.0;
    ScaledSdf(const SdfField* b, double s) : base(b), scale(s) {}
    double sdf(const Vec3& x) const override { return scale * base->sdf(x); }
    void sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const override;
};

// Quadratic-polynomial smooth union; 1-Lipschitz when the children are.
struct SmoothUnionSdf final : SdfField {
    std::vector<std::shared_ptr<SdfField>> children;
    double k = 0.1;
    double sdf(const Vec3& x) const override;
    void sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const override;
};

struct ConstantMaterial final : MaterialSource {
    MaterialSample value;
    explicit ConstantMaterial(const MaterialSample& v) : value(v) {}
    MaterialSample eval(const Vec3&, const Vec3&, std::span<const double>) const override {
        return value;
    }
};

// Albedo switches at the plane axis . x = 0; the tone boundary of the
// two_tone_sphere scene.
struct TwoToneMaterial final : MaterialSource {
    Vec3 axis{1, 0, 0};
    MaterialSample pos, neg;
    MaterialSample eval(const Vec3& x, const Vec3&, std::span<const double>) const override {
        return axis.dot(x) > 0 ? pos : neg;
    }
};

// ---------------------------------------------------------------------------
// The trainable field stack: four MLPs plus the scalar light intensity,
// stored in one flat parameter vector in the order sdf, diffuse, specular,
// roughness, light.

struct NetConfig {
    int depth = 4;
    int width = 64;
    int skip = 2;        // -1 for none
    int pe_freqs = 6;
    double act_k = 100.0;
};

struct FieldConfig {
    NetConfig sdf{4, 64, 2, 6, 100.0};
    NetConfig diffuse{4, 64, 2, 10, 20.0};
    NetConfig specular{4, 64, -1, 6, 20.0};
    NetConfig roughness{4, 64, -1, 6, 20.0};
    int feature_dim = 32;
    int dir_pe_freqs = 4;       // encoding of the direction input of the diffuse net
    bool feature_off = false;   // ablation: zero the geometric feature
    double init_radius = 0.5;   // geometric initialization sphere
    double light_init = 10.0;
    uint64_t seed = 1;

    static FieldConfig desk();
    static FieldConfig paper();
};

class FieldStack final : public SdfField, public MaterialSource {
  public:
    explicit FieldStack(const FieldConfig& cfg);

    const FieldConfig& config() const { return cfg_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    int param_count() const { return int(params_.size()); }
    int light_offset() const { return light_off_; }
    double light() const { return params_[light_off_]; }
    void set_light(double v) { params_[light_off_] = v; }

    struct Range {
        int off = 0, len = 0;
    };
    Range sdf_range() const { return r_sdf_; }
    Range diffuse_range() const { return r_diff_; }
    Range specular_range() const { return r_spec_; }
    Range roughness_range() const { return r_rough_; }

    // --- SdfField ---
    int feature_dim() const override { return cfg_.feature_dim; }
    double sdf(const Vec3& x) const override;
    void sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const override;

    // --- MaterialSource (stage-2 semantics: direction input = normal) ---
    MaterialSample eval(const Vec3& x, const Vec3& n,
                        std::span<const double> feature) const override;
    // Stage-1 radiance: the diffuse net queried with an arbitrary direction.
    Vec3 radiance(const Vec3& x, const Vec3& n, const Vec3& dir,
                  std::span<const double> feature) const;

    // --- tape recording ---
    NodeId record_sdf_value(GradientTape& t, NodeId x3) const;
    struct SdfNodes {
        NodeId s, feature, grad;
    };
    SdfNodes record_sdf_full(GradientTape& t, NodeId x3) const;
    struct MaterialNodes {
        NodeId beta, kappa, alpha;
    };
    MaterialNodes record_materials(GradientTape& t, NodeId x3, NodeId n3, NodeId dir3,
                                   NodeId feature) const;
    NodeId record_radiance(GradientTape& t, NodeId x3, NodeId n3, NodeId dir3,
                           NodeId feature) const;
    NodeId record_light(GradientTape& t) const { return t.param_vec(light_off_, 1); }

    // --- checkpoints ---
    void save_checkpoint(const std::string& path,
                         const std::map<std::string, double>& extras = {}) const;
    // Faults if the stored layout does not match this stack's configuration.
    std::map<std::string, double> load_checkpoint(const std::string& path);

  private:
    void check_finite(double v, const char* net) const;

    FieldConfig cfg_;
    PositionalEncoding pe_sdf_, pe_diff_, pe_dir_, pe_spec_;
    MlpSpec sdf_net_, diff_net_, spec_net_, rough_net_;
    Range r_sdf_, r_diff_, r_spec_, r_rough_;
    int light_off_ = 0;
    std::vector<double> params_;
};

}  // namespace invrend

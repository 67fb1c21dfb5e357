#include "invrend/field.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace invrend {

// ---------------------------------------------------------------------------
// Analytic adapters

void SphereSdf::sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const {
    Vec3 d = x - center;
    double n = d.norm();
    if (s) *s = n - radius;
    if (grad) *grad = n > 1e-12 ? d / n : Vec3{1, 0, 0};
    if (f) f->clear();
}

double TorusSdf::sdf(const Vec3& x) const {
    double q = std::sqrt(x.x * x.x + x.y * x.y) - R;
    return std::sqrt(q * q + x.z * x.z) - r;
}

void TorusSdf::sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const {
    double rho = std::sqrt(x.x * x.x + x.y * x.y);
    double q = rho - R;
    double m = std::sqrt(q * q + x.z * x.z);
    if (s) *s = m - r;
    if (grad) {
        if (m > 1e-12 && rho > 1e-12)
            *grad = Vec3{q * x.x / (rho * m), q * x.y / (rho * m), x.z / m};
        else
            *grad = Vec3{0, 0, 1};
    }
    if (f) f->clear();
}

double BoxSdf::sdf(const Vec3& x) const {
    Vec3 q{std::abs(x.x) - half.x, std::abs(x.y) - half.y, std::abs(x.z) - half.z};
    Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
    return qp.norm() + std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
}

void BoxSdf::sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const {
    if (s) *s = sdf(x);
    if (grad) {
        Vec3 q{std::abs(x.x) - half.x, std::abs(x.y) - half.y, std::abs(x.z) - half.z};
        Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
        double n = qp.norm();
        Vec3 g;
        if (n > 1e-12) {
            g = qp / n;
        } else {
            // inside: push along the least-penetrated axis
            g = {0, 0, 0};
            if (q.x >= q.y && q.x >= q.z) g.x = 1;
            else if (q.y >= q.z) g.y = 1;
            else g.z = 1;
        }
        *grad = Vec3{x.x < 0 ? -g.x : g.x, x.y < 0 ? -g.y : g.y, x.z < 0 ? -g.z : g.z};
    }
    if (f) f->clear();
}

void PlaneSdf::sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const {
    if (s) *s = n.dot(x) - d;
    if (grad) *grad = n;
    if (f) f->clear();
}

void ScaledSdf::sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const {
    base->sdf_full(x, s, grad, f);
    if (s) *s *= scale;
    if (grad) *grad = *grad * scale;
}

double SmoothUnionSdf::sdf(const Vec3& x) const {
    double s;
    sdf_full(x, &s, nullptr, nullptr);
    return s;
}

void SmoothUnionSdf::sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const {
    double acc = 0;
    Vec3 gacc;
    bool first = true;
    for (const auto& c : children) {
        double sc;
        Vec3 gc;
        c->sdf_full(x, &sc, grad ? &gc : nullptr, nullptr);
        if (first) {
            acc = sc;
            gacc = gc;
            first = false;
            continue;
        }
        double h = clampd(0.5 + 0.5 * (acc - sc) / k, 0.0, 1.0);
        acc = acc * (1.0 - h) + sc * h - k * h * (1.0 - h);
        if (grad) gacc = gacc * (1.0 - h) + gc * h;
    }
    if (s) *s = acc;
    if (grad) *grad = gacc;
    if (f) f->clear();
}

// ---------------------------------------------------------------------------
// FieldStack

FieldConfig FieldConfig::desk() { return FieldConfig{}; }

FieldConfig FieldConfig::paper() {
    FieldConfig c;
    c.sdf = {8, 256, 4, 6, 100.0};
    c.diffuse = {8, 256, 4, 10, 20.0};
    c.specular = {4, 256, -1, 6, 20.0};
    c.roughness = {4, 256, -1, 6, 20.0};
    c.feature_dim = 256;
    return c;
}

FieldStack::FieldStack(const FieldConfig& cfg) : cfg_(cfg) {
    pe_sdf_ = {cfg.sdf.pe_freqs, true};
    pe_diff_ = {cfg.diffuse.pe_freqs, true};
    pe_dir_ = {cfg.dir_pe_freqs, true};
    pe_spec_ = {cfg.specular.pe_freqs, true};

    auto make = [&](const char* name, const NetConfig& nc, int in, int out,
                    MlpSpec::Head head) {
        MlpSpec s;
        s.name = name;
        s.in_dim = in;
        s.width = nc.width;
        s.depth = nc.depth;
        s.out_dim = out;
        s.skip_layer = nc.skip;
        s.act_k = nc.act_k;
        s.head = head;
        return s;
    };
    const int F = cfg.feature_dim;
    sdf_net_ = make("sdf", cfg.sdf, pe_sdf_.out_dim(3), 1 + F, MlpSpec::Head::Linear);
    diff_net_ = make("diffuse", cfg.diffuse, pe_diff_.out_dim(3) + 3 + pe_dir_.out_dim(3) + F, 3,
                     MlpSpec::Head::Sigmoid);
    spec_net_ = make("specular", cfg.specular, pe_spec_.out_dim(3) + 3 + F, 3,
                     MlpSpec::Head::Sigmoid);
    rough_net_ = make("roughness", cfg.roughness, pe_spec_.out_dim(3) + 3 + F, 1,
                      MlpSpec::Head::Sigmoid);

    int off = 0;
    r_sdf_.off = off;
    off = sdf_net_.layout(off);
    r_sdf_.len = off - r_sdf_.off;
    r_diff_.off = off;
    off = diff_net_.layout(off);
    r_diff_.len = off - r_diff_.off;
    r_spec_.off = off;
    off = spec_net_.layout(off);
    r_spec_.len = off - r_spec_.off;
    r_rough_.off = off;
    off = rough_net_.layout(off);
    r_rough_.len = off - r_rough_.off;
    light_off_ = off;
    params_.assign(off + 1, 0.0);

    Rng rng(cfg.seed);
    init_geometric(rng, sdf_net_, params_, cfg.init_radius, 3);
    init_he(rng, diff_net_, params_, 0.0);        // sigmoid -> albedo near 0.5
    init_he(rng, spec_net_, params_, -2.0);       // small initial specular albedo
    init_he(rng, rough_net_, params_, -1.0);      // roughness near 0.27
    params_[light_off_] = cfg.light_init;
}

void FieldStack::check_finite(double v, const char* net) const {
    if (!std::isfinite(v)) {
        double pmin = params_.empty() ? 0 : params_[0], pmax = pmin;
        for (double p : params_) {
            pmin = std::min(pmin, p);
            pmax = std::max(pmax, p);
        }
        throw NumericalFault(std::string("non-finite activation in net '") + net +
                             "' (param range [" + std::to_string(pmin) + ", " +
                             std::to_string(pmax) + "])");
    }
}

double FieldStack::sdf(const Vec3& x) const {
    thread_local std::vector<double> scratch;
    thread_local std::vector<double> out;
    double xin[3] = {x.x, x.y, x.z};
    std::vector<double> enc = encode(std::span<const double>(xin, 3), pe_sdf_);
    out.resize(sdf_net_.out_dim);
    sdf_net_.forward(params_.data(), enc, out, scratch);
    check_finite(out[0], "sdf");
    return out[0];
}

void FieldStack::sdf_full(const Vec3& x, double* s, Vec3* grad, std::vector<double>* f) const {
    thread_local std::vector<double> scratch, out, out_jac, enc_jac;
    double xin[3] = {x.x, x.y, x.z};
    std::vector<double> enc = encode(std::span<const double>(xin, 3), pe_sdf_);
    const int ed = int(enc.size());
    out.resize(sdf_net_.out_dim);
    if (!grad) {
        sdf_net_.forward(params_.data(), enc, out, scratch);
    } else {
        enc_jac.resize(3 * ed);
        for (int k = 0; k < 3; ++k)
            encode_jac_column(std::span<const double>(xin, 3), pe_sdf_, k,
                              std::span<double>(enc_jac.data() + k * ed, ed));
        out_jac.resize(3 * sdf_net_.out_dim);
        sdf_net_.forward_jac(params_.data(), enc, enc_jac.data(), out, out_jac.data(), scratch);
        *grad = {out_jac[0], out_jac[sdf_net_.out_dim], out_jac[2 * sdf_net_.out_dim]};
    }
    check_finite(out[0] + (grad ? grad->x + grad->y + grad->z : 0.0), "sdf");
    if (s) *s = out[0];
    if (f) f->assign(out.begin() + 1, out.end());
}

namespace {
void build_material_input(std::vector<double>& in, std::span<const double> enc_x, const Vec3& n,
                          std::span<const double> enc_dir, std::span<const double> feature,
                          int feature_dim, bool feature_off) {
    in.clear();
    in.insert(in.end(), enc_x.begin(), enc_x.end());
    in.push_back(n.x);
    in.push_back(n.y);
    in.push_back(n.z);
    in.insert(in.end(), enc_dir.begin(), enc_dir.end());
    if (feature_off || int(feature.size()) != feature_dim)
        in.insert(in.end(), size_t(feature_dim), 0.0);
    else
        in.insert(in.end(), feature.begin(), feature.end());
}
}  // namespace

MaterialSample FieldStack::eval(const Vec3& x, const Vec3& n,
                                std::span<const double> feature) const {
    const double nn = n.norm();
    if (std::abs(nn - 1.0) > 1e-4)
        throw NumericalFault("eval_materials: normal is not unit length");
    thread_local std::vector<double> scratch, in, out;
    double xin[3] = {x.x, x.y, x.z};
    double nin[3] = {n.x, n.y, n.z};
    std::vector<double> enc10 = encode(std::span<const double>(xin, 3), pe_diff_);
    std::vector<double> enc_dir = encode(std::span<const double>(nin, 3), pe_dir_);
    std::vector<double> enc6 = encode(std::span<const double>(xin, 3), pe_spec_);

    MaterialSample m;
    build_material_input(in, enc10, n, enc_dir, feature, cfg_.feature_dim, cfg_.feature_off);
    out.resize(3);
    diff_net_.forward(params_.data(), in, out, scratch);
    m.beta = {out[0], out[1], out[2]};

    build_material_input(in, enc6, n, {}, feature, cfg_.feature_dim, cfg_.feature_off);
    spec_net_.forward(params_.data(), in, out, scratch);
    m.kappa = {out[0], out[1], out[2]};

    out.resize(1);
    rough_net_.forward(params_.data(), in, out, scratch);
    m.alpha_r = out[0];
    check_finite(m.beta.x + m.kappa.x + m.alpha_r, "materials");
    return m;
}

Vec3 FieldStack::radiance(const Vec3& x, const Vec3& n, const Vec3& dir,
                          std::span<const double> feature) const {
    thread_local std::vector<double> scratch, in, out;
    double xin[3] = {x.x, x.y, x.z};
    double din[3] = {dir.x, dir.y, dir.z};
    std::vector<double> enc10 = encode(std::span<const double>(xin, 3), pe_diff_);
    std::vector<double> enc_dir = encode(std::span<const double>(din, 3), pe_dir_);
    build_material_input(in, enc10, n, enc_dir, feature, cfg_.feature_dim, cfg_.feature_off);
    out.resize(3);
    diff_net_.forward(params_.data(), in, out, scratch);
    check_finite(out[0] + out[1] + out[2], "diffuse");
    return {out[0], out[1], out[2]};
}

NodeId FieldStack::record_sdf_value(GradientTape& t, NodeId x3) const {
    NodeId enc = record_encode(t, x3, pe_sdf_);
    NodeId out = sdf_net_.record(t, enc);
    return t.slice(out, 0, 1);
}

FieldStack::SdfNodes FieldStack::record_sdf_full(GradientTape& t, NodeId x3) const {
    EncodedWithJac e = record_encode_jac(t, x3, pe_sdf_);
    MlpSpec::AugNodes out = sdf_net_.record_jac(t, e.enc, e.jac);
    SdfNodes r;
    r.s = t.slice(out.out, 0, 1);
    r.feature = cfg_.feature_dim > 0 ? t.slice(out.out, 1, cfg_.feature_dim) : kNoNode;
    PackEntry entries[3] = {{out.jac[0], 0, 0, 1.0}, {out.jac[1], 0, 1, 1.0},
                            {out.jac[2], 0, 2, 1.0}};
    r.grad = t.pack_scaled(entries, 3);
    return r;
}

FieldStack::MaterialNodes FieldStack::record_materials(GradientTape& t, NodeId x3, NodeId n3,
                                                       NodeId dir3, NodeId feature) const {
    NodeId enc10 = record_encode(t, x3, pe_diff_);
    NodeId enc_dir = record_encode(t, dir3, pe_dir_);
    NodeId enc6 = record_encode(t, x3, pe_spec_);
    NodeId feat = feature;
    if (cfg_.feature_off || feature == kNoNode) {
        std::vector<double> zeros(cfg_.feature_dim, 0.0);
        feat = t.constant(zeros);
    }
    MaterialNodes m;
    {
        NodeId parts[4] = {enc10, n3, enc_dir, feat};
        m.beta = diff_net_.record(t, t.concat(parts));
    }
    {
        NodeId parts[3] = {enc6, n3, feat};
        NodeId in = t.concat(parts);
        m.kappa = spec_net_.record(t, in);
        m.alpha = rough_net_.record(t, in);
    }
    return m;
}

NodeId FieldStack::record_radiance(GradientTape& t, NodeId x3, NodeId n3, NodeId dir3,
                                   NodeId feature) const {
    NodeId enc10 = record_encode(t, x3, pe_diff_);
    NodeId enc_dir = record_encode(t, dir3, pe_dir_);
    NodeId feat = feature;
    if (cfg_.feature_off || feature == kNoNode) {
        std::vector<double> zeros(cfg_.feature_dim, 0.0);
        feat = t.constant(zeros);
    }
    NodeId parts[4] = {enc10, n3, enc_dir, feat};
    return diff_net_.record(t, t.concat(parts));
}

// ---------------------------------------------------------------------------
// Checkpoints. Layout (little-endian):
//   8 bytes   magic "IVRCKPT1"
//   u32       version (1)
//   u64       header length
//   bytes     JSON header: net names + per-layer [in,out] shapes, extras
//   f64[N]    parameters in declaration order (sdf, diffuse, specular,
//             roughness, light)
//   f64[M]    extra scalars in header order

namespace {
constexpr char kMagic[8] = {'I', 'V', 'R', 'C', 'K', 'P', 'T', '1'};

nlohmann::json net_shapes(const MlpSpec& s) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : s.layers) layers.push_back({l.in, l.out});
    return {{"name", s.name}, {"layers", layers}};
}
}  // namespace

void FieldStack::save_checkpoint(const std::string& path,
                                 const std::map<std::string, double>& extras) const {
    nlohmann::json header;
    header["nets"] = {net_shapes(sdf_net_), net_shapes(diff_net_), net_shapes(spec_net_),
                      net_shapes(rough_net_)};
    header["light"] = true;
    nlohmann::json extra_names = nlohmann::json::array();
    for (const auto& [k, v] : extras) extra_names.push_back(k);
    header["extras"] = extra_names;
    const std::string hs = header.dump();

    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open for write: " + tmp);
        f.write(kMagic, 8);
        uint32_t version = 1;
        f.write(reinterpret_cast<const char*>(&version), 4);
        uint64_t hlen = hs.size();
        f.write(reinterpret_cast<const char*>(&hlen), 8);
        f.write(hs.data(), std::streamsize(hs.size()));
        f.write(reinterpret_cast<const char*>(params_.data()),
                std::streamsize(sizeof(double)) * params_.size());
        for (const auto& [k, v] : extras)
            f.write(reinterpret_cast<const char*>(&v), sizeof(double));
        if (!f) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed: " + path);
}

std::map<std::string, double> FieldStack::load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    uint32_t version;
    f.read(reinterpret_cast<char*>(&version), 4);
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");
    uint64_t hlen;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    f.read(hs.data(), std::streamsize(hlen));
    nlohmann::json header = nlohmann::json::parse(hs);

    nlohmann::json expect = {net_shapes(sdf_net_), net_shapes(diff_net_), net_shapes(spec_net_),
                             net_shapes(rough_net_)};
    if (header.at("nets") != expect)
        throw std::runtime_error("checkpoint layout does not match field configuration");
    f.read(reinterpret_cast<char*>(params_.data()),
           std::streamsize(sizeof(double)) * params_.size());
    std::map<std::string, double> extras;
    for (const auto& name : header.at("extras")) {
        double v;
        f.read(reinterpret_cast<char*>(&v), sizeof(double));
        extras[name.get<std::string>()] = v;
    }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    return extras;
}

}  // namespace invrend

#include "dtml/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace dtml::data {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Ellipsoid {
    double cx, cy, cz;        // centre, voxel coords
    double ax, ay, az;        // semi-axes, voxels
    double rot[3][3];
    double amp, ft, fp, ph1, ph2;  // surface perturbation
};

void random_rotation(Rng& rng, double r[3][3]) {
    // uniform rotation from a random unit quaternion
    double q[4];
    double norm = 0.0;
    for (auto& x : q) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : q) x /= norm;
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    r[0][0] = 1 - 2 * (y * y + z * z);
    r[0][1] = 2 * (x * y - w * z);
    r[0][2] = 2 * (x * z + w * y);
    r[1][0] = 2 * (x * y + w * z);
    r[1][1] = 1 - 2 * (x * x + z * z);
    r[1][2] = 2 * (y * z - w * x);
    r[2][0] = 2 * (x * z - w * y);
    r[2][1] = 2 * (y * z + w * x);
    r[2][2] = 1 - 2 * (x * x + y * y);
}

// Signed implicit value of the perturbed ellipsoid: positive inside,
// magnitude roughly in normalized radius units.
double ellipsoid_field(const Ellipsoid& e, double px, double py, double pz) {
    const double dx = px - e.cx, dy = py - e.cy, dz = pz - e.cz;
    const double ux = e.rot[0][0] * dx + e.rot[0][1] * dy + e.rot[0][2] * dz;
    const double uy = e.rot[1][0] * dx + e.rot[1][1] * dy + e.rot[1][2] * dz;
    const double uz = e.rot[2][0] * dx + e.rot[2][1] * dy + e.rot[2][2] * dz;
    const double wx = ux / e.ax, wy = uy / e.ay, wz = uz / e.az;
    const double q = std::sqrt(wx * wx + wy * wy + wz * wz);
    const double theta = std::atan2(wy, wx);
    const double psi = std::acos(q > 1e-12 ? wz / q : 0.0);
    const double radius = 1.0 + e.amp * std::sin(e.ft * theta + e.ph1) * std::cos(e.fp * psi + e.ph2);
    return radius - q;
}

Sample make_sample(std::array<int, 3> shape_hwd, Spacing spacing, Rng& rng) {
    const int h = shape_hwd[0], w = shape_hwd[1], d = shape_hwd[2];
    const double min_dim = static_cast<double>(std::min({h, w, d}));
    const std::size_t n = static_cast<std::size_t>(h) * w * d;

    std::vector<double> field(n);
    Mask mask(h, w, d, 0, spacing);

    for (int attempt = 0; attempt < 100; ++attempt) {
        const int n_ell = 1 + static_cast<int>(rng.below(3));
        std::vector<Ellipsoid> ells(n_ell);
        for (auto& e : ells) {
            e.cx = rng.uniform(0.32, 0.68) * w;
            e.cy = rng.uniform(0.32, 0.68) * h;
            e.cz = rng.uniform(0.32, 0.68) * d;
            e.ax = rng.uniform(0.14, 0.30) * min_dim;
            e.ay = rng.uniform(0.14, 0.30) * min_dim;
            e.az = rng.uniform(0.14, 0.30) * min_dim;
            random_rotation(rng, e.rot);
            e.amp = rng.uniform(0.0, 0.18);
            e.ft = 2.0 + static_cast<double>(rng.below(3));
            e.fp = 2.0 + static_cast<double>(rng.below(3));
            e.ph1 = rng.uniform(0.0, kTwoPi);
            e.ph2 = rng.uniform(0.0, kTwoPi);
        }
        std::size_t fg = 0;
        for (int z = 0; z < d; ++z)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double best = -1e30;
                    for (const auto& e : ells)
                        best = std::max(best, ellipsoid_field(e, x, y, z));
                    const std::size_t i = mask.idx(x, y, z);
                    field[i] = best;
                    mask.v[i] = best >= 0.0 ? 1 : 0;
                    fg += mask.v[i];
                }
        const double frac = static_cast<double>(fg) / static_cast<double>(n);
        if (frac >= 0.02 && frac <= 0.4) break;
        if (attempt == 99)
            throw Error("generate_synthetic: could not reach target foreground fraction");
    }

    // smooth low-frequency texture waves
    struct Wave {
        double kx, ky, kz, amp, phase;
    };
    std::vector<Wave> waves(3);
    for (auto& wv : waves) {
        double dir[3] = {rng.normal(), rng.normal(), rng.normal()};
        const double nrm = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]) + 1e-12;
        const double wavelength = rng.uniform(0.25, 0.8) * min_dim;
        const double kk = kTwoPi / wavelength;
        wv.kx = kk * dir[0] / nrm;
        wv.ky = kk * dir[1] / nrm;
        wv.kz = kk * dir[2] / nrm;
        wv.amp = rng.uniform(0.03, 0.09);
        wv.phase = rng.uniform(0.0, kTwoPi);
    }

    Volume img(h, w, d, 0.0f, spacing);
    for (int z = 0; z < d; ++z)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t i = img.idx(x, y, z);
                const double soft = 1.0 / (1.0 + std::exp(-6.0 * field[i]));
                double val = 0.35 + 0.30 * soft;
                for (const auto& wv : waves)
                    val += wv.amp * std::cos(wv.kx * x + wv.ky * y + wv.kz * z + wv.phase);
                val += 0.10 * rng.normal();
                img.v[i] = static_cast<float>(val);
            }

    return {std::move(img), std::move(mask)};
}

}  // namespace

std::vector<Sample> generate_synthetic(int count, std::array<int, 3> shape_hwd, std::uint64_t seed,
                                       Spacing spacing) {
    if (count < 0)
        throw InvalidShape("generate_synthetic: negative count");
    for (int s : shape_hwd)
        if (s < 32)
            throw InvalidShape("generate_synthetic: every extent must be >= 32");
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        Rng rng(substream(seed, 1000 + static_cast<std::uint64_t>(i)));
        out.push_back(make_sample(shape_hwd, spacing, rng));
    }
    return out;
}

SplitIndices split_indices(int n, double labeled_fraction, std::uint64_t seed, int test_count) {
    if (test_count < 0)
        throw InvalidConfig("split_indices: negative test count");
    if (test_count >= n)
        throw EmptyPartition("split_indices: test partition would consume every sample");

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    Rng rng(substream(seed, 2));
    for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1))]);

    const int n_train = n - test_count;
    const int n_lab = static_cast<int>(std::llround(labeled_fraction * n_train));
    if (!(labeled_fraction > 0.0 && labeled_fraction < 1.0) || n_lab <= 0 || n_lab >= n_train)
        throw EmptyPartition("split_indices: labeled or unlabeled partition would be empty");

    SplitIndices s;
    s.test.assign(order.begin(), order.begin() + test_count);
    s.labeled.assign(order.begin() + test_count, order.begin() + test_count + n_lab);
    s.unlabeled.assign(order.begin() + test_count + n_lab, order.end());
    return s;
}

DatasetSplit split_dataset(const std::vector<Sample>& samples, double labeled_fraction,
                           std::uint64_t seed, int test_count) {
    const SplitIndices idx =
        split_indices(static_cast<int>(samples.size()), labeled_fraction, seed, test_count);
    DatasetSplit s;
    for (int i : idx.test) s.test.push_back(samples[i]);
    for (int i : idx.labeled) {
        const Sample& sm = samples[i];
        const std::size_t fg = count_foreground(sm.mask);
        if (fg == 0 || fg == sm.mask.size())
            throw DegenerateMask("split_dataset: labeled mask is degenerate");
        s.labeled.push_back(sm);
    }
    for (int i : idx.unlabeled) {
        s.unlabeled.push_back(samples[i].image);
        s.unlabeled_masks_diagnostic.push_back(samples[i].mask);
    }
    return s;
}

namespace {

template <typename T>
Grid3<T> crop_grid(const Grid3<T>& g, int ox, int oy, int oz, int ch, int cw, int cd) {
    Grid3<T> out(ch, cw, cd, T{}, g.spacing);
    for (int z = 0; z < cd; ++z)
        for (int y = 0; y < ch; ++y) {
            const T* src = g.v.data() + g.idx(ox, oy + y, oz + z);
            std::copy(src, src + cw, out.v.data() + out.idx(0, y, z));
        }
    return out;
}

}  // namespace

std::pair<Volume, std::optional<Mask>> random_crop(const Volume& v, const Mask* m,
                                                   std::array<int, 3> crop_hwd, Rng& rng) {
    const int ch = crop_hwd[0], cw = crop_hwd[1], cd = crop_hwd[2];
    if (ch <= 0 || cw <= 0 || cd <= 0)
        throw CropTooLarge("random_crop: crop extents must be positive");
    if (ch > v.h || cw > v.w || cd > v.d)
        throw CropTooLarge("random_crop: crop exceeds volume extent");
    if (m) require_same_shape(v, *m, "random_crop");

    const int oz = static_cast<int>(rng.below(static_cast<std::uint64_t>(v.d - cd) + 1));
    const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(v.h - ch) + 1));
    const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(v.w - cw) + 1));

    std::optional<Mask> mc;
    if (m) mc = crop_grid(*m, ox, oy, oz, ch, cw, cd);
    return {crop_grid(v, ox, oy, oz, ch, cw, cd), std::move(mc)};
}

namespace {

template <typename T>
Grid3<T> rot90_axial(const Grid3<T>& g) {
    // quarter turn in the (H,W) plane: out[y'][x'] = in[y=x'][x=W-1-y']
    Grid3<T> out(g.w, g.h, g.d, T{}, {g.spacing.sy, g.spacing.sx, g.spacing.sz});
    for (int z = 0; z < g.d; ++z)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x)
                out.at(x, y, z) = g.at(g.w - 1 - y, x, z);
    return out;
}

template <typename T>
Grid3<T> flip_grid(const Grid3<T>& g, bool fx, bool fy, bool fz) {
    Grid3<T> out(g.h, g.w, g.d, T{}, g.spacing);
    for (int z = 0; z < g.d; ++z)
        for (int y = 0; y < g.h; ++y)
            for (int x = 0; x < g.w; ++x)
                out.at(x, y, z) = g.at(fx ? g.w - 1 - x : x, fy ? g.h - 1 - y : y, fz ? g.d - 1 - z : z);
    return out;
}

}  // namespace

template <typename T>
Grid3<T> apply_orientation(const Grid3<T>& g, int rot_quarter_turns, bool flip_x, bool flip_y,
                           bool flip_z) {
    Grid3<T> cur = g;
    for (int r = 0; r < ((rot_quarter_turns % 4) + 4) % 4; ++r) cur = rot90_axial(cur);
    if (flip_x || flip_y || flip_z) cur = flip_grid(cur, flip_x, flip_y, flip_z);
    return cur;
}

template Grid3<float> apply_orientation<float>(const Grid3<float>&, int, bool, bool, bool);
template Grid3<double> apply_orientation<double>(const Grid3<double>&, int, bool, bool, bool);
template Grid3<std::uint8_t> apply_orientation<std::uint8_t>(const Grid3<std::uint8_t>&, int, bool,
                                                             bool, bool);

std::pair<Volume, std::optional<Mask>> augment(const Volume& v, const Mask* m, Rng& rng) {
    const int rot = static_cast<int>(rng.below(4));
    const bool fx = rng.coin(), fy = rng.coin(), fz = rng.coin();
    std::optional<Mask> ma;
    if (m) ma = apply_orientation(*m, rot, fx, fy, fz);
    return {apply_orientation(v, rot, fx, fy, fz), std::move(ma)};
}

void standardize(Volume& v) {
    if (v.v.empty()) return;
    double mean = 0.0;
    for (float x : v.v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (float x : v.v) {
        const double dxv = x - mean;
        var += dxv * dxv;
    }
    var /= static_cast<double>(v.size());
    const double sd = std::sqrt(var);
    const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
    for (auto& x : v.v) x = static_cast<float>((x - mean) * inv);
}

// --- file I/O ---

namespace {

namespace fs = std::filesystem;

void write_sidecar(const std::string& data_path, std::array<int, 3> shape_hwd, Spacing sp,
                   const char* dtype, const std::string& role) {
    nlohmann::ordered_json j;
    j["shape"] = {shape_hwd[0], shape_hwd[1], shape_hwd[2]};
    j["spacing"] = {sp.sx, sp.sy, sp.sz};
    j["dtype"] = dtype;
    j["role"] = role;
    const std::string sp_path = sidecar_path(data_path);
    std::ofstream f(sp_path);
    if (!f) throw IOFailure("cannot write sidecar: " + sp_path);
    f << j.dump(2) << "\n";
    if (!f) throw IOFailure("write failed: " + sp_path);
}

struct SidecarInfo {
    std::array<int, 3> shape_hwd;
    Spacing spacing;
    std::string dtype;
    std::string role;
};

SidecarInfo read_sidecar(const std::string& data_path) {
    const std::string sp_path = sidecar_path(data_path);
    std::ifstream f(sp_path);
    if (!f) throw IOFailure("cannot read sidecar: " + sp_path);
    nlohmann::json j;
    try {
        f >> j;
        SidecarInfo info;
        info.shape_hwd = {j.at("shape").at(0).get<int>(), j.at("shape").at(1).get<int>(),
                          j.at("shape").at(2).get<int>()};
        info.spacing = {j.at("spacing").at(0).get<double>(), j.at("spacing").at(1).get<double>(),
                        j.at("spacing").at(2).get<double>()};
        info.dtype = j.at("dtype").get<std::string>();
        info.role = j.at("role").get<std::string>();
        if (info.shape_hwd[0] <= 0 || info.shape_hwd[1] <= 0 || info.shape_hwd[2] <= 0)
            throw IOFailure("bad shape in sidecar: " + sp_path);
        if (!(info.spacing.sx > 0 && info.spacing.sy > 0 && info.spacing.sz > 0))
            throw IOFailure("bad spacing in sidecar: " + sp_path);
        return info;
    } catch (const nlohmann::json::exception& e) {
        throw IOFailure("bad sidecar " + sp_path + ": " + e.what());
    }
}

void write_f32_le(std::ofstream& f, float x) {
    std::uint32_t u;
    std::memcpy(&u, &x, 4);
    const unsigned char b[4] = {static_cast<unsigned char>(u & 0xff),
                                static_cast<unsigned char>((u >> 8) & 0xff),
                                static_cast<unsigned char>((u >> 16) & 0xff),
                                static_cast<unsigned char>((u >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

float read_f32_le(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    const std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                            (static_cast<std::uint32_t>(b[2]) << 16) |
                            (static_cast<std::uint32_t>(b[3]) << 24);
    float x;
    std::memcpy(&x, &u, 4);
    return x;
}

}  // namespace

std::string sidecar_path(const std::string& data_path) {
    fs::path p(data_path);
    p.replace_extension(".json");
    return p.string();
}

void write_volume(const std::string& path, const Volume& v, const std::string& role) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IOFailure("cannot write volume: " + path);
    for (float x : v.v) write_f32_le(f, x);
    if (!f) throw IOFailure("write failed: " + path);
    write_sidecar(path, v.shape_hwd(), v.spacing, "f32", role);
}

void write_mask(const std::string& path, const Mask& m) {
    require_mask_values(m, "write_mask");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IOFailure("cannot write mask: " + path);
    f.write(reinterpret_cast<const char*>(m.v.data()), static_cast<std::streamsize>(m.v.size()));
    if (!f) throw IOFailure("write failed: " + path);
    write_sidecar(path, m.shape_hwd(), m.spacing, "u8", "mask");
}

Volume read_volume(const std::string& path) {
    const SidecarInfo info = read_sidecar(path);
    Volume v(info.shape_hwd[0], info.shape_hwd[1], info.shape_hwd[2], 0.0f, info.spacing);
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IOFailure("cannot read volume: " + path);
    if (info.dtype == "f32") {
        for (auto& x : v.v) x = read_f32_le(f);
    } else if (info.dtype == "u8") {
        std::vector<std::uint8_t> buf(v.size());
        f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        for (std::size_t i = 0; i < buf.size(); ++i) v.v[i] = static_cast<float>(buf[i]);
    } else {
        throw IOFailure("unknown dtype '" + info.dtype + "' for " + path);
    }
    if (!f) throw IOFailure("truncated volume file: " + path);
    return v;
}

Mask read_mask(const std::string& path) {
    const SidecarInfo info = read_sidecar(path);
    Mask m(info.shape_hwd[0], info.shape_hwd[1], info.shape_hwd[2], 0, info.spacing);
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IOFailure("cannot read mask: " + path);
    if (info.dtype == "u8") {
        f.read(reinterpret_cast<char*>(m.v.data()), static_cast<std::streamsize>(m.v.size()));
    } else if (info.dtype == "f32") {
        for (auto& x : m.v) {
            const float val = read_f32_le(f);
            if (val != 0.0f && val != 1.0f)
                throw InvalidShape("read_mask: non-binary value in " + path);
            x = static_cast<std::uint8_t>(val);
        }
    } else {
        throw IOFailure("unknown dtype '" + info.dtype + "' for " + path);
    }
    if (!f) throw IOFailure("truncated mask file: " + path);
    require_mask_values(m, "read_mask");
    return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
    nlohmann::ordered_json j;
    j["format"] = "dtml-manifest";
    j["version"] = 1;
    auto dump = [](const std::vector<ManifestEntry>& es) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& e : es) {
            nlohmann::ordered_json o;
            o["image"] = e.image;
            o["mask"] = e.mask;
            arr.push_back(o);
        }
        return arr;
    };
    j["labeled"] = dump(m.labeled);
    j["unlabeled"] = dump(m.unlabeled);
    j["test"] = dump(m.test);
    std::ofstream f(path);
    if (!f) throw IOFailure("cannot write manifest: " + path);
    f << j.dump(2) << "\n";
    if (!f) throw IOFailure("write failed: " + path);
}

Manifest read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IOFailure("cannot read manifest: " + path);
    nlohmann::json j;
    try {
        f >> j;
        auto parse = [](const nlohmann::json& arr) {
            std::vector<ManifestEntry> es;
            for (const auto& o : arr)
                es.push_back({o.at("image").get<std::string>(),
                              o.value("mask", std::string{})});
            return es;
        };
        Manifest m;
        m.labeled = parse(j.at("labeled"));
        m.unlabeled = parse(j.at("unlabeled"));
        m.test = parse(j.at("test"));
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw IOFailure("bad manifest " + path + ": " + e.what());
    }
}

DatasetSplit load_split(const std::string& manifest_path, bool expose_unlabeled_masks) {
    const Manifest m = read_manifest(manifest_path);
    const fs::path base = fs::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) {
        fs::path fp(p);
        return fp.is_absolute() ? fp.string() : (base / fp).string();
    };

    DatasetSplit s;
    for (const auto& e : m.labeled) {
        if (e.mask.empty())
            throw InvalidConfig("manifest: labeled entry without mask");
        Sample sm{read_volume(resolve(e.image)), read_mask(resolve(e.mask))};
        const std::size_t fg = count_foreground(sm.mask);
        if (fg == 0 || fg == sm.mask.size())
            throw DegenerateMask("load_split: labeled mask is degenerate: " + e.mask);
        s.labeled.push_back(std::move(sm));
    }
    for (const auto& e : m.unlabeled) {
        s.unlabeled.push_back(read_volume(resolve(e.image)));
        if (expose_unlabeled_masks && !e.mask.empty())
            s.unlabeled_masks_diagnostic.push_back(read_mask(resolve(e.mask)));
    }
    for (const auto& e : m.test) {
        if (e.mask.empty())
            throw InvalidConfig("manifest: test entry without mask");
        s.test.push_back({read_volume(resolve(e.image)), read_mask(resolve(e.mask))});
    }
    return s;
}

}  // namespace dtml::data

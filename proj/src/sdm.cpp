#include "dtml/sdm.hpp"

#include <algorithm>
#include <cmath>

namespace dtml::sdm {

namespace {

// Large finite stand-in for +inf. Squared distances stay far below this,
// and keeping it finite lets the envelope arithmetic avoid inf-inf.
constexpr double kFar = 1e15;

// 1D squared distance transform along a line with uniform physical spacing
// `s` (lower envelope of parabolas).
void edt_line(const double* f, double* out, int n, double s, int* v, double* z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kFar;
    z[1] = kFar;
    for (int q = 1; q < n; ++q) {
        const double uq = q * s;
        const double fq = f[q] + uq * uq;
        double sp;
        for (;;) {
            const double uv = v[k] * s;
            sp = (fq - (f[v[k]] + uv * uv)) / (2.0 * (uq - uv));
            if (k > 0 && sp <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = sp;
        z[k + 1] = kFar;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        const double uq = q * s;
        while (z[k + 1] < uq) ++k;
        const double duv = uq - v[k] * s;
        out[q] = duv * duv + f[v[k]];
    }
}

}  // namespace

std::vector<std::size_t> extract_boundary(const Mask& mask) {
    require_mask_values(mask, "extract_boundary");
    const std::size_t fg = count_foreground(mask);
    if (fg == 0 || fg == mask.size())
        throw DegenerateMask("extract_boundary: mask has no boundary (all-foreground or all-background)");

    std::vector<std::size_t> out;
    for (int z = 0; z < mask.d; ++z)
        for (int y = 0; y < mask.h; ++y)
            for (int x = 0; x < mask.w; ++x) {
                if (!mask.at(x, y, z)) continue;
                const bool bg_neighbor =
                    (x > 0 && !mask.at(x - 1, y, z)) || (x + 1 < mask.w && !mask.at(x + 1, y, z)) ||
                    (y > 0 && !mask.at(x, y - 1, z)) || (y + 1 < mask.h && !mask.at(x, y + 1, z)) ||
                    (z > 0 && !mask.at(x, y, z - 1)) || (z + 1 < mask.d && !mask.at(x, y, z + 1));
                if (bg_neighbor) out.push_back(mask.idx(x, y, z));
            }
    return out;
}

Mask boundary_mask(const Mask& mask) {
    Mask b(mask.h, mask.w, mask.d, 0, mask.spacing);
    for (std::size_t i : extract_boundary(mask)) b.v[i] = 1;
    return b;
}

Grid3<double> distance_from_seeds(const Mask& seeds) {
    const int h = seeds.h, w = seeds.w, d = seeds.d;
    Grid3<double> g(h, w, d, 0.0, seeds.spacing);
    for (std::size_t i = 0; i < seeds.size(); ++i)
        g.v[i] = seeds.v[i] ? 0.0 : kFar;

    const int nmax = std::max({h, w, d});
    std::vector<double> line(nmax), out(nmax), z(nmax + 1);
    std::vector<int> v(nmax);

    // x pass: rows are contiguous
    for (int zz = 0; zz < d; ++zz)
        for (int yy = 0; yy < h; ++yy) {
            double* row = g.v.data() + g.idx(0, yy, zz);
            edt_line(row, out.data(), w, seeds.spacing.sx, v.data(), z.data());
            std::copy(out.begin(), out.begin() + w, row);
        }
    // y pass
    for (int zz = 0; zz < d; ++zz)
        for (int xx = 0; xx < w; ++xx) {
            for (int yy = 0; yy < h; ++yy) line[yy] = g.at(xx, yy, zz);
            edt_line(line.data(), out.data(), h, seeds.spacing.sy, v.data(), z.data());
            for (int yy = 0; yy < h; ++yy) g.at(xx, yy, zz) = out[yy];
        }
    // z pass
    for (int yy = 0; yy < h; ++yy)
        for (int xx = 0; xx < w; ++xx) {
            for (int zz = 0; zz < d; ++zz) line[zz] = g.at(xx, yy, zz);
            edt_line(line.data(), out.data(), d, seeds.spacing.sz, v.data(), z.data());
            for (int zz = 0; zz < d; ++zz) g.at(xx, yy, zz) = out[zz];
        }

    for (auto& x : g.v) x = std::sqrt(x);
    return g;
}

SignedDistanceMap compute_sdm(const Mask& mask) {
    Mask boundary(mask.h, mask.w, mask.d, 0, mask.spacing);
    for (std::size_t i : extract_boundary(mask)) boundary.v[i] = 1;

    SignedDistanceMap s;
    s.values = distance_from_seeds(boundary);
    s.normalized = false;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask.v[i] && !boundary.v[i]) s.values.v[i] = -s.values.v[i];
    return s;
}

SignedDistanceMap normalize_sdm(const SignedDistanceMap& in) {
    if (in.normalized)
        throw NormalizationMismatch("normalize_sdm: input is already normalized");
    double mx = 0.0;
    for (double x : in.values.v) mx = std::max(mx, std::abs(x));
    if (mx == 0.0)
        throw DegenerateMap("normalize_sdm: map is identically zero");
    SignedDistanceMap out;
    out.values = in.values;
    out.normalized = true;
    const double inv = 1.0 / mx;
    for (auto& x : out.values.v) x *= inv;
    return out;
}

Grid3<double> sdm_to_soft_mask(const SignedDistanceMap& sdm, const TransformConfig& cfg) {
    if (!(cfg.k > 0.0) || !std::isfinite(cfg.k))
        throw InvalidConfig("sdm_to_soft_mask: k must be finite and positive");
    Grid3<double> out(sdm.values.h, sdm.values.w, sdm.values.d, 0.0, sdm.values.spacing);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.v[i] = soft_mask_value(sdm.values.v[i], cfg.k);
    return out;
}

}  // namespace dtml::sdm

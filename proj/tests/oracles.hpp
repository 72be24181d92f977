// Brute-force reference implementations used as independent oracles.
// These deliberately share no code with the library paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dtml/grid.hpp"
#include "dtml/rng.hpp"

namespace oracle {

using dtml::Grid3;
using dtml::Mask;

inline std::vector<std::array<int, 3>> boundary_voxels(const Mask& m) {
    std::vector<std::array<int, 3>> out;
    auto bg = [&](int x, int y, int z) {
        if (x < 0 || y < 0 || z < 0 || x >= m.w || y >= m.h || z >= m.d) return false;
        return m.at(x, y, z) == 0;
    };
    for (int z = 0; z < m.d; ++z)
        for (int y = 0; y < m.h; ++y)
            for (int x = 0; x < m.w; ++x) {
                if (!m.at(x, y, z)) continue;
                if (bg(x - 1, y, z) || bg(x + 1, y, z) || bg(x, y - 1, z) || bg(x, y + 1, z) ||
                    bg(x, y, z - 1) || bg(x, y, z + 1))
                    out.push_back({x, y, z});
            }
    return out;
}

inline double min_dist_to(const std::vector<std::array<int, 3>>& pts, int x, int y, int z,
                          dtml::Spacing sp) {
    double best = 1e300;
    for (const auto& p : pts) {
        const double dx = (p[0] - x) * sp.sx;
        const double dy = (p[1] - y) * sp.sy;
        const double dz = (p[2] - z) * sp.sz;
        best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    return std::sqrt(best);
}

// All-pairs signed distance to the nearest boundary voxel.
inline Grid3<double> brute_sdm(const Mask& m) {
    const auto b = boundary_voxels(m);
    Grid3<double> out(m.h, m.w, m.d, 0.0, m.spacing);
    Mask bm(m.h, m.w, m.d, 0, m.spacing);
    for (const auto& p : b) bm.at(p[0], p[1], p[2]) = 1;
    for (int z = 0; z < m.d; ++z)
        for (int y = 0; y < m.h; ++y)
            for (int x = 0; x < m.w; ++x) {
                const double d = min_dist_to(b, x, y, z, m.spacing);
                const bool inside = m.at(x, y, z) && !bm.at(x, y, z);
                out.at(x, y, z) = inside ? -d : d;
            }
    return out;
}

inline double brute_dice(const Mask& a, const Mask& b) {
    std::size_t na = 0, nb = 0, ni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.v[i]) ++na;
        if (b.v[i]) ++nb;
        if (a.v[i] && b.v[i]) ++ni;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
}

inline double brute_jaccard(const Mask& a, const Mask& b) {
    std::size_t nu = 0, ni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.v[i] || b.v[i]) ++nu;
        if (a.v[i] && b.v[i]) ++ni;
    }
    if (nu == 0) return 1.0;
    return static_cast<double>(ni) / static_cast<double>(nu);
}

inline std::pair<std::vector<double>, std::vector<double>> brute_surface_distances(const Mask& pred,
                                                                                   const Mask& gt) {
    const auto bp = boundary_voxels(pred);
    const auto bg = boundary_voxels(gt);
    std::vector<double> pg, gp;
    for (const auto& p : bp) pg.push_back(min_dist_to(bg, p[0], p[1], p[2], pred.spacing));
    for (const auto& g : bg) gp.push_back(min_dist_to(bp, g[0], g[1], g[2], pred.spacing));
    return {pg, gp};
}

inline double brute_percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double r = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(r);
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (r - lo) * (v[hi] - v[lo]);
}

inline double brute_asd(const Mask& pred, const Mask& gt) {
    auto [pg, gp] = brute_surface_distances(pred, gt);
    double s = 0.0;
    for (double x : pg) s += x;
    for (double x : gp) s += x;
    return s / static_cast<double>(pg.size() + gp.size());
}

inline double brute_hd95(const Mask& pred, const Mask& gt) {
    auto [pg, gp] = brute_surface_distances(pred, gt);
    pg.insert(pg.end(), gp.begin(), gp.end());
    return brute_percentile(pg, 0.95);
}

// Random non-degenerate mask: a few solid balls on a noisy background, so
// boundaries are neither trivial nor space-filling.
inline Mask random_mask(dtml::Rng& rng, int h, int w, int d, dtml::Spacing sp = {}) {
    for (;;) {
        Mask m(h, w, d, 0, sp);
        const int balls = 1 + static_cast<int>(rng.below(3));
        for (int b = 0; b < balls; ++b) {
            const double cx = rng.uniform(0.0, w - 1.0);
            const double cy = rng.uniform(0.0, h - 1.0);
            const double cz = rng.uniform(0.0, d - 1.0);
            const double r = rng.uniform(1.0, 0.45 * std::min({h, w, d}));
            for (int z = 0; z < d; ++z)
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x)
                        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz) <= r * r)
                            m.at(x, y, z) = 1;
        }
        // sprinkle noise voxels
        const int flips = static_cast<int>(rng.below(static_cast<std::uint64_t>(m.size() / 16) + 1));
        for (int i = 0; i < flips; ++i) {
            const auto j = rng.below(m.size());
            m.v[j] ^= 1;
        }
        const std::size_t fg = dtml::count_foreground(m);
        if (fg > 0 && fg < m.size()) return m;
    }
}

}  // namespace oracle

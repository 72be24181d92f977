#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <vector>

#include "dtml/errors.hpp"

namespace dtml {

// Physical voxel spacing in millimetres along x (width), y (height), z (depth).
struct Spacing {
    double sx = 1.0;
    double sy = 1.0;
    double sz = 1.0;

    bool operator==(const Spacing&) const = default;
};

// Dense 3D grid with shape (H, W, D). Storage is x-fastest:
// index = x + W * (y + H * z), so a (y,z) row of W values is contiguous.
template <typename T>
struct Grid3 {
    int h = 0, w = 0, d = 0;
    Spacing spacing;
    std::vector<T> v;

    Grid3() = default;
    Grid3(int h_, int w_, int d_, T fill = T{}, Spacing sp = {})
        : h(h_), w(w_), d(d_), spacing(sp),
          v(static_cast<std::size_t>(h_) * w_ * d_, fill) {}

    std::size_t size() const { return v.size(); }

    std::size_t idx(int x, int y, int z) const {
        return static_cast<std::size_t>(x) + static_cast<std::size_t>(w) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(h) * z);
    }

    T& at(int x, int y, int z) { return v[idx(x, y, z)]; }
    const T& at(int x, int y, int z) const { return v[idx(x, y, z)]; }

    bool same_shape(const Grid3& o) const { return h == o.h && w == o.w && d == o.d; }

    std::array<int, 3> shape_hwd() const { return {h, w, d}; }
};

using Mask = Grid3<std::uint8_t>;   // values restricted to {0, 1}
using Volume = Grid3<float>;        // scalar intensities

// Per-voxel signed Euclidean distance to the object boundary:
// negative inside, zero on the boundary, positive outside.
// `normalized` marks maps rescaled into [-1, 1].
struct SignedDistanceMap {
    Grid3<double> values;
    bool normalized = false;
};

template <typename A, typename B>
void require_same_shape(const Grid3<A>& a, const Grid3<B>& b, const char* what) {
    if (a.h != b.h || a.w != b.w || a.d != b.d)
        throw ShapeMismatch(std::string(what) + ": grid shapes differ");
}

inline void require_mask_values(const Mask& m, const char* what) {
    for (auto x : m.v)
        if (x > 1) throw InvalidShape(std::string(what) + ": mask values must be 0 or 1");
}

inline std::size_t count_foreground(const Mask& m) {
    std::size_t n = 0;
    for (auto x : m.v) n += x;
    return n;
}

}  // namespace dtml

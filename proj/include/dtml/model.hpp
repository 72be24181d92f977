#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dtml/grid.hpp"

namespace dtml::model {

// Encoder-decoder with `levels` resolution scales (levels-1 stride-2
// transitions), skip connections by channel concatenation, and a
// single-channel 1x1x1 output head. Channel width doubles per level.
struct ArchDescriptor {
    int levels = 3;
    int base_width = 8;
    int in_channels = 1;
    int conv_kernel = 3;

    bool operator==(const ArchDescriptor&) const = default;
};

void validate_descriptor(const ArchDescriptor& a);  // throws InvalidDescriptor

// Input extents must be divisible by 2^levels so every transition stays
// integral with margin at the coarsest scale.
void validate_input_shape(const ArchDescriptor& a, int dz, int dy, int dx);

// Dense 4D tensor [channel][z][y][x], x contiguous. The spatial layout of
// channel 0 matches Grid3 storage exactly.
template <typename T>
struct Tensor {
    int c = 0, dz = 0, dy = 0, dx = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int c_, int dz_, int dy_, int dx_)
        : c(c_), dz(dz_), dy(dy_), dx(dx_),
          v(static_cast<std::size_t>(c_) * dz_ * dy_ * dx_, T{}) {}

    std::size_t spatial() const { return static_cast<std::size_t>(dz) * dy * dx; }
    std::size_t size() const { return v.size(); }
    T* chan(int ci) { return v.data() + ci * spatial(); }
    const T* chan(int ci) const { return v.data() + ci * spatial(); }
    bool same_shape(const Tensor& o) const { return c == o.c && dz == o.dz && dy == o.dy && dx == o.dx; }
};

template <typename T>
Tensor<T> tensor_from_grid(const Grid3<T>& g) {
    Tensor<T> t(1, g.d, g.h, g.w);
    t.v = g.v;
    return t;
}

template <typename T>
Grid3<T> grid_from_tensor(const Tensor<T>& t, Spacing sp = {}) {
    Grid3<T> g(t.dy, t.dx, t.dz, T{}, sp);
    g.v = t.v;
    return g;
}

template <typename T>
struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<T> data;

    std::size_t size() const { return data.size(); }
};

template <typename T>
struct NetworkParams {
    ArchDescriptor arch;
    std::vector<NamedTensor<T>> tensors;

    NamedTensor<T>& at(std::string_view name) {
        for (auto& t : tensors)
            if (t.name == name) return t;
        throw Error("network parameter not found: " + std::string(name));
    }
    const NamedTensor<T>& at(std::string_view name) const {
        for (const auto& t : tensors)
            if (t.name == name) return t;
        throw Error("network parameter not found: " + std::string(name));
    }
    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += t.data.size();
        return n;
    }
    bool all_finite() const {
        for (const auto& t : tensors)
            for (T x : t.data)
                if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }
};

// Fresh parameter set: variance-scaling fan-in normal init for convolution
// weights, zero biases, identity norm affines. Deterministic in `seed`.
template <typename T>
NetworkParams<T> build_backbone(const ArchDescriptor& a, std::uint64_t seed);

// Same schema, all zeros. Gradient / momentum buffers.
template <typename T>
NetworkParams<T> zeros_like(const NetworkParams<T>& p);

enum class Head { seg, dis };

// Saved activations for one conv/norm/relu block.
template <typename T>
struct BlockTape {
    Tensor<T> in;
    Tensor<T> conv_out;
    std::vector<T> mean, invstd;
    Tensor<T> norm_out;
};

template <typename T>
struct Tape {
    std::vector<BlockTape<T>> enc;   // levels entries
    std::vector<BlockTape<T>> down;  // levels entries, down[i] feeds enc[i], slot 0 unused
    std::vector<BlockTape<T>> up;    // levels-1, up[i] produces level-i features
    std::vector<BlockTape<T>> dec;   // levels-1
    Tensor<T> head_in;
    Tensor<T> output;                // post-activation
    Head head_kind = Head::seg;
};

// Full forward pass. When `tape` is non-null every intermediate needed by
// backward() is recorded. Output has one channel and the input's spatial
// shape; values in (0,1) for Head::seg, (-1,1) for Head::dis.
template <typename T>
Tensor<T> forward(const NetworkParams<T>& p, const Tensor<T>& x, Head head, Tape<T>* tape = nullptr);

// Accumulates parameter gradients into `grads` (same schema as params) given
// d(loss)/d(output map). The head activation derivative is applied here.
template <typename T>
void backward(const NetworkParams<T>& p, const Tape<T>& tape, const Tensor<T>& grad_output,
              NetworkParams<T>& grads);

// Single-channel convenience wrappers over Grid3.
template <typename T>
Grid3<T> forward_seg(const NetworkParams<T>& p, const Grid3<T>& x);

template <typename T>
Grid3<T> forward_dis(const NetworkParams<T>& p, const Grid3<T>& x);

// Checkpoints: binary named-tensor archive (<prefix>.bin) holding both
// networks' tensors as little-endian f32, plus a JSON sidecar
// (<prefix>.json) with the architecture descriptor and iteration counter.
struct CheckpointMeta {
    ArchDescriptor arch;
    std::int64_t iteration = 0;
    double k = 1500.0;
};

void save_checkpoint(const std::string& prefix, const NetworkParams<float>& seg,
                     const NetworkParams<float>& dis, const CheckpointMeta& meta);

struct Checkpoint {
    NetworkParams<float> seg, dis;
    CheckpointMeta meta;
};

Checkpoint load_checkpoint(const std::string& prefix);

}  // namespace dtml::model

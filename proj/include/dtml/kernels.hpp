#pragma once

#include <cstddef>
#include <string>

namespace dtml::kernels {

// Runtime-dispatched arithmetic kernels. Every op has a scalar reference
// implementation and, where the host supports it, an AVX2 (x86-64) or NEON
// (aarch64) variant built from the same loop bodies with vector row
// primitives. The active backend is chosen once at startup and can be forced
// for testing, either through force_backend() or the DTML_KERNEL_BACKEND
// environment variable ("scalar", "avx2", "neon", "auto").
enum class Backend { scalar, avx2, neon };

const char* backend_name(Backend b);
bool backend_supported(Backend b);
Backend active_backend();
void force_backend(Backend b);  // throws std::runtime_error if unsupported
void reset_backend();           // re-detect (honours DTML_KERNEL_BACKEND)

// Dense 3D convolution, odd kernel k, zero padding k/2, unit stride.
// Tensors are laid out [channel][z][y][x] with x contiguous.
// weight layout: [cout][cin][kz][ky][kx].
template <typename T>
struct Conv3Args {
    const T* in = nullptr;      // [cin][dz][dy][dx]
    const T* weight = nullptr;
    const T* bias = nullptr;    // [cout], may be null
    T* out = nullptr;           // [cout][dz][dy][dx]
    int cin = 0, cout = 0;
    int dz = 0, dy = 0, dx = 0;
    int k = 3;
};

template <typename T>
struct Conv3GradArgs {
    const T* in = nullptr;        // forward input
    const T* weight = nullptr;
    const T* gout = nullptr;      // gradient w.r.t. forward output
    T* gin = nullptr;             // accumulated, may be null
    T* gweight = nullptr;         // accumulated, may be null
    T* gbias = nullptr;           // accumulated, may be null
    int cin = 0, cout = 0;
    int dz = 0, dy = 0, dx = 0;
    int k = 3;
};

// Stride-2 kernel-2 resampling pair used for down/up transitions.
// down: in [cin][dz][dy][dx] -> out [cout][dz/2][dy/2][dx/2],
//       weight [cout][cin][2][2][2]
// up (transposed): in [cin][dz][dy][dx] -> out [cout][2dz][2dy][2dx],
//       weight [cin][cout][2][2][2]
template <typename T>
struct Resample2Args {
    const T* in = nullptr;
    const T* weight = nullptr;
    const T* bias = nullptr;
    T* out = nullptr;
    int cin = 0, cout = 0;
    int dz = 0, dy = 0, dx = 0;  // dims of `in`
};

template <typename T>
struct Resample2GradArgs {
    const T* in = nullptr;
    const T* weight = nullptr;
    const T* gout = nullptr;
    T* gin = nullptr;
    T* gweight = nullptr;
    T* gbias = nullptr;
    int cin = 0, cout = 0;
    int dz = 0, dy = 0, dx = 0;  // dims of forward `in`
};

template <typename T>
struct Ops {
    void (*axpy)(T* y, const T* x, T a, std::size_t n);       // y += a*x
    void (*scale)(T* y, T a, std::size_t n);                   // y *= a
    T (*dot)(const T* x, const T* y, std::size_t n);
    T (*sum)(const T* x, std::size_t n);
    T (*sumsq_diff)(const T* x, const T* y, std::size_t n);    // sum (x-y)^2
    void (*conv3_fwd)(const Conv3Args<T>&);
    void (*conv3_bwd)(const Conv3GradArgs<T>&);
    void (*down2_fwd)(const Resample2Args<T>&);
    void (*down2_bwd)(const Resample2GradArgs<T>&);
    void (*up2_fwd)(const Resample2Args<T>&);
    void (*up2_bwd)(const Resample2GradArgs<T>&);
};

template <typename T>
const Ops<T>& ops();

template <> const Ops<float>& ops<float>();
template <> const Ops<double>& ops<double>();

// Table for an explicit backend, used by the equivalence tests.
template <typename T>
const Ops<T>& ops_for(Backend b);

template <> const Ops<float>& ops_for<float>(Backend);
template <> const Ops<double>& ops_for<double>(Backend);

}  // namespace dtml::kernels

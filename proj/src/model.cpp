#include "dtml/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "dtml/kernels.hpp"
#include "dtml/rng.hpp"

namespace dtml::model {

namespace {

constexpr double kNormEps = 1e-5;

int channels_at(const ArchDescriptor& a, int level) { return a.base_width << level; }

template <typename T>
T stable_sigmoid(T a) {
    if (a >= T{0}) return T{1} / (T{1} + std::exp(-a));
    const T e = std::exp(a);
    return e / (T{1} + e);
}

enum class ConvKind { same, down2, up2 };

template <typename T>
struct BlockRef {
    const NamedTensor<T>* w;
    const NamedTensor<T>* b;
    const NamedTensor<T>* g;     // null for head
    const NamedTensor<T>* beta;  // null for head
};

template <typename T>
BlockRef<T> block_ref(const NetworkParams<T>& p, const std::string& stem, bool norm = true) {
    BlockRef<T> r{};
    r.w = &p.at(stem + ".conv.w");
    r.b = &p.at(stem + ".conv.b");
    if (norm) {
        r.g = &p.at(stem + ".norm.g");
        r.beta = &p.at(stem + ".norm.b");
    }
    return r;
}

template <typename T>
Tensor<T> apply_conv(ConvKind kind, const NamedTensor<T>& w, const NamedTensor<T>& b,
                     const Tensor<T>& in, int cout, int k) {
    const auto& K = kernels::ops<T>();
    switch (kind) {
        case ConvKind::same: {
            Tensor<T> out(cout, in.dz, in.dy, in.dx);
            kernels::Conv3Args<T> a{in.v.data(), w.data.data(), b.data.data(), out.v.data(),
                                    in.c, cout, in.dz, in.dy, in.dx, k};
            K.conv3_fwd(a);
            return out;
        }
        case ConvKind::down2: {
            Tensor<T> out(cout, in.dz / 2, in.dy / 2, in.dx / 2);
            kernels::Resample2Args<T> a{in.v.data(), w.data.data(), b.data.data(), out.v.data(),
                                        in.c, cout, in.dz, in.dy, in.dx};
            K.down2_fwd(a);
            return out;
        }
        case ConvKind::up2: {
            Tensor<T> out(cout, in.dz * 2, in.dy * 2, in.dx * 2);
            kernels::Resample2Args<T> a{in.v.data(), w.data.data(), b.data.data(), out.v.data(),
                                        in.c, cout, in.dz, in.dy, in.dx};
            K.up2_fwd(a);
            return out;
        }
    }
    throw Error("unreachable");
}

template <typename T>
void apply_conv_bwd(ConvKind kind, const NamedTensor<T>& w, const Tensor<T>& in,
                    const Tensor<T>& gout, Tensor<T>* gin, NamedTensor<T>& gw, NamedTensor<T>& gb,
                    int k) {
    const auto& K = kernels::ops<T>();
    switch (kind) {
        case ConvKind::same: {
            kernels::Conv3GradArgs<T> a{in.v.data(), w.data.data(), gout.v.data(),
                                        gin ? gin->v.data() : nullptr, gw.data.data(), gb.data.data(),
                                        in.c, gout.c, in.dz, in.dy, in.dx, k};
            K.conv3_bwd(a);
            return;
        }
        case ConvKind::down2: {
            kernels::Resample2GradArgs<T> a{in.v.data(), w.data.data(), gout.v.data(),
                                            gin ? gin->v.data() : nullptr, gw.data.data(), gb.data.data(),
                                            in.c, gout.c, in.dz, in.dy, in.dx};
            K.down2_bwd(a);
            return;
        }
        case ConvKind::up2: {
            kernels::Resample2GradArgs<T> a{in.v.data(), w.data.data(), gout.v.data(),
                                            gin ? gin->v.data() : nullptr, gw.data.data(), gb.data.data(),
                                            in.c, gout.c, in.dz, in.dy, in.dx};
            K.up2_bwd(a);
            return;
        }
    }
}

template <typename T>
void inorm_fwd(const Tensor<T>& x, const NamedTensor<T>& g, const NamedTensor<T>& beta,
               std::vector<T>& mean, std::vector<T>& invstd, Tensor<T>& y) {
    const auto& K = kernels::ops<T>();
    const std::size_t n = x.spatial();
    mean.resize(x.c);
    invstd.resize(x.c);
    y = Tensor<T>(x.c, x.dz, x.dy, x.dx);
    for (int ci = 0; ci < x.c; ++ci) {
        const T* xc = x.chan(ci);
        const T mu = K.sum(xc, n) / static_cast<T>(n);
        T var = K.dot(xc, xc, n) / static_cast<T>(n) - mu * mu;
        if (var < T{0}) var = T{0};
        const T r = T{1} / std::sqrt(var + static_cast<T>(kNormEps));
        mean[ci] = mu;
        invstd[ci] = r;
        const T a = g.data[ci] * r;
        const T c0 = beta.data[ci] - a * mu;
        T* yc = y.chan(ci);
        for (std::size_t i = 0; i < n; ++i) yc[i] = a * xc[i] + c0;
    }
}

template <typename T>
Tensor<T> inorm_bwd(const Tensor<T>& x, const std::vector<T>& mean, const std::vector<T>& invstd,
                    const NamedTensor<T>& g, const Tensor<T>& gy, NamedTensor<T>& gg,
                    NamedTensor<T>& gbeta) {
    const auto& K = kernels::ops<T>();
    const std::size_t n = x.spatial();
    Tensor<T> gx(x.c, x.dz, x.dy, x.dx);
    for (int ci = 0; ci < x.c; ++ci) {
        const T* xc = x.chan(ci);
        const T* gyc = gy.chan(ci);
        const T mu = mean[ci], r = invstd[ci];
        const T sum_gy = K.sum(gyc, n);
        const T dot_gyx = K.dot(gyc, xc, n);
        const T dot_gy_xhat = r * (dot_gyx - mu * sum_gy);
        gg.data[ci] += dot_gy_xhat;
        gbeta.data[ci] += sum_gy;
        const T m1 = sum_gy / static_cast<T>(n);
        const T m2 = dot_gy_xhat / static_cast<T>(n);
        const T gr = g.data[ci] * r;
        // gx = g*r*(gy - m1 - xhat*m2), xhat = r*(x - mu)
        const T A = gr;
        const T B = -gr * r * m2;
        const T C = -gr * m1 + gr * r * mu * m2;
        T* gxc = gx.chan(ci);
        for (std::size_t i = 0; i < n; ++i) gxc[i] = A * gyc[i] + B * xc[i] + C;
    }
    return gx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y(x.c, x.dz, x.dy, x.dx);
    for (std::size_t i = 0; i < x.size(); ++i) y.v[i] = x.v[i] > T{0} ? x.v[i] : T{0};
    return y;
}

template <typename T>
Tensor<T> relu_bwd(const Tensor<T>& pre, const Tensor<T>& gy) {
    Tensor<T> gx(pre.c, pre.dz, pre.dy, pre.dx);
    for (std::size_t i = 0; i < pre.size(); ++i) gx.v[i] = pre.v[i] > T{0} ? gy.v[i] : T{0};
    return gx;
}

// conv -> instance norm -> relu
template <typename T>
Tensor<T> block_fwd(ConvKind kind, const BlockRef<T>& p, Tensor<T>&& in, BlockTape<T>& tape,
                    int cout, int k) {
    tape.in = std::move(in);
    tape.conv_out = apply_conv(kind, *p.w, *p.b, tape.in, cout, k);
    inorm_fwd(tape.conv_out, *p.g, *p.beta, tape.mean, tape.invstd, tape.norm_out);
    return relu(tape.norm_out);
}

template <typename T>
Tensor<T> block_bwd(ConvKind kind, const BlockRef<T>& p, const BlockTape<T>& tape,
                    const Tensor<T>& g_act, NetworkParams<T>& grads, const std::string& stem,
                    int k, bool need_gin = true) {
    Tensor<T> g_norm = relu_bwd(tape.norm_out, g_act);
    Tensor<T> g_conv = inorm_bwd(tape.conv_out, tape.mean, tape.invstd, *p.g, g_norm,
                                 grads.at(stem + ".norm.g"), grads.at(stem + ".norm.b"));
    Tensor<T> gin;
    if (need_gin) gin = Tensor<T>(tape.in.c, tape.in.dz, tape.in.dy, tape.in.dx);
    apply_conv_bwd(kind, *p.w, tape.in, g_conv, need_gin ? &gin : nullptr,
                   grads.at(stem + ".conv.w"), grads.at(stem + ".conv.b"), k);
    return gin;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out(a.c + b.c, a.dz, a.dy, a.dx);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + a.v.size());
    return out;
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    kernels::ops<T>().axpy(dst.v.data(), src.v.data(), T{1}, dst.v.size());
}

struct TensorSpec {
    std::string name;
    std::vector<int> shape;
};

std::vector<TensorSpec> schema(const ArchDescriptor& a) {
    std::vector<TensorSpec> s;
    auto conv_block = [&](const std::string& stem, int cin, int cout, int k) {
        s.push_back({stem + ".conv.w", {cout, cin, k, k, k}});
        s.push_back({stem + ".conv.b", {cout}});
        s.push_back({stem + ".norm.g", {cout}});
        s.push_back({stem + ".norm.b", {cout}});
    };
    const int k = a.conv_kernel;
    conv_block("enc0", a.in_channels, channels_at(a, 0), k);
    for (int i = 1; i < a.levels; ++i) {
        s.push_back({"down" + std::to_string(i) + ".conv.w",
                     {channels_at(a, i), channels_at(a, i - 1), 2, 2, 2}});
        s.push_back({"down" + std::to_string(i) + ".conv.b", {channels_at(a, i)}});
        s.push_back({"down" + std::to_string(i) + ".norm.g", {channels_at(a, i)}});
        s.push_back({"down" + std::to_string(i) + ".norm.b", {channels_at(a, i)}});
        conv_block("enc" + std::to_string(i), channels_at(a, i), channels_at(a, i), k);
    }
    for (int i = a.levels - 2; i >= 0; --i) {
        // transposed conv weights are [cin][cout][2][2][2]
        s.push_back({"up" + std::to_string(i) + ".conv.w",
                     {channels_at(a, i + 1), channels_at(a, i), 2, 2, 2}});
        s.push_back({"up" + std::to_string(i) + ".conv.b", {channels_at(a, i)}});
        s.push_back({"up" + std::to_string(i) + ".norm.g", {channels_at(a, i)}});
        s.push_back({"up" + std::to_string(i) + ".norm.b", {channels_at(a, i)}});
        conv_block("dec" + std::to_string(i), 2 * channels_at(a, i), channels_at(a, i), k);
    }
    s.push_back({"head.w", {1, channels_at(a, 0), 1, 1, 1}});
    s.push_back({"head.b", {1}});
    return s;
}

}  // namespace

void validate_descriptor(const ArchDescriptor& a) {
    if (a.levels < 2)
        throw InvalidDescriptor("descriptor needs at least 2 resolution levels");
    if (a.base_width < 4)
        throw InvalidDescriptor("descriptor needs base width >= 4");
    if (a.in_channels < 1)
        throw InvalidDescriptor("descriptor needs at least one input channel");
    if (a.conv_kernel < 1 || a.conv_kernel % 2 == 0)
        throw InvalidDescriptor("conv kernel must be odd and positive");
}

void validate_input_shape(const ArchDescriptor& a, int dz, int dy, int dx) {
    const int div = 1 << a.levels;
    for (int d : {dz, dy, dx}) {
        if (d <= 0 || d % div != 0)
            throw InvalidDescriptor("input extent " + std::to_string(d) +
                                    " not divisible by 2^levels = " + std::to_string(div));
    }
}

template <typename T>
NetworkParams<T> build_backbone(const ArchDescriptor& a, std::uint64_t seed) {
    validate_descriptor(a);
    NetworkParams<T> p;
    p.arch = a;
    Rng rng(seed);
    for (const auto& spec : schema(a)) {
        NamedTensor<T> t;
        t.name = spec.name;
        t.shape = spec.shape;
        std::size_t n = 1;
        for (int d : spec.shape) n *= static_cast<std::size_t>(d);
        t.data.resize(n);
        const bool is_weight = t.name.ends_with(".w");
        if (is_weight) {
            std::size_t fan_in;
            if (t.name.starts_with("up")) {
                fan_in = static_cast<std::size_t>(spec.shape[0]);  // one tap per output voxel
            } else {
                fan_in = 1;
                for (std::size_t i = 1; i < spec.shape.size(); ++i)
                    fan_in *= static_cast<std::size_t>(spec.shape[i]);
            }
            const double gain = t.name.starts_with("head") ? 1.0 : 2.0;
            const double std_dev = std::sqrt(gain / static_cast<double>(fan_in));
            for (auto& x : t.data) x = static_cast<T>(rng.normal(0.0, std_dev));
        } else if (t.name.ends_with(".norm.g")) {
            std::fill(t.data.begin(), t.data.end(), T{1});
        }  // biases and norm shifts stay zero
        p.tensors.push_back(std::move(t));
    }
    return p;
}

template <typename T>
NetworkParams<T> zeros_like(const NetworkParams<T>& p) {
    NetworkParams<T> z;
    z.arch = p.arch;
    z.tensors.reserve(p.tensors.size());
    for (const auto& t : p.tensors) {
        NamedTensor<T> zt;
        zt.name = t.name;
        zt.shape = t.shape;
        zt.data.assign(t.data.size(), T{});
        z.tensors.push_back(std::move(zt));
    }
    return z;
}

template <typename T>
Tensor<T> forward(const NetworkParams<T>& p, const Tensor<T>& x, Head head, Tape<T>* tape) {
    const ArchDescriptor& a = p.arch;
    if (x.c != a.in_channels)
        throw ShapeMismatch("forward: input has " + std::to_string(x.c) + " channels, expected " +
                            std::to_string(a.in_channels));
    validate_input_shape(a, x.dz, x.dy, x.dx);

    Tape<T> local;
    Tape<T>& tp = tape ? *tape : local;
    const int L = a.levels;
    const int k = a.conv_kernel;
    tp.enc.resize(L);
    tp.down.resize(L);
    tp.up.resize(L > 1 ? L - 1 : 0);
    tp.dec.resize(L > 1 ? L - 1 : 0);

    std::vector<Tensor<T>> enc_act(L);
    Tensor<T> cur = x;
    for (int i = 0; i < L; ++i) {
        const std::string ei = "enc" + std::to_string(i);
        if (i > 0) {
            const std::string di = "down" + std::to_string(i);
            cur = block_fwd(ConvKind::down2, block_ref(p, di), std::move(cur), tp.down[i],
                            channels_at(a, i), 2);
        }
        cur = block_fwd(ConvKind::same, block_ref(p, ei), std::move(cur), tp.enc[i],
                        channels_at(a, i), k);
        if (i < L - 1) enc_act[i] = cur;  // skip inputs; the deepest level has no skip
    }
    for (int i = L - 2; i >= 0; --i) {
        Tensor<T> up_act = block_fwd(ConvKind::up2, block_ref(p, "up" + std::to_string(i)),
                                     std::move(cur), tp.up[i], channels_at(a, i), 2);
        Tensor<T> cat = concat_channels(up_act, enc_act[i]);
        cur = block_fwd(ConvKind::same, block_ref(p, "dec" + std::to_string(i)), std::move(cat),
                        tp.dec[i], channels_at(a, i), k);
    }
    tp.head_in = std::move(cur);
    Tensor<T> pre = apply_conv(ConvKind::same, p.at("head.w"), p.at("head.b"), tp.head_in, 1, 1);
    tp.output = Tensor<T>(1, pre.dz, pre.dy, pre.dx);
    // keep outputs strictly inside the open activation range even when the
    // preactivation saturates
    const T margin = std::numeric_limits<T>::epsilon() / 2;
    if (head == Head::seg) {
        const T lo = std::numeric_limits<T>::min(), hi = T{1} - margin;
        for (std::size_t i = 0; i < pre.size(); ++i)
            tp.output.v[i] = std::clamp(stable_sigmoid(pre.v[i]), lo, hi);
    } else {
        const T lim = T{1} - margin;
        for (std::size_t i = 0; i < pre.size(); ++i)
            tp.output.v[i] = std::clamp(std::tanh(pre.v[i]), -lim, lim);
    }
    tp.head_kind = head;
    return tp.output;
}

template <typename T>
void backward(const NetworkParams<T>& p, const Tape<T>& tp, const Tensor<T>& grad_output,
              NetworkParams<T>& grads) {
    const ArchDescriptor& a = p.arch;
    const int L = a.levels;
    const int k = a.conv_kernel;
    if (!grad_output.same_shape(tp.output))
        throw ShapeMismatch("backward: gradient shape does not match output");

    // through the head activation
    Tensor<T> g_pre(1, tp.output.dz, tp.output.dy, tp.output.dx);
    if (tp.head_kind == Head::seg) {
        for (std::size_t i = 0; i < g_pre.size(); ++i) {
            const T o = tp.output.v[i];
            g_pre.v[i] = grad_output.v[i] * o * (T{1} - o);
        }
    } else {
        for (std::size_t i = 0; i < g_pre.size(); ++i) {
            const T o = tp.output.v[i];
            g_pre.v[i] = grad_output.v[i] * (T{1} - o * o);
        }
    }

    Tensor<T> g_cur(tp.head_in.c, tp.head_in.dz, tp.head_in.dy, tp.head_in.dx);
    apply_conv_bwd(ConvKind::same, p.at("head.w"), tp.head_in, g_pre, &g_cur, grads.at("head.w"),
                   grads.at("head.b"), 1);

    std::vector<Tensor<T>> g_enc_act(L);
    for (int i = 0; i < L; ++i) {
        const auto& no = tp.enc[i].norm_out;
        g_enc_act[i] = Tensor<T>(no.c, no.dz, no.dy, no.dx);
    }

    for (int i = 0; i <= L - 2; ++i) {
        const std::string di = "dec" + std::to_string(i);
        Tensor<T> g_cat = block_bwd(ConvKind::same, block_ref(p, di), tp.dec[i], g_cur, grads, di, k);
        const int ch = channels_at(a, i);
        Tensor<T> g_up(ch, g_cat.dz, g_cat.dy, g_cat.dx);
        std::copy(g_cat.v.begin(), g_cat.v.begin() + g_up.v.size(), g_up.v.begin());
        // skip half goes to the encoder activation at this level
        const T* skip = g_cat.v.data() + g_up.v.size();
        kernels::ops<T>().axpy(g_enc_act[i].v.data(), skip, T{1}, g_enc_act[i].v.size());
        const std::string ui = "up" + std::to_string(i);
        g_cur = block_bwd(ConvKind::up2, block_ref(p, ui), tp.up[i], g_up, grads, ui, 2);
    }
    add_into(g_enc_act[L - 1], g_cur);

    for (int i = L - 1; i >= 0; --i) {
        const std::string ei = "enc" + std::to_string(i);
        Tensor<T> g_in = block_bwd(ConvKind::same, block_ref(p, ei), tp.enc[i], g_enc_act[i], grads,
                                   ei, k, /*need_gin=*/i > 0);
        if (i > 0) {
            const std::string di = "down" + std::to_string(i);
            Tensor<T> g_prev = block_bwd(ConvKind::down2, block_ref(p, di), tp.down[i], g_in, grads,
                                         di, 2, /*need_gin=*/true);
            add_into(g_enc_act[i - 1], g_prev);
        }
    }
}

template <typename T>
Grid3<T> forward_seg(const NetworkParams<T>& p, const Grid3<T>& x) {
    return grid_from_tensor(forward(p, tensor_from_grid(x), Head::seg), x.spacing);
}

template <typename T>
Grid3<T> forward_dis(const NetworkParams<T>& p, const Grid3<T>& x) {
    return grid_from_tensor(forward(p, tensor_from_grid(x), Head::dis), x.spacing);
}

template NetworkParams<float> build_backbone<float>(const ArchDescriptor&, std::uint64_t);
template NetworkParams<double> build_backbone<double>(const ArchDescriptor&, std::uint64_t);
template NetworkParams<float> zeros_like<float>(const NetworkParams<float>&);
template NetworkParams<double> zeros_like<double>(const NetworkParams<double>&);
template Tensor<float> forward<float>(const NetworkParams<float>&, const Tensor<float>&, Head, Tape<float>*);
template Tensor<double> forward<double>(const NetworkParams<double>&, const Tensor<double>&, Head, Tape<double>*);
template void backward<float>(const NetworkParams<float>&, const Tape<float>&, const Tensor<float>&, NetworkParams<float>&);
template void backward<double>(const NetworkParams<double>&, const Tape<double>&, const Tensor<double>&, NetworkParams<double>&);
template Grid3<float> forward_seg<float>(const NetworkParams<float>&, const Grid3<float>&);
template Grid3<double> forward_seg<double>(const NetworkParams<double>&, const Grid3<double>&);
template Grid3<float> forward_dis<float>(const NetworkParams<float>&, const Grid3<float>&);
template Grid3<double> forward_dis<double>(const NetworkParams<double>&, const Grid3<double>&);

// --- checkpoint I/O ---

namespace {

void put_u32(std::ofstream& f, std::uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                          static_cast<unsigned char>((x >> 8) & 0xff),
                          static_cast<unsigned char>((x >> 16) & 0xff),
                          static_cast<unsigned char>((x >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& f) {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ofstream& f, float x) {
    std::uint32_t u;
    std::memcpy(&u, &x, 4);
    put_u32(f, u);
}

float get_f32(std::ifstream& f) {
    const std::uint32_t u = get_u32(f);
    float x;
    std::memcpy(&x, &u, 4);
    return x;
}

constexpr char kMagic[8] = {'D', 'T', 'M', 'L', 'N', 'T', '0', '1'};

void write_tensors(std::ofstream& f, const std::string& prefix, const NetworkParams<float>& p) {
    for (const auto& t : p.tensors) {
        const std::string name = prefix + t.name;
        put_u32(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(f, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(f, static_cast<std::uint32_t>(d));
        for (float x : t.data) put_f32(f, x);
    }
}

}  // namespace

void save_checkpoint(const std::string& prefix, const NetworkParams<float>& seg,
                     const NetworkParams<float>& dis, const CheckpointMeta& meta) {
    const std::string bin_path = prefix + ".bin";
    {
        std::ofstream f(bin_path, std::ios::binary);
        if (!f) throw IOFailure("cannot write checkpoint archive: " + bin_path);
        f.write(kMagic, 8);
        put_u32(f, static_cast<std::uint32_t>(seg.tensors.size() + dis.tensors.size()));
        write_tensors(f, "seg.", seg);
        write_tensors(f, "dis.", dis);
        if (!f) throw IOFailure("write failed: " + bin_path);
    }
    nlohmann::ordered_json j;
    j["format"] = "dtml-checkpoint";
    j["version"] = 1;
    j["arch"] = {{"levels", meta.arch.levels},
                 {"base_width", meta.arch.base_width},
                 {"in_channels", meta.arch.in_channels},
                 {"conv_kernel", meta.arch.conv_kernel}};
    j["iteration"] = meta.iteration;
    j["k"] = meta.k;
    j["archive"] = bin_path;
    std::ofstream jf(prefix + ".json");
    if (!jf) throw IOFailure("cannot write checkpoint sidecar: " + prefix + ".json");
    jf << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& prefix) {
    std::ifstream jf(prefix + ".json");
    if (!jf) throw MissingCheckpoint("checkpoint sidecar not found: " + prefix + ".json");
    nlohmann::json j;
    try {
        jf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IOFailure("bad checkpoint sidecar: " + std::string(e.what()));
    }
    Checkpoint c;
    try {
        c.meta.arch.levels = j.at("arch").at("levels").get<int>();
        c.meta.arch.base_width = j.at("arch").at("base_width").get<int>();
        c.meta.arch.in_channels = j.at("arch").at("in_channels").get<int>();
        c.meta.arch.conv_kernel = j.at("arch").at("conv_kernel").get<int>();
        c.meta.iteration = j.at("iteration").get<std::int64_t>();
        c.meta.k = j.at("k").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IOFailure("bad checkpoint sidecar: " + std::string(e.what()));
    }

    std::ifstream f(prefix + ".bin", std::ios::binary);
    if (!f) throw MissingCheckpoint("checkpoint archive not found: " + prefix + ".bin");
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw IOFailure("bad checkpoint magic: " + prefix + ".bin");

    c.seg = build_backbone<float>(c.meta.arch, 0);
    c.dis = build_backbone<float>(c.meta.arch, 0);
    const std::uint32_t count = get_u32(f);
    std::size_t filled = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = get_u32(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const std::uint32_t ndim = get_u32(f);
        std::vector<int> shape(ndim);
        std::size_t n = 1;
        for (auto& d : shape) {
            d = static_cast<int>(get_u32(f));
            n *= static_cast<std::size_t>(d);
        }
        NetworkParams<float>* target = nullptr;
        std::string_view local = name;
        if (local.starts_with("seg.")) {
            target = &c.seg;
            local.remove_prefix(4);
        } else if (local.starts_with("dis.")) {
            target = &c.dis;
            local.remove_prefix(4);
        } else {
            throw IOFailure("unknown tensor namespace in checkpoint: " + name);
        }
        auto& t = target->at(local);
        if (t.shape != shape)
            throw IOFailure("checkpoint tensor shape mismatch: " + name);
        for (auto& x : t.data) x = get_f32(f);
        ++filled;
        if (!f) throw IOFailure("truncated checkpoint archive: " + prefix + ".bin");
    }
    if (filled != c.seg.tensors.size() + c.dis.tensors.size())
        throw IOFailure("checkpoint tensor count mismatch");
    return c;
}

}  // namespace dtml::model

// Backend-independent kernel bodies. Included inside a backend namespace
// after the row primitives (axpy_row, dot_row, ...) for that backend.
// The outer loops are identical across backends so that scalar/SIMD
// equivalence is a property of the row primitives alone.

template <typename T>
void axpy(T* y, const T* x, T a, std::size_t n) { axpy_row(y, x, a, n); }

template <typename T>
void scale(T* y, T a, std::size_t n) { scale_row(y, a, n); }

template <typename T>
T dot(const T* x, const T* y, std::size_t n) { return dot_row(x, y, n); }

template <typename T>
T sum(const T* x, std::size_t n) { return sum_row(x, n); }

template <typename T>
T sumsq_diff(const T* x, const T* y, std::size_t n) { return sumsq_diff_row(x, y, n); }

template <typename T>
static inline void fill_row(T* y, T a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a;
}

// Split a stride-2 row into its even and odd phase.
template <typename T>
static inline void deinterleave2(const T* src, T* even, T* odd, int pairs) {
    for (int i = 0; i < pairs; ++i) {
        even[i] = src[2 * i];
        odd[i] = src[2 * i + 1];
    }
}

template <typename T>
static inline void interleave2_add(T* dst, const T* even, const T* odd, int pairs) {
    for (int i = 0; i < pairs; ++i) {
        dst[2 * i] += even[i];
        dst[2 * i + 1] += odd[i];
    }
}

template <typename T>
struct Scratch {
    std::vector<T> a, b, c;
};

template <typename T>
static Scratch<T>& scratch() {
    thread_local Scratch<T> s;
    return s;
}

// Copy [cin][dz][dy][dx] into a zero-padded [cin][dz+2p][dy+2p][dx+2p] buffer.
template <typename T>
static void pad_channels(const T* in, T* padded, int cin, int dz, int dy, int dx, int p) {
    const int pz = dz + 2 * p, py = dy + 2 * p, px = dx + 2 * p;
    std::fill(padded, padded + static_cast<std::size_t>(cin) * pz * py * px, T{});
    for (int ci = 0; ci < cin; ++ci)
        for (int z = 0; z < dz; ++z)
            for (int y = 0; y < dy; ++y) {
                const T* src = in + ((static_cast<std::size_t>(ci) * dz + z) * dy + y) * dx;
                T* dst = padded + (((static_cast<std::size_t>(ci) * pz + z + p) * py + y + p) * px) + p;
                std::copy(src, src + dx, dst);
            }
}

template <typename T>
void conv3_fwd(const dtml::kernels::Conv3Args<T>& args) {
    const int k = args.k, p = k / 2;
    const int dz = args.dz, dy = args.dy, dx = args.dx;
    const std::size_t plane = static_cast<std::size_t>(dz) * dy * dx;

    if (k == 1) {
        for (int co = 0; co < args.cout; ++co) {
            T* out = args.out + co * plane;
            fill_row(out, args.bias ? args.bias[co] : T{}, plane);
            for (int ci = 0; ci < args.cin; ++ci)
                axpy_row(out, args.in + ci * plane, args.weight[co * args.cin + ci], plane);
        }
        return;
    }

    const int pz = dz + 2 * p, py = dy + 2 * p, px = dx + 2 * p;
    auto& padded = scratch<T>().a;
    padded.resize(static_cast<std::size_t>(args.cin) * pz * py * px);
    pad_channels(args.in, padded.data(), args.cin, dz, dy, dx, p);

    for (int co = 0; co < args.cout; ++co) {
        const T* wco = args.weight + static_cast<std::size_t>(co) * args.cin * k * k * k;
        for (int z = 0; z < dz; ++z)
            for (int y = 0; y < dy; ++y) {
                T* orow = args.out + (co * plane + (static_cast<std::size_t>(z) * dy + y) * dx);
                fill_row(orow, args.bias ? args.bias[co] : T{}, static_cast<std::size_t>(dx));
                for (int ci = 0; ci < args.cin; ++ci) {
                    const T* wci = wco + static_cast<std::size_t>(ci) * k * k * k;
                    for (int kz = 0; kz < k; ++kz)
                        for (int ky = 0; ky < k; ++ky) {
                            const T* irow = padded.data() +
                                ((static_cast<std::size_t>(ci) * pz + z + kz) * py + y + ky) * px;
                            const T* wrow = wci + (kz * k + ky) * k;
                            for (int kx = 0; kx < k; ++kx)
                                axpy_row(orow, irow + kx, wrow[kx], static_cast<std::size_t>(dx));
                        }
                }
            }
    }
}

template <typename T>
void conv3_bwd(const dtml::kernels::Conv3GradArgs<T>& args) {
    const int k = args.k, p = k / 2;
    const int dz = args.dz, dy = args.dy, dx = args.dx;
    const std::size_t plane = static_cast<std::size_t>(dz) * dy * dx;

    if (k == 1) {
        for (int co = 0; co < args.cout; ++co) {
            const T* go = args.gout + co * plane;
            if (args.gbias) args.gbias[co] += sum_row(go, plane);
            for (int ci = 0; ci < args.cin; ++ci) {
                if (args.gin)
                    axpy_row(args.gin + ci * plane, go, args.weight[co * args.cin + ci], plane);
                if (args.gweight)
                    args.gweight[co * args.cin + ci] += dot_row(go, args.in + ci * plane, plane);
            }
        }
        return;
    }

    const int pz = dz + 2 * p, py = dy + 2 * p, px = dx + 2 * p;
    const std::size_t kcube = static_cast<std::size_t>(k) * k * k;

    if (args.gbias)
        for (int co = 0; co < args.cout; ++co)
            args.gbias[co] += sum_row(args.gout + co * plane, plane);

    if (args.gin) {
        // gin = gout (zero-padded) correlated with the kernel flipped in all
        // three spatial dims and transposed in (cout, cin).
        auto& gpad = scratch<T>().b;
        gpad.resize(static_cast<std::size_t>(args.cout) * pz * py * px);
        pad_channels(args.gout, gpad.data(), args.cout, dz, dy, dx, p);
        for (int ci = 0; ci < args.cin; ++ci)
            for (int z = 0; z < dz; ++z)
                for (int y = 0; y < dy; ++y) {
                    T* grow = args.gin + (ci * plane + (static_cast<std::size_t>(z) * dy + y) * dx);
                    for (int co = 0; co < args.cout; ++co) {
                        const T* wci = args.weight + (static_cast<std::size_t>(co) * args.cin + ci) * kcube;
                        for (int kz = 0; kz < k; ++kz)
                            for (int ky = 0; ky < k; ++ky) {
                                const T* gr = gpad.data() +
                                    ((static_cast<std::size_t>(co) * pz + z + kz) * py + y + ky) * px;
                                for (int kx = 0; kx < k; ++kx) {
                                    const T wv = wci[((k - 1 - kz) * k + (k - 1 - ky)) * k + (k - 1 - kx)];
                                    axpy_row(grow, gr + kx, wv, static_cast<std::size_t>(dx));
                                }
                            }
                    }
                }
    }

    if (args.gweight) {
        auto& ipad = scratch<T>().a;
        ipad.resize(static_cast<std::size_t>(args.cin) * pz * py * px);
        pad_channels(args.in, ipad.data(), args.cin, dz, dy, dx, p);
        std::vector<T> tile(kcube);
        for (int co = 0; co < args.cout; ++co)
            for (int ci = 0; ci < args.cin; ++ci) {
                std::fill(tile.begin(), tile.end(), T{});
                for (int z = 0; z < dz; ++z)
                    for (int y = 0; y < dy; ++y) {
                        const T* go = args.gout + (co * plane + (static_cast<std::size_t>(z) * dy + y) * dx);
                        for (int kz = 0; kz < k; ++kz)
                            for (int ky = 0; ky < k; ++ky) {
                                const T* irow = ipad.data() +
                                    ((static_cast<std::size_t>(ci) * pz + z + kz) * py + y + ky) * px;
                                for (int kx = 0; kx < k; ++kx)
                                    tile[(kz * k + ky) * k + kx] += dot_row(go, irow + kx, static_cast<std::size_t>(dx));
                            }
                    }
                T* gw = args.gweight + (static_cast<std::size_t>(co) * args.cin + ci) * kcube;
                for (std::size_t i = 0; i < kcube; ++i) gw[i] += tile[i];
            }
    }
}

// Stride-2 convolutions work on deinterleaved row phases so the inner loops
// stay contiguous axpy/dot calls.

template <typename T>
void down2_fwd(const dtml::kernels::Resample2Args<T>& args) {
    const int dz = args.dz, dy = args.dy, dx = args.dx;
    const int oz = dz / 2, oy = dy / 2, ox = dx / 2;
    const std::size_t iplane = static_cast<std::size_t>(dz) * dy * dx;
    const std::size_t oplane = static_cast<std::size_t>(oz) * oy * ox;

    auto& dein = scratch<T>().a;  // [cin][2][2][2][ox]
    dein.resize(static_cast<std::size_t>(args.cin) * 8 * ox);

    for (int co = 0; co < args.cout; ++co)
        fill_row(args.out + co * oplane, args.bias ? args.bias[co] : T{}, oplane);

    for (int z = 0; z < oz; ++z)
        for (int y = 0; y < oy; ++y) {
            for (int ci = 0; ci < args.cin; ++ci)
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b) {
                        const T* irow = args.in +
                            (ci * iplane + (static_cast<std::size_t>(2 * z + a) * dy + 2 * y + b) * dx);
                        T* even = dein.data() + ((ci * 4 + a * 2 + b) * 2 + 0) * ox;
                        T* odd = dein.data() + ((ci * 4 + a * 2 + b) * 2 + 1) * ox;
                        deinterleave2(irow, even, odd, ox);
                    }
            for (int co = 0; co < args.cout; ++co) {
                T* orow = args.out + (co * oplane + (static_cast<std::size_t>(z) * oy + y) * ox);
                const T* w = args.weight + static_cast<std::size_t>(co) * args.cin * 8;
                for (int ci = 0; ci < args.cin; ++ci)
                    for (int t = 0; t < 8; ++t)
                        axpy_row(orow, dein.data() + (ci * 8 + t) * ox, w[ci * 8 + t], static_cast<std::size_t>(ox));
            }
        }
}

template <typename T>
void down2_bwd(const dtml::kernels::Resample2GradArgs<T>& args) {
    const int dz = args.dz, dy = args.dy, dx = args.dx;
    const int oz = dz / 2, oy = dy / 2, ox = dx / 2;
    const std::size_t iplane = static_cast<std::size_t>(dz) * dy * dx;
    const std::size_t oplane = static_cast<std::size_t>(oz) * oy * ox;

    if (args.gbias)
        for (int co = 0; co < args.cout; ++co)
            args.gbias[co] += sum_row(args.gout + co * oplane, oplane);

    auto& dein = scratch<T>().a;
    dein.resize(static_cast<std::size_t>(args.cin) * 8 * ox);
    auto& acc = scratch<T>().b;  // two phase rows
    acc.resize(2 * static_cast<std::size_t>(ox));

    std::vector<T> gw;
    if (args.gweight) gw.assign(static_cast<std::size_t>(args.cout) * args.cin * 8, T{});

    for (int z = 0; z < oz; ++z)
        for (int y = 0; y < oy; ++y) {
            if (args.gweight)
                for (int ci = 0; ci < args.cin; ++ci)
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b) {
                            const T* irow = args.in +
                                (ci * iplane + (static_cast<std::size_t>(2 * z + a) * dy + 2 * y + b) * dx);
                            deinterleave2(irow,
                                          dein.data() + ((ci * 4 + a * 2 + b) * 2 + 0) * ox,
                                          dein.data() + ((ci * 4 + a * 2 + b) * 2 + 1) * ox, ox);
                        }
            for (int co = 0; co < args.cout; ++co) {
                const T* grow = args.gout + (co * oplane + (static_cast<std::size_t>(z) * oy + y) * ox);
                if (args.gweight) {
                    T* gwc = gw.data() + static_cast<std::size_t>(co) * args.cin * 8;
                    for (int ci = 0; ci < args.cin; ++ci)
                        for (int t = 0; t < 8; ++t)
                            gwc[ci * 8 + t] += dot_row(grow, dein.data() + (ci * 8 + t) * ox, static_cast<std::size_t>(ox));
                }
            }
            if (args.gin)
                for (int ci = 0; ci < args.cin; ++ci)
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b) {
                            fill_row(acc.data(), T{}, 2 * static_cast<std::size_t>(ox));
                            for (int co = 0; co < args.cout; ++co) {
                                const T* grow = args.gout + (co * oplane + (static_cast<std::size_t>(z) * oy + y) * ox);
                                const T* w = args.weight + (static_cast<std::size_t>(co) * args.cin + ci) * 8 + (a * 2 + b) * 2;
                                axpy_row(acc.data(), grow, w[0], static_cast<std::size_t>(ox));
                                axpy_row(acc.data() + ox, grow, w[1], static_cast<std::size_t>(ox));
                            }
                            T* grin = args.gin +
                                (ci * iplane + (static_cast<std::size_t>(2 * z + a) * dy + 2 * y + b) * dx);
                            interleave2_add(grin, acc.data(), acc.data() + ox, ox);
                        }
        }

    if (args.gweight)
        axpy_row(args.gweight, gw.data(), T{1}, gw.size());
}

template <typename T>
void up2_fwd(const dtml::kernels::Resample2Args<T>& args) {
    const int dz = args.dz, dy = args.dy, dx = args.dx;
    const int oz = dz * 2, oy = dy * 2, ox = dx * 2;
    const std::size_t iplane = static_cast<std::size_t>(dz) * dy * dx;
    const std::size_t oplane = static_cast<std::size_t>(oz) * oy * ox;

    for (int co = 0; co < args.cout; ++co)
        fill_row(args.out + co * oplane, args.bias ? args.bias[co] : T{}, oplane);

    auto& acc = scratch<T>().a;  // two phase rows of length dx
    acc.resize(2 * static_cast<std::size_t>(dx));

    for (int z = 0; z < dz; ++z)
        for (int y = 0; y < dy; ++y)
            for (int co = 0; co < args.cout; ++co)
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b) {
                        fill_row(acc.data(), T{}, 2 * static_cast<std::size_t>(dx));
                        for (int ci = 0; ci < args.cin; ++ci) {
                            const T* irow = args.in + (ci * iplane + (static_cast<std::size_t>(z) * dy + y) * dx);
                            const T* w = args.weight + (static_cast<std::size_t>(ci) * args.cout + co) * 8 + (a * 2 + b) * 2;
                            axpy_row(acc.data(), irow, w[0], static_cast<std::size_t>(dx));
                            axpy_row(acc.data() + dx, irow, w[1], static_cast<std::size_t>(dx));
                        }
                        T* orow = args.out +
                            (co * oplane + (static_cast<std::size_t>(2 * z + a) * oy + 2 * y + b) * ox);
                        interleave2_add(orow, acc.data(), acc.data() + dx, dx);
                    }
}

template <typename T>
void up2_bwd(const dtml::kernels::Resample2GradArgs<T>& args) {
    const int dz = args.dz, dy = args.dy, dx = args.dx;
    const int oz = dz * 2, oy = dy * 2, ox = dx * 2;
    const std::size_t iplane = static_cast<std::size_t>(dz) * dy * dx;
    const std::size_t oplane = static_cast<std::size_t>(oz) * oy * ox;

    if (args.gbias)
        for (int co = 0; co < args.cout; ++co)
            args.gbias[co] += sum_row(args.gout + co * oplane, oplane);

    auto& dein = scratch<T>().a;  // deinterleaved gout phases for one (co,a,b) row
    dein.resize(2 * static_cast<std::size_t>(dx));

    std::vector<T> gw;
    if (args.gweight) gw.assign(static_cast<std::size_t>(args.cin) * args.cout * 8, T{});

    for (int z = 0; z < dz; ++z)
        for (int y = 0; y < dy; ++y)
            for (int co = 0; co < args.cout; ++co)
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b) {
                        const T* grow = args.gout +
                            (co * oplane + (static_cast<std::size_t>(2 * z + a) * oy + 2 * y + b) * ox);
                        deinterleave2(grow, dein.data(), dein.data() + dx, dx);
                        for (int ci = 0; ci < args.cin; ++ci) {
                            const T* w = args.weight + (static_cast<std::size_t>(ci) * args.cout + co) * 8 + (a * 2 + b) * 2;
                            const T* irow = args.in + (ci * iplane + (static_cast<std::size_t>(z) * dy + y) * dx);
                            if (args.gin) {
                                T* grin = args.gin + (ci * iplane + (static_cast<std::size_t>(z) * dy + y) * dx);
                                axpy_row(grin, dein.data(), w[0], static_cast<std::size_t>(dx));
                                axpy_row(grin, dein.data() + dx, w[1], static_cast<std::size_t>(dx));
                            }
                            if (args.gweight) {
                                T* gwc = gw.data() + (static_cast<std::size_t>(ci) * args.cout + co) * 8 + (a * 2 + b) * 2;
                                gwc[0] += dot_row(dein.data(), irow, static_cast<std::size_t>(dx));
                                gwc[1] += dot_row(dein.data() + dx, irow, static_cast<std::size_t>(dx));
                            }
                        }
                    }

    if (args.gweight)
        axpy_row(args.gweight, gw.data(), T{1}, gw.size());
}

template <typename T>
dtml::kernels::Ops<T> make_ops() {
    dtml::kernels::Ops<T> t;
    t.axpy = &axpy<T>;
    t.scale = &scale<T>;
    t.dot = &dot<T>;
    t.sum = &sum<T>;
    t.sumsq_diff = &sumsq_diff<T>;
    t.conv3_fwd = &conv3_fwd<T>;
    t.conv3_bwd = &conv3_bwd<T>;
    t.down2_fwd = &down2_fwd<T>;
    t.down2_bwd = &down2_bwd<T>;
    t.up2_fwd = &up2_fwd<T>;
    t.up2_bwd = &up2_bwd<T>;
    return t;
}

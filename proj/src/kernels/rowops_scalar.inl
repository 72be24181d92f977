// Scalar reference row primitives. Included inside a backend namespace.

template <typename T>
static inline void axpy_row(T* y, const T* x, T a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
static inline void scale_row(T* y, T a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

template <typename T>
static inline T dot_row(const T* x, const T* y, std::size_t n) {
    T acc{};
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

template <typename T>
static inline T sum_row(const T* x, std::size_t n) {
    T acc{};
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

template <typename T>
static inline T sumsq_diff_row(const T* x, const T* y, std::size_t n) {
    T acc{};
    for (std::size_t i = 0; i < n; ++i) {
        const T d = x[i] - y[i];
        acc += d * d;
    }
    return acc;
}

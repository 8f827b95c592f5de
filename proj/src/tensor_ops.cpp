#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include "trifusion/ops.hpp"

namespace trifusion {

std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            s += ",";
        }
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

namespace {

template <typename T>
using InputGrads = typename Tape<T>::InputGrads;

template <typename T>
void require_same_shape(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

template <typename T>
void require_rank(const char* op, const BasicTensor<T>& x, std::size_t rank) {
    if (x.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_string(x.shape()));
    }
}

// Range of "small" indices i with i*stride + k - padding inside [0, big_n).
// For conv2d the small side is the output, for the transpose it is the input.
struct TapRange {
    std::size_t lo;
    std::size_t hi;  // exclusive
};

TapRange tap_range(std::size_t k, std::size_t padding, std::size_t stride, std::size_t small_n,
                   std::size_t big_n) {
    const long long kp = static_cast<long long>(k) - static_cast<long long>(padding);
    const long long s = static_cast<long long>(stride);
    long long lo = 0;
    if (kp < 0) {
        lo = (-kp + s - 1) / s;
    }
    long long hi_incl = (static_cast<long long>(big_n) - 1 - kp);
    if (hi_incl < 0) {
        return {0, 0};
    }
    hi_incl /= s;
    long long hi = std::min<long long>(hi_incl + 1, static_cast<long long>(small_n));
    if (hi <= lo) {
        return {0, 0};
    }
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

struct ConvGeometry {
    std::size_t small_c, small_h, small_w;  // output of conv2d / input of transpose
    std::size_t big_c, big_h, big_w;        // input of conv2d / output of transpose
    std::size_t kh, kw, stride, padding;
};

// Visits every (small, big, weight) triple of a strided 2-D correlation where
// weights are laid out [small_c, big_c, kh, kw] (conv2d) or
// [big_c, small_c, kh, kw] (transpose); `weight_index` picks the layout.
template <typename WeightIndex, typename Body>
void for_each_tap(const ConvGeometry& g, WeightIndex weight_index, Body body) {
    for (std::size_t so = 0; so < g.small_c; ++so) {
        for (std::size_t bc = 0; bc < g.big_c; ++bc) {
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const auto ry = tap_range(ky, g.padding, g.stride, g.small_h, g.big_h);
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const auto rx = tap_range(kx, g.padding, g.stride, g.small_w, g.big_w);
                    if (rx.lo >= rx.hi) {
                        continue;
                    }
                    const std::size_t wi = weight_index(so, bc, ky, kx);
                    for (std::size_t sy = ry.lo; sy < ry.hi; ++sy) {
                        const std::size_t by = sy * g.stride + ky - g.padding;
                        const std::size_t small_row = (so * g.small_h + sy) * g.small_w;
                        const std::size_t big_row = (bc * g.big_h + by) * g.big_w;
                        const std::size_t big_col0 = rx.lo * g.stride + kx - g.padding;
                        body(wi, small_row + rx.lo, big_row + big_col0, rx.hi - rx.lo);
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw DimensionError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    }
    std::vector<T> out(m * n, T{0});
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        T* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = pa[i * k + p];
            const T* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] += av * brow[j];
            }
        }
    }
    auto av = std::make_shared<std::vector<T>>(a.values());
    auto bv = std::make_shared<std::vector<T>>(b.values());
    return Tape<T>::record(BasicTensor<T>({m, n}, std::move(out)), {&a, &b},
                           [av, bv, m, k, n](std::span<const T> g, InputGrads<T>& in) {
                               if (in.wants(0)) {
                                   auto da = in[0];
                                   for (std::size_t i = 0; i < m; ++i) {
                                       for (std::size_t p = 0; p < k; ++p) {
                                           T acc{0};
                                           const T* grow = g.data() + i * n;
                                           const T* brow = bv->data() + p * n;
                                           for (std::size_t j = 0; j < n; ++j) {
                                               acc += grow[j] * brow[j];
                                           }
                                           da[i * k + p] += acc;
                                       }
                                   }
                               }
                               if (in.wants(1)) {
                                   auto db = in[1];
                                   for (std::size_t i = 0; i < m; ++i) {
                                       const T* grow = g.data() + i * n;
                                       for (std::size_t p = 0; p < k; ++p) {
                                           const T aip = (*av)[i * k + p];
                                           T* drow = db.data() + p * n;
                                           for (std::size_t j = 0; j < n; ++j) {
                                               drow[j] += aip * grow[j];
                                           }
                                       }
                                   }
                               }
                           });
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, std::size_t stride,
                      std::size_t padding) {
    require_rank("conv2d", x, 3);
    require_rank("conv2d", w, 4);
    if (stride == 0) {
        throw DimensionError("conv2d: stride must be >= 1");
    }
    if (w.dim(1) != x.dim(0)) {
        throw DimensionError("conv2d: weight " + shape_string(w.shape()) + " does not match input channels of " +
                             shape_string(x.shape()));
    }
    const std::size_t kh = w.dim(2), kw = w.dim(3);
    const std::size_t ph = x.dim(1) + 2 * padding, pw = x.dim(2) + 2 * padding;
    if (kh > ph || kw > pw) {
        throw DimensionError("conv2d: kernel " + shape_string(w.shape()) + " larger than padded input " +
                             shape_string(x.shape()));
    }
    ConvGeometry geo{w.dim(0), (ph - kh) / stride + 1, (pw - kw) / stride + 1,
                     x.dim(0), x.dim(1),           x.dim(2),
                     kh,       kw,                 stride,
                     padding};
    const std::size_t cin = x.dim(0);
    auto widx = [cin, kh, kw](std::size_t o, std::size_t c, std::size_t ky, std::size_t kx) {
        return ((o * cin + c) * kh + ky) * kw + kx;
    };
    std::vector<T> out(geo.small_c * geo.small_h * geo.small_w, T{0});
    const T* px = x.data().data();
    const T* pwt = w.data().data();
    for_each_tap(geo, widx, [&](std::size_t wi, std::size_t so, std::size_t bi, std::size_t len) {
        const T wv = pwt[wi];
        for (std::size_t t = 0; t < len; ++t) {
            out[so + t] += wv * px[bi + t * stride];
        }
    });
    auto xv = std::make_shared<std::vector<T>>(x.values());
    auto wv = std::make_shared<std::vector<T>>(w.values());
    BasicTensor<T> result({geo.small_c, geo.small_h, geo.small_w}, std::move(out));
    return Tape<T>::record(std::move(result), {&x, &w},
                           [xv, wv, geo, widx](std::span<const T> g, InputGrads<T>& in) {
                               const std::size_t s = geo.stride;
                               if (in.wants(0)) {
                                   auto dx = in[0];
                                   for_each_tap(geo, widx,
                                                [&](std::size_t wi, std::size_t so, std::size_t bi, std::size_t len) {
                                                    const T w_ = (*wv)[wi];
                                                    for (std::size_t t = 0; t < len; ++t) {
                                                        dx[bi + t * s] += w_ * g[so + t];
                                                    }
                                                });
                               }
                               if (in.wants(1)) {
                                   auto dw = in[1];
                                   for_each_tap(geo, widx,
                                                [&](std::size_t wi, std::size_t so, std::size_t bi, std::size_t len) {
                                                    T acc{0};
                                                    for (std::size_t t = 0; t < len; ++t) {
                                                        acc += g[so + t] * (*xv)[bi + t * s];
                                                    }
                                                    dw[wi] += acc;
                                                });
                               }
                           });
}

template <typename T>
BasicTensor<T> conv2d_transpose(const BasicTensor<T>& x, const BasicTensor<T>& w, std::size_t stride,
                                std::size_t padding) {
    require_rank("conv2d_transpose", x, 3);
    require_rank("conv2d_transpose", w, 4);
    if (stride == 0) {
        throw DimensionError("conv2d_transpose: stride must be >= 1");
    }
    if (w.dim(0) != x.dim(0)) {
        throw DimensionError("conv2d_transpose: weight " + shape_string(w.shape()) +
                             " does not match input channels of " + shape_string(x.shape()));
    }
    const std::size_t kh = w.dim(2), kw = w.dim(3);
    const long long oh = static_cast<long long>(stride * (x.dim(1) - 1) + kh) - 2 * static_cast<long long>(padding);
    const long long ow = static_cast<long long>(stride * (x.dim(2) - 1) + kw) - 2 * static_cast<long long>(padding);
    if (oh < 1 || ow < 1 || padding >= kh || padding >= kw) {
        throw DimensionError("conv2d_transpose: padding " + std::to_string(padding) + " too large for kernel " +
                             shape_string(w.shape()));
    }
    ConvGeometry geo{x.dim(0),
                     x.dim(1),
                     x.dim(2),
                     w.dim(1),
                     static_cast<std::size_t>(oh),
                     static_cast<std::size_t>(ow),
                     kh,
                     kw,
                     stride,
                     padding};
    const std::size_t cout = w.dim(1);
    auto widx = [cout, kh, kw](std::size_t c, std::size_t o, std::size_t ky, std::size_t kx) {
        return ((c * cout + o) * kh + ky) * kw + kx;
    };
    std::vector<T> out(geo.big_c * geo.big_h * geo.big_w, T{0});
    const T* px = x.data().data();
    const T* pwt = w.data().data();
    for_each_tap(geo, widx, [&](std::size_t wi, std::size_t si, std::size_t bo, std::size_t len) {
        const T wv = pwt[wi];
        for (std::size_t t = 0; t < len; ++t) {
            out[bo + t * stride] += wv * px[si + t];
        }
    });
    auto xv = std::make_shared<std::vector<T>>(x.values());
    auto wv = std::make_shared<std::vector<T>>(w.values());
    BasicTensor<T> result({geo.big_c, geo.big_h, geo.big_w}, std::move(out));
    return Tape<T>::record(std::move(result), {&x, &w},
                           [xv, wv, geo, widx](std::span<const T> g, InputGrads<T>& in) {
                               const std::size_t s = geo.stride;
                               if (in.wants(0)) {
                                   auto dx = in[0];
                                   for_each_tap(geo, widx,
                                                [&](std::size_t wi, std::size_t si, std::size_t bo, std::size_t len) {
                                                    const T w_ = (*wv)[wi];
                                                    for (std::size_t t = 0; t < len; ++t) {
                                                        dx[si + t] += w_ * g[bo + t * s];
                                                    }
                                                });
                               }
                               if (in.wants(1)) {
                                   auto dw = in[1];
                                   for_each_tap(geo, widx,
                                                [&](std::size_t wi, std::size_t si, std::size_t bo, std::size_t len) {
                                                    T acc{0};
                                                    for (std::size_t t = 0; t < len; ++t) {
                                                        acc += (*xv)[si + t] * g[bo + t * s];
                                                    }
                                                    dw[wi] += acc;
                                                });
                               }
                           });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape("add", a, b);
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] + b[i];
    }
    return Tape<T>::record(BasicTensor<T>(a.shape(), std::move(out)), {&a, &b},
                           [](std::span<const T> g, InputGrads<T>& in) {
                               for (std::size_t k = 0; k < 2; ++k) {
                                   if (in.wants(k)) {
                                       auto d = in[k];
                                       for (std::size_t i = 0; i < g.size(); ++i) {
                                           d[i] += g[i];
                                       }
                                   }
                               }
                           });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape("sub", a, b);
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] - b[i];
    }
    return Tape<T>::record(BasicTensor<T>(a.shape(), std::move(out)), {&a, &b},
                           [](std::span<const T> g, InputGrads<T>& in) {
                               if (in.wants(0)) {
                                   auto d = in[0];
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       d[i] += g[i];
                                   }
                               }
                               if (in.wants(1)) {
                                   auto d = in[1];
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       d[i] -= g[i];
                                   }
                               }
                           });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape("mul", a, b);
    std::vector<T> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a[i] * b[i];
    }
    auto av = std::make_shared<std::vector<T>>(a.values());
    auto bv = std::make_shared<std::vector<T>>(b.values());
    return Tape<T>::record(BasicTensor<T>(a.shape(), std::move(out)), {&a, &b},
                           [av, bv](std::span<const T> g, InputGrads<T>& in) {
                               if (in.wants(0)) {
                                   auto d = in[0];
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       d[i] += g[i] * (*bv)[i];
                                   }
                               }
                               if (in.wants(1)) {
                                   auto d = in[1];
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       d[i] += g[i] * (*av)[i];
                                   }
                               }
                           });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] * factor;
    }
    return Tape<T>::record(BasicTensor<T>(x.shape(), std::move(out)), {&x},
                           [factor](std::span<const T> g, InputGrads<T>& in) {
                               auto d = in[0];
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   d[i] += g[i] * factor;
                               }
                           });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] > T{0} ? x[i] : T{0};
    }
    auto xv = std::make_shared<std::vector<T>>(x.values());
    return Tape<T>::record(BasicTensor<T>(x.shape(), std::move(out)), {&x},
                           [xv](std::span<const T> g, InputGrads<T>& in) {
                               auto d = in[0];
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   if ((*xv)[i] > T{0}) {
                                       d[i] += g[i];
                                   }
                               }
                           });
}

template <typename T>
BasicTensor<T> add_bias(const BasicTensor<T>& x, const BasicTensor<T>& b, std::size_t axis) {
    if (axis >= x.rank() || b.size() != x.dim(axis)) {
        throw DimensionError("add_bias: bias " + shape_string(b.shape()) + " does not match axis " +
                             std::to_string(axis) + " of " + shape_string(x.shape()));
    }
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) {
        inner *= x.dim(i);
    }
    const std::size_t n = x.dim(axis);
    const std::size_t outer = x.size() / (inner * n);
    std::vector<T> out(x.values());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t c = 0; c < n; ++c) {
            T* p = out.data() + (o * n + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
                p[i] += b[c];
            }
        }
    }
    return Tape<T>::record(BasicTensor<T>(x.shape(), std::move(out)), {&x, &b},
                           [outer, n, inner](std::span<const T> g, InputGrads<T>& in) {
                               if (in.wants(0)) {
                                   auto d = in[0];
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       d[i] += g[i];
                                   }
                               }
                               if (in.wants(1)) {
                                   auto d = in[1];
                                   for (std::size_t o = 0; o < outer; ++o) {
                                       for (std::size_t c = 0; c < n; ++c) {
                                           const T* p = g.data() + (o * n + c) * inner;
                                           T acc{0};
                                           for (std::size_t i = 0; i < inner; ++i) {
                                               acc += p[i];
                                           }
                                           d[c] += acc;
                                       }
                                   }
                               }
                           });
}

template <typename T>
BasicTensor<T> softmax_lastdim(const BasicTensor<T>& x) {
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.size() / n;
    std::vector<T> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* in = x.data().data() + r * n;
        T* o = out.data() + r * n;
        const T peak = *std::max_element(in, in + n);
        T total{0};
        for (std::size_t j = 0; j < n; ++j) {
            o[j] = std::exp(in[j] - peak);
            total += o[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            o[j] /= total;
        }
    }
    auto yv = std::make_shared<std::vector<T>>(out);
    return Tape<T>::record(BasicTensor<T>(x.shape(), std::move(out)), {&x},
                           [yv, rows, n](std::span<const T> g, InputGrads<T>& in) {
                               auto d = in[0];
                               for (std::size_t r = 0; r < rows; ++r) {
                                   const T* y = yv->data() + r * n;
                                   const T* gr = g.data() + r * n;
                                   T dot{0};
                                   for (std::size_t j = 0; j < n; ++j) {
                                       dot += gr[j] * y[j];
                                   }
                                   for (std::size_t j = 0; j < n; ++j) {
                                       d[r * n + j] += y[j] * (gr[j] - dot);
                                   }
                               }
                           });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
    double total = 0.0;
    for (T v : x.data()) {
        total += static_cast<double>(v);
    }
    return Tape<T>::record(BasicTensor<T>::scalar(static_cast<T>(total)), {&x},
                           [](std::span<const T> g, InputGrads<T>& in) {
                               auto d = in[0];
                               for (auto& v : d) {
                                   v += g[0];
                               }
                           });
}

template <typename T>
BasicTensor<T> mse_loss(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape("mse_loss", a, b);
    const std::size_t n = a.size();
    auto diff = std::make_shared<std::vector<T>>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        (*diff)[i] = a[i] - b[i];
        total += static_cast<double>((*diff)[i]) * static_cast<double>((*diff)[i]);
    }
    const T value = static_cast<T>(total / static_cast<double>(n));
    return Tape<T>::record(BasicTensor<T>::scalar(value), {&a, &b},
                           [diff, n](std::span<const T> g, InputGrads<T>& in) {
                               const T coeff = T{2} * g[0] / static_cast<T>(n);
                               if (in.wants(0)) {
                                   auto d = in[0];
                                   for (std::size_t i = 0; i < n; ++i) {
                                       d[i] += coeff * (*diff)[i];
                                   }
                               }
                               if (in.wants(1)) {
                                   auto d = in[1];
                                   for (std::size_t i = 0; i < n; ++i) {
                                       d[i] -= coeff * (*diff)[i];
                                   }
                               }
                           });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
    if (shape_size(shape) != x.size()) {
        throw DimensionError("reshape: cannot view " + shape_string(x.shape()) + " as " + shape_string(shape));
    }
    return Tape<T>::record(BasicTensor<T>(std::move(shape), x.values()), {&x},
                           [](std::span<const T> g, InputGrads<T>& in) {
                               auto d = in[0];
                               for (std::size_t i = 0; i < g.size(); ++i) {
                                   d[i] += g[i];
                               }
                           });
}

namespace {

// For each output flat index, the matching input flat index under `perm`.
std::vector<std::size_t> permutation_gather(const Shape& in_shape, const std::vector<std::size_t>& perm) {
    const std::size_t rank = in_shape.size();
    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t i = rank - 1; i-- > 0;) {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    Shape out_shape(rank);
    std::vector<std::size_t> strides(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = in_shape[perm[i]];
        strides[i] = in_strides[perm[i]];
    }
    std::vector<std::size_t> gather(shape_size(in_shape));
    std::vector<std::size_t> idx(rank, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < gather.size(); ++o) {
        gather[o] = src;
        for (std::size_t ax = rank; ax-- > 0;) {
            ++idx[ax];
            src += strides[ax];
            if (idx[ax] < out_shape[ax]) {
                break;
            }
            src -= strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    return gather;
}

}  // namespace

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& x, const std::vector<std::size_t>& perm) {
    if (perm.size() != x.rank()) {
        throw DimensionError("transpose: permutation length does not match rank of " + shape_string(x.shape()));
    }
    std::vector<bool> seen(perm.size(), false);
    for (auto p : perm) {
        if (p >= perm.size() || seen[p]) {
            throw DimensionError("transpose: invalid permutation");
        }
        seen[p] = true;
    }
    Shape out_shape(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        out_shape[i] = x.dim(perm[i]);
    }
    auto gather = std::make_shared<std::vector<std::size_t>>(permutation_gather(x.shape(), perm));
    std::vector<T> out(x.size());
    for (std::size_t o = 0; o < out.size(); ++o) {
        out[o] = x[(*gather)[o]];
    }
    return Tape<T>::record(BasicTensor<T>(std::move(out_shape), std::move(out)), {&x},
                           [gather](std::span<const T> g, InputGrads<T>& in) {
                               auto d = in[0];
                               for (std::size_t o = 0; o < g.size(); ++o) {
                                   d[(*gather)[o]] += g[o];
                               }
                           });
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
    if (parts.empty()) {
        throw DimensionError("concat: no inputs");
    }
    const Shape& first = parts.front().shape();
    if (axis >= first.size()) {
        throw DimensionError("concat: axis out of range for " + shape_string(first));
    }
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < first.size(); ++i) {
        inner *= first[i];
    }
    const std::size_t outer = parts.front().size() / (first[axis] * inner);
    Shape out_shape = first;
    out_shape[axis] = 0;
    auto widths = std::make_shared<std::vector<std::size_t>>();
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != first.size()) {
            throw DimensionError("concat: rank mismatch");
        }
        s[axis] = first[axis];
        if (s != first) {
            throw DimensionError("concat: " + shape_string(p.shape()) + " incompatible with " +
                                 shape_string(first) + " along axis " + std::to_string(axis));
        }
        out_shape[axis] += p.dim(axis);
        widths->push_back(p.dim(axis) * inner);
    }
    const std::size_t total_width = out_shape[axis] * inner;
    std::vector<T> out(outer * total_width);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t w = (*widths)[k];
        const T* src = parts[k].data().data();
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy(src + o * w, src + (o + 1) * w, out.data() + o * total_width + offset);
        }
        offset += w;
    }
    std::vector<const BasicTensor<T>*> inputs;
    for (const auto& p : parts) {
        inputs.push_back(&p);
    }
    return Tape<T>::record(BasicTensor<T>(std::move(out_shape), std::move(out)), inputs,
                           [widths, outer, total_width](std::span<const T> g, InputGrads<T>& in) {
                               std::size_t off = 0;
                               for (std::size_t k = 0; k < widths->size(); ++k) {
                                   const std::size_t w = (*widths)[k];
                                   if (in.wants(k)) {
                                       auto d = in[k];
                                       for (std::size_t o = 0; o < outer; ++o) {
                                           for (std::size_t i = 0; i < w; ++i) {
                                               d[o * w + i] += g[o * total_width + off + i];
                                           }
                                       }
                                   }
                                   off += w;
                               }
                           });
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= x.rank() || length == 0 || start + length > x.dim(axis)) {
        throw DimensionError("slice: range [" + std::to_string(start) + "," + std::to_string(start + length) +
                             ") outside axis " + std::to_string(axis) + " of " + shape_string(x.shape()));
    }
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) {
        inner *= x.dim(i);
    }
    const std::size_t full = x.dim(axis) * inner;
    const std::size_t outer = x.size() / full;
    const std::size_t w = length * inner;
    const std::size_t off = start * inner;
    std::vector<T> out(outer * w);
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy(x.data().data() + o * full + off, x.data().data() + o * full + off + w, out.data() + o * w);
    }
    Shape out_shape = x.shape();
    out_shape[axis] = length;
    return Tape<T>::record(BasicTensor<T>(std::move(out_shape), std::move(out)), {&x},
                           [outer, full, off, w](std::span<const T> g, InputGrads<T>& in) {
                               auto d = in[0];
                               for (std::size_t o = 0; o < outer; ++o) {
                                   for (std::size_t i = 0; i < w; ++i) {
                                       d[o * full + off + i] += g[o * w + i];
                                   }
                               }
                           });
}

#define TRIFUSION_INSTANTIATE_OPS(T)                                                                   \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                      \
    template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t,          \
                                   std::size_t);                                                       \
    template BasicTensor<T> conv2d_transpose(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t, \
                                             std::size_t);                                             \
    template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                         \
    template BasicTensor<T> scale(const BasicTensor<T>&, T);                                           \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                               \
    template BasicTensor<T> add_bias(const BasicTensor<T>&, const BasicTensor<T>&, std::size_t);       \
    template BasicTensor<T> softmax_lastdim(const BasicTensor<T>&);                                    \
    template BasicTensor<T> sum(const BasicTensor<T>&);                                                \
    template BasicTensor<T> mse_loss(const BasicTensor<T>&, const BasicTensor<T>&);                    \
    template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                     \
    template BasicTensor<T> transpose(const BasicTensor<T>&, const std::vector<std::size_t>&);         \
    template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, std::size_t);                   \
    template BasicTensor<T> slice(const BasicTensor<T>&, std::size_t, std::size_t, std::size_t);

TRIFUSION_INSTANTIATE_OPS(float)
TRIFUSION_INSTANTIATE_OPS(double)

#undef TRIFUSION_INSTANTIATE_OPS

}  // namespace trifusion

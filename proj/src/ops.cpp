#include "pf/ops.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "pf/errors.hpp"

namespace pf {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

namespace {

bool wants_grad(const Tensor& a) { return grad_recording_enabled() && a.requires_grad(); }
bool wants_grad(const Tensor& a, const Tensor& b) {
    return grad_recording_enabled() && (a.requires_grad() || b.requires_grad());
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()) + " differ");
}

void check_2d(const Tensor& a, const char* op) {
    if (a.ndim() != 2)
        throw DimensionError(std::string(op) + ": expected 2-D tensor, got " +
                             shape_str(a.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    if (!wants_grad(a, b)) return Tensor::from_data(a.shape(), std::move(out));
    auto pa = a.impl(), pb = b.impl();
    return Tensor::make(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& n) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] += n.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    if (!wants_grad(a, b)) return Tensor::from_data(a.shape(), std::move(out));
    auto pa = a.impl(), pb = b.impl();
    return Tensor::make(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& n) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    if (!wants_grad(a, b)) return Tensor::from_data(a.shape(), std::move(out));
    auto pa = a.impl(), pb = b.impl();
    return Tensor::make(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& n) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                pa->grad[i] += n.grad[i] * pb->data[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                pb->grad[i] += n.grad[i] * pa->data[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
    if (!wants_grad(a)) return Tensor::from_data(a.shape(), std::move(out));
    auto pa = a.impl();
    return Tensor::make(a.shape(), std::move(out), {a}, [pa, s](TensorImpl& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += s * n.grad[i];
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + s;
    if (!wants_grad(a)) return Tensor::from_data(a.shape(), std::move(out));
    auto pa = a.impl();
    return Tensor::make(a.shape(), std::move(out), {a}, [pa](TensorImpl& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
    });
}

Tensor sin_op(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sin(a.data()[i]);
    if (!wants_grad(a)) return Tensor::from_data(a.shape(), std::move(out));
    auto pa = a.impl();
    return Tensor::make(a.shape(), std::move(out), {a}, [pa](TensorImpl& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            pa->grad[i] += n.grad[i] * std::cos(pa->data[i]);
    });
}

Tensor cos_op(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::cos(a.data()[i]);
    if (!wants_grad(a)) return Tensor::from_data(a.shape(), std::move(out));
    auto pa = a.impl();
    return Tensor::make(a.shape(), std::move(out), {a}, [pa](TensorImpl& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            pa->grad[i] -= n.grad[i] * std::sin(pa->data[i]);
    });
}

Tensor silu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.data()[i];
        out[i] = x / (1.0 + std::exp(-x));
    }
    if (!wants_grad(a)) return Tensor::from_data(a.shape(), std::move(out));
    auto pa = a.impl();
    return Tensor::make(a.shape(), std::move(out), {a}, [pa](TensorImpl& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            const double x = pa->data[i];
            const double sig = 1.0 / (1.0 + std::exp(-x));
            pa->grad[i] += n.grad[i] * (sig + x * sig * (1.0 - sig));
        }
    });
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
    std::size_t prod = 1;
    for (auto s : shape) prod *= s;
    if (prod != a.size())
        throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                             shape_str(shape));
    std::vector<double> out(a.data().begin(), a.data().end());
    if (!wants_grad(a)) return Tensor::from_data(std::move(shape), std::move(out));
    auto pa = a.impl();
    return Tensor::make(std::move(shape), std::move(out), {a}, [pa](TensorImpl& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
    });
}

Tensor transpose2d(const Tensor& a) {
    check_2d(a, "transpose2d");
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
    if (!wants_grad(a)) return Tensor::from_data({c, r}, std::move(out));
    auto pa = a.impl();
    return Tensor::make({c, r}, std::move(out), {a}, [pa, r, c](TensorImpl& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) pa->grad[i * c + j] += n.grad[j * r + i];
    });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    check_2d(a, "concat_rows");
    check_2d(b, "concat_rows");
    if (a.cols() != b.cols())
        throw DimensionError("concat_rows: column counts differ, " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    out.insert(out.end(), a.data().begin(), a.data().end());
    out.insert(out.end(), b.data().begin(), b.data().end());
    std::vector<std::size_t> shape{a.rows() + b.rows(), a.cols()};
    if (!wants_grad(a, b)) return Tensor::from_data(std::move(shape), std::move(out));
    auto pa = a.impl(), pb = b.impl();
    const std::size_t na = a.size();
    return Tensor::make(std::move(shape), std::move(out), {a, b}, [pa, pb, na](TensorImpl& n) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < na; ++i) pa->grad[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < pb->data.size(); ++i) pb->grad[i] += n.grad[na + i];
        }
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    check_2d(a, "concat_cols");
    check_2d(b, "concat_cols");
    if (a.rows() != b.rows())
        throw DimensionError("concat_cols: row counts differ, " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
    std::vector<double> out(r * (ca + cb));
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = a.data()[i * ca + j];
        for (std::size_t j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = b.data()[i * cb + j];
    }
    if (!wants_grad(a, b)) return Tensor::from_data({r, ca + cb}, std::move(out));
    auto pa = a.impl(), pb = b.impl();
    return Tensor::make({r, ca + cb}, std::move(out), {a, b}, [pa, pb, r, ca, cb](TensorImpl& n) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < ca; ++j)
                    pa->grad[i * ca + j] += n.grad[i * (ca + cb) + j];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < cb; ++j)
                    pb->grad[i * cb + j] += n.grad[i * (ca + cb) + ca + j];
        }
    });
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
    check_2d(a, "slice_rows");
    if (r0 >= r1 || r1 > a.rows())
        throw DimensionError("slice_rows: range [" + std::to_string(r0) + "," +
                             std::to_string(r1) + ") invalid for " + shape_str(a.shape()));
    const std::size_t c = a.cols();
    std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(r0 * c),
                            a.data().begin() + static_cast<std::ptrdiff_t>(r1 * c));
    if (!wants_grad(a)) return Tensor::from_data({r1 - r0, c}, std::move(out));
    auto pa = a.impl();
    return Tensor::make({r1 - r0, c}, std::move(out), {a}, [pa, r0, c](TensorImpl& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[r0 * c + i] += n.grad[i];
    });
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    check_2d(a, "slice_cols");
    if (c0 >= c1 || c1 > a.cols())
        throw DimensionError("slice_cols: range [" + std::to_string(c0) + "," +
                             std::to_string(c1) + ") invalid for " + shape_str(a.shape()));
    const std::size_t r = a.rows(), c = a.cols(), w = c1 - c0;
    std::vector<double> out(r * w);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.data()[i * c + c0 + j];
    if (!wants_grad(a)) return Tensor::from_data({r, w}, std::move(out));
    auto pa = a.impl();
    return Tensor::make({r, w}, std::move(out), {a}, [pa, r, c, c0, w](TensorImpl& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) pa->grad[i * c + c0 + j] += n.grad[i * w + j];
    });
}

Tensor pad_cols(const Tensor& a, std::size_t new_cols) {
    check_2d(a, "pad_cols");
    const std::size_t r = a.rows(), c = a.cols();
    if (new_cols < c)
        throw DimensionError("pad_cols: target " + std::to_string(new_cols) + " smaller than " +
                             shape_str(a.shape()));
    std::vector<double> out(r * new_cols, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * new_cols + j] = a.data()[i * c + j];
    if (!wants_grad(a)) return Tensor::from_data({r, new_cols}, std::move(out));
    auto pa = a.impl();
    return Tensor::make({r, new_cols}, std::move(out), {a}, [pa, r, c, new_cols](TensorImpl& n) {
        pa->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) pa->grad[i * c + j] += n.grad[i * new_cols + j];
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()));
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n);
    {
        CMapMat A(a.data().data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k));
        CMapMat B(b.data().data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
        MapMat C(out.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        C.noalias() = A * B;
    }
    if (!wants_grad(a, b)) return Tensor::from_data({m, n}, std::move(out));
    auto pa = a.impl(), pb = b.impl();
    return Tensor::make({m, n}, std::move(out), {a, b}, [pa, pb, m, k, n](TensorImpl& node) {
        CMapMat G(node.grad.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        if (pa->requires_grad) {
            pa->ensure_grad();
            CMapMat B(pb->data.data(), static_cast<Eigen::Index>(k),
                      static_cast<Eigen::Index>(n));
            MapMat dA(pa->grad.data(), static_cast<Eigen::Index>(m),
                      static_cast<Eigen::Index>(k));
            dA.noalias() += G * B.transpose();
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            CMapMat A(pa->data.data(), static_cast<Eigen::Index>(m),
                      static_cast<Eigen::Index>(k));
            MapMat dB(pb->grad.data(), static_cast<Eigen::Index>(k),
                      static_cast<Eigen::Index>(n));
            dB.noalias() += A.transpose() * G;
        }
    });
}

Tensor add_row_bias(const Tensor& x, const Tensor& b) {
    check_2d(x, "add_row_bias");
    if (b.ndim() != 1 || b.size() != x.cols())
        throw DimensionError("add_row_bias: bias " + shape_str(b.shape()) + " does not match " +
                             shape_str(x.shape()));
    const std::size_t r = x.rows(), c = x.cols();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.data()[i * c + j] + b.data()[j];
    if (!wants_grad(x, b)) return Tensor::from_data(x.shape(), std::move(out));
    auto px = x.impl(), pb = b.impl();
    return Tensor::make(x.shape(), std::move(out), {x, b}, [px, pb, r, c](TensorImpl& n) {
        if (px->requires_grad) {
            px->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) px->grad[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) pb->grad[j] += n.grad[i * c + j];
        }
    });
}

Tensor add_channel_bias(const Tensor& x, const Tensor& b) {
    check_2d(x, "add_channel_bias");
    if (b.ndim() != 1 || b.size() != x.rows())
        throw DimensionError("add_channel_bias: bias " + shape_str(b.shape()) +
                             " does not match " + shape_str(x.shape()));
    const std::size_t r = x.rows(), c = x.cols();
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.data()[i * c + j] + b.data()[i];
    if (!wants_grad(x, b)) return Tensor::from_data(x.shape(), std::move(out));
    auto px = x.impl(), pb = b.impl();
    return Tensor::make(x.shape(), std::move(out), {x, b}, [px, pb, r, c](TensorImpl& n) {
        if (px->requires_grad) {
            px->ensure_grad();
            for (std::size_t i = 0; i < n.grad.size(); ++i) px->grad[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) pb->grad[i] += n.grad[i * c + j];
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    if (!wants_grad(a)) return Tensor::scalar(s);
    auto pa = a.impl();
    return Tensor::make({1}, {s}, {a}, [pa](TensorImpl& n) {
        pa->ensure_grad();
        for (auto& g : pa->grad) g += n.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw PreconditionError("mean of empty tensor");
    double s = 0.0;
    for (double v : a.data()) s += v;
    const double inv = 1.0 / static_cast<double>(a.size());
    if (!wants_grad(a)) return Tensor::scalar(s * inv);
    auto pa = a.impl();
    return Tensor::make({1}, {s * inv}, {a}, [pa, inv](TensorImpl& n) {
        pa->ensure_grad();
        for (auto& g : pa->grad) g += n.grad[0] * inv;
    });
}

Tensor softmax_rows(const Tensor& a) {
    check_2d(a, "softmax_rows");
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < r; ++i) {
        double mx = a.data()[i * c];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, a.data()[i * c + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = std::exp(a.data()[i * c + j] - mx);
            z += out[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
    }
    if (!wants_grad(a)) return Tensor::from_data(a.shape(), std::move(out));
    auto pa = a.impl();
    std::vector<double> y = out;  // softmax values needed in backward
    return Tensor::make(a.shape(), std::move(out), {a},
                        [pa, r, c, y = std::move(y)](TensorImpl& n) {
                            pa->ensure_grad();
                            for (std::size_t i = 0; i < r; ++i) {
                                double dot = 0.0;
                                for (std::size_t j = 0; j < c; ++j)
                                    dot += n.grad[i * c + j] * y[i * c + j];
                                for (std::size_t j = 0; j < c; ++j)
                                    pa->grad[i * c + j] +=
                                        y[i * c + j] * (n.grad[i * c + j] - dot);
                            }
                        });
}

Tensor conv1d(const Tensor& x, const Tensor& w, int stride, int pad) {
    check_2d(x, "conv1d");
    if (w.ndim() != 3)
        throw DimensionError("conv1d: weight must be [out x in x k], got " + shape_str(w.shape()));
    if (stride != 1 && stride != 2)
        throw ConfigError("conv1d: stride must be 1 or 2, got " + std::to_string(stride));
    if (pad < 0) throw ConfigError("conv1d: negative padding");
    const std::size_t cin = x.rows(), len = x.cols();
    const std::size_t cout = w.shape()[0], win = w.shape()[1], k = w.shape()[2];
    if (win != cin)
        throw DimensionError("conv1d: input channels " + shape_str(x.shape()) +
                             " do not match weight " + shape_str(w.shape()));
    const std::ptrdiff_t numer =
        static_cast<std::ptrdiff_t>(len) + 2 * pad - static_cast<std::ptrdiff_t>(k);
    if (numer < 0)
        throw DimensionError("conv1d: kernel " + std::to_string(k) + " longer than padded input " +
                             std::to_string(len + 2 * pad));
    const std::size_t lout = static_cast<std::size_t>(numer / stride) + 1;

    // im2col: col[(cin*k) x lout], then one GEMM against w viewed [cout x cin*k].
    std::vector<double> col(cin * k * lout, 0.0);
    for (std::size_t ci = 0; ci < cin; ++ci) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            double* dst = col.data() + (ci * k + kk) * lout;
            for (std::size_t l = 0; l < lout; ++l) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l) * stride +
                                           static_cast<std::ptrdiff_t>(kk) - pad;
                if (src >= 0 && src < static_cast<std::ptrdiff_t>(len))
                    dst[l] = x.data()[ci * len + static_cast<std::size_t>(src)];
            }
        }
    }
    std::vector<double> out(cout * lout);
    {
        CMapMat W(w.data().data(), static_cast<Eigen::Index>(cout),
                  static_cast<Eigen::Index>(cin * k));
        CMapMat C(col.data(), static_cast<Eigen::Index>(cin * k),
                  static_cast<Eigen::Index>(lout));
        MapMat O(out.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(lout));
        O.noalias() = W * C;
    }
    if (!wants_grad(x, w)) return Tensor::from_data({cout, lout}, std::move(out));
    auto px = x.impl(), pw = w.impl();
    return Tensor::make(
        {cout, lout}, std::move(out), {x, w},
        [px, pw, col = std::move(col), cin, len, cout, k, lout, stride, pad](TensorImpl& n) {
            CMapMat G(n.grad.data(), static_cast<Eigen::Index>(cout),
                      static_cast<Eigen::Index>(lout));
            if (pw->requires_grad) {
                pw->ensure_grad();
                CMapMat C(col.data(), static_cast<Eigen::Index>(cin * k),
                          static_cast<Eigen::Index>(lout));
                MapMat dW(pw->grad.data(), static_cast<Eigen::Index>(cout),
                          static_cast<Eigen::Index>(cin * k));
                dW.noalias() += G * C.transpose();
            }
            if (px->requires_grad) {
                px->ensure_grad();
                RowMat dcol(static_cast<Eigen::Index>(cin * k), static_cast<Eigen::Index>(lout));
                CMapMat W(pw->data.data(), static_cast<Eigen::Index>(cout),
                          static_cast<Eigen::Index>(cin * k));
                dcol.noalias() = W.transpose() * G;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        for (std::size_t l = 0; l < lout; ++l) {
                            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l) * stride +
                                                       static_cast<std::ptrdiff_t>(kk) - pad;
                            if (src >= 0 && src < static_cast<std::ptrdiff_t>(len))
                                px->grad[ci * len + static_cast<std::size_t>(src)] +=
                                    dcol(static_cast<Eigen::Index>(ci * k + kk),
                                         static_cast<Eigen::Index>(l));
                        }
                    }
                }
            }
        });
}

Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta,
                  double eps) {
    check_2d(x, "group_norm");
    const std::size_t c = x.rows(), l = x.cols();
    if (groups == 0 || c % groups != 0)
        throw ConfigError("group_norm: " + std::to_string(groups) +
                          " groups do not divide " + std::to_string(c) + " channels");
    if (gamma.size() != c || beta.size() != c)
        throw DimensionError("group_norm: affine params must have one entry per channel");
    const std::size_t gs = c / groups;         // channels per group
    const std::size_t n = gs * l;              // elements per group
    std::vector<double> mu(groups), var(groups);
    std::vector<double> out(x.size());
    for (std::size_t g = 0; g < groups; ++g) {
        double s = 0.0;
        for (std::size_t ci = g * gs; ci < (g + 1) * gs; ++ci)
            for (std::size_t j = 0; j < l; ++j) s += x.data()[ci * l + j];
        mu[g] = s / static_cast<double>(n);
        double v = 0.0;
        for (std::size_t ci = g * gs; ci < (g + 1) * gs; ++ci)
            for (std::size_t j = 0; j < l; ++j) {
                const double d = x.data()[ci * l + j] - mu[g];
                v += d * d;
            }
        var[g] = v / static_cast<double>(n);
        const double inv_sd = 1.0 / std::sqrt(var[g] + eps);
        for (std::size_t ci = g * gs; ci < (g + 1) * gs; ++ci)
            for (std::size_t j = 0; j < l; ++j)
                out[ci * l + j] =
                    gamma.data()[ci] * (x.data()[ci * l + j] - mu[g]) * inv_sd + beta.data()[ci];
    }
    if (!wants_grad(x, gamma) && !wants_grad(beta))
        return Tensor::from_data(x.shape(), std::move(out));
    auto px = x.impl(), pg = gamma.impl(), pbt = beta.impl();
    return Tensor::make(
        x.shape(), std::move(out), {x, gamma, beta},
        [px, pg, pbt, groups, gs, l, n, eps, mu = std::move(mu),
         var = std::move(var)](TensorImpl& node) {
            for (std::size_t g = 0; g < groups; ++g) {
                const double inv_sd = 1.0 / std::sqrt(var[g] + eps);
                // dxhat, plus the two reduction terms of the standard formula
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (std::size_t ci = g * gs; ci < (g + 1) * gs; ++ci) {
                    for (std::size_t j = 0; j < l; ++j) {
                        const std::size_t idx = ci * l + j;
                        const double xhat = (px->data[idx] - mu[g]) * inv_sd;
                        const double dxh = node.grad[idx] * pg->data[ci];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xhat;
                    }
                }
                for (std::size_t ci = g * gs; ci < (g + 1) * gs; ++ci) {
                    for (std::size_t j = 0; j < l; ++j) {
                        const std::size_t idx = ci * l + j;
                        const double xhat = (px->data[idx] - mu[g]) * inv_sd;
                        const double dxh = node.grad[idx] * pg->data[ci];
                        if (px->requires_grad) {
                            px->ensure_grad();
                            px->grad[idx] +=
                                inv_sd * (dxh - (sum_dxhat + xhat * sum_dxhat_xhat) /
                                                    static_cast<double>(n));
                        }
                        if (pg->requires_grad) {
                            pg->ensure_grad();
                            pg->grad[ci] += node.grad[idx] * xhat;
                        }
                        if (pbt->requires_grad) {
                            pbt->ensure_grad();
                            pbt->grad[ci] += node.grad[idx];
                        }
                    }
                }
            }
        });
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0)
        throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (rate == 0.0) return x;
    const double keep = 1.0 - rate;
    std::vector<double> mask(x.size());
    for (auto& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
    if (!wants_grad(x)) return Tensor::from_data(x.shape(), std::move(out));
    auto px = x.impl();
    return Tensor::make(x.shape(), std::move(out), {x},
                        [px, mask = std::move(mask)](TensorImpl& n) {
                            px->ensure_grad();
                            for (std::size_t i = 0; i < n.grad.size(); ++i)
                                px->grad[i] += n.grad[i] * mask[i];
                        });
}

Tensor upsample_nearest2(const Tensor& x) {
    check_2d(x, "upsample_nearest2");
    const std::size_t c = x.rows(), l = x.cols();
    std::vector<double> out(c * l * 2);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < l; ++j) {
            out[i * 2 * l + 2 * j] = x.data()[i * l + j];
            out[i * 2 * l + 2 * j + 1] = x.data()[i * l + j];
        }
    if (!wants_grad(x)) return Tensor::from_data({c, 2 * l}, std::move(out));
    auto px = x.impl();
    return Tensor::make({c, 2 * l}, std::move(out), {x}, [px, c, l](TensorImpl& n) {
        px->ensure_grad();
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < l; ++j)
                px->grad[i * l + j] += n.grad[i * 2 * l + 2 * j] + n.grad[i * 2 * l + 2 * j + 1];
    });
}

Tensor downsample_nearest2(const Tensor& x) {
    check_2d(x, "downsample_nearest2");
    const std::size_t c = x.rows(), l = x.cols();
    const std::size_t lo = (l + 1) / 2;
    std::vector<double> out(c * lo);
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < lo; ++j) out[i * lo + j] = x.data()[i * l + 2 * j];
    if (!wants_grad(x)) return Tensor::from_data({c, lo}, std::move(out));
    auto px = x.impl();
    return Tensor::make({c, lo}, std::move(out), {x}, [px, c, l, lo](TensorImpl& n) {
        px->ensure_grad();
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < lo; ++j) px->grad[i * l + 2 * j] += n.grad[i * lo + j];
    });
}

Tensor sinusoid_features(const Tensor& x, std::size_t d, double max_period) {
    check_2d(x, "sinusoid_features");
    if (d == 0 || d % 2 != 0)
        throw ConfigError("sinusoid_features: dimension must be even and positive, got " +
                          std::to_string(d));
    const std::size_t r = x.rows(), c = x.cols(), half = d / 2;
    std::vector<double> freqs(half);
    for (std::size_t i = 0; i < half; ++i)
        freqs[i] = std::pow(max_period, -2.0 * static_cast<double>(i) / static_cast<double>(d));
    std::vector<double> out(r * c * d);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const double v = x.data()[i * c + j];
            double* blk = out.data() + (i * c + j) * d;
            for (std::size_t f = 0; f < half; ++f) {
                blk[f] = std::sin(v * freqs[f]);
                blk[half + f] = std::cos(v * freqs[f]);
            }
        }
    }
    if (!wants_grad(x)) return Tensor::from_data({r, c * d}, std::move(out));
    auto px = x.impl();
    return Tensor::make({r, c * d}, std::move(out), {x},
                        [px, r, c, d, half, freqs = std::move(freqs)](TensorImpl& n) {
                            px->ensure_grad();
                            for (std::size_t i = 0; i < r; ++i) {
                                for (std::size_t j = 0; j < c; ++j) {
                                    const double v = px->data[i * c + j];
                                    const double* gblk = n.grad.data() + (i * c + j) * d;
                                    double acc = 0.0;
                                    for (std::size_t f = 0; f < half; ++f) {
                                        acc += gblk[f] * freqs[f] * std::cos(v * freqs[f]);
                                        acc -= gblk[half + f] * freqs[f] * std::sin(v * freqs[f]);
                                    }
                                    px->grad[i * c + j] += acc;
                                }
                            }
                        });
}

Tensor self_attention(const Tensor& x, std::size_t num_heads, const Tensor& wq, const Tensor& wk,
                      const Tensor& wv, const Tensor& wo) {
    check_2d(x, "self_attention");
    const std::size_t d = x.cols();
    if (num_heads == 0 || d % num_heads != 0)
        throw ConfigError("self_attention: feature dim " + std::to_string(d) +
                          " not divisible by " + std::to_string(num_heads) + " heads");
    const std::size_t dh = d / num_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor q = matmul(x, wq);
    Tensor k = matmul(x, wk);
    Tensor v = matmul(x, wv);
    Tensor heads_out;
    for (std::size_t h = 0; h < num_heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul(qh, transpose2d(kh)), inv_sqrt);
        Tensor attn = softmax_rows(scores);
        Tensor oh = matmul(attn, vh);
        heads_out = h == 0 ? oh : concat_cols(heads_out, oh);
    }
    return matmul(heads_out, wo);
}

Tensor self_attention(const Tensor& x, std::size_t num_heads, const ParameterSet& w_qkv) {
    return self_attention(x, num_heads, w_qkv.at("wq"), w_qkv.at("wk"), w_qkv.at("wv"),
                          w_qkv.at("wo"));
}

}  // namespace pf

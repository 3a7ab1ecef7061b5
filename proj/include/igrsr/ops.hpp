#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "igrsr/tensor.hpp"

namespace igrsr {

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch");
}

inline void check_2d(const Tensor& t, const char* op) {
    if (t.ndim() != 2) throw DimensionError(std::string(op) + ": expected a 2-d tensor");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return detail::make_result(a.shape(), std::move(out), {a, b}, [](TensorNode* self) {
        for (const auto& parent : self->parents) {
            if (!parent->requires_grad) continue;
            parent->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i)
                parent->grad[i] += self->grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return detail::make_result(a.shape(), std::move(out), {a, b}, [](TensorNode* self) {
        auto& pa = self->parents[0];
        auto& pb = self->parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += self->grad[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) pb->grad[i] -= self->grad[i];
        }
    });
}

// Elementwise product. Also the dropout/intent-mask application: multiply by a
// 0/1 tensor that requires no grad.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return detail::make_result(a.shape(), std::move(out), {a, b}, [](TensorNode* self) {
        auto& pa = self->parents[0];
        auto& pb = self->parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i)
                pa->grad[i] += self->grad[i] * pb->data[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i)
                pb->grad[i] += self->grad[i] * pa->data[i];
        }
    });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "div");
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
    return detail::make_result(a.shape(), std::move(out), {a, b}, [](TensorNode* self) {
        auto& pa = self->parents[0];
        auto& pb = self->parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i)
                pa->grad[i] += self->grad[i] / pb->data[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i)
                pb->grad[i] -= self->grad[i] * pa->data[i] / (pb->data[i] * pb->data[i]);
        }
    });
}

inline Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    return detail::make_result(a.shape(), std::move(out), {a}, [](TensorNode* self) {
        auto& pa = self->parents[0];
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += self->grad[i];
    });
}

inline Tensor mul_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    return detail::make_result(a.shape(), std::move(out), {a}, [c](TensorNode* self) {
        auto& pa = self->parents[0];
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i) pa->grad[i] += c * self->grad[i];
    });
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    return detail::make_result(a.shape(), std::move(out), {a}, [](TensorNode* self) {
        auto& pa = self->parents[0];
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i)
            if (pa->data[i] > 0.0) pa->grad[i] += self->grad[i];
    });
}

// Exact gelu: x * Phi(x); derivative Phi(x) + x * phi(x).
inline Tensor gelu(const Tensor& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.data()[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    }
    return detail::make_result(a.shape(), std::move(out), {a}, [=](TensorNode* self) {
        auto& pa = self->parents[0];
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i) {
            const double x = pa->data[i];
            const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
            pa->grad[i] += self->grad[i] * (cdf + x * pdf);
        }
    });
}

// 1/sqrt(x), elementwise. Inputs must be strictly positive; this is the
// numeric guard behind cosine similarity and row normalization.
inline Tensor rsqrt(const Tensor& a) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (a.data()[i] <= 0.0) throw NumericError("rsqrt: input must be positive");
        out[i] = 1.0 / std::sqrt(a.data()[i]);
    }
    return detail::make_result(a.shape(), std::move(out), {a}, [](TensorNode* self) {
        auto& pa = self->parents[0];
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i) {
            const double y = self->data[i];
            pa->grad[i] += self->grad[i] * (-0.5 * y * y * y);
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.data()[i];
    return detail::make_result({1}, {s}, {a}, [](TensorNode* self) {
        auto& pa = self->parents[0];
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (auto& g : pa->grad) g += self->grad[0];
    });
}

inline Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw DimensionError("mean: empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.data()[i];
    const double inv_n = 1.0 / static_cast<double>(a.numel());
    return detail::make_result({1}, {s * inv_n}, {a}, [inv_n](TensorNode* self) {
        auto& pa = self->parents[0];
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (auto& g : pa->grad) g += self->grad[0] * inv_n;
    });
}

inline Tensor row_sums(const Tensor& a) {
    detail::check_2d(a, "row_sums");
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i] += a.data()[i * m + j];
    return detail::make_result({n}, std::move(out), {a}, [n, m](TensorNode* self) {
        auto& pa = self->parents[0];
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) pa->grad[i * m + j] += self->grad[i];
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::check_2d(a, "matmul");
    detail::check_2d(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) throw DimensionError("matmul: inner dimensions disagree");

    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a.data()[i * k + p];
            const double* brow = b.data() + p * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }

    return detail::make_result({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode* self) {
        auto& pa = self->parents[0];
        auto& pb = self->parents[1];
        if (pa->requires_grad) {
            // dL/da = g . b^T
            pa->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double g = self->grad[i * n + j];
                    const double* brow = pb->data.data() + j;  // column j
                    for (std::size_t p = 0; p < k; ++p)
                        pa->grad[i * k + p] += g * brow[p * n];
                }
        }
        if (pb->requires_grad) {
            // dL/db = a^T . g
            pb->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double av = pa->data[i * k + p];
                    const double* grow = self->grad.data() + i * n;
                    double* brow = pb->grad.data() + p * n;
                    for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
                }
        }
    });
}

inline Tensor transpose(const Tensor& a) {
    detail::check_2d(a, "transpose");
    const std::size_t n = a.rows(), m = a.cols();
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a.data()[i * m + j];
    return detail::make_result({m, n}, std::move(out), {a}, [n, m](TensorNode* self) {
        auto& pa = self->parents[0];
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) pa->grad[i * m + j] += self->grad[j * n + i];
    });
}

// ---------------------------------------------------------------------------
// Row/column assembly
// ---------------------------------------------------------------------------

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t m = parts[0].ndim() == 1 ? parts[0].shape()[0] : parts[0].cols();
    std::size_t total_rows = 0;
    for (const auto& p : parts) {
        const std::size_t pm = p.ndim() == 1 ? p.shape()[0] : p.cols();
        if (pm != m) throw DimensionError("concat_rows: column counts differ");
        total_rows += p.ndim() == 1 ? 1 : p.rows();
    }
    std::vector<double> out;
    out.reserve(total_rows * m);
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    return detail::make_result({total_rows, m}, std::move(out), parts, [m](TensorNode* self) {
        std::size_t offset = 0;
        for (auto& parent : self->parents) {
            const std::size_t len = parent->numel();
            if (parent->requires_grad) {
                parent->ensure_grad();
                for (std::size_t i = 0; i < len; ++i)
                    parent->grad[i] += self->grad[offset + i];
            }
            offset += len;
        }
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t n = parts[0].rows();
    std::size_t total_cols = 0;
    for (const auto& p : parts) {
        detail::check_2d(p, "concat_cols");
        if (p.rows() != n) throw DimensionError("concat_cols: row counts differ");
        total_cols += p.cols();
    }
    std::vector<double> out(n * total_cols);
    std::size_t col_offset = 0;
    for (const auto& p : parts) {
        const std::size_t pc = p.cols();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < pc; ++j)
                out[i * total_cols + col_offset + j] = p.data()[i * pc + j];
        col_offset += pc;
    }
    return detail::make_result({n, total_cols}, std::move(out), parts,
                               [n, total_cols](TensorNode* self) {
        std::size_t col_offset = 0;
        for (auto& parent : self->parents) {
            const std::size_t pc = parent->shape[1];
            if (parent->requires_grad) {
                parent->ensure_grad();
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < pc; ++j)
                        parent->grad[i * pc + j] +=
                            self->grad[i * total_cols + col_offset + j];
            }
            col_offset += pc;
        }
    });
}

inline Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
    detail::check_2d(a, "slice_rows");
    const std::size_t n = a.rows(), m = a.cols();
    if (begin + count > n) throw IndexError("slice_rows: range out of bounds");
    std::vector<double> out(a.data() + begin * m, a.data() + (begin + count) * m);
    return detail::make_result({count, m}, std::move(out), {a}, [begin, m](TensorNode* self) {
        auto& pa = self->parents[0];
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (std::size_t i = 0; i < self->grad.size(); ++i)
            pa->grad[begin * m + i] += self->grad[i];
    });
}

// x[i, :] + v, broadcast over rows. v has length cols(x).
inline Tensor add_row_vector(const Tensor& x, const Tensor& v) {
    detail::check_2d(x, "add_row_vector");
    const std::size_t n = x.rows(), m = x.cols();
    if (v.numel() != m) throw DimensionError("add_row_vector: vector length mismatch");
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x.data()[i * m + j] + v.data()[j];
    return detail::make_result({n, m}, std::move(out), {x, v}, [n, m](TensorNode* self) {
        auto& px = self->parents[0];
        auto& pv = self->parents[1];
        if (px->requires_grad) {
            px->ensure_grad();
            for (std::size_t i = 0; i < self->grad.size(); ++i) px->grad[i] += self->grad[i];
        }
        if (pv->requires_grad) {
            pv->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) pv->grad[j] += self->grad[i * m + j];
        }
    });
}

// x[i, :] * s[i], row-wise scaling.
inline Tensor scale_rows(const Tensor& x, const Tensor& s) {
    detail::check_2d(x, "scale_rows");
    const std::size_t n = x.rows(), m = x.cols();
    if (s.numel() != n) throw DimensionError("scale_rows: scale length mismatch");
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] = x.data()[i * m + j] * s.data()[i];
    return detail::make_result({n, m}, std::move(out), {x, s}, [n, m](TensorNode* self) {
        auto& px = self->parents[0];
        auto& ps = self->parents[1];
        if (px->requires_grad) {
            px->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    px->grad[i * m + j] += self->grad[i * m + j] * ps->data[i];
        }
        if (ps->requires_grad) {
            ps->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j)
                    ps->grad[i] += self->grad[i * m + j] * px->data[i * m + j];
        }
    });
}

// ---------------------------------------------------------------------------
// softmax / layer norm
// ---------------------------------------------------------------------------

// Numerically stabilized softmax along `axis`. Rows sum to 1 along the axis.
inline Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.ndim()) throw DimensionError("softmax: axis out of range");
    const auto& shape = x.shape();
    const std::size_t extent = shape[axis];
    std::size_t inner = 1, outer = 1;
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];

    std::vector<double> out(x.numel());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * extent * inner + in;
            double mx = x.data()[base];
            for (std::size_t e = 1; e < extent; ++e)
                mx = std::max(mx, x.data()[base + e * inner]);
            double denom = 0.0;
            for (std::size_t e = 0; e < extent; ++e) {
                const double v = std::exp(x.data()[base + e * inner] - mx);
                out[base + e * inner] = v;
                denom += v;
            }
            for (std::size_t e = 0; e < extent; ++e) out[base + e * inner] /= denom;
        }

    return detail::make_result(shape, std::move(out), {x},
                               [extent, inner, outer](TensorNode* self) {
        auto& px = self->parents[0];
        if (!px->requires_grad) return;
        px->ensure_grad();
        // dx = s * (g - <g, s>) per slice
        for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * extent * inner + in;
                double dot = 0.0;
                for (std::size_t e = 0; e < extent; ++e)
                    dot += self->grad[base + e * inner] * self->data[base + e * inner];
                for (std::size_t e = 0; e < extent; ++e) {
                    const std::size_t idx = base + e * inner;
                    px->grad[idx] += self->data[idx] * (self->grad[idx] - dot);
                }
            }
    });
}

// Layer normalization over the last dimension, then affine (gain, bias).
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-8) {
    if (x.ndim() == 0) throw DimensionError("layer_norm: scalar input");
    const std::size_t d = x.shape().back();
    if (gain.numel() != d || bias.numel() != d)
        throw DimensionError("layer_norm: gain/bias length mismatch");
    const std::size_t n = x.numel() / d;

    std::vector<double> out(x.numel());
    std::vector<double> inv_std(n), means(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x.data() + i * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        means[i] = mu;
        inv_std[i] = is;
        for (std::size_t j = 0; j < d; ++j)
            out[i * d + j] = (row[j] - mu) * is * gain.data()[j] + bias.data()[j];
    }

    return detail::make_result(
        x.shape(), std::move(out), {x, gain, bias},
        [n, d, means = std::move(means), inv_std = std::move(inv_std)](TensorNode* self) {
            auto& px = self->parents[0];
            auto& pg = self->parents[1];
            auto& pb = self->parents[2];
            std::vector<double> xhat(d), dxhat(d);
            if (pg->requires_grad) pg->ensure_grad();
            if (pb->requires_grad) pb->ensure_grad();
            if (px->requires_grad) px->ensure_grad();
            for (std::size_t i = 0; i < n; ++i) {
                const double* row = px->data.data() + i * d;
                const double* grow = self->grad.data() + i * d;
                for (std::size_t j = 0; j < d; ++j)
                    xhat[j] = (row[j] - means[i]) * inv_std[i];
                if (pg->requires_grad)
                    for (std::size_t j = 0; j < d; ++j) pg->grad[j] += grow[j] * xhat[j];
                if (pb->requires_grad)
                    for (std::size_t j = 0; j < d; ++j) pb->grad[j] += grow[j];
                if (px->requires_grad) {
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        dxhat[j] = grow[j] * pg->data[j];
                        mean_dxhat += dxhat[j];
                        mean_dxhat_xhat += dxhat[j] * xhat[j];
                    }
                    mean_dxhat /= static_cast<double>(d);
                    mean_dxhat_xhat /= static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j)
                        px->grad[i * d + j] +=
                            inv_std[i] * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Embedding lookup
// ---------------------------------------------------------------------------

inline Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    detail::check_2d(table, "embedding_lookup");
    const std::size_t v = table.rows(), d = table.cols();
    std::vector<double> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v)
            throw IndexError("embedding_lookup: id " + std::to_string(ids[i]) +
                             " out of range [0, " + std::to_string(v) + ")");
        const double* row = table.data() + static_cast<std::size_t>(ids[i]) * d;
        std::copy(row, row + d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return detail::make_result({ids.size(), d}, std::move(out), {table},
                               [ids, d](TensorNode* self) {
        auto& pt = self->parents[0];
        if (!pt->requires_grad) return;
        pt->ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i) {
            double* trow = pt->grad.data() + static_cast<std::size_t>(ids[i]) * d;
            const double* grow = self->grad.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) trow[j] += grow[j];
        }
    });
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

// softmax(Q K^T / sqrt(d) + mask_bias) V, assembled from the primitives above
// so the backward pass comes from the graph. `mask` is row-major q x s with
// nonzero = may attend; empty means unmasked. Masking is an additive -1e9
// bias before the softmax. A query row whose mask forbids every key has no
// valid distribution and is rejected.
inline Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                   const std::vector<std::uint8_t>& mask = {}) {
    detail::check_2d(q, "scaled_dot_attention");
    detail::check_2d(k, "scaled_dot_attention");
    detail::check_2d(v, "scaled_dot_attention");
    if (q.cols() != k.cols())
        throw DimensionError("scaled_dot_attention: query/key dims disagree");
    if (k.rows() != v.rows())
        throw DimensionError("scaled_dot_attention: key/value counts disagree");
    const std::size_t nq = q.rows(), ns = k.rows();
    if (!mask.empty() && mask.size() != nq * ns)
        throw DimensionError("scaled_dot_attention: mask shape mismatch");

    Tensor scores = mul_scalar(matmul(q, transpose(k)),
                               1.0 / std::sqrt(static_cast<double>(q.cols())));
    if (!mask.empty()) {
        Tensor bias = Tensor::zeros({nq, ns});
        for (std::size_t i = 0; i < nq; ++i) {
            bool any = false;
            for (std::size_t j = 0; j < ns; ++j) {
                if (mask[i * ns + j]) {
                    any = true;
                } else {
                    bias.at(i, j) = -1e9;
                }
            }
            if (!any)
                throw DegenerateAttentionError(
                    "scaled_dot_attention: query row " + std::to_string(i) +
                    " has no attendable key");
        }
        scores = add(scores, bias);
    }
    return matmul(softmax(scores, 1), v);
}

// ---------------------------------------------------------------------------
// Losses / similarity
// ---------------------------------------------------------------------------

enum class Reduction { Sum, Mean };

// Full-softmax cross entropy, log-sum-exp stabilized. Backward is the usual
// (softmax - one_hot) per row.
inline Tensor cross_entropy_from_logits(const Tensor& logits, const std::vector<int>& targets,
                                        Reduction reduction = Reduction::Mean) {
    detail::check_2d(logits, "cross_entropy_from_logits");
    const std::size_t n = logits.rows(), vsz = logits.cols();
    if (targets.size() != n)
        throw DimensionError("cross_entropy_from_logits: target count mismatch");
    for (int t : targets)
        if (t < 0 || static_cast<std::size_t>(t) >= vsz)
            throw IndexError("cross_entropy_from_logits: target out of range");

    std::vector<double> probs(n * vsz);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * vsz;
        double mx = row[0];
        for (std::size_t j = 1; j < vsz; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < vsz; ++j) {
            probs[i * vsz + j] = std::exp(row[j] - mx);
            denom += probs[i * vsz + j];
        }
        for (std::size_t j = 0; j < vsz; ++j) probs[i * vsz + j] /= denom;
        loss += mx + std::log(denom) - row[static_cast<std::size_t>(targets[i])];
    }
    const double w = reduction == Reduction::Mean ? 1.0 / static_cast<double>(n) : 1.0;
    loss *= w;

    return detail::make_result({1}, {loss}, {logits},
                               [targets, probs = std::move(probs), n, vsz, w](TensorNode* self) {
        auto& pl = self->parents[0];
        if (!pl->requires_grad) return;
        pl->ensure_grad();
        const double g = self->grad[0] * w;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < vsz; ++j)
                pl->grad[i * vsz + j] += g * probs[i * vsz + j];
            pl->grad[i * vsz + static_cast<std::size_t>(targets[i])] -= g;
        }
    });
}

// Cosine similarity of two equal-shape tensors, flattened. Composite, so
// gradients flow through both arguments; rsqrt rejects zero norms.
inline Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "cosine_similarity");
    Tensor dot = sum(mul(a, b));
    Tensor inv_na = rsqrt(sum(mul(a, a)));
    Tensor inv_nb = rsqrt(sum(mul(b, b)));
    return mul(mul(dot, inv_na), inv_nb);
}

// ---------------------------------------------------------------------------
// Mask sampling and finite-difference verification
// ---------------------------------------------------------------------------

// i.i.d. Bernoulli(1 - p_zero) entries, 1 = keep. Plain 0/1 tensor; callers
// decide whether to rescale.
inline Tensor bernoulli_mask(std::vector<std::size_t> shape, double p_zero, Rng& rng) {
    Tensor m = Tensor::zeros(std::move(shape));
    for (auto& x : m.values()) x = rng.uniform() < p_zero ? 0.0 : 1.0;
    return m;
}

// Compares reverse-mode gradients against central finite differences for a
// scalar-valued closure. Returns the max relative error over every input
// coordinate. The closure must be deterministic. The denominator floor
// scales with |f|: central differences cannot resolve gradients below
// eps * |f| / h, so near-zero coordinates are judged against that noise
// floor rather than their own magnitude.
inline double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                         std::vector<Tensor> inputs, double h = 1e-5) {
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Tensor y = f(inputs);
    const double floor = 1e-6 * (1.0 + std::abs(y.item()));
    y.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (auto& t : inputs)
        analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.numel(), 0.0));

    double max_rel = 0.0;
    NoGradGuard ng;
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        auto& t = inputs[ti];
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double saved = t.data()[i];
            t.data()[i] = saved + h;
            const double fp = f(inputs).item();
            t.data()[i] = saved - h;
            const double fm = f(inputs).item();
            t.data()[i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[ti][i];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace igrsr

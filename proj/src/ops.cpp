// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "occ/error.hpp"

namespace occ::ad {

namespace {

constexpr double kNormEps = 1e-12;

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) {
        return false;
    }
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// Output shape of a broadcasting binary op; the smaller operand repeats with
// period numel(small) over the flat output.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    if (a == b) {
        return a;
    }
    if (numel_of(b) == 1 || is_suffix(b, a)) {
        return a;
    }
    if (numel_of(a) == 1 || is_suffix(a, b)) {
        return b;
    }
    throw ContractError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// Calls f(i, ix, iy) over the flat output of a broadcasting binary op; one of nx, ny equals n.
template <typename F>
void broadcast_each(std::size_t n, std::size_t nx, std::size_t ny, F&& f) {
    if (nx == n && ny == n) {
        for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    } else if (nx == n) {
        if (ny == 1) {
            for (std::size_t i = 0; i < n; ++i) f(i, i, std::size_t{0});
            return;
        }
        for (std::size_t base = 0; base < n; base += ny) {
            for (std::size_t j = 0; j < ny; ++j) f(base + j, base + j, j);
        }
    } else {
        if (nx == 1) {
            for (std::size_t i = 0; i < n; ++i) f(i, std::size_t{0}, i);
            return;
        }
        for (std::size_t base = 0; base < n; base += nx) {
            for (std::size_t j = 0; j < nx; ++j) f(base + j, j, base + j);
        }
    }
}

template <typename F>
Var unary(Var a, const char* kind, F&& fwd_and_deriv) {
    const auto& x = a.value();
    Tensor y(x.shape());
    Tensor dydx(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        auto [v, d] = fwd_and_deriv(x[i]);
        y[i] = v;
        dydx[i] = d;
    }
    return a.tape->record(kind, std::move(y), {a},
                          [dydx = std::move(dydx)](const Tensor& g, std::span<Tensor* const> pg) {
                              if (auto* ga = pg[0]) {
                                  for (std::size_t i = 0; i < g.numel(); ++i) {
                                      (*ga)[i] += g[i] * dydx[i];
                                  }
                              }
                          });
}

// Adds g (shape of the output) into an operand accumulator, summing repeats.
void accumulate_reduced(Tensor& acc, const Tensor& g, double sign) {
    const std::size_t n = acc.numel();
    if (n == g.numel()) {
        for (std::size_t i = 0; i < n; ++i) {
            acc[i] += sign * g[i];
        }
        return;
    }
    if (n == 1) {
        double sum = 0.0;
        for (std::size_t i = 0; i < g.numel(); ++i) sum += g[i];
        acc[0] += sign * sum;
        return;
    }
    for (std::size_t base = 0; base < g.numel(); base += n) {
        for (std::size_t j = 0; j < n; ++j) {
            acc[j] += sign * g[base + j];
        }
    }
}

} // namespace

Var add(Var a, Var b) {
    const auto& x = a.value();
    const auto& y = b.value();
    Tensor out(broadcast_shape(x.shape(), y.shape(), "add"));
    const auto nx = x.numel(), ny = y.numel();
    broadcast_each(out.numel(), nx, ny,
                   [&](std::size_t i, std::size_t ix, std::size_t iy) { out[i] = x[ix] + y[iy]; });
    return a.tape->record("add", std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> pg) {
        if (pg[0]) accumulate_reduced(*pg[0], g, 1.0);
        if (pg[1]) accumulate_reduced(*pg[1], g, 1.0);
    });
}

Var sub(Var a, Var b) {
    const auto& x = a.value();
    const auto& y = b.value();
    Tensor out(broadcast_shape(x.shape(), y.shape(), "sub"));
    const auto nx = x.numel(), ny = y.numel();
    broadcast_each(out.numel(), nx, ny,
                   [&](std::size_t i, std::size_t ix, std::size_t iy) { out[i] = x[ix] - y[iy]; });
    return a.tape->record("sub", std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> pg) {
        if (pg[0]) accumulate_reduced(*pg[0], g, 1.0);
        if (pg[1]) accumulate_reduced(*pg[1], g, -1.0);
    });
}

Var mul(Var a, Var b) {
    const auto& x = a.value();
    const auto& y = b.value();
    Tensor out(broadcast_shape(x.shape(), y.shape(), "mul"));
    const auto nx = x.numel(), ny = y.numel();
    broadcast_each(out.numel(), nx, ny,
                   [&](std::size_t i, std::size_t ix, std::size_t iy) { out[i] = x[ix] * y[iy]; });
    return a.tape->record("mul", std::move(out), {a, b}, [a, b](const Tensor& g, std::span<Tensor* const> pg) {
        const auto& x = a.value();
        const auto& y = b.value();
        const auto nx = x.numel(), ny = y.numel();
        if (auto* ga = pg[0]) {
            broadcast_each(g.numel(), nx, ny,
                           [&](std::size_t i, std::size_t ix, std::size_t iy) { (*ga)[ix] += g[i] * y[iy]; });
        }
        if (auto* gb = pg[1]) {
            broadcast_each(g.numel(), nx, ny,
                           [&](std::size_t i, std::size_t ix, std::size_t iy) { (*gb)[iy] += g[i] * x[ix]; });
        }
    });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
    return unary(a, "scale", [c](double x) { return std::pair{c * x, c}; });
}

Var add_scalar(Var a, double c) {
    return unary(a, "add_scalar", [c](double x) { return std::pair{x + c, 1.0}; });
}

Var exp(Var a) {
    return unary(a, "exp", [](double x) {
        const double e = std::exp(x);
        return std::pair{e, e};
    });
}

Var log(Var a) {
    return unary(a, "log", [](double x) { return std::pair{std::log(x), 1.0 / x}; });
}

Var tanh(Var a) {
    return unary(a, "tanh", [](double x) {
        const double t = std::tanh(x);
        return std::pair{t, 1.0 - t * t};
    });
}

Var softplus(Var a) {
    return unary(a, "softplus", [](double x) {
        const double v = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
        const double s = 1.0 / (1.0 + std::exp(-x));
        return std::pair{v, s};
    });
}

Var gelu(Var a) {
    constexpr double k = 0.7978845608028654; // sqrt(2 / pi)
    constexpr double c = 0.044715;
    return unary(a, "gelu", [](double x) {
        const double u = k * (x + c * x * x * x);
        const double t = std::tanh(u);
        const double v = 0.5 * x * (1.0 + t);
        const double du = k * (1.0 + 3.0 * c * x * x);
        const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        return std::pair{v, d};
    });
}

Var softmax(Var a) {
    const auto& x = a.value();
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    Tensor y(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = &x[r * n];
        double* yr = &y[r * n];
        const double mx = *std::max_element(xr, xr + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            z += yr[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            yr[j] /= z;
        }
    }
    Tensor ycopy = y;
    return a.tape->record("softmax", std::move(y), {a},
                          [ycopy = std::move(ycopy), n, rows](const Tensor& g, std::span<Tensor* const> pg) {
                              auto* ga = pg[0];
                              if (!ga) return;
                              const auto& y = ycopy;
                              for (std::size_t r = 0; r < rows; ++r) {
                                  double dot = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) {
                                      dot += g[r * n + j] * y[r * n + j];
                                  }
                                  for (std::size_t j = 0; j < n; ++j) {
                                      (*ga)[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
                                  }
                              }
                          });
}

Var l2_normalize(Var a) {
    const auto& x = a.value();
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    Tensor y(x.shape());
    std::vector<double> norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s += x[r * n + j] * x[r * n + j];
        }
        norms[r] = std::sqrt(s);
        if (norms[r] < kNormEps) {
            continue;
        }
        for (std::size_t j = 0; j < n; ++j) {
            y[r * n + j] = x[r * n + j] / norms[r];
        }
    }
    Tensor ycopy = y;
    return a.tape->record("l2_normalize", std::move(y), {a},
                          [ycopy = std::move(ycopy), norms = std::move(norms), n, rows](
                              const Tensor& g, std::span<Tensor* const> pg) {
                              auto* ga = pg[0];
                              if (!ga) return;
                              for (std::size_t r = 0; r < rows; ++r) {
                                  if (norms[r] < kNormEps) {
                                      continue;
                                  }
                                  double dot = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) {
                                      dot += g[r * n + j] * ycopy[r * n + j];
                                  }
                                  for (std::size_t j = 0; j < n; ++j) {
                                      (*ga)[r * n + j] += (g[r * n + j] - ycopy[r * n + j] * dot) / norms[r];
                                  }
                              }
                          });
}

Var sum(Var a) {
    double s = 0.0;
    for (double v : a.value().data()) {
        s += v;
    }
    return a.tape->record("sum", Tensor::scalar(s), {a}, [](const Tensor& g, std::span<Tensor* const> pg) {
        if (auto* ga = pg[0]) {
            for (auto& v : ga->data()) {
                v += g[0];
            }
        }
    });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Var sum_last(Var a) {
    const auto& x = a.value();
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    Shape s = x.shape();
    if (s.size() == 1) {
        s = {1};
    } else {
        s.pop_back();
    }
    Tensor y(s);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
            y[r] += x[r * n + j];
        }
    }
    return a.tape->record("sum_last", std::move(y), {a}, [n, rows](const Tensor& g, std::span<Tensor* const> pg) {
        if (auto* ga = pg[0]) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < n; ++j) {
                    (*ga)[r * n + j] += g[r];
                }
            }
        }
    });
}

Var concat(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat: no operands");
    Shape lead = parts[0].shape();
    lead.pop_back();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape l = p.shape();
        const std::size_t w = l.back();
        l.pop_back();
        require(l == lead, "concat: leading shapes differ: " + shape_str(p.shape()));
        widths.push_back(w);
        total += w;
    }
    const std::size_t rows = numel_of(lead.empty() ? Shape{1} : lead);
    Shape s = lead;
    s.push_back(total);
    Tensor y(s);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& x = parts[k].value();
        for (std::size_t r = 0; r < rows; ++r) {
            std::copy_n(&x[r * widths[k]], widths[k], &y[r * total + off]);
        }
        off += widths[k];
    }
    return parts[0].tape->record("concat", std::move(y), parts,
                                 [widths, total, rows](const Tensor& g, std::span<Tensor* const> pg) {
                                     std::size_t off = 0;
                                     for (std::size_t k = 0; k < pg.size(); ++k) {
                                         if (auto* gk = pg[k]) {
                                             for (std::size_t r = 0; r < rows; ++r) {
                                                 for (std::size_t j = 0; j < widths[k]; ++j) {
                                                     (*gk)[r * widths[k] + j] += g[r * total + off + j];
                                                 }
                                             }
                                         }
                                         off += widths[k];
                                     }
                                 });
}

Var slice(Var a, std::size_t begin, std::size_t end) {
    const auto& x = a.value();
    const std::size_t n = x.shape().back();
    require(begin < end && end <= n, "slice: bad range on last axis of " + shape_str(x.shape()));
    const std::size_t w = end - begin;
    const std::size_t rows = x.numel() / n;
    Shape s = x.shape();
    s.back() = w;
    Tensor y(s);
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(&x[r * n + begin], w, &y[r * w]);
    }
    return a.tape->record("slice", std::move(y), {a}, [n, w, rows, begin](const Tensor& g, std::span<Tensor* const> pg) {
        if (auto* ga = pg[0]) {
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < w; ++j) {
                    (*ga)[r * n + begin + j] += g[r * w + j];
                }
            }
        }
    });
}

Var reshape(Var a, Shape shape) {
    require(numel_of(shape) == a.numel(), "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
    return a.tape->record("reshape", a.value().reshaped(std::move(shape)), {a},
                          [](const Tensor& g, std::span<Tensor* const> pg) {
                              if (auto* ga = pg[0]) {
                                  for (std::size_t i = 0; i < g.numel(); ++i) {
                                      (*ga)[i] += g[i];
                                  }
                              }
                          });
}

Var expand(Var a, std::size_t axis, std::size_t n) {
    const auto& x = a.value();
    require(axis < x.rank() && x.dim(axis) == 1, "expand: axis must exist and have size 1");
    Shape s = x.shape();
    s[axis] = n;
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    Tensor y(s);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < n; ++k) {
            std::copy_n(&x[o * inner], inner, &y[(o * n + k) * inner]);
        }
    }
    return a.tape->record("expand", std::move(y), {a}, [outer, inner, n](const Tensor& g, std::span<Tensor* const> pg) {
        if (auto* ga = pg[0]) {
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t k = 0; k < n; ++k) {
                    for (std::size_t j = 0; j < inner; ++j) {
                        (*ga)[o * inner + j] += g[(o * n + k) * inner + j];
                    }
                }
            }
        }
    });
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

// c[m,n] += a[m,k] b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k), ni = static_cast<Eigen::Index>(n);
    Map(c, mi, ni).noalias() += MapC(a, mi, ki) * MapC(b, ki, ni);
}

// c[m,k] += a[m,n] b[k,n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
    const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k), ni = static_cast<Eigen::Index>(n);
    Map(c, mi, ki).noalias() += MapC(a, mi, ni) * MapC(b, ki, ni).transpose();
}

// c[k,n] += a[m,k]^T b[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const auto mi = static_cast<Eigen::Index>(m), ki = static_cast<Eigen::Index>(k), ni = static_cast<Eigen::Index>(n);
    Map(c, ki, ni).noalias() += MapC(a, mi, ki).transpose() * MapC(b, mi, ni);
}

} // namespace

Var matmul(Var a, Var b) {
    const auto& x = a.value();
    const auto& w = b.value();
    require(w.rank() == 2, "matmul: right operand must be 2-D, got " + shape_str(w.shape()));
    const std::size_t k = x.shape().back();
    require(w.dim(0) == k, "matmul: inner dims differ: " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    const std::size_t n = w.dim(1);
    const std::size_t m = x.numel() / k;
    Shape s = x.shape();
    s.back() = n;
    Tensor y(s);
    gemm_nn(x.data().data(), w.data().data(), y.data().data(), m, k, n);
    return a.tape->record("matmul", std::move(y), {a, b}, [a, b, m, k, n](const Tensor& g, std::span<Tensor* const> pg) {
        if (auto* ga = pg[0]) {
            gemm_nt(g.data().data(), b.value().data().data(), ga->data().data(), m, n, k);
        }
        if (auto* gb = pg[1]) {
            gemm_tn(a.value().data().data(), g.data().data(), gb->data().data(), m, k, n);
        }
    });
}

Var bmm(Var a, Var b) {
    const auto& x = a.value();
    const auto& y = b.value();
    require(x.rank() == 3 && y.rank() == 3 && x.dim(0) == y.dim(0) && x.dim(2) == y.dim(1),
            "bmm: incompatible shapes " + shape_str(x.shape()) + " x " + shape_str(y.shape()));
    const std::size_t batch = x.dim(0), m = x.dim(1), k = x.dim(2), n = y.dim(2);
    Tensor out({batch, m, n});
#pragma omp parallel for schedule(static) if (batch * m * k * n > 32768)
    for (std::size_t bi = 0; bi < batch; ++bi) {
        const double* xb = &x[bi * m * k];
        const double* yb = &y[bi * k * n];
        double* ob = &out[bi * m * n];
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double av = xb[i * k + p];
                for (std::size_t j = 0; j < n; ++j) {
                    ob[i * n + j] += av * yb[p * n + j];
                }
            }
        }
    }
    return a.tape->record("bmm", std::move(out), {a, b},
                          [a, b, batch, m, k, n](const Tensor& g, std::span<Tensor* const> pg) {
                              const auto& x = a.value();
                              const auto& y = b.value();
                              auto* ga = pg[0];
                              auto* gb = pg[1];
#pragma omp parallel for schedule(static) if (batch * m * k * n > 32768)
                              for (std::size_t bi = 0; bi < batch; ++bi) {
                                  const double* gbat = &g[bi * m * n];
                                  for (std::size_t i = 0; i < m; ++i) {
                                      for (std::size_t p = 0; p < k; ++p) {
                                          double s = 0.0;
                                          for (std::size_t j = 0; j < n; ++j) {
                                              const double gv = gbat[i * n + j];
                                              s += gv * y[bi * k * n + p * n + j];
                                              if (gb) {
                                                  (*gb)[bi * k * n + p * n + j] += x[bi * m * k + i * k + p] * gv;
                                              }
                                          }
                                          if (ga) {
                                              (*ga)[bi * m * k + i * k + p] += s;
                                          }
                                      }
                                  }
                              }
                          });
}

Var gather_rows(Var a, std::vector<std::int64_t> index) {
    const auto& x = a.value();
    const std::size_t rows = x.dim(0);
    const std::size_t w = x.numel() / rows;
    Shape s = x.shape();
    require(!index.empty(), "gather_rows: empty index");
    s[0] = index.size();
    Tensor y(s);
    for (std::size_t i = 0; i < index.size(); ++i) {
        const auto r = index[i];
        if (r < 0) continue;
        require(static_cast<std::size_t>(r) < rows, "gather_rows: index out of range");
        std::copy_n(&x[static_cast<std::size_t>(r) * w], w, &y[i * w]);
    }
    return a.tape->record("gather_rows", std::move(y), {a},
                          [index = std::move(index), w](const Tensor& g, std::span<Tensor* const> pg) {
                              auto* ga = pg[0];
                              if (!ga) return;
                              for (std::size_t i = 0; i < index.size(); ++i) {
                                  const auto r = index[i];
                                  if (r < 0) continue;
                                  for (std::size_t j = 0; j < w; ++j) {
                                      (*ga)[static_cast<std::size_t>(r) * w + j] += g[i * w + j];
                                  }
                              }
                          });
}

Var segment_sum(Var a, const std::vector<std::uint32_t>& segment, std::size_t num_segments) {
    const auto& x = a.value();
    const std::size_t rows = x.dim(0);
    require(segment.size() == rows, "segment_sum: one segment id per row required");
    const std::size_t w = x.numel() / rows;
    Shape s = x.shape();
    s[0] = num_segments;
    Tensor y(s);
    for (std::size_t i = 0; i < rows; ++i) {
        require(segment[i] < num_segments, "segment_sum: segment id out of range");
        for (std::size_t j = 0; j < w; ++j) {
            y[segment[i] * w + j] += x[i * w + j];
        }
    }
    return a.tape->record("segment_sum", std::move(y), {a}, [segment, w](const Tensor& g, std::span<Tensor* const> pg) {
        if (auto* ga = pg[0]) {
            for (std::size_t i = 0; i < segment.size(); ++i) {
                for (std::size_t j = 0; j < w; ++j) {
                    (*ga)[i * w + j] += g[segment[i] * w + j];
                }
            }
        }
    });
}

Var segment_outer(Var u, Var x, const std::vector<std::uint32_t>& segment, std::size_t num_segments) {
    const auto& uv = u.value();
    const auto& xv = x.value();
    require(uv.rank() == 2 && xv.rank() == 2 && uv.dim(0) == xv.dim(0) && segment.size() == uv.dim(0),
            "segment_outer: expects u [N, M], x [N, D] and N segment ids");
    const std::size_t rows = uv.dim(0), m = uv.dim(1), d = xv.dim(1);
    Tensor y({num_segments, m, d});
    for (std::size_t i = 0; i < rows; ++i) {
        require(segment[i] < num_segments, "segment_outer: segment id out of range");
        double* ys = &y[segment[i] * m * d];
        for (std::size_t a = 0; a < m; ++a) {
            const double ua = uv[i * m + a];
            for (std::size_t j = 0; j < d; ++j) {
                ys[a * d + j] += ua * xv[i * d + j];
            }
        }
    }
    return u.tape->record("segment_outer", std::move(y), {u, x},
                          [u, x, segment, m, d](const Tensor& g, std::span<Tensor* const> pg) {
                              const auto& uv = u.value();
                              const auto& xv = x.value();
                              for (std::size_t i = 0; i < segment.size(); ++i) {
                                  const double* gs = &g[segment[i] * m * d];
                                  for (std::size_t a = 0; a < m; ++a) {
                                      double s = 0.0;
                                      for (std::size_t j = 0; j < d; ++j) {
                                          s += gs[a * d + j] * xv[i * d + j];
                                          if (pg[1]) {
                                              (*pg[1])[i * d + j] += gs[a * d + j] * uv[i * m + a];
                                          }
                                      }
                                      if (pg[0]) {
                                          (*pg[0])[i * m + a] += s;
                                      }
                                  }
                              }
                          });
}

Var linear(Var x, Var weight, Var bias) { return add(matmul(x, weight), bias); }

} // namespace occ::ad

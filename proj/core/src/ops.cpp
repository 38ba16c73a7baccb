#include "entdec/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "entdec/errors.hpp"

namespace entdec {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Map = Eigen::Map<RowMat<S>>;
template <typename S>
using CMap = Eigen::Map<const RowMat<S>>;
template <typename S>
using SMap = Eigen::Map<RowMat<S>, 0, Eigen::OuterStride<>>;
template <typename S>
using CSMap = Eigen::Map<const RowMat<S>, 0, Eigen::OuterStride<>>;

template <typename S>
using NodeT = detail::Node<S>;
template <typename S>
using NodePtr = std::shared_ptr<detail::Node<S>>;

template <typename S>
constexpr S neg_inf() {
  return -std::numeric_limits<S>::infinity();
}

template <typename S>
bool should_record(std::initializer_list<const Tensor<S>*> inputs) {
  if (!grad_enabled()) {
    return false;
  }
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor<S>* t) { return t->requires_grad(); });
}

template <typename S>
Tensor<S> finish(Shape shape, std::vector<S> value, bool record,
                 std::initializer_list<const Tensor<S>*> parents,
                 std::function<void(NodeT<S>&)> backward) {
  auto node = std::make_shared<NodeT<S>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (record) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (const auto* p : parents) {
      node->parents.push_back(p->node_ptr());
    }
    node->backward = std::move(backward);
  }
  return Tensor<S>{std::move(node)};
}

template <typename S>
void require_defined(const Tensor<S>& t, const char* op) {
  if (!t.defined()) {
    throw UsageError(std::string(op) + ": undefined tensor");
  }
}

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename S>
CMap<S> as_matrix(const std::vector<S>& v, std::size_t r, std::size_t c) {
  return CMap<S>(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

template <typename S>
Map<S> as_matrix(std::vector<S>& v, std::size_t r, std::size_t c) {
  return Map<S>(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

thread_local AttentionDiagnostics g_attention_diag;

}  // namespace

AttentionDiagnostics& attention_diagnostics() noexcept { return g_attention_diag; }

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " * " +
                         shape_string(b.shape()));
  }
  std::vector<S> out(m * n);
  as_matrix(out, m, n).noalias() = as_matrix(a.node()->value, m, k) * as_matrix(b.node()->value, k, n);
  const bool record = should_record({&a, &b});
  return finish<S>({m, n}, std::move(out), record, {&a, &b}, [m, k, n](NodeT<S>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    const auto dC = as_matrix(std::as_const(self.grad), m, n);
    if (A.requires_grad) {
      as_matrix(A.grad_buffer(), m, k).noalias() += dC * as_matrix(std::as_const(B.value), k, n).transpose();
    }
    if (B.requires_grad) {
      as_matrix(B.grad_buffer(), k, n).noalias() += as_matrix(std::as_const(A.value), m, k).transpose() * dC;
    }
  });
}

template <typename S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  require_defined(a, "matmul_nt");
  require_defined(b, "matmul_nt");
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: column counts differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  std::vector<S> out(m * n);
  as_matrix(out, m, n).noalias() =
      as_matrix(a.node()->value, m, k) * as_matrix(b.node()->value, n, k).transpose();
  const bool record = should_record({&a, &b});
  return finish<S>({m, n}, std::move(out), record, {&a, &b}, [m, k, n](NodeT<S>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    const auto dC = as_matrix(std::as_const(self.grad), m, n);
    if (A.requires_grad) {
      as_matrix(A.grad_buffer(), m, k).noalias() += dC * as_matrix(std::as_const(B.value), n, k);
    }
    if (B.requires_grad) {
      as_matrix(B.grad_buffer(), n, k).noalias() += dC.transpose() * as_matrix(std::as_const(A.value), m, k);
    }
  });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "add");
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<S> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = av[i] + bv[i];
  }
  const bool record = should_record({&a, &b});
  return finish<S>(a.shape(), std::move(out), record, {&a, &b}, [](NodeT<S>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto& parent = *self.parents[p];
      if (parent.requires_grad) {
        auto& g = parent.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
          g[i] += self.grad[i];
        }
      }
    }
  });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "sub");
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<S> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = av[i] - bv[i];
  }
  const bool record = should_record({&a, &b});
  return finish<S>(a.shape(), std::move(out), record, {&a, &b}, [](NodeT<S>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad) {
      auto& g = A.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i];
      }
    }
    if (B.requires_grad) {
      auto& g = B.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] -= self.grad[i];
      }
    }
  });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  require_same_shape(a, b, "mul");
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<S> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = av[i] * bv[i];
  }
  const bool record = should_record({&a, &b});
  return finish<S>(a.shape(), std::move(out), record, {&a, &b}, [](NodeT<S>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad) {
      auto& g = A.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i] * B.value[i];
      }
    }
    if (B.requires_grad) {
      auto& g = B.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i] * A.value[i];
      }
    }
  });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S factor) {
  require_defined(a, "scale");
  const auto& av = a.node()->value;
  std::vector<S> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = av[i] * factor;
  }
  const bool record = should_record({&a});
  return finish<S>(a.shape(), std::move(out), record, {&a}, [factor](NodeT<S>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i] * factor;
    }
  });
}

template <typename S>
Tensor<S> add_bias(const Tensor<S>& a, const Tensor<S>& bias) {
  require_defined(a, "add_bias");
  require_defined(bias, "add_bias");
  const std::size_t r = a.rows();
  const std::size_t c = a.cols();
  if (bias.numel() != c) {
    throw DimensionError("add_bias: bias of shape " + shape_string(bias.shape()) +
                         " for rows of width " + std::to_string(c));
  }
  const auto& av = a.node()->value;
  const auto& bv = bias.node()->value;
  std::vector<S> out(av.size());
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = av[i * c + j] + bv[j];
    }
  }
  const bool record = should_record({&a, &bias});
  return finish<S>(a.shape(), std::move(out), record, {&a, &bias}, [r, c](NodeT<S>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad) {
      auto& g = A.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i];
      }
    }
    if (B.requires_grad) {
      auto& g = B.grad_buffer();
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          g[j] += self.grad[i * c + j];
        }
      }
    }
  });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& a) {
  require_defined(a, "relu");
  const auto& av = a.node()->value;
  std::vector<S> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = av[i] > S{0} ? av[i] : S{0};
  }
  const bool record = should_record({&a});
  return finish<S>(a.shape(), std::move(out), record, {&a}, [](NodeT<S>& self) {
    auto& A = *self.parents[0];
    auto& g = A.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (A.value[i] > S{0}) {
        g[i] += self.grad[i];
      }
    }
  });
}

template <typename S>
Tensor<S> dropout(const Tensor<S>& a, double p, Rng& rng) {
  require_defined(a, "dropout");
  if (p <= 0.0) {
    return a;
  }
  if (p >= 1.0) {
    throw UsageError("dropout: rate must be < 1");
  }
  const auto& av = a.node()->value;
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  std::vector<S> mask(av.size());
  std::vector<S> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() < p ? S{0} : keep_scale;
    out[i] = av[i] * mask[i];
  }
  const bool record = should_record({&a});
  return finish<S>(a.shape(), std::move(out), record, {&a},
                   [mask = std::move(mask)](NodeT<S>& self) {
                     auto& g = self.parents[0]->grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       g[i] += self.grad[i] * mask[i];
                     }
                   });
}

template <typename S>
Tensor<S> softmax(const Tensor<S>& a, std::size_t axis) {
  require_defined(a, "softmax");
  const std::size_t r = a.rows();
  const std::size_t c = a.cols();
  if (axis > 1 || (a.rank() <= 1 && axis != 0)) {
    throw UsageError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                     shape_string(a.shape()));
  }
  if (a.rank() <= 1) {
    axis = 1;  // a vector is one row
  }
  // Along axis 1 each row is normalized; along axis 0 each column.
  const std::size_t groups = axis == 1 ? r : c;
  const std::size_t len = axis == 1 ? c : r;
  const std::size_t stride = axis == 1 ? 1 : c;
  auto offset = [&](std::size_t g) { return axis == 1 ? g * c : g; };

  const auto& av = a.node()->value;
  std::vector<S> out(av.size(), S{0});
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = offset(g);
    S mx = neg_inf<S>();
    for (std::size_t i = 0; i < len; ++i) {
      mx = std::max(mx, av[base + i * stride]);
    }
    if (mx == neg_inf<S>()) {
      continue;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(static_cast<double>(av[base + i * stride]) - static_cast<double>(mx));
      total += e;
      out[base + i * stride] = static_cast<S>(e);
    }
    for (std::size_t i = 0; i < len; ++i) {
      out[base + i * stride] = static_cast<S>(static_cast<double>(out[base + i * stride]) / total);
    }
  }
  const bool record = should_record({&a});
  return finish<S>(a.shape(), std::move(out), record, {&a},
                   [groups, len, stride, axis, c](NodeT<S>& self) {
                     auto& g = self.parents[0]->grad_buffer();
                     const auto& y = self.value;
                     for (std::size_t grp = 0; grp < groups; ++grp) {
                       const std::size_t base = axis == 1 ? grp * c : grp;
                       double dot = 0.0;
                       for (std::size_t i = 0; i < len; ++i) {
                         const std::size_t at = base + i * stride;
                         dot += static_cast<double>(self.grad[at]) * y[at];
                       }
                       for (std::size_t i = 0; i < len; ++i) {
                         const std::size_t at = base + i * stride;
                         g[at] += static_cast<S>(y[at] * (self.grad[at] - dot));
                       }
                     }
                   });
}

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, double eps) {
  require_defined(x, "layer_norm");
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  if (gamma.numel() != c || beta.numel() != c) {
    throw DimensionError("layer_norm: gamma/beta must have " + std::to_string(c) + " entries");
  }
  const auto& xv = x.node()->value;
  const auto& gv = gamma.node()->value;
  const auto& bv = beta.node()->value;
  std::vector<S> out(xv.size());
  std::vector<S> xhat(xv.size());
  std::vector<S> rstd(r);
  for (std::size_t i = 0; i < r; ++i) {
    const S* row = xv.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      mu += row[j];
    }
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double dlt = row[j] - mu;
      var += dlt * dlt;
    }
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + eps);
    rstd[i] = static_cast<S>(inv);
    for (std::size_t j = 0; j < c; ++j) {
      const S h = static_cast<S>((row[j] - mu) * inv);
      xhat[i * c + j] = h;
      out[i * c + j] = h * gv[j] + bv[j];
    }
  }
  const bool record = should_record({&x, &gamma, &beta});
  if (!record) {
    return finish<S>(x.shape(), std::move(out), false, {}, {});
  }
  return finish<S>(x.shape(), std::move(out), true, {&x, &gamma, &beta},
                   [r, c, xhat = std::move(xhat), rstd = std::move(rstd)](NodeT<S>& self) {
                     auto& X = *self.parents[0];
                     auto& G = *self.parents[1];
                     auto& B = *self.parents[2];
                     const auto& dy = self.grad;
                     if (G.requires_grad || B.requires_grad) {
                       auto& gg = G.grad_buffer();
                       auto& gb = B.grad_buffer();
                       for (std::size_t i = 0; i < r; ++i) {
                         for (std::size_t j = 0; j < c; ++j) {
                           gg[j] += dy[i * c + j] * xhat[i * c + j];
                           gb[j] += dy[i * c + j];
                         }
                       }
                     }
                     if (X.requires_grad) {
                       auto& gx = X.grad_buffer();
                       const auto& gam = G.value;
                       for (std::size_t i = 0; i < r; ++i) {
                         double mean_d = 0.0;
                         double mean_dx = 0.0;
                         for (std::size_t j = 0; j < c; ++j) {
                           const double dxh = static_cast<double>(dy[i * c + j]) * gam[j];
                           mean_d += dxh;
                           mean_dx += dxh * xhat[i * c + j];
                         }
                         mean_d /= static_cast<double>(c);
                         mean_dx /= static_cast<double>(c);
                         for (std::size_t j = 0; j < c; ++j) {
                           const double dxh = static_cast<double>(dy[i * c + j]) * gam[j];
                           gx[i * c + j] +=
                               static_cast<S>(rstd[i] * (dxh - mean_d - xhat[i * c + j] * mean_dx));
                         }
                       }
                     }
                   });
}

template <typename S>
Tensor<S> gather_rows(const Tensor<S>& table, std::span<const std::int64_t> ids) {
  require_defined(table, "gather_rows");
  const std::size_t rows = table.rows();
  const std::size_t c = table.cols();
  const auto& tv = table.node()->value;
  std::vector<S> out(ids.size() * c);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= rows) {
      throw IndexError("gather_rows: id " + std::to_string(id) + " outside [0, " +
                       std::to_string(rows) + ")");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(id) * c, c, out.data() + i * c);
  }
  const bool record = should_record({&table});
  if (!record) {
    return finish<S>({ids.size(), c}, std::move(out), false, {}, {});
  }
  std::vector<std::int64_t> saved(ids.begin(), ids.end());
  return finish<S>({ids.size(), c}, std::move(out), true, {&table},
                   [c, saved = std::move(saved)](NodeT<S>& self) {
                     auto& g = self.parents[0]->grad_buffer();
                     for (std::size_t i = 0; i < saved.size(); ++i) {
                       S* dst = g.data() + static_cast<std::size_t>(saved[i]) * c;
                       const S* src = self.grad.data() + i * c;
                       for (std::size_t j = 0; j < c; ++j) {
                         dst[j] += src[j];
                       }
                     }
                   });
}

template <typename S>
Tensor<S> concat_rows(const Tensor<S>& a, const Tensor<S>& b) {
  require_defined(a, "concat_rows");
  require_defined(b, "concat_rows");
  const std::size_t c = a.cols();
  // An empty operand (0 rows) may carry any width.
  const bool a_empty = a.numel() == 0;
  const bool b_empty = b.numel() == 0;
  const std::size_t width = a_empty ? b.cols() : c;
  if (!a_empty && !b_empty && b.cols() != c) {
    throw DimensionError("concat_rows: column counts differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const std::size_t ra = a_empty ? 0 : a.rows();
  const std::size_t rb = b_empty ? 0 : b.rows();
  std::vector<S> out;
  out.reserve((ra + rb) * width);
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  const bool record = should_record({&a, &b});
  const std::size_t na = a.numel();
  return finish<S>({ra + rb, width}, std::move(out), record, {&a, &b}, [na](NodeT<S>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad) {
      auto& g = A.grad_buffer();
      for (std::size_t i = 0; i < na; ++i) {
        g[i] += self.grad[i];
      }
    }
    if (B.requires_grad) {
      auto& g = B.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[na + i];
      }
    }
  });
}

template <typename S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
  require_defined(a, "concat_cols");
  require_defined(b, "concat_cols");
  const std::size_t r = a.rows();
  if (b.rows() != r) {
    throw DimensionError("concat_cols: row counts differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const std::size_t ca = a.cols();
  const std::size_t cb = b.cols();
  const std::size_t c = ca + cb;
  std::vector<S> out(r * c);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(av.data() + i * ca, ca, out.data() + i * c);
    std::copy_n(bv.data() + i * cb, cb, out.data() + i * c + ca);
  }
  const bool record = should_record({&a, &b});
  return finish<S>({r, c}, std::move(out), record, {&a, &b}, [r, ca, cb, c](NodeT<S>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    if (A.requires_grad) {
      auto& g = A.grad_buffer();
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < ca; ++j) {
          g[i * ca + j] += self.grad[i * c + j];
        }
      }
    }
    if (B.requires_grad) {
      auto& g = B.grad_buffer();
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < cb; ++j) {
          g[i * cb + j] += self.grad[i * c + ca + j];
        }
      }
    }
  });
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& x, std::size_t begin, std::size_t end) {
  require_defined(x, "slice_rows");
  const std::size_t c = x.cols();
  if (begin > end || end > x.rows()) {
    throw IndexError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") outside " + std::to_string(x.rows()) + " rows");
  }
  std::vector<S> out(x.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                     x.data().begin() + static_cast<std::ptrdiff_t>(end * c));
  const bool record = should_record({&x});
  return finish<S>({end - begin, c}, std::move(out), record, {&x}, [begin, c](NodeT<S>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      g[begin * c + i] += self.grad[i];
    }
  });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  require_defined(x, "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  std::vector<S> out(x.data().begin(), x.data().end());
  const bool record = should_record({&x});
  return finish<S>(std::move(shape), std::move(out), record, {&x}, [](NodeT<S>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i];
    }
  });
}

template <typename S>
Tensor<S> max_pool_segments(const Tensor<S>& x, std::span<const std::size_t> offsets) {
  require_defined(x, "max_pool_segments");
  const std::size_t c = x.cols();
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != (x.numel() == 0 ? 0 : x.rows())) {
    throw DimensionError("max_pool_segments: offsets must span all " + std::to_string(x.rows()) +
                         " rows");
  }
  const std::size_t n = offsets.size() - 1;
  const auto& xv = x.node()->value;
  std::vector<S> out(n * c);
  std::vector<std::size_t> argmax(n * c);
  for (std::size_t s = 0; s < n; ++s) {
    if (offsets[s + 1] <= offsets[s]) {
      throw DimensionError("max_pool_segments: segment " + std::to_string(s) + " is empty");
    }
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t best = offsets[s];
      S value = xv[best * c + j];
      for (std::size_t i = offsets[s] + 1; i < offsets[s + 1]; ++i) {
        if (xv[i * c + j] > value) {
          value = xv[i * c + j];
          best = i;
        }
      }
      out[s * c + j] = value;
      argmax[s * c + j] = best;
    }
  }
  const bool record = should_record({&x});
  if (!record) {
    return finish<S>({n, c}, std::move(out), false, {}, {});
  }
  return finish<S>({n, c}, std::move(out), true, {&x},
                   [c, argmax = std::move(argmax)](NodeT<S>& self) {
                     auto& g = self.parents[0]->grad_buffer();
                     for (std::size_t i = 0; i < argmax.size(); ++i) {
                       g[argmax[i] * c + (i % c)] += self.grad[i];
                     }
                   });
}

template <typename S>
Tensor<S> max_pool_rows(const Tensor<S>& x) {
  const std::size_t offsets[] = {0, x.rows()};
  return reshape(max_pool_segments(x, std::span<const std::size_t>(offsets)), Shape{x.cols()});
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  require_defined(x, "sum");
  double total = 0.0;
  for (S v : x.data()) {
    total += v;
  }
  const bool record = should_record({&x});
  return finish<S>({}, {static_cast<S>(total)}, record, {&x}, [](NodeT<S>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& v : g) {
      v += self.grad[0];
    }
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  if (x.numel() == 0) {
    throw DimensionError("mean: empty tensor");
  }
  return scale(sum(x), static_cast<S>(1.0 / static_cast<double>(x.numel())));
}

template <typename S>
Tensor<S> mask_fill_neg_inf(const Tensor<S>& x, std::span<const std::uint8_t> keep) {
  require_defined(x, "mask_fill_neg_inf");
  if (keep.size() != x.numel()) {
    throw DimensionError("mask_fill_neg_inf: mask has " + std::to_string(keep.size()) +
                         " entries for " + std::to_string(x.numel()) + " values");
  }
  std::vector<S> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (keep[i] == 0) {
      out[i] = neg_inf<S>();
    }
  }
  const bool record = should_record({&x});
  if (!record) {
    return finish<S>(x.shape(), std::move(out), false, {}, {});
  }
  std::vector<std::uint8_t> saved(keep.begin(), keep.end());
  return finish<S>(x.shape(), std::move(out), true, {&x},
                   [saved = std::move(saved)](NodeT<S>& self) {
                     auto& g = self.parents[0]->grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       if (saved[i] != 0) {
                         g[i] += self.grad[i];
                       }
                     }
                   });
}

template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, std::span<const std::int64_t> targets) {
  require_defined(logits, "cross_entropy");
  const std::size_t r = logits.rows();
  const std::size_t c = logits.cols();
  if (targets.size() != r) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(r) + " rows");
  }
  const auto& lv = logits.node()->value;
  const bool record = should_record({&logits});
  std::vector<S> probs(record ? lv.size() : 0, S{0});
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < r; ++i) {
    const auto t = targets[i];
    if (t < 0) {
      continue;
    }
    if (static_cast<std::size_t>(t) >= c) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside " +
                       std::to_string(c) + " classes");
    }
    const S* row = lv.data() + i * c;
    if (!std::isfinite(row[t])) {
      throw DataError("cross_entropy: target " + std::to_string(t) + " has a masked logit");
    }
    S mx = row[0];
    for (std::size_t j = 1; j < c; ++j) {
      mx = std::max(mx, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      z += std::exp(static_cast<double>(row[j]) - mx);
    }
    const double lse = std::log(z) + mx;
    total += lse - row[t];
    ++counted;
    if (record) {
      for (std::size_t j = 0; j < c; ++j) {
        probs[i * c + j] = static_cast<S>(std::exp(static_cast<double>(row[j]) - lse));
      }
    }
  }
  const double loss = counted == 0 ? 0.0 : total / static_cast<double>(counted);
  if (!record) {
    return finish<S>({}, {static_cast<S>(loss)}, false, {}, {});
  }
  std::vector<std::int64_t> saved(targets.begin(), targets.end());
  return finish<S>({}, {static_cast<S>(loss)}, true, {&logits},
                   [c, counted, probs = std::move(probs), saved = std::move(saved)](NodeT<S>& self) {
                     if (counted == 0) {
                       return;
                     }
                     auto& g = self.parents[0]->grad_buffer();
                     const S scale_factor = self.grad[0] / static_cast<S>(counted);
                     for (std::size_t i = 0; i < saved.size(); ++i) {
                       if (saved[i] < 0) {
                         continue;
                       }
                       for (std::size_t j = 0; j < c; ++j) {
                         g[i * c + j] += scale_factor * probs[i * c + j];
                       }
                       g[i * c + static_cast<std::size_t>(saved[i])] -= scale_factor;
                     }
                   });
}

template <typename S>
Tensor<S> multi_head_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                               std::size_t heads, std::span<const AttentionBlock> blocks,
                               std::span<const std::uint8_t> key_valid) {
  require_defined(q, "multi_head_attention");
  require_defined(k, "multi_head_attention");
  require_defined(v, "multi_head_attention");
  const std::size_t d = q.cols();
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows()) {
    throw DimensionError("multi_head_attention: q " + shape_string(q.shape()) + ", k " +
                         shape_string(k.shape()) + ", v " + shape_string(v.shape()));
  }
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("multi_head_attention: width " + std::to_string(d) +
                         " not divisible into " + std::to_string(heads) + " heads");
  }
  if (!key_valid.empty() && key_valid.size() != k.rows()) {
    throw DimensionError("multi_head_attention: key mask size mismatch");
  }
  const std::size_t nq_total = q.rows();
  const std::size_t nk_total = k.rows();
  const std::size_t dh = d / heads;
  const S scale_factor = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
  const bool record = should_record({&q, &k, &v});

  const S* qd = q.node()->value.data();
  const S* kd = k.node()->value.data();
  const S* vd = v.node()->value.data();
  std::vector<S> out(nq_total * d, S{0});
  std::vector<std::vector<S>> saved_probs(record ? blocks.size() * heads : 0);
  std::vector<S> scratch;
  constexpr std::size_t kChunk = 256;

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& blk = blocks[b];
    if (blk.q_begin > blk.q_end || blk.q_end > nq_total || blk.k_begin > blk.k_end ||
        blk.k_end > nk_total) {
      throw IndexError("multi_head_attention: block " + std::to_string(b) + " out of range");
    }
    const std::size_t nq = blk.q_end - blk.q_begin;
    const std::size_t nk = blk.k_end - blk.k_begin;
    if (nq == 0) {
      continue;
    }
    for (std::size_t h = 0; h < heads; ++h) {
      const CSMap<S> kh(kd + blk.k_begin * d + h * dh, idx(nk), idx(dh), Eigen::OuterStride<>(idx(d)));
      const CSMap<S> vh(vd + blk.k_begin * d + h * dh, idx(nk), idx(dh), Eigen::OuterStride<>(idx(d)));
      std::vector<S>* probs_store = nullptr;
      if (record) {
        probs_store = &saved_probs[b * heads + h];
        probs_store->assign(nq * nk, S{0});
      }
      const std::size_t chunk = record ? nq : kChunk;
      for (std::size_t r0 = 0; r0 < nq; r0 += chunk) {
        const std::size_t rows = std::min(chunk, nq - r0);
        S* p_data;
        if (record) {
          p_data = probs_store->data() + r0 * nk;
        } else {
          scratch.resize(rows * nk);
          p_data = scratch.data();
        }
        Map<S> p(p_data, idx(rows), idx(nk));
        const CSMap<S> qh(qd + (blk.q_begin + r0) * d + h * dh, idx(rows), idx(dh),
                          Eigen::OuterStride<>(idx(d)));
        if (nk > 0) {
          p.noalias() = (qh * kh.transpose()) * scale_factor;
        }
        for (std::size_t i = 0; i < rows; ++i) {
          const std::size_t qi = r0 + i;
          S* row = p_data + i * nk;
          S mx = neg_inf<S>();
          for (std::size_t j = 0; j < nk; ++j) {
            const bool allowed = (key_valid.empty() || key_valid[blk.k_begin + j] != 0) &&
                                 (!blk.causal || j + nq <= qi + nk);
            if (!allowed) {
              row[j] = neg_inf<S>();
            } else {
              mx = std::max(mx, row[j]);
            }
          }
          if (mx == neg_inf<S>()) {
            std::fill(row, row + nk, S{0});
            if (h == 0) {
              ++g_attention_diag.fully_masked_rows;
            }
            continue;
          }
          double total = 0.0;
          for (std::size_t j = 0; j < nk; ++j) {
            const double e = row[j] == neg_inf<S>() ? 0.0 : std::exp(static_cast<double>(row[j] - mx));
            row[j] = static_cast<S>(e);
            total += e;
          }
          const S inv = static_cast<S>(1.0 / total);
          for (std::size_t j = 0; j < nk; ++j) {
            row[j] *= inv;
          }
        }
        SMap<S> oh(out.data() + (blk.q_begin + r0) * d + h * dh, idx(rows), idx(dh),
                   Eigen::OuterStride<>(idx(d)));
        if (nk > 0) {
          oh.noalias() = p * vh;
        }
      }
    }
  }

  if (!record) {
    return finish<S>({nq_total, d}, std::move(out), false, {}, {});
  }
  std::vector<AttentionBlock> saved_blocks(blocks.begin(), blocks.end());
  return finish<S>(
      {nq_total, d}, std::move(out), true, {&q, &k, &v},
      [d, dh, heads, scale_factor, saved_blocks = std::move(saved_blocks),
       saved_probs = std::move(saved_probs)](NodeT<S>& self) {
        auto& Q = *self.parents[0];
        auto& K = *self.parents[1];
        auto& V = *self.parents[2];
        S* dq = Q.requires_grad ? Q.grad_buffer().data() : nullptr;
        S* dk = K.requires_grad ? K.grad_buffer().data() : nullptr;
        S* dv = V.requires_grad ? V.grad_buffer().data() : nullptr;
        RowMat<S> dp;
        for (std::size_t b = 0; b < saved_blocks.size(); ++b) {
          const auto& blk = saved_blocks[b];
          const std::size_t nq = blk.q_end - blk.q_begin;
          const std::size_t nk = blk.k_end - blk.k_begin;
          if (nq == 0 || nk == 0) {
            continue;
          }
          for (std::size_t h = 0; h < heads; ++h) {
            const CMap<S> p(saved_probs[b * heads + h].data(), idx(nq), idx(nk));
            const CSMap<S> doh(self.grad.data() + blk.q_begin * d + h * dh, idx(nq), idx(dh),
                               Eigen::OuterStride<>(idx(d)));
            const CSMap<S> vh(V.value.data() + blk.k_begin * d + h * dh, idx(nk), idx(dh),
                              Eigen::OuterStride<>(idx(d)));
            if (dv != nullptr) {
              SMap<S> dvh(dv + blk.k_begin * d + h * dh, idx(nk), idx(dh), Eigen::OuterStride<>(idx(d)));
              dvh.noalias() += p.transpose() * doh;
            }
            if (dq == nullptr && dk == nullptr) {
              continue;
            }
            dp.noalias() = doh * vh.transpose();
            for (std::size_t i = 0; i < nq; ++i) {
              double dot = 0.0;
              for (std::size_t j = 0; j < nk; ++j) {
                dot += static_cast<double>(dp(idx(i), idx(j))) * p(idx(i), idx(j));
              }
              for (std::size_t j = 0; j < nk; ++j) {
                dp(idx(i), idx(j)) = p(idx(i), idx(j)) * static_cast<S>(dp(idx(i), idx(j)) - dot) * scale_factor;
              }
            }
            if (dq != nullptr) {
              const CSMap<S> kh(K.value.data() + blk.k_begin * d + h * dh, idx(nk), idx(dh),
                                Eigen::OuterStride<>(idx(d)));
              SMap<S> dqh(dq + blk.q_begin * d + h * dh, idx(nq), idx(dh), Eigen::OuterStride<>(idx(d)));
              dqh.noalias() += dp * kh;
            }
            if (dk != nullptr) {
              const CSMap<S> qh(Q.value.data() + blk.q_begin * d + h * dh, idx(nq), idx(dh),
                                Eigen::OuterStride<>(idx(d)));
              SMap<S> dkh(dk + blk.k_begin * d + h * dh, idx(nk), idx(dh), Eigen::OuterStride<>(idx(d)));
              dkh.noalias() += dp.transpose() * qh;
            }
          }
        }
      });
}

template <typename S>
Tensor<S> grouped_matmul_nt(const Tensor<S>& a, const Tensor<S>& b, std::span<const RowGroup> groups,
                            std::size_t width) {
  require_defined(a, "grouped_matmul_nt");
  require_defined(b, "grouped_matmul_nt");
  const std::size_t d = a.cols();
  const std::size_t ra = a.rows();
  if (b.numel() != 0 && b.cols() != d) {
    throw DimensionError("grouped_matmul_nt: column counts differ, " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
  const std::size_t rb = b.numel() == 0 ? 0 : b.rows();
  for (const auto& g : groups) {
    if (g.a_begin > g.a_end || g.a_end > ra || g.b_begin > g.b_end || g.b_end > rb) {
      throw IndexError("grouped_matmul_nt: group out of range");
    }
    if (g.b_end - g.b_begin > width) {
      throw DimensionError("grouped_matmul_nt: group wider than " + std::to_string(width));
    }
  }
  std::vector<S> out(ra * width, neg_inf<S>());
  const S* ad = a.node()->value.data();
  const S* bd = b.node()->value.data();
  for (const auto& g : groups) {
    const std::size_t na = g.a_end - g.a_begin;
    const std::size_t nb = g.b_end - g.b_begin;
    if (na == 0 || nb == 0) {
      continue;
    }
    const CMap<S> ab(ad + g.a_begin * d, idx(na), idx(d));
    const CMap<S> bb(bd + g.b_begin * d, idx(nb), idx(d));
    SMap<S> ob(out.data() + g.a_begin * width, idx(na), idx(nb), Eigen::OuterStride<>(idx(width)));
    ob.noalias() = ab * bb.transpose();
  }
  const bool record = should_record({&a, &b});
  if (!record) {
    return finish<S>({ra, width}, std::move(out), false, {}, {});
  }
  std::vector<RowGroup> saved(groups.begin(), groups.end());
  return finish<S>({ra, width}, std::move(out), true, {&a, &b},
                   [d, width, saved = std::move(saved)](NodeT<S>& self) {
                     auto& A = *self.parents[0];
                     auto& B = *self.parents[1];
                     for (const auto& g : saved) {
                       const std::size_t na = g.a_end - g.a_begin;
                       const std::size_t nb = g.b_end - g.b_begin;
                       if (na == 0 || nb == 0) {
                         continue;
                       }
                       const CSMap<S> dout(self.grad.data() + g.a_begin * width, idx(na), idx(nb),
                                           Eigen::OuterStride<>(idx(width)));
                       if (A.requires_grad) {
                         Map<S> da(A.grad_buffer().data() + g.a_begin * d, idx(na), idx(d));
                         da.noalias() += dout * CMap<S>(B.value.data() + g.b_begin * d, idx(nb), idx(d));
                       }
                       if (B.requires_grad) {
                         Map<S> db(B.grad_buffer().data() + g.b_begin * d, idx(nb), idx(d));
                         db.noalias() += dout.transpose() * CMap<S>(A.value.data() + g.a_begin * d, idx(na), idx(d));
                       }
                     }
                   });
}

template <typename S>
Tensor<S> add_constant(const Tensor<S>& a, std::span<const S> constant) {
  require_defined(a, "add_constant");
  if (constant.size() != a.numel()) {
    throw DimensionError("add_constant: size mismatch");
  }
  std::vector<S> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] += constant[i];
  }
  const bool record = should_record({&a});
  return finish<S>(a.shape(), std::move(out), record, {&a}, [](NodeT<S>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += self.grad[i];
    }
  });
}

#define ENTDEC_INSTANTIATE_OPS(S)                                                                  \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                                  \
  template Tensor<S> matmul_nt(const Tensor<S>&, const Tensor<S>&);                               \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                     \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                     \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                     \
  template Tensor<S> scale(const Tensor<S>&, S);                                                  \
  template Tensor<S> add_bias(const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> relu(const Tensor<S>&);                                                      \
  template Tensor<S> dropout(const Tensor<S>&, double, Rng&);                                     \
  template Tensor<S> softmax(const Tensor<S>&, std::size_t);                                      \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, double);    \
  template Tensor<S> gather_rows(const Tensor<S>&, std::span<const std::int64_t>);                \
  template Tensor<S> concat_rows(const Tensor<S>&, const Tensor<S>&);                             \
  template Tensor<S> concat_cols(const Tensor<S>&, const Tensor<S>&);                             \
  template Tensor<S> slice_rows(const Tensor<S>&, std::size_t, std::size_t);                      \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                            \
  template Tensor<S> max_pool_rows(const Tensor<S>&);                                             \
  template Tensor<S> max_pool_segments(const Tensor<S>&, std::span<const std::size_t>);           \
  template Tensor<S> sum(const Tensor<S>&);                                                       \
  template Tensor<S> mean(const Tensor<S>&);                                                      \
  template Tensor<S> mask_fill_neg_inf(const Tensor<S>&, std::span<const std::uint8_t>);          \
  template Tensor<S> cross_entropy(const Tensor<S>&, std::span<const std::int64_t>);              \
  template Tensor<S> multi_head_attention(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,   \
                                          std::size_t, std::span<const AttentionBlock>,           \
                                          std::span<const std::uint8_t>);                         \
  template Tensor<S> grouped_matmul_nt(const Tensor<S>&, const Tensor<S>&,                        \
                                       std::span<const RowGroup>, std::size_t);                   \
  template Tensor<S> add_constant(const Tensor<S>&, std::span<const S>);

ENTDEC_INSTANTIATE_OPS(float)
ENTDEC_INSTANTIATE_OPS(double)

#undef ENTDEC_INSTANTIATE_OPS

}  // namespace entdec

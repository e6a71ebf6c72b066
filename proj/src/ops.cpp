#include "atgan/ops.hpp"

#include <algorithm>
#include <optional>
#include <cmath>
#include <stdexcept>
#include <string>

namespace atgan {

namespace {

constexpr float kLogFloor = 1e-30f;

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

bool track(Tape* tape, bool any_rg) { return tape != nullptr && any_rg; }

/// Double view of a tensor's contents for the precise (float64) path.
class Wide {
 public:
  explicit Wide(const Tensor& t) {
    if (t.has_shadow()) {
      ptr_ = t.shadow().data();
    } else {
      copy_.assign(t.values().begin(), t.values().end());
      ptr_ = copy_.data();
    }
  }
  const double* data() const { return ptr_; }
  double operator[](std::size_t i) const { return ptr_[i]; }

 private:
  std::vector<double> copy_;
  const double* ptr_ = nullptr;
};

// ---- forward kernels, templated on the scalar type ----

template <typename T>
void matmul_kernel(const T* av, const T* bv, T* ov, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    for (int kk = 0; kk < k; ++kk) {
      const T aik = av[i * k + kk];
      if (aik == T(0)) continue;
      const T* brow = bv + static_cast<std::size_t>(kk) * n;
      T* orow = ov + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
}

template <typename T>
void unary_kernel(EwKind kind, const T* xv, T* ov, std::size_t n) {
  switch (kind) {
    case EwKind::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) ov[i] = T(1) / (T(1) + std::exp(-xv[i]));
      break;
    case EwKind::Tanh:
      for (std::size_t i = 0; i < n; ++i) ov[i] = std::tanh(xv[i]);
      break;
    case EwKind::Relu:
      for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
      break;
    default:
      break;
  }
}

template <typename T>
void binary_kernel(EwKind kind, const T* av, const T* bv, T* ov, std::size_t n) {
  if (kind == EwKind::Add) {
    for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] + bv[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) ov[i] = av[i] * bv[i];
  }
}

template <typename T>
void softmax_kernel(const T* xv, T* ov, int m, int n) {
  for (int i = 0; i < m; ++i) {
    const T* xr = xv + static_cast<std::size_t>(i) * n;
    T* yr = ov + static_cast<std::size_t>(i) * n;
    T mx = xr[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += static_cast<double>(yr[j]);
    }
    const T inv = static_cast<T>(1.0 / total);
    for (int j = 0; j < n; ++j) yr[j] *= inv;
  }
}

template <typename T>
void conv_time_kernel(const T* sv, const T* kv, T bias, T* ov, int l, int c, int m) {
  for (int j = 0; j < l; ++j) {
    double acc = 0.0;
    for (int cc = 0; cc < c; ++cc) {
      const T* sr = sv + static_cast<std::size_t>(j + cc) * m;
      const T* kr = kv + static_cast<std::size_t>(cc) * m;
      for (int mm = 0; mm < m; ++mm) acc += static_cast<double>(sr[mm]) * static_cast<double>(kr[mm]);
    }
    ov[j] = static_cast<T>(acc) + bias;
  }
}

}  // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({m, n});
  if (precise_mode()) {
    Wide aw(a), bw(b);
    auto& os = out.ensure_shadow();
    std::fill(os.begin(), os.end(), 0.0);
    matmul_kernel<double>(aw.data(), bw.data(), os.data(), m, k, n);
    out.narrow_from_shadow();
  } else {
    matmul_kernel<float>(a.values().data(), b.values().data(), out.values().data(), m, k, n);
  }
  if (track(tape, a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([a = a, b = b, out, m, k, n]() mutable {
      const auto& og = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        const float* bv = b.values().data();
        for (int i = 0; i < m; ++i) {
          for (int j = 0; j < n; ++j) {
            const float g = og[static_cast<std::size_t>(i) * n + j];
            if (g == 0.0f) continue;
            for (int kk = 0; kk < k; ++kk) {
              ga[static_cast<std::size_t>(i) * k + kk] += g * bv[static_cast<std::size_t>(kk) * n + j];
            }
          }
        }
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        const float* av = a.values().data();
        for (int i = 0; i < m; ++i) {
          for (int kk = 0; kk < k; ++kk) {
            const float aik = av[static_cast<std::size_t>(i) * k + kk];
            if (aik == 0.0f) continue;
            for (int j = 0; j < n; ++j) {
              gb[static_cast<std::size_t>(kk) * n + j] += aik * og[static_cast<std::size_t>(i) * n + j];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor elementwise(Tape* tape, EwKind kind, const Tensor& x) {
  if (kind == EwKind::Add || kind == EwKind::Mul) {
    throw std::invalid_argument("elementwise: binary kind used with one operand");
  }
  const std::size_t n = x.size();
  Tensor out = Tensor::zeros(x.shape());
  if (precise_mode()) {
    Wide xw(x);
    auto& os = out.ensure_shadow();
    unary_kernel<double>(kind, xw.data(), os.data(), n);
    out.narrow_from_shadow();
  } else {
    unary_kernel<float>(kind, x.values().data(), out.values().data(), n);
  }
  if (track(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([x = x, out, kind, n]() mutable {
      const auto& og = out.grad();
      const auto& ov = out.values();
      const auto& xv = x.values();
      auto& gx = x.grad();
      switch (kind) {
        case EwKind::Sigmoid:
          for (std::size_t i = 0; i < n; ++i) gx[i] += og[i] * ov[i] * (1.0f - ov[i]);
          break;
        case EwKind::Tanh:
          for (std::size_t i = 0; i < n; ++i) gx[i] += og[i] * (1.0f - ov[i] * ov[i]);
          break;
        case EwKind::Relu:
          for (std::size_t i = 0; i < n; ++i) gx[i] += xv[i] > 0.0f ? og[i] : 0.0f;
          break;
        default:
          break;
      }
    });
  }
  return out;
}

Tensor elementwise(Tape* tape, EwKind kind, const Tensor& a, const Tensor& b) {
  if (kind != EwKind::Add && kind != EwKind::Mul) {
    throw std::invalid_argument("elementwise: unary kind used with two operands");
  }
  require_same_shape(a, b, "elementwise");
  const std::size_t n = a.size();
  Tensor out = Tensor::zeros(a.shape());
  if (precise_mode()) {
    Wide aw(a), bw(b);
    auto& os = out.ensure_shadow();
    binary_kernel<double>(kind, aw.data(), bw.data(), os.data(), n);
    out.narrow_from_shadow();
  } else {
    binary_kernel<float>(kind, a.values().data(), b.values().data(), out.values().data(), n);
  }
  if (track(tape, a.requires_grad() || b.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([a = a, b = b, out, kind, n]() mutable {
      const auto& og = out.grad();
      if (kind == EwKind::Add) {
        if (a.requires_grad()) {
          auto& ga = a.grad();
          for (std::size_t i = 0; i < n; ++i) ga[i] += og[i];
        }
        if (b.requires_grad()) {
          auto& gb = b.grad();
          for (std::size_t i = 0; i < n; ++i) gb[i] += og[i];
        }
      } else {
        if (a.requires_grad()) {
          auto& ga = a.grad();
          const auto& bv = b.values();
          for (std::size_t i = 0; i < n; ++i) ga[i] += og[i] * bv[i];
        }
        if (b.requires_grad()) {
          auto& gb = b.grad();
          const auto& av = a.values();
          for (std::size_t i = 0; i < n; ++i) gb[i] += og[i] * av[i];
        }
      }
    });
  }
  return out;
}

Tensor softmax_rows(Tape* tape, const Tensor& x) {
  require_2d(x, "softmax_rows");
  const int m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros(x.shape());
  if (precise_mode()) {
    Wide xw(x);
    auto& os = out.ensure_shadow();
    softmax_kernel<double>(xw.data(), os.data(), m, n);
    out.narrow_from_shadow();
  } else {
    softmax_kernel<float>(x.values().data(), out.values().data(), m, n);
  }
  if (track(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([x = x, out, m, n]() mutable {
      const auto& og = out.grad();
      auto& gx = x.grad();
      const auto& yv = out.values();
      for (int i = 0; i < m; ++i) {
        const float* yr = yv.data() + static_cast<std::size_t>(i) * n;
        const float* gr = og.data() + static_cast<std::size_t>(i) * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += static_cast<double>(gr[j]) * yr[j];
        for (int j = 0; j < n; ++j) {
          gx[static_cast<std::size_t>(i) * n + j] += yr[j] * (gr[j] - static_cast<float>(dot));
        }
      }
    });
  }
  return out;
}

Tensor embed_lookup(Tape* tape, const Tensor& table, const std::vector<int>& ids) {
  require_2d(table, "embed_lookup");
  const int v = table.dim(0), m = table.dim(1);
  if (ids.empty()) {
    throw std::invalid_argument("embed_lookup: empty id list");
  }
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw std::out_of_range("embed_lookup: id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(v));
    }
  }
  Tensor out = Tensor::zeros({static_cast<int>(ids.size()), m});
  if (precise_mode()) {
    Wide tw(table);
    auto& os = out.ensure_shadow();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const double* src = tw.data() + static_cast<std::size_t>(ids[i]) * m;
      std::copy(src, src + m, os.data() + i * m);
    }
    out.narrow_from_shadow();
  } else {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const float* src = table.row(ids[i]);
      std::copy(src, src + m, out.values().data() + i * m);
    }
  }
  if (track(tape, table.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([table = table, out, ids, m]() mutable {
      const auto& og = out.grad();
      auto& gt = table.grad();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        float* dst = gt.data() + static_cast<std::size_t>(ids[i]) * m;
        const float* src = og.data() + i * m;
        for (int j = 0; j < m; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor conv_time(Tape* tape, const Tensor& s, const Tensor& kernel, const Tensor& bias) {
  require_2d(s, "conv_time");
  require_2d(kernel, "conv_time");
  const int t = s.dim(0), m = s.dim(1), c = kernel.dim(0), km = kernel.dim(1);
  if (km != m) {
    throw std::invalid_argument("conv_time: kernel width " + std::to_string(km) +
                                " does not match embedding dim " + std::to_string(m));
  }
  if (c > t) {
    throw std::invalid_argument("conv_time: caption shorter than kernel window (T=" + std::to_string(t) +
                                ", C=" + std::to_string(c) + ")");
  }
  if (bias.size() != 1) {
    throw std::invalid_argument("conv_time: bias must be a single element, got " + shape_str(bias.shape()));
  }
  const int l = t - c + 1;
  Tensor out = Tensor::zeros({l});
  if (precise_mode()) {
    Wide sw(s), kw(kernel), bw(bias);
    auto& os = out.ensure_shadow();
    conv_time_kernel<double>(sw.data(), kw.data(), bw[0], os.data(), l, c, m);
    out.narrow_from_shadow();
  } else {
    conv_time_kernel<float>(s.values().data(), kernel.values().data(), bias.values()[0],
                            out.values().data(), l, c, m);
  }
  if (track(tape, s.requires_grad() || kernel.requires_grad() || bias.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([s = s, kernel = kernel, bias = bias, out, l, c, m]() mutable {
      const auto& og = out.grad();
      if (s.requires_grad()) {
        auto& gs = s.grad();
        const auto& kv = kernel.values();
        for (int j = 0; j < l; ++j) {
          const float g = og[static_cast<std::size_t>(j)];
          if (g == 0.0f) continue;
          for (int cc = 0; cc < c; ++cc) {
            const float* kr = kv.data() + static_cast<std::size_t>(cc) * m;
            float* gr = gs.data() + static_cast<std::size_t>(j + cc) * m;
            for (int mm = 0; mm < m; ++mm) gr[mm] += g * kr[mm];
          }
        }
      }
      if (kernel.requires_grad()) {
        auto& gk = kernel.grad();
        const auto& sv = s.values();
        for (int j = 0; j < l; ++j) {
          const float g = og[static_cast<std::size_t>(j)];
          if (g == 0.0f) continue;
          for (int cc = 0; cc < c; ++cc) {
            const float* sr = sv.data() + static_cast<std::size_t>(j + cc) * m;
            float* gr = gk.data() + static_cast<std::size_t>(cc) * m;
            for (int mm = 0; mm < m; ++mm) gr[mm] += g * sr[mm];
          }
        }
      }
      if (bias.requires_grad()) {
        float acc = 0.0f;
        for (int j = 0; j < l; ++j) acc += og[static_cast<std::size_t>(j)];
        bias.grad()[0] += acc;
      }
    });
  }
  return out;
}

Tensor max_over_time(Tape* tape, const Tensor& v) {
  if (v.ndim() != 1) {
    throw std::invalid_argument("max_over_time: expected 1-D tensor, got " + shape_str(v.shape()));
  }
  Tensor pooled = max_pool_rows(tape, reshape_copy(tape, v, {v.dim(0), 1}), v.dim(0));
  return reshape_copy(tape, pooled, {1});
}

Tensor batch_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BnMode mode, Tensor& running_mean, Tensor& running_var,
                  float momentum, float eps) {
  require_2d(x, "batch_norm");
  const int b = x.dim(0), f = x.dim(1);
  auto check_feat = [f](const Tensor& t, const char* name) {
    if (t.ndim() != 1 || t.dim(0) != f) {
      throw std::invalid_argument("batch_norm: " + std::string(name) + " shape " + shape_str(t.shape()) +
                                  " does not match feature count " + std::to_string(f));
    }
  };
  check_feat(gamma, "gamma");
  check_feat(beta, "beta");
  check_feat(running_mean, "running_mean");
  check_feat(running_var, "running_var");

  const bool precise = precise_mode();
  std::optional<Wide> xw;
  if (precise) xw.emplace(x);
  const std::vector<float>& xv = x.values();
  auto xat = [&](int i, int j) -> double {
    return precise ? (*xw)[static_cast<std::size_t>(i) * f + j]
                   : static_cast<double>(xv[static_cast<std::size_t>(i) * f + j]);
  };

  std::vector<double> mean(static_cast<std::size_t>(f)), inv_std(static_cast<std::size_t>(f));
  if (mode == BnMode::Train) {
    for (int j = 0; j < f; ++j) {
      double mu = 0.0;
      for (int i = 0; i < b; ++i) mu += xat(i, j);
      mu /= b;
      double var = 0.0;
      for (int i = 0; i < b; ++i) {
        const double d = xat(i, j) - mu;
        var += d * d;
      }
      var /= b;
      mean[static_cast<std::size_t>(j)] = mu;
      inv_std[static_cast<std::size_t>(j)] = 1.0 / std::sqrt(var + eps);
      auto& rm = running_mean.values();
      auto& rv = running_var.values();
      rm[static_cast<std::size_t>(j)] =
          momentum * rm[static_cast<std::size_t>(j)] + (1.0f - momentum) * static_cast<float>(mu);
      rv[static_cast<std::size_t>(j)] =
          momentum * rv[static_cast<std::size_t>(j)] + (1.0f - momentum) * static_cast<float>(var);
    }
  } else {
    for (int j = 0; j < f; ++j) {
      mean[static_cast<std::size_t>(j)] = running_mean.values()[static_cast<std::size_t>(j)];
      inv_std[static_cast<std::size_t>(j)] =
          1.0 / std::sqrt(static_cast<double>(running_var.values()[static_cast<std::size_t>(j)]) + eps);
    }
  }

  Tensor out = Tensor::zeros(x.shape());
  std::vector<float> xhat(static_cast<std::size_t>(b) * f);
  std::vector<float> inv_std_f(static_cast<std::size_t>(f));
  for (int j = 0; j < f; ++j) inv_std_f[static_cast<std::size_t>(j)] = static_cast<float>(inv_std[static_cast<std::size_t>(j)]);
  {
    Wide gw(gamma), bw(beta);
    std::vector<double>* os = precise ? &out.ensure_shadow() : nullptr;
    float* ov = precise ? nullptr : out.values().data();
    for (int i = 0; i < b; ++i) {
      for (int j = 0; j < f; ++j) {
        const std::size_t idx = static_cast<std::size_t>(i) * f + j;
        const double h = (xat(i, j) - mean[static_cast<std::size_t>(j)]) * inv_std[static_cast<std::size_t>(j)];
        xhat[idx] = static_cast<float>(h);
        const double y = gw[static_cast<std::size_t>(j)] * h + bw[static_cast<std::size_t>(j)];
        if (precise) {
          (*os)[idx] = y;
        } else {
          ov[idx] = static_cast<float>(y);
        }
      }
    }
    if (precise) out.narrow_from_shadow();
  }

  if (track(tape, x.requires_grad() || gamma.requires_grad() || beta.requires_grad())) {
    out.set_requires_grad(true);
    const bool train = mode == BnMode::Train;
    tape->record([x = x, gamma = gamma, beta = beta, out, xhat = std::move(xhat),
                  inv_std = std::move(inv_std_f), b, f, train]() mutable {
      const auto& og = out.grad();
      if (gamma.requires_grad()) {
        auto& gg = gamma.grad();
        for (int j = 0; j < f; ++j) {
          double acc = 0.0;
          for (int i = 0; i < b; ++i) {
            const std::size_t idx = static_cast<std::size_t>(i) * f + j;
            acc += static_cast<double>(og[idx]) * xhat[idx];
          }
          gg[static_cast<std::size_t>(j)] += static_cast<float>(acc);
        }
      }
      if (beta.requires_grad()) {
        auto& gb = beta.grad();
        for (int j = 0; j < f; ++j) {
          double acc = 0.0;
          for (int i = 0; i < b; ++i) acc += og[static_cast<std::size_t>(i) * f + j];
          gb[static_cast<std::size_t>(j)] += static_cast<float>(acc);
        }
      }
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (int j = 0; j < f; ++j) {
          const float k = gamma.values()[static_cast<std::size_t>(j)] * inv_std[static_cast<std::size_t>(j)];
          if (train) {
            double mean_g = 0.0, mean_gh = 0.0;
            for (int i = 0; i < b; ++i) {
              const std::size_t idx = static_cast<std::size_t>(i) * f + j;
              mean_g += og[idx];
              mean_gh += static_cast<double>(og[idx]) * xhat[idx];
            }
            mean_g /= b;
            mean_gh /= b;
            for (int i = 0; i < b; ++i) {
              const std::size_t idx = static_cast<std::size_t>(i) * f + j;
              gx[idx] += k * (og[idx] - static_cast<float>(mean_g) -
                              xhat[idx] * static_cast<float>(mean_gh));
            }
          } else {
            for (int i = 0; i < b; ++i) {
              const std::size_t idx = static_cast<std::size_t>(i) * f + j;
              gx[idx] += k * og[idx];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor add_rows(Tape* tape, const Tensor& x, const Tensor& rowv) {
  require_2d(x, "add_rows");
  require_2d(rowv, "add_rows");
  const int m = x.dim(0), n = x.dim(1);
  if (rowv.dim(0) != 1 || rowv.dim(1) != n) {
    throw std::invalid_argument("add_rows: row shape " + shape_str(rowv.shape()) +
                                " does not broadcast over " + shape_str(x.shape()));
  }
  Tensor out = Tensor::zeros(x.shape());
  if (precise_mode()) {
    Wide xw(x), rw(rowv);
    auto& os = out.ensure_shadow();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        os[static_cast<std::size_t>(i) * n + j] = xw[static_cast<std::size_t>(i) * n + j] + rw[static_cast<std::size_t>(j)];
      }
    }
    out.narrow_from_shadow();
  } else {
    const float* rv = rowv.values().data();
    const float* xv = x.values().data();
    float* ov = out.values().data();
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        ov[static_cast<std::size_t>(i) * n + j] = xv[static_cast<std::size_t>(i) * n + j] + rv[j];
      }
    }
  }
  if (track(tape, x.requires_grad() || rowv.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([x = x, rowv = rowv, out, m, n]() mutable {
      const auto& og = out.grad();
      if (x.requires_grad()) {
        auto& gx = x.grad();
        for (std::size_t i = 0; i < og.size(); ++i) gx[i] += og[i];
      }
      if (rowv.requires_grad()) {
        auto& gr = rowv.grad();
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int i = 0; i < m; ++i) acc += og[static_cast<std::size_t>(i) * n + j];
          gr[static_cast<std::size_t>(j)] += static_cast<float>(acc);
        }
      }
    });
  }
  return out;
}

Tensor scale(Tape* tape, const Tensor& x, float c) {
  Tensor out = Tensor::zeros(x.shape());
  if (precise_mode()) {
    Wide xw(x);
    auto& os = out.ensure_shadow();
    for (std::size_t i = 0; i < x.size(); ++i) os[i] = static_cast<double>(c) * xw[i];
    out.narrow_from_shadow();
  } else {
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = c * xv[i];
  }
  if (track(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([x = x, out, c]() mutable {
      const auto& og = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < og.size(); ++i) gx[i] += c * og[i];
    });
  }
  return out;
}

Tensor log_ew(Tape* tape, const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  if (precise_mode()) {
    Wide xw(x);
    auto& os = out.ensure_shadow();
    for (std::size_t i = 0; i < x.size(); ++i) os[i] = std::log(std::max(xw[i], static_cast<double>(kLogFloor)));
    out.narrow_from_shadow();
  } else {
    const auto& xv = x.values();
    auto& ov = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = std::log(std::max(xv[i], kLogFloor));
  }
  if (track(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([x = x, out]() mutable {
      const auto& og = out.grad();
      const auto& xv = x.values();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < og.size(); ++i) gx[i] += og[i] / std::max(xv[i], kLogFloor);
    });
  }
  return out;
}

Tensor pick(Tape* tape, const Tensor& x, std::size_t flat_index) {
  if (flat_index >= x.size()) {
    throw std::out_of_range("pick: index " + std::to_string(flat_index) + " out of range for " +
                            shape_str(x.shape()));
  }
  Tensor out = Tensor::scalar(x.values()[flat_index]);
  if (precise_mode()) {
    Wide xw(x);
    out.ensure_shadow()[0] = xw[flat_index];
    out.narrow_from_shadow();
  }
  if (track(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([x = x, out, flat_index]() mutable { x.grad()[flat_index] += out.grad()[0]; });
  }
  return out;
}

Tensor sum_all(Tape* tape, const Tensor& x) {
  Tensor out = Tensor::scalar(0.0f);
  if (precise_mode()) {
    Wide xw(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += xw[i];
    out.ensure_shadow()[0] = acc;
    out.narrow_from_shadow();
  } else {
    double acc = 0.0;
    for (float v : x.values()) acc += v;
    out.values()[0] = static_cast<float>(acc);
  }
  if (track(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([x = x, out]() mutable {
      const float g = out.grad()[0];
      auto& gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

Tensor mean_rows(Tape* tape, const Tensor& x) {
  require_2d(x, "mean_rows");
  const int k = x.dim(0), d = x.dim(1);
  Tensor out = Tensor::zeros({1, d});
  if (precise_mode()) {
    Wide xw(x);
    auto& os = out.ensure_shadow();
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += xw[static_cast<std::size_t>(i) * d + j];
      os[static_cast<std::size_t>(j)] = acc / k;
    }
    out.narrow_from_shadow();
  } else {
    for (int j = 0; j < d; ++j) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += x.values()[static_cast<std::size_t>(i) * d + j];
      out.values()[static_cast<std::size_t>(j)] = static_cast<float>(acc / k);
    }
  }
  if (track(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([x = x, out, k, d]() mutable {
      const auto& og = out.grad();
      auto& gx = x.grad();
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < d; ++j) {
          gx[static_cast<std::size_t>(i) * d + j] += og[static_cast<std::size_t>(j)] / static_cast<float>(k);
        }
      }
    });
  }
  return out;
}

Tensor concat_rows(Tape* tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
  const int n = parts[0].dim(1);
  int total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    require_2d(p, "concat_rows");
    if (p.dim(1) != n) {
      throw std::invalid_argument("concat_rows: column mismatch " + shape_str(p.shape()) +
                                  " vs " + shape_str(parts[0].shape()));
    }
    total += p.dim(0);
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({total, n});
  if (precise_mode()) {
    auto& os = out.ensure_shadow();
    std::size_t offset = 0;
    for (const auto& p : parts) {
      Wide pw(p);
      std::copy(pw.data(), pw.data() + p.size(), os.data() + offset);
      offset += p.size();
    }
    out.narrow_from_shadow();
  } else {
    std::size_t offset = 0;
    for (const auto& p : parts) {
      std::copy(p.values().begin(), p.values().end(), out.values().data() + offset);
      offset += p.size();
    }
  }
  if (track(tape, rg)) {
    out.set_requires_grad(true);
    tape->record([parts = parts, out]() mutable {
      const auto& og = out.grad();
      std::size_t offset = 0;
      for (auto& p : parts) {
        const std::size_t count = p.size();
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (std::size_t i = 0; i < count; ++i) gp[i] += og[offset + i];
        }
        offset += count;
      }
    });
  }
  return out;
}

Tensor concat_cols(Tape* tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  const int m = parts[0].dim(0);
  int total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    require_2d(p, "concat_cols");
    if (p.dim(0) != m) {
      throw std::invalid_argument("concat_cols: row mismatch " + shape_str(p.shape()) +
                                  " vs " + shape_str(parts[0].shape()));
    }
    total += p.dim(1);
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros({m, total});
  if (precise_mode()) {
    auto& os = out.ensure_shadow();
    int c = 0;
    for (const auto& p : parts) {
      Wide pw(p);
      const int w = p.dim(1);
      for (int i = 0; i < m; ++i) {
        std::copy(pw.data() + static_cast<std::size_t>(i) * w, pw.data() + static_cast<std::size_t>(i) * w + w,
                  os.data() + static_cast<std::size_t>(i) * total + c);
      }
      c += w;
    }
    out.narrow_from_shadow();
  } else {
    int c = 0;
    for (const auto& p : parts) {
      const int w = p.dim(1);
      for (int i = 0; i < m; ++i) {
        std::copy(p.row(i), p.row(i) + w, out.values().data() + static_cast<std::size_t>(i) * total + c);
      }
      c += w;
    }
  }
  if (track(tape, rg)) {
    out.set_requires_grad(true);
    tape->record([parts = parts, out, m, total]() mutable {
      const auto& og = out.grad();
      int c = 0;
      for (auto& p : parts) {
        const int w = p.dim(1);
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < w; ++j) {
              gp[static_cast<std::size_t>(i) * w + j] += og[static_cast<std::size_t>(i) * total + c + j];
            }
          }
        }
        c += w;
      }
    });
  }
  return out;
}

Tensor max_pool_rows(Tape* tape, const Tensor& x, int segment) {
  require_2d(x, "max_pool_rows");
  const int rows = x.dim(0), f = x.dim(1);
  if (segment < 1 || rows % segment != 0) {
    throw std::invalid_argument("max_pool_rows: segment " + std::to_string(segment) +
                                " does not divide row count " + std::to_string(rows));
  }
  const int s = rows / segment;
  Tensor out = Tensor::zeros({s, f});
  std::vector<int> arg(static_cast<std::size_t>(s) * f);
  if (precise_mode()) {
    Wide xw(x);
    auto& os = out.ensure_shadow();
    for (int seg = 0; seg < s; ++seg) {
      for (int j = 0; j < f; ++j) {
        int best = seg * segment;
        double bv = xw[static_cast<std::size_t>(best) * f + j];
        for (int i = seg * segment + 1; i < (seg + 1) * segment; ++i) {
          const double v = xw[static_cast<std::size_t>(i) * f + j];
          if (v > bv) {
            bv = v;
            best = i;
          }
        }
        os[static_cast<std::size_t>(seg) * f + j] = bv;
        arg[static_cast<std::size_t>(seg) * f + j] = best;
      }
    }
    out.narrow_from_shadow();
  } else {
    const auto& xv = x.values();
    for (int seg = 0; seg < s; ++seg) {
      for (int j = 0; j < f; ++j) {
        int best = seg * segment;
        float bv = xv[static_cast<std::size_t>(best) * f + j];
        for (int i = seg * segment + 1; i < (seg + 1) * segment; ++i) {
          const float v = xv[static_cast<std::size_t>(i) * f + j];
          if (v > bv) {
            bv = v;
            best = i;
          }
        }
        out.values()[static_cast<std::size_t>(seg) * f + j] = bv;
        arg[static_cast<std::size_t>(seg) * f + j] = best;
      }
    }
  }
  if (track(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([x = x, out, arg = std::move(arg), s, f]() mutable {
      const auto& og = out.grad();
      auto& gx = x.grad();
      for (int seg = 0; seg < s; ++seg) {
        for (int j = 0; j < f; ++j) {
          const std::size_t oi = static_cast<std::size_t>(seg) * f + j;
          gx[static_cast<std::size_t>(arg[oi]) * f + j] += og[oi];
        }
      }
    });
  }
  return out;
}

Tensor reshape_copy(Tape* tape, const Tensor& x, Shape new_shape) {
  if (shape_numel(new_shape) != x.size()) {
    throw std::invalid_argument("reshape_copy: cannot reshape " + shape_str(x.shape()) + " to " +
                                shape_str(new_shape));
  }
  Tensor out = Tensor::from_values(std::move(new_shape), x.values());
  if (precise_mode() && x.has_shadow()) {
    out.ensure_shadow() = x.shadow();
    out.narrow_from_shadow();
  }
  if (track(tape, x.requires_grad())) {
    out.set_requires_grad(true);
    tape->record([x = x, out]() mutable {
      const auto& og = out.grad();
      auto& gx = x.grad();
      for (std::size_t i = 0; i < og.size(); ++i) gx[i] += og[i];
    });
  }
  return out;
}

}  // namespace atgan

#include "mgt/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

#include "mgt/simd/kernels.hpp"

namespace mgt::nn {

namespace {

void require(bool cond, const char* op, const std::string& detail) {
    if (!cond) throw std::invalid_argument(std::string(op) + ": " + detail);
}

template <typename T>
std::string shapes(const Tensor<T>& a, const Tensor<T>& b) {
    return a.shape_string() + " vs " + b.shape_string();
}

template <typename T>
Tensor<T> like(const Tensor<T>& a) {
    return Tensor<T>::matrix(a.rows(), a.cols());
}

}  // namespace

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& A = t.value(a);
    const Tensor<T>& B = t.value(b);
    require(A.cols() == B.rows(), "matmul", shapes(A, B));
    const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
    auto C = Tensor<T>::matrix(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        auto out = C.row(i);
        for (std::size_t p = 0; p < k; ++p) {
            const T s = A(i, p);
            if (s != T(0)) simd::axpy(s, B.row(p), out);
        }
    }
    return t.push(std::move(C), {a, b}, [a, b, n, k](Tape<T>& tp, const Tensor<T>& G) {
        const Tensor<T>& A = tp.value(a);
        const Tensor<T>& B = tp.value(b);
        if (tp.requires_grad(a)) {
            Tensor<T>& dA = tp.grad_buffer(a);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) dA(i, p) += simd::dot(G.row(i), B.row(p));
            }
        }
        if (tp.requires_grad(b)) {
            Tensor<T>& dB = tp.grad_buffer(b);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const T s = A(i, p);
                    if (s != T(0)) simd::axpy(s, G.row(i), dB.row(p));
                }
            }
        }
    });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& A = t.value(a);
    const Tensor<T>& B = t.value(b);
    require(A.size() == B.size() && A.rows() == B.rows(), "add", shapes(A, B));
    Tensor<T> C = like(A);
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] + B[i];
    return t.push(std::move(C), {a, b}, [a, b](Tape<T>& tp, const Tensor<T>& G) {
        for (Var x : {a, b}) {
            if (!tp.requires_grad(x)) continue;
            simd::axpy(T(1), G.values(), tp.grad_buffer(x).values());
        }
    });
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& A = t.value(a);
    const Tensor<T>& B = t.value(b);
    require(A.size() == B.size() && A.rows() == B.rows(), "sub", shapes(A, B));
    Tensor<T> C = like(A);
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] - B[i];
    return t.push(std::move(C), {a, b}, [a, b](Tape<T>& tp, const Tensor<T>& G) {
        if (tp.requires_grad(a)) simd::axpy(T(1), G.values(), tp.grad_buffer(a).values());
        if (tp.requires_grad(b)) simd::axpy(T(-1), G.values(), tp.grad_buffer(b).values());
    });
}

template <typename T>
Var add_row(Tape<T>& t, Var a, Var bias) {
    const Tensor<T>& A = t.value(a);
    const Tensor<T>& b = t.value(bias);
    require(b.size() == A.cols(), "add_row", shapes(A, b));
    Tensor<T> C = like(A);
    for (std::size_t i = 0; i < A.rows(); ++i) {
        for (std::size_t j = 0; j < A.cols(); ++j) C(i, j) = A(i, j) + b[j];
    }
    return t.push(std::move(C), {a, bias}, [a, bias](Tape<T>& tp, const Tensor<T>& G) {
        if (tp.requires_grad(a)) simd::axpy(T(1), G.values(), tp.grad_buffer(a).values());
        if (tp.requires_grad(bias)) {
            auto db = tp.grad_buffer(bias).values();
            for (std::size_t i = 0; i < G.rows(); ++i) simd::axpy(T(1), G.row(i), db);
        }
    });
}

template <typename T>
Var linear(Tape<T>& t, Var x, Var weight, Var bias) {
    return add_row(t, matmul(t, x, weight), bias);
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& A = t.value(a);
    const Tensor<T>& B = t.value(b);
    require(A.size() == B.size() && A.rows() == B.rows(), "mul", shapes(A, B));
    Tensor<T> C = like(A);
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] * B[i];
    return t.push(std::move(C), {a, b}, [a, b](Tape<T>& tp, const Tensor<T>& G) {
        const Tensor<T>& A = tp.value(a);
        const Tensor<T>& B = tp.value(b);
        if (tp.requires_grad(a)) {
            auto& dA = tp.grad_buffer(a);
            for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i] * B[i];
        }
        if (tp.requires_grad(b)) {
            auto& dB = tp.grad_buffer(b);
            for (std::size_t i = 0; i < G.size(); ++i) dB[i] += G[i] * A[i];
        }
    });
}

template <typename T>
Var affine(Tape<T>& t, Var a, T scale, T shift) {
    const Tensor<T>& A = t.value(a);
    Tensor<T> C = like(A);
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = scale * A[i] + shift;
    return t.push(std::move(C), {a}, [a, scale](Tape<T>& tp, const Tensor<T>& G) {
        simd::axpy(scale, G.values(), tp.grad_buffer(a).values());
    });
}

template <typename T>
Var relu(Tape<T>& t, Var a) {
    const Tensor<T>& A = t.value(a);
    Tensor<T> C = like(A);
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = A[i] > T(0) ? A[i] : T(0);
    return t.push(std::move(C), {a}, [a](Tape<T>& tp, const Tensor<T>& G) {
        const Tensor<T>& A = tp.value(a);
        auto& dA = tp.grad_buffer(a);
        for (std::size_t i = 0; i < G.size(); ++i) {
            if (A[i] > T(0)) dA[i] += G[i];
        }
    });
}

template <typename T>
Var pow_scalar(Tape<T>& t, Var a, T exponent) {
    const Tensor<T>& A = t.value(a);
    Tensor<T> C = like(A);
    for (std::size_t i = 0; i < C.size(); ++i) C[i] = std::pow(A[i], exponent);
    return t.push(std::move(C), {a}, [a, exponent](Tape<T>& tp, const Tensor<T>& G) {
        const Tensor<T>& A = tp.value(a);
        auto& dA = tp.grad_buffer(a);
        for (std::size_t i = 0; i < G.size(); ++i) {
            if (exponent == T(1)) {
                dA[i] += G[i];
            } else if (A[i] != T(0)) {
                dA[i] += G[i] * exponent * std::pow(A[i], exponent - T(1));
            }
        }
    });
}

template <typename T>
Var dropout(Tape<T>& t, Var a, const ForwardContext& ctx) {
    if (!ctx.dropout_active()) return a;
    const Tensor<T>& A = t.value(a);
    const T keep_scale = T(1) / T(1 - ctx.dropout);
    std::bernoulli_distribution keep(1.0 - ctx.dropout);
    Tensor<T> mask = like(A);
    Tensor<T> C = like(A);
    for (std::size_t i = 0; i < C.size(); ++i) {
        mask[i] = keep(*ctx.rng) ? keep_scale : T(0);
        C[i] = A[i] * mask[i];
    }
    return t.push(std::move(C), {a}, [a, mask = std::move(mask)](Tape<T>& tp, const Tensor<T>& G) {
        auto& dA = tp.grad_buffer(a);
        for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i] * mask[i];
    });
}

template <typename T>
Var layer_norm(Tape<T>& t, Var x, Var gamma, Var beta, T eps) {
    const Tensor<T>& X = t.value(x);
    const Tensor<T>& g = t.value(gamma);
    const Tensor<T>& b = t.value(beta);
    const std::size_t n = X.rows(), d = X.cols();
    require(g.size() == d && b.size() == d, "layer_norm", shapes(X, g));
    Tensor<T> Y = like(X);
    Tensor<T> xhat = like(X);
    std::vector<T> inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = X.row(i);
        T mu = 0;
        for (T v : row) mu += v;
        mu /= static_cast<T>(d);
        T var = 0;
        for (T v : row) var += (v - mu) * (v - mu);
        var /= static_cast<T>(d);
        inv_std[i] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat(i, j) = (row[j] - mu) * inv_std[i];
            Y(i, j) = g[j] * xhat(i, j) + b[j];
        }
    }
    return t.push(std::move(Y), {x, gamma, beta},
                  [x, gamma, beta, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                      Tape<T>& tp, const Tensor<T>& G) {
                      const Tensor<T>& g = tp.value(gamma);
                      if (tp.requires_grad(gamma)) {
                          auto& dg = tp.grad_buffer(gamma);
                          for (std::size_t i = 0; i < n; ++i) {
                              for (std::size_t j = 0; j < d; ++j) dg[j] += G(i, j) * xhat(i, j);
                          }
                      }
                      if (tp.requires_grad(beta)) {
                          auto db = tp.grad_buffer(beta).values();
                          for (std::size_t i = 0; i < n; ++i) simd::axpy(T(1), G.row(i), db);
                      }
                      if (tp.requires_grad(x)) {
                          auto& dX = tp.grad_buffer(x);
                          std::vector<T> gh(d);
                          for (std::size_t i = 0; i < n; ++i) {
                              T mean_g = 0, mean_gx = 0;
                              for (std::size_t j = 0; j < d; ++j) {
                                  gh[j] = G(i, j) * g[j];
                                  mean_g += gh[j];
                                  mean_gx += gh[j] * xhat(i, j);
                              }
                              mean_g /= static_cast<T>(d);
                              mean_gx /= static_cast<T>(d);
                              for (std::size_t j = 0; j < d; ++j) {
                                  dX(i, j) += inv_std[i] * (gh[j] - mean_g - xhat(i, j) * mean_gx);
                              }
                          }
                      }
                  });
}

template <typename T>
Var attention(Tape<T>& t, Var q, Var k, Var v, const AttentionShape& shape, std::span<const std::uint8_t> key_valid,
              const ForwardContext& ctx) {
    const Tensor<T>& Q = t.value(q);
    const Tensor<T>& K = t.value(k);
    const Tensor<T>& V = t.value(v);
    const std::size_t B = shape.batch, L = shape.seq_len, H = shape.heads;
    const std::size_t D = Q.cols();
    require(Q.same_shape(K) && Q.same_shape(V), "attention", shapes(Q, K) + ", " + V.shape_string());
    require(Q.rows() == B * L, "attention", "rows " + std::to_string(Q.rows()) + " != batch*seq_len");
    require(H >= 1 && D % H == 0, "attention", "head count must divide model width");
    require(key_valid.empty() || key_valid.size() == B * L, "attention", "padding mask length mismatch");
    const std::size_t dh = D / H;
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));
    const bool use_dropout = ctx.dropout_active();
    const T keep_scale = use_dropout ? T(1) / T(1 - ctx.dropout) : T(1);
    std::bernoulli_distribution keep(use_dropout ? 1.0 - ctx.dropout : 1.0);

    // probs[b][h][i][j]; `dropped` holds probs after dropout (== probs without it).
    auto probs = Tensor<T>::vector(B * H * L * L);
    Tensor<T> dropped;
    if (use_dropout) dropped = Tensor<T>::vector(B * H * L * L);
    auto out = Tensor<T>::matrix(B * L, D);
    std::vector<T> logits(L);
    auto valid = [&](std::size_t row) { return key_valid.empty() || key_valid[row] != 0; };

    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t h = 0; h < H; ++h) {
            const std::size_t off = h * dh;
            for (std::size_t i = 0; i < L; ++i) {
                const std::size_t qi = b * L + i;
                T* p = probs.data() + ((b * H + h) * L + i) * L;
                T mx = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j < L; ++j) {
                    const std::size_t kj = b * L + j;
                    if (!valid(kj)) continue;
                    logits[j] = scale * simd::dot(Q.row(qi).subspan(off, dh), K.row(kj).subspan(off, dh));
                    mx = std::max(mx, logits[j]);
                }
                if (mx == -std::numeric_limits<T>::infinity()) continue;  // no valid keys: zero output
                T z = 0;
                for (std::size_t j = 0; j < L; ++j) {
                    if (!valid(b * L + j)) continue;
                    p[j] = std::exp(logits[j] - mx);
                    z += p[j];
                }
                for (std::size_t j = 0; j < L; ++j) p[j] /= z;
                T* pd = p;
                if (use_dropout) {
                    pd = dropped.data() + ((b * H + h) * L + i) * L;
                    for (std::size_t j = 0; j < L; ++j) pd[j] = keep(*ctx.rng) ? p[j] * keep_scale : T(0);
                }
                auto orow = out.row(qi).subspan(off, dh);
                for (std::size_t j = 0; j < L; ++j) {
                    if (pd[j] != T(0)) simd::axpy(pd[j], V.row(b * L + j).subspan(off, dh), orow);
                }
            }
        }
    }

    return t.push(std::move(out), {q, k, v},
                  [q, k, v, B, L, H, dh, scale, keep_scale, use_dropout, probs = std::move(probs),
                   dropped = std::move(dropped)](Tape<T>& tp, const Tensor<T>& G) {
                      const Tensor<T>& Q = tp.value(q);
                      const Tensor<T>& K = tp.value(k);
                      const Tensor<T>& V = tp.value(v);
                      const bool gq = tp.requires_grad(q), gk = tp.requires_grad(k), gv = tp.requires_grad(v);
                      Tensor<T>* dQ = gq ? &tp.grad_buffer(q) : nullptr;
                      Tensor<T>* dK = gk ? &tp.grad_buffer(k) : nullptr;
                      Tensor<T>* dV = gv ? &tp.grad_buffer(v) : nullptr;
                      std::vector<T> dp(L);
                      for (std::size_t b = 0; b < B; ++b) {
                          for (std::size_t h = 0; h < H; ++h) {
                              const std::size_t off = h * dh;
                              for (std::size_t i = 0; i < L; ++i) {
                                  const std::size_t qi = b * L + i;
                                  const T* p = probs.data() + ((b * H + h) * L + i) * L;
                                  const T* pd = use_dropout ? dropped.data() + ((b * H + h) * L + i) * L : p;
                                  auto grow = G.row(qi).subspan(off, dh);
                                  T row_dot = 0;
                                  for (std::size_t j = 0; j < L; ++j) {
                                      if (p[j] == T(0)) {
                                          dp[j] = 0;
                                          continue;
                                      }
                                      const std::size_t vj = b * L + j;
                                      if (dV && pd[j] != T(0)) simd::axpy(pd[j], grow, dV->row(vj).subspan(off, dh));
                                      T g = simd::dot(grow, V.row(vj).subspan(off, dh));
                                      if (use_dropout) g = pd[j] != T(0) ? g * keep_scale : T(0);
                                      dp[j] = g;
                                      row_dot += p[j] * g;
                                  }
                                  for (std::size_t j = 0; j < L; ++j) {
                                      if (p[j] == T(0)) continue;
                                      const T ds = p[j] * (dp[j] - row_dot) * scale;
                                      if (ds == T(0)) continue;
                                      const std::size_t kj = b * L + j;
                                      if (dQ) simd::axpy(ds, K.row(kj).subspan(off, dh), dQ->row(qi).subspan(off, dh));
                                      if (dK) simd::axpy(ds, Q.row(qi).subspan(off, dh), dK->row(kj).subspan(off, dh));
                                  }
                              }
                          }
                      }
                  });
}

template <typename T>
Var gather_rows(Tape<T>& t, Var a, std::span<const std::uint32_t> index) {
    const Tensor<T>& A = t.value(a);
    auto C = Tensor<T>::matrix(index.size(), A.cols());
    for (std::size_t i = 0; i < index.size(); ++i) {
        require(index[i] < A.rows(), "gather_rows", "index out of range");
        std::copy_n(A.row(index[i]).data(), A.cols(), C.row(i).data());
    }
    std::vector<std::uint32_t> idx(index.begin(), index.end());
    return t.push(std::move(C), {a}, [a, idx = std::move(idx)](Tape<T>& tp, const Tensor<T>& G) {
        auto& dA = tp.grad_buffer(a);
        for (std::size_t i = 0; i < idx.size(); ++i) simd::axpy(T(1), G.row(i), dA.row(idx[i]));
    });
}

template <typename T>
Var concat_rows(Tape<T>& t, const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows", "no inputs");
    const std::size_t cols = t.value(parts.front()).cols();
    std::size_t rows = 0;
    for (Var p : parts) {
        require(t.value(p).cols() == cols, "concat_rows", "column mismatch");
        rows += t.value(p).rows();
    }
    auto C = Tensor<T>::matrix(rows, cols);
    std::size_t r = 0;
    for (Var p : parts) {
        const auto& P = t.value(p);
        std::copy_n(P.data(), P.size(), C.data() + r * cols);
        r += P.rows();
    }
    return t.push(std::move(C), parts, [parts](Tape<T>& tp, const Tensor<T>& G) {
        std::size_t r = 0;
        for (Var p : parts) {
            const std::size_t n = tp.value(p).size();
            if (tp.requires_grad(p)) {
                simd::axpy(T(1), G.values().subspan(r * G.cols(), n), tp.grad_buffer(p).values());
            }
            r += tp.value(p).rows();
        }
    });
}

template <typename T>
Var concat_cols(Tape<T>& t, const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols", "no inputs");
    const std::size_t rows = t.value(parts.front()).rows();
    std::size_t cols = 0;
    for (Var p : parts) {
        require(t.value(p).rows() == rows, "concat_cols", "row mismatch");
        cols += t.value(p).cols();
    }
    auto C = Tensor<T>::matrix(rows, cols);
    std::size_t c0 = 0;
    for (Var p : parts) {
        const auto& P = t.value(p);
        for (std::size_t i = 0; i < rows; ++i) std::copy_n(P.row(i).data(), P.cols(), C.row(i).data() + c0);
        c0 += P.cols();
    }
    return t.push(std::move(C), parts, [parts, rows](Tape<T>& tp, const Tensor<T>& G) {
        std::size_t c0 = 0;
        for (Var p : parts) {
            const std::size_t w = tp.value(p).cols();
            if (tp.requires_grad(p)) {
                auto& dP = tp.grad_buffer(p);
                for (std::size_t i = 0; i < rows; ++i) simd::axpy(T(1), G.row(i).subspan(c0, w), dP.row(i));
            }
            c0 += w;
        }
    });
}

template <typename T>
Var row_cosine(Tape<T>& t, Var a, Var b) {
    const Tensor<T>& A = t.value(a);
    const Tensor<T>& B = t.value(b);
    require(A.same_shape(B), "row_cosine", shapes(A, B));
    const std::size_t n = A.rows();
    auto C = Tensor<T>::matrix(n, 1);
    std::vector<T> na(n), nb(n);
    for (std::size_t i = 0; i < n; ++i) {
        na[i] = std::sqrt(simd::dot(A.row(i), A.row(i)));
        nb[i] = std::sqrt(simd::dot(B.row(i), B.row(i)));
        if (na[i] == T(0) || nb[i] == T(0)) {
            throw InputError("cosine similarity undefined: zero-norm vector at row " + std::to_string(i));
        }
        C[i] = simd::dot(A.row(i), B.row(i)) / (na[i] * nb[i]);
    }
    return t.push(std::move(C), {a, b},
                  [a, b, n, na = std::move(na), nb = std::move(nb)](Tape<T>& tp, const Tensor<T>& G) {
                      const Tensor<T>& A = tp.value(a);
                      const Tensor<T>& B = tp.value(b);
                      for (std::size_t i = 0; i < n; ++i) {
                          const T cos = simd::dot(A.row(i), B.row(i)) / (na[i] * nb[i]);
                          if (tp.requires_grad(a)) {
                              auto da = tp.grad_buffer(a).row(i);
                              simd::axpy(G[i] / (na[i] * nb[i]), B.row(i), da);
                              simd::axpy(-G[i] * cos / (na[i] * na[i]), A.row(i), da);
                          }
                          if (tp.requires_grad(b)) {
                              auto db = tp.grad_buffer(b).row(i);
                              simd::axpy(G[i] / (na[i] * nb[i]), A.row(i), db);
                              simd::axpy(-G[i] * cos / (nb[i] * nb[i]), B.row(i), db);
                          }
                      }
                  });
}

template <typename T>
Var sum(Tape<T>& t, Var a) {
    const Tensor<T>& A = t.value(a);
    T s = 0;
    for (T v : A.values()) s += v;
    return t.push(Tensor<T>::scalar(s), {a}, [a](Tape<T>& tp, const Tensor<T>& G) {
        for (T& g : tp.grad_buffer(a).values()) g += G[0];
    });
}

template <typename T>
Var mean(Tape<T>& t, Var a) {
    const Tensor<T>& A = t.value(a);
    require(A.size() > 0, "mean", "empty input");
    return affine(t, sum(t, a), T(1) / static_cast<T>(A.size()), T(0));
}

template <typename T>
Var weighted_sum(Tape<T>& t, Var a, std::span<const T> weights) {
    const Tensor<T>& A = t.value(a);
    require(weights.size() == A.size(), "weighted_sum", "weight count mismatch");
    T s = 0;
    for (std::size_t i = 0; i < A.size(); ++i) s += A[i] * weights[i];
    std::vector<T> w(weights.begin(), weights.end());
    return t.push(Tensor<T>::scalar(s), {a}, [a, w = std::move(w)](Tape<T>& tp, const Tensor<T>& G) {
        auto& dA = tp.grad_buffer(a);
        for (std::size_t i = 0; i < w.size(); ++i) dA[i] += G[0] * w[i];
    });
}

template <typename T>
Var logsumexp(Tape<T>& t, Var a) {
    const Tensor<T>& A = t.value(a);
    require(A.size() > 0, "logsumexp", "empty input");
    const T mx = *std::max_element(A.values().begin(), A.values().end());
    T z = 0;
    for (T v : A.values()) z += std::exp(v - mx);
    const T lse = mx + std::log(z);
    return t.push(Tensor<T>::scalar(lse), {a}, [a, lse](Tape<T>& tp, const Tensor<T>& G) {
        const Tensor<T>& A = tp.value(a);
        auto& dA = tp.grad_buffer(a);
        for (std::size_t i = 0; i < A.size(); ++i) dA[i] += G[0] * std::exp(A[i] - lse);
    });
}

template <typename T>
Var logsumexp_rows(Tape<T>& t, Var a) {
    const Tensor<T>& A = t.value(a);
    const std::size_t n = A.rows();
    auto C = Tensor<T>::matrix(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = A.row(i);
        const T mx = *std::max_element(row.begin(), row.end());
        T z = 0;
        for (T v : row) z += std::exp(v - mx);
        C[i] = mx + std::log(z);
    }
    Tensor<T> lse = C;
    return t.push(std::move(C), {a}, [a, lse = std::move(lse)](Tape<T>& tp, const Tensor<T>& G) {
        const Tensor<T>& A = tp.value(a);
        auto& dA = tp.grad_buffer(a);
        for (std::size_t i = 0; i < A.rows(); ++i) {
            for (std::size_t j = 0; j < A.cols(); ++j) dA(i, j) += G[i] * std::exp(A(i, j) - lse[i]);
        }
    });
}

template <typename T>
Var softmax_cross_entropy(Tape<T>& t, Var logits, std::span<const int> labels) {
    const Tensor<T>& X = t.value(logits);
    const std::size_t n = X.rows(), c = X.cols();
    require(labels.size() == n && n > 0, "softmax_cross_entropy", "label count mismatch");
    Tensor<T> probs = like(X);
    T loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < c, "softmax_cross_entropy", "label out of range");
        auto row = X.row(i);
        const T mx = *std::max_element(row.begin(), row.end());
        T z = 0;
        for (std::size_t j = 0; j < c; ++j) {
            probs(i, j) = std::exp(row[j] - mx);
            z += probs(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) probs(i, j) /= z;
        loss += -(row[labels[i]] - mx - std::log(z));
    }
    loss /= static_cast<T>(n);
    std::vector<int> lab(labels.begin(), labels.end());
    return t.push(Tensor<T>::scalar(loss), {logits},
                  [logits, n, c, probs = std::move(probs), lab = std::move(lab)](Tape<T>& tp, const Tensor<T>& G) {
                      auto& dX = tp.grad_buffer(logits);
                      const T s = G[0] / static_cast<T>(n);
                      for (std::size_t i = 0; i < n; ++i) {
                          for (std::size_t j = 0; j < c; ++j) {
                              dX(i, j) += s * (probs(i, j) - (static_cast<int>(j) == lab[i] ? T(1) : T(0)));
                          }
                      }
                  });
}

template <typename T>
Var bce_with_logits(Tape<T>& t, Var logits, std::span<const T> targets) {
    const Tensor<T>& X = t.value(logits);
    const std::size_t n = X.size();
    require(targets.size() == n && n > 0, "bce_with_logits", "target count mismatch");
    T loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T x = X[i];
        loss += std::max(x, T(0)) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
    }
    loss /= static_cast<T>(n);
    std::vector<T> y(targets.begin(), targets.end());
    return t.push(Tensor<T>::scalar(loss), {logits}, [logits, n, y = std::move(y)](Tape<T>& tp, const Tensor<T>& G) {
        const Tensor<T>& X = tp.value(logits);
        auto& dX = tp.grad_buffer(logits);
        for (std::size_t i = 0; i < n; ++i) {
            const T sig = T(1) / (T(1) + std::exp(-X[i]));
            dX[i] += G[0] * (sig - y[i]) / static_cast<T>(n);
        }
    });
}

#define MGT_INSTANTIATE_OPS(T)                                                                                  \
    template Var matmul<T>(Tape<T>&, Var, Var);                                                                 \
    template Var add<T>(Tape<T>&, Var, Var);                                                                    \
    template Var sub<T>(Tape<T>&, Var, Var);                                                                    \
    template Var add_row<T>(Tape<T>&, Var, Var);                                                                \
    template Var linear<T>(Tape<T>&, Var, Var, Var);                                                            \
    template Var mul<T>(Tape<T>&, Var, Var);                                                                    \
    template Var affine<T>(Tape<T>&, Var, T, T);                                                                \
    template Var relu<T>(Tape<T>&, Var);                                                                        \
    template Var pow_scalar<T>(Tape<T>&, Var, T);                                                               \
    template Var dropout<T>(Tape<T>&, Var, const ForwardContext&);                                              \
    template Var layer_norm<T>(Tape<T>&, Var, Var, Var, T);                                                     \
    template Var attention<T>(Tape<T>&, Var, Var, Var, const AttentionShape&, std::span<const std::uint8_t>,   \
                              const ForwardContext&);                                                           \
    template Var gather_rows<T>(Tape<T>&, Var, std::span<const std::uint32_t>);                                 \
    template Var concat_rows<T>(Tape<T>&, const std::vector<Var>&);                                             \
    template Var concat_cols<T>(Tape<T>&, const std::vector<Var>&);                                             \
    template Var row_cosine<T>(Tape<T>&, Var, Var);                                                             \
    template Var sum<T>(Tape<T>&, Var);                                                                         \
    template Var mean<T>(Tape<T>&, Var);                                                                        \
    template Var weighted_sum<T>(Tape<T>&, Var, std::span<const T>);                                            \
    template Var logsumexp<T>(Tape<T>&, Var);                                                                   \
    template Var logsumexp_rows<T>(Tape<T>&, Var);                                                              \
    template Var softmax_cross_entropy<T>(Tape<T>&, Var, std::span<const int>);                                 \
    template Var bce_with_logits<T>(Tape<T>&, Var, std::span<const T>);

MGT_INSTANTIATE_OPS(float)
MGT_INSTANTIATE_OPS(double)

}  // namespace mgt::nn

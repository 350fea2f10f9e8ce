#include "topiccap/tape.hpp"

#include <algorithm>
#include <cmath>

namespace topiccap::nn {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

}  // namespace

Param& ParameterSet::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw ShapeError("duplicate parameter name: " + name);
  slots_.push_back(Param{name, std::move(init), Tensor()});
  Param& p = slots_.back();
  p.grad = Tensor::zeros(p.value.shape());
  index_[name] = slots_.size() - 1;
  return p;
}

Param& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("unknown parameter: " + name);
  return slots_[it->second];
}

const Param& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ShapeError("unknown parameter: " + name);
  return slots_[it->second];
}

void ParameterSet::zero_grad() {
  for (auto& p : slots_) p.grad.fill(0.0);
}

std::size_t ParameterSet::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : slots_) n += p.value.numel();
  return n;
}

int Tape::push(Tensor value, std::function<void(Tape&, int)> back, const char* op) {
  if (!value.all_finite()) {
    throw NonFiniteError(std::string("non-finite output of op '") + op + "'");
  }
  Node n;
  n.value = std::move(value);
  n.grad = Tensor::zeros(n.value.shape());
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::constant(Tensor v) {
  return {push(std::move(v), nullptr, "constant")};
}

Var Tape::leaf(Param& p) {
  auto it = leaf_cache_.find(&p);
  if (it != leaf_cache_.end()) return {it->second};
  int id = push(p.value, nullptr, "leaf");
  nodes_[id].param = &p;
  leaf_cache_[&p] = id;
  return {id};
}

Var Tape::leaf_frozen(const Param& p) {
  auto it = frozen_cache_.find(&p);
  if (it != frozen_cache_.end()) return {it->second};
  int id = push(p.value, nullptr, "leaf_frozen");
  frozen_cache_[&p] = id;
  return {id};
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.rows(),
          "matmul shape mismatch " + A.shape_str() + " x " + B.shape_str());
  const int r = A.rows(), k = A.cols(), c = B.cols();
  Tensor out({r, c});
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < k; ++j) {
      const double aij = A.at(i, j);
      if (aij == 0.0) continue;
      for (int l = 0; l < c; ++l) out.at(i, l) += aij * B.at(j, l);
    }
  }
  auto back = [a, b, r, k, c](Tape& t, int id) {
    const Tensor& dC = t.g(id);
    const Tensor& A2 = t.val(a);
    const Tensor& B2 = t.val(b);
    Tensor& dA = t.g(a.id);
    Tensor& dB = t.g(b.id);
    for (int i = 0; i < r; ++i) {
      for (int l = 0; l < c; ++l) {
        const double d = dC.at(i, l);
        if (d == 0.0) continue;
        for (int j = 0; j < k; ++j) {
          dA.at(i, j) += d * B2.at(j, l);
          dB.at(j, l) += A2.at(i, j) * d;
        }
      }
    }
  };
  return {push(std::move(out), back, "matmul")};
}

Var Tape::matmul_nt(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require(A.rank() == 2 && B.rank() == 2 && A.cols() == B.cols(),
          "matmul_nt shape mismatch " + A.shape_str() + " x " + B.shape_str());
  const int r = A.rows(), k = A.cols(), c = B.rows();
  Tensor out({r, c});
  for (int i = 0; i < r; ++i) {
    const double* a_row = A.data() + static_cast<std::size_t>(i) * k;
    for (int l = 0; l < c; ++l) {
      const double* b_row = B.data() + static_cast<std::size_t>(l) * k;
      double s = 0.0;
      for (int j = 0; j < k; ++j) s += a_row[j] * b_row[j];
      out.at(i, l) = s;
    }
  }
  auto back = [a, b, r, k, c](Tape& t, int id) {
    const Tensor& dC = t.g(id);
    const double* av = t.val(a).data();
    const double* bv = t.val(b).data();
    double* dA = t.g(a.id).data();
    double* dB = t.g(b.id).data();
    for (int i = 0; i < r; ++i) {
      const double* a_row = av + static_cast<std::size_t>(i) * k;
      double* da_row = dA + static_cast<std::size_t>(i) * k;
      for (int l = 0; l < c; ++l) {
        const double d = dC[static_cast<std::size_t>(i) * c + l];
        if (d == 0.0) continue;
        const double* b_row = bv + static_cast<std::size_t>(l) * k;
        double* db_row = dB + static_cast<std::size_t>(l) * k;
        for (int j = 0; j < k; ++j) {
          da_row[j] += d * b_row[j];
          db_row[j] += d * a_row[j];
        }
      }
    }
  };
  return {push(std::move(out), back, "matmul_nt")};
}

Var Tape::matvec(Var m, Var x) {
  const Tensor& M = val(m);
  const Tensor& X = val(x);
  require(M.rank() == 2 && X.rank() == 1 && M.cols() == X.rows(),
          "matvec shape mismatch " + M.shape_str() + " x " + X.shape_str());
  const int r = M.rows(), k = M.cols();
  Tensor out({r});
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    const double* row = M.data() + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) s += row[j] * X[j];
    out[i] = s;
  }
  auto back = [m, x, r, k](Tape& t, int id) {
    const Tensor& dy = t.g(id);
    const double* mv = t.val(m).data();
    const double* xv = t.val(x).data();
    double* dM = t.g(m.id).data();
    double* dX = t.g(x.id).data();
    for (int i = 0; i < r; ++i) {
      const double d = dy[i];
      if (d == 0.0) continue;
      double* dm_row = dM + static_cast<std::size_t>(i) * k;
      const double* m_row = mv + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < k; ++j) {
        dm_row[j] += d * xv[j];
        dX[j] += d * m_row[j];
      }
    }
  };
  return {push(std::move(out), back, "matvec")};
}

Var Tape::vecmat(Var x, Var m) {
  const Tensor& X = val(x);
  const Tensor& M = val(m);
  require(X.rank() == 1 && M.rank() == 2 && X.rows() == M.rows(),
          "vecmat shape mismatch " + X.shape_str() + " x " + M.shape_str());
  const int r = M.rows(), c = M.cols();
  Tensor out({c});
  for (int i = 0; i < r; ++i) {
    const double xi = X[i];
    if (xi == 0.0) continue;
    for (int j = 0; j < c; ++j) out[j] += xi * M.at(i, j);
  }
  auto back = [x, m, r, c](Tape& t, int id) {
    const Tensor& dy = t.g(id);
    const Tensor& X2 = t.val(x);
    const Tensor& M2 = t.val(m);
    Tensor& dX = t.g(x.id);
    Tensor& dM = t.g(m.id);
    for (int i = 0; i < r; ++i) {
      double s = 0.0;
      for (int j = 0; j < c; ++j) {
        s += M2.at(i, j) * dy[j];
        dM.at(i, j) += X2[i] * dy[j];
      }
      dX[i] += s;
    }
  };
  return {push(std::move(out), back, "vecmat")};
}

Var Tape::add(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require(A.same_shape(B), "add shape mismatch " + A.shape_str() + " vs " + B.shape_str());
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += B[i];
  auto back = [a, b](Tape& t, int id) {
    const Tensor& d = t.g(id);
    Tensor& dA = t.g(a.id);
    Tensor& dB = t.g(b.id);
    for (std::size_t i = 0; i < d.numel(); ++i) {
      dA[i] += d[i];
      dB[i] += d[i];
    }
  };
  return {push(std::move(out), back, "add")};
}

Var Tape::sub(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require(A.same_shape(B), "sub shape mismatch");
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= B[i];
  auto back = [a, b](Tape& t, int id) {
    const Tensor& d = t.g(id);
    Tensor& dA = t.g(a.id);
    Tensor& dB = t.g(b.id);
    for (std::size_t i = 0; i < d.numel(); ++i) {
      dA[i] += d[i];
      dB[i] -= d[i];
    }
  };
  return {push(std::move(out), back, "sub")};
}

Var Tape::mul(Var a, Var b) {
  const Tensor& A = val(a);
  const Tensor& B = val(b);
  require(A.same_shape(B), "mul shape mismatch");
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= B[i];
  auto back = [a, b](Tape& t, int id) {
    const Tensor& d = t.g(id);
    const Tensor& A2 = t.val(a);
    const Tensor& B2 = t.val(b);
    Tensor& dA = t.g(a.id);
    Tensor& dB = t.g(b.id);
    for (std::size_t i = 0; i < d.numel(); ++i) {
      dA[i] += d[i] * B2[i];
      dB[i] += d[i] * A2[i];
    }
  };
  return {push(std::move(out), back, "mul")};
}

Var Tape::affine(Var a, double k, double c) {
  Tensor out = val(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = k * out[i] + c;
  auto back = [a, k](Tape& t, int id) {
    const Tensor& d = t.g(id);
    Tensor& dA = t.g(a.id);
    for (std::size_t i = 0; i < d.numel(); ++i) dA[i] += k * d[i];
  };
  return {push(std::move(out), back, "affine")};
}

Var Tape::add_rowvec(Var m, Var v) {
  const Tensor& M = val(m);
  const Tensor& V = val(v);
  require(M.rank() == 2 && V.rank() == 1 && M.cols() == V.rows(),
          "add_rowvec shape mismatch");
  Tensor out = M;
  for (int i = 0; i < M.rows(); ++i) {
    for (int j = 0; j < M.cols(); ++j) out.at(i, j) += V[j];
  }
  auto back = [m, v](Tape& t, int id) {
    const Tensor& d = t.g(id);
    Tensor& dM = t.g(m.id);
    Tensor& dV = t.g(v.id);
    for (int i = 0; i < d.rows(); ++i) {
      for (int j = 0; j < d.cols(); ++j) {
        dM.at(i, j) += d.at(i, j);
        dV[j] += d.at(i, j);
      }
    }
  };
  return {push(std::move(out), back, "add_rowvec")};
}

Var Tape::concat(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat of zero parts");
  int total = 0;
  for (Var p : parts) {
    require(val(p).rank() == 1, "concat expects rank-1 parts");
    total += val(p).rows();
  }
  Tensor out({total});
  int off = 0;
  for (Var p : parts) {
    const Tensor& t = val(p);
    for (int i = 0; i < t.rows(); ++i) out[off + i] = t[i];
    off += t.rows();
  }
  auto back = [parts](Tape& t, int id) {
    const Tensor& d = t.g(id);
    int off2 = 0;
    for (Var p : parts) {
      Tensor& dp = t.g(p.id);
      for (int i = 0; i < dp.rows(); ++i) dp[i] += d[off2 + i];
      off2 += dp.rows();
    }
  };
  return {push(std::move(out), back, "concat")};
}

Var Tape::slice(Var a, int offset, int len) {
  const Tensor& A = val(a);
  require(A.rank() == 1 && offset >= 0 && len >= 0 && offset + len <= A.rows(),
          "slice out of range");
  Tensor out({len});
  for (int i = 0; i < len; ++i) out[i] = A[offset + i];
  auto back = [a, offset, len](Tape& t, int id) {
    const Tensor& d = t.g(id);
    Tensor& dA = t.g(a.id);
    for (int i = 0; i < len; ++i) dA[offset + i] += d[i];
  };
  return {push(std::move(out), back, "slice")};
}

Var Tape::embedding_col(Var e, int col) {
  const Tensor& E = val(e);
  require(E.rank() == 2 && col >= 0 && col < E.cols(), "embedding column out of range");
  const int m = E.rows();
  Tensor out({m});
  for (int i = 0; i < m; ++i) out[i] = E.at(i, col);
  auto back = [e, col, m](Tape& t, int id) {
    const Tensor& d = t.g(id);
    Tensor& dE = t.g(e.id);
    for (int i = 0; i < m; ++i) dE.at(i, col) += d[i];
  };
  return {push(std::move(out), back, "embedding_col")};
}

Var Tape::tanh(Var a) {
  Tensor out = val(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(out[i]);
  auto back = [a](Tape& t, int id) {
    const Tensor& d = t.g(id);
    const Tensor& y = t.val({id});
    Tensor& dA = t.g(a.id);
    for (std::size_t i = 0; i < d.numel(); ++i) dA[i] += d[i] * (1.0 - y[i] * y[i]);
  };
  return {push(std::move(out), back, "tanh")};
}

Var Tape::sigmoid(Var a) {
  Tensor out = val(a);
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double x = out[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  auto back = [a](Tape& t, int id) {
    const Tensor& d = t.g(id);
    const Tensor& y = t.val({id});
    Tensor& dA = t.g(a.id);
    for (std::size_t i = 0; i < d.numel(); ++i) dA[i] += d[i] * y[i] * (1.0 - y[i]);
  };
  return {push(std::move(out), back, "sigmoid")};
}

Var Tape::log(Var a) {
  Tensor out = val(a);
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::log(out[i]);
  auto back = [a](Tape& t, int id) {
    const Tensor& d = t.g(id);
    const Tensor& x = t.val(a);
    Tensor& dA = t.g(a.id);
    for (std::size_t i = 0; i < d.numel(); ++i) dA[i] += d[i] / x[i];
  };
  return {push(std::move(out), back, "log")};
}

namespace {

// Max-subtracted softmax of a contiguous range, written into out.
void softmax_range(const double* x, double* out, int n) {
  double mx = x[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - mx);
    z += out[i];
  }
  for (int i = 0; i < n; ++i) out[i] /= z;
}

// dL/dx = (dL/dy - <dL/dy, y>) * y for y = softmax(x), over a range.
void softmax_backward_range(const double* y, const double* dy, double* dx, int n) {
  double dot = 0.0;
  for (int i = 0; i < n; ++i) dot += dy[i] * y[i];
  for (int i = 0; i < n; ++i) dx[i] += (dy[i] - dot) * y[i];
}

}  // namespace

Var Tape::softmax(Var a) {
  const Tensor& A = val(a);
  require(A.rank() == 1 && A.rows() > 0, "softmax expects non-empty vector");
  Tensor out({A.rows()});
  softmax_range(A.data(), out.data(), A.rows());
  auto back = [a](Tape& t, int id) {
    const Tensor& y = t.val({id});
    softmax_backward_range(y.data(), t.g(id).data(), t.g(a.id).data(), y.rows());
  };
  return {push(std::move(out), back, "softmax")};
}

Var Tape::log_softmax(Var a) {
  const Tensor& A = val(a);
  require(A.rank() == 1 && A.rows() > 0, "log_softmax expects non-empty vector");
  const int n = A.rows();
  double mx = A[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, A[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(A[i] - mx);
  const double lz = mx + std::log(z);
  Tensor out({n});
  for (int i = 0; i < n; ++i) out[i] = A[i] - lz;
  auto back = [a, n](Tape& t, int id) {
    const Tensor& y = t.val({id});
    const Tensor& d = t.g(id);
    Tensor& dA = t.g(a.id);
    double dsum = 0.0;
    for (int i = 0; i < n; ++i) dsum += d[i];
    for (int i = 0; i < n; ++i) dA[i] += d[i] - std::exp(y[i]) * dsum;
  };
  return {push(std::move(out), back, "log_softmax")};
}

Var Tape::softmax_rows(Var a) {
  const Tensor& A = val(a);
  require(A.rank() == 2 && A.cols() > 0, "softmax_rows expects a matrix");
  Tensor out({A.rows(), A.cols()});
  for (int i = 0; i < A.rows(); ++i) {
    softmax_range(A.data() + static_cast<std::size_t>(i) * A.cols(),
                  out.data() + static_cast<std::size_t>(i) * A.cols(), A.cols());
  }
  auto back = [a](Tape& t, int id) {
    const Tensor& y = t.val({id});
    const Tensor& d = t.g(id);
    Tensor& dA = t.g(a.id);
    const int c = y.cols();
    for (int i = 0; i < y.rows(); ++i) {
      softmax_backward_range(y.data() + static_cast<std::size_t>(i) * c,
                             d.data() + static_cast<std::size_t>(i) * c,
                             dA.data() + static_cast<std::size_t>(i) * c, c);
    }
  };
  return {push(std::move(out), back, "softmax_rows")};
}

Var Tape::softmax_cols(Var a) {
  const Tensor& A = val(a);
  require(A.rank() == 2 && A.rows() > 0, "softmax_cols expects a matrix");
  const int r = A.rows(), c = A.cols();
  Tensor out({r, c});
  std::vector<double> colx(r), coly(r);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < r; ++i) colx[i] = A.at(i, j);
    softmax_range(colx.data(), coly.data(), r);
    for (int i = 0; i < r; ++i) out.at(i, j) = coly[i];
  }
  auto back = [a, r, c](Tape& t, int id) {
    const Tensor& y = t.val({id});
    const Tensor& d = t.g(id);
    Tensor& dA = t.g(a.id);
    std::vector<double> coly(r), cold(r), colda(r);
    for (int j = 0; j < c; ++j) {
      for (int i = 0; i < r; ++i) {
        coly[i] = y.at(i, j);
        cold[i] = d.at(i, j);
        colda[i] = 0.0;
      }
      softmax_backward_range(coly.data(), cold.data(), colda.data(), r);
      for (int i = 0; i < r; ++i) dA.at(i, j) += colda[i];
    }
  };
  return {push(std::move(out), back, "softmax_cols")};
}

Var Tape::row_sums(Var a) {
  const Tensor& A = val(a);
  require(A.rank() == 2, "row_sums expects a matrix");
  Tensor out({A.rows()});
  for (int i = 0; i < A.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < A.cols(); ++j) s += A.at(i, j);
    out[i] = s;
  }
  auto back = [a](Tape& t, int id) {
    const Tensor& d = t.g(id);
    Tensor& dA = t.g(a.id);
    for (int i = 0; i < dA.rows(); ++i) {
      for (int j = 0; j < dA.cols(); ++j) dA.at(i, j) += d[i];
    }
  };
  return {push(std::move(out), back, "row_sums")};
}

Var Tape::sum(Var a) {
  const Tensor& A = val(a);
  double s = 0.0;
  for (std::size_t i = 0; i < A.numel(); ++i) s += A[i];
  auto back = [a](Tape& t, int id) {
    const double d = t.g(id)[0];
    Tensor& dA = t.g(a.id);
    for (std::size_t i = 0; i < dA.numel(); ++i) dA[i] += d;
  };
  return {push(Tensor::scalar(s), back, "sum")};
}

Var Tape::mean(Var a) {
  const Tensor& A = val(a);
  require(A.numel() > 0, "mean of empty tensor");
  double s = 0.0;
  for (std::size_t i = 0; i < A.numel(); ++i) s += A[i];
  const double inv = 1.0 / static_cast<double>(A.numel());
  auto back = [a, inv](Tape& t, int id) {
    const double d = t.g(id)[0] * inv;
    Tensor& dA = t.g(a.id);
    for (std::size_t i = 0; i < dA.numel(); ++i) dA[i] += d;
  };
  return {push(Tensor::scalar(s * inv), back, "mean")};
}

Var Tape::pick(Var a, int i) {
  const Tensor& A = val(a);
  require(A.rank() == 1 && i >= 0 && i < A.rows(), "pick index out of range");
  auto back = [a, i](Tape& t, int id) { t.g(a.id)[i] += t.g(id)[0]; };
  return {push(Tensor::scalar(A[i]), back, "pick")};
}

Var Tape::div_by_scalar(Var a, Var s) {
  const Tensor& A = val(a);
  const Tensor& S = val(s);
  require(S.numel() == 1, "div_by_scalar expects scalar divisor");
  const double sv = S[0];
  Tensor out = A;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= sv;
  auto back = [a, s, sv](Tape& t, int id) {
    const Tensor& d = t.g(id);
    const Tensor& y = t.val({id});
    Tensor& dA = t.g(a.id);
    Tensor& dS = t.g(s.id);
    double acc = 0.0;
    for (std::size_t i = 0; i < d.numel(); ++i) {
      dA[i] += d[i] / sv;
      acc -= d[i] * y[i] / sv;
    }
    dS[0] += acc;
  };
  return {push(std::move(out), back, "div_by_scalar")};
}

namespace {

// Shared floor-and-renormalize of the constant KL target.
std::vector<double> kl_prepare_q(const Tensor& q) {
  std::vector<double> qv(q.numel());
  double z = 0.0;
  for (std::size_t i = 0; i < q.numel(); ++i) {
    qv[i] = std::max(q[i], 1e-8);
    z += qv[i];
  }
  for (auto& x : qv) x /= z;
  return qv;
}

}  // namespace

Var Tape::kl_const_q(Var p, const Tensor& q) {
  const Tensor& P = val(p);
  require(P.rank() == 1 && P.numel() == q.numel(), "kl length mismatch");
  const auto qv = kl_prepare_q(q);
  double s = 0.0;
  for (std::size_t i = 0; i < P.numel(); ++i) {
    if (P[i] > 0.0) s += P[i] * std::log(P[i] / qv[i]);
  }
  auto back = [p, qv](Tape& t, int id) {
    const double d = t.g(id)[0];
    const Tensor& P2 = t.val(p);
    Tensor& dP = t.g(p.id);
    for (std::size_t i = 0; i < P2.numel(); ++i) {
      if (P2[i] > 0.0) dP[i] += d * (std::log(P2[i] / qv[i]) + 1.0);
    }
  };
  return {push(Tensor::scalar(s), back, "kl_const_q")};
}

void Tape::backward(Var loss) {
  if (!loss.valid() || static_cast<std::size_t>(loss.id) >= nodes_.size()) {
    throw ShapeError("backward on invalid var");
  }
  if (nodes_[loss.id].value.numel() != 1) {
    throw ShapeError("backward expects a scalar loss");
  }
  for (auto& n : nodes_) n.grad.fill(0.0);
  nodes_[loss.id].grad[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back(*this, i);
  }
  for (auto& n : nodes_) {
    if (n.param == nullptr) continue;
    Tensor& pg = n.param->grad;
    for (std::size_t i = 0; i < pg.numel(); ++i) pg[i] += n.grad[i];
  }
}

Var cross_entropy(Tape& t, const std::vector<Var>& logits,
                  const std::vector<int>& targets, int ignore_id) {
  if (logits.size() != targets.size()) {
    throw ShapeError("cross_entropy: sequence length mismatch");
  }
  std::vector<Var> terms;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (targets[i] == ignore_id) continue;
    if (targets[i] < 0 || targets[i] >= t.val(logits[i]).rows()) {
      throw ShapeError("cross_entropy: target id out of vocabulary");
    }
    terms.push_back(t.pick(t.log_softmax(logits[i]), targets[i]));
  }
  if (terms.empty()) throw ShapeError("cross_entropy: all positions ignored");
  Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = t.add(acc, terms[i]);
  return t.scale(acc, -1.0 / static_cast<double>(terms.size()));
}

double kl_divergence(const Tensor& p, const Tensor& q) {
  if (p.numel() != q.numel()) throw ShapeError("kl length mismatch");
  std::vector<double> qv;
  {
    double z = 0.0;
    qv.resize(q.numel());
    for (std::size_t i = 0; i < q.numel(); ++i) {
      qv[i] = std::max(q[i], 1e-8);
      z += qv[i];
    }
    for (auto& x : qv) x /= z;
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    if (p[i] > 0.0) s += p[i] * std::log(p[i] / qv[i]);
  }
  return s;
}

}  // namespace topiccap::nn

#include "phe/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace phe::diffcore {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ")";
  return os.str();
}

double Array::scalar() const {
  if (size() != 1) throw std::invalid_argument("scalar() on array of shape " + shape_str(shape()));
  return node_->val[0];
}

namespace {

void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::runtime_error(std::string("non-finite value produced by ") + op);
  }
}

void require_same_shape(const Array& a, const Array& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
}

// rows/cols of a rank-1 or rank-2 array viewed as a matrix
std::pair<std::size_t, std::size_t> mat_dims(const Array& a, const char* op) {
  if (a.rank() == 1) return {1, a.shape()[0]};
  if (a.rank() == 2) return {a.shape()[0], a.shape()[1]};
  throw std::invalid_argument(std::string(op) + ": expected rank 1 or 2, got " + shape_str(a.shape()));
}

}  // namespace

void Tape::check_owned(const Array& a, const char* op) const {
  if (!a.valid()) throw std::invalid_argument(std::string(op) + ": empty array");
  if (a.node()->owner != this) throw std::invalid_argument(std::string(op) + ": operand belongs to another tape");
}

Array Tape::record(Shape shape, std::vector<double> val, std::vector<std::shared_ptr<Node>> parents,
                   std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->val = std::move(val);
  if (n->val.size() != shape_numel(n->shape)) throw std::invalid_argument("record: shape/data length mismatch");
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  n->parents = std::move(parents);
  n->backprop = std::move(backprop);
  n->owner = this;
  nodes_.push_back(n);
  return Array(n);
}

Array Tape::input(Shape shape, std::vector<double> data, bool requires_grad) {
  check_finite(data, "input");
  Array a = record(std::move(shape), std::move(data), {}, nullptr);
  a.node()->requires_grad = requires_grad;
  return a;
}

Array Tape::add(const Array& a, const Array& b) {
  check_owned(a, "add");
  check_owned(b, "add");
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  check_finite(out, "add");
  return record(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      n.parents[0]->grad[i] += n.grad[i];
      n.parents[1]->grad[i] += n.grad[i];
    }
  });
}

Array Tape::subtract(const Array& a, const Array& b) {
  check_owned(a, "subtract");
  check_owned(b, "subtract");
  require_same_shape(a, b, "subtract");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  check_finite(out, "subtract");
  return record(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      n.parents[0]->grad[i] += n.grad[i];
      n.parents[1]->grad[i] -= n.grad[i];
    }
  });
}

Array Tape::multiply(const Array& a, const Array& b) {
  check_owned(a, "multiply");
  check_owned(b, "multiply");
  require_same_shape(a, b, "multiply");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  check_finite(out, "multiply");
  return record(a.shape(), std::move(out), {a.node(), b.node()}, [](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      n.parents[0]->grad[i] += n.grad[i] * n.parents[1]->val[i];
      n.parents[1]->grad[i] += n.grad[i] * n.parents[0]->val[i];
    }
  });
}

Array Tape::matmul(const Array& a, const Array& b) {
  check_owned(a, "matmul");
  check_owned(b, "matmul");
  auto [n, k] = mat_dims(a, "matmul");
  auto [k2, m] = mat_dims(b, "matmul");
  if (k != k2) {
    throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a.values()[i * k + t];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += av * b.values()[t * m + j];
    }
  check_finite(out, "matmul");
  const std::size_t N = n, K = k, M = m;
  return record({n, m}, std::move(out), {a.node(), b.node()}, [N, K, M](Node& nd) {
    // dA = dC B^T, dB = A^T dC
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < M; ++j) {
        const double g = nd.grad[i * M + j];
        if (g == 0.0) continue;
        for (std::size_t t = 0; t < K; ++t) {
          nd.parents[0]->grad[i * K + t] += g * nd.parents[1]->val[t * M + j];
          nd.parents[1]->grad[t * M + j] += g * nd.parents[0]->val[i * K + t];
        }
      }
  });
}

Array Tape::matmul_transpose_b(const Array& a, const Array& b) {
  check_owned(a, "matmul_transpose_b");
  check_owned(b, "matmul_transpose_b");
  auto [n, k] = mat_dims(a, "matmul_transpose_b");
  auto [m, k2] = mat_dims(b, "matmul_transpose_b");
  if (k != k2) {
    throw std::invalid_argument("matmul_transpose_b: inner dimension mismatch " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()) + "^T");
  }
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a.values()[i * k + t] * b.values()[j * k + t];
      out[i * m + j] = acc;
    }
  check_finite(out, "matmul_transpose_b");
  const std::size_t N = n, K = k, M = m;
  return record({n, m}, std::move(out), {a.node(), b.node()}, [N, K, M](Node& nd) {
    // C = A B^T: dA = dC B, dB = dC^T A
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < M; ++j) {
        const double g = nd.grad[i * M + j];
        if (g == 0.0) continue;
        for (std::size_t t = 0; t < K; ++t) {
          nd.parents[0]->grad[i * K + t] += g * nd.parents[1]->val[j * K + t];
          nd.parents[1]->grad[j * K + t] += g * nd.parents[0]->val[i * K + t];
        }
      }
  });
}

Array Tape::row_squared_distance(const Array& a, const Array& b) {
  check_owned(a, "row_squared_distance");
  check_owned(b, "row_squared_distance");
  auto [n, d] = mat_dims(a, "row_squared_distance");
  auto [m, d2] = mat_dims(b, "row_squared_distance");
  if (d != d2) {
    throw std::invalid_argument("row_squared_distance: feature dimension mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = a.values()[i * d + t] - b.values()[j * d + t];
        acc += diff * diff;
      }
      out[i * m + j] = acc;
    }
  check_finite(out, "row_squared_distance");
  const std::size_t N = n, D = d, M = m;
  return record({n, m}, std::move(out), {a.node(), b.node()}, [N, D, M](Node& nd) {
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < M; ++j) {
        const double g = nd.grad[i * M + j];
        if (g == 0.0) continue;
        for (std::size_t t = 0; t < D; ++t) {
          const double diff = nd.parents[0]->val[i * D + t] - nd.parents[1]->val[j * D + t];
          nd.parents[0]->grad[i * D + t] += 2.0 * g * diff;
          nd.parents[1]->grad[j * D + t] -= 2.0 * g * diff;
        }
      }
  });
}

Array Tape::log(const Array& a) {
  check_owned(a, "log");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.values()[i]);
  check_finite(out, "log");
  return record(a.shape(), std::move(out), {a.node()}, [](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i] / n.parents[0]->val[i];
  });
}

Array Tape::exp(const Array& a) {
  check_owned(a, "exp");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.values()[i]);
  check_finite(out, "exp");
  return record(a.shape(), std::move(out), {a.node()}, [](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i] * n.val[i];
  });
}

Array Tape::tanh(const Array& a) {
  check_owned(a, "tanh");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.values()[i]);
  check_finite(out, "tanh");
  return record(a.shape(), std::move(out), {a.node()}, [](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i] * (1.0 - n.val[i] * n.val[i]);
  });
}

Array Tape::abs(const Array& a) {
  check_owned(a, "abs");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(a.values()[i]);
  check_finite(out, "abs");
  return record(a.shape(), std::move(out), {a.node()}, [](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) {
      const double x = n.parents[0]->val[i];
      if (x > 0.0)
        n.parents[0]->grad[i] += n.grad[i];
      else if (x < 0.0)
        n.parents[0]->grad[i] -= n.grad[i];
    }
  });
}

Array Tape::relu(const Array& a) {
  check_owned(a, "relu");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.values()[i]);
  check_finite(out, "relu");
  return record(a.shape(), std::move(out), {a.node()}, [](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i)
      if (n.parents[0]->val[i] > 0.0) n.parents[0]->grad[i] += n.grad[i];
  });
}

Array Tape::scale(const Array& a, double s) {
  check_owned(a, "scale");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * a.values()[i];
  check_finite(out, "scale");
  return record(a.shape(), std::move(out), {a.node()}, [s](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += s * n.grad[i];
  });
}

Array Tape::add_scalar(const Array& a, double c) {
  check_owned(a, "add_scalar");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + c;
  check_finite(out, "add_scalar");
  return record(a.shape(), std::move(out), {a.node()}, [](Node& n) {
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.parents[0]->grad[i] += n.grad[i];
  });
}

Array Tape::add_rowvec(const Array& a, const Array& bias) {
  check_owned(a, "add_rowvec");
  check_owned(bias, "add_rowvec");
  auto [n, d] = mat_dims(a, "add_rowvec");
  if (bias.size() != d) {
    throw std::invalid_argument("add_rowvec: bias length " + std::to_string(bias.size()) + " vs row width " +
                                std::to_string(d));
  }
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = a.values()[i * d + j] + bias.values()[j];
  check_finite(out, "add_rowvec");
  const std::size_t N = n, D = d;
  return record(a.shape(), std::move(out), {a.node(), bias.node()}, [N, D](Node& nd) {
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < D; ++j) {
        nd.parents[0]->grad[i * D + j] += nd.grad[i * D + j];
        nd.parents[1]->grad[j] += nd.grad[i * D + j];
      }
  });
}

Array Tape::mean(const Array& a) {
  check_owned(a, "mean");
  if (a.size() == 0) throw std::invalid_argument("mean: empty array");
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  acc /= static_cast<double>(a.size());
  check_finite({acc}, "mean");
  const double inv = 1.0 / static_cast<double>(a.size());
  return record({1}, {acc}, {a.node()}, [inv](Node& n) {
    for (std::size_t i = 0; i < n.parents[0]->grad.size(); ++i) n.parents[0]->grad[i] += inv * n.grad[0];
  });
}

Array Tape::sum(const Array& a) {
  check_owned(a, "sum");
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  check_finite({acc}, "sum");
  return record({1}, {acc}, {a.node()}, [](Node& n) {
    for (std::size_t i = 0; i < n.parents[0]->grad.size(); ++i) n.parents[0]->grad[i] += n.grad[0];
  });
}

Array Tape::cosine_similarity_rows(const Array& a, const Array& b) {
  check_owned(a, "cosine_similarity_rows");
  check_owned(b, "cosine_similarity_rows");
  auto [n, d] = mat_dims(a, "cosine_similarity_rows");
  auto [m, d2] = mat_dims(b, "cosine_similarity_rows");
  if (d != d2) {
    throw std::invalid_argument("cosine_similarity_rows: feature dimension mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  std::vector<double> na(n), nb(m);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t t = 0; t < d; ++t) acc += a.values()[i * d + t] * a.values()[i * d + t];
    na[i] = std::sqrt(acc);
    if (na[i] == 0.0) throw std::invalid_argument("cosine_similarity_rows: zero-norm row " + std::to_string(i) + " in left operand");
  }
  for (std::size_t j = 0; j < m; ++j) {
    double acc = 0.0;
    for (std::size_t t = 0; t < d; ++t) acc += b.values()[j * d + t] * b.values()[j * d + t];
    nb[j] = std::sqrt(acc);
    if (nb[j] == 0.0) throw std::invalid_argument("cosine_similarity_rows: zero-norm row " + std::to_string(j) + " in right operand");
  }
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double dot = 0.0;
      for (std::size_t t = 0; t < d; ++t) dot += a.values()[i * d + t] * b.values()[j * d + t];
      out[i * m + j] = dot / (na[i] * nb[j]);
    }
  check_finite(out, "cosine_similarity_rows");
  const std::size_t N = n, D = d, M = m;
  return record({n, m}, std::move(out), {a.node(), b.node()}, [N, D, M, na, nb](Node& nd) {
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < M; ++j) {
        const double g = nd.grad[i * M + j];
        if (g == 0.0) continue;
        const double c = nd.val[i * M + j];
        const double inv = 1.0 / (na[i] * nb[j]);
        for (std::size_t t = 0; t < D; ++t) {
          const double av = nd.parents[0]->val[i * D + t];
          const double bv = nd.parents[1]->val[j * D + t];
          nd.parents[0]->grad[i * D + t] += g * (bv * inv - c * av / (na[i] * na[i]));
          nd.parents[1]->grad[j * D + t] += g * (av * inv - c * bv / (nb[j] * nb[j]));
        }
      }
  });
}

Array Tape::softmax_cross_entropy(const Array& logits, const std::vector<int>& labels) {
  check_owned(logits, "softmax_cross_entropy");
  auto [n, c] = mat_dims(logits, "softmax_cross_entropy");
  if (labels.size() != n) {
    throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(n) + " rows");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(labels[i]) + " at row " +
                                  std::to_string(i) + " outside 0.." + std::to_string(c - 1));
  }
  // stable per-row softmax, retained for backward
  std::vector<double> softmax(n * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = logits.values()[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.values()[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(logits.values()[i * c + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) softmax[i * c + j] = std::exp(logits.values()[i * c + j] - lse);
    loss += lse - logits.values()[i * c + static_cast<std::size_t>(labels[i])];
  }
  loss /= static_cast<double>(n);
  check_finite({loss}, "softmax_cross_entropy");
  const std::size_t N = n, C = c;
  return record({1}, {loss}, {logits.node()}, [N, C, softmax, labels](Node& nd) {
    const double g = nd.grad[0] / static_cast<double>(N);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < C; ++j) {
        const double onehot = (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
        nd.parents[0]->grad[i * C + j] += g * (softmax[i * C + j] - onehot);
      }
  });
}

void Tape::backward(const Array& root) {
  check_owned(root, "backward");
  if (root.size() != 1) throw std::invalid_argument("backward: root must be scalar, got " + shape_str(root.shape()));
  for (auto& n : nodes_) n->grad.assign(n->val.size(), 0.0);
  root.node()->grad[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.backprop && n.requires_grad) n.backprop(n);
  }
}

double grad_check(const std::function<Array(Tape&, const Array&)>& f, const Shape& shape,
                  const std::vector<double>& x, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
  std::vector<double> analytic;
  {
    Tape tape;
    Array in = tape.input(shape, x, true);
    Array out = f(tape, in);
    if (out.size() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
    tape.backward(out);
    analytic = in.grad();
  }
  auto eval = [&](const std::vector<double>& v) {
    Tape tape;
    Array in = tape.input(shape, v, false);
    return f(tape, in).scalar();
  };
  double max_err = 0.0;
  std::vector<double> pert = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    pert[i] = x[i] + step;
    const double fp = eval(pert);
    pert[i] = x[i] - step;
    const double fm = eval(pert);
    pert[i] = x[i];
    const double fd = (fp - fm) / (2.0 * step);
    const double denom = std::max({1.0, std::fabs(fd), std::fabs(analytic[i])});
    max_err = std::max(max_err, std::fabs(fd - analytic[i]) / denom);
  }
  return max_err;
}

}  // namespace phe::diffcore

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace phe::diffcore {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

struct Node {
  Shape shape;
  std::vector<double> val;
  std::vector<double> grad;  // sized during backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // scatters this->grad into parents
  const Tape* owner = nullptr;
};

// Handle to a tape-owned dense row-major array of 64-bit reals.
class Array {
 public:
  Array() = default;
  explicit Array(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->val.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  const std::vector<double>& values() const { return node_->val; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double scalar() const;

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Execution record for one forward pass. All primitives are eager: forward
// values are computed at call time and checked finite; backward() replays the
// recorded primitives in exact reverse order. A Tape is single-threaded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Array input(Shape shape, std::vector<double> data, bool requires_grad);
  Array constant(Shape shape, std::vector<double> data) { return input(std::move(shape), std::move(data), false); }
  Array scalar_constant(double v) { return constant({1}, {v}); }

  Array add(const Array& a, const Array& b);
  Array subtract(const Array& a, const Array& b);
  Array multiply(const Array& a, const Array& b);  // elementwise
  Array matmul(const Array& a, const Array& b);                // (n,k)x(k,m)
  Array matmul_transpose_b(const Array& a, const Array& b);    // (n,k)x(m,k)^T
  Array row_squared_distance(const Array& a, const Array& b);  // (n,d),(m,d) -> (n,m)
  Array log(const Array& a);
  Array exp(const Array& a);
  Array tanh(const Array& a);
  Array abs(const Array& a);
  Array relu(const Array& a);
  Array scale(const Array& a, double s);
  Array add_scalar(const Array& a, double c);
  Array add_rowvec(const Array& a, const Array& bias);  // (n,d) + (d)
  Array mean(const Array& a);
  Array sum(const Array& a);
  Array cosine_similarity_rows(const Array& a, const Array& b);  // (n,d),(m,d) -> (n,m)
  Array softmax_cross_entropy(const Array& logits, const std::vector<int>& labels);

  // Seeds d(root)=1 and accumulates gradients into every requires_grad node.
  // root must be a scalar recorded on this tape. Repeatable: grads are reset
  // on every call.
  void backward(const Array& root);

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  Array record(Shape shape, std::vector<double> val, std::vector<std::shared_ptr<Node>> parents,
               std::function<void(Node&)> backprop);
  void check_owned(const Array& a, const char* op) const;

  std::vector<std::shared_ptr<Node>> nodes_;
};

// Max relative error between the reverse-mode gradient of f at x and central
// finite differences with the given step.
double grad_check(const std::function<Array(Tape&, const Array&)>& f, const Shape& shape,
                  const std::vector<double>& x, double step);

}  // namespace phe::diffcore

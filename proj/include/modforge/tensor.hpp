#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "modforge/errors.hpp"

namespace modforge {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

// One recorded operation (or leaf). Parents are always created before their
// children, so `order` gives a topological order for free.
struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily, same length as value
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Reads this->grad and accumulates into the parents' grad buffers.
    std::function<void(TensorNode&)> backward_fn;
    std::uint64_t order = 0;

    void ensure_grad();
};

}  // namespace detail

// Dense float64 tensor. Copying a Tensor copies the handle, not the buffer;
// the underlying node is shared. Values of leaves may be updated in place
// between forward passes (that is how the optimizer works); recorded graphs
// hold their inputs alive through shared_ptr parents.
class Tensor {
  public:
    Tensor() = default;

    static Tensor constant(Shape shape, std::vector<double> data);
    static Tensor parameter(Shape shape, std::vector<double> data);
    static Tensor zeros(Shape shape);
    static Tensor scalar(double v);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t numel() const;
    std::size_t rows() const;  // rank-2 helpers
    std::size_t cols() const;

    std::span<const double> values() const;
    std::vector<double>& mutable_values();  // leaves only (parameter updates)
    bool requires_grad() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();
    double item() const;  // numel()==1

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

  private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor make_op(Shape shape, std::vector<double> value,
                          std::vector<Tensor> parents,
                          std::function<void(detail::TensorNode&)> backward_fn);
};

// The ordered list of recorded operations reachable from one output,
// replayed once per backward pass.
class ComputationTape {
  public:
    static ComputationTape record(const Tensor& output);

    // Seeds the output gradient and propagates to the leaves. Leaf gradients
    // accumulate across calls; interior gradients are reset per run.
    void run(std::span<const double> seed);

    std::size_t size() const { return nodes_.size(); }
    // Node visit counter of the last run (tests: each node exactly once).
    std::size_t last_visit_count() const { return last_visits_; }

  private:
    std::vector<std::shared_ptr<detail::TensorNode>> nodes_;  // output first, topological
    std::size_t last_visits_ = 0;
};

// --- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);         // same shape
Tensor add_rowvec(const Tensor& mat, const Tensor& vec);  // bias broadcast, the only broadcast
Tensor relu(const Tensor& x);
Tensor emax(const Tensor& a, const Tensor& b);        // elementwise max (maxout pieces)
Tensor concat_cols(const std::vector<Tensor>& parts); // rank-2, along columns
Tensor scale(const Tensor& x, double c);
Tensor log_softmax(const Tensor& x);                  // rowwise for rank-2, whole vector for rank-1
// (1/N) sum_i log softmax(logits_i)[labels_i]; scalar, <= 0.
Tensor mean_true_class_logprob(const Tensor& logits, const std::vector<int>& labels);

void backward(const Tensor& output);  // scalar outputs, seed 1
void backward_vjp(const Tensor& output, std::span<const double> seed_grad);

// --- value-only helpers (no graph) ------------------------------------------

// Rowwise softmax of a [N x K] buffer.
std::vector<double> softmax_rows(std::span<const double> logits, std::size_t n, std::size_t k);
double mean_true_class_logprob_value(std::span<const double> logits, std::size_t n, std::size_t k,
                                     const std::vector<int>& labels);
double argmax_accuracy(std::span<const double> logits, std::size_t n, std::size_t k,
                       const std::vector<int>& labels);

// --- optimizer ---------------------------------------------------------------

struct NamedParam {
    std::string name;
    Tensor value;
};

void zero_grads(std::vector<NamedParam>& params);

struct SgdConfig {
    double learning_rate = 1e-4;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double lr_decay_factor = 0.9;
    std::size_t lr_decay_every = 70;  // epochs

    void validate() const;
};

// SGD with momentum, weight decay and step learning-rate decay:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - lr * v
// where lr = learning_rate * lr_decay_factor^floor(epoch / lr_decay_every).
class SgdOptimizer {
  public:
    explicit SgdOptimizer(SgdConfig cfg);

    void set_epoch(std::size_t epoch);
    double effective_lr() const { return lr_; }
    void step(std::vector<NamedParam>& params);

  private:
    SgdConfig cfg_;
    double lr_;
    std::vector<std::vector<double>> velocity_;
};

}  // namespace modforge

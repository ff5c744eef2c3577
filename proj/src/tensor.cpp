#include "modforge/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace modforge {

namespace {
std::atomic<std::uint64_t> g_node_counter{0};
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

namespace detail {
void TensorNode::ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
}
}  // namespace detail

// --- Tensor -----------------------------------------------------------------

static std::shared_ptr<detail::TensorNode> make_leaf(Shape shape, std::vector<double> data,
                                                     bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    if (data.size() != n) {
        throw DimensionError("tensor data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    node->is_leaf = true;
    node->order = g_node_counter.fetch_add(1);
    return node;
}

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
    return Tensor(make_leaf(std::move(shape), std::move(data), false));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> data) {
    return Tensor(make_leaf(std::move(shape), std::move(data), true));
}

Tensor Tensor::zeros(Shape shape) {
    const std::size_t n = shape_numel(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), false));
}

Tensor Tensor::scalar(double v) { return Tensor(make_leaf(Shape{1}, {v}, false)); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }

std::size_t Tensor::rows() const {
    if (node_->shape.size() != 2) throw DimensionError("rows(): tensor is not rank-2, shape " + shape_str(node_->shape));
    return node_->shape[0];
}
std::size_t Tensor::cols() const {
    if (node_->shape.size() != 2) throw DimensionError("cols(): tensor is not rank-2, shape " + shape_str(node_->shape));
    return node_->shape[1];
}

std::span<const double> Tensor::values() const { return node_->value; }

std::vector<double>& Tensor::mutable_values() {
    if (!node_->is_leaf) throw UsageError("mutable_values() is only valid on leaf tensors");
    return node_->value;
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw UsageError("tensor has no gradient buffer; run backward first");
    return node_->grad;
}

void Tensor::zero_grad() {
    node_->grad.assign(node_->value.size(), 0.0);
}

double Tensor::item() const {
    if (numel() != 1) throw DimensionError("item(): tensor has " + std::to_string(numel()) + " elements");
    return node_->value[0];
}

// --- op construction ----------------------------------------------------------

Tensor make_op(Shape shape, std::vector<double> value, std::vector<Tensor> parents,
               std::function<void(detail::TensorNode&)> backward_fn) {
    auto node = std::make_shared<detail::TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->is_leaf = false;
    node->requires_grad = false;
    for (const Tensor& p : parents) {
        node->parents.push_back(p.node());
        if (p.requires_grad()) node->requires_grad = true;
    }
    node->backward_fn = std::move(backward_fn);
    node->order = g_node_counter.fetch_add(1);
    return Tensor(node);
}

// --- ComputationTape ----------------------------------------------------------

ComputationTape ComputationTape::record(const Tensor& output) {
    ComputationTape tape;
    std::unordered_set<const detail::TensorNode*> seen;
    std::vector<std::shared_ptr<detail::TensorNode>> stack{output.node()};
    while (!stack.empty()) {
        auto n = stack.back();
        stack.pop_back();
        if (!n->requires_grad) continue;  // nothing upstream to reach
        if (!seen.insert(n.get()).second) continue;
        tape.nodes_.push_back(n);
        for (auto& p : n->parents) stack.push_back(p);
    }
    std::sort(tape.nodes_.begin(), tape.nodes_.end(),
              [](const auto& a, const auto& b) { return a->order > b->order; });
    return tape;
}

void ComputationTape::run(std::span<const double> seed) {
    if (nodes_.empty()) return;
    // Interior gradients restart at zero each pass; leaves accumulate.
    for (auto& n : nodes_) {
        if (n->is_leaf) {
            n->ensure_grad();
        } else {
            n->grad.assign(n->value.size(), 0.0);
        }
    }
    auto& out = nodes_.front();
    if (seed.size() != out->value.size()) {
        throw DimensionError("seed gradient size " + std::to_string(seed.size()) +
                             " does not match output " + shape_str(out->shape));
    }
    for (std::size_t i = 0; i < seed.size(); ++i) out->grad[i] += seed[i];
    last_visits_ = 0;
    for (auto& n : nodes_) {
        ++last_visits_;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

void backward(const Tensor& output) {
    if (output.numel() != 1) {
        throw UsageError("backward() expects a scalar output; got shape " + shape_str(output.shape()));
    }
    const double one = 1.0;
    backward_vjp(output, std::span<const double>(&one, 1));
}

void backward_vjp(const Tensor& output, std::span<const double> seed_grad) {
    if (!output.requires_grad()) {
        throw UsageError("backward on a detached tensor: output does not depend on any parameter");
    }
    ComputationTape tape = ComputationTape::record(output);
    tape.run(seed_grad);
}

// --- ops -----------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.cols() != b.rows()) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
    std::vector<double> out(r * c, 0.0);
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = av[i * k + kk];
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < c; ++j) out[i * c + j] += aik * bv[kk * c + j];
        }
    }
    return make_op(Shape{r, c}, std::move(out), {a, b}, [r, k, c](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const auto& g = self.grad;
        if (pa.requires_grad) {
            pa.ensure_grad();
            // dA = G * B^T
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    const double gij = g[i * c + j];
                    if (gij == 0.0) continue;
                    for (std::size_t kk = 0; kk < k; ++kk)
                        pa.grad[i * k + kk] += gij * pb.value[kk * c + j];
                }
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            // dB = A^T * G
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t kk = 0; kk < k; ++kk) {
                    const double aik = pa.value[i * k + kk];
                    if (aik == 0.0) continue;
                    for (std::size_t j = 0; j < c; ++j)
                        pb.grad[kk * c + j] += aik * g[i * c + j];
                }
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    std::vector<double> out(a.numel());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::TensorNode& self) {
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    });
}

Tensor add_rowvec(const Tensor& mat, const Tensor& vec) {
    if (mat.shape().size() != 2 || vec.shape().size() != 1 || vec.shape()[0] != mat.cols()) {
        throw DimensionError("add_rowvec: shapes " + shape_str(mat.shape()) + " and " +
                             shape_str(vec.shape()) + " are not [N x D] + [D]");
    }
    const std::size_t n = mat.rows(), d = mat.cols();
    std::vector<double> out(n * d);
    const auto mv = mat.values(), vv = vec.values();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = mv[i * d + j] + vv[j];
    return make_op(mat.shape(), std::move(out), {mat, vec}, [n, d](detail::TensorNode& self) {
        auto& pm = *self.parents[0];
        auto& pv = *self.parents[1];
        if (pm.requires_grad) {
            pm.ensure_grad();
            for (std::size_t i = 0; i < n * d; ++i) pm.grad[i] += self.grad[i];
        }
        if (pv.requires_grad) {
            pv.ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) pv.grad[j] += self.grad[i * d + j];
        }
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.numel());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return make_op(x.shape(), std::move(out), {x}, [](detail::TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (p.value[i] > 0.0) p.grad[i] += self.grad[i];
    });
}

Tensor emax(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("emax: shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    std::vector<double> out(a.numel());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] >= bv[i] ? av[i] : bv[i];
    // Ties route the gradient to the first argument.
    return make_op(a.shape(), std::move(out), {a, b}, [](detail::TensorNode& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (pa.value[i] >= pb.value[i]) {
                if (pa.requires_grad) pa.grad[i] += self.grad[i];
            } else if (pb.requires_grad) {
                pb.grad[i] += self.grad[i];
            }
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t n = parts[0].rows();
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        if (p.shape().size() != 2 || p.rows() != n) {
            throw DimensionError("concat_cols: row mismatch, expected " + std::to_string(n) +
                                 " rows, got shape " + shape_str(p.shape()));
        }
        total += p.cols();
    }
    std::vector<double> out(n * total);
    std::size_t off = 0;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
        const std::size_t d = p.cols();
        const auto pv = p.values();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) out[i * total + off + j] = pv[i * d + j];
        widths.push_back(d);
        off += d;
    }
    return make_op(Shape{n, total}, std::move(out), parts,
                   [n, total, widths](detail::TensorNode& self) {
                       std::size_t off = 0;
                       for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
                           auto& p = *self.parents[pi];
                           const std::size_t d = widths[pi];
                           if (p.requires_grad) {
                               p.ensure_grad();
                               for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t j = 0; j < d; ++j)
                                       p.grad[i * d + j] += self.grad[i * total + off + j];
                           }
                           off += d;
                       }
                   });
}

Tensor scale(const Tensor& x, double c) {
    std::vector<double> out(x.numel());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * xv[i];
    return make_op(x.shape(), std::move(out), {x}, [c](detail::TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += c * self.grad[i];
    });
}

namespace {
// Rowwise max-shifted log-softmax into `out`; n rows of width k.
void log_softmax_buf(std::span<const double> x, std::size_t n, std::size_t k,
                     std::vector<double>& out) {
    out.resize(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x.data() + i * k;
        double m = row[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - m);
        const double lse = m + std::log(sum);
        for (std::size_t j = 0; j < k; ++j) out[i * k + j] = row[j] - lse;
    }
}

void rows_cols_of(const Tensor& x, std::size_t& n, std::size_t& k) {
    if (x.shape().size() == 1) {
        n = 1;
        k = x.shape()[0];
    } else if (x.shape().size() == 2) {
        n = x.shape()[0];
        k = x.shape()[1];
    } else {
        throw DimensionError("expected rank-1 or rank-2 tensor, got " + shape_str(x.shape()));
    }
}
}  // namespace

Tensor log_softmax(const Tensor& x) {
    std::size_t n, k;
    rows_cols_of(x, n, k);
    std::vector<double> out;
    log_softmax_buf(x.values(), n, k, out);
    return make_op(x.shape(), std::move(out), {x}, [n, k](detail::TensorNode& self) {
        auto& p = *self.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        // dx = g - softmax * rowsum(g)
        for (std::size_t i = 0; i < n; ++i) {
            double gsum = 0.0;
            for (std::size_t j = 0; j < k; ++j) gsum += self.grad[i * k + j];
            for (std::size_t j = 0; j < k; ++j) {
                const double sm = std::exp(self.value[i * k + j]);
                p.grad[i * k + j] += self.grad[i * k + j] - sm * gsum;
            }
        }
    });
}

Tensor mean_true_class_logprob(const Tensor& logits, const std::vector<int>& labels) {
    std::size_t n, k;
    rows_cols_of(logits, n, k);
    if (labels.size() != n) {
        throw DimensionError("labels size " + std::to_string(labels.size()) + " != batch " +
                             std::to_string(n));
    }
    if (n == 0) throw DimensionError("mean_true_class_logprob: empty batch");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= k) {
            throw std::out_of_range("label " + std::to_string(y) + " out of range [0, " +
                                    std::to_string(k) + ")");
        }
    }
    std::vector<double> ls;
    log_softmax_buf(logits.values(), n, k, ls);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += ls[i * k + static_cast<std::size_t>(labels[i])];
    const double val = acc / static_cast<double>(n);
    // Keep the softmax for the backward rule.
    auto probs = std::make_shared<std::vector<double>>(n * k);
    for (std::size_t i = 0; i < n * k; ++i) (*probs)[i] = std::exp(ls[i]);
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    return make_op(Shape{1}, {val}, {logits},
                   [n, k, probs, labels_copy](detail::TensorNode& self) {
                       auto& p = *self.parents[0];
                       if (!p.requires_grad) return;
                       p.ensure_grad();
                       const double g = self.grad[0] / static_cast<double>(n);
                       for (std::size_t i = 0; i < n; ++i) {
                           const std::size_t y = static_cast<std::size_t>((*labels_copy)[i]);
                           for (std::size_t j = 0; j < k; ++j) {
                               const double ind = (j == y) ? 1.0 : 0.0;
                               p.grad[i * k + j] += g * (ind - (*probs)[i * k + j]);
                           }
                       }
                   });
}

// --- value-only helpers ---------------------------------------------------------

std::vector<double> softmax_rows(std::span<const double> logits, std::size_t n, std::size_t k) {
    std::vector<double> out;
    log_softmax_buf(logits, n, k, out);
    for (double& v : out) v = std::exp(v);
    return out;
}

double mean_true_class_logprob_value(std::span<const double> logits, std::size_t n, std::size_t k,
                                     const std::vector<int>& labels) {
    std::vector<double> ls;
    log_softmax_buf(logits, n, k, ls);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k) {
            throw std::out_of_range("label " + std::to_string(y) + " out of range [0, " +
                                    std::to_string(k) + ")");
        }
        acc += ls[i * k + static_cast<std::size_t>(y)];
    }
    return acc / static_cast<double>(n);
}

double argmax_accuracy(std::span<const double> logits, std::size_t n, std::size_t k,
                       const std::vector<int>& labels) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (logits[i * k + j] > logits[i * k + best]) best = j;  // ties -> lowest index
        if (static_cast<int>(best) == labels[i]) ++correct;
    }
    return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n);
}

// --- optimizer -------------------------------------------------------------------

void zero_grads(std::vector<NamedParam>& params) {
    for (auto& p : params) p.value.zero_grad();
}

void SgdConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("sgd.learning_rate must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("sgd.momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("sgd.weight_decay must be non-negative");
    if (!(lr_decay_factor > 0.0) || lr_decay_factor > 1.0)
        throw ConfigError("sgd.lr_decay_factor must be in (0, 1]");
    if (lr_decay_every == 0) throw ConfigError("sgd.lr_decay_every must be a positive integer");
}

SgdOptimizer::SgdOptimizer(SgdConfig cfg) : cfg_(cfg), lr_(cfg.learning_rate) {
    cfg_.validate();
}

void SgdOptimizer::set_epoch(std::size_t epoch) {
    lr_ = cfg_.learning_rate *
          std::pow(cfg_.lr_decay_factor, static_cast<double>(epoch / cfg_.lr_decay_every));
}

void SgdOptimizer::step(std::vector<NamedParam>& params) {
    if (velocity_.size() != params.size()) velocity_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (!p.value.has_grad()) throw UsageError("parameter '" + p.name + "' has no gradient");
        auto g = p.value.grad();
        auto& v = velocity_[i];
        if (v.size() != g.size()) v.assign(g.size(), 0.0);
        auto& w = p.value.mutable_values();
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (!std::isfinite(g[j])) {
                throw NumericError("non-finite gradient in parameter '" + p.name + "'");
            }
            v[j] = cfg_.momentum * v[j] + g[j] + cfg_.weight_decay * w[j];
            w[j] -= lr_ * v[j];
        }
    }
}

}  // namespace modforge

#pragma once

#include <vector>

#include "modforge/model.hpp"

namespace modforge {

// Per-modality mono-modal responses φ^m plus the full response φ. The φ^m are
// differentiable functions of the model parameters and satisfy Σ_m φ^m = φ.
struct MonoModalOutputs {
    Tensor full;                       // φ(x), [N x K]
    std::vector<Tensor> per_modality;  // φ^m, model modality order
};

// Shapley weight of the marginal-contribution term for a subset of the given
// size drawn from M \ {m}: |S|! (k−|S|−1)! / k!. Exact integer factorials.
double shapley_weight(std::size_t k, std::size_t subset_size);

// Coefficient of the masked evaluation φ(T) (T non-empty, encoded by size and
// membership of m) in the closed-form expansion of φ^m.
double shapley_subset_coefficient(std::size_t k, bool contains_m, std::size_t subset_size);

// Generic enumeration: 2^k − 1 masked forward passes (the empty coalition is
// pinned to zero), combined per modality with exact Shapley weights. Works for
// both fusion kinds; warns to stderr for k > 4.
MonoModalOutputs mono_modal_outputs(const MultiModalModel& model,
                                    const std::vector<Tensor>& inputs);

// LateSum shortcut: φ^m is the branch output itself (k forward passes).
MonoModalOutputs mono_modal_outputs_late_fast(const MultiModalModel& model,
                                              const std::vector<Tensor>& inputs);

// Picks the fast path for LateSum models, the generic one otherwise.
MonoModalOutputs mono_modal_outputs_auto(const MultiModalModel& model,
                                         const std::vector<Tensor>& inputs);

// s^m: batch-mean log-probability of the true class under Softmax(φ^m). Always ≤ 0.
double mono_modal_score(const Tensor& phi_m, const std::vector<int>& labels);

// Acc_m: argmax accuracy of φ^m (ties to the lowest class index).
double mono_modal_accuracy(const Tensor& phi_m, const std::vector<int>& labels);

}  // namespace modforge

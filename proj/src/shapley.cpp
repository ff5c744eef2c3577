#include "modforge/shapley.hpp"

#include <bit>
#include <cstdint>
#include <iostream>

namespace modforge {

namespace {
std::uint64_t factorial(std::size_t n) {
    std::uint64_t f = 1;
    for (std::size_t i = 2; i <= n; ++i) f *= i;
    return f;
}
}  // namespace

double shapley_weight(std::size_t k, std::size_t subset_size) {
    if (k == 0 || subset_size >= k) throw UsageError("shapley_weight: need |S| < k");
    return static_cast<double>(factorial(subset_size) * factorial(k - subset_size - 1)) /
           static_cast<double>(factorial(k));
}

double shapley_subset_coefficient(std::size_t k, bool contains_m, std::size_t subset_size) {
    if (subset_size == 0 || subset_size > k)
        throw UsageError("shapley_subset_coefficient: subset must be non-empty");
    // φ^m = Σ_{S ⊆ M\{m}} w_{|S|} [φ(S∪{m}) − φ(S)], φ(∅) := 0. A non-empty T
    // appears as S∪{m} with weight +w_{|T|−1} when m ∈ T, and as S with weight
    // −w_{|T|} when m ∉ T.
    return contains_m ? shapley_weight(k, subset_size - 1) : -shapley_weight(k, subset_size);
}

MonoModalOutputs mono_modal_outputs(const MultiModalModel& model,
                                    const std::vector<Tensor>& inputs) {
    const std::size_t k = model.num_modalities();
    if (k > 4)
        std::cerr << "warning: Shapley enumeration over " << k << " modalities costs "
                  << ((1u << k) - 1) << " forward passes per batch\n";

    MonoModalOutputs out;
    if (k == 1) {
        out.full = model.forward_full(inputs);
        out.per_modality = {out.full};
        return out;
    }

    const std::uint32_t full_mask = (1u << k) - 1u;
    std::vector<Tensor> masked(full_mask + 1);  // index = present mask; 0 unused (φ(∅) := 0)
    for (std::uint32_t mask = 1; mask <= full_mask; ++mask)
        masked[mask] = model.forward_masked(inputs, mask);
    out.full = masked[full_mask];

    out.per_modality.reserve(k);
    for (std::size_t m = 0; m < k; ++m) {
        Tensor acc;
        for (std::uint32_t mask = 1; mask <= full_mask; ++mask) {
            const bool contains_m = (mask >> m) & 1u;
            const auto size = static_cast<std::size_t>(std::popcount(mask));
            const double coef = shapley_subset_coefficient(k, contains_m, size);
            Tensor term = scale(masked[mask], coef);
            acc = acc.defined() ? add(acc, term) : term;
        }
        out.per_modality.push_back(acc);
    }
    return out;
}

MonoModalOutputs mono_modal_outputs_late_fast(const MultiModalModel& model,
                                              const std::vector<Tensor>& inputs) {
    if (model.fusion().kind != FusionKind::LateSum)
        throw UsageError("mono_modal_outputs_late_fast requires a LateSum model");
    const std::size_t k = model.num_modalities();
    if (inputs.size() != k)
        throw DimensionError("expected " + std::to_string(k) + " input tensors, got " +
                             std::to_string(inputs.size()));
    MonoModalOutputs out;
    out.per_modality.reserve(k);
    for (std::size_t m = 0; m < k; ++m)
        out.per_modality.push_back(model.branch_logits(m, inputs[m]));
    out.full = out.per_modality[0];
    for (std::size_t m = 1; m < k; ++m) out.full = add(out.full, out.per_modality[m]);
    return out;
}

MonoModalOutputs mono_modal_outputs_auto(const MultiModalModel& model,
                                         const std::vector<Tensor>& inputs) {
    return model.fusion().kind == FusionKind::LateSum
               ? mono_modal_outputs_late_fast(model, inputs)
               : mono_modal_outputs(model, inputs);
}

double mono_modal_score(const Tensor& phi_m, const std::vector<int>& labels) {
    return mean_true_class_logprob_value(phi_m.values(), phi_m.rows(), phi_m.cols(), labels);
}

double mono_modal_accuracy(const Tensor& phi_m, const std::vector<int>& labels) {
    if (labels.size() != phi_m.rows())
        throw DimensionError("mono_modal_accuracy: labels size != batch size");
    return argmax_accuracy(phi_m.values(), phi_m.rows(), phi_m.cols(), labels);
}

}  // namespace modforge

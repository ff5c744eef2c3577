#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modforge/tensor.hpp"

namespace modforge {

enum class FusionKind { LateSum, EarlyMaxout };

std::string fusion_kind_name(FusionKind kind);
FusionKind fusion_kind_from_name(const std::string& name);  // ConfigError if unknown

struct ModalitySpec {
    std::string name;
    std::size_t input_dim = 1;
    std::vector<std::size_t> encoder_hidden;  // may be empty (identity encoder)
};

struct FusionSpec {
    FusionKind kind = FusionKind::LateSum;
    std::size_t fusion_hidden_dim = 16;  // EarlyMaxout only
    std::size_t maxout_pieces = 2;       // EarlyMaxout only, >= 2
};

// Multi-modal classifier. LateSum: per-modality MLP branches each ending in a
// K-logit head, summed. EarlyMaxout: per-modality MLP encoders, concatenated,
// a maxout fusion layer (elementwise max of parallel affine maps), then one
// K-logit head.
class MultiModalModel {
  public:
    static MultiModalModel build(std::vector<ModalitySpec> modalities, FusionSpec fusion,
                                 std::size_t num_classes, std::uint64_t seed);

    const std::vector<ModalitySpec>& modalities() const { return modalities_; }
    const FusionSpec& fusion() const { return fusion_; }
    std::size_t num_classes() const { return num_classes_; }
    std::size_t num_modalities() const { return modalities_.size(); }
    std::uint64_t init_seed() const { return seed_; }
    std::size_t modality_index(const std::string& name) const;  // ConfigError if unknown

    std::vector<NamedParam>& params() { return params_; }
    const std::vector<NamedParam>& params() const { return params_; }
    std::size_t param_count() const;  // total scalar parameters

    // Width of latent_features output: EarlyMaxout → fusion_hidden_dim;
    // LateSum → sum of branch penultimate widths.
    std::size_t latent_dim() const;

    // inputs: one [N x d_m] tensor per modality, in modalities() order.
    Tensor forward_full(const std::vector<Tensor>& inputs) const;

    // φ(S): present_mask bit i set ⇔ modality i present. LateSum drops absent
    // branches entirely; EarlyMaxout feeds zero blocks for absent inputs.
    Tensor forward_masked(const std::vector<Tensor>& inputs, std::uint32_t present_mask) const;
    Tensor forward_masked(const std::vector<Tensor>& inputs,
                          const std::vector<std::string>& present) const;

    // LateSum only: logits of one branch on its own input.
    Tensor branch_logits(std::size_t modality_index, const Tensor& input) const;

    // Pre-classifier latent z on the full (unmasked) input.
    Tensor latent_features(const std::vector<Tensor>& inputs) const;

    // Prefix identifying branch-m parameters ("enc.<name>." / "head.<name>.").
    bool param_belongs_to_branch(const std::string& param_name, std::size_t modality_index) const;

    // Deep copy: fresh parameter tensors with identical values.
    MultiModalModel clone() const;

    // Evaluation counters since construction (test diagnostics).
    std::size_t forward_count() const { return forward_count_; }
    std::size_t branch_eval_count() const { return branch_eval_count_; }

  private:
    MultiModalModel() = default;
    const Tensor& param(const std::string& name) const;
    Tensor encode(std::size_t mi, const Tensor& input) const;  // encoder MLP for modality mi
    Tensor fuse_maxout(const Tensor& concat) const;            // elementwise max of affine pieces

    std::vector<ModalitySpec> modalities_;
    FusionSpec fusion_;
    std::size_t num_classes_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<NamedParam> params_;
    mutable std::size_t forward_count_ = 0;
    mutable std::size_t branch_eval_count_ = 0;
};

}  // namespace modforge

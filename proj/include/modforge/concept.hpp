#pragma once

#include <span>
#include <string>

#include "modforge/agm.hpp"
#include "modforge/data.hpp"
#include "modforge/model.hpp"

namespace modforge {

// How the competition-less reference C^m was constructed: the bare branch
// (late fusion) or the full architecture fed zero/random padding for the
// other modalities (early fusion).
enum class ConceptContext { LateBranch, EarlyZeroPad, EarlyRandomPad };

std::string concept_context_name(ConceptContext c);

struct ConceptModel {
    ConceptModel(std::string modality_, std::size_t modality_index_, ConceptContext context_,
                 MultiModalModel net_)
        : modality(std::move(modality_)),
          modality_index(modality_index_),
          context(context_),
          net(std::move(net_)) {}

    std::string modality;
    std::size_t modality_index;  // position in the paired model's modality order
    ConceptContext context;
    // LateBranch: a single-modality LateSum network (the branch plus its
    // head). Early*: the full paired architecture.
    MultiModalModel net;
};

// Mirror of the paired run's training environment 𝒯 (optimizer, epochs,
// batch size, seed policy); concepts always train with plain cross-entropy.
struct ConceptTrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    SgdConfig sgd;
    std::uint64_t seed = 0;
};

// Late fusion: train the modality's branch alone (the other branches are
// simply discarded).
ConceptModel train_concept_late(const MultiModalModel& paired, std::size_t modality_index,
                                const Dataset& ds, const Splits& splits,
                                const ConceptTrainConfig& cfg);

// Early fusion: train the full architecture on (x^m, padding) where every
// other modality is a zero vector, or — with random_padding — fresh N(0,1)
// noise per sample per epoch. Inference always pads with zeros.
ConceptModel train_concept_early(const MultiModalModel& paired, std::size_t modality_index,
                                 const Dataset& ds, const Splits& splits, bool random_padding,
                                 const ConceptTrainConfig& cfg);

// C^m(x^m): evaluates the concept on one modality's features [N x d_m] → [N x K].
Tensor concept_predict(const ConceptModel& c, const Tensor& features);

struct ConceptEval {
    std::vector<double> logits;  // row-major [n x k]
    std::size_t n = 0, k = 0;
    double accuracy = 0.0;
};

ConceptEval concept_eval(const ConceptModel& c, const Dataset& ds,
                         std::span<const std::size_t> idx);

}  // namespace modforge

#include "modforge/concept.hpp"

#include "modforge/rng.hpp"

namespace modforge {

std::string concept_context_name(ConceptContext c) {
    switch (c) {
        case ConceptContext::LateBranch: return "late_branch";
        case ConceptContext::EarlyZeroPad: return "early_zero_pad";
        case ConceptContext::EarlyRandomPad: return "early_random_pad";
    }
    throw UsageError("invalid ConceptContext");
}

namespace {

// Plain cross-entropy training of `net`; `make_inputs` supplies the input
// tensors for a batch (real features for the concept's modality, padding for
// the rest where applicable).
void train_plain(MultiModalModel& net, const Dataset& ds, const Splits& splits,
                 const ConceptTrainConfig& cfg, std::uint64_t shuffle_seed,
                 const std::function<std::vector<Tensor>(const std::vector<std::size_t>&,
                                                         std::size_t)>& make_inputs) {
    cfg.sgd.validate();
    SgdOptimizer opt(cfg.sgd);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        opt.set_epoch(e);
        const auto batches =
            make_batches(splits.train, cfg.batch_size, mix_seed(shuffle_seed, "epoch", e));
        for (const auto& batch : batches) {
            const std::vector<Tensor> inputs = make_inputs(batch, e);
            const std::vector<int> labels = gather_labels(ds, batch);
            Tensor loss = scale(mean_true_class_logprob(net.forward_full(inputs), labels), -1.0);
            if (!std::isfinite(loss.item()))
                throw NumericError("non-finite concept loss at epoch " + std::to_string(e));
            zero_grads(net.params());
            backward(loss);
            opt.step(net.params());
        }
    }
}

}  // namespace

ConceptModel train_concept_late(const MultiModalModel& paired, std::size_t modality_index,
                                const Dataset& ds, const Splits& splits,
                                const ConceptTrainConfig& cfg) {
    if (paired.fusion().kind != FusionKind::LateSum)
        throw ConfigError("train_concept_late requires a LateSum paired model");
    if (modality_index >= paired.num_modalities())
        throw ConfigError("train_concept_late: modality index out of range");
    const std::size_t mi = modality_index;
    const ModalitySpec& spec = paired.modalities()[mi];
    if (ds.modality_index(spec.name) != mi || ds.modalities[mi].dim != spec.input_dim)
        throw ConfigError("concept modality '" + spec.name + "' does not match the dataset");

    MultiModalModel net =
        MultiModalModel::build({spec}, FusionSpec{.kind = FusionKind::LateSum},
                               paired.num_classes(), mix_seed(cfg.seed, "concept-init", mi));

    train_plain(net, ds, splits, cfg, mix_seed(cfg.seed, "concept-train", mi),
                [&](const std::vector<std::size_t>& batch, std::size_t) {
                    return std::vector<Tensor>{gather_features(ds, mi, batch)};
                });
    return {spec.name, modality_index, ConceptContext::LateBranch, std::move(net)};
}

ConceptModel train_concept_early(const MultiModalModel& paired, std::size_t modality_index,
                                 const Dataset& ds, const Splits& splits, bool random_padding,
                                 const ConceptTrainConfig& cfg) {
    if (paired.fusion().kind != FusionKind::EarlyMaxout)
        throw ConfigError("train_concept_early requires an EarlyMaxout paired model");
    if (modality_index >= paired.num_modalities())
        throw ConfigError("train_concept_early: modality index out of range");
    const std::size_t mi = modality_index;
    const auto& specs = paired.modalities();
    if (ds.modality_index(specs[mi].name) != mi || ds.modalities[mi].dim != specs[mi].input_dim)
        throw ConfigError("concept modality '" + specs[mi].name + "' does not match the dataset");

    MultiModalModel net =
        MultiModalModel::build(specs, paired.fusion(), paired.num_classes(),
                               mix_seed(cfg.seed, "concept-init", mi));

    // One padding stream per epoch so noise is fresh per sample per epoch yet
    // fully reproducible.
    const std::uint64_t pad_seed = mix_seed(cfg.seed, "concept-pad", mi);
    std::size_t pad_epoch = static_cast<std::size_t>(-1);
    std::unique_ptr<Rng> pad_rng;

    train_plain(net, ds, splits, cfg, mix_seed(cfg.seed, "concept-train", mi),
                [&](const std::vector<std::size_t>& batch, std::size_t epoch) {
                    if (random_padding && epoch != pad_epoch) {
                        pad_rng = std::make_unique<Rng>(mix_seed(pad_seed, "epoch", epoch));
                        pad_epoch = epoch;
                    }
                    std::vector<Tensor> inputs;
                    inputs.reserve(specs.size());
                    for (std::size_t j = 0; j < specs.size(); ++j) {
                        if (j == mi) {
                            inputs.push_back(gather_features(ds, mi, batch));
                        } else if (random_padding) {
                            std::vector<double> noise(batch.size() * specs[j].input_dim);
                            for (double& v : noise) v = pad_rng->normal();
                            inputs.push_back(Tensor::constant(
                                Shape{batch.size(), specs[j].input_dim}, std::move(noise)));
                        } else {
                            inputs.push_back(Tensor::zeros(Shape{batch.size(), specs[j].input_dim}));
                        }
                    }
                    return inputs;
                });
    return {specs[mi].name, mi,
            random_padding ? ConceptContext::EarlyRandomPad : ConceptContext::EarlyZeroPad,
            std::move(net)};
}

Tensor concept_predict(const ConceptModel& c, const Tensor& features) {
    if (c.context == ConceptContext::LateBranch) return c.net.forward_full({features});
    // Early concepts always evaluate with zero padding, whatever the training
    // padding was, so C^m is a deterministic function of x^m.
    const auto& specs = c.net.modalities();
    std::vector<Tensor> inputs;
    inputs.reserve(specs.size());
    for (std::size_t j = 0; j < specs.size(); ++j) {
        inputs.push_back(j == c.modality_index
                             ? features
                             : Tensor::zeros(Shape{features.rows(), specs[j].input_dim}));
    }
    return c.net.forward_full(inputs);
}

ConceptEval concept_eval(const ConceptModel& c, const Dataset& ds,
                         std::span<const std::size_t> idx) {
    const std::size_t mi = ds.modality_index(c.modality);
    Tensor logits = concept_predict(c, gather_features(ds, mi, idx));
    const std::vector<int> labels = gather_labels(ds, idx);
    ConceptEval out;
    out.n = logits.rows();
    out.k = logits.cols();
    auto v = logits.values();
    out.logits.assign(v.begin(), v.end());
    out.accuracy = argmax_accuracy(out.logits, out.n, out.k, labels);
    return out;
}

}  // namespace modforge

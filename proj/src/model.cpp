#include "modforge/model.hpp"

#include <set>

#include "modforge/rng.hpp"

namespace modforge {

std::string fusion_kind_name(FusionKind kind) {
    return kind == FusionKind::LateSum ? "late_sum" : "early_maxout";
}

FusionKind fusion_kind_from_name(const std::string& name) {
    if (name == "late_sum") return FusionKind::LateSum;
    if (name == "early_maxout") return FusionKind::EarlyMaxout;
    throw ConfigError("unknown fusion kind '" + name + "' (expected late_sum or early_maxout)");
}

namespace {

std::size_t encoder_out_dim(const ModalitySpec& m) {
    return m.encoder_hidden.empty() ? m.input_dim : m.encoder_hidden.back();
}

// U(−1/√fan_in, +1/√fan_in), seeded per parameter name so initialization does
// not depend on construction order.
Tensor init_param(const std::string& name, Shape shape, std::size_t fan_in, std::uint64_t seed) {
    Rng rng(mix_seed(seed, name));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> data(shape_numel(shape));
    for (double& v : data) v = rng.uniform(-bound, bound);
    return Tensor::parameter(std::move(shape), std::move(data));
}

}  // namespace

MultiModalModel MultiModalModel::build(std::vector<ModalitySpec> modalities, FusionSpec fusion,
                                       std::size_t num_classes, std::uint64_t seed) {
    if (modalities.empty()) throw ConfigError("model: modality list must be non-empty");
    if (num_classes == 0) throw ConfigError("model: num_classes must be positive");
    std::set<std::string> names;
    for (const auto& m : modalities) {
        if (m.name.empty()) throw ConfigError("model: modality name must be non-empty");
        if (!names.insert(m.name).second)
            throw ConfigError("model: duplicate modality name '" + m.name + "'");
        if (m.input_dim == 0)
            throw ConfigError("model: modality '" + m.name + "' input_dim must be positive");
        for (std::size_t h : m.encoder_hidden)
            if (h == 0)
                throw ConfigError("model: modality '" + m.name + "' encoder_hidden must be positive");
    }
    if (fusion.kind == FusionKind::EarlyMaxout) {
        if (fusion.fusion_hidden_dim == 0)
            throw ConfigError("model: fusion_hidden_dim must be positive");
        if (fusion.maxout_pieces < 2) throw ConfigError("model: maxout_pieces must be >= 2");
    }

    MultiModalModel model;
    model.modalities_ = std::move(modalities);
    model.fusion_ = fusion;
    model.num_classes_ = num_classes;
    model.seed_ = seed;

    auto add = [&](const std::string& name, Shape shape, std::size_t fan_in) {
        model.params_.push_back({name, init_param(name, std::move(shape), fan_in, seed)});
    };

    for (const auto& m : model.modalities_) {
        std::size_t in = m.input_dim;
        for (std::size_t l = 0; l < m.encoder_hidden.size(); ++l) {
            const std::size_t out = m.encoder_hidden[l];
            const std::string base = "enc." + m.name + "." + std::to_string(l);
            add(base + ".W", Shape{in, out}, in);
            add(base + ".b", Shape{out}, in);
            in = out;
        }
        if (fusion.kind == FusionKind::LateSum) {
            add("head." + m.name + ".W", Shape{in, num_classes}, in);
            add("head." + m.name + ".b", Shape{num_classes}, in);
        }
    }
    if (fusion.kind == FusionKind::EarlyMaxout) {
        std::size_t concat = 0;
        for (const auto& m : model.modalities_) concat += encoder_out_dim(m);
        for (std::size_t p = 0; p < fusion.maxout_pieces; ++p) {
            const std::string base = "fusion.p" + std::to_string(p);
            add(base + ".W", Shape{concat, fusion.fusion_hidden_dim}, concat);
            add(base + ".b", Shape{fusion.fusion_hidden_dim}, concat);
        }
        add("head.W", Shape{fusion.fusion_hidden_dim, num_classes}, fusion.fusion_hidden_dim);
        add("head.b", Shape{num_classes}, fusion.fusion_hidden_dim);
    }
    return model;
}

std::size_t MultiModalModel::modality_index(const std::string& name) const {
    for (std::size_t i = 0; i < modalities_.size(); ++i)
        if (modalities_[i].name == name) return i;
    throw ConfigError("unknown modality '" + name + "'");
}

std::size_t MultiModalModel::param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

std::size_t MultiModalModel::latent_dim() const {
    if (fusion_.kind == FusionKind::EarlyMaxout) return fusion_.fusion_hidden_dim;
    std::size_t d = 0;
    for (const auto& m : modalities_) d += encoder_out_dim(m);
    return d;
}

const Tensor& MultiModalModel::param(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p.value;
    throw UsageError("model has no parameter named '" + name + "'");
}

Tensor MultiModalModel::encode(std::size_t mi, const Tensor& input) const {
    const auto& m = modalities_[mi];
    if (input.shape().size() != 2 || input.cols() != m.input_dim) {
        throw DimensionError("modality '" + m.name + "' expects [N x " +
                             std::to_string(m.input_dim) + "] input, got " +
                             shape_str(input.shape()));
    }
    Tensor x = input;
    for (std::size_t l = 0; l < m.encoder_hidden.size(); ++l) {
        const std::string base = "enc." + m.name + "." + std::to_string(l);
        x = relu(add_rowvec(matmul(x, param(base + ".W")), param(base + ".b")));
    }
    return x;
}

Tensor MultiModalModel::branch_logits(std::size_t mi, const Tensor& input) const {
    if (fusion_.kind != FusionKind::LateSum)
        throw UsageError("branch_logits is only defined for LateSum models");
    if (mi >= modalities_.size()) throw UsageError("branch_logits: modality index out of range");
    ++branch_eval_count_;
    const std::string& name = modalities_[mi].name;
    Tensor h = encode(mi, input);
    return add_rowvec(matmul(h, param("head." + name + ".W")), param("head." + name + ".b"));
}

Tensor MultiModalModel::forward_masked(const std::vector<Tensor>& inputs,
                                       std::uint32_t present_mask) const {
    const std::size_t k = modalities_.size();
    if (inputs.size() != k)
        throw DimensionError("expected " + std::to_string(k) + " input tensors, got " +
                             std::to_string(inputs.size()));
    if (present_mask == 0) throw UsageError("forward_masked: present set must be non-empty");
    if (k < 32 && present_mask >= (1u << k))
        throw UsageError("forward_masked: mask has bits beyond the modality count");
    const std::size_t n = inputs[0].rows();
    for (const Tensor& t : inputs)
        if (t.rows() != n) throw DimensionError("forward_masked: inconsistent batch sizes");
    ++forward_count_;

    if (fusion_.kind == FusionKind::LateSum) {
        Tensor out;
        for (std::size_t i = 0; i < k; ++i) {
            if (!(present_mask & (1u << i))) continue;  // absent branches are dropped
            Tensor logits = branch_logits(i, inputs[i]);
            out = out.defined() ? add(out, logits) : logits;
        }
        return out;
    }

    // EarlyMaxout: absent modalities contribute zero blocks.
    std::vector<Tensor> encoded;
    encoded.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const Tensor& in = (present_mask & (1u << i))
                               ? inputs[i]
                               : Tensor::zeros(Shape{n, modalities_[i].input_dim});
        encoded.push_back(encode(i, in));
    }
    Tensor z = fuse_maxout(concat_cols(encoded));
    return add_rowvec(matmul(z, param("head.W")), param("head.b"));
}

Tensor MultiModalModel::forward_masked(const std::vector<Tensor>& inputs,
                                       const std::vector<std::string>& present) const {
    std::uint32_t mask = 0;
    for (const auto& name : present) mask |= (1u << modality_index(name));
    return forward_masked(inputs, mask);
}

Tensor MultiModalModel::forward_full(const std::vector<Tensor>& inputs) const {
    const std::uint32_t all = modalities_.size() >= 32
                                  ? ~0u
                                  : ((1u << modalities_.size()) - 1u);
    return forward_masked(inputs, all);
}

Tensor MultiModalModel::latent_features(const std::vector<Tensor>& inputs) const {
    const std::size_t k = modalities_.size();
    if (inputs.size() != k)
        throw DimensionError("expected " + std::to_string(k) + " input tensors, got " +
                             std::to_string(inputs.size()));
    std::vector<Tensor> encoded;
    encoded.reserve(k);
    for (std::size_t i = 0; i < k; ++i) encoded.push_back(encode(i, inputs[i]));
    Tensor z = concat_cols(encoded);
    if (fusion_.kind == FusionKind::EarlyMaxout) z = fuse_maxout(z);
    return z;
}

bool MultiModalModel::param_belongs_to_branch(const std::string& param_name,
                                              std::size_t modality_index) const {
    if (modality_index >= modalities_.size()) return false;
    const std::string& mod = modalities_[modality_index].name;
    return param_name.rfind("enc." + mod + ".", 0) == 0 ||
           param_name.rfind("head." + mod + ".", 0) == 0;
}

Tensor MultiModalModel::fuse_maxout(const Tensor& concat) const {
    Tensor z;
    for (std::size_t p = 0; p < fusion_.maxout_pieces; ++p) {
        const std::string base = "fusion.p" + std::to_string(p);
        Tensor piece = add_rowvec(matmul(concat, param(base + ".W")), param(base + ".b"));
        z = z.defined() ? emax(z, piece) : piece;
    }
    return z;
}

MultiModalModel MultiModalModel::clone() const {
    MultiModalModel out;
    out.modalities_ = modalities_;
    out.fusion_ = fusion_;
    out.num_classes_ = num_classes_;
    out.seed_ = seed_;
    for (const auto& p : params_) {
        auto v = p.value.values();
        out.params_.push_back(
            {p.name, Tensor::parameter(p.value.shape(), std::vector<double>(v.begin(), v.end()))});
    }
    return out;
}

}  // namespace modforge

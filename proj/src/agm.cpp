#include "modforge/agm.hpp"

#include <algorithm>
#include <cmath>

#include "modforge/rng.hpp"

namespace modforge {

std::string train_method_name(TrainMethod m) {
    switch (m) {
        case TrainMethod::JointTrain: return "joint";
        case TrainMethod::Agm: return "agm";
        case TrainMethod::AgmToOne: return "agm_to_one";
    }
    throw UsageError("invalid TrainMethod");
}

TrainMethod train_method_from_name(const std::string& name) {
    if (name == "joint") return TrainMethod::JointTrain;
    if (name == "agm") return TrainMethod::Agm;
    if (name == "agm_to_one") return TrainMethod::AgmToOne;
    throw ConfigError("unknown method '" + name + "' (expected joint, agm or agm_to_one)");
}

namespace {

// exp of the averaged pairwise gaps: (1/(k−1)) Σ_{m'≠m} (v^m − v^{m'}).
std::vector<double> ratios_from(const std::vector<double>& v) {
    const std::size_t k = v.size();
    if (k < 2) throw UsageError("discrepancy ratios require k >= 2 modalities");
    double sum = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError("non-finite mono-modal score");
        sum += x;
    }
    std::vector<double> r(k);
    for (std::size_t m = 0; m < k; ++m) {
        const double exponent =
            (static_cast<double>(k) * v[m] - sum) / static_cast<double>(k - 1);
        r[m] = std::exp(exponent);
    }
    return r;
}

}  // namespace

std::vector<double> discrepancy_ratios(const std::vector<double>& s) { return ratios_from(s); }

std::vector<double> reference_ratios(const AgmState& state) {
    return ratios_from(state.running_avg);
}

std::vector<double> modulation_coefficients(const std::vector<double>& r,
                                            const std::vector<double>& tau, double alpha) {
    if (r.size() != tau.size()) throw DimensionError("modulation_coefficients: r/tau size mismatch");
    if (alpha < 0.0) throw ConfigError("alpha must be non-negative");
    std::vector<double> kappa(r.size());
    for (std::size_t m = 0; m < r.size(); ++m) {
        const double exponent = std::clamp(-alpha * (r[m] - tau[m]), -50.0, 50.0);
        kappa[m] = std::exp(exponent);
    }
    return kappa;
}

void update_running_average(AgmState& state, const std::vector<double>& s) {
    if (state.running_avg.empty()) state.running_avg.assign(s.size(), 0.0);
    if (state.running_avg.size() != s.size())
        throw DimensionError("update_running_average: score size mismatch");
    const auto t = static_cast<double>(state.t);
    for (std::size_t m = 0; m < s.size(); ++m) {
        if (!std::isfinite(s[m])) throw NumericError("non-finite score in running average");
        state.running_avg[m] = state.running_avg[m] * (t / (t + 1.0)) + s[m] / (t + 1.0);
    }
    ++state.t;
}

StepDiagnostics compute_modulated_gradients(MultiModalModel& model,
                                            const std::vector<Tensor>& inputs,
                                            const std::vector<int>& labels,
                                            const AgmState& state, TrainMethod method) {
    if (labels.empty()) throw UsageError("modulated step on an empty batch");
    const std::size_t k = model.num_modalities();

    MonoModalOutputs mono = mono_modal_outputs_auto(model, inputs);
    const std::size_t n = mono.full.rows(), K = mono.full.cols();

    StepDiagnostics diag;
    diag.loss = -mean_true_class_logprob_value(mono.full.values(), n, K, labels);
    if (!std::isfinite(diag.loss))
        throw NumericError("non-finite loss at iteration t=" + std::to_string(state.t));
    diag.acc = argmax_accuracy(mono.full.values(), n, K, labels);

    diag.s.resize(k);
    diag.acc_m.resize(k);
    for (std::size_t m = 0; m < k; ++m) {
        diag.s[m] = mono_modal_score(mono.per_modality[m], labels);
        diag.acc_m[m] = mono_modal_accuracy(mono.per_modality[m], labels);
    }
    diag.r = discrepancy_ratios(diag.s);
    diag.tau = method == TrainMethod::AgmToOne ? std::vector<double>(k, 1.0)
                                               : reference_ratios(state);
    diag.kappa = method == TrainMethod::JointTrain
                     ? std::vector<double>(k, 1.0)
                     : modulation_coefficients(diag.r, diag.tau, state.alpha);

    // ψ = Σ_m κ^m φ^m; seeding its VJP with g = ∂CE/∂φ(x) produces the
    // modulated gradient Σ_m κ^m ∂φ^m/∂θ · g with κ held constant.
    Tensor psi = scale(mono.per_modality[0], diag.kappa[0]);
    for (std::size_t m = 1; m < k; ++m)
        psi = add(psi, scale(mono.per_modality[m], diag.kappa[m]));

    std::vector<double> g = softmax_rows(mono.full.values(), n, K);
    for (std::size_t i = 0; i < n; ++i) {
        g[i * K + static_cast<std::size_t>(labels[i])] -= 1.0;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (double& v : g) v *= inv_n;

    zero_grads(model.params());
    backward_vjp(psi, g);
    return diag;
}

StepDiagnostics modulated_step(MultiModalModel& model, const std::vector<Tensor>& inputs,
                               const std::vector<int>& labels, AgmState& state,
                               TrainMethod method, SgdOptimizer& opt) {
    StepDiagnostics diag = compute_modulated_gradients(model, inputs, labels, state, method);
    opt.step(model.params());
    update_running_average(state, diag.s);  // τ was read before this absorbs s_t
    return diag;
}

namespace {

void add_into(std::vector<double>& acc, const std::vector<double>& v, double w = 1.0) {
    if (acc.empty()) acc.assign(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) acc[i] += w * v[i];
}

void scale_by(std::vector<double>& v, double c) {
    for (double& x : v) x *= c;
}

}  // namespace

TrainResult train(MultiModalModel& model, const Dataset& ds, const Splits& splits,
                  const TrainOptions& opts, const ProbeHook& probe, const EpochCallback& on_epoch) {
    if (model.num_modalities() != ds.modalities.size())
        throw ConfigError("model has " + std::to_string(model.num_modalities()) +
                          " modalities but the dataset has " + std::to_string(ds.modalities.size()));
    if (splits.val.empty()) throw UsageError("train: validation split is empty");
    opts.sgd.validate();

    TrainResult result;
    result.final_state = AgmState(model.num_modalities(), opts.alpha);
    if (opts.epochs == 0) return result;

    SgdOptimizer opt(opts.sgd);
    AgmState& state = result.final_state;

    const std::vector<Tensor> val_inputs = gather_all_features(ds, splits.val);
    const std::vector<int> val_labels = gather_labels(ds, splits.val);

    for (std::size_t e = 0; e < opts.epochs; ++e) {
        opt.set_epoch(e);
        const auto batches =
            make_batches(splits.train, opts.batch_size, mix_seed(opts.seed, "epoch", e));

        EpochMetrics em;
        em.epoch = e;
        double samples = 0.0;
        for (const auto& batch : batches) {
            const std::vector<Tensor> inputs = gather_all_features(ds, batch);
            const std::vector<int> labels = gather_labels(ds, batch);
            const StepDiagnostics diag =
                modulated_step(model, inputs, labels, state, opts.method, opt);

            const auto w = static_cast<double>(batch.size());
            em.train_loss += w * diag.loss;
            em.train_acc += w * diag.acc;
            add_into(em.train_acc_m, diag.acc_m, w);
            add_into(em.mean_s, diag.s);
            add_into(em.mean_r, diag.r);
            add_into(em.mean_tau, diag.tau);
            add_into(em.mean_kappa, diag.kappa);
            samples += w;
        }
        em.train_loss /= samples;
        em.train_acc /= samples;
        scale_by(em.train_acc_m, 1.0 / samples);
        const auto nb = static_cast<double>(batches.size());
        scale_by(em.mean_s, 1.0 / nb);
        scale_by(em.mean_r, 1.0 / nb);
        scale_by(em.mean_tau, 1.0 / nb);
        scale_by(em.mean_kappa, 1.0 / nb);

        MonoModalOutputs mono = mono_modal_outputs_auto(model, val_inputs);
        const std::size_t n = mono.full.rows(), K = mono.full.cols();
        em.val_loss = -mean_true_class_logprob_value(mono.full.values(), n, K, val_labels);
        em.val_acc = argmax_accuracy(mono.full.values(), n, K, val_labels);
        for (std::size_t m = 0; m < model.num_modalities(); ++m) {
            em.val_acc_m.push_back(mono_modal_accuracy(mono.per_modality[m], val_labels));
            em.val_s.push_back(mono_modal_score(mono.per_modality[m], val_labels));
        }

        if (probe && opts.probe_every > 0 && (e + 1) % opts.probe_every == 0)
            em.d = probe(model, e);

        result.history.push_back(std::move(em));
        if (on_epoch) on_epoch(result.history.back());
    }
    return result;
}

}  // namespace modforge

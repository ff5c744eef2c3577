#pragma once

#include <functional>
#include <string>
#include <vector>

#include "modforge/data.hpp"
#include "modforge/model.hpp"
#include "modforge/shapley.hpp"

namespace modforge {

enum class TrainMethod { JointTrain, Agm, AgmToOne };

std::string train_method_name(TrainMethod m);
TrainMethod train_method_from_name(const std::string& name);  // ConfigError if unknown

// Running-average state of the mono-modal scores. t counts batches already
// absorbed into running_avg; with the zero initialization the first batch
// sees a reference of τ ≡ 1.
struct AgmState {
    std::vector<double> running_avg;  // ŝ^m, model modality order
    std::size_t t = 0;
    double alpha = 1.0;

    AgmState() = default;
    AgmState(std::size_t num_modalities, double alpha_)
        : running_avg(num_modalities, 0.0), alpha(alpha_) {}
};

// r^m = exp[(1/(k−1)) Σ_{m'≠m} (s^m − s^{m'})]. Requires k ≥ 2.
std::vector<double> discrepancy_ratios(const std::vector<double>& s);

// τ^m: the same ratio computed from the running averages (read before the
// current batch is absorbed).
std::vector<double> reference_ratios(const AgmState& state);

// κ^m = exp[−α (r^m − τ^m)], exponent clamped to ±50.
std::vector<double> modulation_coefficients(const std::vector<double>& r,
                                            const std::vector<double>& tau, double alpha);

// ŝ^m ← ŝ^m·t/(t+1) + s^m/(t+1); then t ← t+1. Keeps ŝ the exact mean of all
// absorbed scores.
void update_running_average(AgmState& state, const std::vector<double>& s);

struct StepDiagnostics {
    double loss = 0.0;  // cross-entropy at the full output
    double acc = 0.0;   // argmax accuracy of the full output on this batch
    std::vector<double> s, r, tau, kappa;
    std::vector<double> acc_m;  // mono-modal accuracies on this batch
};

// One iteration's gradient: leaves the modulated gradient Σ_m κ^m·VJP(φ^m, g)
// in the model's parameter grads, where g = ∂CE/∂φ at the full output and the
// κ are treated as constants. Reads state (for τ) but does not modify it.
StepDiagnostics compute_modulated_gradients(MultiModalModel& model,
                                            const std::vector<Tensor>& inputs,
                                            const std::vector<int>& labels,
                                            const AgmState& state, TrainMethod method);

// Full iteration: gradients, optimizer step, then the running-average update
// (τ is read before ŝ absorbs the current scores) and t increment.
StepDiagnostics modulated_step(MultiModalModel& model, const std::vector<Tensor>& inputs,
                               const std::vector<int>& labels, AgmState& state,
                               TrainMethod method, SgdOptimizer& opt);

struct TrainOptions {
    TrainMethod method = TrainMethod::JointTrain;
    double alpha = 1.0;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    SgdConfig sgd;
    std::uint64_t seed = 0;
    std::size_t probe_every = 0;  // run the probe hook every N epochs; 0 = never
};

struct EpochMetrics {
    std::size_t epoch = 0;
    // Training split: loss/acc sample-weighted over the epoch's batches;
    // s/r/τ/κ are plain means of the per-batch values.
    double train_loss = 0.0, train_acc = 0.0;
    std::vector<double> train_acc_m, mean_s, mean_r, mean_tau, mean_kappa;
    // Validation split, evaluated once per epoch.
    double val_loss = 0.0, val_acc = 0.0;
    std::vector<double> val_acc_m, val_s;
    // Probe competition strengths d^m; empty on epochs without a probe.
    std::vector<double> d;
};

struct TrainResult {
    std::vector<EpochMetrics> history;
    AgmState final_state;
};

// Optional per-epoch probe: returns d^m per modality for the current model.
using ProbeHook = std::function<std::vector<double>(const MultiModalModel&, std::size_t)>;
// Called with each epoch's finished metrics (streaming logs).
using EpochCallback = std::function<void(const EpochMetrics&)>;

// Runs epochs × batches modulated steps over splits.train, with per-epoch
// validation metrics on splits.val. Deterministic in opts.seed.
TrainResult train(MultiModalModel& model, const Dataset& ds, const Splits& splits,
                  const TrainOptions& opts, const ProbeHook& probe = {},
                  const EpochCallback& on_epoch = {});

}  // namespace modforge

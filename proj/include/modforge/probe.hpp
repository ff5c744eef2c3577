#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "modforge/concept.hpp"

namespace modforge {

struct ProbeResult {
    std::string modality;
    std::vector<double> W;  // row-major [K x D]
    std::vector<double> b;  // [K]
    double d_raw = 0.0;     // unclamped competition strength
    double d = 0.0;         // clamped to [0, 1]
    std::size_t n_fit = 0, n_eval = 0;
    double lambda = 0.0;
};

// Minimizes (1/n) Σ_i ‖W z_i + b − t_i‖² + λ‖W‖²_F with a free intercept,
// in closed form on centered data. Z is row-major [n x D], targets [n x K].
// Deterministic; λ = 0 on a singular system raises a numeric error advising
// λ > 0.
void fit_linear_probe(std::span<const double> Z, std::size_t n, std::size_t D,
                      std::span<const double> targets, std::size_t K, double lambda,
                      std::vector<double>& W, std::vector<double>& b);

// d_raw = Σ_i ‖t_i − (W z_i + b)‖² / Σ_i ‖t_i − t̄‖² with t̄ the per-dimension
// mean of the eval targets; returns (d_raw, d) with d clamped to [0, 1].
std::pair<double, double> competition_strength(const std::vector<double>& W,
                                               const std::vector<double>& b,
                                               std::span<const double> Z_eval, std::size_t n_eval,
                                               std::size_t D, std::span<const double> targets_eval,
                                               std::size_t K);

// Full Eq.-style pipeline: latents z from the trained model, targets C^m(x^m)
// from each concept; fit on splits.probe_fit, score on splits.probe_eval.
std::vector<ProbeResult> probe_pipeline(const MultiModalModel& model,
                                        const std::vector<ConceptModel>& concepts,
                                        const Dataset& ds, const Splits& splits, double lambda);

}  // namespace modforge

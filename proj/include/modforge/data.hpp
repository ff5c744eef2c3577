#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "modforge/tensor.hpp"

namespace modforge {

// --- synthetic generator -------------------------------------------------------

struct ModalityGenSpec {
    std::string name;
    std::size_t dim = 1;
    double snr = 1.0;  // ρ_m ≥ 0, scales the class signal against unit noise
};

struct SyntheticSpec {
    std::size_t num_classes = 4;
    std::size_t num_samples = 4000;
    std::vector<ModalityGenSpec> modalities;
    double shared_fraction = 0.0;  // γ ∈ [0,1], cross-modal redundancy
    std::uint64_t seed = 0;

    void validate() const;
};

// Benchmark presets referenced by name: "balanced", "imbalanced", "trimodal".
SyntheticSpec builtin_benchmark(const std::string& name, std::uint64_t seed);

// --- dataset ---------------------------------------------------------------------

struct DatasetModality {
    std::string name;
    std::size_t dim = 0;
    std::vector<double> features;  // row-major [N x dim]
};

struct Dataset {
    std::size_t num_samples = 0;
    std::size_t num_classes = 0;
    std::vector<DatasetModality> modalities;
    std::vector<int> labels;     // in [0, num_classes)
    std::string provenance;      // JSON text describing the origin

    std::size_t modality_index(const std::string& name) const;  // ConfigError if unknown
    void validate() const;
};

// x^m_i = ρ_m [(1−γ) μ^m_{y_i} + γ P^m μ^shared_{y_i}] + ε, ε ~ N(0, I).
// Class means, the shared latents, the projections P^m, labels and noise all
// come from independent streams derived from spec.seed.
Dataset generate(const SyntheticSpec& spec);

// --- persistence (.mmds) ----------------------------------------------------------

inline constexpr std::uint32_t kDatasetVersion = 1;

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// --- splits ------------------------------------------------------------------------

struct SplitFractions {
    double train = 0.6;
    double val = 0.2;
    double probe_fit = 0.1;
    double probe_eval = 0.1;
};

struct Splits {
    std::vector<std::size_t> train, val, probe_fit, probe_eval;
};

// Stratified by class, deterministic in seed. Global split sizes follow the
// fractions by largest remainder; per-class counts stay within ±1 of
// proportional.
Splits make_splits(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed);

// --- batching ------------------------------------------------------------------------

// Shuffles `split` by epoch_seed and chunks it; the last partial batch is kept.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& split,
                                                   std::size_t batch_size,
                                                   std::uint64_t epoch_seed);

// --- gathering ------------------------------------------------------------------------

// Rows of one modality's features at the given sample indices, as a constant
// [n x d] tensor.
Tensor gather_features(const Dataset& ds, std::size_t modality_index,
                       std::span<const std::size_t> idx);
std::vector<Tensor> gather_all_features(const Dataset& ds, std::span<const std::size_t> idx);
std::vector<int> gather_labels(const Dataset& ds, std::span<const std::size_t> idx);

}  // namespace modforge

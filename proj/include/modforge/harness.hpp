#pragma once

#include <string>
#include <vector>

#include "modforge/config.hpp"

namespace modforge {

inline constexpr const char* kToolVersion = "modforge 1.0.0";

// Runs the full experiment: for every seed, trains the mono-modal concepts,
// trains the multi-modal model, runs the probe pipeline, and writes
//   <output_dir>/seed<seed>/run.csv        per-epoch metrics
//   <output_dir>/seed<seed>/model.mmf      final parameters
//   <output_dir>/seed<seed>/concept_<modality>_<context>.mmf
//   <output_dir>/manifest.json             per-seed + aggregate results
// The manifest is rewritten after each seed so partial results survive an
// abort. Returns the manifest path.
std::string run_experiment(const ExperimentConfig& cfg);

// Merges run manifests into a comparison table (one row per manifest) and
// writes it as CSV. Manifests must agree on dataset shape and model
// modalities; the row with the best mean accuracy is marked when there is
// more than one row. Returns the table text.
std::string compare_manifests(const std::vector<std::string>& manifest_paths,
                              const std::string& out_csv);

// Renders a run.csv as a static SVG: an accuracy panel (validation Acc and
// Acc_m per epoch) and, when d_<m> columns carry values, a competition
// strength panel.
void plot_run_csv(const std::string& csv_path, const std::string& svg_path);

}  // namespace modforge

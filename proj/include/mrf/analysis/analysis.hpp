#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mrf/model/checkpoint.hpp"
#include "mrf/model/transformer.hpp"

namespace mrf::analysis {

// Spread of one mean-gate distribution over experts.
struct GateSpread {
  double stddev = 0.0;        // population standard deviation across experts
  double entropy_bits = 0.0;  // Shannon entropy, log base 2
};
GateSpread gate_spread(std::span<const double> mean_gate);

struct DiversityRow {
  std::size_t layer = 0;
  std::string domain;
  std::size_t tokens = 0;
  std::vector<double> mean_gate;  // full softmax gate vector (before top-k), averaged
  GateSpread spread;
};

struct DiversityReport {
  std::vector<DiversityRow> rows;  // sorted by layer, then domain
  const DiversityRow& at(std::size_t layer, const std::string& domain) const;
};

// Averages every layer's gate vectors per domain over non-PAD tokens.
// `layers` restricts the report; empty means all layers.
DiversityReport routing_diversity(const model::Checkpoint& ckpt, const std::vector<model::TokenBatch>& batches,
                                  const std::vector<std::size_t>& layers = {});

struct LayerSpecialization {
  std::size_t layer = 0;
  std::size_t n_experts = 0;
  std::vector<double> matrix;  // [n, n] token-averaged cosine of expert outputs
  double mean_pairwise = 0.0;  // mean over the n(n-1)/2 distinct pairs
  double at(std::size_t a, std::size_t b) const { return matrix[a * n_experts + b]; }
};

struct SpecializationReport {
  std::vector<LayerSpecialization> layers;
};

// Runs every probe token through all experts of each layer (routing is
// bypassed) and averages pairwise output cosine similarity over tokens.
SpecializationReport expert_specialization(const model::Checkpoint& ckpt, const std::vector<model::TokenBatch>& probe);

// Token-averaged pairwise cosine matrix for explicit expert outputs, each [T, d].
LayerSpecialization output_similarity(const std::vector<Tensor>& expert_outputs);

// A parsed metrics log.
struct StepRow {
  std::size_t step = 0;
  double lm_loss = 0.0;
  double aux_loss = 0.0;
  double z_loss = 0.0;
};

struct RunLog {
  std::string name;
  std::vector<StepRow> steps;
  std::optional<double> val_loss;
};

RunLog read_metrics_log(const std::filesystem::path& path, std::string name = {});

struct Comparison {
  std::vector<std::string> names;
  std::vector<std::size_t> steps;
  std::vector<std::vector<double>> lm_loss;  // [run][step index]
  std::vector<double> final_delta;           // final lm_loss of run i minus run 0
};

// Aligns runs on their shared step grid; throws DataError("step-grid
// mismatch ...") when the grids differ.
Comparison compare_runs(const std::vector<RunLog>& runs);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n - 1); 0 for one value
};
MeanStd summarize(std::span<const double> values);

// CSV writers.
void write_diversity_csv(std::ostream& out, const DiversityReport& report);
void write_specialization_csv(std::ostream& out, const SpecializationReport& report);
void write_curves_csv(std::ostream& out, const std::vector<RunLog>& runs);
void write_comparison_csv(std::ostream& out, const Comparison& cmp);

// One JSON line per token: {layer, domain, gates, selected}.
void write_routing_trace(std::ostream& out, const model::ForwardResult& fwd, const model::TokenBatch& batch);

}  // namespace mrf::analysis

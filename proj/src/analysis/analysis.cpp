#include "mrf/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "mrf/error.hpp"
#include "mrf/model/tokenizer.hpp"
#include "mrf/moe/layer.hpp"
#include "mrf/numeric/ops.hpp"
#include "mrf/numeric/tape.hpp"

namespace mrf::analysis {

GateSpread gate_spread(std::span<const double> mean_gate) {
  if (mean_gate.empty()) throw ShapeError("gate spread of an empty distribution");
  const double n = static_cast<double>(mean_gate.size());
  double mean = 0.0;
  for (double g : mean_gate) mean += g;
  mean /= n;
  GateSpread s;
  for (double g : mean_gate) {
    s.stddev += (g - mean) * (g - mean);
    if (g > 0.0) s.entropy_bits -= g * std::log2(g);
  }
  s.stddev = std::sqrt(s.stddev / n);
  return s;
}

const DiversityRow& DiversityReport::at(std::size_t layer, const std::string& domain) const {
  for (const auto& r : rows) {
    if (r.layer == layer && r.domain == domain) return r;
  }
  throw DataError("no diversity row for layer " + std::to_string(layer) + ", domain '" + domain + "'");
}

DiversityReport routing_diversity(const model::Checkpoint& ckpt, const std::vector<model::TokenBatch>& batches,
                                  const std::vector<std::size_t>& layers) {
  if (!ckpt.is_moe()) throw ConfigError("routing diversity needs an MoE checkpoint");
  if (batches.empty()) throw DataError("routing diversity needs at least one batch");
  const std::size_t n = ckpt.moe().n_experts;
  std::vector<std::size_t> wanted = layers;
  if (wanted.empty()) {
    for (std::size_t l = 0; l < ckpt.config().n_layers; ++l) wanted.push_back(l);
  }
  for (std::size_t l : wanted) {
    if (l >= ckpt.config().n_layers) throw ConfigError("layer " + std::to_string(l) + " does not exist");
  }
  std::sort(wanted.begin(), wanted.end());

  // (layer, domain) -> (gate sums, tokens)
  std::map<std::pair<std::size_t, std::string>, std::pair<std::vector<double>, std::size_t>> acc;
  NoGradGuard no_grad;
  for (const auto& b : batches) {
    const model::ForwardResult fwd = model::forward(ckpt, b);
    for (std::size_t l : wanted) {
      auto& [sums, count] = acc[{l, b.domain}];
      sums.resize(n, 0.0);
      const moe::RoutingTrace& trace = *fwd.layers[l].routing;
      for (std::size_t t = 0; t < trace.tokens(); ++t) {
        if (b.inputs[t] == model::kPad) continue;
        for (std::size_t e = 0; e < n; ++e) sums[e] += trace.gates.at(t, e);
        ++count;
      }
    }
  }
  DiversityReport report;
  for (auto& [key, value] : acc) {
    auto& [sums, count] = value;
    if (count == 0) throw DataError("domain '" + key.second + "' contributed no tokens");
    DiversityRow row;
    row.layer = key.first;
    row.domain = key.second;
    row.tokens = count;
    for (double s : sums) row.mean_gate.push_back(s / static_cast<double>(count));
    row.spread = gate_spread(row.mean_gate);
    report.rows.push_back(std::move(row));
  }
  return report;
}

LayerSpecialization output_similarity(const std::vector<Tensor>& outputs) {
  if (outputs.size() < 2) throw ConfigError("specialization needs at least two experts");
  const std::size_t n = outputs.size(), tokens = outputs[0].rows(), d = outputs[0].cols();
  if (tokens == 0) throw DataError("specialization over an empty probe");
  for (const Tensor& o : outputs) {
    if (o.rows() != tokens || o.cols() != d) throw ShapeError("expert outputs differ in shape");
  }
  LayerSpecialization s;
  s.n_experts = n;
  s.matrix.assign(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    s.matrix[a * n + a] = 1.0;
    for (std::size_t b = a + 1; b < n; ++b) {
      double total = 0.0;
      for (std::size_t t = 0; t < tokens; ++t) {
        total += cosine_similarity(outputs[a].data().subspan(t * d, d), outputs[b].data().subspan(t * d, d));
      }
      s.matrix[a * n + b] = s.matrix[b * n + a] = total / static_cast<double>(tokens);
    }
  }
  double pairs = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      s.mean_pairwise += s.matrix[a * n + b];
      pairs += 1.0;
    }
  s.mean_pairwise /= pairs;
  return s;
}

SpecializationReport expert_specialization(const model::Checkpoint& ckpt, const std::vector<model::TokenBatch>& probe) {
  if (!ckpt.is_moe()) throw ConfigError("expert specialization needs an MoE checkpoint");
  if (probe.empty()) throw DataError("specialization needs a non-empty probe");
  const std::size_t layers = ckpt.config().n_layers, n = ckpt.moe().n_experts;
  NoGradGuard no_grad;
  std::vector<std::vector<Tensor>> inputs(layers);
  for (const auto& b : probe) {
    std::vector<std::size_t> rows;
    for (std::size_t t = 0; t < b.inputs.size(); ++t) {
      if (b.inputs[t] != model::kPad) rows.push_back(t);
    }
    if (rows.empty()) continue;
    const model::ForwardResult fwd = model::forward(ckpt, b);
    for (std::size_t l = 0; l < layers; ++l) inputs[l].push_back(gather_rows(fwd.layers[l].ffn_input, rows));
  }
  if (inputs.empty() || inputs[0].empty()) throw DataError("specialization probe has no tokens");
  SpecializationReport report;
  for (std::size_t l = 0; l < layers; ++l) {
    const Tensor x = concat_rows(inputs[l]);
    const moe::LayerParams params = model::moe_layer_params(ckpt, l);
    std::vector<Tensor> outputs;
    for (std::size_t e = 0; e < n; ++e) outputs.push_back(moe::expert_forward(x, params.experts[e]));
    LayerSpecialization s = output_similarity(outputs);
    s.layer = l;
    report.layers.push_back(std::move(s));
  }
  return report;
}

RunLog read_metrics_log(const std::filesystem::path& path, std::string name) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read metrics log '" + path.string() + "'");
  RunLog log;
  log.name = name.empty() ? path.stem().string() : std::move(name);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const std::string event = rec.value("event", "step");
      if (event == "step") {
        log.steps.push_back({rec.at("step").get<std::size_t>(), rec.at("lm_loss").get<double>(),
                             rec.value("aux_loss", 0.0), rec.value("z_loss", 0.0)});
      } else if (event == "eval") {
        log.val_loss = rec.at("val_loss").get<double>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (log.steps.empty()) throw DataError("metrics log '" + path.string() + "' has no step records");
  return log;
}

Comparison compare_runs(const std::vector<RunLog>& runs) {
  if (runs.empty()) throw DataError("nothing to compare");
  Comparison c;
  for (const StepRow& r : runs[0].steps) c.steps.push_back(r.step);
  for (const RunLog& run : runs) {
    if (run.steps.size() != c.steps.size()) {
      throw DataError("step-grid mismatch: '" + run.name + "' has " + std::to_string(run.steps.size()) +
                      " steps, '" + runs[0].name + "' has " + std::to_string(c.steps.size()));
    }
    std::vector<double> losses;
    for (std::size_t i = 0; i < c.steps.size(); ++i) {
      if (run.steps[i].step != c.steps[i]) throw DataError("step-grid mismatch at row " + std::to_string(i));
      losses.push_back(run.steps[i].lm_loss);
    }
    c.names.push_back(run.name);
    c.lm_loss.push_back(std::move(losses));
  }
  for (const auto& losses : c.lm_loss) c.final_delta.push_back(losses.back() - c.lm_loss[0].back());
  return c;
}

MeanStd summarize(std::span<const double> values) {
  if (values.empty()) throw DataError("summary of no values");
  MeanStd s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() > 1) {
    for (double v : values) s.stddev += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(s.stddev / static_cast<double>(values.size() - 1));
  }
  return s;
}

namespace {
std::string num(double v) {
  // Shortest round-trip representation.
  return nlohmann::json(v).dump();
}
}  // namespace

void write_diversity_csv(std::ostream& out, const DiversityReport& report) {
  out << "layer,domain,expert,mean_gate,std,entropy\n";
  for (const auto& r : report.rows)
    for (std::size_t e = 0; e < r.mean_gate.size(); ++e) {
      out << r.layer << ',' << r.domain << ',' << e << ',' << num(r.mean_gate[e]) << ',' << num(r.spread.stddev)
          << ',' << num(r.spread.entropy_bits) << '\n';
    }
}

void write_specialization_csv(std::ostream& out, const SpecializationReport& report) {
  out << "layer,expert_a,expert_b,cosine\n";
  for (const auto& l : report.layers)
    for (std::size_t a = 0; a < l.n_experts; ++a)
      for (std::size_t b = 0; b < l.n_experts; ++b) out << l.layer << ',' << a << ',' << b << ',' << num(l.at(a, b)) << '\n';
}

void write_curves_csv(std::ostream& out, const std::vector<RunLog>& runs) {
  out << "step,variant,lm_loss,aux_loss,z_loss\n";
  for (const auto& run : runs)
    for (const auto& s : run.steps) {
      out << s.step << ',' << run.name << ',' << num(s.lm_loss) << ',' << num(s.aux_loss) << ',' << num(s.z_loss) << '\n';
    }
}

void write_comparison_csv(std::ostream& out, const Comparison& cmp) {
  out << "step";
  for (const auto& n : cmp.names) out << ',' << n;
  for (std::size_t i = 1; i < cmp.names.size(); ++i) out << ",delta_" << cmp.names[i];
  out << '\n';
  for (std::size_t s = 0; s < cmp.steps.size(); ++s) {
    out << cmp.steps[s];
    for (const auto& losses : cmp.lm_loss) out << ',' << num(losses[s]);
    for (std::size_t i = 1; i < cmp.lm_loss.size(); ++i) out << ',' << num(cmp.lm_loss[i][s] - cmp.lm_loss[0][s]);
    out << '\n';
  }
}

void write_routing_trace(std::ostream& out, const model::ForwardResult& fwd, const model::TokenBatch& batch) {
  for (std::size_t l = 0; l < fwd.layers.size(); ++l) {
    if (!fwd.layers[l].routing) continue;
    const moe::RoutingTrace& trace = *fwd.layers[l].routing;
    const std::size_t n = trace.n_experts();
    for (std::size_t t = 0; t < trace.tokens(); ++t) {
      if (batch.inputs[t] == model::kPad) continue;
      const auto g = trace.gates.data().subspan(t * n, n);
      const auto sel = trace.selected_for(t);
      nlohmann::json rec = {{"layer", l},
                            {"domain", batch.domain},
                            {"gates", std::vector<double>(g.begin(), g.end())},
                            {"selected", std::vector<std::size_t>(sel.begin(), sel.end())}};
      out << rec.dump() << '\n';
    }
  }
}

}  // namespace mrf::analysis

// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (capped at 1 for ctest).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradcheck.hpp"
#include "mrf/analysis/analysis.hpp"
#include "mrf/model/transformer.hpp"
#include "mrf/moe/layer.hpp"
#include "mrf/moe/routing.hpp"
#include "mrf/numeric/ops.hpp"
#include "mrf/numeric/rng.hpp"
#include "mrf/numeric/tape.hpp"
#include "mrf/train/trainer.hpp"
#include "mrf/upcycle/upcycler.hpp"

using namespace mrf;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// Synthetic head statistics for a given dense architecture.
upcycle::HeadStats random_stats(const model::ModelConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  upcycle::HeadStats s;
  s.config = c;
  s.tokens = 1;
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    std::vector<upcycle::HeadStat> heads;
    for (std::size_t h = 0; h < c.n_heads; ++h) {
      heads.push_back({Tensor::randn({c.head_dim, c.d_model}, 0.1, rng), Tensor::randn({c.head_dim}, 1.0, rng)});
    }
    s.layers.push_back(std::move(heads));
  }
  return s;
}

model::ModelConfig desk_model() {
  model::ModelConfig c;  // d=128, h=16, head_dim=8, 2 layers, ffn 256
  c.seq_len = 128;
  return c;
}

// ---- 1 ------------------------------------------------------------------
Outcome init_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  const model::ModelConfig c = desk_model();
  model::Checkpoint dense = model::init_dense(c, 101);
  dense.freeze();
  // Real key collection on random byte sequences.
  Rng data(102);
  std::size_t drawn = 0;
  auto source = [&]() -> std::optional<model::TokenBatch> {
    if (drawn++ == 4) return std::nullopt;
    model::TokenBatch b;
    b.batch = 2;
    b.seq = 64;
    for (std::size_t i = 0; i < 128; ++i) {
      b.inputs.push_back(static_cast<std::int32_t>(data.index(256)));
      b.targets.push_back(static_cast<std::int32_t>(data.index(256)));
    }
    return b;
  };
  const auto stats = upcycle::collect_key_stats(dense, source, 4);

  double worst_cos = 0.0, worst_ratio = 0.0;
  for (auto mode : {moe::RouterMode::mixture, moe::RouterMode::vanilla}) {
    moe::MoEConfig mc;
    mc.router_mode = mode;
    std::optional<upcycle::RouterBank> bank;
    if (mode == moe::RouterMode::mixture) bank = upcycle::build_router_bank(stats, mc);
    const model::Checkpoint ckpt = upcycle::upcycle(dense, mc, bank ? &*bank : nullptr, {103, 0.02});
    Rng rng(104);
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      const Tensor x = Tensor::randn({100, c.d_model}, 1.0, rng);
      const moe::LayerOutput out = moe::moe_layer(x, model::moe_layer_params(ckpt, l), ckpt.moe());
      const Tensor ref = model::dense_ffn(dense, l, x);
      for (std::size_t t = 0; t < 100; ++t) {
        const auto y = out.y.data().subspan(t * c.d_model, c.d_model);
        const auto r = ref.data().subspan(t * c.d_model, c.d_model);
        worst_cos = std::max(worst_cos, std::abs(cosine_similarity(y, r) - 1.0));
        double gate_mass = 0.0;
        for (std::size_t e : out.trace.selected_for(t)) gate_mass += out.trace.gates.at(t, e);
        const double ratio = std::sqrt(dot(y, y)) / std::sqrt(dot(r, r));
        worst_ratio = std::max(worst_ratio, std::abs(ratio - gate_mass));
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst_cos <= 1e-9 && worst_ratio <= 1e-9 && secs < 10.0,
          "max |cos-1| " + fmt(worst_cos, 3) + ", max |norm ratio - gate mass| " + fmt(worst_ratio, 3) + ", " +
              fmt(secs, 3) + " s"};
}

// ---- 2 ------------------------------------------------------------------
Outcome dimension_table() {
  model::ModelConfig c;
  c.n_heads = 16;
  c.head_dim = 64;
  c.d_model = 1024;
  c.n_layers = 1;
  const auto stats = random_stats(c, 201);
  const std::map<std::size_t, std::size_t> expected{{2, 512}, {4, 256}, {8, 128}, {16, 64}, {32, 32}};
  bool ok = true;
  std::string got;
  for (const auto& [m, dim] : expected) {
    moe::MoEConfig mc;
    mc.n_experts = 8;
    mc.n_routers = m;
    mc.split_heads = m == 32;
    const upcycle::RouterBank bank = upcycle::build_router_bank(stats, mc);
    const auto& layer = bank.layers.at(0);
    const bool shapes = layer.router_mats.size() == m && layer.router_mats[0].shape() == Shape{dim, 1024} &&
                        layer.expert_keys[0].size() == dim && bank.config.router_dim == dim;
    ok = ok && shapes;
    got += (got.empty() ? "" : " ") + std::to_string(m) + "->" + std::to_string(layer.router_mats[0].dim(0));
  }
  return {ok, "m->d': " + got};
}

// ---- 3 ------------------------------------------------------------------
Outcome router_parameter_count() {
  model::ModelConfig c;
  c.n_heads = 16;
  c.head_dim = 64;
  c.d_model = 1024;
  c.n_layers = 1;
  moe::MoEConfig mc;
  mc.n_experts = 8;
  mc.n_routers = 8;
  mc.resolve(c);
  const std::size_t counted = moe::router_param_count(c, mc);
  const upcycle::RouterBank bank = upcycle::build_router_bank(random_stats(c, 301), mc);
  std::size_t built = 0;
  for (const Tensor& w : bank.layers[0].router_mats) built += w.size();
  return {counted == 1048576 && built == 1048576 && mc.router_dim == 128,
          "d'=" + std::to_string(mc.router_dim) + ", counted " + std::to_string(counted) + ", built " +
              std::to_string(built)};
}

// ---- 4 ------------------------------------------------------------------
Outcome collapse_identity() {
  Rng rng(401);
  moe::MoEConfig mc;
  mc.n_experts = 8;
  mc.n_routers = 8;
  mc.router_dim = 16;
  mc.keys_per_expert = 1;
  const std::size_t d = 128;
  std::vector<Tensor> mats, keys;
  for (std::size_t j = 0; j < 8; ++j) mats.push_back(Tensor::randn({16, d}, 0.3, rng));
  for (std::size_t i = 0; i < 8; ++i) keys.push_back(Tensor::randn({16}, 1.0, rng));
  const Tensor x = Tensor::randn({1000, d}, 1.0, rng);
  const Tensor full = moe::score_mixture(x, mats, keys, mc).expert;
  const Tensor collapsed = moe::score_collapsed(x, mats, keys, mc);
  double worst = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) worst = std::max(worst, std::abs(full[i] - collapsed[i]));
  return {worst <= 1e-9, "1000 inputs, max |diff| " + fmt(worst, 3)};
}

// ---- 5 ------------------------------------------------------------------
Outcome greedy_oracle() {
  std::size_t checked = 0, failures = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (std::size_t count : {4u, 6u}) {
      Rng rng(500 + seed);
      std::vector<std::vector<double>> items(count, std::vector<double>(5));
      for (auto& v : items)
        for (double& x : v) x = rng.normal();
      // Brute-force global best pair, ties to the lowest (i, j).
      double best = -2.0;
      std::pair<std::size_t, std::size_t> best_pair;
      for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = i + 1; j < count; ++j) {
          double ab = 0, aa = 0, bb = 0;
          for (std::size_t k = 0; k < 5; ++k) {
            ab += items[i][k] * items[j][k];
            aa += items[i][k] * items[i][k];
            bb += items[j][k] * items[j][k];
          }
          const double s = ab / std::sqrt(aa * bb);
          if (s > best) {
            best = s;
            best_pair = {i, j};
          }
        }
      const auto pairs = upcycle::greedy_pair(items);
      std::multiset<std::size_t> used;
      for (const auto& p : pairs) {
        used.insert(p.first);
        used.insert(p.second);
      }
      std::set<std::size_t> distinct(used.begin(), used.end());
      const bool perfect = pairs.size() == count / 2 && used.size() == count && distinct.size() == count;
      const bool first = std::pair<std::size_t, std::size_t>(std::minmax(pairs[0].first, pairs[0].second)) == best_pair;
      failures += !(perfect && first);
      ++checked;
    }
  }
  return {failures == 0, std::to_string(checked) + " sets, " + std::to_string(failures) + " mismatches"};
}

// ---- 6 ------------------------------------------------------------------
Outcome gradient_check() {
  Rng rng(601);
  const std::size_t d = 8, n = 2, hidden = 16;
  moe::MoEConfig mc;
  mc.n_experts = n;
  mc.n_routers = 2;
  mc.router_dim = 4;
  mc.keys_per_expert = 1;
  mc.top_k = 1;
  std::vector<Tensor> mats, keys;
  for (std::size_t j = 0; j < 2; ++j) mats.push_back(Tensor::randn({4, d}, 0.7, rng));
  for (std::size_t i = 0; i < n; ++i) keys.push_back(Tensor::randn({4}, 1.0, rng));
  std::vector<moe::Expert> experts;
  for (std::size_t e = 0; e < n; ++e) {
    experts.push_back({Tensor::randn({hidden, d}, 0.5, rng), Tensor::randn({d, hidden}, 0.5, rng)});
  }
  const Tensor x = Tensor::randn({6, d}, 1.0, rng);
  const Tensor probe = Tensor::randn({6, d}, 1.0, rng);
  std::vector<Tensor> params = mats;
  params.insert(params.end(), keys.begin(), keys.end());
  for (const auto& e : experts) {
    params.push_back(e.w1);
    params.push_back(e.w2);
  }
  auto loss = [&] {
    const moe::LayerOutput out = moe::moe_layer(x, moe::LayerParams{mats, keys, {}, experts}, mc);
    std::vector<Tensor> terms{sum(mul(out.y, probe)), scale(out.aux_loss, 10.0), scale(out.z_loss, 10.0)};
    return add_n(terms);
  };
  const auto res = testing::check_gradients(params, loss, 1e-3, 1e-8, testing::Stencil::five_point);
  return {res.max_rel_error < 1e-6, "max relative error " + fmt(res.max_rel_error, 3) + " at " + res.worst +
                                        ", max abs error " + fmt(res.max_abs_error, 3) + " (router mats, keys, experts)"};
}

// ---- 7 ------------------------------------------------------------------
Outcome loss_anchors() {
  const moe::RoutingTrace uniform = moe::route(Tensor::zeros({64, 8}), 2);
  const double aux = moe::aux_loss(uniform, 0.02).item();
  const double z = moe::z_loss(uniform, 0.001).item();
  const double ln8 = std::log(8.0);
  const bool ok = std::abs(aux - 0.02) <= 1e-12 && std::abs(z - 0.001 * ln8 * ln8) <= 1e-12 &&
                  std::abs(z - 4.3241e-3) < 5e-8;
  return {ok, "aux " + fmt(aux, 15) + ", z " + fmt(z, 15)};
}

// ---- 8 ------------------------------------------------------------------
Outcome lr_anchors() {
  train::TrainConfig tc;
  tc.total_steps = 2000;
  const double a = train::lr_at(10, tc), b = train::lr_at(1700, tc), c = train::lr_at(1900, tc);
  const bool ok = std::abs(a - 2.5e-4) <= 1e-12 && std::abs(b - 1.580e-4) <= 1e-12 && std::abs(c - 4.9928e-5) <= 1e-12;
  return {ok, "0.5% " + fmt(a, 12) + ", 85% " + fmt(b, 12) + ", 95% " + fmt(c, 12)};
}

// ---- 9 ------------------------------------------------------------------
Outcome fresh_specialization(const train::Corpus& corpus) {
  const model::Checkpoint dense = model::init_dense(desk_model(), 901);
  const auto stats = random_stats(desk_model(), 902);
  std::string detail;
  bool ok = true;
  for (auto mode : {moe::RouterMode::mixture, moe::RouterMode::vanilla}) {
    moe::MoEConfig mc;
    mc.router_mode = mode;
    std::optional<upcycle::RouterBank> bank;
    if (mode == moe::RouterMode::mixture) bank = upcycle::build_router_bank(stats, mc);
    const model::Checkpoint ckpt = upcycle::upcycle(dense, mc, bank ? &*bank : nullptr, {903, 0.02});
    const auto probe = train::validation_batches(corpus, 1, 2, 128, 904);
    for (const auto& l : analysis::expert_specialization(ckpt, probe).layers) {
      ok = ok && l.mean_pairwise == 1.0 && std::all_of(l.matrix.begin(), l.matrix.end(), [](double v) { return v == 1.0; });
      detail += (detail.empty() ? "" : ", ") + moe::to_string(mode) + " L" + std::to_string(l.layer) + " " +
                fmt(l.mean_pairwise, 17);
    }
  }
  return {ok, detail};
}

// ---- 10 / 11 ------------------------------------------------------------

struct DeskSettings {
  std::size_t dense_steps = 1500;
  double dense_lr = 1e-3;
  std::size_t moe_steps = 2000;
  double moe_lr = 5e-4;
  std::size_t batch_tokens = 512;
  std::size_t seq = 128;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::uint64_t dense_seed = 1000;
  std::uint64_t probe_seed = 2000;
  std::size_t probe_tokens = 4096;
  std::size_t diversity_batches = 4;  // per domain
  std::size_t collect_iters = 10, collect_batch = 8;
};

struct VariantRun {
  double val_loss = 0.0;
  std::vector<double> layer_cosine;             // mean pairwise per layer
  std::map<std::string, double> domain_std;     // last layer
};

struct DeskResult {
  std::map<std::string, std::vector<VariantRun>> runs;  // variant -> per seed
  std::vector<fs::path> logs;
  double seconds = 0.0;
};

train::TrainConfig desk_train(const DeskSettings& s, std::size_t steps, double lr, std::uint64_t seed) {
  train::TrainConfig tc;
  tc.total_steps = steps;
  tc.max_lr = lr;
  tc.batch_tokens = s.batch_tokens;
  tc.seq = s.seq;
  tc.seed = seed;
  tc.eval_batches = 4;
  return tc;
}

DeskResult desk_run(const train::Corpus& corpus, const DeskSettings& s, const fs::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  fs::remove_all(dir);
  fs::create_directories(dir);
  DeskResult result;
  auto train_logged = [&](model::Checkpoint& ckpt, const train::TrainConfig& tc, const std::string& name) {
    const fs::path log_path = dir / (name + ".jsonl");
    std::ofstream log(log_path);
    const auto r = train::fit(ckpt, corpus, tc, &log);
    result.logs.push_back(log_path);
    std::cout << "  " << name << ": validation loss " << fmt(r.validation.loss) << std::endl;
    return r;
  };

  model::Checkpoint dense = model::init_dense(desk_model(), s.dense_seed);
  train_logged(dense, desk_train(s, s.dense_steps, s.dense_lr, s.dense_seed), "dense");
  dense.freeze();

  train::BatchIterator it(corpus, train::Split::train, s.collect_batch, s.seq, Rng::derive(s.dense_seed, 3));
  const auto stats = upcycle::collect_key_stats(
      dense, [&]() -> std::optional<model::TokenBatch> { return it.next(); }, s.collect_iters);

  const std::size_t domains = corpus.domains().size();
  const auto probe = train::validation_batches(corpus, 1, std::max<std::size_t>(1, s.probe_tokens / (domains * s.seq)),
                                               s.seq, s.probe_seed);
  const auto diversity_batches =
      train::validation_batches(corpus, s.diversity_batches, s.batch_tokens / s.seq, s.seq, s.probe_seed + 1);

  for (std::uint64_t seed : s.seeds) {
    for (auto mode : {moe::RouterMode::mixture, moe::RouterMode::vanilla}) {
      moe::MoEConfig mc;  // n = m = 8, top-2
      mc.router_mode = mode;
      std::optional<upcycle::RouterBank> bank;
      if (mode == moe::RouterMode::mixture) bank = upcycle::build_router_bank(stats, mc);
      model::Checkpoint ckpt = upcycle::upcycle(dense, mc, bank ? &*bank : nullptr, {seed, 0.02});
      const std::string variant = mode == moe::RouterMode::mixture ? "router" : "vanilla";
      const auto r = train_logged(ckpt, desk_train(s, s.moe_steps, s.moe_lr, seed), variant + "_seed" + std::to_string(seed));
      ckpt.freeze();
      VariantRun run;
      run.val_loss = r.validation.loss;
      for (const auto& l : analysis::expert_specialization(ckpt, probe).layers) run.layer_cosine.push_back(l.mean_pairwise);
      const std::size_t last = desk_model().n_layers - 1;
      for (const auto& row : analysis::routing_diversity(ckpt, diversity_batches, {last}).rows) {
        run.domain_std[row.domain] = row.spread.stddev;
      }
      result.runs[variant].push_back(run);
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

Outcome judge_desk(const DeskResult& r, const DeskSettings& s, const fs::path& report) {
  const auto& router = r.runs.at("router");
  const auto& vanilla = r.runs.at("vanilla");
  auto mean_of = [](const std::vector<VariantRun>& runs, const std::function<double(const VariantRun&)>& f) {
    double total = 0.0;
    for (const auto& run : runs) total += f(run);
    return total / static_cast<double>(runs.size());
  };
  const double val_r = mean_of(router, [](const VariantRun& v) { return v.val_loss; });
  const double val_v = mean_of(vanilla, [](const VariantRun& v) { return v.val_loss; });
  const bool loss_ok = val_r <= val_v;

  std::size_t layers_lower = 0;
  const std::size_t layers = router[0].layer_cosine.size();
  json rep = {{"seconds", r.seconds}, {"val_loss", {{"router", val_r}, {"vanilla", val_v}}}};
  std::string cos_detail;
  for (std::size_t l = 0; l < layers; ++l) {
    const double cr = mean_of(router, [l](const VariantRun& v) { return v.layer_cosine[l]; });
    const double cv = mean_of(vanilla, [l](const VariantRun& v) { return v.layer_cosine[l]; });
    layers_lower += cr < cv;
    rep["layer_cosine"].push_back({{"router", cr}, {"vanilla", cv}});
    cos_detail += " L" + std::to_string(l) + " " + fmt(cr, 4) + "/" + fmt(cv, 4);
  }
  const bool cos_ok = 2 * layers_lower >= layers;

  std::size_t domains_higher = 0, domains = 0;
  std::string std_detail;
  for (const auto& [domain, unused] : router[0].domain_std) {
    const double sr = mean_of(router, [&](const VariantRun& v) { return v.domain_std.at(domain); });
    const double sv = mean_of(vanilla, [&](const VariantRun& v) { return v.domain_std.at(domain); });
    domains_higher += sr > sv;
    ++domains;
    rep["domain_std"][domain] = {{"router", sr}, {"vanilla", sv}};
    std_detail += " " + domain + " " + fmt(sr, 3) + "/" + fmt(sv, 3);
  }
  const bool std_ok = domains_higher >= 3;
  for (const auto& [variant, runs] : r.runs) {
    for (std::size_t i = 0; i < runs.size(); ++i) {
      rep["per_seed"][variant].push_back(
          {{"seed", s.seeds[i]}, {"val_loss", runs[i].val_loss}, {"layer_cosine", runs[i].layer_cosine},
           {"domain_std", runs[i].domain_std}});
    }
  }
  std::ofstream(report) << rep.dump(2) << '\n';

  std::ostringstream d;
  d << "val loss router/vanilla " << fmt(val_r) << "/" << fmt(val_v) << (loss_ok ? " ok" : " NOT lower") << ";"
    << " expert cosine" << cos_detail << " (" << layers_lower << "/" << layers << " lower)" << (cos_ok ? " ok" : " FAIL")
    << "; gate std" << std_detail << " (" << domains_higher << "/" << domains << " higher)" << (std_ok ? " ok" : " FAIL")
    << "; " << fmt(r.seconds / 60.0, 3) << " min";
  return {loss_ok && cos_ok && std_ok, d.str()};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome replay(const DeskResult& first, const DeskResult& second) {
  if (first.logs.size() != second.logs.size()) return {false, "different number of logs"};
  std::size_t identical = 0;
  std::string mismatch;
  for (std::size_t i = 0; i < first.logs.size(); ++i) {
    const std::string a = read_file(first.logs[i]), b = read_file(second.logs[i]);
    if (!a.empty() && a == b) {
      ++identical;
    } else if (mismatch.empty()) {
      mismatch = ", first mismatch " + first.logs[i].filename().string();
    }
  }
  return {identical == first.logs.size(), std::to_string(identical) + "/" + std::to_string(first.logs.size()) +
                                              " metrics logs byte-identical" + mismatch};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string corpus_dir, work_dir = (fs::temp_directory_path() / "mrf_acceptance").string();
  std::vector<int> only;
  app.add_option("--corpus", corpus_dir, "multi-domain corpus root")->required();
  app.add_option("--work-dir", work_dir, "scratch directory for logs and reports");
  app.add_option("--only", only, "run only these criteria");
  CLI11_PARSE(app, argc, argv);

  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };
  const train::Corpus corpus = train::Corpus::load(corpus_dir, 0.1, &std::cerr);
  std::size_t corpus_bytes = 0;
  for (const auto& d : corpus.domains()) corpus_bytes += d.train.size() + d.valid.size();
  std::cout << "corpus: " << corpus.domains().size() << " domains, " << corpus_bytes << " tokens" << std::endl;

  int failed = 0;
  auto report = [&](int n, const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(n)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << name << " | " << o.detail
              << std::endl;
  };

  report(1, "init-equivalence", init_equivalence);
  report(2, "dimension table", dimension_table);
  report(3, "router parameter count", router_parameter_count);
  report(4, "summation-collapse identity", collapse_identity);
  report(5, "greedy-pairing oracle", greedy_oracle);
  report(6, "gradient checks", gradient_check);
  report(7, "loss anchors", loss_anchors);
  report(8, "lr schedule anchors", lr_anchors);
  report(9, "fresh-upcycle specialization", [&] { return fresh_specialization(corpus); });

  if (wanted(10) || wanted(11)) {
    const DeskSettings settings;
    std::optional<DeskResult> first;
    report(10, "directional desk run", [&] {
      if (corpus_bytes < 5'000'000) return Outcome{false, "corpus below 5 MB"};
      first = desk_run(corpus, settings, fs::path(work_dir) / "run_a");
      return judge_desk(*first, settings, fs::path(work_dir) / "desk_report.json");
    });
    report(11, "determinism", [&] {
      if (!first) first = desk_run(corpus, settings, fs::path(work_dir) / "run_a");
      const DeskResult second = desk_run(corpus, settings, fs::path(work_dir) / "run_b");
      return replay(*first, second);
    });
  }
  std::cout << (failed == 0 ? "all selected criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}

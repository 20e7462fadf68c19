#include "app.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "manifest.hpp"
#include "mrf/analysis/analysis.hpp"
#include "mrf/error.hpp"
#include "mrf/model/checkpoint.hpp"
#include "mrf/train/trainer.hpp"
#include "mrf/upcycle/upcycler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mrf::cli {

namespace {

// ---- option table -------------------------------------------------------

enum class Kind { integer, real, text, path, flag, reals, integers, texts };

struct Field {
  std::string name;  // config key; the flag is --name with '_' -> '-'
  Kind kind;
  json fallback;     // null means "required"
  std::string help;
  bool positional = false;
  bool input = false;  // content-hashed into the manifest
};

std::string flag_of(const std::string& name) {
  std::string f = name;
  std::replace(f.begin(), f.end(), '_', '-');
  return f;
}

const json kRequired = nullptr;

std::vector<Field> training_fields() {
  const train::TrainConfig d;
  return {
      {"corpus", Kind::path, kRequired, "corpus root: one subdirectory of .txt files per domain", false, true},
      {"out", Kind::path, kRequired, "output checkpoint directory"},
      {"log", Kind::path, "", "metrics log (JSON lines); default <out>/metrics.jsonl"},
      {"steps", Kind::integer, d.total_steps, "optimizer steps"},
      {"seed", Kind::integer, d.seed, "seed for batching and initialization"},
      {"max_lr", Kind::real, d.max_lr, "peak learning rate"},
      {"warmup_frac", Kind::real, d.warmup_frac, "fraction of steps spent in linear warmup"},
      {"decay_points", Kind::reals, d.decay_points, "fractions of steps where the rate is decayed (comma list)"},
      {"decay_factor", Kind::real, d.decay_factor, "multiplier applied at each decay point"},
      {"adam_beta1", Kind::real, d.adam_beta1, "AdamW first-moment decay"},
      {"adam_beta2", Kind::real, d.adam_beta2, "AdamW second-moment decay"},
      {"adam_eps", Kind::real, d.adam_eps, "AdamW epsilon"},
      {"clip_norm", Kind::real, d.clip_norm, "global gradient-norm clip"},
      {"weight_decay", Kind::real, d.weight_decay, "decoupled weight decay"},
      {"batch_tokens", Kind::integer, d.batch_tokens, "tokens per step"},
      {"seq", Kind::integer, d.seq, "sequence length of a training window"},
      {"eval_batches", Kind::integer, d.eval_batches, "validation batches per domain after training"},
      {"valid_frac", Kind::real, 0.1, "held-out tail of each domain used for validation"},
  };
}

struct Command {
  std::string name;
  std::string description;
  std::vector<Field> fields;
  std::function<void(const json& cfg, std::ostream& out)> body;
  // Directory the manifest goes to; empty means the command writes nothing.
  std::function<std::string(const json& cfg)> output_dir;
};

// ---- helpers ------------------------------------------------------------

json parse_value(const Field& f, const std::string& text) {
  auto split = [&](char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
      if (!item.empty()) parts.push_back(item);
    }
    return parts;
  };
  try {
    switch (f.kind) {
      case Kind::integer: {
        if (text.empty() || text[0] == '-') throw std::invalid_argument("negative");
        std::size_t used = 0;
        const auto v = std::stoull(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing");
        return v;
      }
      case Kind::real: {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("trailing");
        return v;
      }
      case Kind::text:
      case Kind::path:
        return text;
      case Kind::flag:
        return text == "true" || text == "1";
      case Kind::reals: {
        json arr = json::array();
        for (const auto& p : split(',')) arr.push_back(parse_value({f.name, Kind::real, 0, ""}, p));
        return arr;
      }
      case Kind::integers: {
        json arr = json::array();
        for (const auto& p : split(',')) arr.push_back(parse_value({f.name, Kind::integer, 0, ""}, p));
        return arr;
      }
      case Kind::texts:
        return split(',');
    }
  } catch (const std::logic_error&) {
  }
  throw ConfigError("invalid value '" + text + "' for --" + flag_of(f.name));
}

const char* type_name(Kind k) {
  switch (k) {
    case Kind::integer: return "UINT";
    case Kind::real: return "FLOAT";
    case Kind::text: return "TEXT";
    case Kind::path: return "PATH";
    case Kind::flag: return "";
    case Kind::reals: return "FLOAT,...";
    case Kind::integers: return "UINT,...";
    case Kind::texts: return "TEXT,...";
  }
  return "";
}

bool kind_matches(const Field& f, const json& v) {
  switch (f.kind) {
    case Kind::integer: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
    case Kind::real: return v.is_number();
    case Kind::text:
    case Kind::path: return v.is_string();
    case Kind::flag: return v.is_boolean();
    case Kind::reals:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); });
    case Kind::integers:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number_unsigned(); });
    case Kind::texts:
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_string(); });
  }
  return false;
}

json load_config_file(const std::string& path, const std::string& command) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("config '" + path + "': " + e.what());
  }
  if (!doc.is_object()) throw FormatError("config '" + path + "' must be a JSON object");
  // A run manifest replays its own resolved config.
  if (doc.contains("command") && doc.contains("config")) {
    if (doc["command"] != command) {
      throw ConfigError("manifest '" + path + "' records command '" + doc["command"].get<std::string>() + "', not '" +
                        command + "'");
    }
    return doc["config"];
  }
  return doc;
}

// defaults < MRF_SEED < --config file < explicit flags
json resolve(const Command& cmd, const std::map<std::string, std::vector<std::string>>& given,
             const std::string& config_path) {
  json cfg = json::object();
  for (const Field& f : cmd.fields) {
    if (!f.fallback.is_null()) cfg[f.name] = f.fallback;
  }
  if (const char* env = std::getenv("MRF_SEED"); env && cfg.contains("seed")) {
    cfg["seed"] = parse_value({"seed", Kind::integer, 0, ""}, env);
  }
  if (!config_path.empty()) {
    const json file = load_config_file(config_path, cmd.name);
    for (const auto& [key, value] : file.items()) {
      const auto it = std::find_if(cmd.fields.begin(), cmd.fields.end(), [&](const Field& f) { return f.name == key; });
      if (it == cmd.fields.end()) throw ConfigError("unknown field '" + key + "' in " + config_path);
      if (!kind_matches(*it, value)) throw ConfigError("field '" + key + "' in " + config_path + " has the wrong type");
      cfg[key] = value;
    }
  }
  for (const Field& f : cmd.fields) {
    const auto it = given.find(f.name);
    if (it == given.end()) continue;
    if (f.positional || f.kind == Kind::texts) {
      if (it->second.size() == 1 && !f.positional) {
        cfg[f.name] = parse_value(f, it->second[0]);
      } else {
        cfg[f.name] = it->second;
      }
    } else {
      cfg[f.name] = parse_value(f, it->second.back());
    }
  }
  for (const Field& f : cmd.fields) {
    if (!cfg.contains(f.name)) {
      throw ConfigError("missing required " + (f.positional ? f.name : "--" + flag_of(f.name)));
    }
  }
  return cfg;
}

std::string str(const json& cfg, const char* key) { return cfg.at(key).get<std::string>(); }
std::size_t num(const json& cfg, const char* key) { return cfg.at(key).get<std::size_t>(); }
double real(const json& cfg, const char* key) { return cfg.at(key).get<double>(); }

train::TrainConfig train_config(const json& cfg) {
  train::TrainConfig t;
  t.total_steps = num(cfg, "steps");
  t.seed = cfg.at("seed").get<std::uint64_t>();
  t.max_lr = real(cfg, "max_lr");
  t.warmup_frac = real(cfg, "warmup_frac");
  t.decay_points = cfg.at("decay_points").get<std::vector<double>>();
  t.decay_factor = real(cfg, "decay_factor");
  t.adam_beta1 = real(cfg, "adam_beta1");
  t.adam_beta2 = real(cfg, "adam_beta2");
  t.adam_eps = real(cfg, "adam_eps");
  t.clip_norm = real(cfg, "clip_norm");
  t.weight_decay = real(cfg, "weight_decay");
  t.batch_tokens = num(cfg, "batch_tokens");
  t.seq = num(cfg, "seq");
  t.eval_batches = num(cfg, "eval_batches");
  t.validate();
  return t;
}

train::Corpus load_corpus(const json& cfg, std::ostream& out, double valid_frac = 0.1) {
  return train::Corpus::load(str(cfg, "corpus"), valid_frac, &out);
}

void run_training(model::Checkpoint& ckpt, const json& cfg, std::ostream& out) {
  const train::TrainConfig tc = train_config(cfg);
  const train::Corpus corpus = load_corpus(cfg, out, real(cfg, "valid_frac"));
  const fs::path dir = str(cfg, "out");
  const fs::path log_path = str(cfg, "log").empty() ? dir / "metrics.jsonl" : fs::path(str(cfg, "log"));
  if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
  std::ofstream log(log_path);
  if (!log) throw DataError("cannot write metrics log '" + log_path.string() + "'");
  const train::TrainResult result = train::fit(ckpt, corpus, tc, &log);
  ckpt.freeze();
  model::save_checkpoint(ckpt, dir);
  out << "trained " << tc.total_steps << " steps; validation loss " << result.validation.loss << '\n';
}

// ---- commands -----------------------------------------------------------

Command train_dense_command() {
  const model::ModelConfig m;
  std::vector<Field> fields = training_fields();
  fields.insert(fields.end(), {
                                  {"d_model", Kind::integer, m.d_model, "model width"},
                                  {"n_heads", Kind::integer, m.n_heads, "attention heads (power of two)"},
                                  {"head_dim", Kind::integer, m.head_dim, "per-head width; d_model = n_heads * head_dim"},
                                  {"n_layers", Kind::integer, m.n_layers, "transformer blocks"},
                                  {"ffn_hidden", Kind::integer, m.ffn_hidden, "FFN hidden width"},
                                  {"seq_len", Kind::integer, m.seq_len, "maximum context (position table size)"},
                              });
  return {"train-dense", "Initialize and pretrain a dense byte-level transformer", fields,
          [](const json& cfg, std::ostream& out) {
            model::ModelConfig mc;
            mc.d_model = num(cfg, "d_model");
            mc.n_heads = num(cfg, "n_heads");
            mc.head_dim = num(cfg, "head_dim");
            mc.n_layers = num(cfg, "n_layers");
            mc.ffn_hidden = num(cfg, "ffn_hidden");
            mc.seq_len = num(cfg, "seq_len");
            mc.validate();
            model::Checkpoint ckpt = model::init_dense(mc, cfg.at("seed").get<std::uint64_t>());
            run_training(ckpt, cfg, out);
          },
          [](const json& cfg) { return str(cfg, "out"); }};
}

Command train_moe_command() {
  std::vector<Field> fields = training_fields();
  fields.insert(fields.begin(), {"ckpt", Kind::path, kRequired, "upcycled MoE checkpoint", false, true});
  return {"train-moe", "Train an upcycled MoE checkpoint", fields,
          [](const json& cfg, std::ostream& out) {
            model::Checkpoint ckpt = model::load_checkpoint(str(cfg, "ckpt")).clone();
            if (!ckpt.is_moe()) throw ConfigError("train-moe needs an MoE checkpoint; use upcycle first");
            run_training(ckpt, cfg, out);
          },
          [](const json& cfg) { return str(cfg, "out"); }};
}

Command collect_keys_command() {
  return {"collect-keys",
          "Average per-head key vectors of a frozen dense model over the corpus",
          {
              {"ckpt", Kind::path, kRequired, "dense checkpoint", false, true},
              {"corpus", Kind::path, kRequired, "corpus root", false, true},
              {"iters", Kind::integer, 10, "number of batches"},
              {"batch", Kind::integer, 8, "sequences per batch"},
              {"seq", Kind::integer, 128, "tokens per sequence"},
              {"seed", Kind::integer, 0, "seed for batch sampling"},
              {"out", Kind::path, kRequired, "output directory for the head statistics"},
          },
          [](const json& cfg, std::ostream& out) {
            const model::Checkpoint dense = model::load_checkpoint(str(cfg, "ckpt"));
            const train::Corpus corpus = load_corpus(cfg, out);
            train::BatchIterator it(corpus, train::Split::train, num(cfg, "batch"), num(cfg, "seq"),
                                    Rng::derive(cfg.at("seed").get<std::uint64_t>(), 3));
            const auto stats = upcycle::collect_key_stats(
                dense, [&]() -> std::optional<model::TokenBatch> { return it.next(); }, num(cfg, "iters"));
            upcycle::save_head_stats(stats, str(cfg, "out"));
            out << "collected key statistics over " << stats.tokens << " tokens\n";
          },
          [](const json& cfg) { return str(cfg, "out"); }};
}

Command upcycle_command() {
  const moe::MoEConfig d;
  return {"upcycle",
          "Convert a dense checkpoint into an MoE checkpoint",
          {
              {"ckpt", Kind::path, kRequired, "dense checkpoint", false, true},
              {"keys", Kind::path, "", "head statistics from collect-keys (required for --router-mode mixture)", false,
               true},
              {"experts", Kind::integer, d.n_experts, "number of experts"},
              {"routers", Kind::integer, d.n_routers, "number of attention routers (mixture mode)"},
              {"topk", Kind::integer, d.top_k, "experts selected per token"},
              {"router_mode", Kind::text, moe::to_string(d.router_mode), "mixture | vanilla | switch | mlp"},
              {"mixture", Kind::text, moe::to_string(d.mixture), "router score combination: summation | max_pooling"},
              {"split_heads", Kind::flag, false, "split every head in two (routers = 2 * heads)"},
              {"freeze_keys", Kind::flag, false, "keep expert keys fixed during MoE training"},
              {"aux_coeff", Kind::real, d.aux_coeff, "load-balancing loss coefficient"},
              {"z_coeff", Kind::real, d.z_coeff, "router z-loss coefficient"},
              {"router_init_std", Kind::real, 0.02, "std of baseline router weights (0 gives zeros)"},
              {"seed", Kind::integer, 0, "seed for baseline router initialization"},
              {"out", Kind::path, kRequired, "output MoE checkpoint directory"},
          },
          [](const json& cfg, std::ostream& out) {
            const model::Checkpoint dense = model::load_checkpoint(str(cfg, "ckpt"));
            moe::MoEConfig mc;
            mc.n_experts = num(cfg, "experts");
            mc.n_routers = num(cfg, "routers");
            mc.top_k = num(cfg, "topk");
            mc.router_mode = moe::parse_router_mode(str(cfg, "router_mode"));
            mc.mixture = moe::parse_mixture_mode(str(cfg, "mixture"));
            mc.split_heads = cfg.at("split_heads").get<bool>();
            mc.train_keys = !cfg.at("freeze_keys").get<bool>();
            mc.aux_coeff = real(cfg, "aux_coeff");
            mc.z_coeff = real(cfg, "z_coeff");
            std::optional<upcycle::RouterBank> bank;
            if (mc.router_mode == moe::RouterMode::mixture) {
              if (str(cfg, "keys").empty()) throw ConfigError("--router-mode mixture requires --keys");
              bank = upcycle::build_router_bank(upcycle::load_head_stats(str(cfg, "keys")), mc);
            }
            model::Checkpoint moe_ckpt = upcycle::upcycle(
                dense, mc, bank ? &*bank : nullptr, {cfg.at("seed").get<std::uint64_t>(), real(cfg, "router_init_std")});
            moe_ckpt.freeze();
            model::save_checkpoint(moe_ckpt, str(cfg, "out"));
            out << "upcycled to " << mc.n_experts << " experts (" << moe::to_string(mc.router_mode) << " router), "
                << moe_ckpt.parameter_count() << " parameters\n";
          },
          [](const json& cfg) { return str(cfg, "out"); }};
}

Command analyze_command() {
  return {"analyze",
          "Routing diversity and expert specialization reports for an MoE checkpoint",
          {
              {"ckpt", Kind::path, kRequired, "MoE checkpoint", false, true},
              {"corpus", Kind::path, kRequired, "corpus root (held-out split is used)", false, true},
              {"out_dir", Kind::path, kRequired, "directory for CSV and JSON reports"},
              {"probe_seed", Kind::integer, 0, "seed for probe and evaluation windows"},
              {"probe_tokens", Kind::integer, 4096, "specialization probe size, spread evenly over domains"},
              {"seq", Kind::integer, 128, "tokens per sequence"},
              {"batch", Kind::integer, 8, "sequences per diversity batch"},
              {"eval_batches", Kind::integer, 4, "diversity batches per domain"},
              {"layers", Kind::integers, json::array(), "layers to report diversity for (comma list; default all)"},
              {"trace", Kind::flag, false, "also write routing_trace.jsonl for the diversity batches"},
              {"valid_frac", Kind::real, 0.1, "held-out tail of each domain"},
          },
          [](const json& cfg, std::ostream& out) {
            const model::Checkpoint ckpt = model::load_checkpoint(str(cfg, "ckpt"));
            if (!ckpt.is_moe()) throw ConfigError("analyze needs an MoE checkpoint");
            const train::Corpus corpus = load_corpus(cfg, out, real(cfg, "valid_frac"));
            const std::size_t seq = num(cfg, "seq"), seed = num(cfg, "probe_seed");
            const std::size_t domains = corpus.domains().size();
            const std::size_t probe_rows = std::max<std::size_t>(1, num(cfg, "probe_tokens") / (domains * seq));
            const auto probe = train::validation_batches(corpus, 1, probe_rows, seq, seed);
            const auto batches =
                train::validation_batches(corpus, num(cfg, "eval_batches"), num(cfg, "batch"), seq, seed + 1);

            const analysis::DiversityReport div =
                analysis::routing_diversity(ckpt, batches, cfg.at("layers").get<std::vector<std::size_t>>());
            const analysis::SpecializationReport spec = analysis::expert_specialization(ckpt, probe);
            const fs::path dir = str(cfg, "out_dir");
            fs::create_directories(dir);
            std::ofstream(dir / "diversity.csv") << [&] {
              std::ostringstream s;
              analysis::write_diversity_csv(s, div);
              return s.str();
            }();
            std::ofstream(dir / "specialization.csv") << [&] {
              std::ostringstream s;
              analysis::write_specialization_csv(s, spec);
              return s.str();
            }();
            if (cfg.at("trace").get<bool>()) {
              std::ofstream trace(dir / "routing_trace.jsonl");
              for (const auto& b : batches) analysis::write_routing_trace(trace, model::forward(ckpt, b), b);
            }
            json summary = {{"gate_semantics", "softmax over all experts, before top-k selection"},
                            {"router_mode", moe::to_string(ckpt.moe().router_mode)},
                            {"probe_tokens", probe_rows * seq * domains},
                            {"specialization", json::array()},
                            {"diversity", json::array()}};
            for (const auto& l : spec.layers) {
              summary["specialization"].push_back({{"layer", l.layer}, {"mean_pairwise_cosine", l.mean_pairwise}});
              out << "layer " << l.layer << " mean pairwise expert cosine " << l.mean_pairwise << '\n';
            }
            for (const auto& r : div.rows) {
              summary["diversity"].push_back({{"layer", r.layer},
                                              {"domain", r.domain},
                                              {"tokens", r.tokens},
                                              {"mean_gate", r.mean_gate},
                                              {"std", r.spread.stddev},
                                              {"entropy_bits", r.spread.entropy_bits}});
            }
            std::ofstream(dir / "analysis.json") << summary.dump(2) << '\n';
          },
          [](const json& cfg) { return str(cfg, "out_dir"); }};
}

Command compare_command() {
  return {"compare",
          "Align metrics logs on their step grid and summarize final losses",
          {
              {"logs", Kind::texts, kRequired, "metrics logs (JSON lines) to compare", true},
              {"names", Kind::texts, json::array(), "run names, one per log (comma list; default file stems)"},
              {"variants", Kind::texts, json::array(),
               "variant label per log for the mean/std summary (comma list; default the run names)"},
              {"out_dir", Kind::path, "", "write comparison.csv, curves.csv and summary.json here"},
          },
          [](const json& cfg, std::ostream& out) {
            const auto logs = cfg.at("logs").get<std::vector<std::string>>();
            auto names = cfg.at("names").get<std::vector<std::string>>();
            auto variants = cfg.at("variants").get<std::vector<std::string>>();
            if (!names.empty() && names.size() != logs.size()) throw ConfigError("--names needs one name per log");
            if (!variants.empty() && variants.size() != logs.size()) {
              throw ConfigError("--variants needs one label per log");
            }
            std::vector<analysis::RunLog> runs;
            for (std::size_t i = 0; i < logs.size(); ++i) {
              runs.push_back(analysis::read_metrics_log(logs[i], names.empty() ? "" : names[i]));
            }
            if (variants.empty()) {
              for (const auto& r : runs) variants.push_back(r.name);
            }
            const analysis::Comparison cmp = analysis::compare_runs(runs);

            std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
            for (std::size_t i = 0; i < runs.size(); ++i) {
              groups[variants[i]].first.push_back(runs[i].steps.back().lm_loss);
              if (runs[i].val_loss) groups[variants[i]].second.push_back(*runs[i].val_loss);
            }
            json summary = {{"steps", cmp.steps.size()}, {"final_delta", json::object()}, {"variants", json::object()}};
            for (std::size_t i = 0; i < runs.size(); ++i) summary["final_delta"][cmp.names[i]] = cmp.final_delta[i];
            for (const auto& [variant, losses] : groups) {
              const auto lm = analysis::summarize(losses.first);
              json v = {{"runs", losses.first.size()}, {"final_lm_loss_mean", lm.mean}, {"final_lm_loss_std", lm.stddev}};
              out << variant << ": final lm_loss " << lm.mean << " +/- " << lm.stddev;
              if (losses.second.size() == losses.first.size()) {
                const auto val = analysis::summarize(losses.second);
                v["val_loss_mean"] = val.mean;
                v["val_loss_std"] = val.stddev;
                out << ", val_loss " << val.mean << " +/- " << val.stddev;
              }
              out << " (" << losses.first.size() << " runs)\n";
              summary["variants"][variant] = v;
            }
            if (const std::string dir = str(cfg, "out_dir"); !dir.empty()) {
              std::ofstream c(fs::path(dir) / "comparison.csv");
              analysis::write_comparison_csv(c, cmp);
              std::ofstream k(fs::path(dir) / "curves.csv");
              analysis::write_curves_csv(k, runs);
              std::ofstream(fs::path(dir) / "summary.json") << summary.dump(2) << '\n';
            }
          },
          [](const json& cfg) { return str(cfg, "out_dir"); }};
}

std::vector<Command> commands() {
  return {train_dense_command(), collect_keys_command(), upcycle_command(),
          train_moe_command(),   analyze_command(),      compare_command()};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Router upcycling: dense pretraining, attention-initialized MoE routers, training and analysis", "mrf"};
  app.require_subcommand(1);
  app.fallthrough(false);

  const std::vector<Command> cmds = commands();
  std::map<std::string, std::map<std::string, std::vector<std::string>>> given;
  std::map<std::string, std::string> config_paths;
  std::vector<CLI::App*> subs;
  for (const Command& cmd : cmds) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.description);
    subs.push_back(sub);
    sub->add_option("--config", config_paths[cmd.name],
                    "JSON file with any of these fields (or a run.json to replay); flags override it");
    for (const Field& f : cmd.fields) {
      std::string help = f.help;
      if (f.fallback.is_null()) {
        help += " [required]";
      } else if (!(f.fallback.is_string() && f.fallback.get<std::string>().empty()) &&
                 !(f.fallback.is_array() && f.fallback.empty())) {
        help += " [default: " + (f.fallback.is_string() ? f.fallback.get<std::string>() : f.fallback.dump()) + "]";
      }
      auto& slot = given[cmd.name][f.name];
      const std::string name = f.positional ? f.name : "--" + flag_of(f.name);
      if (f.kind == Kind::flag) {
        sub->add_flag_callback(
            name, [&slot] { slot = {"true"}; }, help);
      } else {
        CLI::Option* opt = sub->add_option(name, slot, help);
        opt->type_name(type_name(f.kind));
        if (f.positional) {
          opt->expected(1, -1);
        } else {
          opt->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
        }
      }
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << '\n';
    CLI::App* active = &app;
    for (CLI::App* s : subs) {
      if (s->parsed()) active = s;
    }
    err << active->help();
    return 2;
  }

  for (std::size_t i = 0; i < cmds.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    const Command& cmd = cmds[i];
    try {
      auto& flags = given[cmd.name];
      for (auto it = flags.begin(); it != flags.end();) it = it->second.empty() ? flags.erase(it) : std::next(it);
      const json cfg = resolve(cmd, flags, config_paths[cmd.name]);

      RunManifest manifest;
      manifest.command = cmd.name;
      manifest.argv = args;
      manifest.config = cfg;
      manifest.seed = cfg.contains("seed") ? cfg["seed"].get<std::uint64_t>()
                                           : (cfg.contains("probe_seed") ? cfg["probe_seed"].get<std::uint64_t>() : 0);
      manifest.config_hash = config_hash(cfg);
      for (const Field& f : cmd.fields) {
        if (f.input && cfg[f.name].is_string() && !cfg[f.name].get<std::string>().empty()) {
          manifest.inputs[f.name] = git_path_id(cfg[f.name].get<std::string>());
        }
      }
      const std::string dir = cmd.output_dir(cfg);
      if (cmd.name == "compare") {
        for (std::size_t k = 0; k < cfg["logs"].size(); ++k) {
          manifest.inputs["logs[" + std::to_string(k) + "]"] = git_path_id(cfg["logs"][k].get<std::string>());
        }
      }
      manifest.started_at = utc_timestamp();
      if (!dir.empty()) write_manifest(manifest, dir);

      cmd.body(cfg, out);

      if (!dir.empty()) {
        manifest.finished_at = utc_timestamp();
        manifest.status = "ok";
        write_manifest(manifest, dir);
      }
      return 0;
    } catch (const Error& e) {
      err << "error[" << e.category() << "]: " << e.what() << '\n';
    } catch (const json::exception& e) {
      err << "error[format]: " << e.what() << '\n';
    } catch (const fs::filesystem_error& e) {
      err << "error[io]: " << e.what() << '\n';
    } catch (const std::exception& e) {
      err << "error[runtime]: " << e.what() << '\n';
    }
    return 1;
  }
  return 2;
}

}  // namespace mrf::cli

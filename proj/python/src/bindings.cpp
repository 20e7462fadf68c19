#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "app.hpp"
#include "mrf/error.hpp"
#include "mrf/model/checkpoint.hpp"
#include "mrf/moe/routing.hpp"
#include "mrf/train/config.hpp"
#include "mrf/upcycle/upcycler.hpp"

namespace py = pybind11;
using namespace mrf;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor::from(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Attention-initialized MoE routers: configs, checkpoints, routing and the mrf command line.";

  auto base = py::register_exception<Error>(m, "MrfError", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());

  py::class_<model::ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("d_model", &model::ModelConfig::d_model)
      .def_readwrite("n_heads", &model::ModelConfig::n_heads)
      .def_readwrite("head_dim", &model::ModelConfig::head_dim)
      .def_readwrite("n_layers", &model::ModelConfig::n_layers)
      .def_readwrite("ffn_hidden", &model::ModelConfig::ffn_hidden)
      .def_readwrite("vocab_size", &model::ModelConfig::vocab_size)
      .def_readwrite("seq_len", &model::ModelConfig::seq_len)
      .def("validate", &model::ModelConfig::validate)
      .def(py::self == py::self);

  py::enum_<moe::RouterMode>(m, "RouterMode")
      .value("mixture", moe::RouterMode::mixture)
      .value("vanilla", moe::RouterMode::vanilla)
      .value("switch_top1", moe::RouterMode::switch_top1)
      .value("mlp", moe::RouterMode::mlp);
  py::enum_<moe::MixtureMode>(m, "MixtureMode")
      .value("summation", moe::MixtureMode::summation)
      .value("max_pooling", moe::MixtureMode::max_pooling);

  py::class_<moe::MoEConfig>(m, "MoEConfig")
      .def(py::init<>())
      .def_readwrite("n_experts", &moe::MoEConfig::n_experts)
      .def_readwrite("top_k", &moe::MoEConfig::top_k)
      .def_readwrite("n_routers", &moe::MoEConfig::n_routers)
      .def_readonly("router_dim", &moe::MoEConfig::router_dim)
      .def_readonly("keys_per_expert", &moe::MoEConfig::keys_per_expert)
      .def_readwrite("mixture", &moe::MoEConfig::mixture)
      .def_readwrite("router_mode", &moe::MoEConfig::router_mode)
      .def_readwrite("aux_coeff", &moe::MoEConfig::aux_coeff)
      .def_readwrite("z_coeff", &moe::MoEConfig::z_coeff)
      .def_readwrite("split_heads", &moe::MoEConfig::split_heads)
      .def_readwrite("train_keys", &moe::MoEConfig::train_keys)
      .def("resolve", &moe::MoEConfig::resolve, py::arg("dense"),
           "Check the router layout against a dense architecture and fill router_dim.")
      .def(py::self == py::self);

  m.def("router_param_count", &moe::router_param_count, py::arg("dense"), py::arg("moe"));
  m.def("concat_rounds", &moe::concat_rounds, py::arg("dense"), py::arg("moe"));

  py::class_<train::TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("max_lr", &train::TrainConfig::max_lr)
      .def_readwrite("warmup_frac", &train::TrainConfig::warmup_frac)
      .def_readwrite("decay_points", &train::TrainConfig::decay_points)
      .def_readwrite("decay_factor", &train::TrainConfig::decay_factor)
      .def_readwrite("total_steps", &train::TrainConfig::total_steps)
      .def_readwrite("batch_tokens", &train::TrainConfig::batch_tokens)
      .def_readwrite("seq", &train::TrainConfig::seq)
      .def_readwrite("seed", &train::TrainConfig::seed)
      .def("validate", &train::TrainConfig::validate);
  m.def("lr_at", &train::lr_at, py::arg("step"), py::arg("config"));

  m.def(
      "greedy_pair",
      [](const std::vector<std::vector<double>>& items) {
        std::vector<std::tuple<std::size_t, std::size_t, double>> out;
        for (const auto& p : upcycle::greedy_pair(items)) out.emplace_back(p.first, p.second, p.similarity);
        return out;
      },
      py::arg("items"), "Greedy highest-cosine pairing; returns (i, j, cosine) in selection order.");

  m.def(
      "route",
      [](const Array& scores, std::size_t k, double aux_coeff, double z_coeff) {
        const moe::RoutingTrace t = moe::route(to_tensor(scores), k);
        py::dict d;
        d["gates"] = to_array(t.gates);
        d["selected"] = py::array_t<std::size_t>({t.tokens(), k}, t.selected.data());
        d["dispatch_fraction"] = t.dispatch_fraction;
        d["mean_gate"] = t.mean_gate;
        d["aux_loss"] = moe::aux_loss(t, aux_coeff).item();
        d["z_loss"] = moe::z_loss(t, z_coeff).item();
        return d;
      },
      py::arg("scores"), py::arg("k"), py::arg("aux_coeff") = 0.02, py::arg("z_coeff") = 0.001,
      "Softmax over [tokens, experts] scores, top-k selection and the balancing losses.");

  py::class_<model::Checkpoint>(m, "Checkpoint")
      .def_property_readonly("config", &model::Checkpoint::config)
      .def_property_readonly("moe_config", &model::Checkpoint::moe_config)
      .def_property_readonly("is_moe", &model::Checkpoint::is_moe)
      .def_property_readonly("names", &model::Checkpoint::names)
      .def_property_readonly("parameter_count", &model::Checkpoint::parameter_count)
      .def("__contains__", &model::Checkpoint::contains)
      .def("__getitem__", [](const model::Checkpoint& c, const std::string& name) { return to_array(c.tensor(name)); })
      .def("save", [](const model::Checkpoint& c, const std::filesystem::path& dir) { model::save_checkpoint(c, dir); });
  m.def("init_dense", &model::init_dense, py::arg("config"), py::arg("seed"));
  m.def("load_checkpoint", &model::load_checkpoint, py::arg("dir"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run one mrf subcommand in-process; returns (exit_code, stdout, stderr).");
}

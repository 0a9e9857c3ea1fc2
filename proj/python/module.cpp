#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hamlearn/experiment.hpp"
#include "hamlearn/reversible.hpp"

namespace py = pybind11;
using namespace hl;

namespace {

Tensor tensor_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> arr) {
  std::vector<std::size_t> shape(arr.ndim());
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[i] = static_cast<std::size_t>(arr.shape(i));
  std::vector<double> data(arr.data(), arr.data() + arr.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> arr(shape);
  std::copy(t.data().begin(), t.data().end(), arr.mutable_data());
  return arr;
}

std::vector<Tensor> tensors_from_list(const std::vector<py::array_t<double>>& arrays) {
  std::vector<Tensor> out;
  out.reserve(arrays.size());
  for (const auto& a : arrays) out.push_back(tensor_from_array(a));
  return out;
}

Sequence sequence_from_python(const std::vector<py::array_t<double>>& tokens,
                              const std::vector<py::object>& targets) {
  Sequence seq;
  seq.tokens = tensors_from_list(tokens);
  if (targets.empty()) {
    seq.targets.assign(seq.tokens.size(), std::nullopt);
  } else {
    if (targets.size() != tokens.size())
      throw Error("sequence: targets length must match tokens");
    for (const py::object& t : targets)
      seq.targets.push_back(t.is_none() ? std::optional<Tensor>()
                                        : tensor_from_array(py::cast<py::array_t<double>>(t)));
  }
  return seq;
}

NetSpec rnn_spec(std::size_t input_dim, std::size_t hidden) {
  NetSpec spec;
  spec.input_dim = input_dim;
  spec.state_layers = {RecurrentLayer{input_dim, hidden, Activation::tanh}};
  spec.state_seed = ChainSeed::input_only;
  spec.residual_mode = ResidualMode::instantaneous;
  spec.output_seed = ChainSeed::state_only;
  spec.validate();
  return spec;
}

}  // namespace

PYBIND11_MODULE(hamlearn, m) {
  m.doc() = "Forward-time optimal-control learning with gradient-descent parity oracles";
  m.attr("__version__") = "0.1.0";

  py::register_exception<Error>(m, "HamlearnError");

  m.def(
      "sgd_momentum_step",
      [](py::array_t<double> theta, py::array_t<double> grad, py::object buffer, double gamma,
         double mu, double rho, bool dampened_first) {
        SGDConfig cfg{gamma, mu, rho,
                      dampened_first ? SGDConfig::FirstStep::dampened
                                     : SGDConfig::FirstStep::clone_gradient};
        std::optional<Tensor> buf;
        if (!buffer.is_none()) buf = tensor_from_array(py::cast<py::array_t<double>>(buffer));
        auto [theta_next, buf_next] =
            sgd_momentum_step(tensor_from_array(theta), tensor_from_array(grad), buf, cfg);
        return py::make_tuple(array_from_tensor(theta_next), array_from_tensor(buf_next));
      },
      py::arg("theta"), py::arg("grad"), py::arg("buffer") = py::none(), py::arg("gamma") = 0.01,
      py::arg("mu") = 0.0, py::arg("rho") = 0.0, py::arg("dampened_first") = false,
      "One reference momentum-SGD step; returns (theta_next, buffer_next).");

  m.def(
      "map_params",
      [](double gamma, double mu, double rho, double tau) {
        MappedParams p = map_params(SGDConfig{gamma, mu, rho}, tau);
        py::dict d;
        d["beta"] = p.beta;
        d["eta"] = p.eta;
        d["phi"] = p.phi_const;
        d["tau"] = p.tau;
        return d;
      },
      py::arg("gamma"), py::arg("mu"), py::arg("rho"), py::arg("tau"),
      "Optimizer parameters -> learner parameters (beta, eta, phi) at step tau.");

  m.def(
      "unmap_params",
      [](double beta, double eta, double phi, double tau) {
        SGDConfig s = unmap_params(MappedParams{beta, eta, phi, tau});
        py::dict d;
        d["gamma"] = s.gamma;
        d["mu"] = s.mu;
        d["rho"] = s.rho;
        return d;
      },
      py::arg("beta"), py::arg("eta"), py::arg("phi"), py::arg("tau"));

  m.def("psi_map", &psi_map, py::arg("t"), py::arg("t_last"), py::arg("tau"),
        "Replay-phase time reflection t -> 2 t_last - 2 tau - t.");

  m.def(
      "reverse_replay",
      [](const std::vector<py::array_t<double>>& tokens, double spacing) {
        Sequence seq;
        seq.tokens = tensors_from_list(tokens);
        StreamSource s = StreamSource::reverse_replay(seq, spacing);
        py::list items;
        for (std::size_t i = 0; i < s.size(); ++i) {
          const StreamItem& item = s.at(i);
          items.append(py::make_tuple(array_from_tensor(item.u), item.timestamp, item.delta));
        }
        return items;
      },
      py::arg("tokens"), py::arg("spacing") = 1.0,
      "Forward-then-reverse stream as (token, timestamp, is_last) tuples.");

  m.def(
      "init_rnn",
      [](std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
        NetSpec spec = rnn_spec(input_dim, hidden);
        return array_from_tensor(spec.init_state(seed).theta_h);
      },
      py::arg("input_dim"), py::arg("hidden"), py::arg("seed") = 0,
      "Fresh tanh-cell weights as one flat vector.");

  m.def(
      "bptt_gradients",
      [](const std::vector<py::array_t<double>>& tokens, const std::vector<py::object>& targets,
         py::array_t<double> init_h, py::array_t<double> theta, std::size_t hidden) {
        Sequence seq = sequence_from_python(tokens, targets);
        NetSpec spec = rnn_spec(seq.tokens[0].size(), hidden);
        BpttResult r = bptt_gradients(seq.tokens, seq.targets, tensor_from_array(init_h),
                                      tensor_from_array(theta), spec,
                                      LossSpec{LossSpec::Kind::mse});
        return py::make_tuple(array_from_tensor(r.grad_theta_h), r.total_loss);
      },
      py::arg("tokens"), py::arg("targets"), py::arg("init_h"), py::arg("theta"),
      py::arg("hidden"),
      "Reference backprop-through-time gradient of the summed losses for a tanh cell.");

  m.def(
      "hl_bptt_replay",
      [](const std::vector<py::array_t<double>>& tokens, const std::vector<py::object>& targets,
         py::array_t<double> theta, std::size_t hidden, double tau, std::size_t window) {
        Sequence seq = sequence_from_python(tokens, targets);
        NetSpec spec = rnn_spec(seq.tokens[0].size(), hidden);
        ModelState state;
        state.h = Tensor::zeros({hidden});
        state.theta_h = tensor_from_array(theta);
        state.theta_y = Tensor();
        Costate costate = Costate::zeros_like(state);
        HLConfig cfg;
        cfg.tau = tau;
        cfg.eta = 0.0;
        cfg.phi = PhiSchedule::reciprocal_tau();
        cfg.beta = HLConfig::uniform_beta(0.0, state.theta_h.size());
        cfg.ordering = Ordering::sequential;
        ReplayOptions opts;
        opts.window = window;
        opts.apply_theta_update = false;
        ReplayResult r = hl_bptt_replay(seq, spec, cfg, LossSpec{LossSpec::Kind::mse}, state,
                                        costate, opts);
        return py::make_tuple(array_from_tensor(r.omega_h), r.grad_oracle_diff, r.total_loss);
      },
      py::arg("tokens"), py::arg("targets"), py::arg("theta"), py::arg("hidden"),
      py::arg("tau") = 1.0, py::arg("window") = 0,
      "Forward-only replay gradient; returns (omega, relative gap vs BPTT, total loss).");

  m.def(
      "midpoint_roundtrip_error",
      [](std::size_t depth, std::size_t hidden, double tau, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        NetSpec spec;
        spec.input_dim = 1;
        spec.state_layers = {DenseLayer{1 + hidden, hidden, Activation::tanh}};  // reads [u, h]
        spec.state_seed = ChainSeed::input_and_state;
        spec.output_seed = ChainSeed::state_only;
        spec.validate();
        Tensor theta = Tensor::uniform({spec.theta_h_size()}, -0.6, 0.6, rng);
        Tensor u = Tensor::uniform({1}, -1, 1, rng);
        Tensor h0 = Tensor::uniform({hidden}, -0.5, 0.5, rng);
        std::vector<Tensor> trail{h0};
        MidpointChain chain = midpoint_init(h0, u, theta, spec, tau);
        trail.push_back(chain.h_curr);
        for (std::size_t k = 1; k < depth; ++k) {
          midpoint_forward(chain, u, theta, spec);
          trail.push_back(chain.h_curr);
        }
        Tensor hi = chain.h_curr, mid = chain.h_prev;
        double worst = 0.0;
        for (std::size_t k = depth; k-- > 1;) {
          Tensor lo = midpoint_reverse_step(hi, mid, u, theta, spec, tau);
          worst = std::max(worst, max_abs_diff(lo, trail[k - 1]));
          hi = mid;
          mid = lo;
        }
        return worst;
      },
      py::arg("depth") = 100, py::arg("hidden") = 4, py::arg("tau") = 0.5, py::arg("seed") = 0,
      "Worst reconstruction error of a reversed midpoint chain.");

  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        ExperimentConfig cfg =
            ExperimentConfig::from_json(nlohmann::ordered_json::parse(config_json));
        ExperimentSummary s = run_experiment(cfg);
        return py::module_::import("json").attr("loads")(s.to_json().dump());
      },
      py::arg("config_json"),
      "Run a paired learner-vs-oracle experiment from a JSON config string.");

  m.def(
      "run_experiment_file",
      [](const std::string& path) {
        ExperimentSummary s = run_experiment(ExperimentConfig::load(path));
        return py::module_::import("json").attr("loads")(s.to_json().dump());
      },
      py::arg("path"));

  m.def("compare_curves",
        [](const std::string& a, const std::string& b, double tol) {
          CurveReport r = compare_curves(a, b, tol);
          py::dict d;
          d["rows"] = r.rows;
          d["max_gap"] = r.max_gap;
          d["pass"] = r.pass;
          d["first_violation"] = r.first_violation;
          return d;
        },
        py::arg("csv_a"), py::arg("csv_b"), py::arg("tol") = 1e-9);
}

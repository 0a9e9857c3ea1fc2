#include "hamlearn/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace hl {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw Error("config: unknown activation '" + s + "'");
}

LossSpec parse_loss(const std::string& s) {
  if (s == "mse") return {LossSpec::Kind::mse};
  if (s == "softmax_cross_entropy") return {LossSpec::Kind::softmax_cross_entropy};
  throw Error("config: unknown loss '" + s + "'");
}

}  // namespace

ScenarioParams scenario_preset(const std::string& name) {
  if (name == "GD-a") return {{0.01, 0.0, 0.0}, 1.0};
  if (name == "GD-b") return {{0.001, 0.0, 0.0}, 0.5};
  if (name == "Mom-a") return {{0.01, 0.05, 0.6}, 1.0};
  if (name == "Mom-b") return {{0.01, 0.1, 0.5}, 0.5};
  throw Error("config: unknown scenario '" + name + "'");
}

ScenarioParams ExperimentConfig::resolve_scenario() const {
  if (scenario == "custom") return {sgd, tau};
  return scenario_preset(scenario);
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::ordered_json& j) {
  ExperimentConfig cfg;
  try {
    cfg.name = j.value("name", cfg.name);
    cfg.scenario = j.value("scenario", cfg.scenario);
    if (j.contains("sgd")) {
      const auto& s = j.at("sgd");
      cfg.sgd.gamma = s.value("gamma", cfg.sgd.gamma);
      cfg.sgd.mu = s.value("mu", cfg.sgd.mu);
      cfg.sgd.rho = s.value("rho", cfg.sgd.rho);
    }
    cfg.tau = j.value("tau", cfg.tau);
    cfg.mode = j.value("mode", cfg.mode);
    cfg.window = j.value("window", cfg.window);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      cfg.model.kind = m.value("kind", cfg.model.kind);
      cfg.model.hidden = m.value("hidden", cfg.model.hidden);
      cfg.model.activation = m.value("activation", cfg.model.activation);
    }
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      cfg.dataset.name = d.value("name", std::string());
      cfg.dataset.csv = d.value("csv", std::string());
      cfg.dataset.jsonl = d.value("jsonl", std::string());
    }
    cfg.loss = j.value("loss", cfg.loss);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.shuffle = j.value("shuffle", cfg.shuffle);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    if (j.contains("tolerance")) {
      const auto& t = j.at("tolerance");
      cfg.tolerance.max_weight_diff = t.value("max_weight_diff", cfg.tolerance.max_weight_diff);
      cfg.tolerance.mean_weight_diff =
          t.value("mean_weight_diff", cfg.tolerance.mean_weight_diff);
      cfg.tolerance.loss_curve = t.value("loss_curve", cfg.tolerance.loss_curve);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return cfg;
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["scenario"] = scenario;
  j["sgd"] = {{"gamma", sgd.gamma}, {"mu", sgd.mu}, {"rho", sgd.rho}};
  j["tau"] = tau;
  j["mode"] = mode;
  j["window"] = window;
  j["model"] = {{"kind", model.kind}, {"hidden", model.hidden}, {"activation", model.activation}};
  j["dataset"] = {{"name", dataset.name}, {"csv", dataset.csv}, {"jsonl", dataset.jsonl}};
  j["loss"] = loss;
  j["epochs"] = epochs;
  j["seed"] = seed;
  j["shuffle"] = shuffle;
  j["output_dir"] = output_dir;
  j["tolerance"] = {{"max_weight_diff", tolerance.max_weight_diff},
                    {"mean_weight_diff", tolerance.mean_weight_diff},
                    {"loss_curve", tolerance.loss_curve}};
  return j;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "config: cannot open " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("config: " + path + ": " + e.what());
  }
  return from_json(j);
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), "config: cannot write " + path);
  out << to_json().dump(2) << '\n';
}

NetSpec build_netspec(const ModelConfig& model, const std::string& mode,
                      std::size_t input_dim, std::size_t output_dim) {
  const Activation act = parse_activation(model.activation);
  NetSpec spec;
  spec.input_dim = input_dim;

  std::vector<Layer> stack;
  if (model.kind == "linear") {
    stack = {DenseLayer{input_dim, output_dim, Activation::identity}};
  } else if (model.kind == "mlp") {
    stack = {DenseLayer{input_dim, model.hidden, act},
             DenseLayer{model.hidden, output_dim, Activation::identity}};
  } else if (model.kind == "rnn") {
    stack = {RecurrentLayer{input_dim, model.hidden, act}};
  } else {
    throw Error("config: unknown model kind '" + model.kind + "'");
  }

  if (mode == "ff_output" || mode == "rnn_unfold") {
    spec.output_layers = std::move(stack);
    spec.output_seed = ChainSeed::input_only;
  } else if (mode == "ff_state") {
    require(model.kind != "rnn", "config: ff_state expects a feed-forward model");
    spec.state_layers = std::move(stack);
    spec.state_seed = ChainSeed::input_only;
    spec.residual_mode = ResidualMode::instantaneous;
    spec.output_seed = ChainSeed::state_only;  // identity output
  } else if (mode == "rnn_hl_bptt" || mode == "rnn_truncated") {
    require(model.kind == "rnn", "config: replay modes expect an rnn model");
    spec.state_layers = std::move(stack);
    spec.state_seed = ChainSeed::input_only;
    spec.residual_mode = ResidualMode::instantaneous;
    spec.output_seed = ChainSeed::state_only;
  } else {
    throw Error("config: unknown mode '" + mode + "'");
  }
  spec.validate();
  return spec;
}

namespace {

struct CsvWriter {
  std::ofstream out;
  explicit CsvWriter(const std::string& path) : out(path) {
    require(out.good(), "csv: cannot write " + path);
    out << "step,time,loss,accuracy,max_abs_dtheta,mean_abs_dtheta\n";
  }
  void row(std::size_t step, double time, double loss, double acc, double dmax, double dmean) {
    out << step << ',' << fmt(time) << ',' << fmt(loss) << ',' << fmt(acc) << ',' << fmt(dmax)
        << ',' << fmt(dmean) << '\n';
  }
};

WeightDiffStats weight_diff(const Tensor& a, const Tensor& b) {
  require(a.same_shape(b), "weight_diff: shape mismatch");
  WeightDiffStats s;
  if (a.empty()) return s;
  s.min = std::abs(a(0) - b(0));
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a(i) - b(i));
    s.mean += d;
    s.min = std::min(s.min, d);
    s.max = std::max(s.max, d);
  }
  s.mean /= static_cast<double>(a.size());
  return s;
}

double accuracy_of(const Tensor& y, const Tensor& target) {
  return argmax(y) == argmax(target) ? 1.0 : 0.0;
}

// loss and gradient of the bare model at theta, used to drive the oracle
struct OracleEval {
  double loss = 0.0;
  double accuracy = 0.0;
  Tensor grad;
};

OracleEval oracle_eval(const NetSpec& spec, bool state_route, const Tensor& theta,
                       const StreamItem& item, const LossSpec& loss_spec) {
  Tape tape;
  NodeId u = tape.constant(item.u);
  NodeId th = tape.input(theta);
  NodeId y;
  if (state_route) {
    NodeId h0 = tape.constant(Tensor::zeros({spec.state_dim()}));
    y = spec.eval_fhat(tape, u, h0, th);
  } else {
    NodeId h0 = tape.constant(Tensor::zeros({spec.state_dim()}));
    y = spec.eval_output(tape, u, h0, th);
  }
  NodeId l = loss_spec.apply(tape, y, tape.constant(*item.y_hat));
  OracleEval ev;
  ev.loss = tape.value(l)(0);
  ev.accuracy = accuracy_of(tape.value(y), *item.y_hat);
  ev.grad = tape.backward(l, Tensor::scalar(1.0)).at(th);
  return ev;
}

struct PairedAccumulator {
  double max_step_diff = 0.0;
  double sum_step_diff = 0.0;
  double max_loss_gap = 0.0;
  std::size_t steps = 0;

  void observe(double dmax, double loss_gap) {
    max_step_diff = std::max(max_step_diff, dmax);
    sum_step_diff += dmax;
    max_loss_gap = std::max(max_loss_gap, loss_gap);
    ++steps;
  }
};

}  // namespace

nlohmann::ordered_json ExperimentSummary::to_json() const {
  nlohmann::ordered_json j;
  j["name"] = name;
  j["scenario"] = scenario;
  j["steps"] = steps;
  j["final_loss"] = final_loss;
  j["weight_diff"] = {{"mean", final_diff.mean}, {"min", final_diff.min}, {"max", final_diff.max}};
  if (final_diff_mainstream.has_value())
    j["weight_diff_mainstream_buffer"] = {{"mean", final_diff_mainstream->mean},
                                          {"min", final_diff_mainstream->min},
                                          {"max", final_diff_mainstream->max}};
  j["max_step_weight_diff"] = max_step_weight_diff;
  j["mean_step_weight_diff"] = mean_step_weight_diff;
  j["max_loss_gap"] = max_loss_gap;
  j["runtime_sec"] = runtime_sec;
  j["pass"] = pass;
  return j;
}

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const ScenarioParams sc = cfg.resolve_scenario();
  const LossSpec loss = parse_loss(cfg.loss);
  const bool momentum = sc.sgd.mu != 0.0 || sc.sgd.rho != 0.0;

  std::filesystem::create_directories(cfg.output_dir);
  ExperimentSummary summary;
  summary.name = cfg.name;
  summary.scenario = cfg.scenario;
  summary.hl_csv = cfg.output_dir + "/" + cfg.name + "_hl.csv";
  summary.oracle_csv = cfg.output_dir + "/" + cfg.name + "_oracle.csv";
  summary.summary_json = cfg.output_dir + "/" + cfg.name + "_summary.json";

  CsvWriter hl_csv(summary.hl_csv);
  CsvWriter oracle_csv(summary.oracle_csv);
  PairedAccumulator acc;

  const bool table_mode = cfg.mode == "ff_output" || cfg.mode == "ff_state";
  const bool replay_mode = cfg.mode == "rnn_hl_bptt" || cfg.mode == "rnn_truncated";

  if (table_mode || cfg.mode == "rnn_unfold") {
    // per-item updates; the Appendix-style parameter map applies directly
    const MappedParams mapped = map_params(sc.sgd, sc.tau);
    std::vector<std::pair<Tensor, Tensor>> samples;
    if (cfg.mode == "rnn_unfold") {
      require(cfg.dataset.name == "sequences_synth" || !cfg.dataset.jsonl.empty(),
              "config: rnn_unfold needs a sequence dataset");
      std::vector<Sequence> seqs =
          cfg.dataset.jsonl.empty()
              ? make_synthetic_sequences(12, 4, 7, 3, cfg.model.hidden, 21)
              : load_jsonl_sequences(cfg.dataset.jsonl);
      for (const Sequence& s : seqs) {
        require(s.targets.back().has_value(), "config: rnn_unfold needs end-of-sequence targets");
        const std::size_t len = s.tokens.size(), d = s.tokens[0].size();
        std::vector<double> flat;
        flat.reserve(len * d);
        for (const Tensor& tok : s.tokens)
          flat.insert(flat.end(), tok.data().begin(), tok.data().end());
        samples.emplace_back(Tensor::from_matrix(len, d, std::move(flat)), *s.targets.back());
      }
    } else {
      Dataset data;
      if (cfg.dataset.name == "iris_synth") data = make_iris_like();
      else if (cfg.dataset.name == "digits_synth") data = make_digits_like();
      else if (!cfg.dataset.csv.empty()) data = load_csv_dataset(cfg.dataset.csv);
      else throw Error("config: no dataset given");
      samples = data.one_hot_samples();
    }

    const std::size_t input_dim =
        samples[0].first.rank() == 2 ? samples[0].first.dim(1) : samples[0].first.size();
    const std::size_t out_dim = samples[0].second.size();
    NetSpec spec = build_netspec(cfg.model, cfg.mode, input_dim, out_dim);

    ModelState state = spec.init_state(cfg.seed);
    Costate costate = Costate::zeros_like(state);
    const bool state_route = cfg.mode == "ff_state";
    Tensor theta_aligned = state_route ? state.theta_h : state.theta_y;
    Tensor theta_main = theta_aligned;
    std::optional<Tensor> buf_aligned, buf_main;
    SGDConfig sgd_aligned = sc.sgd;
    sgd_aligned.first_step = SGDConfig::FirstStep::dampened;
    SGDConfig sgd_main = sc.sgd;  // mainstream clone-gradient first buffer

    const std::size_t n_params = state.theta_h.size() + state.theta_y.size();
    HLConfig hl;
    hl.tau = sc.tau;
    hl.beta = HLConfig::uniform_beta(mapped.beta, n_params);
    hl.eta = mapped.eta;
    hl.phi = PhiSchedule::constant(mapped.phi_const);
    hl.ordering = Ordering::sequential;

    StreamSource stream = StreamSource::from_dataset(
        samples, cfg.shuffle ? std::optional<std::uint64_t>(cfg.seed) : std::nullopt, sc.tau,
        cfg.epochs);

    std::size_t step = 0;
    double prev_t = 0.0;
    bool first = true;
    double last_loss = 0.0;
    while (auto item = stream.next()) {
      const double step_tau = first ? sc.tau : item->timestamp - prev_t;
      prev_t = item->timestamp;
      first = false;

      StepResult r;
      if (state_route) r = ff_state_step(state, costate, *item, hl, loss, spec, step_tau);
      else r = hl_step(state, costate, *item, hl, loss, spec, {step_tau});

      OracleEval ev = oracle_eval(spec, state_route, theta_aligned, *item, loss);
      std::tie(theta_aligned, buf_aligned) =
          sgd_momentum_step(theta_aligned, ev.grad, buf_aligned, sgd_aligned);
      if (momentum) {
        OracleEval em = oracle_eval(spec, state_route, theta_main, *item, loss);
        std::tie(theta_main, buf_main) = sgd_momentum_step(theta_main, em.grad, buf_main, sgd_main);
      }

      const Tensor& hl_theta = state_route ? state.theta_h : state.theta_y;
      const WeightDiffStats d = weight_diff(hl_theta, theta_aligned);
      const double hl_loss = r.loss_value.value_or(std::nan(""));
      last_loss = hl_loss;
      const double hl_acc = accuracy_of(r.y, *item->y_hat);
      acc.observe(d.max, std::abs(hl_loss - ev.loss));
      hl_csv.row(step, item->timestamp, hl_loss, hl_acc, d.max, d.mean);
      oracle_csv.row(step, item->timestamp, ev.loss, ev.accuracy, d.max, d.mean);
      ++step;
    }
    const Tensor& hl_theta = state_route ? state.theta_h : state.theta_y;
    summary.final_diff = weight_diff(hl_theta, theta_aligned);
    if (momentum) summary.final_diff_mainstream = weight_diff(hl_theta, theta_main);
    summary.final_loss = last_loss;
  } else if (replay_mode) {
    require(!momentum,
            "config: replay modes map plain-gradient scenarios; momentum needs ff/unfold modes");
    std::vector<Sequence> seqs =
        cfg.dataset.jsonl.empty()
            ? make_synthetic_sequences(12, 4, 7, 3, cfg.model.hidden, 21)
            : load_jsonl_sequences(cfg.dataset.jsonl);
    const std::size_t input_dim = seqs[0].tokens[0].size();
    NetSpec spec = build_netspec(cfg.model, cfg.mode, input_dim, cfg.model.hidden);

    ModelState state = spec.init_state(cfg.seed);
    Costate costate = Costate::zeros_like(state);
    Tensor theta_o = state.theta_h;
    std::optional<Tensor> buf;

    HLConfig hl;
    hl.tau = sc.tau;
    hl.beta = HLConfig::uniform_beta(sc.sgd.gamma / sc.tau, state.theta_h.size());
    hl.eta = 0.0;
    hl.phi = PhiSchedule::reciprocal_tau();
    hl.ordering = Ordering::sequential;

    double last_loss = 0.0;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      for (std::size_t s = 0; s < seqs.size(); ++s) {
        const Sequence& seq = seqs[s];
        const std::size_t n = seq.tokens.size();
        const std::size_t w =
            cfg.mode == "rnn_truncated" ? std::min(std::max<std::size_t>(cfg.window, 1), n) : n;

        state.h = Tensor::zeros(state.h.shape());
        ReplayOptions ro;
        ro.window = w;
        ro.compute_oracle_diff = false;
        ReplayResult rr = hl_bptt_replay(seq, spec, hl, loss, state, costate, ro);

        // oracle: windowed gradients on its own weights, then one step
        Tensor h0 = Tensor::zeros({spec.state_dim()});
        for (std::size_t k = 0; k + w < n; ++k) {
          Tape tape;
          NodeId f = spec.eval_fhat(tape, tape.constant(seq.tokens[k]), tape.constant(h0),
                                    tape.constant(theta_o));
          h0 = tape.value(f);
        }
        std::vector<Tensor> tokens(seq.tokens.end() - static_cast<std::ptrdiff_t>(w),
                                   seq.tokens.end());
        std::vector<std::optional<Tensor>> targets(seq.targets.end() -
                                                       static_cast<std::ptrdiff_t>(w),
                                                   seq.targets.end());
        BpttResult oracle = bptt_gradients(tokens, targets, h0, theta_o, spec, loss);
        std::tie(theta_o, buf) = sgd_momentum_step(theta_o, oracle.grad_theta_h, buf, sc.sgd);

        const WeightDiffStats d = weight_diff(state.theta_h, theta_o);
        const std::size_t step = e * seqs.size() + s;
        const double t_end = rr.rows.back().time;
        last_loss = rr.total_loss;
        acc.observe(d.max, std::abs(rr.total_loss - oracle.total_loss));
        hl_csv.row(step, t_end, rr.total_loss, std::nan(""), d.max, d.mean);
        oracle_csv.row(step, t_end, oracle.total_loss, std::nan(""), d.max, d.mean);
      }
    }
    summary.final_diff = weight_diff(state.theta_h, theta_o);
    summary.final_loss = last_loss;
  } else {
    throw Error("config: unknown mode '" + cfg.mode + "'");
  }

  summary.steps = acc.steps;
  summary.max_step_weight_diff = acc.max_step_diff;
  summary.mean_step_weight_diff = acc.steps ? acc.sum_step_diff / acc.steps : 0.0;
  summary.max_loss_gap = acc.max_loss_gap;
  summary.runtime_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (momentum) {
    summary.pass = summary.final_diff.mean <= cfg.tolerance.mean_weight_diff;
  } else {
    summary.pass = summary.max_step_weight_diff <= cfg.tolerance.max_weight_diff &&
                   summary.max_loss_gap <= cfg.tolerance.loss_curve;
  }

  std::ofstream out(summary.summary_json);
  require(out.good(), "summary: cannot write " + summary.summary_json);
  out << summary.to_json().dump(2) << '\n';
  return summary;
}

CurveReport compare_curves(const std::string& csv_a, const std::string& csv_b, double tol) {
  auto read_loss = [](const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "compare: cannot open " + path);
    std::vector<double> losses;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (first && line.rfind("step,", 0) == 0) {
        first = false;
        continue;
      }
      first = false;
      std::stringstream ss(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      require(cells.size() >= 3, "compare: malformed row in " + path);
      losses.push_back(std::stod(cells[2]));
    }
    return losses;
  };
  const std::vector<double> a = read_loss(csv_a);
  const std::vector<double> b = read_loss(csv_b);
  require(a.size() == b.size(), "compare: row count mismatch (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
  CurveReport report;
  report.rows = a.size();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double gap = std::abs(a[i] - b[i]);
    if (gap > report.max_gap) report.max_gap = gap;
    if (report.pass && gap > tol) {
      report.pass = false;
      report.first_violation = i;
    }
  }
  return report;
}

}  // namespace hl

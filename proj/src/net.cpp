#include "hamlearn/net.hpp"

#include <cmath>
#include <string>

namespace hl {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

std::size_t layer_param_count(const Layer& layer) {
  if (const auto* d = std::get_if<DenseLayer>(&layer))
    return d->out * d->in + (d->bias ? d->out : 0);
  if (const auto* r = std::get_if<RecurrentLayer>(&layer))
    return r->hidden * r->in + r->hidden * r->hidden + (r->bias ? r->hidden : 0);
  return 0;
}

std::size_t layer_out_dim(const Layer& layer, std::size_t in_dim) {
  if (const auto* d = std::get_if<DenseLayer>(&layer)) return d->out;
  if (const auto* r = std::get_if<RecurrentLayer>(&layer)) return r->hidden;
  if (const auto* s = std::get_if<SelectorLayer>(&layer)) return s->len;
  return in_dim;  // identity
}

std::size_t layer_declared_in(const Layer& layer) {
  if (const auto* d = std::get_if<DenseLayer>(&layer)) return d->in;
  if (const auto* r = std::get_if<RecurrentLayer>(&layer)) return r->in;
  return 0;  // flexible
}

NodeId apply_activation(Tape& tape, Activation act, NodeId x) {
  switch (act) {
    case Activation::identity: return x;
    case Activation::tanh: return tape.tanh(x);
    case Activation::relu: return tape.relu(x);
    case Activation::softmax: return tape.softmax(x);
  }
  throw Error("unknown activation");
}

}  // namespace

void NetSpec::validate() const {
  require(input_dim > 0, "netspec: input_dim must be positive");
  if (state_composition == StateComposition::grouped) {
    require(!state_layers.empty(), "netspec: grouped state net needs at least one layer");
    std::size_t in_dim = input_dim;
    for (const Layer& layer : state_layers) {
      const auto* d = std::get_if<DenseLayer>(&layer);
      require(d != nullptr, "netspec: grouped state nets support dense layers only");
      require(d->in == in_dim, "netspec: grouped layer input " + std::to_string(d->in) +
                                   " does not match feed " + std::to_string(in_dim));
      in_dim = d->out;
    }
  } else if (!state_layers.empty()) {
    std::size_t dim = 0;
    const std::size_t m = state_dim();
    switch (state_seed) {
      case ChainSeed::input_only: dim = input_dim; break;
      case ChainSeed::state_only: dim = m; break;
      case ChainSeed::input_and_state: dim = input_dim + m; break;
    }
    for (const Layer& layer : state_layers) {
      const std::size_t declared = layer_declared_in(layer);
      require(declared == 0 || declared == dim,
              "netspec: state layer input " + std::to_string(declared) +
                  " does not match feed " + std::to_string(dim));
      if (const auto* r = std::get_if<RecurrentLayer>(&layer))
        require(r->hidden == m, "netspec: state-net recurrent cell must have hidden == state size");
      dim = layer_out_dim(layer, dim);
    }
    require(dim == m, "netspec: state chain output " + std::to_string(dim) +
                          " does not match state size " + std::to_string(m));
  }
}

std::size_t NetSpec::state_dim() const {
  if (state_layers.empty()) return 0;
  if (state_composition == StateComposition::grouped) {
    std::size_t m = 0;
    for (const Layer& layer : state_layers) m += layer_out_dim(layer, 0);
    return m;
  }
  // Walk backward to the last layer with an explicit output size.
  std::size_t trailing_identities = 0;
  for (std::size_t i = state_layers.size(); i-- > 0;) {
    const Layer& layer = state_layers[i];
    if (std::holds_alternative<IdentityLayer>(layer)) {
      ++trailing_identities;
      continue;
    }
    return layer_out_dim(layer, 0);
  }
  // Pure identity chain: the state size equals the seed, which must be the
  // input for the size to be well defined.
  require(state_seed != ChainSeed::input_and_state,
          "netspec: identity state chain needs a sized seed");
  if (state_seed == ChainSeed::input_only) return input_dim;
  throw Error("netspec: cannot derive state size from an identity chain on the state itself");
}

std::size_t NetSpec::output_dim() const {
  if (output_layers.empty()) return state_dim();  // identity output net
  std::size_t dim = 0;
  switch (output_seed) {
    case ChainSeed::input_only: dim = input_dim; break;
    case ChainSeed::state_only: dim = state_dim(); break;
    case ChainSeed::input_and_state: dim = input_dim + state_dim(); break;
  }
  for (const Layer& layer : output_layers) dim = layer_out_dim(layer, dim);
  return dim;
}

std::size_t NetSpec::theta_h_size() const {
  std::size_t n = 0;
  for (const Layer& layer : state_layers) n += layer_param_count(layer);
  return n;
}

std::size_t NetSpec::theta_y_size() const {
  std::size_t n = 0;
  for (const Layer& layer : output_layers) n += layer_param_count(layer);
  return n;
}

std::vector<std::pair<std::size_t, std::size_t>> NetSpec::group_partition() const {
  require(state_composition == StateComposition::grouped,
          "netspec: group partition requires grouped composition");
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::size_t off = 0;
  for (const Layer& layer : state_layers) {
    const std::size_t len = layer_out_dim(layer, 0);
    ranges.emplace_back(off, len);
    off += len;
  }
  return ranges;
}

bool NetSpec::output_is_identity() const {
  if (output_layers.empty()) return output_seed == ChainSeed::state_only;
  return output_seed == ChainSeed::state_only && output_layers.size() == 1 &&
         std::holds_alternative<IdentityLayer>(output_layers[0]);
}

namespace {

struct ChainContext {
  Tape* tape;
  NodeId state;       // full model state node (recurrent cells in state nets)
  NodeId theta;
  std::size_t offset; // cursor into theta
  bool output_context;
};

NodeId apply_layer(ChainContext& ctx, const Layer& layer, NodeId x) {
  Tape& tape = *ctx.tape;
  if (const auto* d = std::get_if<DenseLayer>(&layer)) {
    NodeId w = tape.reshape(tape.slice(ctx.theta, ctx.offset, d->out * d->in), {d->out, d->in});
    ctx.offset += d->out * d->in;
    NodeId z = tape.value(x).rank() == 2 ? tape.matmul(x, tape.transpose(w))
                                         : tape.matmul(w, x);
    if (d->bias) {
      NodeId b = tape.slice(ctx.theta, ctx.offset, d->out);
      ctx.offset += d->out;
      z = tape.add(z, b);
    }
    return apply_activation(tape, d->act, z);
  }
  if (const auto* r = std::get_if<RecurrentLayer>(&layer)) {
    NodeId wu = tape.reshape(tape.slice(ctx.theta, ctx.offset, r->hidden * r->in),
                             {r->hidden, r->in});
    ctx.offset += r->hidden * r->in;
    NodeId wh = tape.reshape(tape.slice(ctx.theta, ctx.offset, r->hidden * r->hidden),
                             {r->hidden, r->hidden});
    ctx.offset += r->hidden * r->hidden;
    NodeId b = 0;
    if (r->bias) {
      b = tape.slice(ctx.theta, ctx.offset, r->hidden);
      ctx.offset += r->hidden;
    }
    auto cell = [&](NodeId xk, NodeId hk) {
      NodeId z = tape.add(tape.matmul(wu, xk), tape.matmul(wh, hk));
      if (r->bias) z = tape.add(z, b);
      return apply_activation(tape, r->act, z);
    };
    if (!ctx.output_context) {
      // one step of the cell against the live model state
      return cell(x, ctx.state);
    }
    // static unroll over the rows of a sequence input, starting from zeros
    const std::vector<std::size_t> xs_shape = tape.value(x).shape();
    NodeId hk = tape.constant(Tensor::zeros({r->hidden}));
    if (xs_shape.size() == 2) {
      const std::size_t rows = xs_shape[0], cols = xs_shape[1];
      require(cols == r->in, "netspec: sequence token width " + std::to_string(cols) +
                                 " does not match cell input " + std::to_string(r->in));
      for (std::size_t k = 0; k < rows; ++k) {
        NodeId xk = tape.slice(x, k * cols, cols);
        hk = cell(xk, hk);
      }
    } else {
      hk = cell(x, hk);
    }
    return hk;
  }
  if (const auto* s = std::get_if<SelectorLayer>(&layer)) {
    return tape.slice(x, s->offset, s->len);
  }
  return x;  // identity
}

NodeId seed_node(Tape& tape, ChainSeed seed, NodeId u, NodeId h) {
  switch (seed) {
    case ChainSeed::input_only: return u;
    case ChainSeed::state_only: return h;
    case ChainSeed::input_and_state: return tape.concat({u, h});
  }
  throw Error("unknown chain seed");
}

}  // namespace

NodeId NetSpec::eval_fhat(Tape& tape, NodeId u, NodeId h, NodeId theta_h) const {
  if (state_layers.empty()) return tape.identity(h);  // empty state: velocity is empty too
  if (state_composition == StateComposition::grouped) {
    ChainContext ctx{&tape, h, theta_h, 0, false};
    std::vector<NodeId> parts;
    const auto ranges = group_partition();
    for (std::size_t j = 0; j < state_layers.size(); ++j) {
      NodeId feed = j == 0 ? u : tape.slice(h, ranges[j - 1].first, ranges[j - 1].second);
      parts.push_back(apply_layer(ctx, state_layers[j], feed));
    }
    return tape.concat(parts);
  }
  ChainContext ctx{&tape, h, theta_h, 0, false};
  NodeId x = seed_node(tape, state_seed, u, h);
  for (const Layer& layer : state_layers) x = apply_layer(ctx, layer, x);
  return x;
}

NodeId NetSpec::eval_output(Tape& tape, NodeId u, NodeId h, NodeId theta_y) const {
  ChainContext ctx{&tape, h, theta_y, 0, true};
  NodeId x = seed_node(tape, output_seed, u, h);
  for (const Layer& layer : output_layers) x = apply_layer(ctx, layer, x);
  if (output_layers.empty()) x = tape.identity(x);
  return x;
}

std::pair<NodeId, NodeId> NetSpec::eval_state_velocity(Tape& tape, NodeId u, NodeId h,
                                                       NodeId theta_h, double tau) const {
  NodeId fhat = eval_fhat(tape, u, h, theta_h);
  if (residual_mode == ResidualMode::plain) return {fhat, fhat};
  require(tau > 0.0, "netspec: instantaneous mode requires tau > 0");
  NodeId hdot = tape.scale(tape.add(tape.scale(h, -1.0), fhat), 1.0 / tau);
  return {hdot, fhat};
}

std::pair<NodeId, NodeId> NetSpec::eval_masked_velocity(Tape& tape, NodeId u, NodeId h,
                                                        NodeId theta_h, double tau,
                                                        std::size_t step_index) const {
  require(state_composition == StateComposition::grouped,
          "netspec: masked update requires a group partition");
  require(tau > 0.0, "netspec: masked update requires tau > 0");
  NodeId fhat = eval_fhat(tape, u, h, theta_h);
  const auto ranges = group_partition();
  const std::size_t active = step_index % ranges.size();
  Tensor mask(Tensor::zeros({state_dim()}));
  for (std::size_t i = 0; i < ranges[active].second; ++i)
    mask(ranges[active].first + i) = 1.0;
  NodeId residual = tape.scale(tape.add(tape.scale(h, -1.0), fhat), 1.0 / tau);
  NodeId hdot = tape.hadamard(tape.constant(std::move(mask)), residual);
  return {hdot, fhat};
}

namespace {

void init_layer(const Layer& layer, std::size_t in_dim, std::mt19937_64& rng,
                std::vector<double>& out) {
  const std::size_t n = layer_param_count(layer);
  if (n == 0) return;
  std::size_t fan_in = in_dim;
  if (const auto* d = std::get_if<DenseLayer>(&layer)) fan_in = d->in;
  if (const auto* r = std::get_if<RecurrentLayer>(&layer)) fan_in = r->in + r->hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (std::size_t i = 0; i < n; ++i) out.push_back(dist(rng));
}

}  // namespace

Tensor NetSpec::init_theta_h(std::mt19937_64& rng) const {
  std::vector<double> data;
  data.reserve(theta_h_size());
  for (const Layer& layer : state_layers) init_layer(layer, input_dim, rng, data);
  return Tensor::from_vector(std::move(data));
}

Tensor NetSpec::init_theta_y(std::mt19937_64& rng) const {
  std::vector<double> data;
  data.reserve(theta_y_size());
  for (const Layer& layer : output_layers) init_layer(layer, input_dim, rng, data);
  return Tensor::from_vector(std::move(data));
}

ModelState NetSpec::init_state(std::uint64_t seed, bool random_h) const {
  validate();
  std::mt19937_64 rng(seed);
  ModelState s;
  s.theta_h = init_theta_h(rng);
  s.theta_y = init_theta_y(rng);
  s.h = random_h ? Tensor::uniform({state_dim()}, -0.5, 0.5, rng)
                 : Tensor::zeros({state_dim()});
  return s;
}

namespace {

struct ScratchEval {
  Tape tape;
  NodeId u, h, theta;
  ScratchEval(const Tensor& uv, const ModelState& state, const Tensor& theta_v)
      : u(tape.constant(uv)), h(tape.constant(state.h)), theta(tape.constant(theta_v)) {}
};

}  // namespace

Tensor eval_state_net(const Tensor& u, const ModelState& state, const NetSpec& spec,
                      double tau) {
  ScratchEval ev(u, state, state.theta_h);
  auto [hdot, fhat] = spec.eval_state_velocity(ev.tape, ev.u, ev.h, ev.theta, tau);
  (void)fhat;
  return ev.tape.value(hdot);
}

Tensor eval_output_net(const Tensor& u, const ModelState& state, const NetSpec& spec) {
  ScratchEval ev(u, state, state.theta_y);
  return ev.tape.value(spec.eval_output(ev.tape, ev.u, ev.h, ev.theta));
}

Tensor residual_state_fn(const Tensor& u, const ModelState& state, const NetSpec& spec,
                         double tau) {
  if (tau <= 0.0) throw Error("residual_state_fn: tau must be positive");
  if (spec.residual_mode != ResidualMode::instantaneous)
    throw Error("residual_state_fn: spec is not in instantaneous mode");
  return eval_state_net(u, state, spec, tau);
}

Tensor masked_group_update(const Tensor& u, const ModelState& state, const NetSpec& spec,
                           double tau, std::size_t step_index) {
  ScratchEval ev(u, state, state.theta_h);
  auto [hdot, fhat] = spec.eval_masked_velocity(ev.tape, ev.u, ev.h, ev.theta, tau, step_index);
  (void)fhat;
  return ev.tape.value(hdot);
}

}  // namespace hl

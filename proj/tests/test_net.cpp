#include <doctest.h>

#include <cmath>

#include "hamlearn/hamilton.hpp"
#include "hamlearn/net.hpp"

using namespace hl;

namespace {

NetSpec dense_state_spec(std::size_t in, std::size_t out, Activation act,
                         ResidualMode mode = ResidualMode::plain) {
  NetSpec spec;
  spec.input_dim = in;
  spec.state_layers = {DenseLayer{in, out, act}};
  spec.state_seed = ChainSeed::input_only;
  spec.residual_mode = mode;
  spec.output_seed = ChainSeed::state_only;
  spec.validate();
  return spec;
}

}  // namespace

TEST_CASE("zero-weight tanh state net has zero velocity") {
  NetSpec spec = dense_state_spec(2, 3, Activation::tanh);
  ModelState state{Tensor::zeros({3}), Tensor::zeros({spec.theta_h_size()}), Tensor()};
  Tensor hdot = eval_state_net(Tensor::from_vector({0.7, -1.2}), state, spec, 1.0);
  for (std::size_t i = 0; i < hdot.size(); ++i) CHECK(hdot(i) == 0.0);
}

TEST_CASE("identity transition is a fixed point of the residual form") {
  // f_hat = h via a selector over the whole state
  NetSpec spec;
  spec.input_dim = 1;
  spec.state_layers = {SelectorLayer{0, 3}};
  spec.state_seed = ChainSeed::state_only;
  spec.residual_mode = ResidualMode::instantaneous;
  spec.validate();
  ModelState state{Tensor::from_vector({0.3, -2.0, 5.5}), Tensor(), Tensor()};
  Tensor hdot = residual_state_fn(Tensor::from_vector({9.0}), state, spec, 0.5);
  for (std::size_t i = 0; i < hdot.size(); ++i) CHECK(hdot(i) == 0.0);
}

TEST_CASE("one-neuron linear state net is a plain product") {
  NetSpec spec;
  spec.input_dim = 1;
  spec.state_layers = {DenseLayer{1, 1, Activation::identity, /*bias=*/false}};
  spec.state_seed = ChainSeed::input_only;
  spec.validate();
  ModelState state{Tensor::zeros({1}), Tensor::from_vector({2.0}), Tensor()};
  Tensor hdot = eval_state_net(Tensor::from_vector({3.0}), state, spec, 1.0);
  CHECK(hdot(0) == 6.0);
}

TEST_CASE("identity output net returns the state") {
  NetSpec spec = dense_state_spec(2, 3, Activation::tanh);
  ModelState state{Tensor::from_vector({1.0, -2.0, 0.5}), Tensor::zeros({spec.theta_h_size()}),
                   Tensor()};
  Tensor y = eval_output_net(Tensor::from_vector({0.0, 0.0}), state, spec);
  CHECK(bit_equal(y, state.h));
  CHECK(spec.output_is_identity());
}

TEST_CASE("linear head on a zero state yields its bias") {
  NetSpec spec;
  spec.input_dim = 2;
  spec.state_layers = {DenseLayer{2, 3, Activation::tanh}};
  spec.state_seed = ChainSeed::input_only;
  spec.output_layers = {DenseLayer{3, 2, Activation::identity}};
  spec.output_seed = ChainSeed::state_only;
  spec.validate();
  Tensor theta_y = Tensor::zeros({spec.theta_y_size()});
  theta_y(6) = 0.25;  // bias after the 3x2 weight block
  theta_y(7) = -4.0;
  ModelState state{Tensor::zeros({3}), Tensor::zeros({spec.theta_h_size()}), theta_y};
  Tensor y = eval_output_net(Tensor::from_vector({3.0, 4.0}), state, spec);
  CHECK(y(0) == 0.25);
  CHECK(y(1) == -4.0);
}

TEST_CASE("softmax head on tied logits splits evenly") {
  NetSpec spec;
  spec.input_dim = 2;
  spec.output_layers = {DenseLayer{2, 2, Activation::softmax}};
  spec.output_seed = ChainSeed::input_only;
  spec.validate();
  ModelState state{Tensor(), Tensor(), Tensor::zeros({spec.theta_y_size()})};
  Tensor y = eval_output_net(Tensor::from_vector({1.0, -1.0}), state, spec);
  CHECK(y(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(y(1) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("output evaluation is pure and repeatable") {
  NetSpec spec;
  spec.input_dim = 3;
  spec.output_layers = {DenseLayer{3, 4, Activation::tanh}, DenseLayer{4, 2, Activation::identity}};
  spec.output_seed = ChainSeed::input_only;
  spec.validate();
  ModelState state = spec.init_state(99);
  Tensor u = Tensor::from_vector({0.1, 0.2, 0.3});
  Tensor before = state.theta_y;
  Tensor y1 = eval_output_net(u, state, spec);
  Tensor y2 = eval_output_net(u, state, spec);
  CHECK(bit_equal(y1, y2));
  CHECK(bit_equal(state.theta_y, before));
}

TEST_CASE("residual velocity of a constant net at its fixed point") {
  NetSpec spec;
  spec.input_dim = 1;
  spec.state_layers = {DenseLayer{1, 2, Activation::identity}};
  spec.state_seed = ChainSeed::input_only;
  spec.residual_mode = ResidualMode::instantaneous;
  spec.validate();
  Tensor theta = Tensor::zeros({spec.theta_h_size()});
  theta(2) = 1.5;  // biases only: f_hat = (1.5, 1.5) regardless of input
  theta(3) = 1.5;
  ModelState state{Tensor::from_vector({1.5, 1.5}), theta, Tensor()};
  Tensor hdot = residual_state_fn(Tensor::from_vector({0.0}), state, spec, 0.5);
  CHECK(hdot(0) == 0.0);
  CHECK(hdot(1) == 0.0);

  state.h = Tensor::from_vector({2.0, 2.0});
  theta(2) = 4.0;
  theta(3) = 4.0;
  state.theta_h = theta;
  hdot = residual_state_fn(Tensor::from_vector({0.0}), state, spec, 0.5);
  CHECK(hdot(0) == 4.0);  // (-2 + 4) / 0.5
  CHECK(hdot(1) == 4.0);
}

TEST_CASE("residual mode preconditions") {
  NetSpec spec = dense_state_spec(1, 1, Activation::identity);
  ModelState state{Tensor::zeros({1}), Tensor::zeros({spec.theta_h_size()}), Tensor()};
  CHECK_THROWS_AS(residual_state_fn(Tensor::from_vector({1.0}), state, spec, 1.0), Error);
  NetSpec inst = dense_state_spec(1, 1, Activation::identity, ResidualMode::instantaneous);
  CHECK_THROWS_AS(residual_state_fn(Tensor::from_vector({1.0}), state, inst, 0.0), Error);
}

namespace {

NetSpec grouped_two_layer(std::size_t d, std::size_t l1, std::size_t l2) {
  NetSpec spec;
  spec.input_dim = d;
  spec.state_composition = StateComposition::grouped;
  spec.residual_mode = ResidualMode::instantaneous;
  spec.state_layers = {DenseLayer{d, l1, Activation::tanh},
                       DenseLayer{l1, l2, Activation::tanh}};
  spec.output_seed = ChainSeed::state_only;
  spec.validate();
  return spec;
}

}  // namespace

TEST_CASE("single-group masked update equals the plain residual") {
  NetSpec grouped;
  grouped.input_dim = 2;
  grouped.state_composition = StateComposition::grouped;
  grouped.residual_mode = ResidualMode::instantaneous;
  grouped.state_layers = {DenseLayer{2, 3, Activation::tanh}};
  grouped.validate();
  ModelState state = grouped.init_state(5);
  state.h = Tensor::from_vector({0.1, -0.2, 0.3});
  Tensor u = Tensor::from_vector({0.5, -0.5});
  Tensor masked = masked_group_update(u, state, grouped, 0.5, 0);
  Tensor plain = residual_state_fn(u, state, grouped, 0.5);
  CHECK(bit_equal(masked, plain));
}

TEST_CASE("inactive groups contribute exactly zero velocity") {
  NetSpec spec = grouped_two_layer(2, 3, 2);
  ModelState state = spec.init_state(6);
  std::mt19937_64 rng(3);
  state.h = Tensor::uniform({5}, -1.0, 1.0, rng);
  Tensor u = Tensor::from_vector({0.3, 0.4});
  Tensor hdot0 = masked_group_update(u, state, spec, 0.5, 0);
  for (std::size_t i = 3; i < 5; ++i) CHECK(hdot0(i) == 0.0);
  Tensor hdot1 = masked_group_update(u, state, spec, 0.5, 1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(hdot1(i) == 0.0);
  CHECK_THROWS_AS(masked_group_update(u, state, dense_state_spec(2, 2, Activation::tanh), 0.5, 0),
                  Error);
}

TEST_CASE("a full masked period reproduces the layerwise pass exactly") {
  NetSpec spec = grouped_two_layer(2, 3, 2);
  ModelState state = spec.init_state(42);
  Costate costate = Costate::zeros_like(state);
  Tensor u = Tensor::from_vector({0.8, -0.3});

  HLConfig cfg;
  cfg.tau = 0.5;
  cfg.beta = Tensor::zeros({spec.theta_h_size() + spec.theta_y_size()});
  LossSpec loss{LossSpec::Kind::mse};

  for (std::size_t kappa = 0; kappa < 2; ++kappa) {
    StreamItem item{u, std::nullopt, true, static_cast<double>(kappa) * cfg.tau};
    StepOptions opts;
    opts.group_step = kappa;
    hl_step(state, costate, item, cfg, loss, spec, opts);
  }

  // oracle: direct layerwise evaluation of both dense layers
  Tape tape;
  NodeId theta = tape.constant(state.theta_h);
  NodeId w1 = tape.reshape(tape.slice(theta, 0, 6), {3, 2});
  NodeId b1 = tape.slice(theta, 6, 3);
  NodeId h1 = tape.tanh(tape.add(tape.matmul(w1, tape.constant(u)), b1));
  NodeId w2 = tape.reshape(tape.slice(theta, 9, 6), {2, 3});
  NodeId b2 = tape.slice(theta, 15, 2);
  NodeId h2 = tape.tanh(tape.add(tape.matmul(w2, h1), b2));
  Tensor expected = concat({tape.value(h1), tape.value(h2)});
  CHECK(bit_equal(state.h, expected));
}

TEST_CASE("group partitions cover the state exactly once") {
  NetSpec spec = grouped_two_layer(4, 5, 3);
  auto ranges = spec.group_partition();
  REQUIRE(ranges.size() == 2);
  CHECK(ranges[0] == std::pair<std::size_t, std::size_t>{0, 5});
  CHECK(ranges[1] == std::pair<std::size_t, std::size_t>{5, 3});
  CHECK(spec.state_dim() == 8);
}

TEST_CASE("netspec validation catches wiring mistakes") {
  NetSpec bad;
  bad.input_dim = 2;
  bad.state_composition = StateComposition::grouped;
  bad.state_layers = {IdentityLayer{}};
  CHECK_THROWS_AS(bad.validate(), Error);

  NetSpec mismatched;
  mismatched.input_dim = 2;
  mismatched.state_layers = {DenseLayer{3, 4, Activation::tanh}};
  mismatched.state_seed = ChainSeed::input_only;
  CHECK_THROWS_AS(mismatched.validate(), Error);

  NetSpec underivable;
  underivable.input_dim = 2;
  underivable.state_layers = {IdentityLayer{}};
  underivable.state_seed = ChainSeed::state_only;
  CHECK_THROWS_AS(underivable.state_dim(), Error);
}

TEST_CASE("parameter initialization is deterministic per seed") {
  NetSpec spec;
  spec.input_dim = 3;
  spec.state_layers = {RecurrentLayer{3, 4, Activation::tanh}};
  spec.state_seed = ChainSeed::input_only;
  spec.residual_mode = ResidualMode::instantaneous;
  spec.output_seed = ChainSeed::state_only;
  spec.validate();
  ModelState a = spec.init_state(123);
  ModelState b = spec.init_state(123);
  ModelState c = spec.init_state(124);
  CHECK(bit_equal(a.theta_h, b.theta_h));
  CHECK_FALSE(bit_equal(a.theta_h, c.theta_h));
  CHECK(a.theta_h.size() == 4 * 3 + 4 * 4 + 4);
}

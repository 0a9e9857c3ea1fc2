#include "hamlearn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hl {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Stable per-row softmax of a vector laid out at data[row*cols .. +cols].
void softmax_row(std::span<const double> in, std::span<double> out) {
  double mx = in[0];
  for (double v : in) mx = std::max(mx, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] /= sum;
}

double cross_entropy_row(std::span<const double> logits, std::span<const double> target) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double lse = std::log(sum) + mx;
  double tx = 0.0, tmass = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    tx += target[i] * logits[i];
    tmass += target[i];
  }
  return lse * tmass - tx;
}

}  // namespace

NodeId Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Tape::input(Tensor value) { return push({OpKind::input, {}, std::move(value)}); }

NodeId Tape::constant(Tensor value) { return push({OpKind::constant, {}, std::move(value)}); }

const Tensor& Tape::value(NodeId id) const {
  require(id < nodes_.size(), "tape: node id out of range");
  return nodes_[id].value;
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  Tensor v = hl::matmul(value(a), value(b));
  return push({OpKind::matmul, {a, b}, std::move(v)});
}

NodeId Tape::add(NodeId a, NodeId b) {
  Tensor v = hl::add(value(a), value(b));
  return push({OpKind::add, {a, b}, std::move(v)});
}

NodeId Tape::hadamard(NodeId a, NodeId b) {
  Tensor v = hl::hadamard(value(a), value(b));
  return push({OpKind::hadamard, {a, b}, std::move(v)});
}

NodeId Tape::concat(const std::vector<NodeId>& parts) {
  require(!parts.empty(), "concat: no inputs");
  std::vector<Tensor> vals;
  vals.reserve(parts.size());
  for (NodeId p : parts) vals.push_back(value(p));
  Tensor v = hl::concat(vals);
  return push({OpKind::concat, parts, std::move(v)});
}

NodeId Tape::tanh(NodeId a) {
  Tensor v(value(a).shape());
  const Tensor& x = value(a);
  for (std::size_t i = 0; i < x.size(); ++i) v(i) = std::tanh(x(i));
  return push({OpKind::tanh_op, {a}, std::move(v)});
}

NodeId Tape::relu(NodeId a) {
  Tensor v(value(a).shape());
  const Tensor& x = value(a);
  for (std::size_t i = 0; i < x.size(); ++i) v(i) = x(i) > 0.0 ? x(i) : 0.0;
  return push({OpKind::relu, {a}, std::move(v)});
}

NodeId Tape::identity(NodeId a) { return push({OpKind::identity, {a}, value(a)}); }

NodeId Tape::scale(NodeId a, double s) {
  Tensor v = hl::scale(value(a), s);
  Node n{OpKind::scale, {a}, std::move(v)};
  n.aux = s;
  return push(std::move(n));
}

NodeId Tape::softmax(NodeId a) {
  const Tensor& x = value(a);
  require(x.rank() == 1 && !x.empty(), "softmax: expected nonempty vector, got " + x.shape_str());
  Tensor v(x.shape());
  softmax_row(x.data(), v.data());
  return push({OpKind::softmax, {a}, std::move(v)});
}

NodeId Tape::softmax_cross_entropy(NodeId logits, NodeId target) {
  const Tensor& x = value(logits);
  const Tensor& t = value(target);
  require(x.same_shape(t), "softmax_cross_entropy: shape mismatch " + x.shape_str() + " vs " +
                               t.shape_str());
  require(!x.empty(), "softmax_cross_entropy: empty input");
  double loss = 0.0;
  if (x.rank() == 1) {
    loss = cross_entropy_row(x.data(), t.data());
  } else if (x.rank() == 2) {
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      loss += cross_entropy_row(x.data().subspan(r * cols, cols),
                                t.data().subspan(r * cols, cols));
    loss /= static_cast<double>(rows);
  } else {
    throw Error("softmax_cross_entropy: rank > 2 unsupported");
  }
  Tensor v = Tensor::scalar(loss);
  v.checked("softmax_cross_entropy");
  return push({OpKind::softmax_cross_entropy, {logits, target}, std::move(v)});
}

NodeId Tape::mse(NodeId pred, NodeId target) {
  const Tensor& y = value(pred);
  const Tensor& t = value(target);
  require(y.same_shape(t), "mse: shape mismatch " + y.shape_str() + " vs " + t.shape_str());
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y(i) - t(i);
    s += 0.5 * d * d;
  }
  if (y.rank() == 2) s /= static_cast<double>(y.dim(0));
  Tensor v = Tensor::scalar(s);
  v.checked("mse");
  return push({OpKind::mse, {pred, target}, std::move(v)});
}

NodeId Tape::slice(NodeId a, std::size_t offset, std::size_t len) {
  Tensor v = hl::slice(value(a), offset, len);
  Node n{OpKind::slice, {a}, std::move(v)};
  n.offset = offset;
  n.len = len;
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId a, std::vector<std::size_t> shape) {
  Tensor v = hl::reshape(value(a), std::move(shape));
  return push({OpKind::reshape, {a}, std::move(v)});
}

NodeId Tape::transpose(NodeId a) {
  Tensor v = hl::transpose(value(a));
  return push({OpKind::transpose, {a}, std::move(v)});
}

NodeId Tape::dot(NodeId a, NodeId b) {
  Tensor v = Tensor::scalar(hl::dot(value(a), value(b)));
  return push({OpKind::dot, {a, b}, std::move(v)});
}

const Tensor& Tape::Gradients::at(NodeId id) const {
  require(tape_ != nullptr && id < adjoints_.size(), "gradients: node id out of range");
  if (!touched_[id]) {
    // lazily materialize a zero gradient of the right shape
    zeros_cache_.push_back(Tensor(tape_->value(id).shape()));
    return zeros_cache_.back();
  }
  return adjoints_[id];
}

Tape::Gradients Tape::backward(NodeId root, const Tensor& seed) const {
  require(root < nodes_.size(), "backward: root node out of range");
  const Tensor& out = nodes_[root].value;
  require(seed.same_shape(out),
          "backward: seed shape " + seed.shape_str() + " does not match output " +
              out.shape_str());

  Gradients g;
  g.tape_ = this;
  g.adjoints_.resize(nodes_.size());
  g.touched_.assign(nodes_.size(), false);

  auto accumulate = [&](NodeId id, const Tensor& contribution) {
    if (!g.touched_[id]) {
      g.adjoints_[id] = contribution;
      g.touched_[id] = true;
    } else {
      g.adjoints_[id] = hl::add(g.adjoints_[id], contribution);
    }
  };

  accumulate(root, seed);

  for (std::size_t idx = root + 1; idx-- > 0;) {
    const NodeId id = static_cast<NodeId>(idx);
    if (!g.touched_[id]) continue;
    const Node& node = nodes_[id];
    const Tensor& adj = g.adjoints_[id];
    switch (node.kind) {
      case OpKind::input:
      case OpKind::constant:
        break;
      case OpKind::matmul: {
        const Tensor& a = nodes_[node.inputs[0]].value;
        const Tensor& b = nodes_[node.inputs[1]].value;
        if (b.rank() == 1) {
          // adj has shape [m]; dA = adj b^T, dB = A^T adj
          Tensor da({a.dim(0), a.dim(1)});
          for (std::size_t i = 0; i < a.dim(0); ++i)
            for (std::size_t j = 0; j < a.dim(1); ++j) da(i, j) = adj(i) * b(j);
          accumulate(node.inputs[0], da);
          accumulate(node.inputs[1], hl::matmul(hl::transpose(a), adj));
        } else {
          accumulate(node.inputs[0], hl::matmul(adj, hl::transpose(b)));
          accumulate(node.inputs[1], hl::matmul(hl::transpose(a), adj));
        }
        break;
      }
      case OpKind::add: {
        const Tensor& a = nodes_[node.inputs[0]].value;
        const Tensor& b = nodes_[node.inputs[1]].value;
        accumulate(node.inputs[0], adj);
        if (a.rank() == 2 && b.rank() == 1) {
          Tensor db({b.dim(0)});
          for (std::size_t i = 0; i < a.dim(0); ++i)
            for (std::size_t j = 0; j < a.dim(1); ++j) db(j) += adj(i, j);
          accumulate(node.inputs[1], db);
        } else {
          accumulate(node.inputs[1], adj);
        }
        break;
      }
      case OpKind::hadamard: {
        accumulate(node.inputs[0], hl::hadamard(adj, nodes_[node.inputs[1]].value));
        accumulate(node.inputs[1], hl::hadamard(adj, nodes_[node.inputs[0]].value));
        break;
      }
      case OpKind::concat: {
        std::size_t off = 0;
        for (NodeId p : node.inputs) {
          const std::size_t len = nodes_[p].value.size();
          accumulate(p, hl::slice(adj, off, len));
          off += len;
        }
        break;
      }
      case OpKind::tanh_op: {
        Tensor da(node.value.shape());
        for (std::size_t i = 0; i < da.size(); ++i)
          da(i) = adj(i) * (1.0 - node.value(i) * node.value(i));
        accumulate(node.inputs[0], da);
        break;
      }
      case OpKind::relu: {
        const Tensor& x = nodes_[node.inputs[0]].value;
        Tensor da(x.shape());
        for (std::size_t i = 0; i < da.size(); ++i) da(i) = x(i) > 0.0 ? adj(i) : 0.0;
        accumulate(node.inputs[0], da);
        break;
      }
      case OpKind::identity:
      case OpKind::reshape: {
        accumulate(node.inputs[0], hl::reshape(adj, nodes_[node.inputs[0]].value.shape()));
        break;
      }
      case OpKind::scale: {
        accumulate(node.inputs[0], hl::scale(adj, node.aux));
        break;
      }
      case OpKind::softmax: {
        const Tensor& y = node.value;
        double gy = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) gy += adj(i) * y(i);
        Tensor da(y.shape());
        for (std::size_t i = 0; i < y.size(); ++i) da(i) = y(i) * (adj(i) - gy);
        accumulate(node.inputs[0], da);
        break;
      }
      case OpKind::softmax_cross_entropy: {
        const Tensor& x = nodes_[node.inputs[0]].value;
        const Tensor& t = nodes_[node.inputs[1]].value;
        const double g0 = adj(0);
        Tensor dx(x.shape());
        Tensor dt(t.shape());
        const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
        const std::size_t cols = x.rank() == 2 ? x.dim(1) : x.dim(0);
        const double rs = g0 / static_cast<double>(rows);
        std::vector<double> p(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          auto xr = x.data().subspan(r * cols, cols);
          auto tr = t.data().subspan(r * cols, cols);
          softmax_row(xr, p);
          double tmass = 0.0;
          for (std::size_t j = 0; j < cols; ++j) tmass += tr[j];
          for (std::size_t j = 0; j < cols; ++j)
            dx.data()[r * cols + j] = rs * (tmass * p[j] - tr[j]);
          // d/dt of (lse * sum(t) - t . x)
          double sum = 0.0, mx = xr[0];
          for (double v : xr) mx = std::max(mx, v);
          for (double v : xr) sum += std::exp(v - mx);
          const double lse = std::log(sum) + mx;
          for (std::size_t j = 0; j < cols; ++j) dt.data()[r * cols + j] = rs * (lse - xr[j]);
        }
        accumulate(node.inputs[0], dx);
        accumulate(node.inputs[1], dt);
        break;
      }
      case OpKind::mse: {
        const Tensor& y = nodes_[node.inputs[0]].value;
        const Tensor& t = nodes_[node.inputs[1]].value;
        const double g0 = adj(0);
        const double rs = y.rank() == 2 ? g0 / static_cast<double>(y.dim(0)) : g0;
        Tensor dy(y.shape());
        for (std::size_t i = 0; i < y.size(); ++i) dy(i) = rs * (y(i) - t(i));
        accumulate(node.inputs[0], dy);
        accumulate(node.inputs[1], hl::neg(dy));
        break;
      }
      case OpKind::slice: {
        Tensor da(nodes_[node.inputs[0]].value.shape());
        for (std::size_t i = 0; i < node.len; ++i) da(node.offset + i) = adj(i);
        accumulate(node.inputs[0], da);
        break;
      }
      case OpKind::transpose: {
        accumulate(node.inputs[0], hl::transpose(adj));
        break;
      }
      case OpKind::dot: {
        const double g0 = adj(0);
        accumulate(node.inputs[0], hl::scale(nodes_[node.inputs[1]].value, g0));
        accumulate(node.inputs[1], hl::scale(nodes_[node.inputs[0]].value, g0));
        break;
      }
    }
  }
  return g;
}

NodeId forward_op(Tape& tape, OpKind op, const std::vector<NodeId>& inputs, double aux) {
  auto arity = [&](std::size_t n) {
    require(inputs.size() == n, "forward_op: wrong number of inputs");
  };
  switch (op) {
    case OpKind::matmul: arity(2); return tape.matmul(inputs[0], inputs[1]);
    case OpKind::add: arity(2); return tape.add(inputs[0], inputs[1]);
    case OpKind::hadamard: arity(2); return tape.hadamard(inputs[0], inputs[1]);
    case OpKind::concat: return tape.concat(inputs);
    case OpKind::tanh_op: arity(1); return tape.tanh(inputs[0]);
    case OpKind::relu: arity(1); return tape.relu(inputs[0]);
    case OpKind::identity: arity(1); return tape.identity(inputs[0]);
    case OpKind::scale: arity(1); return tape.scale(inputs[0], aux);
    case OpKind::softmax: arity(1); return tape.softmax(inputs[0]);
    case OpKind::softmax_cross_entropy:
      arity(2);
      return tape.softmax_cross_entropy(inputs[0], inputs[1]);
    case OpKind::mse: arity(2); return tape.mse(inputs[0], inputs[1]);
    case OpKind::dot: arity(2); return tape.dot(inputs[0], inputs[1]);
    default: throw Error("forward_op: kind requires dedicated arguments");
  }
}

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f,
                                  const Tensor& x, double step) {
  if (step <= 0.0) throw Error("finite_difference_gradient: step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe(i) = x(i) + step;
    const double fp = f(probe);
    probe(i) = x(i) - step;
    const double fm = f(probe);
    probe(i) = x(i);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw Error("finite_difference_gradient: non-finite function value");
    grad(i) = (fp - fm) / (2.0 * step);
  }
  return grad;
}

}  // namespace hl

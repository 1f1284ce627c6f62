#pragma once

// Finite-difference checks shared by the unit suite and the acceptance run.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "dhaug/autodiff.hpp"
#include "dhaug/constraint.hpp"
#include "dhaug/features.hpp"
#include "dhaug/nn.hpp"
#include "dhaug/oracles.hpp"
#include "dhaug/pose_ops.hpp"

namespace dhaug::test {

using ad::Tape;
using ad::Tensor;
using ad::Var;

struct GradCase {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<Var(Tape&, const std::vector<Var>&)> f;
};

struct GradResult {
  std::string name;
  double error = 0.0;  // worst normwise relative error over inputs
};

inline Tensor uniform(std::mt19937_64& rng, long r, long c, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (long k = 0; k < t.size(); ++k) t.data()[k] = u(rng);
  return t;
}

/// Reduces the op output against fixed random weights, so every output entry
/// reaches the scalar with a distinct coefficient.
inline GradResult check_case(const GradCase& c, std::mt19937_64& rng) {
  Tensor weights;
  auto eval = [&](const std::vector<Tensor>& in, Tape& tape, std::vector<Var>& vars) {
    vars.clear();
    for (const Tensor& t : in) vars.push_back(tape.leaf(t));
    Var out = c.f(tape, vars);
    if (weights.size() == 0) weights = uniform(rng, out.rows(), out.cols(), 0.5, 1.5);
    return ad::sum(ad::mul_const(out, weights));
  };
  Tape tape;
  std::vector<Var> vars;
  Var loss = eval(c.inputs, tape, vars);
  tape.backward(loss);
  GradResult res{c.name, 0.0};
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    const Tensor analytic = vars[i].grad();
    auto f = [&](const Tensor& x) {
      std::vector<Tensor> in = c.inputs;
      in[i] = x;
      Tape t;
      std::vector<Var> v;
      return eval(in, t, v).value()(0, 0);
    };
    const Tensor numeric = oracle::numeric_gradient(f, c.inputs[i]);
    res.error = std::max(res.error, oracle::relative_error(analytic, numeric));
  }
  return res;
}

/// Every differentiable op of the graph library and the pose ops.
inline std::vector<GradCase> op_cases(std::mt19937_64& rng) {
  std::vector<GradCase> cs;
  const Tensor a = uniform(rng, 3, 4), b = uniform(rng, 3, 4), row = uniform(rng, 1, 4), col = uniform(rng, 3, 1);
  cs.push_back({"add", {a, b}, [](Tape&, const std::vector<Var>& v) { return ad::add(v[0], v[1]); }});
  cs.push_back({"add_broadcast_row", {a, row}, [](Tape&, const std::vector<Var>& v) { return ad::add(v[0], v[1]); }});
  cs.push_back({"sub_broadcast_col", {col, a}, [](Tape&, const std::vector<Var>& v) { return ad::sub(v[0], v[1]); }});
  cs.push_back({"mul", {a, b}, [](Tape&, const std::vector<Var>& v) { return ad::mul(v[0], v[1]); }});
  cs.push_back({"mul_broadcast", {a, col}, [](Tape&, const std::vector<Var>& v) { return ad::mul(v[0], v[1]); }});
  cs.push_back({"neg", {a}, [](Tape&, const std::vector<Var>& v) { return ad::neg(v[0]); }});
  cs.push_back({"scale", {a}, [](Tape&, const std::vector<Var>& v) { return ad::scale(v[0], -2.5); }});
  cs.push_back({"add_scalar", {a}, [](Tape&, const std::vector<Var>& v) { return ad::add_scalar(v[0], 0.7); }});
  const Tensor sr = uniform(rng, 1, 4), sh = uniform(rng, 1, 4);
  cs.push_back({"col_affine", {a}, [sr, sh](Tape&, const std::vector<Var>& v) { return ad::col_affine(v[0], sr, sh); }});
  const Tensor cst = uniform(rng, 3, 4);
  cs.push_back({"mul_const", {a}, [cst](Tape&, const std::vector<Var>& v) { return ad::mul_const(v[0], cst); }});
  cs.push_back({"matmul", {a, uniform(rng, 4, 5)}, [](Tape&, const std::vector<Var>& v) { return ad::matmul(v[0], v[1]); }});
  cs.push_back({"matmul_bt", {a, uniform(rng, 5, 4)}, [](Tape&, const std::vector<Var>& v) { return ad::matmul_bt(v[0], v[1]); }});
  cs.push_back({"transpose", {a}, [](Tape&, const std::vector<Var>& v) { return ad::transpose(v[0]); }});
  cs.push_back({"tanh", {a}, [](Tape&, const std::vector<Var>& v) { return ad::tanh(v[0]); }});
  cs.push_back({"leaky_relu", {a}, [](Tape&, const std::vector<Var>& v) { return ad::leaky_relu(v[0], 0.2); }});
  cs.push_back({"square", {a}, [](Tape&, const std::vector<Var>& v) { return ad::square(v[0]); }});
  cs.push_back({"sqrt", {uniform(rng, 3, 4, 0.2, 2.0)}, [](Tape&, const std::vector<Var>& v) { return ad::sqrt(v[0]); }});
  cs.push_back({"sum", {a}, [](Tape&, const std::vector<Var>& v) { return ad::sum(v[0]); }});
  cs.push_back({"mean", {a}, [](Tape&, const std::vector<Var>& v) { return ad::mean(v[0]); }});
  cs.push_back({"row_sum", {a}, [](Tape&, const std::vector<Var>& v) { return ad::row_sum(v[0]); }});
  cs.push_back({"concat_cols", {a, col}, [](Tape&, const std::vector<Var>& v) { return ad::concat_cols({v[0], v[1], v[0]}); }});
  cs.push_back({"take_cols", {a}, [](Tape&, const std::vector<Var>& v) { return ad::take_cols(v[0], {3, 0, 3}); }});
  cs.push_back({"take_rows", {a}, [](Tape&, const std::vector<Var>& v) { return ad::take_rows(v[0], {2, 2, 1}); }});
  cs.push_back({"reshape", {a}, [](Tape&, const std::vector<Var>& v) { return ad::reshape(v[0], 2, 6); }});
  cs.push_back({"frame_diff", {uniform(rng, 6, 4)}, [](Tape&, const std::vector<Var>& v) { return ad::frame_diff(v[0], 3); }});
  const Tensor lo = uniform(rng, 1, 4, -2, -1), hi = uniform(rng, 1, 4, 1, 2);
  cs.push_back({"squash", {a}, [lo, hi](Tape&, const std::vector<Var>& v) { return ad::squash(v[0], lo, hi); }});

  const SkeletonTopology& topo = default_topology();
  Tensor params(2, kParamCount), globals(2, kGlobalCount);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int r = 0; r < 2; ++r) {
    std::vector<double> raw(kParamCount);
    for (double& x : raw) x = n(rng);
    const ParamVector p = squash_params(raw, default_constraint_table());
    for (int k = 0; k < kParamCount; ++k) params(r, k) = p[k];
    const double g[6] = {0.3 * n(rng), 0.3 * n(rng), 0.3 * n(rng), 0.2 * n(rng), 0.1 * n(rng), 5.0};
    for (int k = 0; k < kGlobalCount; ++k) globals(r, k) = g[k];
  }
  cs.push_back({"fk", {params, globals}, [&topo](Tape&, const std::vector<Var>& v) { return fk_op(topo, v[0], v[1]); }});
  Tensor poses(2, 3 * kKeypointCount);
  for (int r = 0; r < 2; ++r) {
    std::vector<double> p(params.row(r).data(), params.row(r).data() + kParamCount);
    pose_to_row(forward_kinematics(topo, ParamVector(p), GlobalTransform::from_array(std::vector<double>(globals.row(r).data(), globals.row(r).data() + 6))), poses.row(r).data());
  }
  cs.push_back({"project_px", {poses}, [](Tape&, const std::vector<Var>& v) { return project_op(v[0], default_camera(), false); }});
  cs.push_back({"project_normalized", {poses}, [](Tape&, const std::vector<Var>& v) { return project_op(v[0], default_camera(), true); }});
  static const AdjacentBonePairs pairs = adjacent_bone_pairs(topo);
  cs.push_back({"cosine", {poses}, [](Tape&, const std::vector<Var>& v) { return cosine_op(v[0], pairs); }});
  return cs;
}

/// Flattens every weight of `net` into one 1 x n row and back.
inline Tensor flatten(nn::Mlp& net) {
  std::vector<double> flat;
  for (Tensor* t : net.parameters()) flat.insert(flat.end(), t->data(), t->data() + t->size());
  Tensor out(1, static_cast<long>(flat.size()));
  for (std::size_t k = 0; k < flat.size(); ++k) out(0, static_cast<long>(k)) = flat[k];
  return out;
}

inline void unflatten(nn::Mlp& net, const Tensor& flat) {
  long k = 0;
  for (Tensor* t : net.parameters()) {
    for (long i = 0; i < t->size(); ++i) t->data()[i] = flat(0, k++);
  }
}

inline Tensor concat_grads(const std::vector<Tensor>& gs) {
  long n = 0;
  for (const Tensor& g : gs) n += g.size();
  Tensor out(1, n);
  long k = 0;
  for (const Tensor& g : gs) {
    for (long i = 0; i < g.size(); ++i) out(0, k++) = g.data()[i];
  }
  return out;
}

/// Gradient of sum(critic(x) * w) with respect to weights and input of a
/// three-layer critic.
inline GradResult check_critic(std::mt19937_64& rng, nn::Activation hidden) {
  nn::Mlp net = nn::Mlp::create({6, 8, 8, 1}, hidden, nn::Activation::identity, rng);
  for (Tensor* t : net.parameters()) *t += uniform(rng, t->rows(), t->cols(), -0.1, 0.1);
  const Tensor x = uniform(rng, 5, 6);
  const Tensor w = uniform(rng, 5, 1, 0.5, 1.5);
  auto loss = [&](nn::Mlp& m, const Tensor& in, Tape& tape, nn::BoundMlp& bound, Var& xv) {
    bound = nn::bind(tape, m);
    xv = tape.leaf(in);
    return ad::sum(ad::mul_const(nn::mlp_forward(bound, xv), w));
  };
  Tape tape;
  nn::BoundMlp bound;
  Var xv;
  tape.backward(loss(net, x, tape, bound, xv));
  const Tensor gw = concat_grads(nn::gradients(bound));
  const Tensor gx = xv.grad();
  const Tensor flat = flatten(net);
  auto fw = [&](const Tensor& p) {
    nn::Mlp m = net;
    unflatten(m, p);
    Tape t;
    nn::BoundMlp b;
    Var v;
    return loss(m, x, t, b, v).value()(0, 0);
  };
  auto fx = [&](const Tensor& in) {
    Tape t;
    nn::BoundMlp b;
    Var v;
    return loss(net, in, t, b, v).value()(0, 0);
  };
  GradResult r{std::string("critic_3layer_") + nn::activation_name(hidden), 0.0};
  r.error = std::max(oracle::relative_error(gw, oracle::numeric_gradient(fw, flat)),
                     oracle::relative_error(gx, oracle::numeric_gradient(fx, x)));
  return r;
}

/// Gradient of the gradient penalty (built from the analytic input gradient)
/// with respect to the critic weights and the interpolated input.
inline GradResult check_double_backprop(std::mt19937_64& rng, nn::Activation hidden) {
  nn::Mlp net = nn::Mlp::create({6, 8, 8, 1}, hidden, nn::Activation::identity, rng);
  for (Tensor* t : net.parameters()) *t += uniform(rng, t->rows(), t->cols(), -0.1, 0.1);
  const Tensor x = uniform(rng, 5, 6);
  auto gp = [&](nn::Mlp& m, const Tensor& in, Tape& tape, nn::BoundMlp& bound, Var& xv) {
    bound = nn::bind(tape, m);
    xv = tape.leaf(in);
    nn::MlpTrace trace;
    nn::mlp_forward(bound, xv, &trace);
    return nn::gradient_penalty(nn::input_gradient(bound, trace), 10.0);
  };
  Tape tape;
  nn::BoundMlp bound;
  Var xv;
  tape.backward(gp(net, x, tape, bound, xv));
  const Tensor gw = concat_grads(nn::gradients(bound));
  const Tensor gx = xv.grad();
  auto fw = [&](const Tensor& p) {
    nn::Mlp m = net;
    unflatten(m, p);
    Tape t;
    nn::BoundMlp b;
    Var v;
    return gp(m, x, t, b, v).value()(0, 0);
  };
  auto fx = [&](const Tensor& in) {
    Tape t;
    nn::BoundMlp b;
    Var v;
    return gp(net, in, t, b, v).value()(0, 0);
  };
  GradResult r{std::string("double_backprop_") + nn::activation_name(hidden), 0.0};
  r.error = std::max(oracle::relative_error(gw, oracle::numeric_gradient(fw, flatten(net))),
                     oracle::relative_error(gx, oracle::numeric_gradient(fx, x)));
  return r;
}

}  // namespace dhaug::test

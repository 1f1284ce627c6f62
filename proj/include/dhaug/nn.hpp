#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "dhaug/autodiff.hpp"

namespace dhaug::nn {

using ad::Tensor;
using ad::Var;

enum class Activation { identity, tanh, leaky_relu };

inline constexpr double kLeakySlope = 0.2;

const char* activation_name(Activation a);
/// Throws InvalidArgument for an unknown tag.
Activation activation_from_name(const std::string& name);

struct Layer {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out
  Activation activation = Activation::identity;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers);

  /// Glorot-uniform weights, zero biases. `dims` lists every width, input first.
  static Mlp create(const std::vector<int>& dims, Activation hidden, Activation output,
                    std::mt19937_64& rng);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  int in_dim() const;
  int out_dim() const;
  std::size_t parameter_count() const;
  void set_zero();

  /// Weight and bias tensors in a fixed order (w0, b0, w1, b1, ...).
  std::vector<Tensor*> parameters();

 private:
  std::vector<Layer> layers_;
};

/// An Mlp whose weights live on a tape.
struct BoundLayer {
  Var weight;
  Var bias;
  Activation activation = Activation::identity;
};
struct BoundMlp {
  std::vector<BoundLayer> layers;
};

BoundMlp bind(ad::Tape& tape, const Mlp& net, bool requires_grad = true);

/// Per-layer activations kept for the analytic input gradient.
struct MlpTrace {
  std::vector<Var> pre;   // z_l = h_{l-1} W_l + b_l
  std::vector<Var> post;  // h_l = act(z_l)
};

Var mlp_forward(const BoundMlp& net, Var x, MlpTrace* trace = nullptr);
Tensor mlp_forward(const Mlp& net, const Tensor& x);

/// Vector-Jacobian product upstream * d(out)/d(x), built from graph ops so the
/// result stays differentiable in the weights.
Var mlp_vjp(const BoundMlp& net, const MlpTrace& trace, Var upstream);

/// Gradient of each row's scalar output with respect to that row's input.
Var input_gradient(const BoundMlp& net, const MlpTrace& trace);

/// alpha * mean over rows of (||grad||_2 - 1)^2, given per-row input gradients.
Var gradient_penalty(Var input_grad, double alpha);

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One Adam update of `params` in place. Moments are allocated on first use.
void adam_step(AdamState& state, const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

/// Gradients of the bound weights in `parameters()` order.
std::vector<Tensor> gradients(const BoundMlp& net);

struct Checkpoint {
  std::map<std::string, Mlp> nets;
  /// Free-form JSON object stored in the header (seed, mode, frames, ...).
  std::string meta_json = "{}";
};

/// Text header line, one JSON line, then the weights as little-endian float32.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dhaug::nn

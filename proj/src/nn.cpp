#include "dhaug/nn.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "dhaug/errors.hpp"
#include "json.hpp"

namespace dhaug::nn {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::leaky_relu: return "leaky_relu";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh;
  if (name == "leaky_relu") return Activation::leaky_relu;
  throw InvalidArgument("unsupported activation '" + name + "'");
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidArgument("mlp needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) {
      throw ShapeError("mlp layer " + std::to_string(i) + " bias", l.bias.rows(), l.bias.cols(), 1,
                       l.weight.cols());
    }
    if (i > 0 && layers_[i - 1].weight.cols() != l.weight.rows()) {
      throw ShapeError("mlp layers do not chain", layers_[i - 1].weight.rows(),
                       layers_[i - 1].weight.cols(), l.weight.rows(), l.weight.cols());
    }
    if (!l.weight.allFinite() || !l.bias.allFinite()) throw InvalidArgument("mlp weights not finite");
  }
}

Mlp Mlp::create(const std::vector<int>& dims, Activation hidden, Activation output,
                std::mt19937_64& rng) {
  if (dims.size() < 2) throw InvalidArgument("mlp needs an input and an output width");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] <= 0 || dims[i + 1] <= 0) throw InvalidArgument("mlp widths must be positive");
    const double s = std::sqrt(6.0 / (dims[i] + dims[i + 1]));
    std::uniform_real_distribution<double> u(-s, s);
    Layer l;
    l.weight.resize(dims[i], dims[i + 1]);
    for (long k = 0; k < l.weight.size(); ++k) l.weight.data()[k] = u(rng);
    l.bias = Tensor::Zero(1, dims[i + 1]);
    l.activation = i + 2 == dims.size() ? output : hidden;
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers));
}

int Mlp::in_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.rows()); }
int Mlp::out_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.cols()); }

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

void Mlp::set_zero() {
  for (Layer& l : layers_) {
    l.weight.setZero();
    l.bias.setZero();
  }
}

std::vector<Tensor*> Mlp::parameters() {
  std::vector<Tensor*> out;
  for (Layer& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

BoundMlp bind(ad::Tape& tape, const Mlp& net, bool requires_grad) {
  BoundMlp b;
  for (const Layer& l : net.layers()) {
    b.layers.push_back({tape.leaf(l.weight, requires_grad), tape.leaf(l.bias, requires_grad), l.activation});
  }
  return b;
}

namespace {

Var activate(Var z, Activation a) {
  switch (a) {
    case Activation::identity: return z;
    case Activation::tanh: return ad::tanh(z);
    case Activation::leaky_relu: return ad::leaky_relu(z, kLeakySlope);
  }
  throw InvalidArgument("unsupported activation");
}

Tensor activate(const Tensor& z, Activation a) {
  switch (a) {
    case Activation::identity: return z;
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::leaky_relu: return (z.array() > 0.0).select(z.array(), kLeakySlope * z.array()).matrix();
  }
  throw InvalidArgument("unsupported activation");
}

}  // namespace

Var mlp_forward(const BoundMlp& net, Var x, MlpTrace* trace) {
  if (net.layers.empty()) throw InvalidArgument("mlp_forward: empty network");
  const long in = net.layers.front().weight.rows();
  if (x.cols() != in) throw ShapeError("mlp_forward input", x.rows(), x.cols(), x.rows(), in);
  Var h = x;
  for (const BoundLayer& l : net.layers) {
    Var z = ad::add(ad::matmul(h, l.weight), l.bias);
    h = activate(z, l.activation);
    if (trace) {
      trace->pre.push_back(z);
      trace->post.push_back(h);
    }
  }
  return h;
}

Tensor mlp_forward(const Mlp& net, const Tensor& x) {
  if (net.layers().empty()) throw InvalidArgument("mlp_forward: empty network");
  if (x.cols() != net.in_dim()) throw ShapeError("mlp_forward input", x.rows(), x.cols(), x.rows(), net.in_dim());
  Tensor h = x;
  for (const Layer& l : net.layers()) {
    Tensor z = h * l.weight;
    z.rowwise() += l.bias.row(0);
    h = activate(z, l.activation);
  }
  return h;
}

Var mlp_vjp(const BoundMlp& net, const MlpTrace& trace, Var upstream) {
  if (trace.pre.size() != net.layers.size()) throw InvalidArgument("mlp_vjp: trace does not match network");
  Var g = upstream;
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const BoundLayer& l = net.layers[k];
    switch (l.activation) {
      case Activation::identity:
        break;
      case Activation::tanh: {
        // d tanh = 1 - h^2, kept on the tape so it is differentiable in W
        Var h = trace.post[k];
        g = ad::sub(g, ad::mul(g, ad::square(h)));
        break;
      }
      case Activation::leaky_relu: {
        const Tensor& z = trace.pre[k].value();
        Tensor mask = (z.array() > 0.0).select(Tensor::Ones(z.rows(), z.cols()).array(), kLeakySlope).matrix();
        g = ad::mul_const(g, mask);
        break;
      }
    }
    g = ad::matmul_bt(g, l.weight);
  }
  return g;
}

Var input_gradient(const BoundMlp& net, const MlpTrace& trace) {
  if (trace.post.empty()) throw InvalidArgument("input_gradient: empty trace");
  const Var out = trace.post.back();
  if (out.cols() != 1) throw InvalidArgument("input_gradient needs one scalar output per row");
  ad::Tape& tape = *out.tape;
  return mlp_vjp(net, trace, tape.constant(Tensor::Ones(out.rows(), 1)));
}

Var gradient_penalty(Var input_grad, double alpha) {
  if (!(alpha >= 0.0)) throw InvalidArgument("gradient penalty weight must be >= 0");
  Var norm = ad::sqrt(ad::row_sum(ad::square(input_grad)));
  return ad::scale(ad::mean(ad::square(ad::add_scalar(norm, -1.0))), alpha);
}

void adam_step(AdamState& state, const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step parameter lists", static_cast<long>(params.size()), 1,
                     static_cast<long>(grads.size()), 1);
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::Zero(p->rows(), p->cols()));
      state.v.push_back(Tensor::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) throw InvalidArgument("adam_step: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i]->rows() || grads[i].cols() != params[i]->cols()) {
      throw ShapeError("adam_step", params[i]->rows(), params[i]->cols(), grads[i].rows(), grads[i].cols());
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i].cwiseProduct(grads[i]);
    const auto mhat = state.m[i].array() / c1;
    const auto vhat = state.v[i].array() / c2;
    params[i]->array() -= state.lr * mhat / (vhat.sqrt() + state.eps);
  }
}

std::vector<Tensor> gradients(const BoundMlp& net) {
  std::vector<Tensor> out;
  for (const BoundLayer& l : net.layers) {
    out.push_back(l.weight.grad());
    out.push_back(l.bias.grad());
  }
  return out;
}

namespace {

constexpr const char* kMagic = "DHAUG-CKPT 1";

void put_f32(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  const unsigned char b[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                              static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

double get_f32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError(path, 0, "checkpoint data truncated");
  const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (std::uint32_t(b[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  using nlohmann::json;
  json header;
  header["meta"] = json::parse(ckpt.meta_json);
  json nets = json::array();
  for (const auto& [name, net] : ckpt.nets) {
    json layers = json::array();
    for (const Layer& l : net.layers()) {
      layers.push_back({{"in", l.weight.rows()}, {"out", l.weight.cols()},
                        {"activation", activation_name(l.activation)}});
    }
    nets.push_back({{"name", name}, {"layers", layers}});
  }
  header["nets"] = nets;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << kMagic << "\n" << header.dump() << "\n";
  for (const auto& [name, net] : ckpt.nets) {
    for (const Layer& l : net.layers()) {
      for (long k = 0; k < l.weight.size(); ++k) put_f32(out, l.weight.data()[k]);
      for (long k = 0; k < l.bias.size(); ++k) put_f32(out, l.bias.data()[k]);
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  using nlohmann::json;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open checkpoint");
  std::string magic, line;
  std::getline(in, magic);
  if (magic != kMagic) throw ParseError(path, 1, "not a checkpoint file");
  std::getline(in, line);
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(path, 2, e.what());
  }
  Checkpoint ckpt;
  ckpt.meta_json = header.value("meta", json::object()).dump();
  try {
    for (const auto& n : header.at("nets")) {
      std::vector<Layer> layers;
      for (const auto& lj : n.at("layers")) {
        Layer l;
        const long rows = lj.at("in").get<long>(), cols = lj.at("out").get<long>();
        if (rows <= 0 || cols <= 0) throw ParseError(path, 2, "bad layer shape");
        l.weight.resize(rows, cols);
        l.bias.resize(1, cols);
        l.activation = activation_from_name(lj.at("activation").get<std::string>());
        layers.push_back(std::move(l));
      }
      ckpt.nets.emplace(n.at("name").get<std::string>(), Mlp());
      // weights follow in the same order as the header
      for (Layer& l : layers) {
        for (long k = 0; k < l.weight.size(); ++k) l.weight.data()[k] = get_f32(in, path);
        for (long k = 0; k < l.bias.size(); ++k) l.bias.data()[k] = get_f32(in, path);
      }
      ckpt.nets[n.at("name").get<std::string>()] = Mlp(std::move(layers));
    }
  } catch (const json::exception& e) {
    throw ParseError(path, 2, e.what());
  }
  return ckpt;
}

}  // namespace dhaug::nn

#include "dhaug/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "dhaug/errors.hpp"

namespace dhaug::ad {

const Tensor& Var::value() const { return tape->value(id); }
Tensor Var::grad() const { return tape->grad(id); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = requires_grad ? "param" : "const";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(std::string_view op, Tensor value, std::vector<int> inputs, BackwardFn fn) {
  Node n;
  n.op = std::string(op);
  n.value = std::move(value);
  for (int i : inputs) {
    if (i < 0 || i >= static_cast<int>(nodes_.size())) {
      throw InvalidArgument("tape: input node out of range");
    }
    n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::grad(int id) const {
  const Node& n = nodes_.at(id);
  if (n.grad.size() == 0) return Tensor::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(int id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
    throw ShapeError("gradient accumulation for " + n.op, g.rows(), g.cols(), n.value.rows(),
                     n.value.cols());
  }
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad.resize(0, 0);
}

void Tape::backward(Var out) {
  if (out.tape != this) throw InvalidArgument("backward: variable belongs to another tape");
  const Tensor& v = value(out.id);
  if (v.rows() != 1 || v.cols() != 1) {
    throw InvalidArgument("backward needs a scalar output, got " + std::to_string(v.rows()) + "x" +
                          std::to_string(v.cols()));
  }
  zero_grad();
  if (!nodes_[out.id].requires_grad) return;
  nodes_[out.id].grad = Tensor::Ones(1, 1);
  for (int id = out.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.backward && n.grad.size() != 0) n.backward(*this, n.grad);
  }
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw InvalidArgument("variables from different tapes");
  return *a.tape;
}

long broadcast_dim(long x, long y, const char* op, const Tensor& a, const Tensor& b) {
  if (x == y || y == 1) return x;
  if (x == 1) return y;
  throw ShapeError(op, a.rows(), a.cols(), b.rows(), b.cols());
}

Tensor expand(const Tensor& t, long rows, long cols) {
  if (t.rows() == rows && t.cols() == cols) return t;
  return t.replicate(rows / t.rows(), cols / t.cols());
}

/// Sums a broadcast gradient back down to the input's shape.
Tensor reduce_to(const Tensor& g, long rows, long cols) {
  Tensor r = g;
  if (rows == 1 && r.rows() != 1) r = Tensor(r.colwise().sum());
  if (cols == 1 && r.cols() != 1) r = Tensor(r.rowwise().sum());
  return r;
}

enum class BinOp { add, sub, mul };

Var binary(Var a, Var b, BinOp kind, const char* name) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const long rows = broadcast_dim(av.rows(), bv.rows(), name, av, bv);
  const long cols = broadcast_dim(av.cols(), bv.cols(), name, av, bv);
  Tensor ae = expand(av, rows, cols);
  Tensor be = expand(bv, rows, cols);
  Tensor out;
  switch (kind) {
    case BinOp::add: out = ae + be; break;
    case BinOp::sub: out = ae - be; break;
    case BinOp::mul: out = ae.cwiseProduct(be); break;
  }
  const int ia = a.id, ib = b.id;
  const long ar = av.rows(), ac = av.cols(), br = bv.rows(), bc = bv.cols();
  BackwardFn fn;
  if (kind == BinOp::mul) {
    fn = [ia, ib, ar, ac, br, bc, ae, be](Tape& tp, const Tensor& g) {
      tp.accumulate(ia, reduce_to(g.cwiseProduct(be), ar, ac));
      tp.accumulate(ib, reduce_to(g.cwiseProduct(ae), br, bc));
    };
  } else {
    const double sb = kind == BinOp::add ? 1.0 : -1.0;
    fn = [ia, ib, ar, ac, br, bc, sb](Tape& tp, const Tensor& g) {
      tp.accumulate(ia, reduce_to(g, ar, ac));
      tp.accumulate(ib, reduce_to(sb * g, br, bc));
    };
  }
  return t.record(name, std::move(out), {ia, ib}, std::move(fn));
}

void check_row(const Tensor& row, long cols, const char* what) {
  if (row.rows() != 1 || row.cols() != cols) throw ShapeError(what, row.rows(), row.cols(), 1, cols);
}

}  // namespace

Var add(Var a, Var b) { return binary(a, b, BinOp::add, "add"); }
Var sub(Var a, Var b) { return binary(a, b, BinOp::sub, "sub"); }
Var mul(Var a, Var b) { return binary(a, b, BinOp::mul, "mul"); }

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  const int ia = a.id;
  return a.tape->record("scale", s * a.value(), {ia},
                        [ia, s](Tape& tp, const Tensor& g) { tp.accumulate(ia, s * g); });
}

Var add_scalar(Var a, double s) {
  const int ia = a.id;
  return a.tape->record("add_scalar", (a.value().array() + s).matrix(), {ia},
                        [ia](Tape& tp, const Tensor& g) { tp.accumulate(ia, g); });
}

Var col_affine(Var a, const Tensor& scale_row, const Tensor& shift_row) {
  const Tensor& v = a.value();
  check_row(scale_row, v.cols(), "col_affine scale");
  check_row(shift_row, v.cols(), "col_affine shift");
  Tensor out = v;
  for (long r = 0; r < v.rows(); ++r) {
    out.row(r) = v.row(r).cwiseProduct(scale_row) + shift_row;
  }
  const int ia = a.id;
  return a.tape->record("col_affine", std::move(out), {ia}, [ia, scale_row](Tape& tp, const Tensor& g) {
    Tensor ga = g;
    for (long r = 0; r < g.rows(); ++r) ga.row(r) = g.row(r).cwiseProduct(scale_row);
    tp.accumulate(ia, ga);
  });
}

Var mul_const(Var a, const Tensor& c) {
  if (c.rows() != a.rows() || c.cols() != a.cols()) {
    throw ShapeError("mul_const", a.rows(), a.cols(), c.rows(), c.cols());
  }
  const int ia = a.id;
  return a.tape->record("mul_const", a.value().cwiseProduct(c), {ia},
                        [ia, c](Tape& tp, const Tensor& g) { tp.accumulate(ia, g.cwiseProduct(c)); });
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) throw ShapeError("matmul", a.rows(), a.cols(), b.rows(), b.cols());
  const int ia = a.id, ib = b.id;
  return t.record("matmul", a.value() * b.value(), {ia, ib}, [ia, ib](Tape& tp, const Tensor& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib).transpose());
    if (tp.requires_grad(ib)) tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
}

Var matmul_bt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.cols()) throw ShapeError("matmul_bt", a.rows(), a.cols(), b.rows(), b.cols());
  const int ia = a.id, ib = b.id;
  return t.record("matmul_bt", a.value() * b.value().transpose(), {ia, ib},
                  [ia, ib](Tape& tp, const Tensor& g) {
                    if (tp.requires_grad(ia)) tp.accumulate(ia, g * tp.value(ib));
                    if (tp.requires_grad(ib)) tp.accumulate(ib, g.transpose() * tp.value(ia));
                  });
}

Var transpose(Var a) {
  const int ia = a.id;
  return a.tape->record("transpose", a.value().transpose(), {ia},
                        [ia](Tape& tp, const Tensor& g) { tp.accumulate(ia, g.transpose()); });
}

Var tanh(Var a) {
  Tensor out = a.value().array().tanh().matrix();
  const int ia = a.id;
  return a.tape->record("tanh", out, {ia}, [ia, out](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, (g.array() * (1.0 - out.array().square())).matrix());
  });
}

Var leaky_relu(Var a, double slope) {
  const Tensor& v = a.value();
  Tensor mask = (v.array() > 0.0).select(Tensor::Ones(v.rows(), v.cols()).array(), slope).matrix();
  const int ia = a.id;
  return a.tape->record("leaky_relu", v.cwiseProduct(mask), {ia}, [ia, mask](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g.cwiseProduct(mask));
  });
}

Var square(Var a) {
  const int ia = a.id;
  return a.tape->record("square", a.value().array().square().matrix(), {ia},
                        [ia](Tape& tp, const Tensor& g) {
                          tp.accumulate(ia, (2.0 * g.array() * tp.value(ia).array()).matrix());
                        });
}

Var sqrt(Var a) {
  if ((a.value().array() < 0.0).any()) throw InvalidArgument("sqrt of a negative value");
  Tensor out = a.value().array().sqrt().matrix();
  const int ia = a.id;
  return a.tape->record("sqrt", out, {ia}, [ia, out](Tape& tp, const Tensor& g) {
    Tensor ga = (out.array() > 0.0).select(g.array() / (2.0 * out.array()), 0.0).matrix();
    tp.accumulate(ia, ga);
  });
}

Var sum(Var a) {
  Tensor out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id;
  const long r = a.rows(), c = a.cols();
  return a.tape->record("sum", std::move(out), {ia}, [ia, r, c](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, Tensor::Constant(r, c, g(0, 0)));
  });
}

Var mean(Var a) {
  const long n = a.value().size();
  if (n == 0) throw InvalidArgument("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_sum(Var a) {
  const int ia = a.id;
  const long c = a.cols();
  return a.tape->record("row_sum", Tensor(a.value().rowwise().sum()), {ia},
                        [ia, c](Tape& tp, const Tensor& g) { tp.accumulate(ia, g.replicate(1, c)); });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  const long rows = parts[0].rows();
  long cols = 0;
  std::vector<int> ids;
  std::vector<long> widths;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.rows() != rows) throw ShapeError("concat_cols", rows, cols, p.rows(), p.cols());
    ids.push_back(p.id);
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Tensor out(rows, cols);
  long at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return parts[0].tape->record("concat_cols", std::move(out), ids,
                               [ids, widths](Tape& tp, const Tensor& g) {
                                 long off = 0;
                                 for (std::size_t k = 0; k < ids.size(); ++k) {
                                   if (tp.requires_grad(ids[k])) {
                                     tp.accumulate(ids[k], Tensor(g.middleCols(off, widths[k])));
                                   }
                                   off += widths[k];
                                 }
                               });
}

Var take_cols(Var a, const std::vector<int>& cols) {
  const Tensor& v = a.value();
  Tensor out(v.rows(), static_cast<long>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (cols[k] < 0 || cols[k] >= v.cols()) throw InvalidArgument("take_cols: column out of range");
    out.col(static_cast<long>(k)) = v.col(cols[k]);
  }
  const int ia = a.id;
  const long r = v.rows(), c = v.cols();
  return a.tape->record("take_cols", std::move(out), {ia}, [ia, r, c, cols](Tape& tp, const Tensor& g) {
    Tensor ga = Tensor::Zero(r, c);
    for (std::size_t k = 0; k < cols.size(); ++k) ga.col(cols[k]) += g.col(static_cast<long>(k));
    tp.accumulate(ia, ga);
  });
}

Var take_rows(Var a, const std::vector<int>& rows) {
  const Tensor& v = a.value();
  Tensor out(static_cast<long>(rows.size()), v.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= v.rows()) throw InvalidArgument("take_rows: row out of range");
    out.row(static_cast<long>(k)) = v.row(rows[k]);
  }
  const int ia = a.id;
  const long r = v.rows(), c = v.cols();
  return a.tape->record("take_rows", std::move(out), {ia}, [ia, r, c, rows](Tape& tp, const Tensor& g) {
    Tensor ga = Tensor::Zero(r, c);
    for (std::size_t k = 0; k < rows.size(); ++k) ga.row(rows[k]) += g.row(static_cast<long>(k));
    tp.accumulate(ia, ga);
  });
}

Var reshape(Var a, long rows, long cols) {
  const Tensor& v = a.value();
  if (rows * cols != v.size()) throw ShapeError("reshape", v.rows(), v.cols(), rows, cols);
  Tensor out = Eigen::Map<const Tensor>(v.data(), rows, cols);
  const int ia = a.id;
  const long r = v.rows(), c = v.cols();
  return a.tape->record("reshape", std::move(out), {ia}, [ia, r, c](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, Tensor(Eigen::Map<const Tensor>(g.data(), r, c)));
  });
}

Var frame_diff(Var a, int frames) {
  const Tensor& v = a.value();
  if (frames < 2 || v.rows() % frames != 0) {
    throw InvalidArgument("frame_diff: " + std::to_string(v.rows()) + " rows do not split into blocks of " +
                          std::to_string(frames));
  }
  const long blocks = v.rows() / frames;
  Tensor out(blocks * (frames - 1), v.cols());
  for (long b = 0; b < blocks; ++b) {
    for (int t = 1; t < frames; ++t) {
      out.row(b * (frames - 1) + t - 1) = v.row(b * frames + t) - v.row(b * frames + t - 1);
    }
  }
  const int ia = a.id;
  const long r = v.rows(), c = v.cols();
  return a.tape->record("frame_diff", std::move(out), {ia},
                        [ia, r, c, blocks, frames](Tape& tp, const Tensor& g) {
                          Tensor ga = Tensor::Zero(r, c);
                          for (long b = 0; b < blocks; ++b) {
                            for (int t = 1; t < frames; ++t) {
                              const auto gr = g.row(b * (frames - 1) + t - 1);
                              ga.row(b * frames + t) += gr;
                              ga.row(b * frames + t - 1) -= gr;
                            }
                          }
                          tp.accumulate(ia, ga);
                        });
}

Var squash(Var a, const Tensor& lo_row, const Tensor& hi_row) {
  const Tensor& v = a.value();
  check_row(lo_row, v.cols(), "squash lower bounds");
  check_row(hi_row, v.cols(), "squash upper bounds");
  if (!v.allFinite()) throw InvalidArgument("squash: non-finite raw value");
  Tensor out(v.rows(), v.cols());
  Tensor deriv(v.rows(), v.cols());
  for (long r = 0; r < v.rows(); ++r) {
    for (long c = 0; c < v.cols(); ++c) {
      const double lo = lo_row(0, c), hi = hi_row(0, c);
      const double th = std::tanh(v(r, c));
      // the midpoint form is exact at raw = 0
      out(r, c) = std::clamp(0.5 * (lo + hi) + th * (hi - lo) / 2.0, lo, hi);
      deriv(r, c) = (1.0 - th * th) * (hi - lo) / 2.0;
    }
  }
  const int ia = a.id;
  return a.tape->record("squash", std::move(out), {ia}, [ia, deriv](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g.cwiseProduct(deriv));
  });
}

}  // namespace dhaug::ad

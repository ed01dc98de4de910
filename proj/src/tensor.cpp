#include "svlab/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <utility>

namespace svlab {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

CMap emap(const Tensor& t) { return CMap(t.data.data(), t.rows(), t.cols()); }
MMap emap(Tensor& t) { return MMap(t.data.data(), t.rows(), t.cols()); }

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Output shape for elementwise ops; each operand dim must equal the output
// dim or be 1.
std::pair<int, int> broadcast_shape(const Tensor& a, const Tensor& b,
                                    const char* op) {
  const int rows = std::max(a.rows(), b.rows());
  const int cols = std::max(a.cols(), b.cols());
  const bool ok = (a.rows() == rows || a.rows() == 1) &&
                  (a.cols() == cols || a.cols() == 1) &&
                  (b.rows() == rows || b.rows() == 1) &&
                  (b.cols() == cols || b.cols() == 1);
  if (!ok) {
    throw std::invalid_argument(std::string(op) + ": shapes not broadcastable: " +
                                a.shape_str() + " vs " + b.shape_str());
  }
  return {rows, cols};
}

double bc_at(const Tensor& t, int r, int c) {
  return t.at(t.rows() == 1 ? 0 : r, t.cols() == 1 ? 0 : c);
}

// Accumulates a full-shape gradient into a possibly-broadcast operand slot by
// summing over the broadcast dimensions.
void bc_accumulate(Tensor& slot, const Tensor& full) {
  for (int r = 0; r < full.rows(); ++r) {
    for (int c = 0; c < full.cols(); ++c) {
      slot.at(slot.rows() == 1 ? 0 : r, slot.cols() == 1 ? 0 : c) += full.at(r, c);
    }
  }
}

double rbf(const Tensor& xs, int i, const Tensor& ys, int j, double inv2bw2) {
  double d2 = 0.0;
  for (int c = 0; c < xs.cols(); ++c) {
    const double d = xs.at(i, c) - ys.at(j, c);
    d2 += d * d;
  }
  return std::exp(-d2 * inv2bw2);
}

}  // namespace

Tensor Tensor::from(std::vector<double> values, int rows, int cols) {
  check(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) == values.size(),
        "Tensor::from: value count does not match shape");
  Tensor t;
  t.shape = {rows, cols};
  t.data = std::move(values);
  return t;
}

double Tensor::item() const {
  check(size() == 1, "item: tensor is not scalar, shape " + shape_str());
  return data[0];
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  return std::to_string(rows()) + "x" + std::to_string(cols());
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  check(v.id >= 0 && v.id < static_cast<int>(nodes_.size()), "invalid tape handle");
  return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  check(value.rows() >= 1 && value.cols() >= 1, "leaf: empty tensor");
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::binary(Op op, Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  const char* name = op == Op::Add   ? "add"
                     : op == Op::Sub ? "sub"
                     : op == Op::Mul ? "mul"
                                     : "div";
  auto [rows, cols] = broadcast_shape(ta, tb, name);
  Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const double x = bc_at(ta, r, c);
      const double y = bc_at(tb, r, c);
      double out = 0.0;
      switch (op) {
        case Op::Add: out = x + y; break;
        case Op::Sub: out = x - y; break;
        case Op::Mul: out = x * y; break;
        default: out = x / y; break;
      }
      n.value.at(r, c) = out;
    }
  }
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) { return binary(Op::Add, a, b); }
Var Tape::sub(Var a, Var b) { return binary(Op::Sub, a, b); }
Var Tape::mul(Var a, Var b) { return binary(Op::Mul, a, b); }
Var Tape::div(Var a, Var b) { return binary(Op::Div, a, b); }

Var Tape::unary(Op op, Var a, double c) {
  const Tensor& ta = node(a).value;
  Node n;
  n.op = op;
  n.a = a.id;
  n.c = c;
  n.value = Tensor(ta.rows(), ta.cols());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    const double x = ta.data[i];
    double out = 0.0;
    switch (op) {
      case Op::Scale: out = x * c; break;
      case Op::AddConst: out = x + c; break;
      case Op::Tanh: out = std::tanh(x); break;
      case Op::Sigmoid: out = stable_sigmoid(x); break;
      case Op::Softplus: out = stable_softplus(x); break;
      case Op::Exp: out = std::exp(x); break;
      case Op::Log:
        if (x <= 0.0) {
          throw NumericalError("log: non-positive input " + std::to_string(x));
        }
        out = std::log(x);
        break;
      case Op::ClampMin: out = std::max(x, c); break;
      default: throw std::logic_error("unary: bad op");
    }
    n.value.data[i] = out;
  }
  return push(std::move(n));
}

Var Tape::scale(Var a, double c) { return unary(Op::Scale, a, c); }
Var Tape::add_const(Var a, double c) { return unary(Op::AddConst, a, c); }
Var Tape::tanh(Var a) { return unary(Op::Tanh, a); }
Var Tape::sigmoid(Var a) { return unary(Op::Sigmoid, a); }
Var Tape::softplus(Var a) { return unary(Op::Softplus, a); }
Var Tape::exp(Var a) { return unary(Op::Exp, a); }
Var Tape::log(Var a) { return unary(Op::Log, a); }
Var Tape::clamp_min(Var a, double floor) { return unary(Op::ClampMin, a, floor); }

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.cols() != tb.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ: " + ta.shape_str() +
                                " vs " + tb.shape_str());
  }
  Node n;
  n.op = Op::Matmul;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor(ta.rows(), tb.cols());
  emap(n.value).noalias() = emap(ta) * emap(tb);
  return push(std::move(n));
}

Var Tape::matmul_nt(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.cols() != tb.cols()) {
    throw std::invalid_argument("matmul_nt: inner dimensions differ: " + ta.shape_str() +
                                " vs " + tb.shape_str() + " (transposed)");
  }
  Node n;
  n.op = Op::MatmulNT;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor(ta.rows(), tb.rows());
  emap(n.value).noalias() = emap(ta) * emap(tb).transpose();
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  const Tensor& ta = node(a).value;
  Node n;
  n.op = Op::Sum;
  n.a = a.id;
  double total = 0.0;
  for (double v : ta.data) total += v;
  n.value = Tensor::scalar(total);
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  const Tensor& ta = node(a).value;
  Node n;
  n.op = Op::Mean;
  n.a = a.id;
  double total = 0.0;
  for (double v : ta.data) total += v;
  n.value = Tensor::scalar(total / static_cast<double>(ta.size()));
  return push(std::move(n));
}

Var Tape::sum_cols(Var a) {
  const Tensor& ta = node(a).value;
  Node n;
  n.op = Op::SumCols;
  n.a = a.id;
  n.value = Tensor(ta.rows(), 1);
  for (int r = 0; r < ta.rows(); ++r) {
    double total = 0.0;
    for (int c = 0; c < ta.cols(); ++c) total += ta.at(r, c);
    n.value.at(r, 0) = total;
  }
  return push(std::move(n));
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& ta = node(a).value;
  const Tensor& tb = node(b).value;
  if (ta.rows() != tb.rows()) {
    throw std::invalid_argument("concat_cols: row counts differ: " + ta.shape_str() +
                                " vs " + tb.shape_str());
  }
  Node n;
  n.op = Op::ConcatCols;
  n.a = a.id;
  n.b = b.id;
  n.i0 = ta.cols();
  n.value = Tensor(ta.rows(), ta.cols() + tb.cols());
  for (int r = 0; r < ta.rows(); ++r) {
    for (int c = 0; c < ta.cols(); ++c) n.value.at(r, c) = ta.at(r, c);
    for (int c = 0; c < tb.cols(); ++c) n.value.at(r, ta.cols() + c) = tb.at(r, c);
  }
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, int from, int len) {
  const Tensor& ta = node(a).value;
  check(from >= 0 && len > 0 && from + len <= ta.cols(),
        "slice_cols: range [" + std::to_string(from) + ", " + std::to_string(from + len) +
            ") out of bounds for " + ta.shape_str());
  Node n;
  n.op = Op::SliceCols;
  n.a = a.id;
  n.i0 = from;
  n.i1 = len;
  n.value = Tensor(ta.rows(), len);
  for (int r = 0; r < ta.rows(); ++r) {
    for (int c = 0; c < len; ++c) n.value.at(r, c) = ta.at(r, from + c);
  }
  return push(std::move(n));
}

Var Tape::gather_rows(Var table, std::vector<int> ids) {
  const Tensor& tt = node(table).value;
  check(!ids.empty(), "gather_rows: empty id list");
  for (int id : ids) {
    if (id < 0 || id >= tt.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(id) +
                              " out of range for table " + tt.shape_str());
    }
  }
  Node n;
  n.op = Op::GatherRows;
  n.a = table.id;
  n.value = Tensor(static_cast<int>(ids.size()), tt.cols());
  for (int r = 0; r < n.value.rows(); ++r) {
    for (int c = 0; c < tt.cols(); ++c) n.value.at(r, c) = tt.at(ids[r], c);
  }
  n.ids = std::move(ids);
  return push(std::move(n));
}

Var Tape::logsumexp_cols(Var a) {
  const Tensor& ta = node(a).value;
  Node n;
  n.op = Op::LogSumExpCols;
  n.a = a.id;
  n.value = Tensor(ta.rows(), 1);
  for (int r = 0; r < ta.rows(); ++r) {
    double m = ta.at(r, 0);
    for (int c = 1; c < ta.cols(); ++c) m = std::max(m, ta.at(r, c));
    double s = 0.0;
    for (int c = 0; c < ta.cols(); ++c) s += std::exp(ta.at(r, c) - m);
    n.value.at(r, 0) = m + std::log(s);
  }
  return push(std::move(n));
}

Var Tape::softmax_xent(Var logits, std::vector<int> targets, std::vector<double> mask) {
  const Tensor& tl = node(logits).value;
  check(static_cast<int>(targets.size()) == tl.rows(),
        "softmax_xent: target count does not match logit rows");
  check(mask.size() == targets.size(), "softmax_xent: mask count does not match targets");
  for (int t : targets) {
    if (t < 0 || t >= tl.cols()) {
      throw std::out_of_range("softmax_xent: target " + std::to_string(t) +
                              " out of range for logits " + tl.shape_str());
    }
  }
  Node n;
  n.op = Op::SoftmaxXent;
  n.a = logits.id;
  n.value = Tensor(tl.rows(), 1);
  n.saved = Tensor(tl.rows(), tl.cols());
  for (int r = 0; r < tl.rows(); ++r) {
    double m = tl.at(r, 0);
    for (int c = 1; c < tl.cols(); ++c) m = std::max(m, tl.at(r, c));
    double s = 0.0;
    for (int c = 0; c < tl.cols(); ++c) s += std::exp(tl.at(r, c) - m);
    const double log_z = m + std::log(s);
    for (int c = 0; c < tl.cols(); ++c) n.saved.at(r, c) = std::exp(tl.at(r, c) - log_z);
    n.value.at(r, 0) = (log_z - tl.at(r, targets[r])) * mask[r];
  }
  n.ids = std::move(targets);
  n.aux = std::move(mask);
  return push(std::move(n));
}

Var Tape::mmd_rbf(Var xs, Var ys, double bandwidth) {
  const Tensor& tx = node(xs).value;
  const Tensor& ty = node(ys).value;
  check(tx.cols() == ty.cols(), "mmd_rbf: sample dimensions differ: " + tx.shape_str() +
                                    " vs " + ty.shape_str());
  check(tx.rows() >= 2 && ty.rows() >= 2, "mmd_rbf: need at least two samples per side");
  check(bandwidth > 0.0, "mmd_rbf: bandwidth must be positive");
  const int nx = tx.rows();
  const int ny = ty.rows();
  const double inv2bw2 = 1.0 / (2.0 * bandwidth * bandwidth);
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < nx; ++j) {
      if (i != j) kxx += rbf(tx, i, tx, j, inv2bw2);
    }
  }
  for (int i = 0; i < ny; ++i) {
    for (int j = 0; j < ny; ++j) {
      if (i != j) kyy += rbf(ty, i, ty, j, inv2bw2);
    }
  }
  // The cross term is summed in value order so mmd(x,y) == mmd(y,x) exactly
  // (the multiset of kernel values is identical under argument swap).
  std::vector<double> cross;
  cross.reserve(static_cast<std::size_t>(nx) * ny);
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) cross.push_back(rbf(tx, i, ty, j, inv2bw2));
  }
  std::sort(cross.begin(), cross.end());
  for (double k : cross) kxy += k;
  Node n;
  n.op = Op::MmdRbf;
  n.a = xs.id;
  n.b = ys.id;
  n.c = bandwidth;
  n.value = Tensor::scalar(kxx / (static_cast<double>(nx) * (nx - 1)) +
                           kyy / (static_cast<double>(ny) * (ny - 1)) -
                           2.0 * kxy / (static_cast<double>(nx) * ny));
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

const Tensor& Tape::grad(Var v) const {
  const Node& n = node(v);
  check(n.grad.size() == n.value.size(), "grad: backward has not touched this node");
  return n.grad;
}

void Tape::backward(Var loss, bool accumulate) {
  Node& ln = nodes_.at(static_cast<std::size_t>(loss.id));
  check(ln.value.size() == 1, "backward: loss must be scalar, got " + ln.value.shape_str());

  // Interior buffers are always zeroed; accumulate preserves leaf gradients
  // only, so repeated backward calls sum parameter gradients without
  // double-counting intermediate flow.
  for (int id = 0; id <= loss.id; ++id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() != n.value.size()) {
      n.grad = Tensor(n.value.rows(), n.value.cols());
    } else if (!accumulate || n.op != Op::Leaf) {
      std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    }
  }

  // Mark the subgraph under the loss so untouched nodes are skipped.
  std::vector<char> reached(static_cast<std::size_t>(loss.id) + 1, 0);
  reached[static_cast<std::size_t>(loss.id)] = 1;
  for (int id = loss.id; id >= 0; --id) {
    if (!reached[static_cast<std::size_t>(id)]) continue;
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.a >= 0) reached[static_cast<std::size_t>(n.a)] = 1;
    if (n.b >= 0) reached[static_cast<std::size_t>(n.b)] = 1;
  }

  ln.grad.data[0] += 1.0;
  for (int id = loss.id; id >= 0; --id) {
    if (reached[static_cast<std::size_t>(id)]) backward_node(id);
  }
}

void Tape::backward_node(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.op == Op::Leaf) return;
  const Tensor& go = n.grad;
  Tensor& ga = nodes_[static_cast<std::size_t>(n.a)].grad;
  const Tensor& va = nodes_[static_cast<std::size_t>(n.a)].value;

  switch (n.op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      Tensor& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      const Tensor& vb = nodes_[static_cast<std::size_t>(n.b)].value;
      Tensor da(go.rows(), go.cols());
      Tensor db(go.rows(), go.cols());
      for (int r = 0; r < go.rows(); ++r) {
        for (int c = 0; c < go.cols(); ++c) {
          const double g = go.at(r, c);
          const double x = bc_at(va, r, c);
          const double y = bc_at(vb, r, c);
          switch (n.op) {
            case Op::Add:
              da.at(r, c) = g;
              db.at(r, c) = g;
              break;
            case Op::Sub:
              da.at(r, c) = g;
              db.at(r, c) = -g;
              break;
            case Op::Mul:
              da.at(r, c) = g * y;
              db.at(r, c) = g * x;
              break;
            default:
              da.at(r, c) = g / y;
              db.at(r, c) = -g * x / (y * y);
              break;
          }
        }
      }
      bc_accumulate(ga, da);
      bc_accumulate(gb, db);
      break;
    }
    case Op::Scale:
      for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i] * n.c;
      break;
    case Op::AddConst:
      for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i];
      break;
    case Op::Matmul: {
      Tensor& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      const Tensor& vb = nodes_[static_cast<std::size_t>(n.b)].value;
      emap(ga).noalias() += emap(go) * emap(vb).transpose();
      emap(gb).noalias() += emap(va).transpose() * emap(go);
      break;
    }
    case Op::MatmulNT: {
      Tensor& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      const Tensor& vb = nodes_[static_cast<std::size_t>(n.b)].value;
      emap(ga).noalias() += emap(go) * emap(vb);
      emap(gb).noalias() += emap(go).transpose() * emap(va);
      break;
    }
    case Op::Tanh:
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double y = n.value.data[i];
        ga.data[i] += go.data[i] * (1.0 - y * y);
      }
      break;
    case Op::Sigmoid:
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double y = n.value.data[i];
        ga.data[i] += go.data[i] * y * (1.0 - y);
      }
      break;
    case Op::Softplus:
      for (std::size_t i = 0; i < go.size(); ++i) {
        ga.data[i] += go.data[i] * stable_sigmoid(va.data[i]);
      }
      break;
    case Op::Exp:
      for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i] * n.value.data[i];
      break;
    case Op::Log:
      for (std::size_t i = 0; i < go.size(); ++i) ga.data[i] += go.data[i] / va.data[i];
      break;
    case Op::Sum:
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += go.data[0];
      break;
    case Op::Mean: {
      const double g = go.data[0] / static_cast<double>(ga.size());
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += g;
      break;
    }
    case Op::SumCols:
      for (int r = 0; r < va.rows(); ++r) {
        for (int c = 0; c < va.cols(); ++c) ga.at(r, c) += go.at(r, 0);
      }
      break;
    case Op::ConcatCols: {
      Tensor& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      for (int r = 0; r < go.rows(); ++r) {
        for (int c = 0; c < n.i0; ++c) ga.at(r, c) += go.at(r, c);
        for (int c = n.i0; c < go.cols(); ++c) gb.at(r, c - n.i0) += go.at(r, c);
      }
      break;
    }
    case Op::SliceCols:
      for (int r = 0; r < go.rows(); ++r) {
        for (int c = 0; c < n.i1; ++c) ga.at(r, n.i0 + c) += go.at(r, c);
      }
      break;
    case Op::GatherRows:
      for (int r = 0; r < go.rows(); ++r) {
        for (int c = 0; c < go.cols(); ++c) ga.at(n.ids[static_cast<std::size_t>(r)], c) += go.at(r, c);
      }
      break;
    case Op::LogSumExpCols:
      for (int r = 0; r < va.rows(); ++r) {
        const double g = go.at(r, 0);
        for (int c = 0; c < va.cols(); ++c) {
          ga.at(r, c) += g * std::exp(va.at(r, c) - n.value.at(r, 0));
        }
      }
      break;
    case Op::ClampMin:
      for (std::size_t i = 0; i < go.size(); ++i) {
        if (va.data[i] > n.c) ga.data[i] += go.data[i];
      }
      break;
    case Op::SoftmaxXent:
      for (int r = 0; r < va.rows(); ++r) {
        const double g = go.at(r, 0) * n.aux[static_cast<std::size_t>(r)];
        if (g == 0.0) continue;
        for (int c = 0; c < va.cols(); ++c) {
          double p = n.saved.at(r, c);
          if (c == n.ids[static_cast<std::size_t>(r)]) p -= 1.0;
          ga.at(r, c) += g * p;
        }
      }
      break;
    case Op::MmdRbf: {
      Tensor& gb = nodes_[static_cast<std::size_t>(n.b)].grad;
      const Tensor& vb = nodes_[static_cast<std::size_t>(n.b)].value;
      const int nx = va.rows();
      const int ny = vb.rows();
      const double inv2bw2 = 1.0 / (2.0 * n.c * n.c);
      const double g = go.data[0];
      const double cxx = g / (static_cast<double>(nx) * (nx - 1));
      const double cyy = g / (static_cast<double>(ny) * (ny - 1));
      const double cxy = -2.0 * g / (static_cast<double>(nx) * ny);
      // d k(a,b) / d a = k(a,b) * (b - a) / bw^2
      auto spread = [&](const Tensor& s, Tensor& gs, const Tensor& t, Tensor& gt, int i,
                        int j, double coef) {
        const double k = rbf(s, i, t, j, inv2bw2) * coef * 2.0 * inv2bw2;
        for (int c = 0; c < s.cols(); ++c) {
          const double diff = t.at(j, c) - s.at(i, c);
          gs.at(i, c) += k * diff;
          gt.at(j, c) -= k * diff;
        }
      };
      for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < nx; ++j) {
          if (i != j) spread(va, ga, va, ga, i, j, cxx);
        }
      }
      for (int i = 0; i < ny; ++i) {
        for (int j = 0; j < ny; ++j) {
          if (i != j) spread(vb, gb, vb, gb, i, j, cyy);
        }
      }
      for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) spread(va, ga, vb, gb, i, j, cxy);
      }
      break;
    }
    case Op::Leaf:
      break;
  }
}

void Tape::reset() { nodes_.clear(); }

}  // namespace svlab

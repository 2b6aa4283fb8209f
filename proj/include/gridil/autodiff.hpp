#pragma once

#include <Eigen/Dense>
#include <limits>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridil {

using Matrix = Eigen::MatrixXd;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

/// Named parameter tensors with their gradient slots and Adam moments.
class ParameterStore {
 public:
  struct Param {
    std::string name;
    Matrix value, grad, m, v;
  };

  int add(const std::string& name, Matrix init) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    Param p;
    p.name = name;
    p.grad = Matrix::Zero(init.rows(), init.cols());
    p.m = p.grad;
    p.v = p.grad;
    p.value = std::move(init);
    params_.push_back(std::move(p));
    index_[name] = static_cast<int>(params_.size()) - 1;
    return index_[name];
  }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  int size() const { return static_cast<int>(params_.size()); }
  Param& at(int i) { return params_[i]; }
  const Param& at(int i) const { return params_[i]; }
  Matrix& value(int i) { return params_[i].value; }
  const Matrix& value(int i) const { return params_[i].value; }
  Matrix& grad(int i) { return params_[i].grad; }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  /// Zero-shaped gradient buffer matching this store, for data-parallel
  /// accumulation with an ordered merge.
  std::vector<Matrix> make_grad_buffer() const {
    std::vector<Matrix> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    return out;
  }

  void accumulate(const std::vector<Matrix>& buffer) {
    for (size_t i = 0; i < params_.size(); ++i) params_[i].grad += buffer[i];
  }

  int64_t step_count() const { return step_; }

  /// Bias-corrected Adam update; gradients are consumed and cleared.
  void adam_step(const AdamConfig& cfg) {
    step_ += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
    for (auto& p : params_) {
      if (cfg.weight_decay != 0.0) p.grad += cfg.weight_decay * p.value;
      p.m = cfg.beta1 * p.m + (1.0 - cfg.beta1) * p.grad;
      p.v = cfg.beta2 * p.v + (1.0 - cfg.beta2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -=
          cfg.lr * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + cfg.eps);
      p.grad.setZero();
    }
  }

 private:
  std::vector<Param> params_;
  std::map<std::string, int> index_;
  int64_t step_ = 0;
};

/// Directed edge list consumed by segment_sum; rows of the source node are
/// accumulated into rows of the destination.
using EdgeList = std::vector<std::pair<int, int>>;

/// Reverse-mode tape over dense matrices. Rebuilt per sample; node slots
/// are recycled across resets so steady-state runs allocate nothing.
/// Parameter values are read from the store; parameter gradients land in
/// the store or, when given, in an external buffer (one tape per thread).
class Tape {
  enum class Op {
    constant,
    param,
    matmul,
    add,
    add_rowvec,
    affine,
    hadamard,
    leaky_relu,
    sigmoid,
    log,
    clamp,
    segment_sum,
    concat_rows,
    mean
  };

  struct Node {
    Op op;
    int a = -1, b = -1;
    int param = -1;
    double s0 = 0.0, s1 = 0.0;
    const EdgeList* edges = nullptr;
    Matrix value, grad;
  };

 public:
  explicit Tape(ParameterStore& store, std::vector<Matrix>* grad_buffer = nullptr)
      : store_(&store), grads_(grad_buffer) {}

  void reset() { used_ = 0; }
  int size() const { return used_; }

  const Matrix& value(int id) const {
    const Node& n = nodes_[id];
    return n.op == Op::param ? store_->value(n.param) : n.value;
  }

  int constant(const Matrix& m) {
    int id = fresh(Op::constant);
    nodes_[id].value = m;
    return id;
  }

  int param(int param_id) {
    int id = fresh(Op::param);
    nodes_[id].param = param_id;
    return id;
  }
  int param(const std::string& name) { return param(store_->find(name)); }

  // Ops allocate their node before touching parent values again: fresh()
  // may grow the node vector and invalidate references into it.

  int matmul(int a, int b) {
    if (value(a).cols() != value(b).rows()) throw ShapeError("matmul shape mismatch");
    int id = fresh(Op::matmul, a, b);
    nodes_[id].value.noalias() = value(a) * value(b);
    return id;
  }

  int add(int a, int b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw ShapeError("add shape mismatch");
    int id = fresh(Op::add, a, b);
    nodes_[id].value = value(a) + value(b);
    return id;
  }

  /// Broadcast a 1 x d bias over every row.
  int add_rowvec(int a, int bias) {
    if (value(bias).rows() != 1 || value(bias).cols() != value(a).cols())
      throw ShapeError("bias must be 1 x cols");
    int id = fresh(Op::add_rowvec, a, bias);
    nodes_[id].value = value(a).rowwise() + value(bias).row(0);
    return id;
  }

  /// Elementwise mul * x + add.
  int affine(int a, double mul, double add) {
    int id = fresh(Op::affine, a);
    nodes_[id].s0 = mul;
    nodes_[id].s1 = add;
    nodes_[id].value = (value(a).array() * mul + add).matrix();
    return id;
  }
  int scale(int a, double c) { return affine(a, c, 0.0); }

  int hadamard(int a, int b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw ShapeError("hadamard shape mismatch");
    int id = fresh(Op::hadamard, a, b);
    nodes_[id].value = value(a).cwiseProduct(value(b));
    return id;
  }

  int leaky_relu(int a, double slope) {
    int id = fresh(Op::leaky_relu, a);
    nodes_[id].s0 = slope;
    const auto& x = value(a).array();
    nodes_[id].value = x.max(x * slope).matrix();
    return id;
  }

  int sigmoid(int a) {
    int id = fresh(Op::sigmoid, a);
    nodes_[id].value = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
    return id;
  }

  int log(int a) {
    int id = fresh(Op::log, a);
    nodes_[id].value = value(a).array().log().matrix();
    return id;
  }

  /// Clamp to [lo, hi]; gradient is zero outside the band.
  int clamp(int a, double lo, double hi) {
    int id = fresh(Op::clamp, a);
    nodes_[id].s0 = lo;
    nodes_[id].s1 = hi;
    nodes_[id].value = value(a).array().max(lo).min(hi).matrix();
    return id;
  }

  /// out.row(dst) = sum of in.row(src) over (src, dst) in edges.
  int segment_sum(int a, const EdgeList& edges) {
    int id = fresh(Op::segment_sum, a);
    nodes_[id].edges = &edges;
    nodes_[id].value.resize(value(a).rows(), value(a).cols());
    nodes_[id].value.setZero();
    const Matrix& A = value(a);
    for (const auto& [src, dst] : edges) nodes_[id].value.row(dst) += A.row(src);
    return id;
  }

  int concat_rows(int a, int b) {
    if (value(a).cols() != value(b).cols()) throw ShapeError("concat_rows column mismatch");
    int id = fresh(Op::concat_rows, a, b);
    Eigen::Index ra = value(a).rows();
    nodes_[id].value.resize(ra + value(b).rows(), value(a).cols());
    nodes_[id].value.topRows(ra) = value(a);
    nodes_[id].value.bottomRows(value(b).rows()) = value(b);
    return id;
  }

  int mean(int a) {
    int id = fresh(Op::mean, a);
    nodes_[id].value.resize(1, 1);
    nodes_[id].value(0, 0) = value(a).mean();
    return id;
  }

  /// Backpropagate from a scalar node; leaf gradients accumulate additively.
  void backward(int root, double seed = 1.0) {
    for (int i = 0; i <= root; ++i) {
      Node& n = nodes_[i];
      if (n.op == Op::param || n.op == Op::constant) continue;
      n.grad.resize(n.value.rows(), n.value.cols());
      n.grad.setZero();
    }
    if (nodes_[root].value.size() != 1)
      throw std::invalid_argument("backward needs a scalar root");
    nodes_[root].grad(0, 0) = seed;

    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      const Matrix& g = n.grad;
      switch (n.op) {
        case Op::param:
        case Op::constant:
          break;
        case Op::matmul: {
          if (Matrix* ga = grad_target(n.a)) ga->noalias() += g * value(n.b).transpose();
          if (Matrix* gb = grad_target(n.b)) gb->noalias() += value(n.a).transpose() * g;
          break;
        }
        case Op::add:
          if (Matrix* ga = grad_target(n.a)) *ga += g;
          if (Matrix* gb = grad_target(n.b)) *gb += g;
          break;
        case Op::add_rowvec:
          if (Matrix* ga = grad_target(n.a)) *ga += g;
          if (Matrix* gb = grad_target(n.b)) *gb += g.colwise().sum();
          break;
        case Op::affine:
          if (Matrix* ga = grad_target(n.a)) *ga += n.s0 * g;
          break;
        case Op::hadamard:
          if (Matrix* ga = grad_target(n.a)) *ga += g.cwiseProduct(value(n.b));
          if (Matrix* gb = grad_target(n.b)) *gb += g.cwiseProduct(value(n.a));
          break;
        case Op::leaky_relu: {
          if (Matrix* ga = grad_target(n.a)) {
            const auto& x = value(n.a).array();
            ga->array() += g.array() * ((x >= 0).cast<double>() * (1.0 - n.s0) + n.s0);
          }
          break;
        }
        case Op::sigmoid: {
          if (Matrix* ga = grad_target(n.a)) {
            const auto& y = n.value.array();
            ga->array() += g.array() * y * (1.0 - y);
          }
          break;
        }
        case Op::log:
          if (Matrix* ga = grad_target(n.a)) ga->array() += g.array() / value(n.a).array();
          break;
        case Op::clamp: {
          if (Matrix* ga = grad_target(n.a)) {
            const auto& x = value(n.a).array();
            ga->array() +=
                g.array() * ((x >= n.s0) && (x <= n.s1)).cast<double>();
          }
          break;
        }
        case Op::segment_sum: {
          if (Matrix* ga = grad_target(n.a))
            for (const auto& [src, dst] : *n.edges) ga->row(src) += g.row(dst);
          break;
        }
        case Op::concat_rows: {
          Eigen::Index ra = value(n.a).rows();
          if (Matrix* ga = grad_target(n.a)) *ga += g.topRows(ra);
          if (Matrix* gb = grad_target(n.b)) *gb += g.bottomRows(g.rows() - ra);
          break;
        }
        case Op::mean:
          if (Matrix* ga = grad_target(n.a))
            ga->array() += g(0, 0) / static_cast<double>(value(n.a).size());
          break;
      }
    }
  }

 private:
  int fresh(Op op, int a = -1, int b = -1) {
    if (used_ == static_cast<int>(nodes_.size())) nodes_.emplace_back();
    Node& n = nodes_[used_];
    n.op = op;
    n.a = a;
    n.b = b;
    n.param = -1;
    n.s0 = n.s1 = 0.0;
    n.edges = nullptr;
    return used_++;
  }

  Matrix* grad_target(int id) {
    Node& n = nodes_[id];
    if (n.op == Op::constant) return nullptr;
    if (n.op == Op::param)
      return grads_ ? &(*grads_)[n.param] : &store_->grad(n.param);
    return &n.grad;
  }

  ParameterStore* store_;
  std::vector<Matrix>* grads_;
  std::vector<Node> nodes_;
  int used_ = 0;
};

// ---------------------------------------------------------------------------
// Gradient checking

struct GradCheckConfig {
  double step = 1e-5;
  double tolerance = 1e-4;
  int coords_per_param = 4;
  uint64_t seed = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  int checked_coords = 0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Central finite differences against the analytic gradients. `eval(true)`
/// must run forward+backward and return the loss, accumulating parameter
/// gradients; `eval(false)` only needs the loss value. Relative error uses
/// max(1, |analytic|, |numeric|) as denominator. Coordinates exceeding the
/// tolerance are re-measured at smaller steps: activation kinks inside the
/// difference window fade with the step, a wrong gradient does not.
inline GradCheckReport grad_check(const std::function<double(bool)>& eval,
                                  ParameterStore& store, const GradCheckConfig& cfg = {}) {
  store.zero_grad();
  eval(true);
  std::vector<Matrix> analytic;
  analytic.reserve(store.size());
  for (int i = 0; i < store.size(); ++i) analytic.push_back(store.at(i).grad);

  GradCheckReport report;
  std::mt19937_64 rng(cfg.seed);
  for (int i = 0; i < store.size(); ++i) {
    Matrix& value = store.value(i);
    const auto n = value.size();
    int k = std::min<int>(cfg.coords_per_param, static_cast<int>(n));
    for (int c = 0; c < k; ++c) {
      Eigen::Index idx = static_cast<Eigen::Index>(rng() % n);
      double saved = value(idx);
      double a = analytic[i](idx);
      // A larger step escapes evaluation noise (err ~ eps/h), a smaller one
      // escapes kinks inside the window; an actually wrong gradient
      // disagrees at every step.
      double rel = std::numeric_limits<double>::infinity();
      for (double step : {cfg.step, 10.0 * cfg.step, cfg.step / 10.0}) {
        value(idx) = saved + step;
        double up = eval(false);
        value(idx) = saved - step;
        double down = eval(false);
        value(idx) = saved;
        double numeric = (up - down) / (2.0 * step);
        rel = std::min(rel, std::abs(a - numeric) /
                                std::max({1.0, std::abs(a), std::abs(numeric)}));
        if (rel < cfg.tolerance) break;
      }
      report.checked_coords++;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = store.at(i).name;
      }
    }
  }
  store.zero_grad();
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned text, hexfloat values for bit-exact round trips.

inline void save_checkpoint(std::ostream& os, const ParameterStore& store,
                            const std::map<std::string, std::string>& meta) {
  os << "gridil-checkpoint v1\n";
  for (const auto& [k, v] : meta) os << "meta " << k << " " << v << "\n";
  char buf[40];
  for (int i = 0; i < store.size(); ++i) {
    const auto& p = store.at(i);
    os << "param " << p.name << " " << p.value.rows() << " " << p.value.cols() << "\n";
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%a", p.value(r, c));
        os << (c ? " " : "") << buf;
      }
      os << "\n";
    }
  }
}

inline void save_checkpoint(const std::string& path, const ParameterStore& store,
                            const std::map<std::string, std::string>& meta) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  save_checkpoint(os, store, meta);
}

inline std::pair<ParameterStore, std::map<std::string, std::string>> load_checkpoint(
    std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "gridil-checkpoint v1")
    throw std::runtime_error("bad checkpoint header");
  ParameterStore store;
  std::map<std::string, std::string> meta;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string k, v;
      ls >> k;
      std::getline(ls, v);
      meta[k] = v.empty() ? v : v.substr(1);
    } else if (tag == "param") {
      std::string name;
      Eigen::Index rows, cols;
      ls >> name >> rows >> cols;
      Matrix m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        if (!std::getline(is, line)) throw std::runtime_error("truncated checkpoint");
        const char* ptr = line.c_str();
        char* end = nullptr;
        for (Eigen::Index c = 0; c < cols; ++c) {
          m(r, c) = std::strtod(ptr, &end);
          ptr = end;
        }
      }
      store.add(name, std::move(m));
    } else {
      throw std::runtime_error("bad checkpoint line: " + line);
    }
  }
  return {std::move(store), std::move(meta)};
}

inline std::pair<ParameterStore, std::map<std::string, std::string>> load_checkpoint(
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read checkpoint " + path);
  return load_checkpoint(is);
}

}  // namespace gridil

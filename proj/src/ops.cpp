#include "dyad/ops.hpp"

#include <cmath>
#include <numeric>

namespace dyad::numerics {
namespace {

Shape broadcast_shape(Shape a, Shape b) {
  auto dim = [&](Index x, Index y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
  };
  return {dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

Tensor expand(const Tensor& t, Shape s) {
  if (t.rows() == s.rows && t.cols() == s.cols) return t;
  return t.replicate(s.rows / t.rows(), s.cols / t.cols());
}

void accumulate_reduced(Tensor& g, const Tensor& full) {
  if (g.rows() == full.rows() && g.cols() == full.cols()) {
    g += full;
  } else if (g.rows() == 1 && g.cols() == 1) {
    g(0, 0) += full.sum();
  } else if (g.rows() == 1) {
    g += full.colwise().sum();
  } else {
    g += full.rowwise().sum();
  }
}

enum class Binary { kAdd, kSub, kMul };

class BinaryOp final : public Op {
 public:
  explicit BinaryOp(Binary kind) : kind_(kind) {}
  std::string name() const override {
    switch (kind_) {
      case Binary::kAdd: return "add";
      case Binary::kSub: return "sub";
      case Binary::kMul: return "mul";
    }
    return "binary";
  }
  Shape infer_shape(std::span<const Shape> in) const override {
    return broadcast_shape(in[0], in[1]);
  }
  void forward(std::span<const Tensor* const> in, Tensor& out) const override {
    const Tensor& a = *in[0];
    const Tensor& b = *in[1];
    Shape s = broadcast_shape(shape_of(a), shape_of(b));
    if (shape_of(a) == s && shape_of(b) == s) {
      switch (kind_) {
        case Binary::kAdd: out = a + b; break;
        case Binary::kSub: out = a - b; break;
        case Binary::kMul: out = a.cwiseProduct(b); break;
      }
      return;
    }
    Tensor ea = expand(a, s), eb = expand(b, s);
    switch (kind_) {
      case Binary::kAdd: out = ea + eb; break;
      case Binary::kSub: out = ea - eb; break;
      case Binary::kMul: out = ea.cwiseProduct(eb); break;
    }
  }
  void backward(std::span<const Tensor* const> in, const Tensor& out, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    Shape s = shape_of(out);
    switch (kind_) {
      case Binary::kAdd:
        if (grads[0]) accumulate_reduced(*grads[0], g);
        if (grads[1]) accumulate_reduced(*grads[1], g);
        break;
      case Binary::kSub:
        if (grads[0]) accumulate_reduced(*grads[0], g);
        if (grads[1]) accumulate_reduced(*grads[1], -g);
        break;
      case Binary::kMul:
        if (grads[0]) accumulate_reduced(*grads[0], g.cwiseProduct(expand(*in[1], s)));
        if (grads[1]) accumulate_reduced(*grads[1], g.cwiseProduct(expand(*in[0], s)));
        break;
    }
  }

 private:
  Binary kind_;
};

class AffineScalarOp final : public Op {
 public:
  AffineScalarOp(double scale, double shift) : scale_(scale), shift_(shift) {}
  std::string name() const override { return "affine"; }
  Shape infer_shape(std::span<const Shape> in) const override { return in[0]; }
  void forward(std::span<const Tensor* const> in, Tensor& out) const override {
    out = (scale_ * in[0]->array() + shift_).matrix();
  }
  void backward(std::span<const Tensor* const>, const Tensor&, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    if (grads[0]) *grads[0] += scale_ * g;
  }

 private:
  double scale_;
  double shift_;
};

class MatMulOp final : public Op {
 public:
  std::string name() const override { return "matmul"; }
  Shape infer_shape(std::span<const Shape> in) const override {
    if (in[0].cols != in[1].rows) {
      throw ShapeError("matmul " + to_string(in[0]) + " * " + to_string(in[1]));
    }
    return {in[0].rows, in[1].cols};
  }
  void forward(std::span<const Tensor* const> in, Tensor& out) const override {
    out.noalias() = (*in[0]) * (*in[1]);
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    if (grads[0]) grads[0]->noalias() += g * in[1]->transpose();
    if (grads[1]) grads[1]->noalias() += in[0]->transpose() * g;
  }
};

class Conv1dOp final : public Op {
 public:
  Conv1dOp(Index kernel, Index stride) : kernel_(kernel), stride_(stride) {}
  std::string name() const override { return "conv1d"; }
  Shape infer_shape(std::span<const Shape> in) const override {
    const Shape x = in[0], w = in[1];
    if (kernel_ < 1 || kernel_ % 2 == 0) throw ShapeError("conv1d kernel must be odd");
    if (stride_ < 1) throw ShapeError("conv1d stride must be >= 1");
    if (w.rows != kernel_ * x.cols) {
      throw ShapeError("conv1d weight " + to_string(w) + " does not match kernel " +
                       std::to_string(kernel_) + " x channels " + std::to_string(x.cols));
    }
    return {out_len(x.rows), w.cols};
  }
  void forward(std::span<const Tensor* const> in, Tensor& out) const override {
    out.noalias() = patches(*in[0]) * (*in[1]);
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    const Tensor& x = *in[0];
    const Tensor& w = *in[1];
    if (grads[1]) grads[1]->noalias() += patches(x).transpose() * g;
    if (grads[0]) {
      Tensor gp = g * w.transpose();
      const Index cin = x.cols(), pad = kernel_ / 2;
      for (Index o = 0; o < gp.rows(); ++o) {
        for (Index k = 0; k < kernel_; ++k) {
          Index src = o * stride_ + k - pad;
          if (src < 0 || src >= x.rows()) continue;
          grads[0]->row(src) += gp.block(o, k * cin, 1, cin);
        }
      }
    }
  }

 private:
  Index out_len(Index len) const { return (len + 2 * (kernel_ / 2) - kernel_) / stride_ + 1; }

  Tensor patches(const Tensor& x) const {
    const Index cin = x.cols(), pad = kernel_ / 2, lout = out_len(x.rows());
    Tensor p = Tensor::Zero(lout, kernel_ * cin);
    for (Index o = 0; o < lout; ++o) {
      for (Index k = 0; k < kernel_; ++k) {
        Index src = o * stride_ + k - pad;
        if (src < 0 || src >= x.rows()) continue;
        p.block(o, k * cin, 1, cin) = x.row(src);
      }
    }
    return p;
  }

  Index kernel_;
  Index stride_;
};

class LayerNormOp final : public Op {
 public:
  explicit LayerNormOp(double eps) : eps_(eps) {}
  std::string name() const override { return "layer_norm"; }
  Shape infer_shape(std::span<const Shape> in) const override { return in[0]; }
  void forward(std::span<const Tensor* const> in, Tensor& out) const override {
    const Tensor& x = *in[0];
    out.resize(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
      const double mu = x.row(r).mean();
      const double var = (x.row(r).array() - mu).square().mean();
      out.row(r) = (x.row(r).array() - mu) / std::sqrt(var + eps_);
    }
  }
  void backward(std::span<const Tensor* const> in, const Tensor& y, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    if (!grads[0]) return;
    const Tensor& x = *in[0];
    for (Index r = 0; r < x.rows(); ++r) {
      const double mu = x.row(r).mean();
      const double var = (x.row(r).array() - mu).square().mean();
      const double inv = 1.0 / std::sqrt(var + eps_);
      const double gmean = g.row(r).mean();
      const double gy = g.row(r).cwiseProduct(y.row(r)).mean();
      grads[0]->row(r).array() += inv * (g.row(r).array() - gmean - y.row(r).array() * gy);
    }
  }

 private:
  double eps_;
};

class AttentionOp final : public Op {
 public:
  explicit AttentionOp(int heads) : heads_(heads) {}
  std::string name() const override { return "attention"; }
  Shape infer_shape(std::span<const Shape> in) const override {
    const Shape q = in[0], k = in[1], v = in[2];
    if (heads_ < 1 || q.cols % heads_ != 0) {
      throw ShapeError("attention width " + std::to_string(q.cols) + " not divisible by " +
                       std::to_string(heads_) + " heads");
    }
    if (k.cols != q.cols || v.cols != q.cols || k.rows != v.rows) {
      throw ShapeError("attention q" + to_string(q) + " k" + to_string(k) + " v" + to_string(v));
    }
    return q;
  }
  void forward(std::span<const Tensor* const> in, Tensor& out) const override {
    const Tensor& q = *in[0];
    const Tensor& v = *in[2];
    const Index dh = q.cols() / heads_;
    auto probs = attention_probabilities(q, *in[1], heads_);
    out.resize(q.rows(), q.cols());
    for (int h = 0; h < heads_; ++h) {
      out.middleCols(h * dh, dh).noalias() = probs[h] * v.middleCols(h * dh, dh);
    }
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    const Tensor& q = *in[0];
    const Tensor& k = *in[1];
    const Tensor& v = *in[2];
    const Index dh = q.cols() / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    auto probs = attention_probabilities(q, k, heads_);
    for (int h = 0; h < heads_; ++h) {
      const Tensor& p = probs[h];
      Tensor go = g.middleCols(h * dh, dh);
      if (grads[2]) grads[2]->middleCols(h * dh, dh).noalias() += p.transpose() * go;
      Tensor gp = go * v.middleCols(h * dh, dh).transpose();
      Tensor gs = p.cwiseProduct(
          (gp.colwise() - gp.cwiseProduct(p).rowwise().sum()));
      if (grads[0]) grads[0]->middleCols(h * dh, dh).noalias() += scale * gs * k.middleCols(h * dh, dh);
      if (grads[1]) {
        grads[1]->middleCols(h * dh, dh).noalias() += scale * gs.transpose() * q.middleCols(h * dh, dh);
      }
    }
  }

 private:
  int heads_;
};

enum class Unary { kSigmoid, kSilu, kGelu, kSquare };

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

class UnaryOp final : public Op {
 public:
  explicit UnaryOp(Unary kind) : kind_(kind) {}
  std::string name() const override {
    switch (kind_) {
      case Unary::kSigmoid: return "sigmoid";
      case Unary::kSilu: return "silu";
      case Unary::kGelu: return "gelu";
      case Unary::kSquare: return "square";
    }
    return "unary";
  }
  Shape infer_shape(std::span<const Shape> in) const override { return in[0]; }
  void forward(std::span<const Tensor* const> in, Tensor& out) const override {
    out = in[0]->unaryExpr([this](double x) { return value(x); });
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    if (!grads[0]) return;
    *grads[0] += g.cwiseProduct(in[0]->unaryExpr([this](double x) { return derivative(x); }));
  }

 private:
  double value(double x) const {
    switch (kind_) {
      case Unary::kSigmoid: return sigmoid_scalar(x);
      case Unary::kSilu: return x * sigmoid_scalar(x);
      case Unary::kGelu: return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
      case Unary::kSquare: return x * x;
    }
    return 0.0;
  }
  double derivative(double x) const {
    switch (kind_) {
      case Unary::kSigmoid: {
        const double s = sigmoid_scalar(x);
        return s * (1.0 - s);
      }
      case Unary::kSilu: {
        const double s = sigmoid_scalar(x);
        return s + x * s * (1.0 - s);
      }
      case Unary::kGelu: {
        const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
        return cdf + x * pdf;
      }
      case Unary::kSquare: return 2.0 * x;
    }
    return 0.0;
  }

  Unary kind_;
};

class ConcatColsOp final : public Op {
 public:
  std::string name() const override { return "concat"; }
  Shape infer_shape(std::span<const Shape> in) const override {
    if (in.empty()) throw ShapeError("concat of nothing");
    Shape s{in[0].rows, 0};
    for (const Shape& p : in) {
      if (p.rows != s.rows) throw ShapeError("concat row mismatch " + to_string(p));
      s.cols += p.cols;
    }
    return s;
  }
  void forward(std::span<const Tensor* const> in, Tensor& out) const override {
    Index cols = 0;
    for (const Tensor* t : in) cols += t->cols();
    out.resize(in[0]->rows(), cols);
    Index at = 0;
    for (const Tensor* t : in) {
      out.middleCols(at, t->cols()) = *t;
      at += t->cols();
    }
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    Index at = 0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (grads[i]) *grads[i] += g.middleCols(at, in[i]->cols());
      at += in[i]->cols();
    }
  }
};

class SliceOp final : public Op {
 public:
  SliceOp(bool rows, Index start, Index count) : rows_(rows), start_(start), count_(count) {}
  std::string name() const override { return rows_ ? "slice_rows" : "slice_cols"; }
  Shape infer_shape(std::span<const Shape> in) const override {
    const Index extent = rows_ ? in[0].rows : in[0].cols;
    if (start_ < 0 || count_ < 1 || start_ + count_ > extent) {
      throw ShapeError("slice [" + std::to_string(start_) + ", +" + std::to_string(count_) +
                       ") out of " + to_string(in[0]));
    }
    return rows_ ? Shape{count_, in[0].cols} : Shape{in[0].rows, count_};
  }
  void forward(std::span<const Tensor* const> in, Tensor& out) const override {
    out = rows_ ? Tensor(in[0]->middleRows(start_, count_)) : Tensor(in[0]->middleCols(start_, count_));
  }
  void backward(std::span<const Tensor* const>, const Tensor&, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    if (!grads[0]) return;
    if (rows_) {
      grads[0]->middleRows(start_, count_) += g;
    } else {
      grads[0]->middleCols(start_, count_) += g;
    }
  }

 private:
  bool rows_;
  Index start_;
  Index count_;
};

class ReduceOp final : public Op {
 public:
  explicit ReduceOp(bool average) : average_(average) {}
  std::string name() const override { return average_ ? "mean" : "sum"; }
  Shape infer_shape(std::span<const Shape>) const override { return {1, 1}; }
  void forward(std::span<const Tensor* const> in, Tensor& out) const override {
    out.resize(1, 1);
    out(0, 0) = average_ ? in[0]->mean() : in[0]->sum();
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    if (!grads[0]) return;
    const double scale = average_ ? 1.0 / static_cast<double>(in[0]->size()) : 1.0;
    grads[0]->array() += g(0, 0) * scale;
  }

 private:
  bool average_;
};

class CosineRowsOp final : public Op {
 public:
  std::string name() const override { return "cosine_rows"; }
  Shape infer_shape(std::span<const Shape> in) const override {
    if (in[0] != in[1]) throw ShapeError("cosine " + to_string(in[0]) + " vs " + to_string(in[1]));
    return {in[0].rows, 1};
  }
  void forward(std::span<const Tensor* const> in, Tensor& out) const override {
    const Tensor& a = *in[0];
    const Tensor& b = *in[1];
    out.resize(a.rows(), 1);
    for (Index r = 0; r < a.rows(); ++r) {
      out(r, 0) = a.row(r).dot(b.row(r)) / (a.row(r).norm() * b.row(r).norm());
    }
  }
  void backward(std::span<const Tensor* const> in, const Tensor& out, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    const Tensor& a = *in[0];
    const Tensor& b = *in[1];
    for (Index r = 0; r < a.rows(); ++r) {
      const double na = a.row(r).norm(), nb = b.row(r).norm(), c = out(r, 0), gr = g(r, 0);
      if (grads[0]) grads[0]->row(r) += gr * (b.row(r) / (na * nb) - c * a.row(r) / (na * na));
      if (grads[1]) grads[1]->row(r) += gr * (a.row(r) / (na * nb) - c * b.row(r) / (nb * nb));
    }
  }
};

class SoftmaxCrossEntropyOp final : public Op {
 public:
  std::string name() const override { return "softmax_xent"; }
  Shape infer_shape(std::span<const Shape> in) const override {
    if (in[0] != in[1]) throw ShapeError("xent " + to_string(in[0]) + " vs " + to_string(in[1]));
    return {1, 1};
  }
  void forward(std::span<const Tensor* const> in, Tensor& out) const override {
    Tensor lsm = log_softmax(*in[0]);
    out.resize(1, 1);
    out(0, 0) = -in[1]->cwiseProduct(lsm).sum() / static_cast<double>(in[0]->rows());
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    const Tensor& t = *in[1];
    const double scale = g(0, 0) / static_cast<double>(in[0]->rows());
    Tensor lsm = log_softmax(*in[0]);
    if (grads[0]) {
      Tensor p = lsm.array().exp().matrix();
      for (Index r = 0; r < p.rows(); ++r) {
        grads[0]->row(r) += scale * (p.row(r) * t.row(r).sum() - t.row(r));
      }
    }
    if (grads[1]) *grads[1] -= scale * lsm;
  }

 private:
  static Tensor log_softmax(const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
      const double m = x.row(r).maxCoeff();
      const double lse = m + std::log((x.row(r).array() - m).exp().sum());
      out.row(r) = x.row(r).array() - lse;
    }
    return out;
  }
};

// Coefficients of R v = a v + b (r x v) + c r (r.v) and of their gradients
// d a/dr = -b r, d b/dr = db r, d c/dr = dc r.
struct RodriguesTerms {
  double a, b, c, db, dc;
};

RodriguesTerms rodrigues_terms(double theta) {
  const double t2 = theta * theta;
  if (theta < 1e-3) {
    return {1.0 - t2 / 2.0 + t2 * t2 / 24.0,
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0,
            -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0};
  }
  const double s = std::sin(theta), co = std::cos(theta);
  return {co, s / theta, (1.0 - co) / t2, (theta * co - s) / (t2 * theta),
          (theta * s - 2.0 * (1.0 - co)) / (t2 * t2)};
}

class RotateVectorsOp final : public Op {
 public:
  std::string name() const override { return "rotate_vectors"; }
  Shape infer_shape(std::span<const Shape> in) const override {
    if (in[0].cols != 3 || in[1].cols % 3 != 0 || in[0].rows != in[1].rows) {
      throw ShapeError("rotate_vectors r" + to_string(in[0]) + " v" + to_string(in[1]));
    }
    return in[1];
  }
  void forward(std::span<const Tensor* const> in, Tensor& out) const override {
    const Tensor& r = *in[0];
    const Tensor& v = *in[1];
    out.resize(v.rows(), v.cols());
    for (Index i = 0; i < r.rows(); ++i) {
      const Vec3 rv = r.row(i).transpose();
      const RodriguesTerms k = rodrigues_terms(rv.norm());
      for (Index n = 0; n < v.cols() / 3; ++n) {
        const Vec3 x = v.block<1, 3>(i, 3 * n).transpose();
        out.block<1, 3>(i, 3 * n) = (k.a * x + k.b * rv.cross(x) + k.c * rv.dot(x) * rv).transpose();
      }
    }
  }
  void backward(std::span<const Tensor* const> in, const Tensor&, const Tensor& g,
                std::span<Tensor* const> grads) const override {
    const Tensor& r = *in[0];
    const Tensor& v = *in[1];
    for (Index i = 0; i < r.rows(); ++i) {
      const Vec3 rv = r.row(i).transpose();
      const RodriguesTerms k = rodrigues_terms(rv.norm());
      Vec3 gr = Vec3::Zero();
      for (Index n = 0; n < v.cols() / 3; ++n) {
        const Vec3 x = v.block<1, 3>(i, 3 * n).transpose();
        const Vec3 gy = g.block<1, 3>(i, 3 * n).transpose();
        if (grads[1]) {
          // R^T g = a g - b (r x g) + c r (r.g)
          const Vec3 gx = k.a * gy - k.b * rv.cross(gy) + k.c * rv.dot(gy) * rv;
          grads[1]->block<1, 3>(i, 3 * n) += gx.transpose();
        }
        if (grads[0]) {
          const double rx = rv.dot(x), gr_dot = gy.dot(rv);
          gr += -k.b * gy.dot(x) * rv + gy.dot(rv.cross(x)) * k.db * rv + k.b * x.cross(gy) +
                gr_dot * rx * k.dc * rv + k.c * (rx * gy + gr_dot * x);
        }
      }
      if (grads[0]) grads[0]->row(i) += gr.transpose();
    }
  }
};

Var make(std::shared_ptr<const Op> op, std::vector<Var> inputs) {
  Graph& g = inputs.front().graph();
  return g.apply(std::move(op), std::move(inputs));
}

}  // namespace

Var operator+(Var a, Var b) { return make(std::make_shared<BinaryOp>(Binary::kAdd), {a, b}); }
Var operator-(Var a, Var b) { return make(std::make_shared<BinaryOp>(Binary::kSub), {a, b}); }
Var operator*(Var a, Var b) { return make(std::make_shared<BinaryOp>(Binary::kMul), {a, b}); }
Var operator*(double s, Var a) { return make(std::make_shared<AffineScalarOp>(s, 0.0), {a}); }
Var operator-(Var a) { return -1.0 * a; }
Var add_scalar(Var a, double s) { return make(std::make_shared<AffineScalarOp>(1.0, s), {a}); }

Var matmul(Var a, Var b) { return make(std::make_shared<MatMulOp>(), {a, b}); }

Var conv1d(Var x, Var w, Index kernel, Index stride) {
  return make(std::make_shared<Conv1dOp>(kernel, stride), {x, w});
}

Var layer_norm(Var x, double eps) { return make(std::make_shared<LayerNormOp>(eps), {x}); }

Var attention(Var q, Var k, Var v, int heads) {
  return make(std::make_shared<AttentionOp>(heads), {q, k, v});
}

Var sigmoid(Var x) { return make(std::make_shared<UnaryOp>(Unary::kSigmoid), {x}); }
Var silu(Var x) { return make(std::make_shared<UnaryOp>(Unary::kSilu), {x}); }
Var gelu(Var x) { return make(std::make_shared<UnaryOp>(Unary::kGelu), {x}); }
Var square(Var x) { return make(std::make_shared<UnaryOp>(Unary::kSquare), {x}); }

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  return make(std::make_shared<ConcatColsOp>(), parts);
}

Var slice_cols(Var x, Index start, Index count) {
  return make(std::make_shared<SliceOp>(false, start, count), {x});
}

Var slice_rows(Var x, Index start, Index count) {
  return make(std::make_shared<SliceOp>(true, start, count), {x});
}

Var sum(Var x) { return make(std::make_shared<ReduceOp>(false), {x}); }
Var mean(Var x) { return make(std::make_shared<ReduceOp>(true), {x}); }

Var cosine_rows(Var a, Var b) { return make(std::make_shared<CosineRowsOp>(), {a, b}); }

Var softmax_cross_entropy(Var logits, Var targets) {
  return make(std::make_shared<SoftmaxCrossEntropyOp>(), {logits, targets});
}

Var rotate_vectors(Var r, Var v) { return make(std::make_shared<RotateVectorsOp>(), {r, v}); }

std::vector<Tensor> attention_probabilities(const Tensor& q, const Tensor& k, int heads) {
  const Index dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> probs;
  probs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor s = scale * q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose();
    for (Index r = 0; r < s.rows(); ++r) {
      const double m = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - m).exp();
      s.row(r) /= s.row(r).sum();
    }
    probs.push_back(std::move(s));
  }
  return probs;
}

}  // namespace dyad::numerics

#include "dcqa/tape.hpp"

#include "dcqa/errors.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace dcqa {

namespace {

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
}

}  // namespace

Mat masked_softmax_rows(const Mat& z, const Mask* key_mask) {
  if (key_mask != nullptr && static_cast<Eigen::Index>(key_mask->size()) != z.cols())
    throw ShapeError("softmax: key mask length does not match column count");
  Mat out = Mat::Zero(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      if (key_mask != nullptr && (*key_mask)[static_cast<std::size_t>(c)] == 0) continue;
      mx = std::max(mx, z(r, c));
    }
    if (!std::isfinite(mx)) continue;  // no unmasked key: row stays zero
    double sum = 0.0;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      if (key_mask != nullptr && (*key_mask)[static_cast<std::size_t>(c)] == 0) continue;
      double e = std::exp(z(r, c) - mx);
      out(r, c) = e;
      sum += e;
    }
    if (sum > 0.0) out.row(r) /= sum;
  }
  return out;
}

Mat layer_norm_rows(const Mat& x, const Vec& gain, const Vec& bias, double eps) {
  if (gain.size() != x.cols() || bias.size() != x.cols())
    throw ShapeError("layer_norm: affine length does not match feature count");
  Mat out(x.rows(), x.cols());
  const double d = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mu = x.row(r).mean();
    double var = (x.row(r).array() - mu).square().sum() / d;
    double inv = 1.0 / std::sqrt(var + eps);
    out.row(r) =
        ((x.row(r).array() - mu) * inv).transpose() * gain.array() + bias.array();
  }
  return out;
}

Vec max_pool_rows_value(const Mat& x, const Mask* row_mask) {
  if (row_mask != nullptr && static_cast<Eigen::Index>(row_mask->size()) != x.rows())
    throw ShapeError("max_pool: row mask length does not match row count");
  Vec out(x.cols());
  bool any = false;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (row_mask != nullptr && (*row_mask)[static_cast<std::size_t>(r)] == 0) continue;
    if (!any) {
      out = x.row(r).transpose();
      any = true;
    } else {
      out = out.cwiseMax(x.row(r).transpose());
    }
  }
  if (!any) throw DegenerateInputError("max_pool: every row is masked");
  return out;
}

int Tape::push(Mat val, bool requires_grad, std::function<void(Tape&)> back) {
  Node n;
  n.val = std::move(val);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accum(int id, const Mat& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (!n.grad_live) {
    n.grad = g;
    n.grad_live = true;
  } else {
    n.grad += g;
  }
}

Mat Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id)];
  if (!n.grad_live) return Mat::Zero(n.val.rows(), n.val.cols());
  return n.grad;
}

Var Tape::leaf(Mat value) { return Var{push(std::move(value), false, nullptr)}; }

Var Tape::input(Mat value) { return Var{push(std::move(value), true, nullptr)}; }

Var Tape::param(Parameter& p) {
  Parameter* ptr = &p;
  int id = push(p.value, true, nullptr);
  nodes_[static_cast<std::size_t>(id)].back = [id, ptr](Tape& t) {
    ptr->grad += t.grad_of(id);
  };
  return Var{id};
}

Var Tape::add(Var a, Var b) {
  check_same_shape(val(a.id), val(b.id), "add");
  int id = push(val(a.id) + val(b.id), needs(a) || needs(b), nullptr);
  int ai = a.id, bi = b.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, ai, bi](Tape& t) {
    t.accum(ai, t.grad_of(id));
    t.accum(bi, t.grad_of(id));
  };
  return Var{id};
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(val(a.id), val(b.id), "sub");
  int id = push(val(a.id) - val(b.id), needs(a) || needs(b), nullptr);
  int ai = a.id, bi = b.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, ai, bi](Tape& t) {
    t.accum(ai, t.grad_of(id));
    t.accum(bi, Mat(-t.grad_of(id)));
  };
  return Var{id};
}

Var Tape::cmul(Var a, Var b) {
  check_same_shape(val(a.id), val(b.id), "cmul");
  int id = push(val(a.id).cwiseProduct(val(b.id)), needs(a) || needs(b), nullptr);
  int ai = a.id, bi = b.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, ai, bi](Tape& t) {
    t.accum(ai, t.grad_of(id).cwiseProduct(t.val(bi)));
    t.accum(bi, t.grad_of(id).cwiseProduct(t.val(ai)));
  };
  return Var{id};
}

Var Tape::scale(Var a, double s) {
  int id = push(val(a.id) * s, needs(a), nullptr);
  int ai = a.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, ai, s](Tape& t) {
    t.accum(ai, Mat(t.grad_of(id) * s));
  };
  return Var{id};
}

Var Tape::matmul(Var a, Var b) {
  if (val(a.id).cols() != val(b.id).rows()) throw ShapeError("matmul: inner dimensions differ");
  int id = push(val(a.id) * val(b.id), needs(a) || needs(b), nullptr);
  int ai = a.id, bi = b.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, ai, bi](Tape& t) {
    t.accum(ai, Mat(t.grad_of(id) * t.val(bi).transpose()));
    t.accum(bi, Mat(t.val(ai).transpose() * t.grad_of(id)));
  };
  return Var{id};
}

Var Tape::matmul_nt(Var a, Var b) {
  if (val(a.id).cols() != val(b.id).cols()) throw ShapeError("matmul_nt: feature dimensions differ");
  int id = push(val(a.id) * val(b.id).transpose(), needs(a) || needs(b), nullptr);
  int ai = a.id, bi = b.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, ai, bi](Tape& t) {
    t.accum(ai, Mat(t.grad_of(id) * t.val(bi)));
    t.accum(bi, Mat(t.grad_of(id).transpose() * t.val(ai)));
  };
  return Var{id};
}

Var Tape::concat_cols(Var a, Var b) {
  if (val(a.id).rows() != val(b.id).rows()) throw ShapeError("concat_cols: row counts differ");
  Mat out(val(a.id).rows(), val(a.id).cols() + val(b.id).cols());
  out << val(a.id), val(b.id);
  int id = push(std::move(out), needs(a) || needs(b), nullptr);
  int ai = a.id, bi = b.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, ai, bi](Tape& t) {
    const Mat& g = t.grad_of(id);
    Eigen::Index ac = t.val(ai).cols();
    t.accum(ai, Mat(g.leftCols(ac)));
    t.accum(bi, Mat(g.rightCols(g.cols() - ac)));
  };
  return Var{id};
}

Var Tape::concat_rows(Var a, Var b) {
  if (val(a.id).cols() != val(b.id).cols()) throw ShapeError("concat_rows: column counts differ");
  Mat out(val(a.id).rows() + val(b.id).rows(), val(a.id).cols());
  out << val(a.id), val(b.id);
  int id = push(std::move(out), needs(a) || needs(b), nullptr);
  int ai = a.id, bi = b.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, ai, bi](Tape& t) {
    const Mat& g = t.grad_of(id);
    Eigen::Index ar = t.val(ai).rows();
    t.accum(ai, Mat(g.topRows(ar)));
    t.accum(bi, Mat(g.bottomRows(g.rows() - ar)));
  };
  return Var{id};
}

Var Tape::slice_rows(Var a, int first, int count) {
  if (first < 0 || count <= 0 || first + count > val(a.id).rows())
    throw ShapeError("slice_rows: range out of bounds");
  int id = push(val(a.id).middleRows(first, count), needs(a), nullptr);
  int ai = a.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, ai, first, count](Tape& t) {
    Mat g = Mat::Zero(t.val(ai).rows(), t.val(ai).cols());
    g.middleRows(first, count) = t.grad_of(id);
    t.accum(ai, g);
  };
  return Var{id};
}

Var Tape::add_row_vector(Var x, Var bias) {
  if (val(bias.id).rows() != 1 || val(bias.id).cols() != val(x.id).cols())
    throw ShapeError("add_row_vector: bias must be 1 x cols(x)");
  Mat out = val(x.id);
  out.rowwise() += val(bias.id).row(0);
  int id = push(std::move(out), needs(x) || needs(bias), nullptr);
  int xi = x.id, bi = bias.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, xi, bi](Tape& t) {
    t.accum(xi, t.grad_of(id));
    t.accum(bi, Mat(t.grad_of(id).colwise().sum()));
  };
  return Var{id};
}

Var Tape::tanh(Var a) {
  int id = push(val(a.id).array().tanh().matrix(), needs(a), nullptr);
  int ai = a.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, ai](Tape& t) {
    const Mat& y = t.val(id);
    t.accum(ai, Mat(t.grad_of(id).cwiseProduct((1.0 - y.array().square()).matrix())));
  };
  return Var{id};
}

Var Tape::softmax_rows(Var a, const Mask* key_mask) {
  // Masked columns produce exactly-zero weights, which also zeroes their
  // gradient contribution below.
  int id = push(masked_softmax_rows(val(a.id), key_mask), needs(a), nullptr);
  int ai = a.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, ai](Tape& t) {
    const Mat& y = t.val(id);
    const Mat& g = t.grad_of(id);
    Mat gz(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      double dot = g.row(r).dot(y.row(r));
      gz.row(r) = y.row(r).cwiseProduct(g.row(r)) - dot * y.row(r);
    }
    t.accum(ai, gz);
  };
  return Var{id};
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const Mat& xv = val(x.id);
  Vec g = val(gain.id).row(0).transpose();
  Vec b = val(bias.id).row(0).transpose();
  int id = push(layer_norm_rows(xv, g, b, eps), needs(x) || needs(gain) || needs(bias), nullptr);
  int xi = x.id, gi = gain.id, bi = bias.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, xi, gi, bi, eps](Tape& t) {
    const Mat& xin = t.val(xi);
    const Mat& gout = t.grad_of(id);
    Eigen::RowVectorXd gr = t.val(gi).row(0);
    const double d = static_cast<double>(xin.cols());
    Mat gx(xin.rows(), xin.cols());
    Eigen::RowVectorXd ggain = Eigen::RowVectorXd::Zero(xin.cols());
    Eigen::RowVectorXd gbias = Eigen::RowVectorXd::Zero(xin.cols());
    for (Eigen::Index r = 0; r < xin.rows(); ++r) {
      double mu = xin.row(r).mean();
      double var = (xin.row(r).array() - mu).square().sum() / d;
      double inv = 1.0 / std::sqrt(var + eps);
      Eigen::RowVectorXd xhat = (xin.row(r).array() - mu).matrix() * inv;
      Eigen::RowVectorXd gy = gout.row(r);
      Eigen::RowVectorXd gxhat = gy.cwiseProduct(gr);
      double s1 = gxhat.mean();
      double s2 = gxhat.cwiseProduct(xhat).mean();
      gx.row(r) = (gxhat.array() - s1 - xhat.array() * s2).matrix() * inv;
      ggain += gy.cwiseProduct(xhat);
      gbias += gy;
    }
    t.accum(xi, gx);
    t.accum(gi, Mat(ggain));
    t.accum(bi, Mat(gbias));
  };
  return Var{id};
}

Var Tape::max_pool_rows(Var x, const Mask* row_mask) {
  Vec pooled = max_pool_rows_value(val(x.id), row_mask);
  Mask mask_copy;
  bool has_mask = row_mask != nullptr;
  if (has_mask) mask_copy = *row_mask;
  int id = push(Mat(pooled.transpose()), needs(x), nullptr);
  int xi = x.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, xi, has_mask, mask_copy](Tape& t) {
    const Mat& xin = t.val(xi);
    const Mat& g = t.grad_of(id);
    Mat gx = Mat::Zero(xin.rows(), xin.cols());
    for (Eigen::Index c = 0; c < xin.cols(); ++c) {
      // first unmasked argmax row, matching the forward cwiseMax order
      Eigen::Index best = -1;
      double bv = 0.0;
      for (Eigen::Index r = 0; r < xin.rows(); ++r) {
        if (has_mask && mask_copy[static_cast<std::size_t>(r)] == 0) continue;
        if (best < 0 || xin(r, c) > bv) {
          best = r;
          bv = xin(r, c);
        }
      }
      if (best >= 0) gx(best, c) += g(0, c);
    }
    t.accum(xi, gx);
  };
  return Var{id};
}

Var Tape::embedding_rows(Var table, const std::vector<int>& ids) {
  const Mat& tab = val(table.id);
  Mat out(static_cast<Eigen::Index>(ids.size()), tab.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tab.rows()) throw ArgumentError("embedding: token id out of range");
    out.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
  }
  int id = push(std::move(out), needs(table), nullptr);
  int ti = table.id;
  std::vector<int> ids_copy = ids;
  nodes_[static_cast<std::size_t>(id)].back = [id, ti, ids_copy](Tape& t) {
    Mat g = Mat::Zero(t.val(ti).rows(), t.val(ti).cols());
    const Mat& go = t.grad_of(id);
    for (std::size_t i = 0; i < ids_copy.size(); ++i)
      g.row(ids_copy[i]) += go.row(static_cast<Eigen::Index>(i));
    t.accum(ti, g);
  };
  return Var{id};
}

Var Tape::zero_masked_rows(Var x, const Mask& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != val(x.id).rows())
    throw ShapeError("zero_masked_rows: mask length does not match row count");
  Mat out = val(x.id);
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    if (mask[static_cast<std::size_t>(r)] == 0) out.row(r).setZero();
  int id = push(std::move(out), needs(x), nullptr);
  int xi = x.id;
  Mask mask_copy = mask;
  nodes_[static_cast<std::size_t>(id)].back = [id, xi, mask_copy](Tape& t) {
    Mat g = t.grad_of(id);
    for (Eigen::Index r = 0; r < g.rows(); ++r)
      if (mask_copy[static_cast<std::size_t>(r)] == 0) g.row(r).setZero();
    t.accum(xi, g);
  };
  return Var{id};
}

Var Tape::sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = val(a.id).sum();
  int id = push(std::move(out), needs(a), nullptr);
  int ai = a.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, ai](Tape& t) {
    double g = t.grad_of(id)(0, 0);
    t.accum(ai, Mat(Mat::Constant(t.val(ai).rows(), t.val(ai).cols(), g)));
  };
  return Var{id};
}

Var Tape::cross_entropy(Var logits, int target) {
  const Mat& z = val(logits.id);
  if (z.rows() != 1) throw ShapeError("cross_entropy: logits must be a 1xN row");
  if (target < 0 || target >= z.cols()) throw ArgumentError("cross_entropy: target out of range");
  double mx = z.maxCoeff();
  double lse = mx + std::log((z.array() - mx).exp().sum());
  Mat out(1, 1);
  out(0, 0) = lse - z(0, target);
  int id = push(std::move(out), needs(logits), nullptr);
  int zi = logits.id;
  nodes_[static_cast<std::size_t>(id)].back = [id, zi, target](Tape& t) {
    const Mat& zin = t.val(zi);
    double m = zin.maxCoeff();
    Eigen::ArrayXXd e = (zin.array() - m).exp();
    Mat p = (e / e.sum()).matrix();
    p(0, target) -= 1.0;
    t.accum(zi, Mat(p * t.grad_of(id)(0, 0)));
  };
  return Var{id};
}

void Tape::backward(Var root) {
  Node& r = nodes_[static_cast<std::size_t>(root.id)];
  if (r.val.rows() != 1 || r.val.cols() != 1) throw ShapeError("backward: root must be 1x1");
  for (auto& n : nodes_) n.grad_live = false;
  r.grad = Mat::Ones(1, 1);
  r.grad_live = true;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.requires_grad && n.grad_live && n.back) n.back(*this);
  }
}

}  // namespace dcqa

#include "restyle/tape.hpp"

#include <cmath>

#include "restyle/common.hpp"

namespace restyle::nn {

Param& ParamStore::add(const std::string& name, int rows, int cols) {
  check(find(name) == nullptr, "param store: duplicate name " + name);
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value.setZero(rows, cols);
  p->grad.setZero(rows, cols);
  params_.push_back(std::move(p));
  return *params_.back();
}

Param* ParamStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Param* ParamStore::find(const std::string& name) const {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

long ParamStore::scalar_count() const {
  long n = 0;
  for (auto& p : params_) n += p->value.size();
  return n;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p->zero_grad();
}

void ParamStore::init_uniform(std::mt19937_64& rng) {
  for (auto& p : params_) {
    // layer-norm gains start at one, biases and gains are 1-row vectors
    // initialized by their owners; generic weights get fan-in scaling
    double bound = 1.0 / std::sqrt(static_cast<double>(p->value.rows()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (long i = 0; i < p->value.size(); ++i) p->value.data()[i] = dist(rng);
  }
}

std::uint64_t ParamStore::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto& p : params_) {
    h = fnv1a(p->name.data(), p->name.size(), h);
    h = fnv1a(p->value.data(), sizeof(double) * static_cast<std::size_t>(p->value.size()), h);
  }
  return h;
}

void ParamStore::copy_values_from(const ParamStore& other) {
  check(params_.size() == other.params_.size(), "param store: layout mismatch in copy");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    check(params_[i]->name == other.params_[i]->name, "param store: name mismatch in copy");
    params_[i]->value = other.params_[i]->value;
  }
}

Node* Tape::make() {
  nodes_.emplace_back();
  return &nodes_.back();
}

void Tape::backward(Node* root) {
  check(grads_, "tape: backward on a grad-free tape");
  check(root->v->size() == 1, "tape: backward root must be scalar");
  root->g->setConstant(1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    if (it->back) it->back();
}

namespace {

Node* computed(Tape& t, Mat value) {
  Node* n = t.make();
  n->val = std::move(value);
  n->v = &n->val;
  if (t.grads()) {
    n->gbuf.setZero(n->val.rows(), n->val.cols());
    n->g = &n->gbuf;
  }
  return n;
}

}  // namespace

Node* constant(Tape& t, Mat m) { return computed(t, std::move(m)); }

Node* leaf(Tape& t, Param& p) {
  Node* n = t.make();
  n->v = &p.value;
  if (t.grads()) n->g = &p.grad;
  return n;
}

Node* add(Tape& t, Node* a, Node* b) {
  check(a->rows() == b->rows() && a->cols() == b->cols(), "add: shape mismatch");
  Node* out = computed(t, a->value() + b->value());
  if (t.grads())
    out->back = [a, b, out] {
      *a->g += out->gbuf;
      *b->g += out->gbuf;
    };
  return out;
}

Node* add_rowvec(Tape& t, Node* a, Node* bias) {
  check(bias->rows() == 1 && bias->cols() == a->cols(), "add_rowvec: bias must be 1 x cols");
  Mat v = a->value();
  v.rowwise() += bias->value().row(0);
  Node* out = computed(t, std::move(v));
  if (t.grads())
    out->back = [a, bias, out] {
      *a->g += out->gbuf;
      bias->g->row(0) += out->gbuf.colwise().sum();
    };
  return out;
}

Node* scale(Tape& t, Node* a, double s) {
  Node* out = computed(t, a->value() * s);
  if (t.grads())
    out->back = [a, out, s] { *a->g += s * out->gbuf; };
  return out;
}

Node* gelu(Tape& t, Node* a) {
  static const double kC = std::sqrt(2.0 / M_PI);
  const Mat& x = a->value();
  Mat u = kC * (x.array() + 0.044715 * x.array().cube());
  Mat th = u.array().tanh();
  Node* out = computed(t, (0.5 * x.array() * (1.0 + th.array())).matrix());
  if (t.grads())
    out->back = [a, out, x = x, th = std::move(th)] {
      static const double kC2 = std::sqrt(2.0 / M_PI);
      auto sech2 = 1.0 - th.array().square();
      auto du = kC2 * (1.0 + 3.0 * 0.044715 * x.array().square());
      Mat dydx = (0.5 * (1.0 + th.array()) + 0.5 * x.array() * sech2 * du).matrix();
      *a->g += (dydx.array() * out->gbuf.array()).matrix();
    };
  return out;
}

Node* matmul(Tape& t, Node* a, Node* b) {
  check(a->cols() == b->rows(), "matmul: inner dimension mismatch");
  Node* out = computed(t, a->value() * b->value());
  if (t.grads())
    out->back = [a, b, out] {
      a->g->noalias() += out->gbuf * b->value().transpose();
      b->g->noalias() += a->value().transpose() * out->gbuf;
    };
  return out;
}

Node* matmul_nt(Tape& t, Node* a, Node* b) {
  check(a->cols() == b->cols(), "matmul_nt: inner dimension mismatch");
  Node* out = computed(t, a->value() * b->value().transpose());
  if (t.grads())
    out->back = [a, b, out] {
      a->g->noalias() += out->gbuf * b->value();
      b->g->noalias() += out->gbuf.transpose() * a->value();
    };
  return out;
}

Node* slice_cols(Tape& t, Node* a, int col0, int ncols) {
  check(col0 >= 0 && col0 + ncols <= a->cols(), "slice_cols: out of range");
  Node* out = computed(t, a->value().middleCols(col0, ncols));
  if (t.grads())
    out->back = [a, out, col0, ncols] { a->g->middleCols(col0, ncols) += out->gbuf; };
  return out;
}

Node* concat_cols(Tape& t, const std::vector<Node*>& parts) {
  check(!parts.empty(), "concat_cols: no parts");
  int rows = parts[0]->rows(), cols = 0;
  for (Node* p : parts) {
    check(p->rows() == rows, "concat_cols: row mismatch");
    cols += p->cols();
  }
  Mat v(rows, cols);
  int off = 0;
  for (Node* p : parts) {
    v.middleCols(off, p->cols()) = p->value();
    off += p->cols();
  }
  Node* out = computed(t, std::move(v));
  if (t.grads())
    out->back = [parts, out] {
      int off = 0;
      for (Node* p : parts) {
        *p->g += out->gbuf.middleCols(off, p->cols());
        off += p->cols();
      }
    };
  return out;
}

Node* embedding_rows(Tape& t, Node* table, const std::vector<int>& ids) {
  check(!ids.empty(), "embedding_rows: empty id sequence");
  Mat v(static_cast<int>(ids.size()), table->cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < table->rows(), "embedding_rows: id out of range");
    v.row(static_cast<int>(i)) = table->value().row(ids[i]);
  }
  Node* out = computed(t, std::move(v));
  if (t.grads())
    out->back = [table, out, ids] {
      for (std::size_t i = 0; i < ids.size(); ++i)
        table->g->row(ids[i]) += out->gbuf.row(static_cast<int>(i));
    };
  return out;
}

Node* dropout(Tape& t, Node* a, double p, std::mt19937_64& rng) {
  check(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (p == 0.0) return a;
  std::bernoulli_distribution keep(1.0 - p);
  Mat mask(a->rows(), a->cols());
  double inv = 1.0 / (1.0 - p);
  for (long i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? inv : 0.0;
  Node* out = computed(t, (a->value().array() * mask.array()).matrix());
  if (t.grads())
    out->back = [a, out, mask = std::move(mask)] {
      *a->g += (out->gbuf.array() * mask.array()).matrix();
    };
  return out;
}

Node* softmax_rows(Tape& t, Node* scores,
                   const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>* allowed) {
  const Mat& s = scores->value();
  if (allowed) {
    check(allowed->rows() == s.rows() && allowed->cols() == s.cols(),
          "softmax_rows: mask shape mismatch");
  }
  Mat p(s.rows(), s.cols());
  for (int i = 0; i < s.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < s.cols(); ++j)
      if (!allowed || (*allowed)(i, j)) mx = std::max(mx, s(i, j));
    check(mx > -std::numeric_limits<double>::infinity(),
          "softmax_rows: row " + std::to_string(i) + " has no allowed positions");
    double z = 0.0;
    for (int j = 0; j < s.cols(); ++j) {
      double e = (!allowed || (*allowed)(i, j)) ? std::exp(s(i, j) - mx) : 0.0;
      p(i, j) = e;
      z += e;
    }
    p.row(i) /= z;
  }
  Node* out = computed(t, std::move(p));
  if (t.grads())
    out->back = [scores, out] {
      const Mat& p = out->val;
      for (int i = 0; i < p.rows(); ++i) {
        double dot = p.row(i).dot(out->gbuf.row(i));
        scores->g->row(i).array() +=
            p.row(i).array() * (out->gbuf.row(i).array() - dot);
      }
    };
  return out;
}

Node* layer_norm(Tape& t, Node* a, Node* gain, Node* bias, double eps) {
  check(gain->rows() == 1 && gain->cols() == a->cols(), "layer_norm: gain must be 1 x cols");
  check(bias->rows() == 1 && bias->cols() == a->cols(), "layer_norm: bias must be 1 x cols");
  const Mat& x = a->value();
  const int n = static_cast<int>(x.cols());
  Mat xhat(x.rows(), n);
  Eigen::VectorXd inv_sigma(x.rows());
  for (int i = 0; i < x.rows(); ++i) {
    double mu = x.row(i).mean();
    double var = (x.row(i).array() - mu).square().sum() / n;
    inv_sigma(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (x.row(i).array() - mu) * inv_sigma(i);
  }
  Mat y = (xhat.array().rowwise() * gain->value().row(0).array()).rowwise() +
          bias->value().row(0).array();
  Node* out = computed(t, std::move(y));
  if (t.grads())
    out->back = [a, gain, bias, out, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma), n] {
      const Mat& dy = out->gbuf;
      bias->g->row(0) += dy.colwise().sum();
      gain->g->row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
      for (int i = 0; i < dy.rows(); ++i) {
        Eigen::RowVectorXd dxhat = dy.row(i).array() * gain->value().row(0).array();
        double m1 = dxhat.mean();
        double m2 = (dxhat.array() * xhat.row(i).array()).mean();
        a->g->row(i).array() +=
            inv_sigma(i) * (dxhat.array() - m1 - xhat.row(i).array() * m2);
      }
    };
  return out;
}

double smoothed_xent(const Eigen::VectorXd& logits, int target_id, double smoothing,
                     Eigen::VectorXd* grad_logits) {
  const int v = static_cast<int>(logits.size());
  check(target_id >= 0 && target_id < v, "smoothed_xent: target out of range");
  check(smoothing >= 0.0 && smoothing < 1.0, "smoothed_xent: smoothing must be in [0,1)");
  Eigen::VectorXd logp = log_softmax_vec(logits);
  // q = (1-s) * onehot + s * uniform
  double uniform_w = smoothing / v;
  double loss = -uniform_w * logp.sum() - (1.0 - smoothing) * logp(target_id);
  if (grad_logits) {
    *grad_logits = logp.array().exp();
    grad_logits->array() -= uniform_w;
    (*grad_logits)(target_id) -= 1.0 - smoothing;
  }
  return loss;
}

Node* smoothed_xent_rows(Tape& t, Node* logits, const std::vector<int>& targets, double smoothing,
                         double weight) {
  check(static_cast<int>(targets.size()) == logits->rows(),
        "smoothed_xent_rows: one target per row required");
  const int rows = logits->rows();
  double total = 0.0;
  Mat grad;
  if (t.grads()) grad.setZero(rows, logits->cols());
  for (int i = 0; i < rows; ++i) {
    Eigen::VectorXd g;
    total += smoothed_xent(logits->value().row(i).transpose(), targets[i], smoothing,
                           t.grads() ? &g : nullptr);
    if (t.grads()) grad.row(i) = g.transpose();
  }
  double m = weight / rows;
  Node* out = computed(t, Mat::Constant(1, 1, total * m));
  if (t.grads())
    out->back = [logits, out, grad = std::move(grad), m] {
      *logits->g += out->gbuf(0, 0) * m * grad;
    };
  return out;
}

Node* reinforce_surrogate(Tape& t, Node* logits, const std::vector<int>& chosen,
                          const std::vector<double>& rewards) {
  check(chosen.size() == rewards.size(), "reinforce_surrogate: reward/token length mismatch");
  check(static_cast<int>(chosen.size()) == logits->rows(),
        "reinforce_surrogate: one chosen token per row required");
  const int n = logits->rows();
  double total = 0.0;
  Mat grad;
  if (t.grads()) grad.setZero(n, logits->cols());
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd logp = log_softmax_vec(logits->value().row(i).transpose());
    check(chosen[i] >= 0 && chosen[i] < logits->cols(), "reinforce_surrogate: token out of range");
    total += -rewards[i] * logp(chosen[i]) / n;
    if (t.grads()) {
      Eigen::VectorXd p = logp.array().exp();
      p(chosen[i]) -= 1.0;
      grad.row(i) = (rewards[i] / n) * p.transpose();
    }
  }
  Node* out = computed(t, Mat::Constant(1, 1, total));
  if (t.grads())
    out->back = [logits, out, grad = std::move(grad)] { *logits->g += out->gbuf(0, 0) * grad; };
  return out;
}

Eigen::VectorXd softmax_vec(const Eigen::VectorXd& logits) {
  Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

Eigen::VectorXd log_softmax_vec(const Eigen::VectorXd& logits) {
  double mx = logits.maxCoeff();
  double lse = std::log((logits.array() - mx).exp().sum()) + mx;
  return logits.array() - lse;
}

bool all_finite(const Mat& m) { return m.allFinite(); }

double grad_check(ParamStore& params, const std::function<double()>& fn, double epsilon) {
  check(epsilon >= 1e-7 && epsilon <= 1e-3, "grad_check: epsilon out of the supported range");
  double max_rel = 0.0;
  for (auto& p : params.all()) {
    for (long i = 0; i < p->value.size(); ++i) {
      double saved = p->value.data()[i];
      p->value.data()[i] = saved + epsilon;
      double f_plus = fn();
      p->value.data()[i] = saved - epsilon;
      double f_minus = fn();
      p->value.data()[i] = saved;
      double numeric = (f_plus - f_minus) / (2.0 * epsilon);
      double analytic = p->grad.data()[i];
      double rel = std::abs(analytic - numeric) /
                   std::max({std::abs(analytic), std::abs(numeric), 1e-12});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace restyle::nn

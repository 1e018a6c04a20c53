#pragma once

#include <Eigen/Core>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace restyle::nn {

using Mat = Eigen::MatrixXd;

/// A named trainable matrix with its gradient accumulator. Lives in a
/// ParamStore; tape nodes reference it without copying.
struct Param {
  std::string name;
  Mat value;
  Mat grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class ParamStore {
 public:
  Param& add(const std::string& name, int rows, int cols);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  const std::vector<std::unique_ptr<Param>>& all() const { return params_; }
  std::size_t count() const { return params_.size(); }
  long scalar_count() const;
  void zero_grads();

  // uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
  void init_uniform(std::mt19937_64& rng);

  // bit-exact byte hash of every value, in registration order
  std::uint64_t checksum() const;

  void copy_values_from(const ParamStore& other);

 private:
  std::vector<std::unique_ptr<Param>> params_;
};

/// One value in a forward pass. `v` aliases either the node's own storage or
/// a Param's matrix; `g` is null when the tape runs grad-free.
struct Node {
  Mat val;
  const Mat* v = nullptr;
  Mat gbuf;
  Mat* g = nullptr;
  std::function<void()> back;

  const Mat& value() const { return *v; }
  int rows() const { return static_cast<int>(v->rows()); }
  int cols() const { return static_cast<int>(v->cols()); }
};

/// Define-by-run tape. Ops append nodes in execution order; backward() runs
/// their closures in reverse. Gradients for Param leaves accumulate directly
/// into Param::grad, so one tape per example composes with batched updates.
class Tape {
 public:
  explicit Tape(bool grads = true) : grads_(grads) {}
  bool grads() const { return grads_; }

  Node* make();
  void backward(Node* root);
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  std::deque<Node> nodes_;
  bool grads_;
};

// ---- leaves ----
Node* constant(Tape& t, Mat m);
Node* leaf(Tape& t, Param& p);

// ---- elementwise / structural ops ----
Node* add(Tape& t, Node* a, Node* b);                 // same shape
Node* add_rowvec(Tape& t, Node* a, Node* bias);       // bias is 1 x cols
Node* scale(Tape& t, Node* a, double s);
Node* gelu(Tape& t, Node* a);                         // tanh approximation
Node* matmul(Tape& t, Node* a, Node* b);              // (m,k)x(k,n)
Node* matmul_nt(Tape& t, Node* a, Node* b);           // a * b^T
Node* slice_cols(Tape& t, Node* a, int col0, int ncols);
Node* concat_cols(Tape& t, const std::vector<Node*>& parts);
Node* embedding_rows(Tape& t, Node* table, const std::vector<int>& ids);
Node* dropout(Tape& t, Node* a, double p, std::mt19937_64& rng);

// Row-wise masked softmax. allowed may be null (everything attends);
// otherwise allowed(i,j)==false rows get exactly zero probability at j.
// Every row must keep at least one allowed position.
Node* softmax_rows(Tape& t, Node* scores,
                   const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>* allowed);

// Per-row layer normalization with learned gain/bias (both 1 x cols).
Node* layer_norm(Tape& t, Node* a, Node* gain, Node* bias, double eps = 1e-5);

// ---- losses (scalar 1x1 nodes) ----

// Mean over rows of label-smoothed cross entropy; `weight` rescales the
// whole term (used to form token-level means across a batch).
Node* smoothed_xent_rows(Tape& t, Node* logits, const std::vector<int>& targets, double smoothing,
                         double weight = 1.0);

// REINFORCE surrogate -(1/n) sum_t R_t * log p_t(chosen_t); rewards are
// constants, gradient flows into the logits only.
Node* reinforce_surrogate(Tape& t, Node* logits, const std::vector<int>& chosen,
                          const std::vector<double>& rewards);

// ---- plain math helpers (no tape) ----

// Single-distribution smoothed cross entropy; returns loss, optionally
// writes d(loss)/d(logits) = p - q.
double smoothed_xent(const Eigen::VectorXd& logits, int target_id, double smoothing,
                     Eigen::VectorXd* grad_logits = nullptr);

Eigen::VectorXd softmax_vec(const Eigen::VectorXd& logits);
Eigen::VectorXd log_softmax_vec(const Eigen::VectorXd& logits);

bool all_finite(const Mat& m);

// Central finite differences over every scalar in the store, compared with
// the analytic gradients already held in Param::grad. Returns the max
// relative error |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
double grad_check(ParamStore& params, const std::function<double()>& fn, double epsilon);

}  // namespace restyle::nn

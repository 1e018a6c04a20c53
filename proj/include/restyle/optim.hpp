#pragma once

#include "restyle/transformer.hpp"

namespace restyle::nn {

/// Adam with decoupled weight decay. State tensors ride along in checkpoints
/// so training resumes bit-exactly.
class AdamW {
 public:
  AdamW(ParamStore& store, double lr, double weight_decay = 0.01, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8);

  void step();  // consumes Param::grad; caller zeroes grads afterwards
  int steps_taken() const { return t_; }
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void put_state(TensorFile& f, const std::string& prefix) const;
  void get_state(const TensorFile& f, const std::string& prefix);

 private:
  ParamStore* store_;
  std::vector<Mat> m_, v_;
  int t_ = 0;
  double lr_, wd_, b1_, b2_, eps_;
};

}  // namespace restyle::nn

#include "restyle/optim.hpp"

#include <cmath>

#include "restyle/common.hpp"

namespace restyle::nn {

AdamW::AdamW(ParamStore& store, double lr, double weight_decay, double beta1, double beta2,
             double eps)
    : store_(&store), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
  for (const auto& p : store.all()) {
    m_.emplace_back(Mat::Zero(p->value.rows(), p->value.cols()));
    v_.emplace_back(Mat::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, t_);
  const double bc2 = 1.0 - std::pow(b2_, t_);
  const auto& params = store_->all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i];
    m_[i] = b1_ * m_[i] + (1.0 - b1_) * p.grad;
    v_[i] = (b2_ * v_[i].array() + (1.0 - b2_) * p.grad.array().square()).matrix();
    auto mhat = m_[i].array() / bc1;
    auto vhat = v_[i].array() / bc2;
    p.value.array() -= lr_ * (mhat / (vhat.sqrt() + eps_) + wd_ * p.value.array());
  }
}

void AdamW::put_state(TensorFile& f, const std::string& prefix) const {
  f.meta[prefix + "t"] = std::to_string(t_);
  const auto& params = store_->all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    f.tensors.emplace_back(prefix + "m." + params[i]->name, m_[i]);
    f.tensors.emplace_back(prefix + "v." + params[i]->name, v_[i]);
  }
}

void AdamW::get_state(const TensorFile& f, const std::string& prefix) {
  t_ = std::stoi(f.meta.at(prefix + "t"));
  const auto& params = store_->all();
  auto find = [&](const std::string& name) -> const Mat& {
    for (const auto& kv : f.tensors)
      if (kv.first == name) return kv.second;
    fail("checkpoint: missing optimizer tensor " + name);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = find(prefix + "m." + params[i]->name);
    v_[i] = find(prefix + "v." + params[i]->name);
  }
}

}  // namespace restyle::nn

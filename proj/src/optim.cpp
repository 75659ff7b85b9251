#include "onetracker/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace onetracker {

AdamW::AdamW(AdamWConfig cfg) : cfg_(cfg) {}

void AdamW::add_group(std::vector<Parameter*> params, double lr) {
  Group g;
  g.lr = lr;
  g.params = std::move(params);
  g.slots.resize(g.params.size());
  for (size_t i = 0; i < g.params.size(); ++i) {
    Parameter* p = g.params[i];
    if (p == nullptr) throw std::runtime_error("AdamW::add_group: null parameter");
    if (!p->frozen) {
      const size_t n = static_cast<size_t>(p->tensor.numel());
      g.slots[i].m.assign(n, 0.0);
      g.slots[i].v.assign(n, 0.0);
    }
  }
  groups_.push_back(std::move(g));
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (Group& g : groups_) {
    for (size_t i = 0; i < g.params.size(); ++i) {
      Parameter* p = g.params[i];
      if (p->frozen) continue;
      if (!p->tensor.has_grad()) {
        throw std::runtime_error("AdamW::step: parameter '" + p->name + "' has no gradient");
      }
      Slot& s = g.slots[i];
      auto w = p->tensor.data_mut();
      const auto grad = p->tensor.grad();
      for (size_t j = 0; j < w.size(); ++j) {
        const double gj = grad[j];
        s.m[j] = cfg_.beta1 * s.m[j] + (1.0 - cfg_.beta1) * gj;
        s.v[j] = cfg_.beta2 * s.v[j] + (1.0 - cfg_.beta2) * gj * gj;
        const double mhat = s.m[j] / bc1;
        const double vhat = s.v[j] / bc2;
        w[j] -= g.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[j]);
      }
    }
  }
}

void AdamW::zero_grad() {
  for (Group& g : groups_)
    for (Parameter* p : g.params)
      if (!p->frozen) p->tensor.zero_grad();
}

size_t AdamW::moment_count() const {
  size_t n = 0;
  for (const Group& g : groups_)
    for (const Parameter* p : g.params)
      if (!p->frozen) ++n;
  return n;
}

}  // namespace onetracker

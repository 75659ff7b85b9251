#pragma once

#include <string>
#include <vector>

#include "onetracker/tensor.hpp"

namespace onetracker {

/// A named trainable (or deliberately frozen) tensor.
struct Parameter {
  Tensor tensor;
  std::string name;
  bool frozen = false;

  Parameter() = default;
  Parameter(Tensor t, std::string n, bool f = false)
      : tensor(std::move(t)), name(std::move(n)), frozen(f) {
    tensor.set_requires_grad(!frozen);
  }
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Decoupled-weight-decay Adam over parameter groups with per-group learning
/// rates.  Moment buffers are allocated only for non-frozen parameters;
/// frozen parameters are never read or written by step().
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {});

  /// Registers a group.  Frozen parameters may be passed but are skipped.
  void add_group(std::vector<Parameter*> params, double lr);

  /// Applies one update from the accumulated gradients.  Throws
  /// std::runtime_error if a non-frozen parameter has no gradient.
  void step();

  /// Clears gradients on every registered non-frozen parameter.
  void zero_grad();

  int64_t step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  /// Number of parameters that own first/second moment buffers.
  size_t moment_count() const;

 private:
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
  };
  struct Group {
    std::vector<Parameter*> params;
    std::vector<Slot> slots;  // parallel to params; empty slot for frozen
    double lr = 0.0;
  };

  AdamWConfig cfg_;
  std::vector<Group> groups_;
  int64_t t_ = 0;
};

}  // namespace onetracker

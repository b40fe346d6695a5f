#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mars/rng.hpp"
#include "mars/tensor.hpp"

namespace mars {

// One gradient buffer per parameter, indexed by parameter id and shaped like
// the parameter. Parallel workers each own a tape and merge by summation.
class GradTape {
 public:
  GradTape() = default;
  explicit GradTape(std::span<const Tensor2> params);

  Tensor2& operator[](std::size_t id) { return grads_.at(id); }
  const Tensor2& operator[](std::size_t id) const { return grads_.at(id); }
  std::size_t size() const noexcept { return grads_.size(); }

  void zero();
  void scale(double factor);
  void merge(const GradTape& other);
  bool matches(std::span<const Tensor2> params) const;

  std::span<const Tensor2> buffers() const noexcept { return grads_; }

 private:
  std::vector<Tensor2> grads_;
};

struct RmspropOptions {
  double learning_rate = 0.001;
  double decay = 0.9;
  double epsilon = 1e-8;
};

struct RmspropState {
  RmspropOptions options;
  std::vector<Tensor2> accumulators;

  RmspropState() = default;
  RmspropState(std::span<const Tensor2> params, RmspropOptions opts);
};

// acc <- decay*acc + (1-decay)*g^2 ; theta <- theta - lr*g/(sqrt(acc)+eps).
// `names` labels parameters in the error raised for a non-finite gradient.
void rmsprop_step(std::span<Tensor2> params, const GradTape& grads, RmspropState& state,
                  std::span<const std::string> names = {});

struct GradProbeTarget {
  std::string name;
  Tensor2* value = nullptr;
  const Tensor2* analytic = nullptr;
  // Column excluded from probing (not a trainable entry), e.g. the PAD embedding.
  std::size_t frozen_column = static_cast<std::size_t>(-1);
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  std::vector<std::pair<std::string, double>> per_target;
};

// |a - n| / max(1e-8, |a| + |n|)
double gradient_relative_error(double analytic, double numeric);

// Compares analytic gradients against central differences
// (f(θ+h) - f(θ-h)) / 2h at `probes_per_target` random entries of every
// target. loss_fn must read the current parameter values; each probed entry
// is restored bit-exactly afterwards.
GradCheckResult finite_diff_check(const std::function<double()>& loss_fn,
                                  std::span<const GradProbeTarget> targets,
                                  std::size_t probes_per_target, double h, Rng& rng);

}  // namespace mars

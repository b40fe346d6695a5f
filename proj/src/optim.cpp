#include "mars/optim.hpp"

#include <algorithm>
#include <cmath>

#include "mars/error.hpp"

namespace mars {

GradTape::GradTape(std::span<const Tensor2> params) {
  grads_.reserve(params.size());
  for (const auto& p : params) grads_.emplace_back(p.rows(), p.cols());
}

void GradTape::zero() {
  for (auto& g : grads_) g.fill(0.0);
}

void GradTape::scale(double factor) {
  for (auto& g : grads_) {
    for (double& x : g.data()) x *= factor;
  }
}

void GradTape::merge(const GradTape& other) {
  if (other.grads_.size() != grads_.size()) throw InputError("GradTape::merge: tape size mismatch");
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    if (!grads_[i].same_shape(other.grads_[i])) throw InputError("GradTape::merge: shape mismatch");
    axpy(1.0, other.grads_[i].data(), grads_[i].data());
  }
}

bool GradTape::matches(std::span<const Tensor2> params) const {
  if (params.size() != grads_.size()) return false;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads_[i])) return false;
  }
  return true;
}

RmspropState::RmspropState(std::span<const Tensor2> params, RmspropOptions opts) : options(opts) {
  accumulators.reserve(params.size());
  for (const auto& p : params) accumulators.emplace_back(p.rows(), p.cols());
}

void rmsprop_step(std::span<Tensor2> params, const GradTape& grads, RmspropState& state,
                  std::span<const std::string> names) {
  if (!grads.matches(params) || state.accumulators.size() != params.size()) {
    throw InputError("rmsprop_step: parameter, gradient and state shapes differ");
  }
  const auto& opt = state.options;
  for (std::size_t id = 0; id < params.size(); ++id) {
    const auto g = grads[id].data();
    if (!std::all_of(g.begin(), g.end(), [](double x) { return std::isfinite(x); })) {
      const std::string label = id < names.size() ? names[id] : "#" + std::to_string(id);
      throw TrainingError("non-finite gradient for parameter " + label);
    }
  }
  for (std::size_t id = 0; id < params.size(); ++id) {
    auto theta = params[id].data();
    auto acc = state.accumulators[id].data();
    const auto g = grads[id].data();
    for (std::size_t k = 0; k < theta.size(); ++k) {
      acc[k] = opt.decay * acc[k] + (1.0 - opt.decay) * g[k] * g[k];
      theta[k] -= opt.learning_rate * g[k] / (std::sqrt(acc[k]) + opt.epsilon);
    }
  }
}

double gradient_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

GradCheckResult finite_diff_check(const std::function<double()>& loss_fn,
                                  std::span<const GradProbeTarget> targets,
                                  std::size_t probes_per_target, double h, Rng& rng) {
  if (!(h > 0.0)) throw InputError("finite_diff_check: step must be positive");
  GradCheckResult result;
  for (const auto& target : targets) {
    if (target.value == nullptr || target.analytic == nullptr ||
        !target.value->same_shape(*target.analytic)) {
      throw InputError("finite_diff_check: target '" + target.name + "' is malformed");
    }
    double worst = 0.0;
    const std::size_t cols = target.value->cols();
    const std::size_t total = target.value->size();
    const bool has_frozen = target.frozen_column < cols;
    if (total == 0 || (has_frozen && cols == 1)) {
      result.per_target.emplace_back(target.name, 0.0);
      continue;
    }
    for (std::size_t p = 0; p < probes_per_target; ++p) {
      std::size_t flat;
      do {
        flat = rng.uniform_index(total);
      } while (has_frozen && flat % cols == target.frozen_column);
      double& entry = target.value->data()[flat];
      const double original = entry;
      entry = original + h;
      const double plus = loss_fn();
      entry = original - h;
      const double minus = loss_fn();
      entry = original;
      const double numeric = (plus - minus) / (2.0 * h);
      const double analytic = target.analytic->data()[flat];
      worst = std::max(worst, gradient_relative_error(analytic, numeric));
      ++result.probes;
    }
    result.per_target.emplace_back(target.name, worst);
    result.max_rel_error = std::max(result.max_rel_error, worst);
  }
  return result;
}

}  // namespace mars

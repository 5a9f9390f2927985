#pragma once

#include "gmop/neural/params.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gmop::neural {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over trainable parameters; zeroes all gradients and bumps store.step.
// A non-finite gradient anywhere rejects the whole update with NumericError naming the parameter.
void adam_step(ParamStore& store, const AdamConfig& config);

// Rescales trainable gradients so their joint L2 norm is at most `max_norm`. Returns the norm before clipping.
double clip_grad_norm(ParamStore& store, double max_norm);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> params;
  double max_rel_error = 0.0;
  double tol = 0.0;
  bool pass = false;
};

struct GradCheckOptions {
  double step = 1e-5;
  // Entries checked per parameter; 0 checks all of them, otherwise a seeded random subset.
  std::size_t max_entries = 0;
  std::uint64_t seed = 0;
};

// Evaluates the loss at the current parameter values. When `with_grad` is set it must also
// accumulate d(loss)/d(param) into the store's gradient slots.
using LossFn = std::function<double(ParamStore& store, bool with_grad)>;

// Central differences against the analytic gradient; relative error uses max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const LossFn& loss_fn, ParamStore& store, double tol,
                           const GradCheckOptions& options = {});

}  // namespace gmop::neural

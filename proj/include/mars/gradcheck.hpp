#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mars/data.hpp"
#include "mars/model.hpp"
#include "mars/optim.hpp"

namespace mars {

// A 3-user / 8-item instance with short padded documents over a
// 12-word vocabulary (PAD included).
struct ToyInstance {
  InteractionDataset dataset;
  std::vector<EncodedDocument> documents;
  std::size_t vocab_size = 0;
};

ToyInstance toy_instance();

struct GradcheckOptions {
  Variant variant = Variant::Full;
  std::uint64_t seed = 1;
  double step = 1e-5;
  std::size_t quadruples = 6;
  std::size_t probes_per_group = 64;
  double lambda = 0.05;
  bool share_embeddings = false;
};

struct GradcheckReport {
  GradCheckResult result;
  double threshold = 1e-4;

  bool passed() const noexcept { return result.max_rel_error < threshold; }
  std::string to_text() const;
};

// Random parameters (biases included, so no unit sits exactly on a ReLU
// kink), a sampled batch of quadruples, and central differences on every
// parameter group the variant uses.
GradcheckReport run_gradcheck(const GradcheckOptions& options = {});

}  // namespace mars

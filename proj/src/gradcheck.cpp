#include "mars/gradcheck.hpp"

#include <cstdio>
#include <sstream>

#include "mars/trainer.hpp"

namespace mars {

ToyInstance toy_instance() {
  constexpr std::size_t kMaxLen = 8;
  const std::vector<std::vector<TokenIndex>> tokens{
      {1, 2, 3, 4, 5}, {2, 6, 7},          {8, 9, 1, 10, 11, 3, 2}, {4, 4, 5},
      {11, 10},        {6, 1, 9, 8, 7, 5}, {3, 2, 1, 6, 11, 8, 9, 4}, {7, 10, 2},
  };
  ToyInstance toy;
  toy.vocab_size = 12;
  std::vector<std::string> item_ids;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    EncodedDocument doc;
    doc.item_id = "item" + std::to_string(i);
    doc.indices = tokens[i];
    doc.true_length = tokens[i].size();
    doc.indices.resize(kMaxLen, kPadIndex);
    item_ids.push_back(doc.item_id);
    toy.documents.push_back(std::move(doc));
  }
  std::vector<UserSplit> splits{
      {{0, 1, 2, 3}, {}, {}},
      {{2, 4, 5, 6}, {}, {}},
      {{1, 5, 7}, {}, {}},
  };
  toy.dataset = InteractionDataset::from_parts({"alice", "bob", "carol"}, item_ids, splits);
  return toy;
}

std::string GradcheckReport::to_text() const {
  std::ostringstream out;
  char buf[64];
  for (const auto& [name, err] : result.per_target) {
    std::snprintf(buf, sizeof buf, "%.3e", err);
    out << name << ": " << buf << "\n";
  }
  std::snprintf(buf, sizeof buf, "%.3e", result.max_rel_error);
  out << "max relative error: " << buf << " over " << result.probes << " probes (threshold ";
  std::snprintf(buf, sizeof buf, "%.0e", threshold);
  out << buf << ") " << (passed() ? "PASS" : "FAIL") << "\n";
  return out.str();
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  const ToyInstance toy = toy_instance();
  ModelHyper hyper;
  hyper.embedding_dim = 4;
  hyper.filters = 3;
  hyper.window = 3;
  hyper.latent_dim = 3;
  hyper.lambda_user = options.lambda;
  hyper.lambda_item = options.lambda;
  hyper.variant = options.variant;
  hyper.share_embeddings = options.share_embeddings;
  hyper.vocab_size = toy.vocab_size;
  hyper.num_items = toy.dataset.num_items();
  hyper.init_stddev = 0.5;

  Rng rng(options.seed);
  ModelParams params = ModelParams::initialize(hyper, rng);
  for (auto id : {ParamId::UserConvBias, ParamId::ItemConvBias, ParamId::UserDenseBias, ParamId::ItemDenseBias}) {
    for (double& b : params[id].data()) b = rng.normal(0.0, 0.1);
  }

  const QuadrupleSampler sampler(toy.dataset, 3);
  std::vector<Quadruple> batch;
  for (std::size_t k = 0; k < options.quadruples; ++k) batch.push_back(sampler.sample(rng));

  GradTape grads(params.all());
  batch_loss(params, toy.documents, batch, &grads);

  const auto names = params.names();
  std::vector<GradProbeTarget> targets;
  for (std::size_t id = 0; id < kParamCount; ++id) {
    if (params.tensors[id].empty()) continue;
    GradProbeTarget t;
    t.name = names[id];
    t.value = &params.tensors[id];
    t.analytic = &grads[id];
    const auto pid = static_cast<ParamId>(id);
    if (pid == ParamId::UserEmbedding || pid == ParamId::ItemEmbedding) t.frozen_column = kPadIndex;
    targets.push_back(std::move(t));
  }

  GradcheckReport report;
  report.result = finite_diff_check([&] { return batch_loss(params, toy.documents, batch, nullptr); }, targets,
                                    options.probes_per_group, options.step, rng);
  return report;
}

}  // namespace mars

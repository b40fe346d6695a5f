#include "mars/explain.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mars/error.hpp"
#include "mars/eval.hpp"

namespace mars {

using nlohmann::json;

json Explanation::to_json() const {
  json list = json::array();
  for (const auto& c : contributors) list.push_back({{"item_id", c.item_id}, {"weight", c.weight}});
  return {{"user_id", user_id}, {"item_id", item_id}, {"score", score}, {"contributors", list}};
}

std::string Explanation::to_text() const {
  std::ostringstream out;
  out << "Recommended for " << user_id << ": " << item_id << "\n";
  out << "Because you liked:\n";
  for (const auto& c : contributors) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", c.weight);
    out << "  " << c.item_id << " (" << buf << ")\n";
  }
  return out.str();
}

Explanation explain(const Recommender& recommender, const InteractionDataset& dataset, UserIndex user,
                    ItemIndex item, std::size_t top_k) {
  if (user >= dataset.num_users()) throw InputError("unknown user index " + std::to_string(user));
  if (item >= dataset.num_items()) throw InputError("unknown item index " + std::to_string(item));
  if (top_k < 1) throw UsageError("top_k must be >= 1");
  const auto& liked = dataset.split(user).train;
  if (liked.empty()) throw ColdUserError("user '" + dataset.user_id(user) + "' has no liked items to explain with");

  const MemoryBank bank = recommender.memory(user, liked, item);
  AttentionVector attn;
  Explanation e;
  e.user = user;
  e.user_id = dataset.user_id(user);
  e.item = item;
  e.item_id = dataset.item_id(item);
  e.score = recommender.score_candidate(bank, item, &attn);

  std::vector<std::size_t> order(bank.slots());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (attn.weights[a] != attn.weights[b]) return attn.weights[a] > attn.weights[b];
    return bank.sources[a] < bank.sources[b];
  });
  order.resize(std::min(top_k, order.size()));
  for (std::size_t m : order) {
    e.contributors.push_back({bank.sources[m], dataset.item_id(bank.sources[m]), attn.weights[m]});
  }
  return e;
}

RankedList recommend(const Recommender& recommender, const InteractionDataset& dataset, UserIndex user,
                     std::size_t top_n, bool exclude_validation) {
  if (user >= dataset.num_users()) throw InputError("unknown user index " + std::to_string(user));
  if (top_n < 1) throw UsageError("top must be >= 1");
  const auto& liked = dataset.split(user).train;
  if (liked.empty()) throw ColdUserError("user '" + dataset.user_id(user) + "' has no liked items");
  const auto candidates = candidate_universe(dataset, user, EvalSplit::Test, exclude_validation);
  RankedList ranked = recommender.rank(user, liked, candidates);
  if (ranked.items.size() > top_n) {
    ranked.items.resize(top_n);
    ranked.scores.resize(top_n);
  }
  return ranked;
}

}  // namespace mars

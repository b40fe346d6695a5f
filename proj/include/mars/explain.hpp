#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "mars/data.hpp"
#include "mars/model.hpp"

namespace mars {

inline constexpr std::size_t kDefaultExplainTopK = 3;

struct Contributor {
  ItemIndex item = 0;
  std::string item_id;
  double weight = 0.0;
};

// "Because you liked": the liked items carrying the most attention when the
// recommended item was scored.
struct Explanation {
  UserIndex user = 0;
  std::string user_id;
  ItemIndex item = 0;
  std::string item_id;
  double score = 0.0;
  std::vector<Contributor> contributors;  // descending weight, ties by ascending item

  nlohmann::json to_json() const;
  std::string to_text() const;  // weights to 3 decimals
};

// Rebuilds the inference memory for `user` against `item` and returns the
// top_k memory items by attention weight. Throws ColdUserError when the user
// has no memory items.
Explanation explain(const Recommender& recommender, const InteractionDataset& dataset, UserIndex user,
                    ItemIndex item, std::size_t top_k = kDefaultExplainTopK);

// Top-N recommendations over the test-time candidate universe.
RankedList recommend(const Recommender& recommender, const InteractionDataset& dataset, UserIndex user,
                     std::size_t top_n, bool exclude_validation = true);

}  // namespace mars

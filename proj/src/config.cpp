#include "mars/config.hpp"

#include "mars/error.hpp"

namespace mars {

using nlohmann::json;

void TrainConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw UsageError(std::string(name) + " must be >= 1");
  };
  positive(epochs, "epochs");
  positive(batch_size, "batch_size");
  positive(embedding_dim, "e");
  positive(filters, "g");
  positive(window, "c");
  positive(latent_dim, "K");
  positive(memory_train, "M_max_train");
  positive(memory_eval, "M_max_eval");
  positive(patience, "patience");
  if (!(learning_rate >= 0.0)) throw UsageError("learning_rate must be >= 0");
  if (!(lambda_user >= 0.0) || !(lambda_item >= 0.0)) throw UsageError("lambda_u and lambda_v must be >= 0");
  if (!(rmsprop_decay > 0.0 && rmsprop_decay < 1.0)) throw UsageError("rmsprop_decay must lie in (0, 1)");
  if (!(rmsprop_epsilon > 0.0)) throw UsageError("rmsprop_epsilon must be > 0");
  if (!(init_stddev >= 0.0)) throw UsageError("init_stddev must be >= 0");
}

ModelHyper TrainConfig::hyper(std::size_t vocab_size, std::size_t num_items) const {
  ModelHyper h;
  h.embedding_dim = embedding_dim;
  h.filters = filters;
  h.window = window;
  h.latent_dim = latent_dim;
  h.lambda_user = lambda_user;
  h.lambda_item = lambda_item;
  h.variant = variant;
  h.share_embeddings = share_embeddings;
  h.vocab_size = vocab_size;
  h.num_items = num_items;
  h.init_stddev = init_stddev;
  return h;
}

json TrainConfig::to_json() const {
  return {
      {"epochs", epochs},
      {"batch_size", batch_size},
      {"learning_rate", learning_rate},
      {"lambda_u", lambda_user},
      {"lambda_v", lambda_item},
      {"e", embedding_dim},
      {"g", filters},
      {"c", window},
      {"K", latent_dim},
      {"M_max_train", memory_train},
      {"M_max_eval", memory_eval},
      {"seed", seed},
      {"variant", std::string(to_string(variant))},
      {"patience", patience},
      {"share_embeddings", share_embeddings},
      {"rmsprop_decay", rmsprop_decay},
      {"rmsprop_epsilon", rmsprop_epsilon},
      {"init_stddev", init_stddev},
  };
}

TrainConfig TrainConfig::from_json(const json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "lambda_u") c.lambda_user = value.get<double>();
      else if (key == "lambda_v") c.lambda_item = value.get<double>();
      else if (key == "e") c.embedding_dim = value.get<std::size_t>();
      else if (key == "g") c.filters = value.get<std::size_t>();
      else if (key == "c") c.window = value.get<std::size_t>();
      else if (key == "K") c.latent_dim = value.get<std::size_t>();
      else if (key == "M_max_train") c.memory_train = value.get<std::size_t>();
      else if (key == "M_max_eval") c.memory_eval = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "variant") c.variant = parse_variant(value.get<std::string>());
      else if (key == "patience") c.patience = value.get<std::size_t>();
      else if (key == "share_embeddings") c.share_embeddings = value.get<bool>();
      else if (key == "rmsprop_decay") c.rmsprop_decay = value.get<double>();
      else if (key == "rmsprop_epsilon") c.rmsprop_epsilon = value.get<double>();
      else if (key == "init_stddev") c.init_stddev = value.get<double>();
      else throw UsageError("unknown config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace mars

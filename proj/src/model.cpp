#include "mars/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mars/error.hpp"

namespace mars {

namespace {

constexpr std::array<std::string_view, kParamCount> kParamNames = {
    "user.embedding", "user.kernels", "user.conv_bias", "user.dense", "user.dense_bias", "user.item_table",
    "item.embedding", "item.kernels", "item.conv_bias", "item.dense", "item.dense_bias", "item.item_table",
};

struct SideIds {
  ParamId embedding, kernels, conv_bias, dense, dense_bias, item_table;
};

SideIds side_ids(const ModelParams& params, Side side) {
  if (side == Side::User) {
    return {ParamId::UserEmbedding, ParamId::UserKernels, ParamId::UserConvBias,
            ParamId::UserDense,     ParamId::UserDenseBias, ParamId::UserItemTable};
  }
  return {params.embedding_id(Side::Item), ParamId::ItemKernels,   ParamId::ItemConvBias,
          ParamId::ItemDense,              ParamId::ItemDenseBias, ParamId::ItemItemTable};
}

Tensor2& grad(GradTape& tape, ParamId id) { return tape[static_cast<std::size_t>(id)]; }

bool is_bias(ParamId id) {
  switch (id) {
    case ParamId::UserConvBias:
    case ParamId::UserDenseBias:
    case ParamId::ItemConvBias:
    case ParamId::ItemDenseBias:
      return true;
    default:
      return false;
  }
}

bool is_embedding(ParamId id) { return id == ParamId::UserEmbedding || id == ParamId::ItemEmbedding; }

// Length of the document prefix that covers every window touching a real token.
std::size_t covered_prefix(const EncodedDocument& doc, std::size_t window) {
  return std::min(doc.indices.size(), doc.true_length + window - 1);
}

void check_document(const EncodedDocument& doc, std::size_t window) {
  if (doc.true_length == 0 || doc.true_length > doc.indices.size()) {
    throw InputError("document for item '" + doc.item_id + "' has an invalid true length");
  }
  if (doc.indices.size() < window) {
    throw InputError("document for item '" + doc.item_id + "' is shorter than the convolution window");
  }
}

}  // namespace

Variant parse_variant(std::string_view name) {
  if (name == "full") return Variant::Full;
  if (name == "no_text") return Variant::NoText;
  if (name == "embed_avg") return Variant::EmbedAvg;
  if (name == "no_att") return Variant::NoAtt;
  throw UsageError("unknown variant '" + std::string(name) + "' (expected full, no_text, embed_avg or no_att)");
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Full:
      return "full";
    case Variant::NoText:
      return "no_text";
    case Variant::EmbedAvg:
      return "embed_avg";
    case Variant::NoAtt:
      return "no_att";
  }
  return "full";
}

std::string_view param_name(ParamId id) { return kParamNames[static_cast<std::size_t>(id)]; }

std::optional<ParamId> param_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kParamCount; ++i) {
    if (kParamNames[i] == name) return static_cast<ParamId>(i);
  }
  return std::nullopt;
}

ParamId ModelParams::embedding_id(Side side) const noexcept {
  if (side == Side::User || hyper.share_embeddings) return ParamId::UserEmbedding;
  return ParamId::ItemEmbedding;
}

std::array<std::pair<std::size_t, std::size_t>, kParamCount> expected_shapes(const ModelHyper& h) {
  std::array<std::pair<std::size_t, std::size_t>, kParamCount> shapes{};
  auto set = [&shapes](ParamId id, std::size_t r, std::size_t c) { shapes[static_cast<std::size_t>(id)] = {r, c}; };
  for (Side side : {Side::User, Side::Item}) {
    const bool user = side == Side::User;
    const ParamId emb = user ? ParamId::UserEmbedding : ParamId::ItemEmbedding;
    const ParamId kernels = user ? ParamId::UserKernels : ParamId::ItemKernels;
    const ParamId conv_bias = user ? ParamId::UserConvBias : ParamId::ItemConvBias;
    const ParamId dense = user ? ParamId::UserDense : ParamId::ItemDense;
    const ParamId dense_bias = user ? ParamId::UserDenseBias : ParamId::ItemDenseBias;
    const ParamId table = user ? ParamId::UserItemTable : ParamId::ItemItemTable;
    if (h.variant == Variant::NoText) {
      set(table, h.num_items, h.latent_dim);
      continue;
    }
    if (user || !h.share_embeddings) set(emb, h.embedding_dim, h.vocab_size);
    set(dense_bias, 1, 1);
    if (h.uses_cnn()) {
      set(kernels, h.filters, h.embedding_dim * h.window);
      set(conv_bias, h.filters, 1);
      set(dense, h.latent_dim, h.filters);
    } else {
      set(dense, h.latent_dim, h.embedding_dim);
    }
  }
  return shapes;
}

ModelParams ModelParams::zeros(const ModelHyper& hyper) {
  if (hyper.latent_dim == 0) throw InputError("latent dimension K must be >= 1");
  if (hyper.uses_text()) {
    if (hyper.embedding_dim == 0 || hyper.vocab_size < 2) {
      throw InputError("text variants need e >= 1 and a vocabulary with at least one token");
    }
    if (hyper.uses_cnn() && (hyper.filters == 0 || hyper.window == 0)) {
      throw InputError("CNN variants need g >= 1 and c >= 1");
    }
  } else if (hyper.num_items == 0) {
    throw InputError("no_text variant needs the item count");
  }
  if (hyper.lambda_user < 0.0 || hyper.lambda_item < 0.0) throw InputError("regularization must be >= 0");
  ModelParams params;
  params.hyper = hyper;
  const auto shapes = expected_shapes(hyper);
  for (std::size_t i = 0; i < kParamCount; ++i) params.tensors[i] = Tensor2(shapes[i].first, shapes[i].second);
  return params;
}

ModelParams ModelParams::initialize(const ModelHyper& hyper, Rng& rng) {
  ModelParams params = zeros(hyper);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    const auto id = static_cast<ParamId>(i);
    if (is_bias(id)) continue;
    auto& t = params.tensors[i];
    for (double& x : t.data()) x = rng.normal(0.0, hyper.init_stddev);
    if (is_embedding(id) && !t.empty()) {
      for (std::size_t r = 0; r < t.rows(); ++r) t(r, kPadIndex) = 0.0;
    }
  }
  return params;
}

void ModelParams::validate() const {
  const auto shapes = expected_shapes(hyper);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    const auto& t = tensors[i];
    if (t.rows() != shapes[i].first || t.cols() != shapes[i].second) {
      throw InputError("parameter " + std::string(kParamNames[i]) + " has shape " + std::to_string(t.rows()) +
                       "x" + std::to_string(t.cols()) + ", expected " + std::to_string(shapes[i].first) + "x" +
                       std::to_string(shapes[i].second));
    }
    if (!t.all_finite()) throw InputError("parameter " + std::string(kParamNames[i]) + " is not finite");
    if (is_embedding(static_cast<ParamId>(i)) && !t.empty()) {
      for (std::size_t r = 0; r < t.rows(); ++r) {
        if (t(r, kPadIndex) != 0.0) throw InputError("PAD embedding column must be zero");
      }
    }
  }
}

std::vector<std::string> ModelParams::names() const {
  return std::vector<std::string>(kParamNames.begin(), kParamNames.end());
}

std::vector<double> encode(const ModelParams& params, Side side, ItemIndex item, const EncodedDocument& doc,
                           EncoderCache* cache) {
  const auto& h = params.hyper;
  const SideIds ids = side_ids(params, side);
  std::vector<double> out;

  if (h.variant == Variant::NoText) {
    const auto& table = params[ids.item_table];
    if (item >= table.rows()) throw InputError("item index out of range for the item table");
    const auto row = table.row(item);
    out.assign(row.begin(), row.end());
    if (cache != nullptr) {
      cache->item = item;
      cache->output = out;
    }
    return out;
  }

  const auto& embedding = params[ids.embedding];
  const auto& dense = params[ids.dense];
  const double dense_bias = params[ids.dense_bias](0, 0);

  if (h.variant == Variant::EmbedAvg) {
    check_document(doc, 1);
    Tensor2 pi = embed_lookup(std::span(doc.indices).first(doc.true_length), embedding);
    std::vector<double> pooled(pi.rows(), 0.0);
    const double inv = 1.0 / static_cast<double>(doc.true_length);
    for (std::size_t r = 0; r < pi.rows(); ++r) {
      double sum = 0.0;
      for (double x : pi.row(r)) sum += x;
      pooled[r] = sum * inv;
    }
    out = dense_tanh(pooled, dense, dense_bias);
    if (cache != nullptr) {
      cache->item = item;
      cache->output = out;
      cache->pooled = std::move(pooled);
      cache->pi = std::move(pi);
    }
    return out;
  }

  const std::size_t window = h.window;
  check_document(doc, window);
  const std::size_t prefix = covered_prefix(doc, window);
  // Windows starting at or after true_length see only PAD (zero) columns and
  // evaluate to ReLU(bias); one representative stands in for all of them.
  const bool has_pad_window = prefix < doc.indices.size();
  Tensor2 pi = embed_lookup(std::span(doc.indices).first(prefix), embedding);
  const auto& kernels = params[ids.kernels];
  const auto& conv_bias = params[ids.conv_bias];

  std::vector<double> pooled(h.filters);
  std::vector<std::vector<double>> activations(h.filters);
  std::vector<std::size_t> argmax(h.filters);
  for (std::size_t f = 0; f < h.filters; ++f) {
    const double bias = conv_bias(f, 0);
    activations[f] = conv1d_valid(pi, kernels.row(f), window, bias);
    MaxPoolResult best = maxpool(activations[f]);
    const double pad_value = bias > 0.0 ? bias : 0.0;
    if (has_pad_window && pad_value > best.value) best = {pad_value, activations[f].size()};
    pooled[f] = best.value;
    argmax[f] = best.index;
  }
  out = dense_tanh(pooled, dense, dense_bias);
  if (cache != nullptr) {
    cache->item = item;
    cache->output = out;
    cache->pooled = std::move(pooled);
    cache->pi = std::move(pi);
    cache->activations = std::move(activations);
    cache->argmax = std::move(argmax);
  }
  return out;
}

void encode_backward(const ModelParams& params, Side side, const EncodedDocument& doc, const EncoderCache& cache,
                     std::span<const double> d_output, GradTape& grads) {
  const auto& h = params.hyper;
  const SideIds ids = side_ids(params, side);
  if (d_output.size() != h.latent_dim || cache.output.size() != h.latent_dim) {
    throw InputError("encode_backward: gradient length does not match K");
  }

  if (h.variant == Variant::NoText) {
    axpy(1.0, d_output, grad(grads, ids.item_table).row(cache.item));
    return;
  }

  const auto& dense = params[ids.dense];
  std::vector<double> d_pooled(cache.pooled.size(), 0.0);
  dense_tanh_backward(cache.pooled, dense, cache.output, d_output, d_pooled, grad(grads, ids.dense),
                      grad(grads, ids.dense_bias)(0, 0));

  Tensor2 d_pi(cache.pi.rows(), cache.pi.cols());
  if (h.variant == Variant::EmbedAvg) {
    const double inv = 1.0 / static_cast<double>(doc.true_length);
    for (std::size_t r = 0; r < d_pi.rows(); ++r) {
      for (std::size_t t = 0; t < d_pi.cols(); ++t) d_pi(r, t) = d_pooled[r] * inv;
    }
  } else {
    const auto& kernels = params[ids.kernels];
    auto& d_kernels = grad(grads, ids.kernels);
    auto& d_conv_bias = grad(grads, ids.conv_bias);
    for (std::size_t f = 0; f < h.filters; ++f) {
      const double ds = d_pooled[f];
      if (ds == 0.0 || cache.pooled[f] <= 0.0) continue;
      const auto& z = cache.activations[f];
      const std::size_t at = cache.argmax[f];
      if (at == z.size()) {
        // PAD window: only the bias reaches it.
        d_conv_bias(f, 0) += ds;
        continue;
      }
      const auto d_z = maxpool_backward(z.size(), at, ds);
      conv1d_valid_backward(cache.pi, kernels.row(f), h.window, z, d_z, &d_pi, d_kernels.row(f),
                            d_conv_bias(f, 0));
    }
  }
  embed_lookup_backward(std::span(doc.indices).first(cache.pi.cols()), d_pi, grad(grads, ids.embedding),
                        /*freeze_pad=*/true);
}

std::vector<ItemIndex> select_memory_sources(std::span<const ItemIndex> liked, std::optional<ItemIndex> exclude,
                                             std::size_t max_slots, Rng& rng) {
  if (max_slots == 0) throw InputError("memory size must be >= 1");
  std::vector<ItemIndex> eligible;
  eligible.reserve(liked.size());
  for (auto i : liked) {
    if (!exclude || i != *exclude) eligible.push_back(i);
  }
  if (eligible.empty()) throw ColdUserError("no liked items available for the memory component");
  if (eligible.size() <= max_slots) return eligible;
  return rng.sample_without_replacement(std::span<const ItemIndex>(eligible), max_slots);
}

MemoryBank build_memory(const ModelParams& params, std::span<const EncodedDocument> docs, UserIndex user,
                        std::span<const ItemIndex> liked, std::optional<ItemIndex> exclude, std::size_t max_slots,
                        Rng& rng) {
  MemoryBank bank;
  bank.user = user;
  bank.sources = select_memory_sources(liked, exclude, max_slots, rng);
  bank.mask.assign(bank.sources.size(), 1);
  bank.columns = Tensor2(params.hyper.latent_dim, bank.sources.size());
  for (std::size_t m = 0; m < bank.sources.size(); ++m) {
    const auto item = bank.sources[m];
    if (item >= docs.size()) throw InputError("memory source item out of range");
    const auto rep = encode(params, Side::User, item, docs[item]);
    for (std::size_t k = 0; k < rep.size(); ++k) bank.columns(k, m) = rep[k];
  }
  return bank;
}

namespace {

std::vector<double> memory_logits(const Tensor2& columns, std::span<const double> item_rep) {
  if (columns.rows() != item_rep.size()) throw InputError("attention: K of memory and item differ");
  std::vector<double> logits(columns.cols(), 0.0);
  for (std::size_t k = 0; k < columns.rows(); ++k) {
    const double vk = item_rep[k];
    const auto row = columns.row(k);
    for (std::size_t m = 0; m < logits.size(); ++m) logits[m] += row[m] * vk;
  }
  return logits;
}

std::vector<double> masked_softmax(std::span<const double> logits, std::span<const std::uint8_t> mask) {
  std::vector<double> live;
  for (std::size_t m = 0; m < logits.size(); ++m) {
    if (mask[m]) live.push_back(logits[m]);
  }
  if (live.empty()) throw InputError("attention: every memory slot is masked");
  const auto probs = softmax(live);
  std::vector<double> weights(logits.size(), 0.0);
  for (std::size_t m = 0, j = 0; m < logits.size(); ++m) {
    if (mask[m]) weights[m] = probs[j++];
  }
  return weights;
}

// With convex weights the sum is taken relative to the first weighted column,
// so identical columns reproduce that column exactly.
std::vector<double> combine_columns(const Tensor2& columns, std::span<const double> weights, bool convex) {
  if (columns.cols() != weights.size()) throw InputError("adaptive_user_rep: weight count differs from M");
  std::size_t ref = 0;
  while (convex && ref + 1 < weights.size() && weights[ref] == 0.0) ++ref;
  std::vector<double> u(columns.rows(), 0.0);
  for (std::size_t k = 0; k < columns.rows(); ++k) {
    const auto row = columns.row(k);
    double acc = 0.0;
    if (convex) {
      for (std::size_t m = 0; m < weights.size(); ++m) acc += (row[m] - row[ref]) * weights[m];
      acc += row[ref];
    } else {
      for (std::size_t m = 0; m < weights.size(); ++m) acc += row[m] * weights[m];
    }
    u[k] = acc;
  }
  return u;
}

}  // namespace

AttentionVector attention(const MemoryBank& memory, std::span<const double> item_rep, ItemIndex candidate) {
  return attention(memory, item_rep, candidate, Variant::Full);
}

AttentionVector attention(const MemoryBank& memory, std::span<const double> item_rep, ItemIndex candidate,
                          Variant variant) {
  if (memory.mask.size() != memory.columns.cols()) throw InputError("attention: mask length differs from M");
  AttentionVector out;
  out.candidate = candidate;
  if (variant == Variant::NoAtt) {
    if (std::none_of(memory.mask.begin(), memory.mask.end(), [](auto x) { return x != 0; })) {
      throw InputError("attention: every memory slot is masked");
    }
    if (memory.columns.rows() != item_rep.size()) throw InputError("attention: K of memory and item differ");
    out.weights.resize(memory.mask.size());
    for (std::size_t m = 0; m < memory.mask.size(); ++m) out.weights[m] = memory.mask[m] ? 1.0 : 0.0;
    return out;
  }
  out.weights = masked_softmax(memory_logits(memory.columns, item_rep), memory.mask);
  return out;
}

std::vector<double> adaptive_user_rep(const MemoryBank& memory, std::span<const double> weights, Variant variant) {
  if (weights.size() != memory.columns.cols()) throw InputError("adaptive_user_rep: weight count differs from M");
  std::vector<double> masked(weights.begin(), weights.end());
  for (std::size_t m = 0; m < masked.size(); ++m) {
    if (m < memory.mask.size() && !memory.mask[m]) masked[m] = 0.0;
  }
  return combine_columns(memory.columns, masked, variant != Variant::NoAtt);
}

double score(std::span<const double> user_rep, std::span<const double> item_rep) {
  if (user_rep.size() != item_rep.size()) throw InputError("score: representation lengths differ");
  return dot(user_rep, item_rep);
}

double pair_loss(std::span<const double> user_pos, std::span<const double> item_pos,
                 std::span<const double> user_neg, std::span<const double> item_neg, double lambda_user,
                 double lambda_item) {
  if (lambda_user < 0.0 || lambda_item < 0.0) throw InputError("pair_loss: regularization must be >= 0");
  const double margin = score(user_pos, item_pos) - score(user_neg, item_neg);
  return -log_sigmoid(margin) + lambda_user * (squared_norm(user_pos) + squared_norm(user_neg)) +
         lambda_item * (squared_norm(item_pos) + squared_norm(item_neg));
}

double forward_quadruple(const ModelParams& params, std::span<const EncodedDocument> docs, const Quadruple& quad,
                         QuadrupleCache* cache) {
  const auto& h = params.hyper;
  const std::size_t slots = quad.memory.size();
  if (slots == 0) throw ColdUserError("quadruple has an empty memory");
  for (auto i : quad.memory) {
    if (i >= docs.size()) throw InputError("quadruple memory item out of range");
    if (i == quad.positive) throw InputError("candidate item appears in its own memory");
  }
  if (quad.positive >= docs.size() || quad.negative >= docs.size()) {
    throw InputError("quadruple item out of range");
  }

  QuadrupleCache local;
  QuadrupleCache& c = cache != nullptr ? *cache : local;
  c.memory.resize(slots);
  c.columns = Tensor2(h.latent_dim, slots);
  for (std::size_t m = 0; m < slots; ++m) {
    const auto item = quad.memory[m];
    const auto rep = encode(params, Side::User, item, docs[item], &c.memory[m]);
    for (std::size_t k = 0; k < rep.size(); ++k) c.columns(k, m) = rep[k];
  }
  const auto v_pos = encode(params, Side::Item, quad.positive, docs[quad.positive], &c.positive);
  const auto v_neg = encode(params, Side::Item, quad.negative, docs[quad.negative], &c.negative);

  const std::vector<std::uint8_t> mask(slots, 1);
  auto weights = [&](std::span<const double> v) {
    if (h.variant == Variant::NoAtt) return std::vector<double>(slots, 1.0);
    return masked_softmax(memory_logits(c.columns, v), mask);
  };
  c.alpha_pos = weights(v_pos);
  c.alpha_neg = weights(v_neg);
  c.user_pos = combine_columns(c.columns, c.alpha_pos, h.variant != Variant::NoAtt);
  c.user_neg = combine_columns(c.columns, c.alpha_neg, h.variant != Variant::NoAtt);
  c.margin = score(c.user_pos, v_pos) - score(c.user_neg, v_neg);
  return pair_loss(c.user_pos, v_pos, c.user_neg, v_neg, h.lambda_user, h.lambda_item);
}

void backward_quadruple(const ModelParams& params, std::span<const EncodedDocument> docs, const Quadruple& quad,
                        const QuadrupleCache& c, double scale, GradTape& grads) {
  const auto& h = params.hyper;
  const std::size_t K = h.latent_dim;
  const std::size_t slots = quad.memory.size();
  const auto& v_pos = c.positive.output;
  const auto& v_neg = c.negative.output;

  // d(-ln σ(x))/dx = σ(x) - 1
  const double d_margin = (sigmoid(c.margin) - 1.0) * scale;
  const double reg_u = 2.0 * h.lambda_user * scale;
  const double reg_v = 2.0 * h.lambda_item * scale;

  std::vector<double> d_v_pos(K), d_v_neg(K), d_u_pos(K), d_u_neg(K);
  for (std::size_t k = 0; k < K; ++k) {
    d_u_pos[k] = d_margin * v_pos[k] + reg_u * c.user_pos[k];
    d_v_pos[k] = d_margin * c.user_pos[k] + reg_v * v_pos[k];
    d_u_neg[k] = -d_margin * v_neg[k] + reg_u * c.user_neg[k];
    d_v_neg[k] = -d_margin * c.user_neg[k] + reg_v * v_neg[k];
  }

  Tensor2 d_columns(K, slots);
  auto through_attention = [&](const std::vector<double>& alpha, const std::vector<double>& d_u,
                               const std::vector<double>& v, std::vector<double>& d_v) {
    // u = C α
    std::vector<double> d_alpha(slots, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t m = 0; m < slots; ++m) {
        d_columns(k, m) += alpha[m] * d_u[k];
        d_alpha[m] += c.columns(k, m) * d_u[k];
      }
    }
    if (h.variant == Variant::NoAtt) return;
    // α = softmax(Cᵀ v)
    const auto d_logits = softmax_backward(alpha, d_alpha);
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t m = 0; m < slots; ++m) {
        d_columns(k, m) += d_logits[m] * v[k];
        d_v[k] += c.columns(k, m) * d_logits[m];
      }
    }
  };
  through_attention(c.alpha_pos, d_u_pos, v_pos, d_v_pos);
  through_attention(c.alpha_neg, d_u_neg, v_neg, d_v_neg);

  for (std::size_t m = 0; m < slots; ++m) {
    const auto item = quad.memory[m];
    encode_backward(params, Side::User, docs[item], c.memory[m], d_columns.col(m), grads);
  }
  encode_backward(params, Side::Item, docs[quad.positive], c.positive, d_v_pos, grads);
  encode_backward(params, Side::Item, docs[quad.negative], c.negative, d_v_neg, grads);
}

double batch_loss(const ModelParams& params, std::span<const EncodedDocument> docs,
                  std::span<const Quadruple> batch, GradTape* grads) {
  if (batch.empty()) throw InputError("batch_loss: empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  QuadrupleCache cache;
  for (const auto& quad : batch) {
    total += forward_quadruple(params, docs, quad, grads != nullptr ? &cache : nullptr);
    if (grads != nullptr) backward_quadruple(params, docs, quad, cache, scale, *grads);
  }
  return total * scale;
}

RankedList sort_ranked(UserIndex user, std::vector<ItemIndex> items, std::vector<double> scores) {
  if (items.size() != scores.size()) throw InputError("sort_ranked: items and scores differ in length");
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return items[a] < items[b];
  });
  RankedList out;
  out.user = user;
  out.items.reserve(order.size());
  out.scores.reserve(order.size());
  for (auto k : order) {
    out.items.push_back(items[k]);
    out.scores.push_back(scores[k]);
  }
  return out;
}

Recommender::Recommender(const ModelParams& params, std::span<const EncodedDocument> docs, std::size_t max_slots,
                         std::uint64_t seed)
    : params_(params), max_slots_(max_slots), seed_(seed) {
  if (max_slots == 0) throw InputError("memory size must be >= 1");
  const std::size_t K = params.hyper.latent_dim;
  item_reps_ = Tensor2(docs.size(), K);
  memory_reps_ = Tensor2(docs.size(), K);
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto item = static_cast<ItemIndex>(i);
    const auto v = encode(params, Side::Item, item, docs[i]);
    const auto m = encode(params, Side::User, item, docs[i]);
    std::copy(v.begin(), v.end(), item_reps_.row(i).begin());
    std::copy(m.begin(), m.end(), memory_reps_.row(i).begin());
  }
}

MemoryBank Recommender::memory(UserIndex user, std::span<const ItemIndex> liked,
                               std::optional<ItemIndex> exclude) const {
  Rng rng = Rng::derived(seed_, user);
  MemoryBank bank;
  bank.user = user;
  bank.sources = select_memory_sources(liked, exclude, max_slots_, rng);
  bank.mask.assign(bank.sources.size(), 1);
  bank.columns = Tensor2(params_.hyper.latent_dim, bank.sources.size());
  for (std::size_t m = 0; m < bank.sources.size(); ++m) {
    if (bank.sources[m] >= memory_reps_.rows()) throw InputError("memory source item out of range");
    const auto rep = memory_reps_.row(bank.sources[m]);
    for (std::size_t k = 0; k < rep.size(); ++k) bank.columns(k, m) = rep[k];
  }
  return bank;
}

double Recommender::score_candidate(const MemoryBank& memory, ItemIndex candidate, AttentionVector* attn) const {
  if (candidate >= item_reps_.rows()) throw InputError("candidate item out of range");
  const auto v = item_rep(candidate);
  AttentionVector a = attention(memory, v, candidate, params_.hyper.variant);
  const auto u = adaptive_user_rep(memory, a.weights, params_.hyper.variant);
  const double r = score(u, v);
  if (attn != nullptr) *attn = std::move(a);
  return r;
}

RankedList Recommender::rank(UserIndex user, std::span<const ItemIndex> liked,
                             std::span<const ItemIndex> candidates) const {
  const MemoryBank base = memory(user, liked, std::nullopt);
  std::vector<ItemIndex> items(candidates.begin(), candidates.end());
  std::vector<double> scores(items.size());
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto j = items[k];
    if (std::find(liked.begin(), liked.end(), j) != liked.end()) {
      scores[k] = score_candidate(memory(user, liked, j), j);
    } else {
      scores[k] = score_candidate(base, j);
    }
  }
  return sort_ranked(user, std::move(items), std::move(scores));
}

RankedList rank_items(const ModelParams& params, std::span<const EncodedDocument> docs, UserIndex user,
                      std::span<const ItemIndex> liked, std::span<const ItemIndex> candidates, std::size_t max_slots,
                      std::uint64_t seed) {
  return Recommender(params, docs, max_slots, seed).rank(user, liked, candidates);
}

}  // namespace mars

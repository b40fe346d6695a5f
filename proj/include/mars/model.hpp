#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mars/data.hpp"
#include "mars/layers.hpp"
#include "mars/optim.hpp"
#include "mars/rng.hpp"
#include "mars/tensor.hpp"
#include "mars/text.hpp"

namespace mars {

// full: CNN encoders with attention over memory.
// no_text: a free K-vector per item replaces each encoder.
// embed_avg: mean word embedding projected by the dense tanh layer.
// no_att: CNN encoders, every attention weight fixed at 1.
enum class Variant { Full, NoText, EmbedAvg, NoAtt };

Variant parse_variant(std::string_view name);
std::string_view to_string(Variant v);

struct ModelHyper {
  std::size_t embedding_dim = 300;  // e
  std::size_t filters = 64;         // g
  std::size_t window = 3;           // c
  std::size_t latent_dim = 50;      // K
  double lambda_user = 0.002;
  double lambda_item = 0.002;
  Variant variant = Variant::Full;
  bool share_embeddings = false;
  std::size_t vocab_size = 0;  // including PAD
  std::size_t num_items = 0;   // rows of the no_text item tables
  double init_stddev = 0.1;

  bool uses_cnn() const noexcept { return variant == Variant::Full || variant == Variant::NoAtt; }
  bool uses_text() const noexcept { return variant != Variant::NoText; }
};

enum class ParamId : std::size_t {
  UserEmbedding,
  UserKernels,
  UserConvBias,
  UserDense,
  UserDenseBias,
  UserItemTable,
  ItemEmbedding,
  ItemKernels,
  ItemConvBias,
  ItemDense,
  ItemDenseBias,
  ItemItemTable,
};
inline constexpr std::size_t kParamCount = 12;

std::string_view param_name(ParamId id);
std::optional<ParamId> param_from_name(std::string_view name);

enum class Side { User, Item };

// Parameters of f_user (Ψ) and f_item (Ω). Slots a variant does not use
// hold empty tensors. Kernels are stored one filter per row, each row the
// row-major flattening of an e x c filter.
struct ModelParams {
  ModelHyper hyper;
  std::array<Tensor2, kParamCount> tensors;

  Tensor2& operator[](ParamId id) { return tensors[static_cast<std::size_t>(id)]; }
  const Tensor2& operator[](ParamId id) const { return tensors[static_cast<std::size_t>(id)]; }
  std::span<Tensor2> all() noexcept { return tensors; }
  std::span<const Tensor2> all() const noexcept { return tensors; }

  // The slot holding the embedding used by `side` (the user slot when shared).
  ParamId embedding_id(Side side) const noexcept;

  // Weights ~ N(0, init_stddev), biases 0, PAD embedding column 0.
  static ModelParams initialize(const ModelHyper& hyper, Rng& rng);
  static ModelParams zeros(const ModelHyper& hyper);

  // Shapes consistent with hyper; every tensor finite; PAD column zero.
  void validate() const;

  std::vector<std::string> names() const;
};

std::array<std::pair<std::size_t, std::size_t>, kParamCount> expected_shapes(const ModelHyper& hyper);

// Intermediate values of one encoder evaluation needed by its backward pass.
struct EncoderCache {
  ItemIndex item = 0;
  std::vector<double> output;  // length K
  std::vector<double> pooled;  // s: g (CNN) or e (embed_avg)
  Tensor2 pi;                  // embedded prefix of the document
  std::vector<std::vector<double>> activations;  // per filter, ReLU outputs over real windows
  std::vector<std::size_t> argmax;               // per filter; == activations[f].size() means a PAD window
};

// f_user / f_item applied to one item. `cache` may be null.
std::vector<double> encode(const ModelParams& params, Side side, ItemIndex item,
                           const EncodedDocument& doc, EncoderCache* cache = nullptr);

// Accumulates d_output's contribution into the gradients of `side`'s parameters.
void encode_backward(const ModelParams& params, Side side, const EncodedDocument& doc,
                     const EncoderCache& cache, std::span<const double> d_output, GradTape& grads);

inline std::vector<double> encode_item(const ModelParams& params, const EncodedDocument& doc, ItemIndex item) {
  return encode(params, Side::Item, item, doc);
}

struct MemoryBank {
  UserIndex user = 0;
  Tensor2 columns;  // K x M
  std::vector<ItemIndex> sources;
  std::vector<std::uint8_t> mask;  // 1 = real slot

  std::size_t slots() const noexcept { return sources.size(); }
};

// Picks the memory sources: `liked` minus `exclude`, subsampled uniformly to
// at most max_slots. Throws ColdUserError when nothing is eligible.
std::vector<ItemIndex> select_memory_sources(std::span<const ItemIndex> liked,
                                             std::optional<ItemIndex> exclude, std::size_t max_slots,
                                             Rng& rng);

MemoryBank build_memory(const ModelParams& params, std::span<const EncodedDocument> docs, UserIndex user,
                        std::span<const ItemIndex> liked, std::optional<ItemIndex> exclude,
                        std::size_t max_slots, Rng& rng);

struct AttentionVector {
  ItemIndex candidate = 0;
  std::vector<double> weights;
};

// softmax over unmasked entries of Cᵀ·v; masked weights are exactly 0.
AttentionVector attention(const MemoryBank& memory, std::span<const double> item_rep,
                          ItemIndex candidate = 0);
// Same, but all-ones over unmasked slots for the no_att variant.
AttentionVector attention(const MemoryBank& memory, std::span<const double> item_rep, ItemIndex candidate,
                          Variant variant);

// C·α over unmasked columns. For every variant but no_att the weights sum to
// one and the result is a convex combination.
std::vector<double> adaptive_user_rep(const MemoryBank& memory, std::span<const double> weights,
                                      Variant variant = Variant::Full);

double score(std::span<const double> user_rep, std::span<const double> item_rep);

// -ln σ(r_j - r_j') + λu(‖u_j‖² + ‖u_j'‖²) + λv(‖v_j‖² + ‖v_j'‖²)
double pair_loss(std::span<const double> user_pos, std::span<const double> item_pos,
                 std::span<const double> user_neg, std::span<const double> item_neg, double lambda_user,
                 double lambda_item);

struct Quadruple {
  UserIndex user = 0;
  std::vector<ItemIndex> memory;  // sampled from I+_i / j
  ItemIndex positive = 0;
  ItemIndex negative = 0;

  bool operator==(const Quadruple&) const = default;
};

struct QuadrupleCache {
  std::vector<EncoderCache> memory;
  EncoderCache positive;
  EncoderCache negative;
  Tensor2 columns;  // K x M
  std::vector<double> alpha_pos, alpha_neg;
  std::vector<double> user_pos, user_neg;
  double margin = 0.0;
};

double forward_quadruple(const ModelParams& params, std::span<const EncodedDocument> docs,
                         const Quadruple& quad, QuadrupleCache* cache = nullptr);

// Adds scale · ∂loss/∂θ to grads.
void backward_quadruple(const ModelParams& params, std::span<const EncodedDocument> docs,
                        const Quadruple& quad, const QuadrupleCache& cache, double scale, GradTape& grads);

// Mean loss over a batch and, when grads is non-null, its gradient.
double batch_loss(const ModelParams& params, std::span<const EncodedDocument> docs,
                  std::span<const Quadruple> batch, GradTape* grads);

struct RankedList {
  UserIndex user = 0;
  std::vector<ItemIndex> items;
  std::vector<double> scores;
};

// Sorts by descending score; equal scores by ascending item index.
RankedList sort_ranked(UserIndex user, std::vector<ItemIndex> items, std::vector<double> scores);

inline constexpr std::size_t kDefaultEvalMemory = 64;

// Inference-time scorer. Encodes every item once with both encoders and
// builds each user's memory from their train positives (minus the
// candidate), subsampled to max_slots with a per-user stream of `seed`.
class Recommender {
 public:
  Recommender(const ModelParams& params, std::span<const EncodedDocument> docs, std::size_t max_slots,
              std::uint64_t seed);

  const ModelParams& params() const noexcept { return params_; }
  std::size_t max_slots() const noexcept { return max_slots_; }

  MemoryBank memory(UserIndex user, std::span<const ItemIndex> liked,
                    std::optional<ItemIndex> exclude) const;

  // Score and attention for one candidate against a prepared memory.
  double score_candidate(const MemoryBank& memory, ItemIndex candidate, AttentionVector* attn = nullptr) const;

  RankedList rank(UserIndex user, std::span<const ItemIndex> liked, std::span<const ItemIndex> candidates) const;

  std::span<const double> item_rep(ItemIndex item) const { return item_reps_.row(item); }
  std::span<const double> memory_rep(ItemIndex item) const { return memory_reps_.row(item); }

 private:
  const ModelParams& params_;
  std::size_t max_slots_;
  std::uint64_t seed_;
  Tensor2 item_reps_;    // |I| x K, f_item
  Tensor2 memory_reps_;  // |I| x K, f_user
};

// One-shot ranking for a single user.
RankedList rank_items(const ModelParams& params, std::span<const EncodedDocument> docs, UserIndex user,
                      std::span<const ItemIndex> liked, std::span<const ItemIndex> candidates,
                      std::size_t max_slots, std::uint64_t seed);

}  // namespace mars

#pragma once

#include "onetracker/tracker.hpp"

namespace onetracker {

/// Prompt modality: N = language, M = mask, D = depth, T = thermal, E = event.
enum class Modality { N, M, D, T, E };

Modality modality_from_string(const std::string& s);
const char* modality_name(Modality m);

/// How a prompt's rows line up with the encoder token partition.
enum class PromptAlignment {
  Full,      // N_p == n_z + n_s
  Template,  // N_p == n_z (mask prompts); zeros at search positions
  Free,      // text, any length
};

struct PromptTokens {
  Tensor p;  // (N_p, D)
  Modality modality = Modality::T;
  PromptAlignment alignment = PromptAlignment::Full;
};

/// Raw task input a prompt is built from.
struct PromptPayload {
  std::vector<int64_t> text_ids;        // modality N
  std::vector<Tensor> template_maps;    // (1, S, S) maps aligned to template tokens
  std::optional<Tensor> search_map;     // (1, S, S) map aligned to search tokens
};

/// Unified prompt embedding (one per model, specialized by modality).  Text
/// uses a trainable token table + positional rows + one encoder layer; map
/// modalities share a single 1-channel patch projection and reuse the
/// foundation's frozen positional tables.
struct PromptEmbed {
  Modality modality = Modality::T;
  int64_t dim = 0;
  int64_t patch = 0;
  int64_t text_max_len = 0;
  // Text machinery (modality N only).
  Parameter token_table;  // (V, D)
  Parameter text_pos;     // (text_max_len, D)
  std::optional<EncoderLayer> text_layer;
  // Map machinery (M/D/T/E only).
  std::optional<PatchProj> map_proj;
  const Parameter* pos_template = nullptr;  // borrowed, frozen
  const Parameter* pos_search = nullptr;    // borrowed, frozen

  PromptEmbed() = default;
  PromptEmbed(Modality modality, const BackboneConfig& cfg, int64_t vocab, int64_t text_max_len,
              const Parameter* pos_template, const Parameter* pos_search, Rng& rng);
  PromptTokens forward(const PromptPayload& payload) const;
  void collect(std::vector<Parameter*>& out);

 private:
  Tensor embed_map(const Tensor& map) const;
};

/// Cross-modal tracking prompter: projects tokens and prompt to a latent
/// space, fuses (linear add for map modalities, single-head cross-attention
/// for language), and up-projects back to token width.  The up map starts at
/// zero so the initial prompt residual vanishes.
struct CMTPrompter {
  nn::Linear down_h;  // D -> m
  nn::Linear down_p;  // D -> m
  std::optional<nn::Linear> fusion;        // (m, m), modalities M/D/T/E
  std::optional<nn::Linear> wq, wk, wv;    // (m, m), modality N
  nn::Linear up;                           // m -> D, zero-init incl. bias
  Modality modality = Modality::T;
  int64_t latent = 0;

  CMTPrompter() = default;
  CMTPrompter(const std::string& name, Modality modality, int64_t dim, int64_t latent, Rng& rng);
  /// (n_z+n_s, D) tokens + current prompt -> next prompt P^{l+1}, (n_z+n_s, D).
  Tensor forward(const Tensor& h, const PromptTokens& prompt, int64_t n_z, int64_t n_s) const;
  void collect(std::vector<Parameter*>& out);
};

struct PeftConfig {
  int64_t rank = 16;
  double adapter_scale = 0.1;
  int64_t latent = 64;
  int64_t every_k = 1;  // 0 = add prompt embedding directly to H^0, no prompters
  int64_t vocab = 64;
  int64_t text_max_len = 16;
};

/// Attaches one adapter to each Q/K/V projection and the second FFN linear of
/// every layer (4 per layer).  Rejects double injection and ranks above
/// min(d, k)/4.
void inject_ttp(FoundationTracker& foundation, int64_t rank, double scale, uint64_t seed);

/// Spec form of the adapter update on column-token matrices:
/// x (k, t), base weight (d, k) -> (d, t) = Wx + s * W_up^T relu(W_down^T x).
Tensor adapter_forward(const Tensor& x, const Tensor& base_weight, const nn::Adapter& adapter);

/// Trainable-parameter census by group.
struct Census {
  int64_t adapters = 0;
  int64_t prompters = 0;
  int64_t prompt_embed = 0;
  int64_t other_trainable = 0;  // e.g. seg head unfrozen for task M
  int64_t frozen = 0;
  int64_t trainable() const { return adapters + prompters + prompt_embed + other_trainable; }
  int64_t total() const { return trainable() + frozen; }
  std::string to_string() const;
};

/// Closed-form adapter count: depth * [3r(D+D) + r(hidden+D)].
int64_t ttp_adapter_param_count(int64_t depth, int64_t dim, int64_t hidden, int64_t rank);
/// Closed-form per-prompter count for linear-fusion modalities, with biases.
int64_t cmt_prompter_param_count(int64_t dim, int64_t latent);

/// Stage-2 model: frozen foundation + adapters + prompt embedding + prompters.
struct PromptTracker {
  FoundationTracker* foundation = nullptr;  // borrowed; frozen on construction
  Modality modality = Modality::T;
  PeftConfig cfg;
  std::vector<int> positions;  // sorted prompter layer positions
  PromptEmbed embed;
  std::vector<CMTPrompter> prompters;  // parallel to positions
  bool train_seg_head = false;

  PromptTracker(FoundationTracker& foundation, Modality modality, PeftConfig cfg, uint64_t seed,
                bool train_seg_head_stage2 = false);

  /// Crop protocol with prompts from the payload.
  TokenState encode_pair(const Tensor& template_img, const Tensor& search_img,
                         const PromptPayload& payload) const;
  /// Full-frame mask protocol (modality M inference).
  TokenState encode_mask_layout(const Tensor& initial_img, const Tensor& prev_img,
                                const Tensor& current_img, const PromptPayload& payload) const;

  std::vector<Parameter*> trainable_parameters();
  std::vector<Parameter*> all_parameters();
  Census census();

 private:
  PromptHook make_hook(const PromptPayload& payload, int64_t n_z, int64_t n_s) const;
};

}  // namespace onetracker

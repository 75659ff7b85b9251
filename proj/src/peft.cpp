#include "onetracker/peft.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace onetracker {

namespace O = onetracker::ops;

Modality modality_from_string(const std::string& s) {
  std::string u = s;
  for (char& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "N") return Modality::N;
  if (u == "M") return Modality::M;
  if (u == "D") return Modality::D;
  if (u == "T") return Modality::T;
  if (u == "E") return Modality::E;
  throw ValidationError("unknown modality '" + s + "' (expected one of N, M, D, T, E)");
}

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::N: return "N";
    case Modality::M: return "M";
    case Modality::D: return "D";
    case Modality::T: return "T";
    case Modality::E: return "E";
  }
  return "?";
}

namespace {
void zero_fill(Parameter& p) {
  auto v = p.tensor.data_mut();
  std::fill(v.begin(), v.end(), 0.0);
}

int64_t grid_of(const Parameter* pos) {
  if (pos == nullptr) return -1;
  const int64_t n = pos->tensor.dim(0);
  const int64_t g = static_cast<int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  return g * g == n ? g : -1;
}
}  // namespace

PromptEmbed::PromptEmbed(Modality modality, const BackboneConfig& cfg, int64_t vocab,
                         int64_t text_max_len, const Parameter* pos_template,
                         const Parameter* pos_search, Rng& rng)
    : modality(modality),
      dim(cfg.dim),
      patch(cfg.patch_size),
      text_max_len(text_max_len),
      pos_template(pos_template),
      pos_search(pos_search) {
  if (modality == Modality::N) {
    if (vocab <= 0 || text_max_len <= 0) {
      throw ValidationError("prompt embed: vocab and text_max_len must be positive for modality N");
    }
    token_table = Parameter(nn::embed_init({vocab, dim}, rng), "prompt.embed.token_table");
    text_pos = Parameter(nn::embed_init({text_max_len, dim}, rng), "prompt.embed.text_pos");
    text_layer.emplace("prompt.embed.text_layer", dim, cfg.heads, cfg.mlp_hidden(), rng);
  } else {
    map_proj.emplace("prompt.embed.map", 1, patch, dim, rng);
  }
}

Tensor PromptEmbed::embed_map(const Tensor& map) const {
  if (map.rank() != 3 || map.dim(0) != 1 || map.dim(1) != map.dim(2)) {
    throw ValidationError("embed_prompt: expected a (1, S, S) map, got " + shape_str(map.shape()));
  }
  if (map.dim(1) % patch != 0) {
    throw ValidationError("embed_prompt: map size " + std::to_string(map.dim(1)) +
                          " not divisible by patch " + std::to_string(patch));
  }
  const int64_t g = map.dim(1) / patch;
  Tensor tokens = map_proj->forward(map);
  if (g == grid_of(pos_template)) return O::add(tokens, pos_template->tensor);
  if (g == grid_of(pos_search)) return O::add(tokens, pos_search->tensor);
  throw ValidationError("embed_prompt: map grid " + std::to_string(g) +
                        " matches neither the template nor the search patch grid");
}

PromptTokens PromptEmbed::forward(const PromptPayload& payload) const {
  PromptTokens out;
  out.modality = modality;
  switch (modality) {
    case Modality::N: {
      if (payload.text_ids.empty()) {
        throw ValidationError("embed_prompt: modality N requires a non-empty token-id sequence");
      }
      if (static_cast<int64_t>(payload.text_ids.size()) > text_max_len) {
        throw ValidationError("embed_prompt: text length " +
                              std::to_string(payload.text_ids.size()) + " exceeds maximum " +
                              std::to_string(text_max_len));
      }
      const int64_t len = static_cast<int64_t>(payload.text_ids.size());
      Tensor e = O::embedding_lookup(token_table.tensor, payload.text_ids);
      e = O::add(e, O::slice_firstdim(text_pos.tensor, 0, len));
      out.p = text_layer->forward(e);
      out.alignment = PromptAlignment::Free;
      return out;
    }
    case Modality::M: {
      if (payload.template_maps.empty()) {
        throw ValidationError("embed_prompt: modality M requires at least one mask map");
      }
      std::vector<Tensor> parts;
      parts.reserve(payload.template_maps.size());
      for (const Tensor& m : payload.template_maps) parts.push_back(embed_map(m));
      out.p = parts.size() == 1 ? parts[0] : O::concat_firstdim(parts);
      out.alignment = PromptAlignment::Template;
      return out;
    }
    case Modality::D:
    case Modality::T:
    case Modality::E: {
      if (payload.template_maps.size() != 1 || !payload.search_map) {
        throw ValidationError(std::string("embed_prompt: modality ") + modality_name(modality) +
                              " requires one template map and one search map");
      }
      out.p = O::concat_firstdim({embed_map(payload.template_maps[0]), embed_map(*payload.search_map)});
      out.alignment = PromptAlignment::Full;
      return out;
    }
  }
  throw ValidationError("embed_prompt: unknown modality");
}

void PromptEmbed::collect(std::vector<Parameter*>& out) {
  if (modality == Modality::N) {
    out.push_back(&token_table);
    out.push_back(&text_pos);
    text_layer->collect(out);
  } else {
    map_proj->collect(out);
  }
}

CMTPrompter::CMTPrompter(const std::string& name, Modality modality, int64_t dim, int64_t latent,
                         Rng& rng)
    : down_h(name + ".down_h", dim, latent, rng),
      down_p(name + ".down_p", dim, latent, rng),
      up(name + ".up", latent, dim, rng),
      modality(modality),
      latent(latent) {
  if (modality == Modality::N) {
    wq.emplace(name + ".wq", latent, latent, rng);
    wk.emplace(name + ".wk", latent, latent, rng);
    wv.emplace(name + ".wv", latent, latent, rng);
  } else {
    fusion.emplace(name + ".fusion", latent, latent, rng);
  }
  zero_fill(up.weight);  // bias is already zero
}

Tensor CMTPrompter::forward(const Tensor& h, const PromptTokens& prompt, int64_t n_z,
                            int64_t n_s) const {
  const int64_t n = n_z + n_s;
  if (h.rank() != 2 || h.dim(0) != n) {
    throw ValidationError("cmt_prompter: token matrix " + shape_str(h.shape()) +
                          " does not match partition " + std::to_string(n_z) + "+" +
                          std::to_string(n_s));
  }
  Tensor lh = down_h.forward(h);
  Tensor lp = down_p.forward(prompt.p);
  Tensor fused;
  if (modality == Modality::N) {
    Tensor q = wq->forward(lh);
    Tensor k = wk->forward(lp);
    Tensor v = wv->forward(lp);
    const double scale = 1.0 / std::sqrt(static_cast<double>(latent));
    Tensor attn = O::softmax_lastdim(O::mul_scalar(O::matmul(q, O::transpose_last2(k)), scale));
    fused = O::matmul(attn, v);
  } else {
    Tensor aligned;
    switch (prompt.alignment) {
      case PromptAlignment::Full:
        if (prompt.p.dim(0) != n) {
          throw ValidationError("cmt_prompter: prompt has " + std::to_string(prompt.p.dim(0)) +
                                " rows, expected " + std::to_string(n));
        }
        aligned = lp;
        break;
      case PromptAlignment::Template:
        if (prompt.p.dim(0) != n_z) {
          throw ValidationError("cmt_prompter: template-aligned prompt has " +
                                std::to_string(prompt.p.dim(0)) + " rows, expected " +
                                std::to_string(n_z));
        }
        aligned = O::concat_firstdim({lp, Tensor::zeros({n_s, latent})});
        break;
      case PromptAlignment::Free:
        throw ValidationError("cmt_prompter: free-length prompts only occur for modality N");
    }
    fused = fusion->forward(O::add(lh, aligned));
  }
  return up.forward(fused);
}

void CMTPrompter::collect(std::vector<Parameter*>& out) {
  down_h.collect(out);
  down_p.collect(out);
  if (fusion) fusion->collect(out);
  if (wq) {
    wq->collect(out);
    wk->collect(out);
    wv->collect(out);
  }
  up.collect(out);
}

void inject_ttp(FoundationTracker& foundation, int64_t rank, double scale, uint64_t seed) {
  Rng rng(Rng::derive(seed, 0x54545041ull));  // adapter stream
  for (auto& layer : foundation.layers) {
    for (nn::Linear* lin : {&layer.wq, &layer.wk, &layer.wv, &layer.fc2}) {
      if (lin->adapter) {
        throw ValidationError("inject_ttp: adapter already present on '" + lin->weight.name + "'");
      }
      const int64_t cap = std::min(lin->in_features(), lin->out_features()) / 4;
      if (rank > cap) {
        throw ValidationError("inject_ttp: rank " + std::to_string(rank) +
                              " exceeds min(d,k)/4 = " + std::to_string(cap) + " for '" +
                              lin->weight.name + "'");
      }
      std::string base = lin->weight.name;
      const std::string suffix = ".weight";
      if (base.size() > suffix.size() && base.compare(base.size() - suffix.size(), suffix.size(), suffix) == 0) {
        base.resize(base.size() - suffix.size());
      }
      lin->adapter.emplace(base + ".adapter", lin->in_features(), lin->out_features(), rank, scale,
                           rng);
    }
  }
}

Tensor adapter_forward(const Tensor& x, const Tensor& base_weight, const nn::Adapter& adapter) {
  if (x.rank() != 2 || base_weight.rank() != 2 || base_weight.dim(1) != x.dim(0)) {
    throw ValidationError("adapter_forward: W " + shape_str(base_weight.shape()) +
                          " incompatible with x " + shape_str(x.shape()));
  }
  const int64_t d = base_weight.dim(0), k = base_weight.dim(1);
  if (adapter.rank > std::min(d, k)) {
    throw ValidationError("adapter_forward: rank " + std::to_string(adapter.rank) +
                          " exceeds min(d,k)=" + std::to_string(std::min(d, k)));
  }
  Tensor base = O::matmul(base_weight, x);
  Tensor hidden = O::relu(O::matmul(O::transpose_last2(adapter.down.tensor), x));
  Tensor delta = O::matmul(O::transpose_last2(adapter.up.tensor), hidden);
  return O::add(base, O::mul_scalar(delta, adapter.scale));
}

std::string Census::to_string() const {
  std::ostringstream os;
  os << "census.adapters=" << adapters << "\n"
     << "census.prompters=" << prompters << "\n"
     << "census.prompt_embed=" << prompt_embed << "\n"
     << "census.other_trainable=" << other_trainable << "\n"
     << "census.frozen=" << frozen << "\n"
     << "census.trainable=" << trainable() << "\n"
     << "census.total=" << total() << "\n";
  return os.str();
}

int64_t ttp_adapter_param_count(int64_t depth, int64_t dim, int64_t hidden, int64_t rank) {
  return depth * (3 * rank * (dim + dim) + rank * (hidden + dim));
}

int64_t cmt_prompter_param_count(int64_t dim, int64_t latent) {
  return (dim * latent + latent) + (dim * latent + latent) + (latent * latent + latent) +
         (latent * dim + dim);
}

PromptTracker::PromptTracker(FoundationTracker& foundation_in, Modality modality_in,
                             PeftConfig cfg_in, uint64_t seed, bool train_seg_head_stage2)
    : foundation(&foundation_in),
      modality(modality_in),
      cfg(cfg_in),
      train_seg_head(train_seg_head_stage2) {
  if (cfg.every_k < 0) throw ValidationError("every_k must be >= 0");
  if (cfg.every_k == 0 && modality == Modality::N) {
    throw ValidationError(
        "direct prompt addition (every_k=0) requires token-aligned prompts; modality N is "
        "free-length");
  }
  foundation->freeze_all();
  inject_ttp(*foundation, cfg.rank, cfg.adapter_scale, seed);
  Rng rng(Rng::derive(seed, 0x50524f4dull));  // prompt stream
  embed = PromptEmbed(modality, foundation->cfg, cfg.vocab, cfg.text_max_len,
                      &foundation->pos_template, &foundation->pos_search, rng);
  if (cfg.every_k > 0) {
    for (int64_t p = 0; p < foundation->cfg.depth; p += cfg.every_k) {
      positions.push_back(static_cast<int>(p));
    }
    prompters.reserve(positions.size());
    for (int pos : positions) {
      prompters.emplace_back("prompt.prompter" + std::to_string(pos), modality,
                             foundation->cfg.dim, cfg.latent, rng);
    }
  }
  if (train_seg_head) {
    std::vector<Parameter*> sp;
    foundation->seg_head.collect(sp);
    for (Parameter* p : sp) nn::set_frozen(*p, false);
  }
}

namespace {
Tensor pad_prompt_rows(const PromptTokens& p, int64_t n_z, int64_t n_s, int64_t dim) {
  const int64_t n = n_z + n_s;
  switch (p.alignment) {
    case PromptAlignment::Full:
      if (p.p.dim(0) != n) {
        throw ValidationError("prompt has " + std::to_string(p.p.dim(0)) + " rows, expected " +
                              std::to_string(n));
      }
      return p.p;
    case PromptAlignment::Template:
      if (p.p.dim(0) != n_z) {
        throw ValidationError("template-aligned prompt has " + std::to_string(p.p.dim(0)) +
                              " rows, expected " + std::to_string(n_z));
      }
      return O::concat_firstdim({p.p, Tensor::zeros({n_s, dim})});
    case PromptAlignment::Free:
      throw ValidationError("free-length prompt cannot be added directly to tokens");
  }
  throw ValidationError("bad prompt alignment");
}
}  // namespace

PromptHook PromptTracker::make_hook(const PromptPayload& payload, int64_t n_z, int64_t n_s) const {
  PromptTokens p0 = embed.forward(payload);
  if (cfg.every_k == 0) {
    Tensor padded = pad_prompt_rows(p0, n_z, n_s, foundation->cfg.dim);
    return [padded](const Tensor& h, int l) -> Tensor {
      return l == 0 ? O::add(h, padded) : h;
    };
  }
  auto state = std::make_shared<PromptTokens>(std::move(p0));
  return [this, state, n_z, n_s](const Tensor& h, int l) -> Tensor {
    auto it = std::find(positions.begin(), positions.end(), l);
    if (it == positions.end()) return h;
    const CMTPrompter& prompter = prompters[static_cast<size_t>(it - positions.begin())];
    Tensor p_next = prompter.forward(h, *state, n_z, n_s);
    state->p = p_next;
    state->alignment = PromptAlignment::Full;
    return O::add(h, p_next);
  };
}

TokenState PromptTracker::encode_pair(const Tensor& template_img, const Tensor& search_img,
                                      const PromptPayload& payload) const {
  const int64_t n_z = foundation->cfg.n_template();
  const int64_t n_s = foundation->cfg.n_search();
  return foundation->encode_pair(template_img, search_img, make_hook(payload, n_z, n_s));
}

TokenState PromptTracker::encode_mask_layout(const Tensor& initial_img, const Tensor& prev_img,
                                             const Tensor& current_img,
                                             const PromptPayload& payload) const {
  const int64_t n_s = foundation->cfg.n_search();
  return foundation->encode_mask_layout(initial_img, prev_img, current_img,
                                        make_hook(payload, 2 * n_s, n_s));
}

std::vector<Parameter*> PromptTracker::all_parameters() {
  std::vector<Parameter*> out = foundation->parameters();
  embed.collect(out);
  for (auto& pr : prompters) pr.collect(out);
  return out;
}

std::vector<Parameter*> PromptTracker::trainable_parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : all_parameters())
    if (!p->frozen) out.push_back(p);
  return out;
}

Census PromptTracker::census() {
  Census c;
  std::set<const Parameter*> adapter_params;
  for (auto& layer : foundation->layers) {
    for (nn::Linear* lin : {&layer.wq, &layer.wk, &layer.wv, &layer.fc2}) {
      if (!lin->adapter) continue;
      adapter_params.insert(&lin->adapter->down);
      adapter_params.insert(&lin->adapter->up);
      c.adapters += lin->adapter->down.tensor.numel() + lin->adapter->up.tensor.numel();
    }
  }
  std::vector<Parameter*> pp;
  for (auto& pr : prompters) pr.collect(pp);
  for (Parameter* p : pp) c.prompters += p->tensor.numel();
  std::vector<Parameter*> ep;
  embed.collect(ep);
  for (Parameter* p : ep) c.prompt_embed += p->tensor.numel();
  for (Parameter* p : foundation->parameters()) {
    if (adapter_params.count(p)) continue;
    if (p->frozen) {
      c.frozen += p->tensor.numel();
    } else {
      c.other_trainable += p->tensor.numel();
    }
  }
  return c;
}

}  // namespace onetracker

#pragma once

// Text-token autogeneration: learnable prompt tokens concatenated with
// tokens mapped from the image class token. The mapping network is either a
// 3-layer MLP or a small self-attention stack over a learned seed, selected
// by config.

#include <string>
#include <vector>

#include "alt/config.hpp"
#include "alt/graph.hpp"
#include "alt/nn.hpp"

namespace alt {

template <class S>
struct TokenAutogen {
    ParamStore<S>* ps = nullptr;
    int d = 0, d_tok = 0, k_learn = 0, k_map = 0;
    std::string variant;  // mlp | transformer
    std::string learnable_name, seed_name;
    Mlp<S> map_mlp;
    Linear<S> seed_proj;
    std::vector<TransformerBlock<S>> map_blocks;

    TokenAutogen() = default;
    TokenAutogen(ParamStore<S>& store, const Config& cfg)
        : ps(&store),
          d(cfg.feat_dim),
          d_tok(cfg.token_dim),
          k_learn(cfg.num_learnable_tokens),
          k_map(cfg.num_mapped_tokens),
          variant(cfg.mapping_network) {
        if (k_learn > 0)
            store.def("tokens.learnable", {k_learn, d_tok}, init::normal<S>(0.02));
        learnable_name = "tokens.learnable";
        if (variant == "mlp") {
            map_mlp = Mlp<S>(store, "tokens.map_mlp",
                             {d, cfg.mapping_hidden, cfg.mapping_hidden, k_map * d_tok});
        } else if (variant == "transformer") {
            seed_name = "tokens.map_tf.seed";
            store.def(seed_name, {k_map, d_tok}, init::normal<S>(0.02));
            seed_proj = Linear<S>(store, "tokens.map_tf.proj", d, d_tok);
            for (int i = 0; i < 3; ++i)
                map_blocks.emplace_back(store, "tokens.map_tf.block" + std::to_string(i), d_tok, cfg.heads);
        } else {
            throw ConfigError("mapping_network must be mlp or transformer");
        }
    }

    // cls: 1 x d -> K_m x d_tok
    Value<S> map_tokens(Graph<S>& g, Value<S> cls) const {
        const Tensor<S>& t = g.value(cls);
        if (t.ndim() != 2 || t.dim(0) != 1 || t.dim(1) != d)
            throw ConfigError("map_tokens: class token must be 1 x " + std::to_string(d));
        if (!t.all_finite()) throw InputError("map_tokens: non-finite class token");
        if (variant == "mlp") return reshape(map_mlp(g, cls), {k_map, d_tok});
        Value<S> seq = concat_rows<S>({g.param(ps->get(seed_name)), seed_proj(g, cls)});
        for (const auto& b : map_blocks) seq = b(g, seq);
        return slice_rows(seq, 0, k_map);
    }

    // [learnable | mapped], learnable rows first; split point is k_learn.
    Value<S> compose(Graph<S>& g, Value<S> mapped) const {
        const Tensor<S>& t = g.value(mapped);
        if (t.dim(1) != d_tok) throw InputError("compose_text_tokens: token dim mismatch");
        if (k_learn == 0) return mapped;
        return concat_rows<S>({g.param(ps->get(learnable_name)), mapped});
    }

    int split_point() const { return k_learn; }
    int total_tokens() const { return k_learn + k_map; }
};

}  // namespace alt

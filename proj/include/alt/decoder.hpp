#pragma once

// Consistency decoder: text-embedding enhancement (self-attention blocks
// interleaved with cross-attention against the global image embedding) and
// image-text integration (z = x_I t^T, concatenation, linear projection).

#include <string>
#include <vector>

#include "alt/config.hpp"
#include "alt/graph.hpp"
#include "alt/nn.hpp"

namespace alt {

template <class S>
struct ConsistencyDecoder {
    ParamStore<S>* ps = nullptr;
    int d = 0, n_self = 0, n_cross = 0, n_tokens = 0;
    bool enabled = true;
    std::string integration;  // cat_only | map_only | cat_and_map
    std::vector<TransformerBlock<S>> self_blocks, cross_blocks;
    AttentionPool<S> global_pool;
    Linear<S> proj;

    ConsistencyDecoder() = default;
    ConsistencyDecoder(ParamStore<S>& store, const Config& cfg, int total_tokens)
        : ps(&store),
          d(cfg.feat_dim),
          n_self(cfg.self_layers),
          n_cross(cfg.cross_layers),
          n_tokens(total_tokens),
          enabled(cfg.decoder_enabled),
          integration(cfg.integration) {
        for (int i = 0; i < n_self; ++i)
            self_blocks.emplace_back(store, "decoder.self" + std::to_string(i), d, cfg.heads);
        for (int i = 0; i < n_cross; ++i)
            cross_blocks.emplace_back(store, "decoder.cross" + std::to_string(i), d, cfg.heads);
        global_pool = AttentionPool<S>(store, "decoder.pool", d);
        int proj_in = integration == "cat_and_map" ? d + n_tokens
                     : integration == "map_only"   ? n_tokens
                                                   : 2 * d;
        proj = Linear<S>(store, "decoder.proj", proj_in, d);
    }

    // t0: K x d text embedding; gvec: 1 x d global image embedding. Each
    // round applies one self block then one cross block; the cross key/value
    // is always the original gvec, never an updated state.
    Value<S> enhance_text(Graph<S>& g, Value<S> t0, Value<S> gvec) const {
        const Tensor<S>&tt = g.value(t0), &tg = g.value(gvec);
        if (tt.ndim() != 2 || tt.dim(1) != d) throw InputError("enhance_text: text must be K x d");
        if (tg.ndim() != 2 || tg.dim(0) != 1 || tg.dim(1) != d)
            throw InputError("enhance_text: global embedding must be 1 x d");
        Value<S> x = t0;
        int rounds = std::max(n_self, n_cross);
        for (int i = 0; i < rounds; ++i) {
            if (i < n_self) x = self_blocks[i](g, x);
            if (i < n_cross) x = cross_blocks[i].cross(g, x, gvec);
        }
        return x;
    }

    // flat: (H'W') x d image feature rows; t: K x d enhanced text embedding.
    // Returns (H'W') x d fused rows.
    Value<S> integrate(Graph<S>& g, Value<S> flat, Value<S> t) const {
        const Tensor<S>&tf = g.value(flat), &tt = g.value(t);
        if (tf.dim(1) != d || tt.dim(1) != d) throw InputError("integrate_features: channel dims disagree");
        Value<S> z = matmul(flat, transpose2d(t));  // (H'W') x K
        if (!g.value(z).all_finite())
            throw NumericError("integrate_features: non-finite integrated map z");
        Value<S> cat;
        if (integration == "cat_and_map") cat = concat_cols<S>({flat, z});
        else if (integration == "map_only") cat = z;
        else {
            Value<S> tbar = broadcast_rows(mean_rows(t), tf.dim(0));
            cat = concat_cols<S>({flat, tbar});
        }
        Value<S> out = proj(g, cat);
        if (!g.value(out).all_finite()) throw NumericError("integrate_features: non-finite projection output");
        return out;
    }
};

}  // namespace alt

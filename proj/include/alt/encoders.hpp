#pragma once

// Image and text encoders. The image encoder is a small convolutional stack
// with total stride 4 plus a class-token attention pool. The text encoder is
// a small pre-norm transformer whose parameters are frozen: values flow
// through it, gradients pass through to the tokens, but its weights never
// receive updates.

#include <string>
#include <vector>

#include "alt/config.hpp"
#include "alt/graph.hpp"
#include "alt/nn.hpp"

namespace alt {

inline int feature_stride() { return 4; }

template <class S>
struct ImageEncoder {
    ParamStore<S>* ps = nullptr;
    int d = 0;
    std::vector<int> channels;               // per stage, last = d
    std::vector<int> strides = {2, 2, 1, 1};
    std::vector<Linear<S>> convs;            // weights stored as (k*k*Cin) x Cout
    AttentionPool<S> cls_pool;

    ImageEncoder() = default;
    ImageEncoder(ParamStore<S>& store, const Config& cfg) : ps(&store), d(cfg.feat_dim) {
        channels = {d / 4, d / 2, 3 * d / 4, d};
        int cin = 3;
        for (size_t i = 0; i < channels.size(); ++i) {
            convs.emplace_back(store, "img_enc.conv" + std::to_string(i), 9 * cin, channels[i]);
            cin = channels[i];
        }
        cls_pool = AttentionPool<S>(store, "img_enc.cls_pool", d);
    }

    // frames: B x H x W x 3 -> B x H' x W' x d feature grids
    Value<S> forward_grid(Graph<S>& g, Value<S> frames) const {
        const Tensor<S>& t = g.value(frames);
        if (t.ndim() != 4 || t.dim(3) != 3) throw InputError("image encoder: expects B x H x W x 3");
        if (!t.all_finite()) throw InputError("image encoder: non-finite input");
        Value<S> x = frames;
        for (size_t i = 0; i < convs.size(); ++i) {
            x = conv2d(x, g.param(ps->get(convs[i].w)), g.param(ps->get(convs[i].b)), 3, 3, strides[i], 1);
            if (i + 1 < convs.size()) x = relu(x);
        }
        return x;
    }

    // grid rows of one frame (H'W' x d) -> class token (1 x d)
    Value<S> class_token(Graph<S>& g, Value<S> grid_rows) const { return cls_pool(g, grid_rows); }
};

template <class S>
struct TextEncoder {
    ParamStore<S>* ps = nullptr;
    int d = 0, max_len = 0;
    std::string pos_name;
    std::vector<TransformerBlock<S>> blocks;
    LayerNorm<S> final_ln;

    TextEncoder() = default;
    TextEncoder(ParamStore<S>& store, const Config& cfg) : ps(&store), d(cfg.feat_dim), max_len(cfg.text_max_len) {
        pos_name = "text_enc.pos";
        store.def(pos_name, {max_len, d}, init::normal<S>(0.02), /*frozen=*/true);
        for (int i = 0; i < cfg.text_layers; ++i)
            blocks.emplace_back(store, "text_enc.block" + std::to_string(i), d, cfg.heads, /*frozen=*/true);
        final_ln = LayerNorm<S>(store, "text_enc.ln_f", d, /*frozen=*/true);
    }

    // tokens: K x d -> K x d
    Value<S> operator()(Graph<S>& g, Value<S> tokens) const {
        const Tensor<S>& t = g.value(tokens);
        if (t.ndim() != 2 || t.dim(1) != d) throw InputError("text encoder: expects K x d tokens");
        int K = t.dim(0);
        if (K > max_len)
            throw InputError("text encoder: sequence length " + std::to_string(K) + " exceeds max " +
                             std::to_string(max_len));
        Value<S> pos = slice_rows(g.param(ps->get(pos_name)), 0, K);
        Value<S> x = add(tokens, pos);
        for (const auto& b : blocks) x = b(g, x);
        return final_ln(g, x);
    }
};

}  // namespace alt

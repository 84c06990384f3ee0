#pragma once

// Full model: image/text encoders, token autogeneration, consistency
// decoder, and the tracker's update network, all registered in one parameter
// store so checkpointing and the optimizer see a flat named collection.

#include <vector>

#include "alt/config.hpp"
#include "alt/decoder.hpp"
#include "alt/encoders.hpp"
#include "alt/tokens.hpp"

namespace alt {

template <class S>
struct Model {
    Config cfg;
    ParamStore<S> params;
    ImageEncoder<S> img;
    TextEncoder<S> text;
    TokenAutogen<S> tokens;
    ConsistencyDecoder<S> decoder;
    Mlp<S> update_net;

    explicit Model(const Config& c)
        : cfg(c),
          params(c.seed),
          img(params, c),
          text(params, c),
          tokens(params, c),
          decoder(params, c, c.num_learnable_tokens + c.num_mapped_tokens),
          update_net(params, "tracker.update", {update_in_dim(c), 128, 128, 3}) {
        c.validate();
        // Zero-start refinement: the first update of an untrained model is a
        // no-op instead of a random walk compounding across iterations.
        auto& last = params.get("tracker.update.l2.w").value;
        std::fill(last.data.begin(), last.data.end(), S(0));
        // Near-identity integration: final features start as the encoder grid
        // plus a small text contribution, so the correlation geometry an
        // untrained tracker depends on is not scrambled by the random
        // projection. map_only has no pass-through block to preserve.
        if (c.integration != "map_only") {
            auto& pw = params.get("decoder.proj.w").value;
            for (auto& v : pw.data) v = static_cast<S>(0.01) * v;
            for (int i = 0; i < c.feat_dim; ++i) pw.at(i, i) += S(1);
        }
    }

    static int update_in_dim(const Config& c) {
        int patch = (2 * c.corr_radius + 1) * (2 * c.corr_radius + 1);
        return c.pyramid_levels * patch + 3;  // correlations + rel offset (2) + vis logit (1)
    }

    int grid_h() const { return (cfg.input_h + feature_stride() - 1) / feature_stride(); }
    int grid_w() const { return (cfg.input_w + feature_stride() - 1) / feature_stride(); }

    // Token sequence for one frame, given that frame's flattened grid rows.
    Value<S> token_sequence(Graph<S>& g, Value<S> grid_rows) {
        Value<S> cls = img.class_token(g, grid_rows);
        return tokens.compose(g, tokens.map_tokens(g, cls));
    }

    // Fuse one frame's flattened grid rows with a token sequence.
    Value<S> fuse(Graph<S>& g, Value<S> grid_rows, Value<S> token_seq) {
        Value<S> t0 = text(g, token_seq);
        Value<S> gvec = decoder.global_pool(g, grid_rows);
        Value<S> t = decoder.enhance_text(g, t0, gvec);
        return decoder.integrate(g, grid_rows, t);
    }

    // Per-frame final feature grids (H' x W' x d) for a clip (T x H x W x 3).
    std::vector<Value<S>> final_features(Graph<S>& g, const Tensor<S>& frames) {
        if (frames.ndim() != 4 || frames.dim(3) != 3)
            throw InputError("final_features: expects T x H x W x 3");
        int T = frames.dim(0);
        Value<S> grid = img.forward_grid(g, g.input(frames));
        int Hp = g.value(grid).dim(1), Wp = g.value(grid).dim(2);
        std::vector<Value<S>> out;
        out.reserve(T);
        Value<S> shared_seq;
        for (int t = 0; t < T; ++t) {
            Value<S> rows = reshape(frame_slice(grid, t), {Hp * Wp, cfg.feat_dim});
            if (!decoder.enabled) {
                out.push_back(reshape(rows, {Hp, Wp, cfg.feat_dim}));
                continue;
            }
            Value<S> seq;
            if (cfg.share_tokens_across_clip) {
                if (!shared_seq.ok()) shared_seq = token_sequence(g, rows);
                seq = shared_seq;
            } else {
                seq = token_sequence(g, rows);
            }
            out.push_back(reshape(fuse(g, rows, seq), {Hp, Wp, cfg.feat_dim}));
        }
        return out;
    }

    // Final features of a single frame, conditioned on tokens generated from
    // `cond` (pass the same frame for ordinary self-conditioning).
    Value<S> frame_features_cond(Graph<S>& g, const Tensor<S>& frame, const Tensor<S>& cond) {
        auto one = [&](const Tensor<S>& f) {
            Tensor<S> b({1, f.dim(0), f.dim(1), f.dim(2)});
            b.data = f.data;
            Value<S> grid = img.forward_grid(g, g.input(b));
            int Hp = g.value(grid).dim(1), Wp = g.value(grid).dim(2);
            return std::pair<Value<S>, std::pair<int, int>>(
                reshape(frame_slice(grid, 0), {Hp * Wp, cfg.feat_dim}), {Hp, Wp});
        };
        auto [rows, hw] = one(frame);
        if (!decoder.enabled) return reshape(rows, {hw.first, hw.second, cfg.feat_dim});
        Value<S> seq;
        if (&cond == &frame || cond.data == frame.data) {
            seq = token_sequence(g, rows);
        } else {
            auto [crows, chw] = one(cond);
            seq = token_sequence(g, crows);
        }
        return reshape(fuse(g, rows, seq), {hw.first, hw.second, cfg.feat_dim});
    }
};

}  // namespace alt

#pragma once

// Training objective: sum over windows of the weighted-mean L1 track
// regression loss, plus a binary cross-entropy visibility loss pooled over
// all window entries. Loss weights: a (frame, point) pair counts only where
// both prediction and ground truth are valid; occluded-but-annotated points
// contribute position loss at a reduced weight.

#include <utility>
#include <vector>

#include "alt/config.hpp"
#include "alt/tracker.hpp"

namespace alt {

struct LossReport {
    double track_loss = 0, visibility_loss = 0, total = 0;
    int window_count = 0;
    bool no_valid_points = false;
};

// Plain-tensor reference: sum over windows of the weighted mean L1 distance.
inline double track_regression_loss(const TrackSet<double>& pred, const TrackSet<double>& gt,
                                    const std::vector<std::pair<int, int>>& windows,
                                    double occluded_weight = 0.2) {
    if (pred.T != gt.T || pred.N != gt.N) throw InputError("track loss: shape mismatch");
    double total = 0;
    for (auto [t0, len] : windows) {
        double wsum = 0, s = 0;
        for (int i = 0; i < len; ++i) {
            int t = t0 + i;
            for (int n = 0; n < pred.N; ++n) {
                if (pred.valid.at(t, n) == 0 || gt.valid.at(t, n) == 0) continue;
                double w = gt.visibility.at(t, n) > 0.5 ? 1.0 : occluded_weight;
                s += w * (std::abs(pred.positions.at(t, n, 0) - gt.positions.at(t, n, 0)) +
                          std::abs(pred.positions.at(t, n, 1) - gt.positions.at(t, n, 1)));
                wsum += w;
            }
        }
        if (wsum > 0) total += s / wsum;
    }
    return total;
}

// Plain-tensor reference: mean stable-logit BCE over valid entries.
inline double visibility_loss(const Tensor<double>& logits, const Tensor<double>& gt_vis,
                              const Tensor<double>& valid) {
    if (!logits.same_shape(gt_vis) || !logits.same_shape(valid))
        throw InputError("visibility loss: shape mismatch");
    double s = 0, cnt = 0;
    for (size_t i = 0; i < logits.data.size(); ++i) {
        if (valid.data[i] == 0) continue;
        double l = logits.data[i], t = gt_vis.data[i];
        s += std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l)));
        cnt += 1;
    }
    return cnt > 0 ? s / cnt : 0.0;
}

// Differentiable combined loss over a tracker run.
template <class S>
std::pair<Value<S>, LossReport> training_loss(Graph<S>& g, const TrackRun<S>& run,
                                              const TrackSet<S>& gt, const Config& cfg) {
    if (run.tracks.T != gt.T || run.tracks.N != gt.N) throw InputError("training_loss: shape mismatch");
    int N = gt.N;
    Value<S> track_total;
    bool any_weight = false;
    std::vector<Value<S>> all_logits;
    std::vector<S> vis_t, vis_w;
    for (const auto& w : run.windows) {
        Tensor<S> gt_pos({w.len * N, 2});
        Tensor<S> wgt({w.len * N});
        for (int i = 0; i < w.len; ++i) {
            int t = w.t0 + i;
            for (int n = 0; n < N; ++n) {
                gt_pos.at(i * N + n, 0) = gt.positions.at(t, n, 0);
                gt_pos.at(i * N + n, 1) = gt.positions.at(t, n, 1);
                bool pair_valid = run.tracks.valid.at(t, n) > 0 && gt.valid.at(t, n) > 0;
                wgt[static_cast<size_t>(i) * N + n] =
                    !pair_valid ? S(0)
                    : gt.visibility.at(t, n) > S(0.5) ? S(1)
                                                      : static_cast<S>(cfg.occluded_weight);
                vis_t.push_back(gt.visibility.at(t, n) > S(0.5) ? S(1) : S(0));
                vis_w.push_back(pair_valid ? S(1) : S(0));
                if (pair_valid) any_weight = true;
            }
        }
        Value<S> pred = w.len == 1 ? w.pos[0] : concat_rows(w.pos);
        Value<S> wl = l1_weighted_mean(pred, gt_pos, wgt);
        track_total = track_total.ok() ? add(track_total, wl) : wl;
        for (const auto& v : w.vis_logit) all_logits.push_back(v);
    }
    Tensor<S> targets({static_cast<int>(vis_t.size()), 1});
    Tensor<S> weights({static_cast<int>(vis_w.size()), 1});
    targets.data = vis_t;
    weights.data = vis_w;
    Value<S> logits = all_logits.size() == 1 ? all_logits[0] : concat_rows(all_logits);
    Value<S> vis = bce_logits_weighted_mean(logits, targets, weights);
    Value<S> total = add(track_total, scale(vis, cfg.lambda_vis));

    LossReport rep;
    rep.track_loss = static_cast<double>(g.value(track_total).data[0]);
    rep.visibility_loss = static_cast<double>(g.value(vis).data[0]);
    rep.total = static_cast<double>(g.value(total).data[0]);
    rep.window_count = static_cast<int>(run.windows.size());
    rep.no_valid_points = !any_weight;
    return {total, rep};
}

}  // namespace alt

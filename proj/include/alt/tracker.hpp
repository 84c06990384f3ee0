#pragma once

// Sliding-window point tracker. Per-frame final features feed a small
// correlation pyramid; an update MLP (shared across queries and frames)
// iteratively refines positions and visibility logits inside each window.
// Windows overlap; each new window is initialized from the previous one's
// estimates and later windows win on overlapped frames. Gradients do not
// flow across window boundaries: every window starts from detached inits.

#include <cmath>
#include <vector>

#include "alt/model.hpp"

namespace alt {

struct QueryPoint {
    int t = 0;
    double x = 0, y = 0;
};

template <class S>
struct TrackSet {
    int T = 0, N = 0;
    Tensor<S> positions;   // T x N x 2, (x, y) pixels at input resolution
    Tensor<S> visibility;  // T x N, probability for predictions, {0,1} for ground truth
    Tensor<S> valid;       // T x N, {0,1}

    TrackSet() = default;
    TrackSet(int T_, int N_)
        : T(T_), N(N_), positions({T_, N_, 2}), visibility({T_, N_}), valid({T_, N_}) {}
};

template <class S>
struct WindowResult {
    int t0 = 0, len = 0;
    std::vector<Value<S>> pos;        // per window frame: N x 2 pixels
    std::vector<Value<S>> vis_logit;  // per window frame: N x 1
};

template <class S>
struct TrackRun {
    TrackSet<S> tracks;
    Tensor<S> vis_logits;  // T x N composed
    std::vector<WindowResult<S>> windows;
    std::vector<int> query_frame;  // per track
};

// Window start offsets covering [0, T) with the configured overlap; the last
// window is clamped so every frame is covered.
inline std::vector<int> window_starts(int T, int wlen, int overlap) {
    std::vector<int> starts;
    if (T <= wlen) return {0};
    int stride = wlen - overlap;
    int s = 0;
    while (true) {
        starts.push_back(s);
        if (s + wlen >= T) break;
        s = std::min(s + stride, T - wlen);
    }
    return starts;
}

template <class S>
class Tracker {
  public:
    Tracker(Model<S>& model) : m_(&model), cfg_(&model.cfg) {}

    // feats: per-frame level-0 grids (H' x W' x d). Runs the forward
    // direction; frames before a query's frame are marked invalid.
    TrackRun<S> track(Graph<S>& g, const std::vector<Value<S>>& feats,
                      const std::vector<QueryPoint>& queries) const {
        int T = static_cast<int>(feats.size());
        int N = static_cast<int>(queries.size());
        TrackRun<S> run;
        run.tracks = TrackSet<S>(T, N);
        run.vis_logits = Tensor<S>({T, N});
        if (N == 0 || T == 0) return run;
        for (const auto& q : queries) {
            if (q.t < 0 || q.t >= T) throw InputError("tracker: query frame out of range");
            run.query_frame.push_back(q.t);
        }

        int L = cfg_->pyramid_levels;
        // levels[l][t]: feature grid at pyramid level l
        std::vector<std::vector<Value<S>>> levels(L);
        levels[0] = feats;
        for (int l = 1; l < L; ++l) {
            levels[l].reserve(T);
            for (int t = 0; t < T; ++t) levels[l].push_back(avg_pool2(levels[l - 1][t]));
        }

        // Reference feature per query per level, sampled at the query origin
        // in its own frame.
        std::vector<Value<S>> qfeat(L);
        for (int l = 0; l < L; ++l) {
            std::vector<Value<S>> rows;
            rows.reserve(N);
            for (int n = 0; n < N; ++n) {
                Tensor<S> c({1, 2});
                c.at(0, 0) = static_cast<S>(to_level(queries[n].x, l));
                c.at(0, 1) = static_cast<S>(to_level(queries[n].y, l));
                rows.push_back(bilinear_sample(levels[l][queries[n].t], g.input(c)));
            }
            qfeat[l] = N == 1 ? rows[0] : concat_rows(rows);
        }

        // Running composed estimates (plain values, detached).
        Tensor<S> cur_pos({T, N, 2});
        Tensor<S> cur_vlog({T, N});
        for (int t = 0; t < T; ++t)
            for (int n = 0; n < N; ++n) {
                cur_pos.at(t, n, 0) = static_cast<S>(queries[n].x);
                cur_pos.at(t, n, 1) = static_cast<S>(queries[n].y);
            }

        auto starts = window_starts(T, cfg_->window_len, cfg_->window_overlap);
        int prev_end = 0;
        for (int t0 : starts) {
            int len = std::min(cfg_->window_len, T - t0);
            std::vector<Tensor<S>> init_pos(len, Tensor<S>({N, 2}));
            std::vector<Tensor<S>> init_vlog(len, Tensor<S>({N, 1}));
            for (int i = 0; i < len; ++i) {
                int t = t0 + i;
                for (int n = 0; n < N; ++n) {
                    int src = -1;  // -1 = query origin
                    if (queries[n].t < t0) src = t < prev_end ? t : prev_end - 1;
                    if (src < 0) {
                        init_pos[i].at(n, 0) = static_cast<S>(queries[n].x);
                        init_pos[i].at(n, 1) = static_cast<S>(queries[n].y);
                        init_vlog[i].at(n, 0) = S(0);
                    } else {
                        init_pos[i].at(n, 0) = cur_pos.at(src, n, 0);
                        init_pos[i].at(n, 1) = cur_pos.at(src, n, 1);
                        init_vlog[i].at(n, 0) = cur_vlog.at(src, n);
                    }
                }
            }
            WindowResult<S> wr =
                refine_window(g, levels, qfeat, t0, len, init_pos, init_vlog);
            for (int i = 0; i < len; ++i) {
                const Tensor<S>& p = g.value(wr.pos[i]);
                const Tensor<S>& v = g.value(wr.vis_logit[i]);
                for (int n = 0; n < N; ++n) {
                    cur_pos.at(t0 + i, n, 0) = p.at(n, 0);
                    cur_pos.at(t0 + i, n, 1) = p.at(n, 1);
                    cur_vlog.at(t0 + i, n) = v.at(n, 0);
                }
            }
            prev_end = t0 + len;
            run.windows.push_back(std::move(wr));
        }

        run.tracks.positions = cur_pos;
        run.vis_logits = cur_vlog;
        for (int t = 0; t < T; ++t)
            for (int n = 0; n < N; ++n) {
                run.tracks.visibility.at(t, n) =
                    static_cast<S>(1.0 / (1.0 + std::exp(-static_cast<double>(cur_vlog.at(t, n)))));
                run.tracks.valid.at(t, n) = t >= queries[n].t ? S(1) : S(0);
            }
        return run;
    }

    // One window: M refinement iterations over `len` frames starting at t0.
    WindowResult<S> refine_window(Graph<S>& g, const std::vector<std::vector<Value<S>>>& levels,
                                  const std::vector<Value<S>>& qfeat, int t0, int len,
                                  const std::vector<Tensor<S>>& init_pos,
                                  const std::vector<Tensor<S>>& init_vlog) const {
        int L = cfg_->pyramid_levels, r = cfg_->corr_radius;
        double norm = 1.0 / std::max(cfg_->input_w, cfg_->input_h);
        WindowResult<S> wr;
        wr.t0 = t0;
        wr.len = len;
        for (int i = 0; i < len; ++i) {
            Value<S> pos = g.input(init_pos[i]);
            Value<S> vlog = g.input(init_vlog[i]);
            Value<S> anchor = g.input(init_pos[i]);
            for (int it = 0; it < cfg_->refine_iters; ++it) {
                std::vector<Value<S>> inputs;
                for (int l = 0; l < L; ++l) {
                    double k = 1.0 / level_stride(l);
                    Value<S> centers = affine(pos, k, 0.5 * k - 0.5);
                    inputs.push_back(corr_patch(levels[l][t0 + i], centers, qfeat[l], r));
                }
                inputs.push_back(scale(sub(pos, anchor), norm));
                inputs.push_back(vlog);
                Value<S> out = m_->update_net(g, concat_cols(inputs));
                pos = add(pos, scale(slice_cols(out, 0, 2), feature_stride()));
                vlog = add(vlog, slice_cols(out, 2, 3));
                if (!g.value(pos).all_finite() || !g.value(vlog).all_finite())
                    throw NumericError("refine_window: non-finite update at iteration " +
                                       std::to_string(it) + " (frame " + std::to_string(t0 + i) + ")");
            }
            wr.pos.push_back(pos);
            wr.vis_logit.push_back(vlog);
        }
        return wr;
    }

    static double level_stride(int level) { return feature_stride() * std::pow(2.0, level); }
    static double to_level(double pix, int level) {
        double s = level_stride(level);
        return (pix + 0.5) / s - 0.5;
    }

  private:
    Model<S>* m_;
    const Config* cfg_;
};

// Track a whole clip in the forward direction: compute features, run the
// tracker; frames before each query are invalid.
template <class S>
TrackRun<S> track_video(Graph<S>& g, Model<S>& model, const Tensor<S>& frames,
                        const std::vector<QueryPoint>& queries) {
    auto feats = model.final_features(g, frames);
    Tracker<S> tr(model);
    return tr.track(g, feats, queries);
}

// Backward tracking = forward tracking on the time-reversed clip with
// time-reversed queries; outputs are mirrored back.
template <class S>
TrackRun<S> track_video_backward(Graph<S>& g, Model<S>& model, const Tensor<S>& frames,
                                 const std::vector<QueryPoint>& queries) {
    int T = frames.dim(0);
    Tensor<S> rev(frames.shape);
    size_t fsz = frames.numel() / T;
    for (int t = 0; t < T; ++t)
        std::copy(frames.data.begin() + static_cast<size_t>(T - 1 - t) * fsz,
                  frames.data.begin() + static_cast<size_t>(T - t) * fsz,
                  rev.data.begin() + static_cast<size_t>(t) * fsz);
    std::vector<QueryPoint> rq = queries;
    for (auto& q : rq) q.t = T - 1 - q.t;
    TrackRun<S> rrun = track_video(g, model, rev, rq);
    TrackRun<S> out;
    int N = rrun.tracks.N;
    out.tracks = TrackSet<S>(T, N);
    out.vis_logits = Tensor<S>({T, N});
    for (const auto& q : queries) out.query_frame.push_back(q.t);
    for (int t = 0; t < T; ++t)
        for (int n = 0; n < N; ++n) {
            int rt = T - 1 - t;
            out.tracks.positions.at(t, n, 0) = rrun.tracks.positions.at(rt, n, 0);
            out.tracks.positions.at(t, n, 1) = rrun.tracks.positions.at(rt, n, 1);
            out.tracks.visibility.at(t, n) = rrun.tracks.visibility.at(rt, n);
            out.tracks.valid.at(t, n) = rrun.tracks.valid.at(rt, n);
            out.vis_logits.at(t, n) = rrun.vis_logits.at(rt, n);
        }
    return out;
}

// Bidirectional: backward predictions for frames before the query, forward
// predictions from the query onward; every frame valid.
template <class S>
TrackRun<S> track_bidirectional(Graph<S>& g, Model<S>& model, const Tensor<S>& frames,
                                const std::vector<QueryPoint>& queries) {
    TrackRun<S> fwd = track_video(g, model, frames, queries);
    bool any_before = false;
    for (const auto& q : queries) any_before = any_before || q.t > 0;
    if (!any_before) return fwd;
    TrackRun<S> bwd = track_video_backward(g, model, frames, queries);
    int T = fwd.tracks.T, N = fwd.tracks.N;
    TrackRun<S> out;
    out.tracks = TrackSet<S>(T, N);
    out.vis_logits = Tensor<S>({T, N});
    out.query_frame = fwd.query_frame;
    for (int t = 0; t < T; ++t)
        for (int n = 0; n < N; ++n) {
            const TrackRun<S>& src = t < queries[n].t ? bwd : fwd;
            out.tracks.positions.at(t, n, 0) = src.tracks.positions.at(t, n, 0);
            out.tracks.positions.at(t, n, 1) = src.tracks.positions.at(t, n, 1);
            out.tracks.visibility.at(t, n) = src.tracks.visibility.at(t, n);
            out.vis_logits.at(t, n) = src.vis_logits.at(t, n);
            out.tracks.valid.at(t, n) = S(1);
        }
    return out;
}

}  // namespace alt

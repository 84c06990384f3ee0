#pragma once

// Brute-force reference implementations of the evaluation metrics, written in
// the most literal list-building style possible so they share no code paths
// with the library versions. Used by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "alt/metrics.hpp"
#include "alt/random.hpp"

namespace alttest {

using alt::TrackSet;

inline double odist(const TrackSet<double>& a, const TrackSet<double>& b, int t, int n) {
    return std::hypot(a.positions.at(t, n, 0) - b.positions.at(t, n, 0),
                      a.positions.at(t, n, 1) - b.positions.at(t, n, 1));
}

inline bool oboth_valid(const TrackSet<double>& p, const TrackSet<double>& g, int t, int n) {
    return p.valid.at(t, n) > 0.5 && g.valid.at(t, n) > 0.5;
}

inline std::map<double, std::optional<double>> oracle_position_accuracy(
    const TrackSet<double>& pred, const TrackSet<double>& gt,
    const std::vector<double>& thresholds) {
    std::vector<double> errs;
    for (int n = 0; n < gt.N; ++n)
        for (int t = 0; t < gt.T; ++t)
            if (oboth_valid(pred, gt, t, n) && gt.visibility.at(t, n) > 0.5)
                errs.push_back(odist(pred, gt, t, n));
    std::map<double, std::optional<double>> out;
    for (double thr : thresholds) {
        if (errs.empty()) {
            out[thr] = std::nullopt;
            continue;
        }
        int k = 0;
        for (double e : errs)
            if (e < thr) ++k;
        out[thr] = double(k) / double(errs.size());
    }
    return out;
}

inline std::optional<double> oracle_oa(const TrackSet<double>& pred, const TrackSet<double>& gt,
                                       double vis_threshold) {
    std::vector<bool> match;
    for (int n = 0; n < gt.N; ++n)
        for (int t = 0; t < gt.T; ++t)
            if (oboth_valid(pred, gt, t, n))
                match.push_back((pred.visibility.at(t, n) > vis_threshold) ==
                                (gt.visibility.at(t, n) > 0.5));
    if (match.empty()) return std::nullopt;
    int k = 0;
    for (bool b : match)
        if (b) ++k;
    return double(k) / double(match.size());
}

inline std::optional<double> oracle_aj(const TrackSet<double>& pred, const TrackSet<double>& gt,
                                       const std::vector<double>& thresholds,
                                       double vis_threshold) {
    if (thresholds.empty()) return std::nullopt;
    double acc = 0;
    for (double thr : thresholds) {
        long tp = 0, fp = 0, fn = 0;
        for (int n = 0; n < gt.N; ++n)
            for (int t = 0; t < gt.T; ++t) {
                if (!oboth_valid(pred, gt, t, n)) continue;
                bool pv = pred.visibility.at(t, n) > vis_threshold;
                bool gv = gt.visibility.at(t, n) > 0.5;
                bool near = odist(pred, gt, t, n) < thr;
                if (gv) {
                    if (pv && near) ++tp;
                    else ++fn;
                }
                if (pv && !(gv && near)) ++fp;
            }
        acc += (tp + fp + fn) == 0 ? 1.0 : double(tp) / double(tp + fp + fn);
    }
    return acc / double(thresholds.size());
}

inline std::optional<double> oracle_mte(const TrackSet<double>& pred, const TrackSet<double>& gt) {
    std::vector<double> errs;
    for (int n = 0; n < gt.N; ++n)
        for (int t = 0; t < gt.T; ++t)
            if (oboth_valid(pred, gt, t, n) && gt.visibility.at(t, n) > 0.5)
                errs.push_back(odist(pred, gt, t, n));
    if (errs.empty()) return std::nullopt;
    std::sort(errs.begin(), errs.end());
    size_t s = errs.size();
    return s % 2 ? errs[s / 2] : (errs[s / 2 - 1] + errs[s / 2]) / 2.0;
}

inline std::optional<double> oracle_survival(const TrackSet<double>& pred,
                                             const TrackSet<double>& gt,
                                             const std::vector<int>& query_frames,
                                             double fail_dist, int max_frames = 2000) {
    std::vector<double> fracs;
    for (int n = 0; n < gt.N; ++n) {
        std::vector<double> errs;
        for (int t = query_frames[size_t(n)]; t < gt.T; ++t) {
            if (int(errs.size()) >= max_frames) break;
            if (oboth_valid(pred, gt, t, n)) errs.push_back(odist(pred, gt, t, n));
        }
        if (errs.empty()) continue;
        size_t k = 0;
        while (k < errs.size() && errs[k] <= fail_dist) ++k;
        fracs.push_back(double(k) / double(errs.size()));
    }
    if (fracs.empty()) return std::nullopt;
    double s = 0;
    for (double f : fracs) s += f;
    return s / double(fracs.size());
}

// Random micro track-set pair for conformance sweeps: = max 5 tracks, 10
// frames, sparse validity and visibility, occasional large errors.
struct MicroCase {
    TrackSet<double> pred, gt;
    std::vector<int> query_frames;
};

inline MicroCase random_micro_case(alt::Rng& rng) {
    int T = 1 + static_cast<int>(rng.index(10));
    int N = 1 + static_cast<int>(rng.index(5));
    MicroCase mc;
    mc.pred = TrackSet<double>(T, N);
    mc.gt = TrackSet<double>(T, N);
    for (int n = 0; n < N; ++n) mc.query_frames.push_back(static_cast<int>(rng.index(static_cast<uint64_t>(T))));
    for (int t = 0; t < T; ++t)
        for (int n = 0; n < N; ++n) {
            double gx = rng.uniform(0.0, 200.0), gy = rng.uniform(0.0, 200.0);
            mc.gt.positions.at(t, n, 0) = gx;
            mc.gt.positions.at(t, n, 1) = gy;
            double r = rng.uniform();
            double off = r < 0.4 ? rng.uniform(0.0, 2.5)
                       : r < 0.8 ? rng.uniform(0.0, 20.0)
                                 : rng.uniform(0.0, 120.0);
            double ang = rng.uniform(0.0, 6.2831853);
            mc.pred.positions.at(t, n, 0) = gx + off * std::cos(ang);
            mc.pred.positions.at(t, n, 1) = gy + off * std::sin(ang);
            mc.gt.visibility.at(t, n) = rng.uniform() < 0.7 ? 1.0 : 0.0;
            mc.pred.visibility.at(t, n) = rng.uniform();
            mc.gt.valid.at(t, n) = rng.uniform() < 0.85 ? 1.0 : 0.0;
            mc.pred.valid.at(t, n) = rng.uniform() < 0.9 ? 1.0 : 0.0;
        }
    return mc;
}

}  // namespace alttest

#pragma once

// Point-tracking evaluation: position accuracy over the {1,2,4,8,16} pixel
// thresholds, occlusion accuracy, average Jaccard, median trajectory error,
// and survival rate, plus the first/strided query protocols and per-video
// aggregation. All distances are scored in 256x256 evaluation coordinates.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "alt/data.hpp"
#include "alt/tracker.hpp"

namespace alt {

inline constexpr double kEvalResolution = 256.0;
inline constexpr std::array<double, 5> kDeltaThresholds{1, 2, 4, 8, 16};
inline constexpr double kSurvivalFailDist = 50.0;
inline constexpr int kSurvivalMaxFrames = 2000;

struct VideoMetrics {
    std::optional<double> aj, delta_avg, oa, mte, survival;
    std::map<double, double> delta_per_threshold;
    int64_t n_points = 0;
};

struct MetricsReport {
    std::optional<double> aj, delta_avg, oa, mte, survival;
    std::map<double, double> delta_per_threshold;
    int64_t n_points = 0;
    int n_videos = 0;
    std::vector<std::string> skipped;

    std::string to_text() const {
        std::ostringstream os;
        auto put = [&](const std::string& k, const std::optional<double>& v) {
            os << k << " = " << (v ? format_g(*v) : std::string("absent")) << "\n";
        };
        put("aj", aj);
        put("delta_avg", delta_avg);
        for (const auto& [thr, val] : delta_per_threshold)
            os << "delta_" << format_g(thr) << " = " << format_g(val) << "\n";
        put("oa", oa);
        put("mte", mte);
        put("survival", survival);
        os << "n_points = " << n_points << "\n";
        os << "n_videos = " << n_videos << "\n";
        for (const auto& s : skipped) os << "skipped = " << s << "\n";
        return os.str();
    }

    // Single tab-delimited row: aj delta_avg oa mte survival n_points n_videos.
    std::string to_row() const {
        std::ostringstream os;
        auto cell = [&](const std::optional<double>& v) {
            os << (v ? format_g(*v) : std::string("absent")) << "\t";
        };
        cell(aj);
        cell(delta_avg);
        cell(oa);
        cell(mte);
        cell(survival);
        os << n_points << "\t" << n_videos;
        return os.str();
    }

    static std::string format_g(double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%g", v);
        return buf;
    }
};

namespace detail {

inline double l2_err(const TrackSet<double>& pred, const TrackSet<double>& gt, int t, int n) {
    double dx = pred.positions.at(t, n, 0) - gt.positions.at(t, n, 0);
    double dy = pred.positions.at(t, n, 1) - gt.positions.at(t, n, 1);
    return std::sqrt(dx * dx + dy * dy);
}

inline bool pair_valid(const TrackSet<double>& pred, const TrackSet<double>& gt, int t, int n) {
    return pred.valid.at(t, n) > 0.5 && gt.valid.at(t, n) > 0.5;
}

}  // namespace detail

// Fraction of gt-visible pairs with L2 error strictly below each threshold.
inline std::map<double, std::optional<double>> position_accuracy(
    const TrackSet<double>& pred, const TrackSet<double>& gt,
    const std::vector<double>& thresholds) {
    std::map<double, std::optional<double>> out;
    int64_t total = 0;
    std::map<double, int64_t> hits;
    for (double thr : thresholds) hits[thr] = 0;
    for (int t = 0; t < gt.T; ++t)
        for (int n = 0; n < gt.N; ++n) {
            if (!detail::pair_valid(pred, gt, t, n) || gt.visibility.at(t, n) <= 0.5) continue;
            ++total;
            double e = detail::l2_err(pred, gt, t, n);
            for (double thr : thresholds)
                if (e < thr) ++hits[thr];
        }
    for (double thr : thresholds)
        out[thr] = total == 0 ? std::optional<double>{}
                              : std::optional<double>{static_cast<double>(hits[thr]) / total};
    return out;
}

// Fraction of valid pairs where the binarized visibility prediction matches gt.
inline std::optional<double> occlusion_accuracy(const TrackSet<double>& pred,
                                                const TrackSet<double>& gt,
                                                double vis_threshold = 0.5) {
    int64_t total = 0, correct = 0;
    for (int t = 0; t < gt.T; ++t)
        for (int n = 0; n < gt.N; ++n) {
            if (!detail::pair_valid(pred, gt, t, n)) continue;
            ++total;
            bool pv = pred.visibility.at(t, n) > vis_threshold;
            bool gv = gt.visibility.at(t, n) > 0.5;
            if (pv == gv) ++correct;
        }
    if (total == 0) return {};
    return static_cast<double>(correct) / total;
}

// Mean over thresholds of TP/(TP+FP+FN). A both-visible pair beyond the
// threshold counts as both a false positive and a false negative; a threshold
// with all three sets empty scores 1.
inline std::optional<double> average_jaccard(const TrackSet<double>& pred,
                                             const TrackSet<double>& gt,
                                             const std::vector<double>& thresholds,
                                             double vis_threshold = 0.5) {
    if (thresholds.empty()) return {};
    double sum = 0;
    for (double thr : thresholds) {
        int64_t tp = 0, fp = 0, fn = 0;
        for (int t = 0; t < gt.T; ++t)
            for (int n = 0; n < gt.N; ++n) {
                if (!detail::pair_valid(pred, gt, t, n)) continue;
                bool pv = pred.visibility.at(t, n) > vis_threshold;
                bool gv = gt.visibility.at(t, n) > 0.5;
                bool within = detail::l2_err(pred, gt, t, n) < thr;
                if (gv && pv && within) ++tp;
                if (pv && (!gv || !within)) ++fp;
                if (gv && (!pv || !within)) ++fn;
            }
        int64_t denom = tp + fp + fn;
        sum += denom == 0 ? 1.0 : static_cast<double>(tp) / denom;
    }
    return sum / thresholds.size();
}

// Median L2 error over gt-visible valid pairs; even counts average the middles.
inline std::optional<double> mte(const TrackSet<double>& pred, const TrackSet<double>& gt) {
    std::vector<double> errs;
    for (int t = 0; t < gt.T; ++t)
        for (int n = 0; n < gt.N; ++n) {
            if (!detail::pair_valid(pred, gt, t, n) || gt.visibility.at(t, n) <= 0.5) continue;
            errs.push_back(detail::l2_err(pred, gt, t, n));
        }
    if (errs.empty()) return {};
    std::sort(errs.begin(), errs.end());
    size_t m = errs.size() / 2;
    if (errs.size() % 2 == 1) return errs[m];
    return 0.5 * (errs[m - 1] + errs[m]);
}

// Per trajectory: walk valid frames in order from the query frame; the first
// frame whose error exceeds fail_dist ends survival. At most
// kSurvivalMaxFrames frames are evaluated per trajectory.
inline std::optional<double> survival_rate(const TrackSet<double>& pred,
                                           const TrackSet<double>& gt,
                                           const std::vector<int>& query_frames,
                                           double fail_dist = kSurvivalFailDist) {
    if (gt.N == 0) return {};
    double sum = 0;
    int counted = 0;
    for (int n = 0; n < gt.N; ++n) {
        int t_q = query_frames[static_cast<size_t>(n)];
        int evaluated = 0, surviving = 0;
        bool failed = false;
        for (int t = t_q; t < gt.T && evaluated < kSurvivalMaxFrames; ++t) {
            if (!detail::pair_valid(pred, gt, t, n)) continue;
            ++evaluated;
            if (!failed && detail::l2_err(pred, gt, t, n) > fail_dist) failed = true;
            if (!failed) ++surviving;
        }
        if (evaluated == 0) continue;
        sum += static_cast<double>(surviving) / evaluated;
        ++counted;
    }
    if (counted == 0) return {};
    return sum / counted;
}

// ---------------------------------------------------------------------------
// dataset evaluation
// ---------------------------------------------------------------------------

// Prediction callback: native-resolution record and sampled queries in,
// native-coord tracks out (one column per query, valid mask marking scored
// frames).
using PredictFn =
    std::function<TrackSet<double>(const DatasetRecord&, const std::vector<SampledQuery>&)>;

inline VideoMetrics score_video(const TrackSet<double>& pred_native,
                                const TrackSet<double>& gt_native,
                                const std::vector<int>& query_frames, int width, int height,
                                double vis_threshold = 0.5) {
    std::vector<double> thresholds(kDeltaThresholds.begin(), kDeltaThresholds.end());
    TrackSet<double> pred = rescale_tracks(pred_native, width, height,
                                           static_cast<int>(kEvalResolution),
                                           static_cast<int>(kEvalResolution));
    TrackSet<double> gt = rescale_tracks(gt_native, width, height,
                                         static_cast<int>(kEvalResolution),
                                         static_cast<int>(kEvalResolution));
    VideoMetrics vm;
    auto pos = position_accuracy(pred, gt, thresholds);
    double dsum = 0;
    int dcount = 0;
    for (const auto& [thr, val] : pos)
        if (val) {
            vm.delta_per_threshold[thr] = *val;
            dsum += *val;
            ++dcount;
        }
    if (dcount > 0) vm.delta_avg = dsum / dcount;
    vm.oa = occlusion_accuracy(pred, gt, vis_threshold);
    vm.aj = average_jaccard(pred, gt, thresholds, vis_threshold);
    vm.mte = mte(pred, gt);
    vm.survival = survival_rate(pred, gt, query_frames);
    vm.n_points = gt.N;
    return vm;
}

// Ground truth restricted to the sampled queries. In the first protocol only
// frames at or after the query frame stay valid.
inline TrackSet<double> gt_for_queries(const TrackSet<double>& gt,
                                       const std::vector<SampledQuery>& queries,
                                       const std::string& protocol) {
    int nq = static_cast<int>(queries.size());
    TrackSet<double> out(gt.T, nq);
    for (int t = 0; t < gt.T; ++t)
        for (int k = 0; k < nq; ++k) {
            int n = queries[static_cast<size_t>(k)].track;
            out.positions.at(t, k, 0) = gt.positions.at(t, n, 0);
            out.positions.at(t, k, 1) = gt.positions.at(t, n, 1);
            out.visibility.at(t, k) = gt.visibility.at(t, n);
            double v = gt.valid.at(t, n);
            if (protocol == "first" && t < queries[static_cast<size_t>(k)].q.t) v = 0;
            out.valid.at(t, k) = v;
        }
    return out;
}

inline MetricsReport evaluate(const PredictFn& predict, const std::vector<DatasetRecord>& records,
                              const std::string& protocol, double vis_threshold = 0.5) {
    MetricsReport rep;
    std::vector<VideoMetrics> videos;
    for (const auto& rec : records) {
        if (rec.tracks.N == 0) {
            rep.skipped.push_back(rec.name + ": no annotated tracks");
            continue;
        }
        std::vector<SampledQuery> queries = sample_queries(rec.tracks, protocol);
        if (queries.empty()) {
            rep.skipped.push_back(rec.name + ": no queryable points");
            continue;
        }
        std::vector<int> qframes;
        for (const auto& s : queries) qframes.push_back(s.q.t);
        TrackSet<double> pred = predict(rec, queries);
        TrackSet<double> gt = gt_for_queries(rec.tracks, queries, protocol);
        videos.push_back(score_video(pred, gt, qframes, rec.frames.dim(2), rec.frames.dim(1),
                                     vis_threshold));
        rep.n_points += static_cast<int64_t>(queries.size());
    }
    rep.n_videos = static_cast<int>(videos.size());
    auto aggregate = [&](const std::function<std::optional<double>(const VideoMetrics&)>& pick)
        -> std::optional<double> {
        double sum = 0;
        int count = 0;
        for (const auto& vm : videos)
            if (auto v = pick(vm)) {
                sum += *v;
                ++count;
            }
        if (count == 0) return {};
        return sum / count;
    };
    rep.aj = aggregate([](const VideoMetrics& v) { return v.aj; });
    rep.oa = aggregate([](const VideoMetrics& v) { return v.oa; });
    rep.mte = aggregate([](const VideoMetrics& v) { return v.mte; });
    rep.survival = aggregate([](const VideoMetrics& v) { return v.survival; });
    for (double thr : kDeltaThresholds) {
        double sum = 0;
        int count = 0;
        for (const auto& vm : videos) {
            auto it = vm.delta_per_threshold.find(thr);
            if (it != vm.delta_per_threshold.end()) {
                sum += it->second;
                ++count;
            }
        }
        if (count > 0) rep.delta_per_threshold[thr] = sum / count;
    }
    if (!rep.delta_per_threshold.empty()) {
        double sum = 0;
        for (const auto& [thr, val] : rep.delta_per_threshold) sum += val;
        rep.delta_avg = sum / rep.delta_per_threshold.size();
    }
    return rep;
}

// Tracker-backed predictor: first protocol tracks forward from each query;
// strided protocol tracks both directions.
template <class S>
PredictFn make_tracker_predictor(Model<S>& model, const std::string& protocol) {
    return [&model, protocol](const DatasetRecord& rec,
                              const std::vector<SampledQuery>& queries) -> TrackSet<double> {
        Graph<S> g;
        Tensor<S> frames = cast_tensor<S>(rec.frames);
        std::vector<QueryPoint> qs;
        qs.reserve(queries.size());
        for (const auto& s : queries) qs.push_back(s.q);
        TrackRun<S> run = protocol == "strided" ? track_bidirectional(g, model, frames, qs)
                                                : track_video(g, model, frames, qs);
        TrackSet<double> out(run.tracks.T, run.tracks.N);
        out.positions = cast_tensor<double>(run.tracks.positions);
        out.visibility = cast_tensor<double>(run.tracks.visibility);
        out.valid = cast_tensor<double>(run.tracks.valid);
        return out;
    };
}

// Oracle predictor used by tests: returns ground truth for the queried tracks.
inline PredictFn make_oracle_predictor() {
    return [](const DatasetRecord& rec, const std::vector<SampledQuery>& queries) {
        TrackSet<double> out(rec.tracks.T, static_cast<int>(queries.size()));
        for (int t = 0; t < rec.tracks.T; ++t)
            for (size_t k = 0; k < queries.size(); ++k) {
                int n = queries[k].track;
                int kk = static_cast<int>(k);
                out.positions.at(t, kk, 0) = rec.tracks.positions.at(t, n, 0);
                out.positions.at(t, kk, 1) = rec.tracks.positions.at(t, n, 1);
                out.visibility.at(t, kk) = rec.tracks.visibility.at(t, n);
                out.valid.at(t, kk) = 1;
            }
        return out;
    };
}

}  // namespace alt

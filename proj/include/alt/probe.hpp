#pragma once

// Correspondence probe: nearest-neighbor matching between two feature grids by
// cosine similarity, scored with bounding-box-normalized PCK, and a harness
// comparing matched vs mismatched token conditioning side by side.

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "alt/model.hpp"

namespace alt {

// pixel <-> feature-grid coordinate maps (cell centers at half-integer pixels)
inline double pix_to_feat(double p, double stride) { return (p + 0.5) / stride - 0.5; }
inline double feat_to_pix(double c, double stride) { return (c + 0.5) * stride - 0.5; }

namespace detail {

// Clamped bilinear sample of one channel vector from a {gh, gw, d} grid.
inline std::vector<double> bilinear_feat(const Tensor<double>& grid, double fx, double fy) {
    int gh = grid.dim(0), gw = grid.dim(1), d = grid.dim(2);
    auto axis = [](double c, int n) {
        double cc = std::min(std::max(c, 0.0), static_cast<double>(n - 1));
        int i0 = std::min(static_cast<int>(std::floor(cc)), std::max(n - 2, 0));
        double f = cc - i0;
        return std::pair<int, double>(i0, f);
    };
    auto [x0, fxw] = axis(fx, gw);
    auto [y0, fyw] = axis(fy, gh);
    int x1 = std::min(x0 + 1, gw - 1), y1 = std::min(y0 + 1, gh - 1);
    std::vector<double> out(static_cast<size_t>(d));
    for (int c = 0; c < d; ++c) {
        double v00 = grid.at(y0, x0, c), v01 = grid.at(y0, x1, c);
        double v10 = grid.at(y1, x0, c), v11 = grid.at(y1, x1, c);
        out[static_cast<size_t>(c)] = (1 - fyw) * ((1 - fxw) * v00 + fxw * v01) +
                                      fyw * ((1 - fxw) * v10 + fxw * v11);
    }
    return out;
}

}  // namespace detail

// For each source point, bilinearly sample its feature and return the pixel
// center of the target cell with maximal cosine similarity. Zero-norm cells
// score -inf; ties resolve to the lowest row-major cell index.
inline std::vector<std::array<double, 2>> nearest_correspondence(
    const Tensor<double>& src_feat, const Tensor<double>& tgt_feat,
    const std::vector<std::array<double, 2>>& src_points, double stride) {
    if (src_feat.ndim() != 3 || tgt_feat.ndim() != 3 || src_feat.dim(2) != tgt_feat.dim(2))
        throw InputError("nearest_correspondence: feature grids must be gh x gw x d with equal d");
    int gh = tgt_feat.dim(0), gw = tgt_feat.dim(1), d = tgt_feat.dim(2);
    std::vector<std::array<double, 2>> out;
    out.reserve(src_points.size());
    for (const auto& p : src_points) {
        std::vector<double> q =
            detail::bilinear_feat(src_feat, pix_to_feat(p[0], stride), pix_to_feat(p[1], stride));
        double qn = 0;
        for (double v : q) qn += v * v;
        qn = std::sqrt(qn);
        double best = -std::numeric_limits<double>::infinity();
        int best_cy = 0, best_cx = 0;
        for (int cy = 0; cy < gh; ++cy)
            for (int cx = 0; cx < gw; ++cx) {
                double dot = 0, tn = 0;
                for (int c = 0; c < d; ++c) {
                    double tv = tgt_feat.at(cy, cx, c);
                    dot += q[static_cast<size_t>(c)] * tv;
                    tn += tv * tv;
                }
                tn = std::sqrt(tn);
                if (qn == 0 || tn == 0) continue;
                double sim = dot / (qn * tn);
                if (sim > best) {
                    best = sim;
                    best_cy = cy;
                    best_cx = cx;
                }
            }
        out.push_back({feat_to_pix(best_cx, stride), feat_to_pix(best_cy, stride)});
    }
    return out;
}

// Fraction of points with L2 error <= alpha * max(bbox_w, bbox_h).
inline std::optional<double> pck_bbox(const std::vector<std::array<double, 2>>& pred,
                                      const std::vector<std::array<double, 2>>& gt, double bbox_w,
                                      double bbox_h, double alpha) {
    if (bbox_w <= 0 || bbox_h <= 0) throw InputError("pck_bbox: bbox dims must be positive");
    if (pred.size() != gt.size()) throw InputError("pck_bbox: point count mismatch");
    if (pred.empty()) return {};
    double thr = alpha * std::max(bbox_w, bbox_h);
    int hit = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        double dx = pred[i][0] - gt[i][0], dy = pred[i][1] - gt[i][1];
        if (std::sqrt(dx * dx + dy * dy) <= thr) ++hit;
    }
    return static_cast<double>(hit) / pred.size();
}

// ---------------------------------------------------------------------------
// conditioning comparison harness
// ---------------------------------------------------------------------------

struct ProbeReport {
    std::vector<std::array<double, 2>> src_points, gt_points;
    std::vector<std::array<double, 2>> pred_matched, pred_mismatched;
    std::optional<double> pck_matched, pck_mismatched;
    double bbox_w = 0, bbox_h = 0, alpha = 0.1;

    std::string to_text() const {
        std::ostringstream os;
        os << "point\tsrc\tgt\tmatched\tmismatched\n";
        char buf[160];
        for (size_t i = 0; i < src_points.size(); ++i) {
            std::snprintf(buf, sizeof(buf),
                          "%zu\t(%.2f, %.2f)\t(%.2f, %.2f)\t(%.2f, %.2f)\t(%.2f, %.2f)\n", i,
                          src_points[i][0], src_points[i][1], gt_points[i][0], gt_points[i][1],
                          pred_matched[i][0], pred_matched[i][1], pred_mismatched[i][0],
                          pred_mismatched[i][1]);
            os << buf;
        }
        auto fmt = [](const std::optional<double>& v) {
            if (!v) return std::string("absent");
            char b[32];
            std::snprintf(b, sizeof(b), "%g", *v);
            return std::string(b);
        };
        os << "pck_matched = " << fmt(pck_matched) << "\n";
        os << "pck_mismatched = " << fmt(pck_mismatched) << "\n";
        return os.str();
    }
};

// Extracts one frame's final feature grid as a plain tensor.
template <class S>
Tensor<double> probe_features(Model<S>& model, const Tensor<double>& frame,
                              const Tensor<double>& cond) {
    Graph<S> g;
    Tensor<S> f = cast_tensor<S>(frame);
    Tensor<S> c = cast_tensor<S>(cond);
    Value<S> feat = model.frame_features_cond(g, f, c);
    return cast_tensor<double>(g.value(feat));
}

// Matched: both images conditioned on tokens from the source image.
// Mismatched: the target is conditioned on tokens from `unrelated` instead.
// Both PCK values are reported; neither direction is asserted.
template <class S>
ProbeReport run_probe(Model<S>& model, const Tensor<double>& src, const Tensor<double>& tgt,
                      const Tensor<double>& unrelated,
                      const std::vector<std::array<double, 2>>& src_points,
                      const std::vector<std::array<double, 2>>& gt_points, double alpha = 0.1) {
    if (src_points.size() != gt_points.size())
        throw InputError("run_probe: src/gt point count mismatch");
    double stride = feature_stride();
    ProbeReport rep;
    rep.src_points = src_points;
    rep.gt_points = gt_points;
    rep.alpha = alpha;

    Tensor<double> src_feat = probe_features(model, src, src);
    Tensor<double> tgt_matched = probe_features(model, tgt, src);
    Tensor<double> tgt_mismatched = probe_features(model, tgt, unrelated);

    rep.pred_matched = nearest_correspondence(src_feat, tgt_matched, src_points, stride);
    rep.pred_mismatched = nearest_correspondence(src_feat, tgt_mismatched, src_points, stride);

    double minx = 0, maxx = 0, miny = 0, maxy = 0;
    for (size_t i = 0; i < gt_points.size(); ++i) {
        if (i == 0) {
            minx = maxx = gt_points[i][0];
            miny = maxy = gt_points[i][1];
        } else {
            minx = std::min(minx, gt_points[i][0]);
            maxx = std::max(maxx, gt_points[i][0]);
            miny = std::min(miny, gt_points[i][1]);
            maxy = std::max(maxy, gt_points[i][1]);
        }
    }
    rep.bbox_w = maxx - minx;
    rep.bbox_h = maxy - miny;
    if (rep.bbox_w <= 0) rep.bbox_w = tgt.dim(1);
    if (rep.bbox_h <= 0) rep.bbox_h = tgt.dim(0);
    rep.pck_matched = pck_bbox(rep.pred_matched, gt_points, rep.bbox_w, rep.bbox_h, alpha);
    rep.pck_mismatched = pck_bbox(rep.pred_mismatched, gt_points, rep.bbox_w, rep.bbox_h, alpha);
    return rep;
}

}  // namespace alt

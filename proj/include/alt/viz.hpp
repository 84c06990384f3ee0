#pragma once

// Trajectory rendering: per-frame overlays with colored per-track trails and
// circle (within threshold of gt) / cross (beyond) markers, written as PNGs.

#include <array>
#include <cmath>
#include <filesystem>
#include <string>

#include "alt/data.hpp"
#include "alt/image_io.hpp"
#include "alt/tracker.hpp"

namespace alt {

using Rgb = std::array<double, 3>;

// Distinct per-track colors: golden-ratio hue rotation at full saturation.
inline Rgb track_color(int n) {
    double h = std::fmod(0.12 + 0.61803398875 * n, 1.0) * 6.0;
    int i = static_cast<int>(h) % 6;
    double f = h - std::floor(h);
    double q = 1 - f;
    switch (i) {
        case 0: return {1, f, 0};
        case 1: return {q, 1, 0};
        case 2: return {0, 1, f};
        case 3: return {0, q, 1};
        case 4: return {f, 0, 1};
        default: return {1, 0, q};
    }
}

namespace detail {

inline void put_px(Tensor<double>& img, int x, int y, const Rgb& c) {
    if (x < 0 || y < 0 || x >= img.dim(1) || y >= img.dim(0)) return;
    for (int k = 0; k < 3; ++k) img.at(y, x, k) = c[static_cast<size_t>(k)];
}

}  // namespace detail

inline void draw_line(Tensor<double>& img, double x0, double y0, double x1, double y1,
                      const Rgb& c) {
    double dx = x1 - x0, dy = y1 - y0;
    int steps = static_cast<int>(std::ceil(std::max(std::abs(dx), std::abs(dy)))) + 1;
    for (int i = 0; i <= steps; ++i) {
        double t = steps == 0 ? 0.0 : static_cast<double>(i) / steps;
        detail::put_px(img, static_cast<int>(std::lround(x0 + t * dx)),
                       static_cast<int>(std::lround(y0 + t * dy)), c);
    }
}

inline void draw_circle(Tensor<double>& img, double cx, double cy, double r, const Rgb& c) {
    int n = std::max(12, static_cast<int>(std::ceil(2 * M_PI * r)));
    for (int i = 0; i < n; ++i) {
        double a = 2 * M_PI * i / n;
        detail::put_px(img, static_cast<int>(std::lround(cx + r * std::cos(a))),
                       static_cast<int>(std::lround(cy + r * std::sin(a))), c);
    }
}

inline void draw_cross(Tensor<double>& img, double cx, double cy, double r, const Rgb& c) {
    draw_line(img, cx - r, cy - r, cx + r, cy + r, c);
    draw_line(img, cx - r, cy + r, cx + r, cy - r, c);
}

// Overlays `pred` onto every frame of `record` and writes frame_%04d.png under
// out_dir. When gt is present (non-null, same shape) a circle marks a
// prediction within `threshold` pixels of gt, a cross one beyond it; without
// gt, trails only. threshold < 0 selects 0.1 * max(W, H).
inline void render_trajectories(const DatasetRecord& record, const TrackSet<double>& pred,
                                const std::string& out_dir, const TrackSet<double>* gt = nullptr,
                                double threshold = -1, int trail_len = 8) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    int T = record.frames.dim(0), H = record.frames.dim(1), W = record.frames.dim(2);
    if (pred.N > 0 && pred.T != T)
        throw InputError("render_trajectories: prediction frame count mismatch");
    if (gt && (gt->T != pred.T || gt->N != pred.N)) gt = nullptr;
    if (threshold < 0) threshold = 0.1 * std::max(W, H);
    for (int t = 0; t < T; ++t) {
        Tensor<double> img({H, W, 3});
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int k = 0; k < 3; ++k) img.at(y, x, k) = record.frames.at(t, y, x, k);
        for (int n = 0; n < pred.N; ++n) {
            Rgb c = track_color(n);
            int lo = std::max(0, t - trail_len);
            for (int s = lo; s < t; ++s) {
                if (pred.valid.at(s, n) <= 0.5 || pred.valid.at(s + 1, n) <= 0.5) continue;
                draw_line(img, pred.positions.at(s, n, 0), pred.positions.at(s, n, 1),
                          pred.positions.at(s + 1, n, 0), pred.positions.at(s + 1, n, 1), c);
            }
            if (pred.valid.at(t, n) <= 0.5) continue;
            double px = pred.positions.at(t, n, 0), py = pred.positions.at(t, n, 1);
            if (gt && gt->valid.at(t, n) > 0.5) {
                double dx = px - gt->positions.at(t, n, 0), dy = py - gt->positions.at(t, n, 1);
                if (std::sqrt(dx * dx + dy * dy) <= threshold)
                    draw_circle(img, px, py, 3, c);
                else
                    draw_cross(img, px, py, 3, c);
            } else {
                detail::put_px(img, static_cast<int>(std::lround(px)),
                               static_cast<int>(std::lround(py)), c);
            }
        }
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%04d.png", t);
        write_png((fs::path(out_dir) / name).string(), img);
    }
}

// Correspondence overlay: circles at within-threshold predictions, crosses
// elsewhere, plus gt dots, on a copy of `frame`.
inline void render_correspondences(const Tensor<double>& frame,
                                   const std::vector<std::array<double, 2>>& pred,
                                   const std::vector<std::array<double, 2>>& gt, double threshold,
                                   const std::string& out_path) {
    Tensor<double> img = frame;
    for (size_t i = 0; i < pred.size(); ++i) {
        Rgb c = track_color(static_cast<int>(i));
        double dx = pred[i][0] - gt[i][0], dy = pred[i][1] - gt[i][1];
        bool ok = std::sqrt(dx * dx + dy * dy) <= threshold;
        if (ok)
            draw_circle(img, pred[i][0], pred[i][1], 3, c);
        else
            draw_cross(img, pred[i][0], pred[i][1], 3, c);
        detail::put_px(img, static_cast<int>(std::lround(gt[i][0])),
                       static_cast<int>(std::lround(gt[i][1])), c);
    }
    write_png(out_path, img);
}

}  // namespace alt

#pragma once

// Synthetic clip generation with exact ground truth, the portable dataset
// format (PNG frames + a tracks.txt annotation file per video), and query
// sampling for the evaluation protocols and the training scheme.
//
// Rendering rule (shared by generation, the id-buffer visibility test, and
// any re-render oracle): an object occupies the axis-aligned rectangle
// [cx - w/2, cx + w/2) x [cy - h/2, cy + h/2); a pixel belongs to the object
// iff its center (px + 0.5, py + 0.5) lies inside. Objects paint in z order
// (background, sprites by index, occluders on top). A sprite's anchor is its
// center; it is visible iff the id buffer at the anchor's nearest pixel
// center holds that sprite's id. Frame intensities are quantized to k/255 at
// generation time so the PNG round trip is bit-exact.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "alt/config.hpp"
#include "alt/image_io.hpp"
#include "alt/random.hpp"
#include "alt/tracker.hpp"

namespace alt {

struct DatasetRecord {
    std::string name;
    Tensor<double> frames;  // T x H x W x 3, intensities in [0,1]
    TrackSet<double> tracks;
};

struct SceneObject {
    Tensor<double> texture;  // th x tw x 3
    double w = 0, h = 0;     // rendered extent in pixels
    std::vector<std::array<double, 2>> path;  // per frame (cx, cy)
    bool is_occluder = false;
};

inline Tensor<double> noise_texture(int h, int w, int cells, Rng& rng) {
    Tensor<double> low({cells, cells, 3});
    for (auto& v : low.data) v = rng.uniform();
    Tensor<double> out({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double gy = (y + 0.5) / h * (cells - 1), gx = (x + 0.5) / w * (cells - 1);
            int y0 = std::min(static_cast<int>(gy), cells - 2), x0 = std::min(static_cast<int>(gx), cells - 2);
            double fy = gy - y0, fx = gx - x0;
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = (1 - fy) * ((1 - fx) * low.at(y0, x0, c) + fx * low.at(y0, x0 + 1, c)) +
                                  fy * ((1 - fx) * low.at(y0 + 1, x0, c) + fx * low.at(y0 + 1, x0 + 1, c));
        }
    return out;
}

// Paint one frame and its object-id buffer. ids: background -1, objects by
// index in draw order.
inline void render_frame(const std::vector<SceneObject>& objects, const Tensor<double>& background,
                         int t, Tensor<double>& frame, std::vector<int>& idbuf) {
    int H = background.dim(0), W = background.dim(1);
    frame = background;
    idbuf.assign(static_cast<size_t>(H) * W, -1);
    for (size_t oi = 0; oi < objects.size(); ++oi) {
        const SceneObject& o = objects[oi];
        double cx = o.path[t][0], cy = o.path[t][1];
        double x0 = cx - o.w / 2, x1 = cx + o.w / 2;
        double y0 = cy - o.h / 2, y1 = cy + o.h / 2;
        int px0 = std::max(0, static_cast<int>(std::ceil(x0 - 0.5)));
        int py0 = std::max(0, static_cast<int>(std::ceil(y0 - 0.5)));
        int px1 = std::min(W - 1, static_cast<int>(std::floor(x1 - 0.5)));
        int py1 = std::min(H - 1, static_cast<int>(std::floor(y1 - 0.5)));
        int th = o.texture.dim(0), tw = o.texture.dim(1);
        for (int py = py0; py <= py1; ++py) {
            double pcy = py + 0.5;
            if (!(pcy >= y0 && pcy < y1)) continue;
            for (int px = px0; px <= px1; ++px) {
                double pcx = px + 0.5;
                if (!(pcx >= x0 && pcx < x1)) continue;
                double u = (pcx - x0) / o.w * tw - 0.5, v = (pcy - y0) / o.h * th - 0.5;
                double uc = std::min(std::max(u, 0.0), tw - 1.0);
                double vc = std::min(std::max(v, 0.0), th - 1.0);
                int ux = std::min(static_cast<int>(uc), tw - 2 < 0 ? 0 : tw - 2);
                int vy = std::min(static_cast<int>(vc), th - 2 < 0 ? 0 : th - 2);
                double fu = uc - ux, fv = vc - vy;
                int ux1 = std::min(ux + 1, tw - 1), vy1 = std::min(vy + 1, th - 1);
                for (int c = 0; c < 3; ++c)
                    frame.at(py, px, c) =
                        (1 - fv) * ((1 - fu) * o.texture.at(vy, ux, c) + fu * o.texture.at(vy, ux1, c)) +
                        fv * ((1 - fu) * o.texture.at(vy1, ux, c) + fu * o.texture.at(vy1, ux1, c));
                idbuf[static_cast<size_t>(py) * W + px] = static_cast<int>(oi);
            }
        }
    }
}

inline std::array<int, 2> anchor_pixel(double cx, double cy, int W, int H) {
    int px = static_cast<int>(std::lround(cx - 0.5));
    int py = static_cast<int>(std::lround(cy - 0.5));
    px = std::min(std::max(px, 0), W - 1);
    py = std::min(std::max(py, 0), H - 1);
    return {px, py};
}

// Render all frames; ground truth comes from the non-occluder objects'
// anchor paths and the id buffer.
inline DatasetRecord render_scene(const std::vector<SceneObject>& objects,
                                  const Tensor<double>& background, int T, const std::string& name) {
    int H = background.dim(0), W = background.dim(1);
    std::vector<int> sprite_idx;
    for (size_t i = 0; i < objects.size(); ++i)
        if (!objects[i].is_occluder) sprite_idx.push_back(static_cast<int>(i));
    int N = static_cast<int>(sprite_idx.size());
    DatasetRecord rec;
    rec.name = name;
    rec.frames = Tensor<double>({T, H, W, 3});
    rec.tracks = TrackSet<double>(T, N);
    Tensor<double> frame;
    std::vector<int> idbuf;
    for (int t = 0; t < T; ++t) {
        render_frame(objects, background, t, frame, idbuf);
        for (auto& v : frame.data) v = std::lround(v * 255.0) / 255.0;
        std::copy(frame.data.begin(), frame.data.end(),
                  rec.frames.data.begin() + static_cast<size_t>(t) * frame.numel());
        for (int n = 0; n < N; ++n) {
            const SceneObject& o = objects[sprite_idx[n]];
            double cx = o.path[t][0], cy = o.path[t][1];
            auto [px, py] = anchor_pixel(cx, cy, W, H);
            rec.tracks.positions.at(t, n, 0) = cx;
            rec.tracks.positions.at(t, n, 1) = cy;
            rec.tracks.visibility.at(t, n) =
                idbuf[static_cast<size_t>(py) * W + px] == sprite_idx[n] ? 1.0 : 0.0;
            rec.tracks.valid.at(t, n) = 1.0;
        }
    }
    return rec;
}

namespace detail {

inline std::vector<std::array<double, 2>> motion_path(const std::string& model, int T, double W,
                                                      double H, double margin, Rng& rng) {
    std::vector<std::array<double, 2>> path(T);
    double lox = margin, hix = W - 1 - margin, loy = margin, hiy = H - 1 - margin;
    if (model == "cv") {
        double sp = rng.uniform(0.4, 1.4), ang = rng.uniform(0, 2 * M_PI);
        double vx = sp * std::cos(ang), vy = sp * std::sin(ang);
        double x0lo = lox + std::max(0.0, -vx * (T - 1)), x0hi = hix - std::max(0.0, vx * (T - 1));
        double y0lo = loy + std::max(0.0, -vy * (T - 1)), y0hi = hiy - std::max(0.0, vy * (T - 1));
        if (x0hi < x0lo) vx = 0, x0lo = lox, x0hi = hix;
        if (y0hi < y0lo) vy = 0, y0lo = loy, y0hi = hiy;
        double x = rng.uniform(x0lo, x0hi), y = rng.uniform(y0lo, y0hi);
        for (int t = 0; t < T; ++t) path[t] = {x + vx * t, y + vy * t};
    } else if (model == "sin") {
        double ax = rng.uniform(2.0, std::max(3.0, (hix - lox) / 4));
        double ay = rng.uniform(2.0, std::max(3.0, (hiy - loy) / 4));
        double cx = rng.uniform(lox + ax, hix - ax), cy = rng.uniform(loy + ay, hiy - ay);
        double wx = rng.uniform(0.15, 0.5), wy = rng.uniform(0.15, 0.5);
        double px = rng.uniform(0, 2 * M_PI), py = rng.uniform(0, 2 * M_PI);
        for (int t = 0; t < T; ++t)
            path[t] = {cx + ax * std::sin(wx * t + px), cy + ay * std::sin(wy * t + py)};
    } else if (model == "bounce") {
        double x = rng.uniform(lox, hix), y = rng.uniform(loy, hiy);
        double sp = rng.uniform(0.8, 2.0), ang = rng.uniform(0, 2 * M_PI);
        double vx = sp * std::cos(ang), vy = sp * std::sin(ang);
        for (int t = 0; t < T; ++t) {
            path[t] = {x, y};
            x += vx;
            y += vy;
            while (x < lox || x > hix) {
                if (x < lox) x = 2 * lox - x;
                if (x > hix) x = 2 * hix - x;
                vx = -vx;
            }
            while (y < loy || y > hiy) {
                if (y < loy) y = 2 * loy - y;
                if (y > hiy) y = 2 * hiy - y;
                vy = -vy;
            }
        }
    } else {
        throw ConfigError("unknown motion model '" + model + "'");
    }
    return path;
}

}  // namespace detail

inline DatasetRecord generate_clip(const Config& cfg, uint64_t seed, const std::string& name) {
    int W = cfg.synth_w, H = cfg.synth_h, T = cfg.synth_frames;
    Rng rng(seed_for(seed, "clip:" + name));
    double max_side = std::min(W, H) / 3.0;
    if (max_side < 8) throw ConfigError("generate_clip: resolution too small for sprites");
    Tensor<double> background = noise_texture(H, W, 8, rng);
    std::vector<SceneObject> objects;
    for (int i = 0; i < cfg.synth_sprites; ++i) {
        SceneObject o;
        o.w = rng.uniform(10.0, max_side);
        o.h = rng.uniform(10.0, max_side);
        o.texture = noise_texture(static_cast<int>(std::lround(o.h)), static_cast<int>(std::lround(o.w)),
                                  5, rng);
        const std::string& m = cfg.synth_motions[i % cfg.synth_motions.size()];
        double margin = std::max(o.w, o.h) / 2 + 1;
        o.path = detail::motion_path(m, T, W, H, margin, rng);
        objects.push_back(std::move(o));
    }
    for (int i = 0; i < cfg.synth_occluders; ++i) {
        SceneObject o;
        o.is_occluder = true;
        o.w = rng.uniform(14.0, max_side * 1.2);
        o.h = rng.uniform(14.0, max_side * 1.2);
        o.texture = noise_texture(static_cast<int>(std::lround(o.h)), static_cast<int>(std::lround(o.w)),
                                  3, rng);
        o.path = detail::motion_path("bounce", T, W, H, std::max(o.w, o.h) / 2 + 1, rng);
        objects.push_back(std::move(o));
    }
    return render_scene(objects, background, T, name);
}

// ---------------------------------------------------------------------------
// dataset format
// ---------------------------------------------------------------------------

inline void save_record(const DatasetRecord& rec, const std::string& root) {
    namespace fs = std::filesystem;
    fs::path dir = fs::path(root) / rec.name;
    fs::create_directories(dir / "frames");
    int T = rec.frames.dim(0), H = rec.frames.dim(1), W = rec.frames.dim(2);
    Tensor<double> frame({H, W, 3});
    for (int t = 0; t < T; ++t) {
        std::copy(rec.frames.data.begin() + static_cast<size_t>(t) * frame.numel(),
                  rec.frames.data.begin() + static_cast<size_t>(t + 1) * frame.numel(),
                  frame.data.begin());
        char fname[32];
        std::snprintf(fname, sizeof(fname), "%06d.png", t);
        write_png((dir / "frames" / fname).string(), frame);
    }
    std::ofstream out(dir / "tracks.txt");
    if (!out) throw InputError("save_record: cannot write " + (dir / "tracks.txt").string());
    out << "resolution " << W << " " << H << "\n";
    out << "frames " << T << "\n";
    out << "tracks " << rec.tracks.N << "\n";
    char buf[160];
    for (int t = 0; t < T; ++t)
        for (int n = 0; n < rec.tracks.N; ++n) {
            std::snprintf(buf, sizeof(buf), "%d %d %.17g %.17g %d %d\n", t, n,
                          rec.tracks.positions.at(t, n, 0), rec.tracks.positions.at(t, n, 1),
                          rec.tracks.visibility.at(t, n) > 0.5 ? 1 : 0,
                          rec.tracks.valid.at(t, n) > 0.5 ? 1 : 0);
            out << buf;
        }
}

inline void save_records(const std::vector<DatasetRecord>& recs, const std::string& root) {
    for (const auto& r : recs) save_record(r, root);
}

inline DatasetRecord load_record(const std::string& dir_path, const std::string& name) {
    namespace fs = std::filesystem;
    fs::path dir(dir_path);
    std::ifstream in(dir / "tracks.txt");
    if (!in) throw ParseError("load_record: missing " + (dir / "tracks.txt").string());
    auto fail = [&](int line, const std::string& what) {
        throw ParseError("load_record: " + (dir / "tracks.txt").string() + ":" + std::to_string(line) +
                         ": " + what);
    };
    std::string key;
    int W = 0, H = 0, T = 0, N = 0;
    int lineno = 1;
    if (!(in >> key >> W >> H) || key != "resolution" || W < 8 || H < 8)
        fail(lineno, "expected 'resolution W H'");
    ++lineno;
    if (!(in >> key >> T) || key != "frames" || T < 1) fail(lineno, "expected 'frames T'");
    ++lineno;
    if (!(in >> key >> N) || key != "tracks" || N < 0) fail(lineno, "expected 'tracks N'");
    DatasetRecord rec;
    rec.name = name;
    rec.tracks = TrackSet<double>(T, N);
    std::vector<char> seen(static_cast<size_t>(T) * N, 0);
    std::string line;
    std::getline(in, line);  // rest of the 'tracks N' header line
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        int t, n, vis, valid;
        double x, y;  // sscanf accepts nan/inf, which stream extraction rejects
        if (std::sscanf(line.c_str(), "%d %d %lf %lf %d %d", &t, &n, &x, &y, &vis, &valid) != 6)
            fail(lineno, "malformed annotation line");
        if (t < 0 || t >= T || n < 0 || n >= N) fail(lineno, "track/frame index out of range");
        if (valid && vis && (!std::isfinite(x) || !std::isfinite(y)))
            throw IntegrityError("load_record: non-finite position for visible point at frame " +
                                 std::to_string(t) + ", track " + std::to_string(n));
        rec.tracks.positions.at(t, n, 0) = x;
        rec.tracks.positions.at(t, n, 1) = y;
        rec.tracks.visibility.at(t, n) = vis ? 1.0 : 0.0;
        rec.tracks.valid.at(t, n) = valid ? 1.0 : 0.0;
        seen[static_cast<size_t>(t) * N + n] = 1;
    }
    for (size_t i = 0; i < seen.size(); ++i)
        if (!seen[i])
            throw IntegrityError("load_record: missing annotation for frame " +
                                 std::to_string(static_cast<int>(i) / N) + ", track " +
                                 std::to_string(static_cast<int>(i) % N));
    rec.frames = Tensor<double>({T, H, W, 3});
    for (int tt = 0; tt < T; ++tt) {
        char fname[32];
        std::snprintf(fname, sizeof(fname), "%06d.png", tt);
        fs::path p = dir / "frames" / fname;
        if (!fs::exists(p))
            throw IntegrityError("load_record: frame count mismatch, missing " + p.string());
        Tensor<double> f = read_png(p.string());
        if (f.dim(0) != H || f.dim(1) != W)
            throw IntegrityError("load_record: frame size mismatch in " + p.string());
        std::copy(f.data.begin(), f.data.end(),
                  rec.frames.data.begin() + static_cast<size_t>(tt) * f.numel());
    }
    return rec;
}

inline std::vector<DatasetRecord> load_records(const std::string& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw InputError("load_records: not a directory: " + root);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "tracks.txt"))
            names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw InputError("load_records: no videos under " + root);
    std::vector<DatasetRecord> out;
    out.reserve(names.size());
    for (const auto& n : names) out.push_back(load_record((fs::path(root) / n).string(), n));
    return out;
}

// Exact coordinate rescale to a new resolution (positions only).
inline TrackSet<double> rescale_tracks(const TrackSet<double>& ts, int from_w, int from_h, int to_w,
                                       int to_h) {
    TrackSet<double> out = ts;
    double sx = static_cast<double>(to_w) / from_w, sy = static_cast<double>(to_h) / from_h;
    for (int t = 0; t < ts.T; ++t)
        for (int n = 0; n < ts.N; ++n) {
            out.positions.at(t, n, 0) = ts.positions.at(t, n, 0) * sx;
            out.positions.at(t, n, 1) = ts.positions.at(t, n, 1) * sy;
        }
    return out;
}

// ---------------------------------------------------------------------------
// query sampling
// ---------------------------------------------------------------------------

struct SampledQuery {
    QueryPoint q;
    int track = 0;
};

// first: one query per track at its earliest visible frame. strided: queries
// at every visible frame among {0, 5, 10, ...}. Tracks never visible are
// skipped.
inline std::vector<SampledQuery> sample_queries(const TrackSet<double>& gt, const std::string& protocol) {
    std::vector<SampledQuery> out;
    for (int n = 0; n < gt.N; ++n) {
        if (protocol == "first") {
            for (int t = 0; t < gt.T; ++t)
                if (gt.valid.at(t, n) > 0 && gt.visibility.at(t, n) > 0.5) {
                    out.push_back({{t, gt.positions.at(t, n, 0), gt.positions.at(t, n, 1)}, n});
                    break;
                }
        } else if (protocol == "strided") {
            for (int t = 0; t < gt.T; t += 5)
                if (gt.valid.at(t, n) > 0 && gt.visibility.at(t, n) > 0.5)
                    out.push_back({{t, gt.positions.at(t, n, 0), gt.positions.at(t, n, 1)}, n});
        } else {
            throw ConfigError("sample_queries: protocol must be first or strided");
        }
    }
    return out;
}

// Training scheme: `count` queries at the first or middle frame, visible
// there; deterministic per rng state.
inline std::vector<SampledQuery> sample_train_queries(const TrackSet<double>& gt, int count, Rng& rng) {
    std::vector<SampledQuery> out;
    int mid = gt.T / 2;
    int guard = 0;
    while (static_cast<int>(out.size()) < count && guard < count * 64) {
        ++guard;
        int n = static_cast<int>(rng.index(static_cast<size_t>(gt.N)));
        int f = rng.uniform() < 0.5 ? 0 : mid;
        if (!(gt.valid.at(f, n) > 0 && gt.visibility.at(f, n) > 0.5)) f = f == 0 ? mid : 0;
        if (!(gt.valid.at(f, n) > 0 && gt.visibility.at(f, n) > 0.5)) continue;
        out.push_back({{f, gt.positions.at(f, n, 0), gt.positions.at(f, n, 1)}, n});
    }
    return out;
}

// Temporal subsampling by a frame interval (training augmentation).
inline DatasetRecord subsample_record(const DatasetRecord& rec, int interval) {
    if (interval <= 1) return rec;
    int T = rec.frames.dim(0);
    int Ts = (T + interval - 1) / interval;
    DatasetRecord out;
    out.name = rec.name;
    out.frames = Tensor<double>({Ts, rec.frames.dim(1), rec.frames.dim(2), 3});
    out.tracks = TrackSet<double>(Ts, rec.tracks.N);
    size_t fsz = rec.frames.numel() / T;
    for (int i = 0; i < Ts; ++i) {
        int t = i * interval;
        std::copy(rec.frames.data.begin() + t * fsz, rec.frames.data.begin() + (t + 1) * fsz,
                  out.frames.data.begin() + static_cast<size_t>(i) * fsz);
        for (int n = 0; n < rec.tracks.N; ++n) {
            out.tracks.positions.at(i, n, 0) = rec.tracks.positions.at(t, n, 0);
            out.tracks.positions.at(i, n, 1) = rec.tracks.positions.at(t, n, 1);
            out.tracks.visibility.at(i, n) = rec.tracks.visibility.at(t, n);
            out.tracks.valid.at(i, n) = rec.tracks.valid.at(t, n);
        }
    }
    return out;
}

}  // namespace alt

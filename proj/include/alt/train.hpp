#pragma once

// Training engine: AdamW with decoupled weight decay and linear warmup,
// versioned binary checkpoints (write-then-rename), and the clip-sampling
// training loop (random clip, random frame interval, queries visible at the
// first or middle frame).

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "alt/data.hpp"
#include "alt/loss.hpp"
#include "alt/model.hpp"
#include "alt/tracker.hpp"

namespace alt {

template <class S>
struct AdamW {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t t = 0;

    void step(ParamStore<S>& ps, double lr, double weight_decay) {
        // Validate every gradient before touching any parameter so a bad
        // group aborts the whole step instead of leaving a partial update.
        for (auto& [name, p] : ps.all()) {
            if (p.frozen) continue;
            if (!p.grad.all_finite())
                throw NumericError("train_step: non-finite gradient in parameter group '" + name + "'");
        }
        ++t;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (auto& [name, p] : ps.all()) {
            if (p.frozen) continue;
            for (size_t i = 0; i < p.value.data.size(); ++i) {
                double g = p.grad.data[i];
                double m = beta1 * p.m.data[i] + (1 - beta1) * g;
                double v = beta2 * p.v.data[i] + (1 - beta2) * g * g;
                p.m.data[i] = static_cast<S>(m);
                p.v.data[i] = static_cast<S>(v);
                double upd = (m / bc1) / (std::sqrt(v / bc2) + eps) + weight_decay * p.value.data[i];
                p.value.data[i] = static_cast<S>(p.value.data[i] - lr * upd);
            }
        }
    }
};

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

inline constexpr char kCkptMagic[8] = {'A', 'L', 'T', 'C', 'K', 'P', 'T', '\0'};
inline constexpr uint32_t kCkptVersion = 1;

template <class S>
void save_checkpoint(const std::string& path, const Model<S>& model, const AdamW<S>& opt,
                     int64_t iteration) {
    namespace fs = std::filesystem;
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw InputError("save_checkpoint: cannot write '" + tmp + "'");
        auto put = [&](const void* p, size_t n) { out.write(static_cast<const char*>(p), n); };
        auto put_u32 = [&](uint32_t v) { put(&v, 4); };
        auto put_u64 = [&](uint64_t v) { put(&v, 8); };
        put(kCkptMagic, 8);
        put_u32(kCkptVersion);
        put_u64(static_cast<uint64_t>(iteration));
        put_u64(static_cast<uint64_t>(opt.t));
        std::string cfg = model.cfg.to_text();
        put_u32(static_cast<uint32_t>(cfg.size()));
        put(cfg.data(), cfg.size());
        put_u32(static_cast<uint32_t>(model.params.all().size()));
        for (const auto& [name, p] : model.params.all()) {
            put_u32(static_cast<uint32_t>(name.size()));
            put(name.data(), name.size());
            uint8_t fz = p.frozen ? 1 : 0;
            put(&fz, 1);
            put_u32(static_cast<uint32_t>(p.value.shape.size()));
            for (int d : p.value.shape) put_u32(static_cast<uint32_t>(d));
            auto put_tensor = [&](const Tensor<S>& t) {
                for (const S& x : t.data) {
                    double v = static_cast<double>(x);
                    put(&v, 8);
                }
            };
            put_tensor(p.value);
            put_tensor(p.m);
            put_tensor(p.v);
        }
        if (!out) throw InputError("save_checkpoint: write failure on '" + tmp + "'");
    }
    fs::rename(tmp, path);
}

// Reads the config text stored in a checkpoint without loading parameters.
inline Config checkpoint_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw ParseError("checkpoint: bad magic in '" + path + "'");
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != kCkptVersion)
        throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    uint64_t iter = 0, adam_t = 0;
    in.read(reinterpret_cast<char*>(&iter), 8);
    in.read(reinterpret_cast<char*>(&adam_t), 8);
    uint32_t cfg_len = 0;
    in.read(reinterpret_cast<char*>(&cfg_len), 4);
    std::string text(cfg_len, '\0');
    in.read(text.data(), cfg_len);
    if (!in) throw ParseError("checkpoint: truncated config in '" + path + "'");
    Config cfg;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        auto eq = line.find('=');
        if (eq != std::string::npos) cfg.set(line.substr(0, eq), line.substr(eq + 1));
    }
    return cfg;
}

template <class S>
int64_t load_checkpoint(const std::string& path, Model<S>& model, AdamW<S>* opt = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
        throw ParseError("checkpoint: bad magic in '" + path + "'");
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (version != kCkptVersion)
        throw ParseError("checkpoint: unsupported version " + std::to_string(version));
    uint64_t iter = 0, adam_t = 0;
    in.read(reinterpret_cast<char*>(&iter), 8);
    in.read(reinterpret_cast<char*>(&adam_t), 8);
    if (opt) opt->t = static_cast<int64_t>(adam_t);
    uint32_t cfg_len = 0;
    in.read(reinterpret_cast<char*>(&cfg_len), 4);
    in.seekg(cfg_len, std::ios::cur);
    uint32_t n_params = 0;
    in.read(reinterpret_cast<char*>(&n_params), 4);
    if (n_params != model.params.all().size())
        throw IntegrityError("checkpoint: parameter count mismatch in '" + path + "'");
    for (uint32_t k = 0; k < n_params; ++k) {
        uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), 4);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        uint8_t fz = 0;
        in.read(reinterpret_cast<char*>(&fz), 1);
        uint32_t ndim = 0;
        in.read(reinterpret_cast<char*>(&ndim), 4);
        std::vector<int> shape(ndim);
        for (auto& d : shape) {
            uint32_t v = 0;
            in.read(reinterpret_cast<char*>(&v), 4);
            d = static_cast<int>(v);
        }
        if (!model.params.has(name))
            throw IntegrityError("checkpoint: unknown parameter '" + name + "'");
        Param<S>& p = model.params.get(name);
        if (p.value.shape != shape)
            throw IntegrityError("checkpoint: shape mismatch for '" + name + "'");
        auto get_tensor = [&](Tensor<S>& t) {
            for (S& x : t.data) {
                double v = 0;
                in.read(reinterpret_cast<char*>(&v), 8);
                x = static_cast<S>(v);
            }
        };
        get_tensor(p.value);
        get_tensor(p.m);
        get_tensor(p.v);
        if (!in) throw ParseError("checkpoint: truncated data at parameter '" + name + "'");
    }
    return static_cast<int64_t>(iter);
}

inline uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("file_hash: cannot open '" + path + "'");
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[8192];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
        if (in.eof()) break;
    }
    return h;
}

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

template <class S>
class Trainer {
  public:
    Trainer(Model<S>& model, std::vector<DatasetRecord> data)
        : model_(&model),
          cfg_(model.cfg),
          data_(std::move(data)),
          rng_(seed_for(model.cfg.seed, "trainer")) {
        if (data_.empty()) throw InputError("trainer: empty dataset");
    }

    // One optimization step over `batch_size` sampled clips.
    LossReport step(int64_t iteration) {
        model_->params.zero_grads();
        LossReport agg;
        for (int b = 0; b < cfg_.batch_size; ++b) {
            const DatasetRecord& rec = data_[rng_.index(data_.size())];
            int interval = cfg_.frame_intervals[rng_.index(cfg_.frame_intervals.size())];
            DatasetRecord sub = subsample_record(rec, interval);
            auto sq = sample_train_queries(sub.tracks, cfg_.tracks_per_batch, rng_);
            if (sq.empty()) continue;
            Graph<S> g;
            Tensor<S> frames = cast_tensor<S>(sub.frames);
            std::vector<QueryPoint> queries;
            queries.reserve(sq.size());
            for (const auto& s : sq) queries.push_back(s.q);
            TrackRun<S> run = track_video(g, *model_, frames, queries);
            TrackSet<S> gt = align_gt(sub.tracks, sq);
            auto [loss, rep] = training_loss(g, run, gt, cfg_);
            g.backward(loss);
            agg.track_loss += rep.track_loss;
            agg.visibility_loss += rep.visibility_loss;
            agg.total += rep.total;
            agg.window_count += rep.window_count;
            agg.no_valid_points = agg.no_valid_points || rep.no_valid_points;
        }
        double lr = cfg_.learning_rate;
        if (cfg_.warmup_steps > 0)
            lr *= std::min(1.0, static_cast<double>(iteration + 1) / cfg_.warmup_steps);
        opt_.step(model_->params, lr, cfg_.weight_decay);
        double inv = 1.0 / cfg_.batch_size;
        agg.track_loss *= inv;
        agg.visibility_loss *= inv;
        agg.total *= inv;
        return agg;
    }

    // Ground truth aligned to the sampled queries (one column per query).
    static TrackSet<S> align_gt(const TrackSet<double>& gt, const std::vector<SampledQuery>& sq) {
        TrackSet<S> out(gt.T, static_cast<int>(sq.size()));
        for (int t = 0; t < gt.T; ++t)
            for (size_t k = 0; k < sq.size(); ++k) {
                int n = sq[k].track;
                out.positions.at(t, static_cast<int>(k), 0) = static_cast<S>(gt.positions.at(t, n, 0));
                out.positions.at(t, static_cast<int>(k), 1) = static_cast<S>(gt.positions.at(t, n, 1));
                out.visibility.at(t, static_cast<int>(k)) = static_cast<S>(gt.visibility.at(t, n));
                out.valid.at(t, static_cast<int>(k)) = static_cast<S>(gt.valid.at(t, n));
            }
        return out;
    }

    // Full loop; calls `on_step(iteration, report)` after each step.
    std::vector<double> run(int64_t start_iter,
                            const std::function<void(int64_t, const LossReport&)>& on_step = nullptr) {
        std::vector<double> losses;
        for (int64_t it = start_iter; it < cfg_.iterations; ++it) {
            LossReport rep = step(it);
            losses.push_back(rep.total);
            if (on_step) on_step(it, rep);
        }
        return losses;
    }

    AdamW<S>& optimizer() { return opt_; }

  private:
    Model<S>* model_;
    Config cfg_;
    std::vector<DatasetRecord> data_;
    Rng rng_;
    AdamW<S> opt_;
};

}  // namespace alt

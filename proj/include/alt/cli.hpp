#pragma once

// Command-line surface: train / eval / probe / gen-data / viz subcommands,
// flat key=value config files with flag overrides, and per-run manifests
// (config snapshot, seed, version, content hashes — no timestamps or
// machine-specific paths, so runs are reproducible from the manifest alone).

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "alt/metrics.hpp"
#include "alt/probe.hpp"
#include "alt/train.hpp"
#include "alt/viz.hpp"

namespace alt {

inline constexpr const char* kVersion = "0.1.0";

using Sc = float;  // runtime scalar for the CLI

struct CliOptions {
    std::string config_path, data_dir, out_dir, checkpoint;
    std::string protocol = "first";
    std::optional<uint64_t> seed;
    std::optional<std::string> decoder;  // on | off
    std::optional<std::string> integration, mapping;
    std::optional<int> self_layers, cross_layers;
};

// defaults -> config file -> explicit flags
inline Config build_config(const CliOptions& o, const Config& base = Config{}) {
    Config cfg = base;
    if (!o.config_path.empty()) {
        if (!std::filesystem::exists(o.config_path))
            throw InputError("config file not found: " + o.config_path);
        cfg.load_file(o.config_path);
    }
    if (o.seed) cfg.set("seed", std::to_string(*o.seed));
    if (o.decoder) cfg.set("decoder_enabled", *o.decoder == "on" ? "true" : "false");
    if (o.integration) cfg.set("integration", *o.integration);
    if (o.mapping) cfg.set("mapping_network", *o.mapping);
    if (o.self_layers) cfg.set("self_layers", std::to_string(*o.self_layers));
    if (o.cross_layers) cfg.set("cross_layers", std::to_string(*o.cross_layers));
    cfg.validate();
    return cfg;
}

// FNV-1a over sorted relative paths and file bytes.
inline uint64_t hash_dir(const std::string& root) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw InputError("hash_dir: not a directory: " + root);
    std::vector<std::string> rels;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) rels.push_back(fs::relative(e.path(), root).generic_string());
    std::sort(rels.begin(), rels.end());
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& r : rels) {
        h = fnv1a64(r.data(), r.size(), h);
        uint64_t fh = file_hash((fs::path(root) / r).string());
        h = fnv1a64(&fh, sizeof(fh), h);
    }
    return h;
}

inline void write_manifest(const std::string& out_dir, const std::string& command,
                           const Config& cfg,
                           const std::map<std::string, std::string>& hashes) {
    nlohmann::json j;
    j["command"] = command;
    j["version"] = kVersion;
    j["seed"] = cfg.seed;
    nlohmann::json jc;
    std::istringstream ss(cfg.to_text());
    std::string line;
    while (std::getline(ss, line)) {
        auto eq = line.find('=');
        if (eq != std::string::npos) jc[line.substr(0, eq)] = line.substr(eq + 1);
    }
    j["config"] = jc;
    nlohmann::json jh;
    for (const auto& [k, v] : hashes) jh[k] = v;
    j["hashes"] = jh;
    std::ofstream out(std::filesystem::path(out_dir) / "manifest.json");
    out << j.dump(2) << "\n";
}

inline void require_out_dir(const std::string& out) {
    if (out.empty()) throw InputError("--out is required");
    std::filesystem::create_directories(out);
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

inline int cmd_gen_data(const CliOptions& o) {
    Config cfg = build_config(o);
    require_out_dir(o.out_dir);
    std::vector<DatasetRecord> recs;
    for (int i = 0; i < cfg.synth_videos; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%03d", i);
        recs.push_back(generate_clip(cfg, seed_for(cfg.seed, name), name));
    }
    save_records(recs, o.out_dir);
    write_manifest(o.out_dir, "gen-data", cfg, {{"data", hex64(hash_dir(o.out_dir))}});
    std::cout << "wrote " << recs.size() << " clips to " << o.out_dir << "\n";
    return 0;
}

inline int cmd_train(const CliOptions& o) {
    Config cfg = build_config(o);
    if (o.data_dir.empty()) throw InputError("--data is required");
    require_out_dir(o.out_dir);
    std::vector<DatasetRecord> data = load_records(o.data_dir);
    Model<Sc> model(cfg);
    Trainer<Sc> trainer(model, data);
    int64_t start = 0;
    if (!o.checkpoint.empty())
        start = load_checkpoint(o.checkpoint, model, &trainer.optimizer());
    std::string ckpt_path = (std::filesystem::path(o.out_dir) / "checkpoint.alt").string();
    std::ofstream log(std::filesystem::path(o.out_dir) / "loss_log.txt");
    log << "iter\ttotal\ttrack\tvis\n";
    trainer.run(start, [&](int64_t it, const LossReport& rep) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%lld\t%.6f\t%.6f\t%.6f",
                      static_cast<long long>(it), rep.total, rep.track_loss, rep.visibility_loss);
        log << buf << "\n";
        if (cfg.log_every > 0 && (it + 1) % cfg.log_every == 0) {
            std::cout << "iter " << (it + 1) << "/" << cfg.iterations << " loss " << rep.total
                      << "\n";
            log.flush();
        }
        if (cfg.checkpoint_every > 0 && (it + 1) % cfg.checkpoint_every == 0)
            save_checkpoint(ckpt_path, model, trainer.optimizer(), it + 1);
    });
    save_checkpoint(ckpt_path, model, trainer.optimizer(), cfg.iterations);
    std::ofstream cfg_out(std::filesystem::path(o.out_dir) / "config.cfg");
    cfg_out << cfg.to_text();
    write_manifest(o.out_dir, "train", cfg,
                   {{"data", hex64(hash_dir(o.data_dir))},
                    {"checkpoint", hex64(file_hash(ckpt_path))}});
    std::cout << "checkpoint written to " << ckpt_path << "\n";
    return 0;
}

inline int cmd_eval(const CliOptions& o) {
    if (o.checkpoint.empty()) throw InputError("--checkpoint is required");
    if (o.data_dir.empty()) throw InputError("--data is required");
    require_out_dir(o.out_dir);
    Config cfg = build_config(o, checkpoint_config(o.checkpoint));
    Model<Sc> model(cfg);
    load_checkpoint(o.checkpoint, model);
    std::vector<DatasetRecord> data = load_records(o.data_dir);
    MetricsReport rep = evaluate(make_tracker_predictor(model, o.protocol), data, o.protocol,
                                 cfg.visibility_threshold);
    std::ofstream txt(std::filesystem::path(o.out_dir) / "metrics.txt");
    txt << rep.to_text();
    std::ofstream tsv(std::filesystem::path(o.out_dir) / "metrics.tsv");
    tsv << "aj\tdelta_avg\toa\tmte\tsurvival\tn_points\tn_videos\n" << rep.to_row() << "\n";
    write_manifest(o.out_dir, "eval", cfg,
                   {{"data", hex64(hash_dir(o.data_dir))},
                    {"checkpoint", hex64(file_hash(o.checkpoint))}});
    std::cout << rep.to_text();
    return 0;
}

inline int cmd_probe(const CliOptions& o) {
    if (o.data_dir.empty()) throw InputError("--data is required");
    require_out_dir(o.out_dir);
    Config cfg = o.checkpoint.empty() ? build_config(o)
                                      : build_config(o, checkpoint_config(o.checkpoint));
    Model<Sc> model(cfg);
    if (!o.checkpoint.empty()) load_checkpoint(o.checkpoint, model);
    std::vector<DatasetRecord> data = load_records(o.data_dir);
    const DatasetRecord& rec = data[0];
    int T = rec.frames.dim(0), H = rec.frames.dim(1), W = rec.frames.dim(2);
    int t_src = 0, t_tgt = T / 2;
    auto frame_at = [&](const DatasetRecord& r, int t) {
        Tensor<double> f({r.frames.dim(1), r.frames.dim(2), 3});
        for (int y = 0; y < r.frames.dim(1); ++y)
            for (int x = 0; x < r.frames.dim(2); ++x)
                for (int k = 0; k < 3; ++k) f.at(y, x, k) = r.frames.at(t, y, x, k);
        return f;
    };
    Tensor<double> src = frame_at(rec, t_src), tgt = frame_at(rec, t_tgt);
    Tensor<double> unrelated;
    if (data.size() > 1) {
        unrelated = frame_at(data[1], 0);
    } else {
        unrelated = Tensor<double>({H, W, 3});
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                for (int k = 0; k < 3; ++k) unrelated.at(y, x, k) = src.at(H - 1 - y, x, k);
    }
    std::vector<std::array<double, 2>> src_pts, gt_pts;
    for (int n = 0; n < rec.tracks.N && static_cast<int>(src_pts.size()) < 16; ++n) {
        if (rec.tracks.visibility.at(t_src, n) <= 0.5 || rec.tracks.visibility.at(t_tgt, n) <= 0.5)
            continue;
        src_pts.push_back({rec.tracks.positions.at(t_src, n, 0), rec.tracks.positions.at(t_src, n, 1)});
        gt_pts.push_back({rec.tracks.positions.at(t_tgt, n, 0), rec.tracks.positions.at(t_tgt, n, 1)});
    }
    if (src_pts.empty()) throw InputError("probe: no co-visible points between source and target frames");
    ProbeReport rep = run_probe(model, src, tgt, unrelated, src_pts, gt_pts);
    std::ofstream txt(std::filesystem::path(o.out_dir) / "probe_report.txt");
    txt << rep.to_text();
    double thr = rep.alpha * std::max(rep.bbox_w, rep.bbox_h);
    render_correspondences(tgt, rep.pred_matched, gt_pts, thr,
                           (std::filesystem::path(o.out_dir) / "probe_matched.png").string());
    render_correspondences(tgt, rep.pred_mismatched, gt_pts, thr,
                           (std::filesystem::path(o.out_dir) / "probe_mismatched.png").string());
    std::map<std::string, std::string> hashes{{"data", hex64(hash_dir(o.data_dir))}};
    if (!o.checkpoint.empty()) hashes["checkpoint"] = hex64(file_hash(o.checkpoint));
    write_manifest(o.out_dir, "probe", cfg, hashes);
    std::cout << rep.to_text();
    return 0;
}

inline int cmd_viz(const CliOptions& o) {
    if (o.data_dir.empty()) throw InputError("--data is required");
    require_out_dir(o.out_dir);
    Config cfg = o.checkpoint.empty() ? build_config(o)
                                      : build_config(o, checkpoint_config(o.checkpoint));
    Model<Sc> model(cfg);
    if (!o.checkpoint.empty()) load_checkpoint(o.checkpoint, model);
    std::vector<DatasetRecord> data = load_records(o.data_dir);
    const DatasetRecord& rec = data[0];
    std::vector<SampledQuery> queries = sample_queries(rec.tracks, o.protocol);
    if (queries.empty()) throw InputError("viz: no queryable points in " + rec.name);
    TrackSet<double> pred = make_tracker_predictor(model, o.protocol)(rec, queries);
    TrackSet<double> gt = gt_for_queries(rec.tracks, queries, o.protocol);
    render_trajectories(rec, pred, o.out_dir, &gt);
    std::map<std::string, std::string> hashes{{"data", hex64(hash_dir(o.data_dir))}};
    if (!o.checkpoint.empty()) hashes["checkpoint"] = hex64(file_hash(o.checkpoint));
    write_manifest(o.out_dir, "viz", cfg, hashes);
    std::cout << "wrote " << rec.frames.dim(0) << " overlay frames to " << o.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"autogenic-token point tracker"};
    app.require_subcommand(1);
    CliOptions o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "flat key=value config file");
        sub->add_option("--out", o.out_dir, "output directory");
        sub->add_option("--seed", o.seed, "rng seed");
        sub->add_option("--decoder", o.decoder, "decoder on/off")
            ->check(CLI::IsMember({"on", "off"}));
        sub->add_option("--integration", o.integration, "feature integration mode")
            ->check(CLI::IsMember({"cat_only", "map_only", "cat_and_map"}));
        sub->add_option("--self-layers", o.self_layers, "decoder self-attention layers");
        sub->add_option("--cross-layers", o.cross_layers, "decoder cross-attention layers");
        sub->add_option("--mapping", o.mapping, "token mapping network")
            ->check(CLI::IsMember({"mlp", "transformer"}));
        sub->add_option("--data", o.data_dir, "dataset directory");
        sub->add_option("--checkpoint", o.checkpoint, "checkpoint file");
        sub->add_option("--protocol", o.protocol, "query protocol")
            ->check(CLI::IsMember({"first", "strided"}));
    };

    CLI::App* train = app.add_subcommand("train", "train the tracker");
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    CLI::App* probe = app.add_subcommand("probe", "correspondence conditioning probe");
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    CLI::App* viz = app.add_subcommand("viz", "render predicted trajectories");
    for (CLI::App* s : {train, eval, probe, gen, viz}) add_common(s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) return cmd_train(o);
        if (eval->parsed()) return cmd_eval(o);
        if (probe->parsed()) return cmd_probe(o);
        if (gen->parsed()) return cmd_gen_data(o);
        if (viz->parsed()) return cmd_viz(o);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace alt

#pragma once

// Run configuration: flat key=value file, '#' comments, typed validation.
// Precedence: command-line flags > file > defaults.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "alt/util.hpp"

namespace alt {

struct Config {
    // model
    int feat_dim = 64;
    int token_dim = 64;
    int num_learnable_tokens = 8;
    int num_mapped_tokens = 4;
    std::string mapping_network = "mlp";  // mlp | transformer
    int mapping_hidden = 128;
    int self_layers = 6;
    int cross_layers = 6;
    int heads = 4;
    std::string integration = "cat_and_map";  // cat_only | map_only | cat_and_map
    bool decoder_enabled = true;
    bool share_tokens_across_clip = false;
    int text_layers = 2;
    int text_max_len = 32;
    int input_h = 96;
    int input_w = 128;

    // tracker
    int window_len = 8;
    int window_overlap = 4;
    int refine_iters = 4;
    int corr_radius = 3;
    int pyramid_levels = 2;
    double visibility_threshold = 0.5;

    // training
    double learning_rate = 5e-4;
    int iterations = 2000;
    int tracks_per_batch = 64;
    std::vector<int> frame_intervals = {1, 2, 3};
    int batch_size = 1;
    uint64_t seed = 0;
    double lambda_vis = 1.0;
    double occluded_weight = 0.2;
    double weight_decay = 0.0;
    int warmup_steps = 100;
    int log_every = 10;
    int checkpoint_every = 500;

    // synthetic data
    int synth_videos = 8;
    int synth_sprites = 6;
    int synth_frames = 24;
    int synth_h = 96;
    int synth_w = 128;
    int synth_occluders = 2;
    std::vector<std::string> synth_motions = {"cv", "bounce"};

    void set(const std::string& key, const std::string& raw);
    void load_file(const std::string& path);
    void validate() const;
    std::string to_text() const;

  private:
    static int parse_int(const std::string& k, const std::string& v) {
        try {
            size_t pos = 0;
            int r = std::stoi(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + k + "' expects an integer, got '" + v + "'");
        }
    }
    static double parse_double(const std::string& k, const std::string& v) {
        try {
            size_t pos = 0;
            double r = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument(v);
            return r;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + k + "' expects a number, got '" + v + "'");
        }
    }
    static bool parse_bool(const std::string& k, const std::string& v) {
        if (v == "true" || v == "on" || v == "1") return true;
        if (v == "false" || v == "off" || v == "0") return false;
        throw ConfigError("config: key '" + k + "' expects a boolean, got '" + v + "'");
    }
    static std::vector<std::string> split_commas(const std::string& v) {
        std::vector<std::string> out;
        std::string cur;
        std::stringstream ss(v);
        while (std::getline(ss, cur, ',')) {
            if (!cur.empty()) out.push_back(cur);
        }
        return out;
    }
};

inline void Config::set(const std::string& key, const std::string& raw) {
    if (key == "feat_dim") feat_dim = parse_int(key, raw);
    else if (key == "token_dim") token_dim = parse_int(key, raw);
    else if (key == "num_learnable_tokens") num_learnable_tokens = parse_int(key, raw);
    else if (key == "num_mapped_tokens") num_mapped_tokens = parse_int(key, raw);
    else if (key == "mapping_network") mapping_network = raw;
    else if (key == "mapping_hidden") mapping_hidden = parse_int(key, raw);
    else if (key == "self_layers") self_layers = parse_int(key, raw);
    else if (key == "cross_layers") cross_layers = parse_int(key, raw);
    else if (key == "heads") heads = parse_int(key, raw);
    else if (key == "integration") integration = raw;
    else if (key == "decoder_enabled") decoder_enabled = parse_bool(key, raw);
    else if (key == "share_tokens_across_clip") share_tokens_across_clip = parse_bool(key, raw);
    else if (key == "text_layers") text_layers = parse_int(key, raw);
    else if (key == "text_max_len") text_max_len = parse_int(key, raw);
    else if (key == "input_h") input_h = parse_int(key, raw);
    else if (key == "input_w") input_w = parse_int(key, raw);
    else if (key == "window_len") window_len = parse_int(key, raw);
    else if (key == "window_overlap") window_overlap = parse_int(key, raw);
    else if (key == "refine_iters") refine_iters = parse_int(key, raw);
    else if (key == "corr_radius") corr_radius = parse_int(key, raw);
    else if (key == "pyramid_levels") pyramid_levels = parse_int(key, raw);
    else if (key == "visibility_threshold") visibility_threshold = parse_double(key, raw);
    else if (key == "learning_rate") learning_rate = parse_double(key, raw);
    else if (key == "iterations") iterations = parse_int(key, raw);
    else if (key == "tracks_per_batch") tracks_per_batch = parse_int(key, raw);
    else if (key == "frame_intervals") {
        frame_intervals.clear();
        for (const auto& s : split_commas(raw)) frame_intervals.push_back(parse_int(key, s));
    } else if (key == "batch_size") batch_size = parse_int(key, raw);
    else if (key == "seed") seed = static_cast<uint64_t>(std::stoull(raw));
    else if (key == "lambda_vis") lambda_vis = parse_double(key, raw);
    else if (key == "occluded_weight") occluded_weight = parse_double(key, raw);
    else if (key == "weight_decay") weight_decay = parse_double(key, raw);
    else if (key == "warmup_steps") warmup_steps = parse_int(key, raw);
    else if (key == "log_every") log_every = parse_int(key, raw);
    else if (key == "checkpoint_every") checkpoint_every = parse_int(key, raw);
    else if (key == "synth_videos") synth_videos = parse_int(key, raw);
    else if (key == "synth_sprites") synth_sprites = parse_int(key, raw);
    else if (key == "synth_frames") synth_frames = parse_int(key, raw);
    else if (key == "synth_h") synth_h = parse_int(key, raw);
    else if (key == "synth_w") synth_w = parse_int(key, raw);
    else if (key == "synth_occluders") synth_occluders = parse_int(key, raw);
    else if (key == "synth_motions") synth_motions = split_commas(raw);
    else throw ConfigError("config: unknown key '" + key + "'");
}

inline void Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + path + ":" + std::to_string(lineno) + ": expected key=value");
        auto trim = [](std::string s) {
            auto a = s.find_first_not_of(" \t");
            auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

inline void Config::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError("config: " + msg);
    };
    require(feat_dim >= 1, "feat_dim must be >= 1");
    require(feat_dim % 4 == 0, "feat_dim must be divisible by 4 (encoder stage widths)");
    require(token_dim == feat_dim, "token_dim must equal feat_dim (single fusion width)");
    require(num_learnable_tokens >= 0, "num_learnable_tokens must be >= 0");
    require(num_mapped_tokens >= 1, "num_mapped_tokens must be >= 1");
    require(mapping_network == "mlp" || mapping_network == "transformer",
            "mapping_network must be mlp or transformer");
    require(self_layers >= 0 && cross_layers >= 0, "attention layer counts must be >= 0");
    require(heads >= 1 && feat_dim % heads == 0, "heads must divide feat_dim");
    require(integration == "cat_only" || integration == "map_only" || integration == "cat_and_map",
            "integration must be cat_only, map_only or cat_and_map");
    require(text_layers >= 0, "text_layers must be >= 0");
    require(num_learnable_tokens + num_mapped_tokens <= text_max_len,
            "token count exceeds text_max_len");
    require(input_h >= 8 && input_w >= 8, "input size must be at least 8x8");
    require(window_len >= 2, "window_len must be >= 2");
    require(window_overlap >= 1 && window_overlap < window_len, "window_overlap must be in [1, window_len)");
    require(refine_iters >= 0, "refine_iters must be >= 0");
    require(corr_radius >= 1, "corr_radius must be >= 1");
    require(pyramid_levels >= 1 && pyramid_levels <= 4, "pyramid_levels must be in [1,4]");
    require(visibility_threshold > 0 && visibility_threshold < 1, "visibility_threshold must be in (0,1)");
    require(learning_rate > 0, "learning_rate must be > 0");
    require(iterations >= 0, "iterations must be >= 0");
    require(tracks_per_batch >= 1, "tracks_per_batch must be >= 1");
    require(!frame_intervals.empty(), "frame_intervals must be non-empty");
    for (int s : frame_intervals) require(s >= 1, "frame intervals must be >= 1");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(lambda_vis >= 0, "lambda_vis must be >= 0");
    require(occluded_weight >= 0 && occluded_weight <= 1, "occluded_weight must be in [0,1]");
    require(weight_decay >= 0, "weight_decay must be >= 0");
    require(warmup_steps >= 0, "warmup_steps must be >= 0");
    require(synth_videos >= 1 && synth_sprites >= 1 && synth_frames >= 2, "synthetic sizes too small");
    require(synth_h >= 16 && synth_w >= 16, "synthetic resolution too small");
    for (const auto& m : synth_motions)
        require(m == "cv" || m == "sin" || m == "bounce", "synth motion must be cv, sin or bounce");
}

inline std::string Config::to_text() const {
    std::map<std::string, std::string> kv;
    auto num = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    kv["feat_dim"] = std::to_string(feat_dim);
    kv["token_dim"] = std::to_string(token_dim);
    kv["num_learnable_tokens"] = std::to_string(num_learnable_tokens);
    kv["num_mapped_tokens"] = std::to_string(num_mapped_tokens);
    kv["mapping_network"] = mapping_network;
    kv["mapping_hidden"] = std::to_string(mapping_hidden);
    kv["self_layers"] = std::to_string(self_layers);
    kv["cross_layers"] = std::to_string(cross_layers);
    kv["heads"] = std::to_string(heads);
    kv["integration"] = integration;
    kv["decoder_enabled"] = decoder_enabled ? "true" : "false";
    kv["share_tokens_across_clip"] = share_tokens_across_clip ? "true" : "false";
    kv["text_layers"] = std::to_string(text_layers);
    kv["text_max_len"] = std::to_string(text_max_len);
    kv["input_h"] = std::to_string(input_h);
    kv["input_w"] = std::to_string(input_w);
    kv["window_len"] = std::to_string(window_len);
    kv["window_overlap"] = std::to_string(window_overlap);
    kv["refine_iters"] = std::to_string(refine_iters);
    kv["corr_radius"] = std::to_string(corr_radius);
    kv["pyramid_levels"] = std::to_string(pyramid_levels);
    kv["visibility_threshold"] = num(visibility_threshold);
    kv["learning_rate"] = num(learning_rate);
    kv["iterations"] = std::to_string(iterations);
    kv["tracks_per_batch"] = std::to_string(tracks_per_batch);
    {
        std::string s;
        for (size_t i = 0; i < frame_intervals.size(); ++i)
            s += (i ? "," : "") + std::to_string(frame_intervals[i]);
        kv["frame_intervals"] = s;
    }
    kv["batch_size"] = std::to_string(batch_size);
    kv["seed"] = std::to_string(seed);
    kv["lambda_vis"] = num(lambda_vis);
    kv["occluded_weight"] = num(occluded_weight);
    kv["weight_decay"] = num(weight_decay);
    kv["warmup_steps"] = std::to_string(warmup_steps);
    kv["log_every"] = std::to_string(log_every);
    kv["checkpoint_every"] = std::to_string(checkpoint_every);
    kv["synth_videos"] = std::to_string(synth_videos);
    kv["synth_sprites"] = std::to_string(synth_sprites);
    kv["synth_frames"] = std::to_string(synth_frames);
    kv["synth_h"] = std::to_string(synth_h);
    kv["synth_w"] = std::to_string(synth_w);
    kv["synth_occluders"] = std::to_string(synth_occluders);
    {
        std::string s;
        for (size_t i = 0; i < synth_motions.size(); ++i) s += (i ? "," : "") + synth_motions[i];
        kv["synth_motions"] = s;
    }
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

}  // namespace alt

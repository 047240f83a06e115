#include "literec/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "literec/serialize.hpp"

namespace literec {

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = {
        "data.path", "data.format", "data.kcore",
        "vocab.min_freq",
        "model.item.layers", "model.item.heads", "model.item.dim", "model.item.ff_dim",
        "model.item.max_text_len", "model.item.dropout",
        "model.rec.layers", "model.rec.heads", "model.rec.dim", "model.rec.ff_dim",
        "model.rec.max_seq_len", "model.rec.dropout",
        "baseline.layers", "baseline.heads", "baseline.dim", "baseline.ff_dim",
        "baseline.vocab_size", "baseline.max_input_len", "baseline.max_output_len",
        "baseline.dropout", "baseline.beam_width", "baseline.alpha", "baseline.title_per_item_len",
        "train.strategy", "train.profile", "train.lr", "train.batch_size", "train.dropout",
        "train.weight_decay", "train.warmup_fraction", "train.adam_eps", "train.patience",
        "train.max_epochs", "train.freeze_rec_encoder", "train.freeze_projection_head",
        "train.fine_tune_cached_embeddings",
        "eval.ks", "eval.include_valid_input", "eval.exclude_valid", "eval.batch",
        "topn.negatives",
        "bench.beams", "bench.warmup", "bench.reps", "bench.batches", "bench.batch_size",
        "synth.users", "synth.items", "synth.clusters", "synth.min_len", "synth.max_len",
        "out.dir", "seed",
    };
    return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw std::invalid_argument("unknown config key '" + key + "'");
    values_[key] = value;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    RunConfig cfg;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        if (line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key=value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            cfg.set(key, value);
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

RunConfig RunConfig::from_env_or_default() {
    const char* env = std::getenv("LLREC_CONFIG");
    if (env && *env) return from_file(env);
    return RunConfig();
}

std::string RunConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

int64_t RunConfig::get_int(const std::string& key, int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "' is not an integer: " + it->second);
    }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw std::runtime_error("config key '" + key + "' is not a number: " + it->second);
    }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw std::runtime_error("config key '" + key + "' is not a boolean: " + it->second);
}

std::vector<int64_t> RunConfig::get_int_list(const std::string& key, std::vector<int64_t> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int64_t> out;
    std::stringstream ss(it->second);
    std::string piece;
    while (std::getline(ss, piece, ',')) {
        if (piece.empty()) continue;
        try {
            out.push_back(std::stoll(piece));
        } catch (const std::exception&) {
            throw std::runtime_error("config key '" + key + "' is not a comma-separated integer list: " + it->second);
        }
    }
    if (out.empty()) throw std::runtime_error("config key '" + key + "' lists no values");
    return out;
}

std::string RunConfig::fingerprint() const {
    std::ostringstream flat;
    for (const auto& [k, v] : values_) flat << k << '=' << v << '\n';
    const std::string s = flat.str();
    std::ostringstream hex;
    hex << std::hex << fnv1a64(s.data(), s.size());
    return hex.str();
}

}  // namespace literec

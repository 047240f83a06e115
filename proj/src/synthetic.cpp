#include "literec/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace literec {

namespace {

const char* kAdjectives[] = {"silent", "crimson", "lost",   "golden", "midnight", "broken",
                             "electric", "hidden", "frozen", "burning", "ancient",  "neon"};
const char* kNouns[] = {"river", "empire", "garden", "signal", "harbor", "mirror",
                        "forest", "engine", "island", "shadow", "canyon", "voyage"};
const char* kClusterNames[] = {"drama", "comedy", "thriller", "romance", "scifi", "documentary",
                               "adventure", "mystery", "western", "musical", "horror", "fantasy"};

std::string item_raw_id(int64_t n, int64_t width) {
    std::string digits = std::to_string(n);
    return "i" + std::string(static_cast<size_t>(std::max<int64_t>(0, width - static_cast<int64_t>(digits.size()))),
                             '0') +
           digits;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
    if (cfg.clusters < 1 || cfg.clusters > 12)
        throw std::invalid_argument("synthetic: clusters must be in [1,12]");
    if (cfg.items < cfg.clusters) throw std::invalid_argument("synthetic: need at least one item per cluster");
    if (cfg.min_len < 3 || cfg.max_len < cfg.min_len)
        throw std::invalid_argument("synthetic: need max_len >= min_len >= 3");

    std::mt19937 rng(static_cast<uint32_t>(cfg.seed));
    SyntheticData data;

    const int64_t id_width = static_cast<int64_t>(std::to_string(cfg.items - 1).size());
    std::vector<int64_t> cluster_of(static_cast<size_t>(cfg.items));
    std::vector<std::vector<int64_t>> members(static_cast<size_t>(cfg.clusters));
    for (int64_t i = 0; i < cfg.items; ++i) {
        const int64_t c = i % cfg.clusters;
        cluster_of[static_cast<size_t>(i)] = c;
        members[static_cast<size_t>(c)].push_back(i);

        std::ostringstream title;
        title << kAdjectives[(i / cfg.clusters) % 12] << " " << kNouns[(i * 7 + c) % 12] << " "
              << kClusterNames[c] << " (" << 1960 + (i % 60) << ")";
        RawItemMeta meta;
        meta.item = item_raw_id(i, id_width);
        meta.title = title.str();
        meta.genre = std::string(kClusterNames[c]) + " " + kClusterNames[(c + 5) % 12];
        data.metadata.push_back(std::move(meta));
    }

    // within-cluster popularity weights, Zipf over a shuffled member order so
    // popularity is independent of the item index
    std::vector<std::vector<double>> weights(static_cast<size_t>(cfg.clusters));
    for (int64_t c = 0; c < cfg.clusters; ++c) {
        auto& m = members[static_cast<size_t>(c)];
        std::shuffle(m.begin(), m.end(), rng);
        auto& w = weights[static_cast<size_t>(c)];
        for (size_t r = 0; r < m.size(); ++r)
            w.push_back(1.0 / std::pow(static_cast<double>(r + 1), cfg.zipf_exponent));
    }

    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int64_t> any_cluster(0, cfg.clusters - 1);
    std::uniform_int_distribution<int64_t> seq_len(cfg.min_len, cfg.max_len);

    int64_t file_order = 0;
    for (int64_t u = 0; u < cfg.users; ++u) {
        const int64_t len = seq_len(rng);
        int64_t cluster = any_cluster(rng);
        for (int64_t t = 0; t < len; ++t) {
            if (t > 0) {
                const double roll = coin(rng);
                if (roll < cfg.stay_prob) {
                    // stay
                } else if (roll < cfg.stay_prob + cfg.advance_prob) {
                    cluster = (cluster + 1) % cfg.clusters;
                } else {
                    cluster = any_cluster(rng);
                }
            }
            const auto& w = weights[static_cast<size_t>(cluster)];
            std::discrete_distribution<int64_t> pick(w.begin(), w.end());
            const int64_t item = members[static_cast<size_t>(cluster)][static_cast<size_t>(pick(rng))];

            RawInteraction r;
            r.user = "u" + std::to_string(u);
            r.item = item_raw_id(item, id_width);
            r.rating = 3.0 + static_cast<double>(rng() % 3);
            r.timestamp = u * 100000 + t;
            r.file_order = file_order++;
            data.interactions.push_back(std::move(r));
        }
    }
    return data;
}

void write_synthetic(const SyntheticData& data, const std::string& dir, DataFormat format) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    if (format == DataFormat::Tsv) {
        std::ofstream inter(fs::path(dir) / "interactions.tsv");
        for (const auto& r : data.interactions)
            inter << r.user << '\t' << r.item << '\t' << r.rating << '\t' << r.timestamp << '\n';
        std::ofstream items(fs::path(dir) / "items.tsv");
        for (const auto& m : data.metadata) items << m.item << '\t' << m.title << '\t' << m.genre << '\n';
    } else if (format == DataFormat::Jsonl) {
        std::ofstream inter(fs::path(dir) / "interactions.jsonl");
        for (const auto& r : data.interactions) {
            nlohmann::json j = {{"user", r.user}, {"item", r.item}, {"rating", r.rating}, {"timestamp", r.timestamp}};
            inter << j.dump() << '\n';
        }
        std::ofstream items(fs::path(dir) / "items.jsonl");
        for (const auto& m : data.metadata) {
            nlohmann::json j = {{"item", m.item}, {"title", m.title}, {"genre", m.genre}};
            items << j.dump() << '\n';
        }
    } else {
        std::ofstream inter(fs::path(dir) / "ratings.dat");
        for (const auto& r : data.interactions)
            inter << r.user << "::" << r.item << "::" << r.rating << "::" << r.timestamp << '\n';
        std::ofstream items(fs::path(dir) / "movies.dat");
        for (const auto& m : data.metadata) {
            std::string genre = m.genre;
            std::replace(genre.begin(), genre.end(), ' ', '|');
            items << m.item << "::" << m.title << "::" << genre << '\n';
        }
    }
}

}  // namespace literec

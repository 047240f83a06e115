#include "literec/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace literec {

namespace fs = std::filesystem;
using nlohmann::json;

DataFormat parse_format(const std::string& name) {
    if (name == "movielens-dat") return DataFormat::MovielensDat;
    if (name == "jsonl") return DataFormat::Jsonl;
    if (name == "tsv") return DataFormat::Tsv;
    throw std::invalid_argument("unknown dataset format '" + name + "' (expected movielens-dat, jsonl, tsv)");
}

std::string format_name(DataFormat f) {
    switch (f) {
        case DataFormat::MovielensDat: return "movielens-dat";
        case DataFormat::Jsonl: return "jsonl";
        case DataFormat::Tsv: return "tsv";
    }
    return "?";
}

namespace {

std::vector<std::string> split_on(const std::string& line, const std::string& sep) {
    std::vector<std::string> parts;
    size_t pos = 0;
    while (true) {
        const size_t next = line.find(sep, pos);
        if (next == std::string::npos) {
            parts.push_back(line.substr(pos));
            break;
        }
        parts.push_back(line.substr(pos, next - pos));
        pos = next + sep.size();
    }
    return parts;
}

std::ifstream open_or_throw(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return in;
}

struct LineCounters {
    int64_t total = 0;
    int64_t skipped = 0;
};

void enforce_malformed_budget(const LineCounters& c, const std::string& what) {
    if (c.total > 0 && c.skipped * 10 > c.total)
        throw std::runtime_error("more than 10% malformed lines in " + what + " (" + std::to_string(c.skipped) +
                                 " of " + std::to_string(c.total) + ")");
    if (c.skipped > 0)
        std::cerr << "warning: skipped " << c.skipped << " malformed line(s) in " << what << "\n";
}

void parse_interaction_lines(std::istream& in, const std::string& sep, std::vector<RawInteraction>& out,
                             LineCounters& counters) {
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++counters.total;
        const auto parts = split_on(line, sep);
        if (parts.size() != 4) {
            ++counters.skipped;
            continue;
        }
        try {
            RawInteraction r;
            r.user = parts[0];
            r.item = parts[1];
            r.rating = std::stod(parts[2]);
            r.timestamp = std::stoll(parts[3]);
            r.file_order = static_cast<int64_t>(out.size());
            out.push_back(std::move(r));
        } catch (const std::exception&) {
            ++counters.skipped;
        }
    }
}

}  // namespace

LoadResult load_interactions(const std::string& path, DataFormat format) {
    const fs::path dir(path);
    if (!fs::exists(dir)) throw std::runtime_error("dataset path does not exist: " + path);
    LoadResult result;
    LineCounters inter_counters, meta_counters;

    if (format == DataFormat::MovielensDat) {
        auto ratings = open_or_throw(dir / "ratings.dat");
        parse_interaction_lines(ratings, "::", result.interactions, inter_counters);
        auto movies = open_or_throw(dir / "movies.dat");
        std::string line;
        while (std::getline(movies, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            ++meta_counters.total;
            const auto parts = split_on(line, "::");
            if (parts.size() != 3) {
                ++meta_counters.skipped;
                continue;
            }
            RawItemMeta m;
            m.item = parts[0];
            m.title = parts[1];
            // genre list "A|B|C" becomes space-joined text
            std::string genre = parts[2];
            std::replace(genre.begin(), genre.end(), '|', ' ');
            m.genre = genre;
            result.metadata.push_back(std::move(m));
        }
    } else if (format == DataFormat::Tsv) {
        auto inter = open_or_throw(dir / "interactions.tsv");
        parse_interaction_lines(inter, "\t", result.interactions, inter_counters);
        auto items = open_or_throw(dir / "items.tsv");
        std::string line;
        while (std::getline(items, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            ++meta_counters.total;
            const auto parts = split_on(line, "\t");
            if (parts.size() != 3) {
                ++meta_counters.skipped;
                continue;
            }
            result.metadata.push_back({parts[0], parts[1], parts[2]});
        }
    } else {
        auto inter = open_or_throw(dir / "interactions.jsonl");
        std::string line;
        while (std::getline(inter, line)) {
            if (line.empty()) continue;
            ++inter_counters.total;
            try {
                const json j = json::parse(line);
                RawInteraction r;
                r.user = j.at("user").get<std::string>();
                r.item = j.at("item").get<std::string>();
                r.rating = j.value("rating", 0.0);
                r.timestamp = j.at("timestamp").get<int64_t>();
                r.file_order = static_cast<int64_t>(result.interactions.size());
                result.interactions.push_back(std::move(r));
            } catch (const std::exception&) {
                ++inter_counters.skipped;
            }
        }
        auto items = open_or_throw(dir / "items.jsonl");
        while (std::getline(items, line)) {
            if (line.empty()) continue;
            ++meta_counters.total;
            try {
                const json j = json::parse(line);
                result.metadata.push_back(
                    {j.at("item").get<std::string>(), j.value("title", ""), j.value("genre", "")});
            } catch (const std::exception&) {
                ++meta_counters.skipped;
            }
        }
    }

    enforce_malformed_budget(inter_counters, "interactions");
    enforce_malformed_budget(meta_counters, "item metadata");
    result.skipped_lines = inter_counters.skipped + meta_counters.skipped;
    return result;
}

std::vector<RawInteraction> kcore_filter(std::vector<RawInteraction> interactions, int64_t k) {
    if (k < 1) throw std::invalid_argument("kcore_filter: k must be >= 1");
    bool changed = true;
    while (changed) {
        changed = false;
        std::unordered_map<std::string, int64_t> user_count, item_count;
        for (const auto& r : interactions) {
            ++user_count[r.user];
            ++item_count[r.item];
        }
        std::vector<RawInteraction> kept;
        kept.reserve(interactions.size());
        for (auto& r : interactions) {
            if (user_count[r.user] >= k && item_count[r.item] >= k)
                kept.push_back(std::move(r));
        }
        if (kept.size() != interactions.size()) changed = true;
        interactions = std::move(kept);
    }
    if (interactions.empty())
        throw std::runtime_error("kcore_filter: no interactions survive k=" + std::to_string(k) +
                                 "; choose a smaller k");
    return interactions;
}

Dataset Dataset::build(const std::vector<RawInteraction>& interactions, const std::vector<RawItemMeta>& metadata) {
    Dataset ds;
    std::unordered_map<std::string, const RawItemMeta*> meta_by_id;
    for (const auto& m : metadata) meta_by_id[m.item] = &m;

    // dense item indices over surviving items, ordered by raw id
    std::set<std::string> item_ids;
    for (const auto& r : interactions) item_ids.insert(r.item);
    std::unordered_map<std::string, int64_t> item_index;
    for (const auto& id : item_ids) {
        ItemRecord rec;
        rec.raw_id = id;
        rec.index = static_cast<int64_t>(ds.items_.size());
        if (auto it = meta_by_id.find(id); it != meta_by_id.end()) {
            rec.title = it->second->title;
            rec.genre = it->second->genre;
        }
        if (rec.title.empty() && rec.genre.empty()) rec.genre = "unknown";
        item_index[id] = rec.index;
        ds.items_.push_back(std::move(rec));
    }

    // group by user (ordered by raw user id), sort by (timestamp, file order)
    std::map<std::string, std::vector<const RawInteraction*>> by_user;
    for (const auto& r : interactions) by_user[r.user].push_back(&r);
    for (auto& [user, rows] : by_user) {
        std::sort(rows.begin(), rows.end(), [](const RawInteraction* a, const RawInteraction* b) {
            if (a->timestamp != b->timestamp) return a->timestamp < b->timestamp;
            return a->file_order < b->file_order;
        });
        UserSequence seq;
        seq.raw_user = user;
        seq.user_index = static_cast<int64_t>(ds.sequences_.size());
        for (const auto* r : rows) {
            seq.items.push_back(item_index.at(r->item));
            seq.timestamps.push_back(r->timestamp);
        }
        ds.sequences_.push_back(std::move(seq));
    }
    return ds;
}

Dataset Dataset::from_parts(std::vector<ItemRecord> items, std::vector<UserSequence> sequences) {
    Dataset ds;
    for (size_t i = 0; i < items.size(); ++i)
        if (items[i].index != static_cast<int64_t>(i))
            throw std::invalid_argument("Dataset::from_parts: item indices must be dense and ordered");
    ds.items_ = std::move(items);
    ds.sequences_ = std::move(sequences);
    return ds;
}

SplitView leave_one_out_split(const std::vector<UserSequence>& sequences) {
    SplitView split;
    split.train_prefix.reserve(sequences.size());
    for (const auto& seq : sequences) {
        const int64_t n = static_cast<int64_t>(seq.items.size());
        if (n < 3)
            throw std::invalid_argument("leave_one_out_split: user '" + seq.raw_user + "' has only " +
                                        std::to_string(n) + " interactions (need >= 3)");
        split.train_prefix.emplace_back(seq.items.begin(), seq.items.end() - 2);
        split.valid_target.push_back(seq.items[static_cast<size_t>(n - 2)]);
        split.test_target.push_back(seq.items[static_cast<size_t>(n - 1)]);
    }
    return split;
}

std::optional<TrainExample> sample_segment(const std::vector<int64_t>& train_prefix, int64_t max_len,
                                           std::mt19937& rng) {
    const int64_t n = static_cast<int64_t>(train_prefix.size());
    if (max_len < 2) throw std::invalid_argument("sample_segment: max_len must be >= 2");
    if (n < 2) return std::nullopt;  // needs input + target
    const int64_t seg_len = std::min(n, max_len);
    const int64_t max_start = n - seg_len;
    std::uniform_int_distribution<int64_t> dist(0, max_start);
    const int64_t start = dist(rng);
    TrainExample ex;
    ex.input.assign(train_prefix.begin() + start, train_prefix.begin() + start + seg_len - 1);
    ex.target = train_prefix[static_cast<size_t>(start + seg_len - 1)];
    return ex;
}

std::vector<TrainExample> enumerate_all_examples(const std::vector<int64_t>& train_prefix, int64_t max_len) {
    std::vector<TrainExample> out;
    const int64_t n = static_cast<int64_t>(train_prefix.size());
    for (int64_t j = 1; j < n; ++j) {
        TrainExample ex;
        const int64_t begin = std::max<int64_t>(0, j - (max_len - 1));
        ex.input.assign(train_prefix.begin() + begin, train_prefix.begin() + j);
        ex.target = train_prefix[static_cast<size_t>(j)];
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<Batch> make_batches(const std::vector<TrainExample>& examples, int64_t batch_size, int64_t pad_to,
                                int64_t pad_item) {
    for (const auto& ex : examples)
        if (static_cast<int64_t>(ex.input.size()) > pad_to)
            throw std::invalid_argument("make_batches: input of length " + std::to_string(ex.input.size()) +
                                        " exceeds pad_to=" + std::to_string(pad_to));
    std::vector<Batch> batches;
    for (size_t at = 0; at < examples.size(); at += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(examples.size(), at + static_cast<size_t>(batch_size));
        Batch b;
        b.batch_size = static_cast<int64_t>(end - at);
        b.pad_to = pad_to;
        b.input_items.assign(static_cast<size_t>(b.batch_size * pad_to), pad_item);
        b.input_mask.assign(static_cast<size_t>(b.batch_size * pad_to), 0);
        for (size_t i = at; i < end; ++i) {
            const auto& ex = examples[i];
            const int64_t row = static_cast<int64_t>(i - at);
            const int64_t offset = pad_to - static_cast<int64_t>(ex.input.size());  // left padding
            for (size_t j = 0; j < ex.input.size(); ++j) {
                b.input_items[static_cast<size_t>(row * pad_to + offset) + j] = ex.input[j];
                b.input_mask[static_cast<size_t>(row * pad_to + offset) + j] = 1;
            }
            b.user_indices.push_back(ex.user_index);
            b.targets.push_back(ex.target);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace literec

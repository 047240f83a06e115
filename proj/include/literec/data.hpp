// Dataset ingestion, k-core filtering, leave-one-out splitting, segment
// sampling and batching. Everything after load is immutable and indexed
// densely; the PAD item index is catalog_size() (one past the last item).

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace literec {

struct RawInteraction {
    std::string user;
    std::string item;
    double rating = 0.0;
    int64_t timestamp = 0;
    int64_t file_order = 0;
};

struct RawItemMeta {
    std::string item;
    std::string title;
    std::string genre;
};

enum class DataFormat { MovielensDat, Jsonl, Tsv };

DataFormat parse_format(const std::string& name);
std::string format_name(DataFormat f);

struct LoadResult {
    std::vector<RawInteraction> interactions;
    std::vector<RawItemMeta> metadata;
    int64_t skipped_lines = 0;
};

// `path` is a directory holding the interaction and metadata files for the
// chosen format: ratings.dat + movies.dat (movielens-dat),
// interactions.jsonl + items.jsonl, or interactions.tsv + items.tsv.
LoadResult load_interactions(const std::string& path, DataFormat format);

// maximal subgraph in which every surviving user and item has >= k interactions
std::vector<RawInteraction> kcore_filter(std::vector<RawInteraction> interactions, int64_t k);

struct ItemRecord {
    std::string raw_id;
    int64_t index = 0;
    std::string title;
    std::string genre;
};

struct UserSequence {
    std::string raw_user;
    int64_t user_index = 0;
    std::vector<int64_t> items;       // chronological
    std::vector<int64_t> timestamps;
};

class Dataset {
public:
    static Dataset build(const std::vector<RawInteraction>& interactions,
                         const std::vector<RawItemMeta>& metadata);

    // reassemble from prepared artifacts
    static Dataset from_parts(std::vector<ItemRecord> items, std::vector<UserSequence> sequences);

    int64_t catalog_size() const { return static_cast<int64_t>(items_.size()); }
    int64_t pad_index() const { return catalog_size(); }
    int64_t user_count() const { return static_cast<int64_t>(sequences_.size()); }

    const std::vector<ItemRecord>& items() const { return items_; }
    const ItemRecord& item(int64_t index) const { return items_.at(static_cast<size_t>(index)); }
    const std::vector<UserSequence>& sequences() const { return sequences_; }

private:
    std::vector<ItemRecord> items_;
    std::vector<UserSequence> sequences_;
};

struct SplitView {
    // parallel to Dataset::sequences()
    std::vector<std::vector<int64_t>> train_prefix;
    std::vector<int64_t> valid_target;
    std::vector<int64_t> test_target;
};

// last item -> test, second to last -> validation, rest -> train; every
// sequence must have length >= 3
SplitView leave_one_out_split(const std::vector<UserSequence>& sequences);

struct TrainExample {
    int64_t user_index = 0;
    std::vector<int64_t> input;  // >= 1 item
    int64_t target = 0;
};

// contiguous segment of length min(len, max_len), start uniform over valid
// positions; last element is the target
std::optional<TrainExample> sample_segment(const std::vector<int64_t>& train_prefix, int64_t max_len,
                                           std::mt19937& rng);

// one example per train-region position >= 1: input is the <= max_len-1 items
// before it
std::vector<TrainExample> enumerate_all_examples(const std::vector<int64_t>& train_prefix, int64_t max_len);

struct Batch {
    std::vector<int64_t> user_indices;            // [B]
    std::vector<int64_t> input_items;             // [B * pad_to], left-padded
    std::vector<uint8_t> input_mask;              // [B * pad_to], 1 = real
    std::vector<int64_t> targets;                 // [B]
    int64_t batch_size = 0;
    int64_t pad_to = 0;
};

// left-pad inputs with `pad_item` to pad_to; final partial batch kept
std::vector<Batch> make_batches(const std::vector<TrainExample>& examples, int64_t batch_size, int64_t pad_to,
                                int64_t pad_item);

}  // namespace literec

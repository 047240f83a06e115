// Synthetic interaction generator with learnable sequential structure: items
// live in clusters with cluster-coherent titles/genres, and each next item is
// drawn from a Markov walk over clusters with popularity-skewed item choice.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "literec/data.hpp"

namespace literec {

struct SyntheticConfig {
    int64_t users = 400;
    int64_t items = 600;
    int64_t clusters = 8;
    int64_t min_len = 8;
    int64_t max_len = 40;
    double stay_prob = 0.55;     // next item stays in the current cluster
    double advance_prob = 0.35;  // next item moves to the next cluster
    double zipf_exponent = 1.1;  // within-cluster popularity skew
    uint64_t seed = 1;
};

struct SyntheticData {
    std::vector<RawInteraction> interactions;
    std::vector<RawItemMeta> metadata;
};

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

// write in one of the loader formats so the CLI pipeline can ingest it
void write_synthetic(const SyntheticData& data, const std::string& dir, DataFormat format);

}  // namespace literec

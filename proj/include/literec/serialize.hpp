// Binary formats: the embedding-cache file and the training checkpoint, both
// little-endian with magic + version headers. Checkpoints carry a payload
// checksum so truncation and corruption fail loudly.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "literec/item_encoder.hpp"
#include "literec/optim.hpp"
#include "literec/tensor.hpp"

namespace literec {

inline constexpr char kCacheMagic[9] = "LLRECEMB";
inline constexpr char kCheckpointMagic[9] = "LLRECCKP";
inline constexpr uint32_t kCacheVersion = 1;
inline constexpr uint32_t kCheckpointVersion = 1;

// 32-byte digest built from four FNV-1a-64 lanes with distinct offsets; this
// ties caches to the producing model, it is not a cryptographic hash.
class Fingerprint {
public:
    Fingerprint();
    void update(const void* data, size_t len);
    void update_string(const std::string& s);
    void update_i64(int64_t v);
    void update_f32(const std::vector<float>& v);
    std::array<uint8_t, 32> digest() const;

private:
    std::array<uint64_t, 4> lanes_;
};

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t file_checksum(const std::string& path);

struct NamedTensorData {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

void save_embedding_cache(const std::string& path, const EmbeddingCache& cache);
EmbeddingCache load_embedding_cache(const std::string& path);

struct Checkpoint {
    std::vector<NamedTensorData> tensors;
    std::vector<std::vector<float>> opt_m, opt_v;
    int64_t opt_step = 0;
    int64_t epoch = 0;
    double best_valid_r10 = 0.0;
    std::string rng_state;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// snapshot / restore live parameters
std::vector<NamedTensorData> snapshot_params(const std::vector<NamedParam>& params);
void restore_params(const std::vector<NamedTensorData>& saved, std::vector<NamedParam>& params);

}  // namespace literec

#include "literec/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

namespace literec {

namespace {

void write_bytes(std::ostream& out, const void* data, size_t len) {
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
}

template <typename T>
void write_pod(std::ostream& out, T v) {
    write_bytes(out, &v, sizeof(T));
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
    write_bytes(out, s.data(), s.size());
}

void read_bytes(std::istream& in, void* data, size_t len, const char* what) {
    in.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
    if (static_cast<size_t>(in.gcount()) != len)
        throw std::runtime_error(std::string("truncated file while reading ") + what);
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
    T v{};
    read_bytes(in, &v, sizeof(T), what);
    return v;
}

std::string read_string(std::istream& in, const char* what) {
    const uint32_t len = read_pod<uint32_t>(in, what);
    std::string s(len, '\0');
    read_bytes(in, s.data(), len, what);
    return s;
}

}  // namespace

Fingerprint::Fingerprint() : lanes_{0xcbf29ce484222325ULL, 0x84222325cbf29ce4ULL, 0x9e3779b97f4a7c15ULL,
                                    0xc2b2ae3d27d4eb4fULL} {}

void Fingerprint::update(const void* data, size_t len) {
    const auto* p = static_cast<const uint8_t*>(data);
    for (size_t lane = 0; lane < lanes_.size(); ++lane) {
        uint64_t h = lanes_[lane];
        for (size_t i = 0; i < len; ++i) {
            h ^= static_cast<uint64_t>(p[i]) + lane;
            h *= 0x100000001b3ULL;
        }
        lanes_[lane] = h;
    }
}

void Fingerprint::update_string(const std::string& s) {
    update_i64(static_cast<int64_t>(s.size()));
    update(s.data(), s.size());
}

void Fingerprint::update_i64(int64_t v) { update(&v, sizeof(v)); }

void Fingerprint::update_f32(const std::vector<float>& v) { update(v.data(), v.size() * sizeof(float)); }

std::array<uint8_t, 32> Fingerprint::digest() const {
    std::array<uint8_t, 32> out{};
    std::memcpy(out.data(), lanes_.data(), 32);
    return out;
}

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed) {
    const auto* p = static_cast<const uint8_t*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const std::string bytes = ss.str();
    return fnv1a64(bytes.data(), bytes.size());
}

void save_embedding_cache(const std::string& path, const EmbeddingCache& cache) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_bytes(out, kCacheMagic, 8);
    write_pod<uint32_t>(out, kCacheVersion);
    write_pod<uint64_t>(out, static_cast<uint64_t>(cache.rows));
    write_pod<uint32_t>(out, static_cast<uint32_t>(cache.dim));
    write_bytes(out, cache.fingerprint.data(), cache.fingerprint.size());
    write_bytes(out, cache.data.data(), cache.data.size() * sizeof(float));
    if (!out) throw std::runtime_error("write failed for " + path);
}

EmbeddingCache load_embedding_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[9] = {};
    read_bytes(in, magic, 8, "cache magic");
    if (std::memcmp(magic, kCacheMagic, 8) != 0)
        throw std::runtime_error(path + " is not an embedding cache (bad magic)");
    const uint32_t version = read_pod<uint32_t>(in, "cache version");
    if (version != kCacheVersion)
        throw std::runtime_error("embedding cache version " + std::to_string(version) + " unsupported (want " +
                                 std::to_string(kCacheVersion) + ")");
    EmbeddingCache cache;
    cache.rows = static_cast<int64_t>(read_pod<uint64_t>(in, "cache rows"));
    cache.dim = static_cast<int64_t>(read_pod<uint32_t>(in, "cache dim"));
    read_bytes(in, cache.fingerprint.data(), cache.fingerprint.size(), "cache fingerprint");
    cache.data.resize(static_cast<size_t>(cache.rows * cache.dim));
    read_bytes(in, cache.data.data(), cache.data.size() * sizeof(float), "cache rows");
    return cache;
}

namespace {

void write_payload(std::ostream& out, const Checkpoint& ckpt) {
    write_pod<uint64_t>(out, static_cast<uint64_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        write_string(out, t.name);
        write_pod<uint8_t>(out, 0);  // dtype tag: f32
        write_pod<uint32_t>(out, static_cast<uint32_t>(t.shape.size()));
        for (int64_t d : t.shape) write_pod<int64_t>(out, d);
        write_bytes(out, t.data.data(), t.data.size() * sizeof(float));
    }
    write_pod<uint64_t>(out, static_cast<uint64_t>(ckpt.opt_m.size()));
    for (size_t i = 0; i < ckpt.opt_m.size(); ++i) {
        write_pod<uint64_t>(out, static_cast<uint64_t>(ckpt.opt_m[i].size()));
        write_bytes(out, ckpt.opt_m[i].data(), ckpt.opt_m[i].size() * sizeof(float));
        write_bytes(out, ckpt.opt_v[i].data(), ckpt.opt_v[i].size() * sizeof(float));
    }
    write_pod<int64_t>(out, ckpt.opt_step);
    write_pod<int64_t>(out, ckpt.epoch);
    write_pod<double>(out, ckpt.best_valid_r10);
    write_string(out, ckpt.rng_state);
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ostringstream payload;
    write_payload(payload, ckpt);
    const std::string bytes = payload.str();
    const uint64_t checksum = fnv1a64(bytes.data(), bytes.size());

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    write_bytes(out, kCheckpointMagic, 8);
    write_pod<uint32_t>(out, kCheckpointVersion);
    write_pod<uint64_t>(out, checksum);
    write_pod<uint64_t>(out, static_cast<uint64_t>(bytes.size()));
    write_bytes(out, bytes.data(), bytes.size());
    if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[9] = {};
    read_bytes(in, magic, 8, "checkpoint magic");
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error(path + " is not a checkpoint (bad magic)");
    const uint32_t version = read_pod<uint32_t>(in, "checkpoint version");
    if (version != kCheckpointVersion)
        throw std::runtime_error("checkpoint version " + std::to_string(version) + " unsupported (want " +
                                 std::to_string(kCheckpointVersion) + "); no silent migration");
    const uint64_t want_checksum = read_pod<uint64_t>(in, "checksum");
    const uint64_t payload_len = read_pod<uint64_t>(in, "payload length");
    std::string bytes(payload_len, '\0');
    read_bytes(in, bytes.data(), payload_len, "payload");
    if (fnv1a64(bytes.data(), bytes.size()) != want_checksum)
        throw std::runtime_error("checkpoint checksum mismatch for " + path + " (corrupt or truncated)");

    std::istringstream ps(bytes);
    Checkpoint ckpt;
    const uint64_t n_tensors = read_pod<uint64_t>(ps, "tensor count");
    ckpt.tensors.resize(n_tensors);
    for (auto& t : ckpt.tensors) {
        t.name = read_string(ps, "tensor name");
        const uint8_t dtype = read_pod<uint8_t>(ps, "dtype");
        if (dtype != 0) throw std::runtime_error("unsupported dtype tag " + std::to_string(dtype));
        const uint32_t ndim = read_pod<uint32_t>(ps, "ndim");
        t.shape.resize(ndim);
        int64_t numel = 1;
        for (auto& d : t.shape) {
            d = read_pod<int64_t>(ps, "dim");
            numel *= d;
        }
        t.data.resize(static_cast<size_t>(numel));
        read_bytes(ps, t.data.data(), t.data.size() * sizeof(float), "tensor data");
    }
    const uint64_t n_opt = read_pod<uint64_t>(ps, "optimizer slots");
    ckpt.opt_m.resize(n_opt);
    ckpt.opt_v.resize(n_opt);
    for (size_t i = 0; i < n_opt; ++i) {
        const uint64_t len = read_pod<uint64_t>(ps, "slot length");
        ckpt.opt_m[i].resize(len);
        ckpt.opt_v[i].resize(len);
        read_bytes(ps, ckpt.opt_m[i].data(), len * sizeof(float), "first moments");
        read_bytes(ps, ckpt.opt_v[i].data(), len * sizeof(float), "second moments");
    }
    ckpt.opt_step = read_pod<int64_t>(ps, "optimizer step");
    ckpt.epoch = read_pod<int64_t>(ps, "epoch");
    ckpt.best_valid_r10 = read_pod<double>(ps, "best metric");
    ckpt.rng_state = read_string(ps, "rng state");
    return ckpt;
}

std::vector<NamedTensorData> snapshot_params(const std::vector<NamedParam>& params) {
    std::vector<NamedTensorData> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back({p.name, p.tensor.shape(), p.tensor.vec()});
    return out;
}

void restore_params(const std::vector<NamedTensorData>& saved, std::vector<NamedParam>& params) {
    if (saved.size() != params.size())
        throw std::runtime_error("checkpoint has " + std::to_string(saved.size()) + " tensors, model expects " +
                                 std::to_string(params.size()));
    for (size_t i = 0; i < saved.size(); ++i) {
        if (saved[i].name != params[i].name)
            throw std::runtime_error("checkpoint tensor '" + saved[i].name + "' does not match model parameter '" +
                                     params[i].name + "'");
        if (saved[i].shape != params[i].tensor.shape())
            throw std::runtime_error("checkpoint tensor '" + saved[i].name + "' shape mismatch");
        params[i].tensor.vec() = saved[i].data;
    }
}

}  // namespace literec

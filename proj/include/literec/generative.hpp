// Generative baseline: an encoder-decoder transformer over item-ID token
// sequences with auto-regressive beam-search decoding. This is the pipeline
// shape whose inference cost the projection-head model eliminates.

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "literec/nn.hpp"
#include "literec/text.hpp"

namespace literec {

// Token inventory for ID generation: PAD/BOS/EOS, the item-ID pieces, then
// filler tokens padding the vocabulary to `total_size` so item tokens stay a
// small proportion of the whole vocabulary.
class GenVocab {
public:
    static constexpr int64_t kPad = 0;
    static constexpr int64_t kBos = 1;
    static constexpr int64_t kEos = 2;

    explicit GenVocab(int64_t total_size = 4096) {
        add("<pad>");
        add("<bos>");
        add("<eos>");
        add("item");
        add("_");
        for (int d = 0; d <= 9; ++d) add(std::to_string(d));
        for (int d = 0; d <= 99; ++d) {
            std::string piece = (d < 10 ? "0" : "") + std::to_string(d);
            add(piece);
        }
        item_token_count_ = size();
        if (total_size < size())
            throw std::invalid_argument("gen vocab: total size " + std::to_string(total_size) +
                                        " smaller than token inventory " + std::to_string(size()));
        int64_t filler = 0;
        while (size() < total_size) add("<filler" + std::to_string(filler++) + ">");
    }

    int64_t size() const { return static_cast<int64_t>(tokens_.size()); }
    int64_t item_token_count() const { return item_token_count_; }

    int64_t id(const std::string& token) const {
        auto it = ids_.find(token);
        if (it == ids_.end()) throw std::out_of_range("gen vocab: unknown token '" + token + "'");
        return it->second;
    }
    const std::string& token(int64_t id) const { return tokens_.at(static_cast<size_t>(id)); }

    // token ids of an item's ID string ("item" "_" digit pieces)
    std::vector<int64_t> encode_item(int64_t item_index) const {
        std::vector<int64_t> out;
        for (const auto& piece : encode_item_id_tokens(item_index)) out.push_back(id(piece));
        return out;
    }

private:
    void add(const std::string& tok) {
        ids_.emplace(tok, static_cast<int64_t>(tokens_.size()));
        tokens_.push_back(tok);
    }
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int64_t> ids_;
    int64_t item_token_count_ = 0;
};

struct Seq2SeqConfig {
    int64_t layers = 2;
    int64_t heads = 4;
    int64_t model_dim = 64;
    int64_t ff_dim = 256;
    int64_t max_input_len = 96;
    int64_t max_output_len = 8;
    int64_t vocab_size = 4096;
    double dropout = 0.1;

    void validate() const {
        if (layers < 1 || heads < 1 || model_dim < 1 || ff_dim < 1)
            throw std::invalid_argument("seq2seq config: all dims must be >= 1");
        if (model_dim % heads != 0)
            throw std::invalid_argument("seq2seq config: model_dim must be divisible by heads");
    }
};

struct Beam {
    std::vector<int64_t> tokens;  // generated tokens, EOS included when finished
    double log_prob = 0.0;
    bool finished = false;
};

template <typename Real>
class Seq2SeqT {
public:
    Seq2SeqT() = default;
    Seq2SeqT(const Seq2SeqConfig& cfg, uint64_t seed) : cfg_(cfg) {
        cfg.validate();
        std::mt19937 rng(static_cast<uint32_t>(seed));
        tokens_ = EmbeddingT<Real>(cfg.vocab_size, cfg.model_dim, rng);
        enc_pos_ = EmbeddingT<Real>(cfg.max_input_len, cfg.model_dim, rng);
        dec_pos_ = EmbeddingT<Real>(cfg.max_output_len + 1, cfg.model_dim, rng);  // +1 for BOS
        encoder_ = TransformerEncoderT<Real>(cfg.layers, cfg.model_dim, cfg.heads, cfg.ff_dim, rng);
        for (int64_t i = 0; i < cfg.layers; ++i) dec_layers_.emplace_back(cfg.model_dim, cfg.heads, cfg.ff_dim, rng);
        dec_final_ln_ = LayerNormT<Real>(cfg.model_dim);
        lm_head_ = init_normal<Real>({cfg.model_dim, cfg.vocab_size}, rng);
    }

    const Seq2SeqConfig& config() const { return cfg_; }

    // input ids/mask laid out [B, Ti] -> encoder hidden states [B, Ti, d]
    TensorT<Real> encode(TapeT<Real>& tape, const std::vector<int64_t>& input_ids,
                         const std::vector<uint8_t>& input_mask, int64_t B, int64_t Ti,
                         const ForwardCtx& ctx) const {
        if (Ti > cfg_.max_input_len)
            throw std::invalid_argument("seq2seq: input length " + std::to_string(Ti) + " exceeds max " +
                                        std::to_string(cfg_.max_input_len));
        encoder_calls_ += 1;
        auto tok = tokens_.forward(tape, input_ids);
        std::vector<int64_t> pos_ids(static_cast<size_t>(B * Ti));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < Ti; ++t) pos_ids[static_cast<size_t>(b * Ti + t)] = t;
        auto x = tape.reshape(tape.add(tok, enc_pos_.forward(tape, pos_ids)), {B, Ti, cfg_.model_dim});
        x = tape.dropout(x, ctx.dropout, ctx.next_seed(), ctx.training);
        return encoder_.forward(tape, x, input_mask, ctx);
    }

    // decoder over [B, Td] token ids (BOS-prefixed target) with causal
    // self-attention and cross-attention into the encoder output; returns
    // next-token logits for every position: [B*Td, V]
    TensorT<Real> decode(TapeT<Real>& tape, const TensorT<Real>& enc_out, const std::vector<uint8_t>& enc_mask,
                         const std::vector<int64_t>& dec_ids, int64_t B, int64_t Td, const ForwardCtx& ctx) const {
        if (Td > cfg_.max_output_len + 1)
            throw std::invalid_argument("seq2seq: output length " + std::to_string(Td) + " exceeds max " +
                                        std::to_string(cfg_.max_output_len + 1));
        decoder_positions_ += B * Td;
        decoder_calls_ += 1;
        auto tok = tokens_.forward(tape, dec_ids);
        std::vector<int64_t> pos_ids(static_cast<size_t>(B * Td));
        for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < Td; ++t) pos_ids[static_cast<size_t>(b * Td + t)] = t;
        auto x = tape.reshape(tape.add(tok, dec_pos_.forward(tape, pos_ids)), {B, Td, cfg_.model_dim});
        x = tape.dropout(x, ctx.dropout, ctx.next_seed(), ctx.training);
        const auto causal = AttnMask::causal(B, Td);
        const auto cross = AttnMask::from_key_mask(enc_mask, B, Td, enc_out.dim(1));
        auto h = x;
        for (const auto& layer : dec_layers_) h = layer.forward(tape, h, causal, enc_out, cross, ctx);
        h = dec_final_ln_.forward(tape, h);
        return tape.linear(tape.reshape(h, {B * Td, cfg_.model_dim}), lm_head_);
    }

    // single-example next-token logits after `output_prefix`
    std::vector<Real> seq2seq_forward(const std::vector<int64_t>& input_tokens,
                                      const std::vector<int64_t>& output_prefix) const {
        TapeT<Real> tape;
        tape.set_recording(false);
        const auto ctx = ForwardCtx::eval();
        const int64_t Ti = static_cast<int64_t>(input_tokens.size());
        std::vector<uint8_t> enc_mask(static_cast<size_t>(Ti), 1);
        auto enc_out = encode(tape, input_tokens, enc_mask, 1, Ti, ctx);
        std::vector<int64_t> dec_ids = {GenVocab::kBos};
        dec_ids.insert(dec_ids.end(), output_prefix.begin(), output_prefix.end());
        auto logits = decode(tape, enc_out, enc_mask, dec_ids, 1, static_cast<int64_t>(dec_ids.size()), ctx);
        const int64_t V = cfg_.vocab_size;
        std::vector<Real> out(static_cast<size_t>(V));
        const int64_t last = static_cast<int64_t>(dec_ids.size()) - 1;
        std::copy_n(logits.data() + last * V, V, out.begin());
        return out;
    }

    struct DecodeResult {
        std::vector<Beam> beams;  // ranked
    };

    // standard beam search; score = log_prob / len^alpha (alpha 0 = none)
    DecodeResult beam_search_decode(const std::vector<int64_t>& input_tokens, int64_t beam_width, int64_t max_steps,
                                    int64_t num_return, double alpha = 0.0) const {
        TapeT<Real> tape;
        tape.set_recording(false);
        const int64_t Ti = static_cast<int64_t>(input_tokens.size());
        std::vector<uint8_t> enc_mask(static_cast<size_t>(Ti), 1);
        auto enc_out = encode(tape, input_tokens, enc_mask, 1, Ti, ForwardCtx::eval());
        return beam_search_from_encoded(tape, enc_out, enc_mask, beam_width, max_steps, num_return, alpha);
    }

    // the decoding stage alone, for pre-encoded input
    DecodeResult beam_search_from_encoded(TapeT<Real>& tape, const TensorT<Real>& enc_out,
                                          const std::vector<uint8_t>& enc_mask, int64_t beam_width,
                                          int64_t max_steps, int64_t num_return, double alpha = 0.0) const {
        if (beam_width < num_return || num_return < 1)
            throw std::invalid_argument("beam search: need beam_width >= num_return >= 1");
        const auto ctx = ForwardCtx::eval();

        auto norm_score = [alpha](double log_prob, size_t len) {
            return alpha == 0.0 ? log_prob : log_prob / std::pow(static_cast<double>(std::max<size_t>(len, 1)), alpha);
        };

        std::vector<Beam> live = {Beam{}};
        std::vector<Beam> finished;
        const int64_t V = cfg_.vocab_size;

        for (int64_t step = 0; step < max_steps && !live.empty(); ++step) {
            // batch all live beams through the decoder; rows share the one
            // encoded input
            const int64_t L = static_cast<int64_t>(live.size());
            const int64_t Td = step + 1;
            std::vector<int64_t> dec_ids(static_cast<size_t>(L * Td));
            for (int64_t b = 0; b < L; ++b) {
                dec_ids[static_cast<size_t>(b * Td)] = GenVocab::kBos;
                for (int64_t t = 0; t < step; ++t)
                    dec_ids[static_cast<size_t>(b * Td + 1 + t)] = live[static_cast<size_t>(b)].tokens[static_cast<size_t>(t)];
            }
            auto enc_rows = tile_rows(tape, enc_out, L);
            std::vector<uint8_t> enc_mask_rows;
            for (int64_t b = 0; b < L; ++b) enc_mask_rows.insert(enc_mask_rows.end(), enc_mask.begin(), enc_mask.end());
            auto logits = decode(tape, enc_rows, enc_mask_rows, dec_ids, L, Td, ctx);

            struct Candidate {
                int64_t beam;
                int64_t token;
                double log_prob;
            };
            std::vector<Candidate> candidates;
            candidates.reserve(static_cast<size_t>(L * beam_width));
            for (int64_t b = 0; b < L; ++b) {
                const Real* row = logits.data() + ((b * Td) + (Td - 1)) * V;
                // log softmax over the row
                Real mx = row[0];
                for (int64_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
                double z = 0;
                for (int64_t j = 0; j < V; ++j) z += std::exp(static_cast<double>(row[j] - mx));
                const double lse = static_cast<double>(mx) + std::log(z);
                // top beam_width next tokens of this beam (PAD and BOS excluded)
                std::vector<int64_t> idx;
                idx.reserve(static_cast<size_t>(V));
                for (int64_t j = 0; j < V; ++j)
                    if (j != GenVocab::kPad && j != GenVocab::kBos) idx.push_back(j);
                const auto by_logit = [&](int64_t x, int64_t y) {
                    if (row[x] != row[y]) return row[x] > row[y];
                    return x < y;
                };
                const size_t keep = std::min<size_t>(static_cast<size_t>(beam_width), idx.size());
                std::partial_sort(idx.begin(), idx.begin() + static_cast<int64_t>(keep), idx.end(), by_logit);
                idx.resize(keep);
                for (int64_t j : idx)
                    candidates.push_back({b, j, live[static_cast<size_t>(b)].log_prob +
                                                    static_cast<double>(row[j]) - lse});
            }
            std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
                if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                if (a.beam != b.beam) return a.beam < b.beam;
                return a.token < b.token;
            });
            std::vector<Beam> next_live;
            for (const auto& c : candidates) {
                if (static_cast<int64_t>(next_live.size()) >= beam_width) break;
                Beam b = live[static_cast<size_t>(c.beam)];
                b.tokens.push_back(c.token);
                b.log_prob = c.log_prob;
                if (c.token == GenVocab::kEos) {
                    b.finished = true;
                    finished.push_back(std::move(b));
                } else {
                    next_live.push_back(std::move(b));
                }
            }
            live = std::move(next_live);
        }

        auto by_score = [&](const Beam& a, const Beam& b) {
            const double sa = norm_score(a.log_prob, a.tokens.size());
            const double sb = norm_score(b.log_prob, b.tokens.size());
            if (sa != sb) return sa > sb;
            return a.tokens < b.tokens;
        };
        std::sort(finished.begin(), finished.end(), by_score);
        std::sort(live.begin(), live.end(), by_score);

        DecodeResult result;
        for (const auto& b : finished) {
            if (static_cast<int64_t>(result.beams.size()) >= num_return) break;
            result.beams.push_back(b);
        }
        for (const auto& b : live) {  // fallback: unfinished beams at step S
            if (static_cast<int64_t>(result.beams.size()) >= num_return) break;
            result.beams.push_back(b);
        }
        return result;
    }

    int64_t decoder_positions() const { return decoder_positions_; }
    int64_t decoder_calls() const { return decoder_calls_; }
    int64_t encoder_calls() const { return encoder_calls_; }
    void reset_counters() const { decoder_positions_ = decoder_calls_ = encoder_calls_ = 0; }

    std::vector<NamedParamT<Real>> all_params() const {
        std::vector<NamedParamT<Real>> out;
        tokens_.collect(out, "gen.tok_emb");
        enc_pos_.collect(out, "gen.enc_pos");
        dec_pos_.collect(out, "gen.dec_pos");
        encoder_.collect(out, "gen.enc");
        for (size_t i = 0; i < dec_layers_.size(); ++i)
            dec_layers_[i].collect(out, "gen.dec.layer" + std::to_string(i));
        dec_final_ln_.collect(out, "gen.dec.final_ln");
        out.push_back({"gen.lm_head", lm_head_});
        return out;
    }

private:
    // repeat the single encoded input for each live beam
    static TensorT<Real> tile_rows(TapeT<Real>& tape, const TensorT<Real>& enc_out, int64_t copies) {
        const int64_t T = enc_out.dim(1), d = enc_out.dim(2);
        auto flat = tape.reshape(enc_out, {T, d});
        std::vector<int64_t> ids(static_cast<size_t>(copies * T));
        for (int64_t c = 0; c < copies; ++c)
            for (int64_t t = 0; t < T; ++t) ids[static_cast<size_t>(c * T + t)] = t;
        return tape.reshape(tape.gather_rows(flat, ids), {copies, T, d});
    }

    Seq2SeqConfig cfg_;
    EmbeddingT<Real> tokens_, enc_pos_, dec_pos_;
    TransformerEncoderT<Real> encoder_;
    std::vector<DecoderLayerT<Real>> dec_layers_;
    LayerNormT<Real> dec_final_ln_;
    TensorT<Real> lm_head_;
    mutable int64_t decoder_positions_ = 0;
    mutable int64_t decoder_calls_ = 0;
    mutable int64_t encoder_calls_ = 0;
};

struct ParsedItems {
    std::vector<int64_t> items;  // ranked, deduplicated
    int64_t invalid_count = 0;
    int64_t duplicate_count = 0;
};

// Parse generated token sequences back into item indices. A sequence is valid
// only if its pieces are exactly the canonical ID encoding of an existing
// item; malformed output is counted, not fatal.
inline ParsedItems parse_generated_items(const std::vector<std::vector<int64_t>>& sequences, const GenVocab& vocab,
                                         int64_t catalog_size) {
    ParsedItems out;
    std::set<int64_t> seen;
    for (const auto& seq : sequences) {
        std::vector<std::string> pieces;
        bool bad = false;
        for (size_t i = 0; i < seq.size(); ++i) {
            if (seq[i] == GenVocab::kEos) {
                if (i + 1 != seq.size()) bad = true;  // EOS only at the end
                break;
            }
            if (seq[i] == GenVocab::kPad || seq[i] == GenVocab::kBos || seq[i] >= vocab.size()) {
                bad = true;
                break;
            }
            pieces.push_back(vocab.token(seq[i]));
        }
        if (bad || pieces.size() < 3 || pieces[0] != "item" || pieces[1] != "_") {
            ++out.invalid_count;
            continue;
        }
        std::string digits;
        for (size_t i = 2; i < pieces.size(); ++i) digits += pieces[i];
        if (digits.empty() || digits.size() > 18 ||
            !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            ++out.invalid_count;
            continue;
        }
        const int64_t index = std::stoll(digits);
        // canonical grouping and existence
        if (index >= catalog_size || encode_item_id_tokens(index) != pieces) {
            ++out.invalid_count;
            continue;
        }
        if (!seen.insert(index).second) {
            ++out.duplicate_count;
            continue;
        }
        out.items.push_back(index);
    }
    return out;
}

using Seq2Seq = Seq2SeqT<float>;

}  // namespace literec

// Deterministic word-level tokenizer and vocabulary over item metadata text,
// plus the digit-piece form of item-ID strings used by the generative
// baseline.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace literec {

class Vocab {
public:
    static constexpr int64_t kPad = 0;
    static constexpr int64_t kUnk = 1;
    static constexpr int64_t kBos = 2;
    static constexpr int64_t kEos = 3;
    static constexpr int64_t kReserved = 4;

    Vocab();

    // Inserts a token if new; returns its id. Throws when frozen.
    int64_t add(const std::string& token);
    void freeze() { frozen_ = true; }
    bool frozen() const { return frozen_; }

    int64_t size() const { return static_cast<int64_t>(id_to_token_.size()); }
    bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }
    int64_t id(const std::string& token) const;        // kUnk when absent
    const std::string& token(int64_t id) const;

    // one token per line, line number = id - 4; reserved ids implicit
    void save(std::ostream& out) const;
    static Vocab load(std::istream& in);

    bool operator==(const Vocab& other) const { return id_to_token_ == other.id_to_token_; }

private:
    std::unordered_map<std::string, int64_t> token_to_id_;
    std::vector<std::string> id_to_token_;
    bool frozen_ = false;
};

struct TokenizedText {
    std::vector<int64_t> ids;
    int64_t length = 0;  // non-PAD count
};

// lowercase, whitespace split, with ()[]:,.!?'"&- as standalone tokens
std::vector<std::string> tokenize_text(const std::string& text);

// all tokens with frequency >= min_freq, ordered by (freq desc, token asc)
// after the reserved ids; deterministic for identical corpora
Vocab build_vocab(const std::vector<std::string>& corpus, int64_t min_freq);

// token placed between the title and genre fields of an item's context text
inline const std::string kFieldSep = "<sep>";

// title tokens, separator, genre tokens; truncated to max_len; never empty
TokenizedText encode_item_context(const std::string& title, const std::string& genre, const Vocab& vocab,
                                  int64_t max_len);

// "item", "_", then decimal digits grouped in two-digit pieces left to right
// (odd length -> leading single digit)
std::vector<std::string> encode_item_id_tokens(int64_t item_index);

}  // namespace literec

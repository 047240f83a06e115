#include "literec/text.hpp"

#include <algorithm>
#include <cctype>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>

namespace literec {

namespace {
const std::string kReservedNames[] = {"<pad>", "<unk>", "<bos>", "<eos>"};

bool is_split_punct(char c) {
    static const std::string punct = "()[]:,.!?'\"&-";
    return punct.find(c) != std::string::npos;
}
}  // namespace

Vocab::Vocab() {
    for (const auto& name : kReservedNames) {
        token_to_id_.emplace(name, static_cast<int64_t>(id_to_token_.size()));
        id_to_token_.push_back(name);
    }
}

int64_t Vocab::add(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    if (frozen_) throw std::logic_error("vocab: insertion into frozen vocab rejected ('" + token + "')");
    const int64_t id = static_cast<int64_t>(id_to_token_.size());
    token_to_id_.emplace(token, id);
    id_to_token_.push_back(token);
    return id;
}

int64_t Vocab::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int64_t id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<size_t>(id)];
}

void Vocab::save(std::ostream& out) const {
    for (size_t i = kReserved; i < id_to_token_.size(); ++i) out << id_to_token_[i] << '\n';
}

Vocab Vocab::load(std::istream& in) {
    Vocab v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) v.add(line);
    }
    v.freeze();
    return v;
}

std::vector<std::string> tokenize_text(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    auto flush = [&]() {
        if (!cur.empty()) {
            tokens.push_back(cur);
            cur.clear();
        }
    };
    for (char raw : text) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (is_split_punct(c)) {
            flush();
            tokens.push_back(std::string(1, c));
        } else {
            cur.push_back(c);
        }
    }
    flush();
    return tokens;
}

Vocab build_vocab(const std::vector<std::string>& corpus, int64_t min_freq) {
    if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    std::map<std::string, int64_t> freq;
    for (const auto& text : corpus)
        for (const auto& tok : tokenize_text(text)) ++freq[tok];
    std::vector<std::pair<std::string, int64_t>> kept;
    for (const auto& [tok, n] : freq)
        if (n >= min_freq) kept.emplace_back(tok, n);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab v;
    for (const auto& [tok, n] : kept) {
        (void)n;
        v.add(tok);
    }
    v.freeze();
    return v;
}

TokenizedText encode_item_context(const std::string& title, const std::string& genre, const Vocab& vocab,
                                  int64_t max_len) {
    if (!vocab.frozen()) throw std::logic_error("encode_item_context: vocab must be frozen");
    std::vector<std::string> title_toks = tokenize_text(title);
    std::vector<std::string> genre_toks = tokenize_text(genre);
    std::vector<std::string> tokens = std::move(title_toks);
    if (!tokens.empty() && !genre_toks.empty()) tokens.push_back(kFieldSep);
    tokens.insert(tokens.end(), genre_toks.begin(), genre_toks.end());

    TokenizedText out;
    for (const auto& tok : tokens) {
        if (static_cast<int64_t>(out.ids.size()) >= max_len) break;
        out.ids.push_back(vocab.id(tok));
    }
    if (out.ids.empty()) out.ids.push_back(Vocab::kUnk);
    out.length = static_cast<int64_t>(out.ids.size());
    return out;
}

std::vector<std::string> encode_item_id_tokens(int64_t item_index) {
    if (item_index < 0) throw std::invalid_argument("encode_item_id_tokens: negative index");
    const std::string digits = std::to_string(item_index);
    std::vector<std::string> tokens = {"item", "_"};
    size_t pos = 0;
    if (digits.size() % 2 == 1) {
        tokens.push_back(digits.substr(0, 1));
        pos = 1;
    }
    for (; pos < digits.size(); pos += 2) tokens.push_back(digits.substr(pos, 2));
    return tokens;
}

}  // namespace literec

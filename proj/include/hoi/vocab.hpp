#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hoi/error.hpp"

namespace hoi {

enum class TokenModality { Text, Special, Human, Object };

enum class SpecialToken : int {
    Bos = 0,
    Eos = 1,
    Pad = 2,
    Unk = 3,
    Bohm = 4,
    Eohm = 5,
    Boom = 6,
    Eoom = 7,
    Ogt = 8,
};

constexpr int kNumSpecials = 9;

const std::array<const char*, kNumSpecials>& special_token_names();

struct TokenClass {
    TokenModality modality;
    int local_index = -1;    // text word id / motion code / special index
    std::string name;        // word or special name
};

// Partitioned token space: [0,K_t) text words, then the 9 specials in fixed
// order, then [base_h, base_h+K_h) human codes, then object codes. The layout
// is a pure function of (word list, K_h, K_o) and is recomputed on load.
class UnifiedVocab {
public:
    UnifiedVocab() = default;
    UnifiedVocab(std::vector<std::string> words, int k_h, int k_o);

    int k_t() const { return static_cast<int>(words_.size()); }
    int k_h() const { return k_h_; }
    int k_o() const { return k_o_; }
    int size() const { return k_t() + kNumSpecials + k_h_ + k_o_; }

    int special(SpecialToken t) const { return k_t() + static_cast<int>(t); }
    int base_h() const { return k_t() + kNumSpecials; }
    int base_o() const { return base_h() + k_h_; }

    const std::vector<std::string>& words() const { return words_; }

    // Lowercases, splits on whitespace/punctuation, maps unknown words to UNK.
    // No BOS/EOS added; task assembly owns sequence framing.
    std::vector<int> encode_caption(const std::string& caption) const;

    // [BOHM, base_h + s_0, ..., EOHM] (or BOOM/EOOM for the object modality).
    std::vector<int> wrap_motion(const std::vector<int>& indices, TokenModality modality) const;

    // Inverse of wrap_motion; validates framing and span modality.
    std::vector<int> unwrap_motion(const std::vector<int>& tokens, TokenModality modality) const;

    TokenClass classify_token(int id) const;
    int compose(TokenModality modality, int local_index) const;

    std::string decode_words(const std::vector<int>& ids) const;

    std::string to_json() const;
    static UnifiedVocab from_json(const std::string& text);
    void save(const std::string& path) const;
    static UnifiedVocab load(const std::string& path);

    // FNV-1a hash of the canonical serialization; stored in model sidecars so
    // checkpoint/vocab mismatches fail fast.
    std::uint64_t hash() const;

    bool operator==(const UnifiedVocab& o) const {
        return words_ == o.words_ && k_h_ == o.k_h_ && k_o_ == o.k_o_;
    }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> word_ids_;
    int k_h_ = 0;
    int k_o_ = 0;
};

}  // namespace hoi

#include "hoi/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hoi {

using nlohmann::json;

const std::array<const char*, kNumSpecials>& special_token_names() {
    static const std::array<const char*, kNumSpecials> kNames = {
        "<bos>", "<eos>", "<pad>", "<unk>", "<bohm>", "<eohm>", "<boom>", "<eoom>", "<ogt>"};
    return kNames;
}

UnifiedVocab::UnifiedVocab(std::vector<std::string> words, int k_h, int k_o)
    : words_(std::move(words)), k_h_(k_h), k_o_(k_o) {
    if (k_h_ < 1 || k_o_ < 1) throw config_error("vocab needs positive motion code counts");
    for (std::size_t i = 0; i < words_.size(); ++i) {
        if (!word_ids_.emplace(words_[i], static_cast<int>(i)).second) {
            throw config_error("duplicate word '" + words_[i] + "' in vocabulary");
        }
    }
}

std::vector<int> UnifiedVocab::encode_caption(const std::string& caption) const {
    std::vector<int> out;
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        auto it = word_ids_.find(word);
        out.push_back(it != word_ids_.end() ? it->second : special(SpecialToken::Unk));
        word.clear();
    };
    for (char c : caption) {
        const unsigned char uc = static_cast<unsigned char>(c);
        if (std::isalnum(uc)) {
            word.push_back(static_cast<char>(std::tolower(uc)));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

std::vector<int> UnifiedVocab::wrap_motion(const std::vector<int>& indices,
                                           TokenModality modality) const {
    if (modality != TokenModality::Human && modality != TokenModality::Object) {
        throw domain_error("wrap_motion: modality must be human or object");
    }
    const bool human = modality == TokenModality::Human;
    const int base = human ? base_h() : base_o();
    const int k = human ? k_h_ : k_o_;
    std::vector<int> out;
    out.reserve(indices.size() + 2);
    out.push_back(special(human ? SpecialToken::Bohm : SpecialToken::Boom));
    for (int idx : indices) {
        if (idx < 0 || idx >= k) {
            throw range_error("wrap_motion: code " + std::to_string(idx) + " outside [0, " +
                              std::to_string(k) + ")");
        }
        out.push_back(base + idx);
    }
    out.push_back(special(human ? SpecialToken::Eohm : SpecialToken::Eoom));
    return out;
}

std::vector<int> UnifiedVocab::unwrap_motion(const std::vector<int>& tokens,
                                             TokenModality modality) const {
    const bool human = modality == TokenModality::Human;
    const int open = special(human ? SpecialToken::Bohm : SpecialToken::Boom);
    const int close = special(human ? SpecialToken::Eohm : SpecialToken::Eoom);
    if (tokens.size() < 2 || tokens.front() != open || tokens.back() != close) {
        throw domain_error("unwrap_motion: span is not delimited by the expected boundary tokens");
    }
    std::vector<int> out;
    out.reserve(tokens.size() - 2);
    for (std::size_t i = 1; i + 1 < tokens.size(); ++i) {
        const TokenClass tc = classify_token(tokens[i]);
        if (tc.modality != modality) {
            throw domain_error("unwrap_motion: token " + std::to_string(tokens[i]) +
                               " inside the span is not a " + (human ? "human" : "object") +
                               " code");
        }
        out.push_back(tc.local_index);
    }
    return out;
}

TokenClass UnifiedVocab::classify_token(int id) const {
    if (id < 0 || id >= size()) {
        throw range_error("token id " + std::to_string(id) + " outside vocab of " +
                          std::to_string(size()));
    }
    if (id < k_t()) return {TokenModality::Text, id, words_[static_cast<std::size_t>(id)]};
    if (id < base_h()) {
        const int s = id - k_t();
        return {TokenModality::Special, s, special_token_names()[static_cast<std::size_t>(s)]};
    }
    if (id < base_o()) return {TokenModality::Human, id - base_h(), ""};
    return {TokenModality::Object, id - base_o(), ""};
}

int UnifiedVocab::compose(TokenModality modality, int local_index) const {
    switch (modality) {
        case TokenModality::Text:
            if (local_index < 0 || local_index >= k_t()) {
                throw range_error("compose: word index " + std::to_string(local_index) +
                                  " outside [0, " + std::to_string(k_t()) + ")");
            }
            return local_index;
        case TokenModality::Special:
            if (local_index < 0 || local_index >= kNumSpecials) {
                throw range_error("compose: special index out of range");
            }
            return k_t() + local_index;
        case TokenModality::Human:
            if (local_index < 0 || local_index >= k_h_) {
                throw range_error("compose: human code out of range");
            }
            return base_h() + local_index;
        case TokenModality::Object:
            if (local_index < 0 || local_index >= k_o_) {
                throw range_error("compose: object code out of range");
            }
            return base_o() + local_index;
    }
    throw domain_error("compose: bad modality");
}

std::string UnifiedVocab::decode_words(const std::vector<int>& ids) const {
    std::ostringstream os;
    bool first = true;
    for (int id : ids) {
        const TokenClass tc = classify_token(id);
        if (!first) os << " ";
        first = false;
        if (tc.modality == TokenModality::Text) {
            os << tc.name;
        } else {
            os << tc.name;  // special name; motion codes have empty names
        }
    }
    return os.str();
}

std::string UnifiedVocab::to_json() const {
    json j;
    j["words"] = words_;
    j["k_h"] = k_h_;
    j["k_o"] = k_o_;
    json specials = json::array();
    for (const char* s : special_token_names()) specials.push_back(s);
    j["specials"] = specials;
    return j.dump(2) + "\n";
}

UnifiedVocab UnifiedVocab::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw format_error(std::string("vocab file is not valid JSON (") + e.what() + ")");
    }
    try {
        std::vector<std::string> words = j.at("words").get<std::vector<std::string>>();
        const int k_h = j.at("k_h").get<int>();
        const int k_o = j.at("k_o").get<int>();
        if (j.contains("specials")) {
            const auto specials = j.at("specials").get<std::vector<std::string>>();
            if (specials.size() != kNumSpecials) {
                throw format_error("vocab file lists " + std::to_string(specials.size()) +
                                   " specials, expected " + std::to_string(kNumSpecials));
            }
            for (std::size_t i = 0; i < specials.size(); ++i) {
                if (specials[i] != special_token_names()[i]) {
                    throw format_error("vocab special #" + std::to_string(i) + " is '" +
                                       specials[i] + "', expected '" +
                                       special_token_names()[i] + "'");
                }
            }
        }
        return UnifiedVocab(std::move(words), k_h, k_o);
    } catch (const json::exception& e) {
        throw format_error(std::string("vocab file has bad fields (") + e.what() + ")");
    }
}

void UnifiedVocab::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out << to_json();
}

UnifiedVocab UnifiedVocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open '" + path + "' for reading");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::uint64_t UnifiedVocab::hash() const {
    const std::string canon = to_json();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : canon) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace hoi

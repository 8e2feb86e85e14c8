#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "hoi/rng.hpp"
#include "hoi/vocab.hpp"

using namespace hoi;

namespace {

std::vector<std::string> forty_words() {
    std::vector<std::string> w;
    for (int i = 0; i < 40; ++i) w.push_back("w" + std::to_string(i));
    return w;
}

}  // namespace

TEST_CASE("layout: sizes, special placement, bases") {
    UnifiedVocab v(forty_words(), 64, 64);
    CHECK(v.size() == 177);  // 40 + 9 + 64 + 64
    CHECK(v.special(SpecialToken::Bos) == 40);
    CHECK(v.special(SpecialToken::Ogt) == 48);  // K_t + 8, last special
    CHECK(v.base_h() == 49);
    CHECK(v.base_o() == 113);

    CHECK_THROWS_AS(UnifiedVocab({"a", "a"}, 4, 4), Error);
}

TEST_CASE("encode_caption: empty, table lookup, OOV, punctuation") {
    UnifiedVocab v({"lift", "the", "box"}, 4, 4);
    CHECK(v.encode_caption("").empty());
    CHECK(v.encode_caption("Lift the box.") == std::vector<int>{0, 1, 2});
    CHECK(v.encode_caption("lift the spaceship") ==
          std::vector<int>{0, 1, v.special(SpecialToken::Unk)});
    CHECK(v.encode_caption("  lift,the;box  ") == std::vector<int>{0, 1, 2});
}

TEST_CASE("wrap_motion: empty span, layout arithmetic, range error") {
    UnifiedVocab v(forty_words(), 64, 64);
    CHECK(v.wrap_motion({}, TokenModality::Human) ==
          std::vector<int>{v.special(SpecialToken::Bohm), v.special(SpecialToken::Eohm)});
    CHECK(v.wrap_motion({0, 1}, TokenModality::Human) ==
          std::vector<int>{v.special(SpecialToken::Bohm), 49, 50, v.special(SpecialToken::Eohm)});
    CHECK(v.wrap_motion({3}, TokenModality::Object) ==
          std::vector<int>{v.special(SpecialToken::Boom), 116, v.special(SpecialToken::Eoom)});
    CHECK_THROWS_AS(v.wrap_motion({64}, TokenModality::Human), Error);
    CHECK_THROWS_AS(v.wrap_motion({-1}, TokenModality::Object), Error);
}

TEST_CASE("wrap/unwrap round trip on random index lists") {
    UnifiedVocab v(forty_words(), 32, 16);
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const auto modality = trial % 2 ? TokenModality::Human : TokenModality::Object;
        const int k = modality == TokenModality::Human ? 32 : 16;
        std::vector<int> indices;
        const int len = static_cast<int>(rng.uniform_int(20));
        for (int i = 0; i < len; ++i) indices.push_back(static_cast<int>(rng.uniform_int(k)));
        const auto wrapped = v.wrap_motion(indices, modality);
        // wrapped spans never contain BOS/EOS/PAD
        for (int id : wrapped) {
            CHECK(id != v.special(SpecialToken::Bos));
            CHECK(id != v.special(SpecialToken::Eos));
            CHECK(id != v.special(SpecialToken::Pad));
        }
        CHECK(v.unwrap_motion(wrapped, modality) == indices);
    }
    // wrong-modality token inside a span
    std::vector<int> bad{v.special(SpecialToken::Bohm), v.base_o(), v.special(SpecialToken::Eohm)};
    CHECK_THROWS_AS(v.unwrap_motion(bad, TokenModality::Human), Error);
}

TEST_CASE("classify/compose: exhaustive identity over the whole vocab") {
    UnifiedVocab v(forty_words(), 24, 40);
    CHECK(v.classify_token(0).modality == TokenModality::Text);
    CHECK(v.classify_token(0).name == "w0");
    CHECK(v.classify_token(v.base_o()).modality == TokenModality::Object);
    CHECK(v.classify_token(v.base_o()).local_index == 0);

    for (int id = 0; id < v.size(); ++id) {
        const TokenClass tc = v.classify_token(id);
        CHECK(v.compose(tc.modality, tc.local_index) == id);
    }
    CHECK_THROWS_AS(v.classify_token(v.size()), Error);
    CHECK_THROWS_AS(v.classify_token(-1), Error);
}

TEST_CASE("json round trip and layout purity") {
    namespace fs = std::filesystem;
    UnifiedVocab v({"alpha", "beta", "gamma"}, 8, 12);
    const auto dir = fs::temp_directory_path() / "hoi_vocab_test";
    fs::create_directories(dir);
    const std::string path = (dir / "vocab.json").string();
    v.save(path);
    UnifiedVocab back = UnifiedVocab::load(path);
    CHECK(back == v);
    CHECK(back.hash() == v.hash());
    CHECK(back.size() == v.size());

    UnifiedVocab again({"alpha", "beta", "gamma"}, 8, 12);
    CHECK(again.hash() == v.hash());
    UnifiedVocab different({"alpha", "beta", "delta"}, 8, 12);
    CHECK(different.hash() != v.hash());

    CHECK_THROWS_AS(UnifiedVocab::from_json("{not json"), Error);
    CHECK_THROWS_AS(UnifiedVocab::from_json("{\"words\": [\"a\"]}"), Error);
}

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "mcre/embedding_store.hpp"
#include "mcre/error.hpp"
#include "synthetic.hpp"

using namespace mcre;
namespace fs = std::filesystem;

namespace {

template <typename F>
ErrorCode code_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an mcre::Error";
    return ErrorCode::Io;
}

EmbeddingStore two_by_four() {
    EmbeddingStore s(4, "t");
    std::vector<float> a = {1.0f, 0.0f, -2.0f, 0.5f};
    std::vector<float> b = {0.25f, 3.0f, 0.0f, -1.0f};
    s.add("a", a);
    s.add("bb", b);
    return s;
}

void put_f32(std::string& out, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

bool bit_equal(const EmbeddingStore& a, const EmbeddingStore& b) {
    if (a.dim != b.dim || a.source_tag != b.source_tag || a.ids != b.ids) return false;
    if (a.payload.size() != b.payload.size()) return false;
    return std::memcmp(a.payload.data(), b.payload.data(), a.payload.size() * sizeof(float)) == 0;
}

}  // namespace

TEST(EmbeddingStore, GoldenBytes) {
    auto s = two_by_four();
    std::string expected;
    expected += "MCRE";
    expected += std::string("\x01\x00\x00\x00", 4);          // version
    expected += std::string("\x04\x00\x00\x00", 4);          // dim
    expected += std::string("\x02\x00\x00\x00\x00\x00\x00\x00", 8);  // count
    expected += std::string("\x01\x00", 2) + "t";
    expected += std::string("\x01\x00", 2) + "a";
    expected += std::string("\x02\x00", 2) + "bb";
    for (float f : {1.0f, 0.0f, -2.0f, 0.5f, 0.25f, 3.0f, 0.0f, -1.0f}) put_f32(expected, f);

    auto bytes = encode_embedding_store(s);
    EXPECT_EQ(encoded_header_size(s), 23u);
    EXPECT_EQ(bytes.size(), 23u + 7u + 32u);
    EXPECT_EQ(bytes, expected);
    EXPECT_EQ(decode_embedding_store(bytes), s);
}

TEST(EmbeddingStore, FileRoundTrip) {
    synth::TempDir dir;
    auto s = two_by_four();
    write_embedding_store(s, dir / "g.mcre");
    EXPECT_EQ(fs::file_size(dir / "g.mcre"), 62u);
    EXPECT_EQ(read_embedding_store(dir / "g.mcre"), s);
    EXPECT_FALSE(fs::exists(dir / "g.mcre.tmp"));
}

TEST(EmbeddingStore, EmptyStore) {
    EmbeddingStore s(16, "ViT-L-14");
    auto bytes = encode_embedding_store(s);
    EXPECT_EQ(bytes.size(), encoded_header_size(s));
    auto back = decode_embedding_store(bytes);
    EXPECT_TRUE(back.empty());
    EXPECT_EQ(back.dim, 16u);
    EXPECT_EQ(back.source_tag, "ViT-L-14");
}

TEST(EmbeddingStore, TruncationAnywhereIsTruncatedFile) {
    auto bytes = encode_embedding_store(two_by_four());
    for (std::size_t n = 4; n < bytes.size(); ++n) {
        EXPECT_EQ(code_of([&] { (void)decode_embedding_store(bytes.substr(0, n)); }), ErrorCode::TruncatedFile)
            << "length " << n;
    }
}

TEST(EmbeddingStore, ShortOrWrongMagic) {
    EXPECT_EQ(code_of([] { (void)decode_embedding_store("MC"); }), ErrorCode::BadMagic);
    auto bytes = encode_embedding_store(two_by_four());
    bytes[0] = 'X';
    EXPECT_EQ(code_of([&] { (void)decode_embedding_store(bytes); }), ErrorCode::BadMagic);
}

TEST(EmbeddingStore, HeaderChecks) {
    auto bytes = encode_embedding_store(two_by_four());
    auto v2 = bytes;
    v2[4] = 2;
    EXPECT_EQ(code_of([&] { (void)decode_embedding_store(v2); }), ErrorCode::UnsupportedVersion);
    auto dim0 = bytes;
    dim0[8] = 0;
    EXPECT_EQ(code_of([&] { (void)decode_embedding_store(dim0); }), ErrorCode::CorruptStore);
    auto trailing = bytes + "x";
    EXPECT_EQ(code_of([&] { (void)decode_embedding_store(trailing); }), ErrorCode::CorruptStore);
    auto huge = bytes;
    huge[19] = '\x7f';
    EXPECT_EQ(code_of([&] { (void)decode_embedding_store(huge); }), ErrorCode::TruncatedFile);
}

TEST(EmbeddingStore, DuplicateIds) {
    EmbeddingStore s(1, "");
    std::vector<float> one = {1.0f};
    s.add("x", one);
    s.add("x", one);
    EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::DuplicateId);
    EXPECT_EQ(code_of([&] { (void)encode_embedding_store(s); }), ErrorCode::DuplicateId);

    std::string raw = "MCRE";
    raw += std::string("\x01\x00\x00\x00\x01\x00\x00\x00\x02\x00\x00\x00\x00\x00\x00\x00", 16);
    raw += std::string("\x00\x00", 2);
    raw += std::string("\x01\x00", 2) + "x" + std::string("\x01\x00", 2) + "x";
    put_f32(raw, 1.0f);
    put_f32(raw, 2.0f);
    EXPECT_EQ(code_of([&] { (void)decode_embedding_store(raw); }), ErrorCode::DuplicateId);
}

TEST(EmbeddingStore, AddChecksDimension) {
    EmbeddingStore s(3, "");
    std::vector<float> two = {1.0f, 2.0f};
    EXPECT_EQ(code_of([&] { s.add("a", two); }), ErrorCode::DimensionMismatch);
}

TEST(EmbeddingStore, ReadErrorsNameTheFile) {
    synth::TempDir dir;
    synth::write_text(dir / "bad.mcre", "NOPE1234");
    try {
        (void)read_embedding_store(dir / "bad.mcre");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BadMagic);
        EXPECT_NE(std::string(e.what()).find("bad.mcre"), std::string::npos);
    }
    EXPECT_EQ(code_of([&] { (void)read_embedding_store(dir / "missing.mcre"); }), ErrorCode::Io);
}

TEST(EmbeddingStore, RandomRoundTripIsBitExact) {
    synth::Rng rng(2024);
    synth::TempDir dir;
    for (int t = 0; t < 200; ++t) {
        auto s = synth::random_store(rng, 40, 24);
        auto back = decode_embedding_store(encode_embedding_store(s));
        ASSERT_TRUE(bit_equal(s, back)) << "trial " << t;
        if (t % 20 == 0) {
            write_embedding_store(s, dir / "r.mcre");
            ASSERT_TRUE(bit_equal(s, read_embedding_store(dir / "r.mcre")));
        }
    }
}

TEST(EmbeddingStore, CaptionKeys) {
    EXPECT_EQ(modi_key("dress-3"), "dress-3#modi");
    EXPECT_EQ(integ_key("17"), "17#integ");
}

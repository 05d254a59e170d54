#include <doctest.h>

#include <cstdio>
#include <random>
#include <string>

#include "plhm/bits.hpp"
#include "plhm/io.hpp"

using namespace plhm;

TEST_CASE("crc32 reference vector") {
    const char* s = "123456789";
    CHECK(crc32_bytes(reinterpret_cast<const uint8_t*>(s), 9) == 0xCBF43926u);
    CHECK(crc32_bytes(nullptr, 0) == 0u);
}

TEST_CASE("model json round trip") {
    auto src = build_gilbert_elliott(0.05, 0.1, 0.2);
    src.declared_mixing_time = 12.5;
    for (bool pretty : {true, false}) {
        auto back = parse_model_json(model_to_json(src, pretty));
        CHECK(back.mod.q == src.mod.q);
        CHECK(back.chain.ell == src.chain.ell);
        CHECK(back.chain.transition == src.chain.transition);
        CHECK(back.chain.initial == src.chain.initial);
        CHECK(back.emissions == src.emissions);
        CHECK(back.name == src.name);
        REQUIRE(back.declared_mixing_time.has_value());
        CHECK(*back.declared_mixing_time == *src.declared_mixing_time);
    }
}

TEST_CASE("model hash ignores formatting but not values") {
    std::string a = R"({"q":2,"states":1,"transition":[[1.0]],"initial":[1.0],)"
                    R"("emissions":[[0.89,0.11]]})";
    std::string b = R"({
        "emissions": [[0.89, 0.11]],
        "initial":   [1.0],
        "q": 2,
        "states": 1,
        "transition": [[1.0]]
    })";
    std::string c = R"({"q":2,"states":1,"transition":[[1.0]],"initial":[1.0],)"
                    R"("emissions":[[0.88,0.12]]})";
    uint64_t ha = model_hash(parse_model_json(a));
    CHECK(ha == model_hash(parse_model_json(b)));
    CHECK(ha != model_hash(parse_model_json(c)));

    auto src = build_gilbert_elliott(0.05, 0.1, 0.2);
    CHECK(model_hash(parse_model_json(model_to_json(src, true))) == model_hash(src));
}

TEST_CASE("model parsing rejects malformed input") {
    CHECK_THROWS(parse_model_json("not json at all"));
    CHECK_THROWS(parse_model_json(R"({"q":2,"states":1,"transition":[[1.0]]})"));  // no initial
    CHECK_THROWS(parse_model_json(
        R"({"q":4,"states":1,"transition":[[1.0]],"initial":[1.0],"emissions":[[0.25,0.25,0.25,0.25]]})"));
    CHECK_THROWS(parse_model_json(
        R"({"q":2,"states":1,"transition":[[0.7]],"initial":[1.0],"emissions":[[0.9,0.1]]})"));
    CHECK_THROWS(parse_model_json(
        R"({"q":2,"states":5000,"transition":[[1.0]],"initial":[1.0],"emissions":[[0.9,0.1]]})"));
}

TEST_CASE("selection set files") {
    SetsFile f;
    f.meta = {3, 2, 3, 0.1, 0.04, 0.01, 2000, 42, 0x1234567890abcdefULL};
    f.sets = SelectionSets(8, 0.1);
    std::mt19937_64 rng(601);
    for (uint32_t j = 0; j < f.sets.jstar(); ++j)
        for (uint32_t i = 0; i < 8; ++i) f.sets.set_selected(j, i, rng() % 2);

    auto bytes = encode_sets(f);
    REQUIRE(bytes.size() > 5);
    CHECK(bytes[0] == 'P');
    CHECK(bytes[1] == 'L');
    CHECK(bytes[2] == 'H');
    CHECK(bytes[3] == 'S');
    CHECK(bytes[4] == 1);  // version

    SetsFile back = decode_sets(bytes);
    CHECK(back.meta.q == f.meta.q);
    CHECK(back.meta.k == f.meta.k);
    CHECK(back.meta.t == f.meta.t);
    CHECK(back.meta.epsilon == f.meta.epsilon);
    CHECK(back.meta.threshold == f.meta.threshold);
    CHECK(back.meta.gamma == f.meta.gamma);
    CHECK(back.meta.samples == f.meta.samples);
    CHECK(back.meta.seed == f.meta.seed);
    CHECK(back.meta.model_hash == f.meta.model_hash);
    CHECK(back.sets == f.sets);

    auto longer = bytes;
    longer.push_back(0);
    CHECK_THROWS(decode_sets(longer));
    auto shorter = bytes;
    shorter.resize(shorter.size() - 3);
    CHECK_THROWS(decode_sets(shorter));
    auto wrong = bytes;
    wrong[3] = 'M';
    CHECK_THROWS(decode_sets(wrong));
}

TEST_CASE("payload files") {
    FieldModulus f3(3);
    TensorTransform tt(default_kernel(f3), 2);
    SelectionSets sets(4, 0.3);
    sets.set_selected(0, 1, true);
    sets.set_selected(1, 0, true);
    sets.set_selected(1, 2, true);
    FieldMatrix Z(f3, 4, 4, {0, 1, 2, 0, 2, 2, 1, 0, 0, 0, 1, 1, 2, 1, 0, 2});
    CompressedPayload p = compress(Z, sets, tt, 0xfeedULL, true);

    auto bytes = encode_payload(p);
    CHECK(bytes[0] == 'P');
    CHECK(bytes[1] == 'L');
    CHECK(bytes[2] == 'H');
    CHECK(bytes[3] == 'M');

    CompressedPayload back = decode_payload(bytes);
    CHECK(back.q == p.q);
    CHECK(back.k == p.k);
    CHECK(back.t == p.t);
    CHECK(back.epsilon == p.epsilon);
    CHECK(back.flags == p.flags);
    CHECK(back.model_hash == p.model_hash);
    CHECK(back.bitmaps == p.bitmaps);
    CHECK(back.columns == p.columns);
    CHECK(back.crc == p.crc);

    SUBCASE("trailing bytes are rejected") {
        bytes.push_back(7);
        CHECK_THROWS(decode_payload(bytes));
    }
    SUBCASE("symbols outside the field are rejected") {
        CompressedPayload bad = compress(Z, sets, tt);  // no crc: symbols end the file
        auto raw = encode_payload(bad);
        raw.back() = 0xFF;  // every 2-bit group in that byte reads as 3
        CHECK_THROWS(decode_payload(raw));
    }
    SUBCASE("epsilon must stay in (0, 1)") {
        CompressedPayload bad = p;
        bad.epsilon = 0.0;
        CHECK_THROWS(decode_payload(encode_payload(bad)));
    }
}

TEST_CASE("transcript files") {
    ChannelTranscript tr;
    tr.q = 5;
    tr.model_hash = 0xdeadbeefULL;
    tr.x = {1, 2, 3};
    tr.z = {4, 0};

    auto bytes = encode_transcript(tr);
    CHECK(bytes[0] == 'P');
    CHECK(bytes[3] == 'T');
    ChannelTranscript back = decode_transcript(bytes);
    CHECK(back.q == tr.q);
    CHECK(back.model_hash == tr.model_hash);
    CHECK(back.x == tr.x);
    CHECK(back.c.empty());
    CHECK(back.y.empty());
    CHECK(back.z == tr.z);

    bytes.resize(bytes.size() - 1);
    CHECK_THROWS(decode_transcript(bytes));
}

TEST_CASE("symbol files") {
    std::vector<uint16_t> syms = {0, 1, 65535, 513};
    auto bytes = encode_symbols(syms);
    REQUIRE(bytes.size() == 8);
    CHECK(bytes[4] == 0xFF);
    CHECK(bytes[5] == 0xFF);
    CHECK(bytes[6] == 0x01);  // 513 little-endian
    CHECK(bytes[7] == 0x02);
    CHECK(decode_symbols(bytes) == syms);
    bytes.push_back(0);
    CHECK_THROWS(decode_symbols(bytes));
}

TEST_CASE("file helpers") {
    std::string path = "/tmp/plhm_io_test.bin";
    std::vector<uint8_t> data = {0, 255, 17, 3};
    write_file(path, data);
    CHECK(read_file(path) == data);
    std::string tpath = "/tmp/plhm_io_test.txt";
    write_text_file(tpath, "two\nlines\n");
    CHECK(read_text_file(tpath) == "two\nlines\n");
    std::remove(path.c_str());
    std::remove(tpath.c_str());
    CHECK_THROWS(read_file("/tmp/plhm_io_test_does_not_exist.bin"));
}

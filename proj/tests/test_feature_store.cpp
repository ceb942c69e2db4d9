#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "groundprobe/feature_store.hpp"

using namespace groundprobe;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "groundprobe_test_feature_store";
    fs::create_directories(dir);
    return dir / name;
}

HashId id_of(std::uint8_t tag) {
    HashId id{};
    id[0] = tag;
    id[15] = static_cast<std::uint8_t>(0xA0 | tag);
    return id;
}

FeatureRecord record(std::uint8_t tag, View view, Label label, std::uint32_t d, Split split = Split::train) {
    FeatureRecord r;
    r.hash_id = id_of(tag);
    r.view = view;
    r.label = label;
    r.split = split;
    for (std::uint32_t j = 0; j < d; ++j) r.vector.push_back(static_cast<float>(tag) + 0.25f * static_cast<float>(j));
    return r;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorKind::validation;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(FeatureFile, EmptyFileIsHeaderOnly) {
    const auto path = scratch("empty.feat");
    write_feature_file(path, 8, std::vector<FeatureRecord>{});
    EXPECT_EQ(fs::file_size(path), kFeatureHeaderSize);
    EXPECT_EQ(kFeatureHeaderSize, 38u);
    const auto header = read_feature_header(path);
    EXPECT_EQ(header.count, 0u);
    EXPECT_EQ(header.d_h, 8u);
    EXPECT_EQ(header.version, kFeatureVersion);
    EXPECT_TRUE(read_feature_file(path).records.empty());
}

TEST(FeatureFile, RoundTripPreservesEverything) {
    const auto path = scratch("three.feat");
    std::vector<FeatureRecord> in{record(1, View::base, Label::correct, 5),
                                  record(2, View::base, Label::incorrect, 5, Split::val),
                                  record(3, View::base, Label::unlabeled, 5, Split::test)};
    in[0].vector[2] = -std::numeric_limits<float>::max();
    in[1].vector[4] = std::numeric_limits<float>::denorm_min();
    write_feature_file(path, 5, in);
    EXPECT_EQ(fs::file_size(path), kFeatureHeaderSize + 3 * feature_record_stride(5));
    const auto out = read_feature_file(path);
    EXPECT_EQ(out.d_h, 5u);
    EXPECT_EQ(out.records, in);
}

TEST(FeatureFile, LittleEndianLayout) {
    const auto path = scratch("layout.feat");
    write_feature_file(path, 1, std::vector<FeatureRecord>{record(7, View::blank, Label::correct, 1, Split::val)});
    const auto b = file_bytes(path);
    EXPECT_EQ(std::string(b.begin(), b.begin() + 8), "VLCBFS01");
    EXPECT_EQ(b[8], 1);   // version
    EXPECT_EQ(b[10], 1);  // d_h low byte
    EXPECT_EQ(b[14], 1);  // count low byte
    const std::size_t rec = kFeatureHeaderSize;
    EXPECT_EQ(b[rec], 7);
    EXPECT_EQ(b[rec + 16], 1);  // view
    EXPECT_EQ(b[rec + 17], 1);  // label
    EXPECT_EQ(b[rec + 18], 1);  // split
    EXPECT_EQ(b[rec + 19], 0);  // reserved
}

TEST(FeatureFile, RejectsNonFiniteOnWrite) {
    auto r = record(1, View::base, Label::correct, 4);
    r.vector[1] = std::nanf("");
    EXPECT_EQ(kind_of([&] { write_feature_file(scratch("nan.feat"), 4, std::vector<FeatureRecord>{r}); }),
              ErrorKind::validation);
    r.vector[1] = std::numeric_limits<float>::infinity();
    EXPECT_EQ(kind_of([&] { write_feature_file(scratch("inf.feat"), 4, std::vector<FeatureRecord>{r}); }),
              ErrorKind::validation);
}

TEST(FeatureFile, RejectsBadRecordsOnWrite) {
    auto r = record(1, View::base, Label::correct, 4);
    EXPECT_EQ(kind_of([&] { write_feature_file(scratch("len.feat"), 5, std::vector<FeatureRecord>{r}); }),
              ErrorKind::format);
    r.label = Label::unlabeled;
    EXPECT_EQ(kind_of([&] { write_feature_file(scratch("unl.feat"), 4, std::vector<FeatureRecord>{r}); }),
              ErrorKind::validation);
}

TEST(FeatureFile, ReadErrors) {
    const auto good = scratch("good.feat");
    write_feature_file(good, 3, std::vector<FeatureRecord>{record(1, View::base, Label::correct, 3),
                                                           record(2, View::base, Label::incorrect, 3)});
    const auto bytes = file_bytes(good);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    put_bytes(scratch("magic.feat"), bad_magic);
    EXPECT_EQ(kind_of([] { read_feature_file(scratch("magic.feat")); }), ErrorKind::format);

    auto truncated = bytes;
    truncated.pop_back();
    put_bytes(scratch("trunc.feat"), truncated);
    EXPECT_EQ(kind_of([] { read_feature_file(scratch("trunc.feat")); }), ErrorKind::truncation);

    auto header_only = std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 20);
    put_bytes(scratch("hdr.feat"), header_only);
    EXPECT_EQ(kind_of([] { read_feature_file(scratch("hdr.feat")); }), ErrorKind::truncation);

    auto trailing = bytes;
    trailing.push_back(0);
    put_bytes(scratch("trail.feat"), trailing);
    EXPECT_EQ(kind_of([] { read_feature_file(scratch("trail.feat")); }), ErrorKind::format);

    auto nan_payload = bytes;
    const std::size_t first_float = kFeatureHeaderSize + 20;
    nan_payload[first_float + 2] = 0xC0;
    nan_payload[first_float + 3] = 0x7F;
    put_bytes(scratch("nanread.feat"), nan_payload);
    EXPECT_EQ(kind_of([] { read_feature_file(scratch("nanread.feat")); }), ErrorKind::validation);

    EXPECT_EQ(kind_of([] { read_feature_file(scratch("does_not_exist.feat")); }), ErrorKind::io);
}

TEST(JoinViews, FullOverlapKeepsBaseOrder) {
    const std::vector<FeatureRecord> base{record(1, View::base, Label::correct, 2), record(2, View::base, Label::incorrect, 2)};
    const std::vector<FeatureRecord> blank{record(2, View::blank, Label::incorrect, 2), record(1, View::blank, Label::correct, 2)};
    const auto j = join_views(base, blank);
    ASSERT_EQ(j.pairs.size(), 2u);
    EXPECT_EQ(j.pairs[0].hash_id, id_of(1));
    EXPECT_EQ(j.pairs[1].hash_id, id_of(2));
    EXPECT_EQ(j.pairs[0].h_blank, blank[1].vector);
    EXPECT_TRUE(j.unmatched_base.empty());
    EXPECT_TRUE(j.unmatched_blank.empty());
}

TEST(JoinViews, PartialOverlapReportsUnmatched) {
    const std::vector<FeatureRecord> base{record(1, View::base, Label::correct, 2), record(2, View::base, Label::incorrect, 2)};
    const std::vector<FeatureRecord> blank{record(2, View::blank, Label::incorrect, 2), record(9, View::blank, Label::correct, 2)};
    const auto j = join_views(base, blank);
    ASSERT_EQ(j.pairs.size(), 1u);
    EXPECT_EQ(j.pairs[0].hash_id, id_of(2));
    ASSERT_EQ(j.unmatched_base.size(), 1u);
    EXPECT_EQ(j.unmatched_base[0], id_of(1));
    ASSERT_EQ(j.unmatched_blank.size(), 1u);
    EXPECT_EQ(j.unmatched_blank[0], id_of(9));
}

TEST(JoinViews, DuplicatesAreAmbiguous) {
    const std::vector<FeatureRecord> dup{record(1, View::base, Label::correct, 2), record(1, View::base, Label::correct, 2)};
    const std::vector<FeatureRecord> one{record(1, View::blank, Label::correct, 2)};
    EXPECT_EQ(kind_of([&] { join_views(dup, one); }), ErrorKind::ambiguity);
    EXPECT_EQ(kind_of([&] { join_views(one, dup); }), ErrorKind::ambiguity);
}

TEST(JoinViews, ConflictingLabelsAndDimensions) {
    const std::vector<FeatureRecord> base{record(1, View::base, Label::correct, 2)};
    EXPECT_EQ(kind_of([&] { join_views(base, std::vector<FeatureRecord>{record(1, View::blank, Label::incorrect, 2)}); }),
              ErrorKind::validation);
    EXPECT_EQ(kind_of([&] { join_views(base, std::vector<FeatureRecord>{record(1, View::blank, Label::correct, 3)}); }),
              ErrorKind::format);
}

TEST(JoinViews, ManifestSuppliesDataset) {
    Manifest m;
    ManifestEntry e;
    e.hash_id_hex = to_hex(id_of(1));
    e.dataset = "gqa";
    m.add(e);
    const auto j = join_views(std::vector<FeatureRecord>{record(1, View::base, Label::correct, 2)},
                              std::vector<FeatureRecord>{record(1, View::blank, Label::correct, 2)}, &m);
    EXPECT_EQ(j.pairs.at(0).dataset, "gqa");
}

TEST(ClassCounts, Examples) {
    std::vector<FeatureRecord> records;
    for (int i = 0; i < 15495; ++i) records.push_back({id_of(0), "", View::base, Split::train, Label::correct, {}});
    for (int i = 0; i < 4505; ++i) records.push_back({id_of(0), "", View::base, Split::train, Label::incorrect, {}});
    EXPECT_EQ(class_counts(records), (ClassCounts{15495, 4505}));

    std::vector<FeatureRecord> ten(10, FeatureRecord{id_of(0), "", View::base, Split::train, Label::correct, {}});
    EXPECT_EQ(class_counts(ten), (ClassCounts{10, 0}));

    const std::vector<FeatureRecord> three{record(1, View::base, Label::correct, 1), record(2, View::base, Label::incorrect, 1),
                                           record(3, View::base, Label::correct, 1)};
    EXPECT_EQ(class_counts(three), (ClassCounts{2, 1}));

    const std::vector<FeatureRecord> unlabeled{record(1, View::base, Label::unlabeled, 1, Split::test)};
    EXPECT_EQ(kind_of([&] { class_counts(unlabeled); }), ErrorKind::validation);
}

TEST(Manifest, RoundTripAndValidation) {
    Manifest m;
    ManifestEntry a;
    a.hash_id_hex = to_hex(id_of(1));
    a.dataset = "vqa";
    a.category = "color";
    a.flip_swap = 1;
    a.dp_swap = 0.25;
    a.top1_prob = 0.9;
    ManifestEntry b;
    b.hash_id_hex = to_hex(id_of(2));
    m.add(a);
    m.add(b);
    const auto path = scratch("manifest.jsonl");
    write_manifest(path, m);
    const auto back = read_manifest(path);
    EXPECT_EQ(back.entries(), m.entries());
    ASSERT_NE(back.find(id_of(1)), nullptr);
    EXPECT_EQ(back.find(id_of(1))->dataset, "vqa");
    EXPECT_EQ(back.find(id_of(3)), nullptr);

    EXPECT_EQ(kind_of([&] { m.add(a); }), ErrorKind::ambiguity);
    ManifestEntry bad = b;
    bad.hash_id_hex = to_hex(id_of(4));
    bad.flip_swap = 2;
    EXPECT_EQ(kind_of([&] { m.add(bad); }), ErrorKind::validation);
    EXPECT_EQ(kind_of([] { parse_manifest("{\"dataset\": \"x\"}\n"); }), ErrorKind::format);
    EXPECT_EQ(kind_of([] { parse_manifest("not json\n"); }), ErrorKind::format);
}

TEST(HashId, HexRoundTrip) {
    const HashId id = id_of(0x5C);
    EXPECT_EQ(to_hex(id).size(), 32u);
    EXPECT_EQ(hash_id_from_hex(to_hex(id)), id);
    EXPECT_THROW(hash_id_from_hex("abc"), Error);
    EXPECT_THROW(hash_id_from_hex(std::string(32, 'g')), Error);
}

TEST(Splits, SelectAndParse) {
    const std::vector<FeatureRecord> base{record(1, View::base, Label::correct, 1), record(2, View::base, Label::incorrect, 1, Split::val),
                                          record(3, View::base, Label::unlabeled, 1, Split::test)};
    std::vector<FeatureRecord> blank = base;
    for (auto& r : blank) r.view = View::blank;
    const auto j = join_views(base, blank);
    EXPECT_EQ(select_split(j.pairs, Split::val).size(), 1u);
    EXPECT_EQ(select_split(j.pairs, Split::test).at(0).hash_id, id_of(3));
    EXPECT_EQ(split_from_string("val"), Split::val);
    EXPECT_THROW(split_from_string("dev"), Error);
}

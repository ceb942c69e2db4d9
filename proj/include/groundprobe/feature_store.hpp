#pragma once
// Hidden-state feature files, the JSON-lines sidecar manifest, and base/blank
// view pairing.
//
// Feature file layout (all integers little-endian):
//
//   offset  size  field
//   0       8     magic "VLCBFS01"
//   8       2     format version (u16, = 1)
//   10      4     d_h (u32)
//   14      8     record count (u64)
//   22      16    reserved, zero
//   38      ...   records, fixed stride 20 + 4 * d_h:
//                   16 hash_id | u8 view (0 base, 1 blank)
//                   u8 label (0, 1, 255 unlabeled) | u8 split (0 train, 1 val, 2 test)
//                   u8 reserved (0) | d_h x binary32

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "groundprobe/detail/binary_io.hpp"
#include "groundprobe/error.hpp"

namespace groundprobe {

enum class View : std::uint8_t { base = 0, blank = 1 };
enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };
enum class Label : std::uint8_t { incorrect = 0, correct = 1, unlabeled = 255 };

using HashId = std::array<std::uint8_t, 16>;

inline std::string to_hex(const HashId& id) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(32);
    for (const auto byte : id) {
        out.push_back(digits[byte >> 4]);
        out.push_back(digits[byte & 0xF]);
    }
    return out;
}

inline HashId hash_id_from_hex(std::string_view hex) {
    require(hex.size() == 32, ErrorKind::validation, "hash_id_hex must be 32 hex characters: '" + std::string(hex) + "'");
    auto nibble = [&](char c) -> std::uint8_t {
        if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
        fail(ErrorKind::validation, "hash_id_hex must be lowercase hex: '" + std::string(hex) + "'");
    };
    HashId id{};
    for (std::size_t i = 0; i < 16; ++i) {
        id[i] = static_cast<std::uint8_t>((nibble(hex[2 * i]) << 4) | nibble(hex[2 * i + 1]));
    }
    return id;
}

inline const char* to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline Split split_from_string(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    fail(ErrorKind::validation, "unknown split '" + std::string(name) + "'");
}

inline int label_value(Label label) {
    require(label != Label::unlabeled, ErrorKind::validation, "record is unlabeled");
    return label == Label::correct ? 1 : 0;
}

struct FeatureRecord {
    HashId hash_id{};
    std::string lvlm_id;  // carried by the run, not by the binary format
    View view = View::base;
    Split split = Split::train;
    Label label = Label::unlabeled;
    std::vector<float> vector;

    friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

struct FeatureFile {
    std::uint32_t d_h = 0;
    std::vector<FeatureRecord> records;
};

struct FeatureHeader {
    std::uint16_t version = 0;
    std::uint32_t d_h = 0;
    std::uint64_t count = 0;
};

inline constexpr std::string_view kFeatureMagic = "VLCBFS01";
inline constexpr std::uint16_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderSize = 8 + 2 + 4 + 8 + 16;

constexpr std::size_t feature_record_stride(std::uint32_t d_h) { return 20 + 4 * static_cast<std::size_t>(d_h); }

namespace detail {

inline void validate_record(const FeatureRecord& record, std::uint32_t d_h, std::size_t index) {
    if (record.vector.size() != d_h) {
        fail(ErrorKind::format, "record " + std::to_string(index) + " has length " + std::to_string(record.vector.size()) +
                                    ", file d_h is " + std::to_string(d_h));
    }
    for (std::size_t j = 0; j < record.vector.size(); ++j) {
        if (!std::isfinite(record.vector[j])) {
            fail(ErrorKind::validation,
                 "record " + std::to_string(index) + " has non-finite element at position " + std::to_string(j));
        }
    }
    const auto view = static_cast<std::uint8_t>(record.view);
    const auto split = static_cast<std::uint8_t>(record.split);
    const auto label = static_cast<std::uint8_t>(record.label);
    require(view <= 1, ErrorKind::validation, "record " + std::to_string(index) + " has invalid view");
    require(split <= 2, ErrorKind::validation, "record " + std::to_string(index) + " has invalid split");
    require(label <= 1 || label == 255, ErrorKind::validation, "record " + std::to_string(index) + " has invalid label");
    if (record.split != Split::test && record.label == Label::unlabeled) {
        fail(ErrorKind::validation, "record " + std::to_string(index) + " in split " + to_string(record.split) +
                                        " must be labeled");
    }
}

inline FeatureHeader decode_header(Reader& in) {
    const auto magic = in.get_raw(8);
    if (std::string_view(reinterpret_cast<const char*>(magic.data()), 8) != kFeatureMagic) {
        fail(ErrorKind::format, "bad magic: not a feature file");
    }
    FeatureHeader header;
    header.version = in.get_le<std::uint16_t>();
    require(header.version == kFeatureVersion, ErrorKind::format,
            "unsupported feature file version " + std::to_string(header.version));
    header.d_h = in.get_le<std::uint32_t>();
    header.count = in.get_le<std::uint64_t>();
    for (const auto byte : in.get_raw(16)) {
        require(byte == 0, ErrorKind::format, "reserved header bytes must be zero");
    }
    return header;
}

}  // namespace detail

inline detail::Bytes encode_feature_file(std::uint32_t d_h, std::span<const FeatureRecord> records) {
    for (std::size_t i = 0; i < records.size(); ++i) detail::validate_record(records[i], d_h, i);
    detail::Bytes out;
    out.reserve(kFeatureHeaderSize + records.size() * feature_record_stride(d_h));
    detail::put_raw(out, kFeatureMagic);
    detail::put_le<std::uint16_t>(out, kFeatureVersion);
    detail::put_le<std::uint32_t>(out, d_h);
    detail::put_le<std::uint64_t>(out, records.size());
    out.insert(out.end(), 16, 0);
    for (const auto& record : records) {
        out.insert(out.end(), record.hash_id.begin(), record.hash_id.end());
        out.push_back(static_cast<std::uint8_t>(record.view));
        out.push_back(static_cast<std::uint8_t>(record.label));
        out.push_back(static_cast<std::uint8_t>(record.split));
        out.push_back(0);
        for (const float value : record.vector) detail::put_f32(out, value);
    }
    return out;
}

inline FeatureFile decode_feature_file(std::span<const std::uint8_t> bytes, const std::string& lvlm_id = {}) {
    if (bytes.size() < kFeatureHeaderSize) {
        if (bytes.size() >= 8 && std::string_view(reinterpret_cast<const char*>(bytes.data()), 8) == kFeatureMagic) {
            fail(ErrorKind::truncation, "feature file header is truncated");
        }
        fail(ErrorKind::format, "bad magic: not a feature file");
    }
    detail::Reader in(bytes);
    const FeatureHeader header = detail::decode_header(in);
    const std::size_t stride = feature_record_stride(header.d_h);
    const std::size_t body = bytes.size() - kFeatureHeaderSize;
    if (header.count > body / stride || body < header.count * stride) {
        fail(ErrorKind::truncation, "declared " + std::to_string(header.count) + " records of " + std::to_string(stride) +
                                        " bytes but only " + std::to_string(body) + " bytes follow the header");
    }
    if (body != header.count * stride) {
        fail(ErrorKind::format, "trailing bytes after the last declared record");
    }

    FeatureFile file;
    file.d_h = header.d_h;
    file.records.reserve(header.count);
    for (std::uint64_t i = 0; i < header.count; ++i) {
        FeatureRecord record;
        const auto id = in.get_raw(16);
        std::copy(id.begin(), id.end(), record.hash_id.begin());
        record.lvlm_id = lvlm_id;
        const auto view = in.get_le<std::uint8_t>();
        const auto label = in.get_le<std::uint8_t>();
        const auto split = in.get_le<std::uint8_t>();
        const auto reserved = in.get_le<std::uint8_t>();
        require(reserved == 0, ErrorKind::format, "record " + std::to_string(i) + " reserved byte must be zero");
        record.view = static_cast<View>(view);
        record.label = static_cast<Label>(label);
        record.split = static_cast<Split>(split);
        record.vector.resize(header.d_h);
        for (auto& value : record.vector) value = in.get_f32();
        detail::validate_record(record, header.d_h, i);
        file.records.push_back(std::move(record));
    }
    return file;
}

inline void write_feature_file(const std::filesystem::path& path, std::uint32_t d_h, std::span<const FeatureRecord> records) {
    const auto bytes = encode_feature_file(d_h, records);
    detail::write_file_bytes(path, bytes);
}

inline FeatureFile read_feature_file(const std::filesystem::path& path, const std::string& lvlm_id = {}) {
    const auto bytes = detail::read_file_bytes(path);
    return decode_feature_file(bytes, lvlm_id);
}

// Header only; does not validate the record body.
inline FeatureHeader read_feature_header(const std::filesystem::path& path) {
    const auto bytes = detail::read_file_bytes(path);
    if (bytes.size() < kFeatureHeaderSize) fail(ErrorKind::truncation, "feature file header is truncated");
    detail::Reader in(bytes);
    return detail::decode_header(in);
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestEntry {
    std::string hash_id_hex;
    std::string dataset;
    std::string category;
    std::optional<int> flip_swap;
    std::optional<double> dp_swap;
    // Probability the model gave its real-image top-1 token; absent when not measured.
    std::optional<double> top1_prob;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

inline void validate(const ManifestEntry& entry) {
    (void)hash_id_from_hex(entry.hash_id_hex);
    if (entry.flip_swap) {
        require(*entry.flip_swap == 0 || *entry.flip_swap == 1, ErrorKind::validation,
                "flip_swap must be 0 or 1 for " + entry.hash_id_hex);
    }
    if (entry.dp_swap) {
        require(*entry.dp_swap >= 0.0 && *entry.dp_swap <= 1.0, ErrorKind::validation,
                "dp_swap must lie in [0,1] for " + entry.hash_id_hex);
    }
    if (entry.top1_prob) {
        require(*entry.top1_prob >= 0.0 && *entry.top1_prob <= 1.0, ErrorKind::validation,
                "top1_prob must lie in [0,1] for " + entry.hash_id_hex);
    }
}

inline nlohmann::json to_json(const ManifestEntry& entry) {
    nlohmann::json j;
    j["hash_id_hex"] = entry.hash_id_hex;
    j["dataset"] = entry.dataset;
    j["category"] = entry.category;
    if (entry.flip_swap) j["flip_swap"] = *entry.flip_swap;
    if (entry.dp_swap) j["dp_swap"] = *entry.dp_swap;
    if (entry.top1_prob) j["top1_prob"] = *entry.top1_prob;
    return j;
}

inline ManifestEntry manifest_entry_from_json(const nlohmann::json& j) {
    require(j.is_object(), ErrorKind::format, "manifest line is not a JSON object");
    require(j.contains("hash_id_hex") && j["hash_id_hex"].is_string(), ErrorKind::format,
            "manifest line lacks string field hash_id_hex");
    ManifestEntry entry;
    entry.hash_id_hex = j["hash_id_hex"].get<std::string>();
    if (j.contains("dataset")) entry.dataset = j["dataset"].get<std::string>();
    if (j.contains("category")) entry.category = j["category"].get<std::string>();
    if (j.contains("flip_swap") && !j["flip_swap"].is_null()) entry.flip_swap = j["flip_swap"].get<int>();
    if (j.contains("dp_swap") && !j["dp_swap"].is_null()) entry.dp_swap = j["dp_swap"].get<double>();
    if (j.contains("top1_prob") && !j["top1_prob"].is_null()) entry.top1_prob = j["top1_prob"].get<double>();
    validate(entry);
    return entry;
}

// Entries in file order plus a lookup by hash_id_hex.
class Manifest {
public:
    void add(ManifestEntry entry) {
        validate(entry);
        const auto [it, inserted] = index_.emplace(entry.hash_id_hex, entries_.size());
        require(inserted, ErrorKind::ambiguity, "duplicate manifest entry for " + entry.hash_id_hex);
        entries_.push_back(std::move(entry));
    }

    [[nodiscard]] const ManifestEntry* find(const std::string& hash_id_hex) const {
        const auto it = index_.find(hash_id_hex);
        return it == index_.end() ? nullptr : &entries_[it->second];
    }
    [[nodiscard]] const ManifestEntry* find(const HashId& id) const { return find(to_hex(id)); }

    [[nodiscard]] const std::vector<ManifestEntry>& entries() const { return entries_; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }

private:
    std::vector<ManifestEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline Manifest parse_manifest(std::string_view text) {
    Manifest manifest;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = std::min(text.find('\n', start), text.size());
        std::string_view line = text.substr(start, end - start);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") != std::string_view::npos) {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                fail(ErrorKind::format, "manifest line " + std::to_string(line_no) + ": " + e.what());
            }
            manifest.add(manifest_entry_from_json(j));
        }
        if (end == text.size()) break;
        start = end + 1;
    }
    return manifest;
}

inline std::string format_manifest(const Manifest& manifest) {
    std::string out;
    for (const auto& entry : manifest.entries()) {
        out += to_json(entry).dump();
        out += '\n';
    }
    return out;
}

inline Manifest read_manifest(const std::filesystem::path& path) { return parse_manifest(detail::read_file_text(path)); }

inline void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
    detail::write_file_text(path, format_manifest(manifest));
}

// ---------------------------------------------------------------------------
// View pairing

struct PairedSample {
    HashId hash_id{};
    std::vector<float> h_base;
    std::vector<float> h_blank;
    Label y = Label::unlabeled;
    Split split = Split::train;
    std::string dataset;
};

struct JoinResult {
    std::vector<PairedSample> pairs;   // base-file order
    std::vector<HashId> unmatched_base;
    std::vector<HashId> unmatched_blank;
};

namespace detail {
struct HashIdHasher {
    std::size_t operator()(const HashId& id) const noexcept {
        std::uint64_t lo = 0;
        std::memcpy(&lo, id.data(), 8);
        return static_cast<std::size_t>(lo);
    }
};
}  // namespace detail

inline JoinResult join_views(std::span<const FeatureRecord> base, std::span<const FeatureRecord> blank,
                             const Manifest* manifest = nullptr) {
    std::unordered_map<HashId, std::size_t, detail::HashIdHasher> blank_index;
    blank_index.reserve(blank.size());
    for (std::size_t i = 0; i < blank.size(); ++i) {
        const auto [it, inserted] = blank_index.emplace(blank[i].hash_id, i);
        require(inserted, ErrorKind::ambiguity, "duplicate hash_id in blank view: " + to_hex(blank[i].hash_id));
    }
    std::unordered_set<HashId, detail::HashIdHasher> seen_base;
    seen_base.reserve(base.size());

    JoinResult result;
    for (const auto& b : base) {
        require(seen_base.insert(b.hash_id).second, ErrorKind::ambiguity,
                "duplicate hash_id in base view: " + to_hex(b.hash_id));
        const auto it = blank_index.find(b.hash_id);
        if (it == blank_index.end()) {
            result.unmatched_base.push_back(b.hash_id);
            continue;
        }
        const auto& z = blank[it->second];
        require(b.vector.size() == z.vector.size(), ErrorKind::format,
                "view dimension mismatch for " + to_hex(b.hash_id));
        if (b.label != Label::unlabeled && z.label != Label::unlabeled && b.label != z.label) {
            fail(ErrorKind::validation, "base and blank labels disagree for " + to_hex(b.hash_id));
        }
        PairedSample pair;
        pair.hash_id = b.hash_id;
        pair.h_base = b.vector;
        pair.h_blank = z.vector;
        pair.y = b.label;
        pair.split = b.split;
        if (manifest != nullptr) {
            if (const auto* entry = manifest->find(b.hash_id)) pair.dataset = entry->dataset;
        }
        result.pairs.push_back(std::move(pair));
    }
    for (const auto& z : blank) {
        if (!seen_base.contains(z.hash_id)) result.unmatched_blank.push_back(z.hash_id);
    }
    return result;
}

struct ClassCounts {
    std::size_t n_plus = 0;
    std::size_t n_minus = 0;

    friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

template <class Range, class LabelOf>
ClassCounts class_counts(const Range& items, LabelOf label_of) {
    ClassCounts counts;
    for (const auto& item : items) {
        const Label label = label_of(item);
        require(label != Label::unlabeled, ErrorKind::validation, "class_counts requires labeled records");
        if (label == Label::correct) {
            ++counts.n_plus;
        } else {
            ++counts.n_minus;
        }
    }
    return counts;
}

inline ClassCounts class_counts(std::span<const FeatureRecord> records) {
    return class_counts(records, [](const FeatureRecord& r) { return r.label; });
}

inline ClassCounts class_counts(std::span<const PairedSample> samples) {
    return class_counts(samples, [](const PairedSample& s) { return s.y; });
}

inline std::vector<PairedSample> select_split(std::span<const PairedSample> samples, Split split) {
    std::vector<PairedSample> out;
    for (const auto& s : samples) {
        if (s.split == split) out.push_back(s);
    }
    return out;
}

}  // namespace groundprobe

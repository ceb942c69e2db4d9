#pragma once
// Plumbing shared by the CLI subcommands: exit codes, run manifests with
// input digests, config-file resolution and small CSV readers.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "groundprobe/error.hpp"

namespace groundprobe::cli {

inline constexpr const char* kToolVersion = "0.1.0";

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int internal = 1;
inline constexpr int usage = 2;
inline constexpr int validation = 3;
inline constexpr int io = 4;
inline constexpr int undefined_metric = 5;
inline constexpr int format = 6;
inline constexpr int truncation = 7;
inline constexpr int ambiguity = 8;
}  // namespace exit_code

inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::validation: return exit_code::validation;
        case ErrorKind::io: return exit_code::io;
        case ErrorKind::undefined_metric: return exit_code::undefined_metric;
        case ErrorKind::format: return exit_code::format;
        case ErrorKind::truncation: return exit_code::truncation;
        case ErrorKind::ambiguity: return exit_code::ambiguity;
    }
    return exit_code::internal;
}

inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string() + " for hashing");
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    require(ctx != nullptr, ErrorKind::io, "cannot allocate digest context");
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buffer(1 << 16);
    while (in) {
        in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buffer.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    return hex.str();
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

// One per command invocation; written next to the outputs.
class RunManifest {
public:
    RunManifest(std::string command, std::vector<std::string> argv)
        : command_(std::move(command)), argv_(std::move(argv)), started_(utc_timestamp()) {}

    void input(const std::filesystem::path& path) {
        inputs_.push_back({{"path", path.string()}, {"sha256", sha256_file(path)}});
    }
    void output(const std::filesystem::path& path) { outputs_.push_back(path.string()); }
    void config(nlohmann::json c) { config_ = std::move(c); }
    void seeds(std::vector<std::uint64_t> s) { seeds_ = std::move(s); }

    void write(const std::filesystem::path& path) const {
        nlohmann::json j{{"command", command_},
                         {"argv", argv_},
                         {"config", config_},
                         {"inputs", inputs_},
                         {"seeds", seeds_},
                         {"tool_version", kToolVersion},
                         {"started_at", started_},
                         {"finished_at", utc_timestamp()},
                         {"outputs", outputs_}};
        std::ofstream out(path, std::ios::binary);
        require(static_cast<bool>(out), ErrorKind::io, "cannot write " + path.string());
        out << j.dump(2) << "\n";
    }

private:
    std::string command_;
    std::vector<std::string> argv_;
    nlohmann::json config_ = nlohmann::json::object();
    nlohmann::json inputs_ = nlohmann::json::array();
    std::vector<std::uint64_t> seeds_;
    std::vector<std::string> outputs_;
    std::string started_;
};

// flag > config file > default. Config keys are flag names without the
// leading dashes, with '-' replaced by '_'.
class Resolver {
public:
    Resolver(const CLI::App& app, nlohmann::json config) : app_(app), config_(std::move(config)) {}

    template <class T>
    void resolve(const std::string& flag, T& value) const {
        const auto* opt = app_.get_option_no_throw("--" + flag);
        if (opt != nullptr && opt->count() > 0) return;
        std::string key = flag;
        std::replace(key.begin(), key.end(), '-', '_');
        if (config_.contains(key)) {
            try {
                value = config_.at(key).get<T>();
            } catch (const nlohmann::json::exception& e) {
                fail(ErrorKind::format, "config key '" + key + "': " + e.what());
            }
        }
    }

private:
    const CLI::App& app_;
    nlohmann::json config_;
};

inline nlohmann::json load_config(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open config file " + path);
    try {
        auto j = nlohmann::json::parse(in);
        require(j.is_object(), ErrorKind::format, "config file must hold a JSON object");
        return j;
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorKind::format, "config file " + path + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
    std::vector<std::string> header;  // empty when the first row is numeric
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::optional<std::size_t> column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        return std::nullopt;
    }

    // By name when the file has a header, otherwise by documented position.
    [[nodiscard]] std::optional<std::size_t> column_or(const std::string& name, std::size_t position) const {
        if (!header.empty()) return column(name);
        if (!rows.empty() && position < rows.front().size()) return position;
        return std::nullopt;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline bool is_number(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (first) {
            first = false;
            const bool numeric = std::all_of(cells.begin(), cells.end(), [](const std::string& c) { return is_number(c); });
            if (!numeric) {
                table.header = std::move(cells);
                continue;
            }
        }
        table.rows.push_back(std::move(cells));
    }
    return table;
}

inline double parse_real(const std::string& s, const std::string& what) {
    require(is_number(s), ErrorKind::format, what + ": '" + s + "' is not a number");
    return std::strtod(s.c_str(), nullptr);
}

// A numeric column by name (or `position` in a headerless file), or the last
// column when `name` is empty.
inline std::vector<double> numeric_column(const CsvTable& table, const std::string& name,
                                          const std::filesystem::path& path, std::size_t position = 0) {
    std::size_t col = 0;
    if (!name.empty()) {
        const auto found = table.column_or(name, position);
        require(found.has_value(), ErrorKind::format, path.string() + " has no column '" + name + "'");
        col = *found;
    } else {
        require(!table.rows.empty(), ErrorKind::validation, path.string() + " has no data rows");
        col = table.rows.front().size() - 1;
    }
    std::vector<double> out;
    for (const auto& row : table.rows) {
        require(col < row.size(), ErrorKind::format, path.string() + ": short row");
        out.push_back(parse_real(row[col], path.string()));
    }
    return out;
}

}  // namespace groundprobe::cli

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace irsce {

// Round-trip-exact decimal rendering of a double ("inf"/"-inf"/"nan" for the
// specials). All file formats and CSV output use this so that equal doubles
// always serialize to equal bytes.
std::string fmt_double(double value);
std::string fmt_double_list(const std::vector<double>& values);
std::string fmt_int_list(const std::vector<int>& values);

// Strict parsers; `context` names the offending key in error messages.
double parse_double(const std::string& text, const std::string& context);
long long parse_int(const std::string& text, const std::string& context);
std::uint64_t parse_u64(const std::string& text, const std::string& context);
bool parse_bool(const std::string& text, const std::string& context);
std::vector<double> parse_double_list(const std::string& text, const std::string& context);
std::vector<int> parse_int_list(const std::string& text, const std::string& context);

std::string trim(const std::string& text);

// Ordered "key = value" block. Keys keep insertion order so written files are
// deterministic.
class KeyValueBlock {
public:
    void set(const std::string& key, const std::string& value);
    bool contains(const std::string& key) const;
    // Throws IoError when the key is missing.
    const std::string& get(const std::string& key) const;
    std::optional<std::string> find(const std::string& key) const;
    const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

    // Parses one "key = value" line; returns false for blank/comment lines.
    static bool parse_line(const std::string& line, std::string& key, std::string& value);

private:
    std::vector<std::pair<std::string, std::string>> items_;
};

// Reads "key = value" lines up to the first blank line (header terminator)
// or end of stream.
KeyValueBlock read_kv_block(std::istream& in);
void write_kv_block(std::ostream& out, const KeyValueBlock& block);

// Little-endian float32 payload helpers (byte order pinned regardless of the
// host).
void write_f32(std::ostream& out, const float* values, std::size_t count);
void read_f32(std::istream& in, float* values, std::size_t count, const std::string& context);

} // namespace irsce

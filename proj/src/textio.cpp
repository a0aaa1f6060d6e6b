#include "irsce/textio.hpp"

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "irsce/errors.hpp"

namespace irsce {

std::string fmt_double(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    // Prefer the shortest representation that still parses back exactly.
    for (int precision = 1; precision < 17; ++precision) {
        char shorter[40];
        std::snprintf(shorter, sizeof(shorter), "%.*g", precision, value);
        if (std::strtod(shorter, nullptr) == value) return shorter;
    }
    return buf;
}

std::string fmt_double_list(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += fmt_double(values[i]);
    }
    return out;
}

std::string fmt_int_list(const std::vector<int>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(values[i]);
    }
    return out;
}

std::string trim(const std::string& text) {
    std::size_t begin = 0, end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
    return text.substr(begin, end - begin);
}

double parse_double(const std::string& text, const std::string& context) {
    const std::string t = trim(text);
    if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
    if (t == "-inf") return -std::numeric_limits<double>::infinity();
    if (t == "nan") return std::numeric_limits<double>::quiet_NaN();
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size())
        throw ConfigError(context + ": not a number: '" + text + "'");
    return v;
}

long long parse_int(const std::string& text, const std::string& context) {
    const std::string t = trim(text);
    char* end = nullptr;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (t.empty() || end != t.c_str() + t.size())
        throw ConfigError(context + ": not an integer: '" + text + "'");
    return v;
}

std::uint64_t parse_u64(const std::string& text, const std::string& context) {
    const std::string t = trim(text);
    char* end = nullptr;
    const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
    if (t.empty() || end != t.c_str() + t.size() || t[0] == '-')
        throw ConfigError(context + ": not an unsigned integer: '" + text + "'");
    return v;
}

bool parse_bool(const std::string& text, const std::string& context) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(context + ": not a boolean: '" + text + "'");
}

namespace {
std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ',')) parts.push_back(item);
    return parts;
}
} // namespace

std::vector<double> parse_double_list(const std::string& text, const std::string& context) {
    std::vector<double> out;
    for (const auto& part : split_list(text)) out.push_back(parse_double(part, context));
    return out;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& context) {
    std::vector<int> out;
    for (const auto& part : split_list(text))
        out.push_back(static_cast<int>(parse_int(part, context)));
    return out;
}

void KeyValueBlock::set(const std::string& key, const std::string& value) {
    for (auto& item : items_) {
        if (item.first == key) {
            item.second = value;
            return;
        }
    }
    items_.emplace_back(key, value);
}

bool KeyValueBlock::contains(const std::string& key) const {
    return find(key).has_value();
}

const std::string& KeyValueBlock::get(const std::string& key) const {
    for (const auto& item : items_)
        if (item.first == key) return item.second;
    throw IoError("missing header key '" + key + "'");
}

std::optional<std::string> KeyValueBlock::find(const std::string& key) const {
    for (const auto& item : items_)
        if (item.first == key) return item.second;
    return std::nullopt;
}

bool KeyValueBlock::parse_line(const std::string& line, std::string& key, std::string& value) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') return false;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) throw IoError("malformed key-value line: '" + line + "'");
    key = trim(t.substr(0, eq));
    value = trim(t.substr(eq + 1));
    if (key.empty()) throw IoError("empty key in line: '" + line + "'");
    return true;
}

KeyValueBlock read_kv_block(std::istream& in) {
    KeyValueBlock block;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) break;
        std::string key, value;
        if (KeyValueBlock::parse_line(line, key, value)) block.set(key, value);
    }
    return block;
}

void write_kv_block(std::ostream& out, const KeyValueBlock& block) {
    for (const auto& [key, value] : block.items()) out << key << " = " << value << "\n";
    out << "\n";
}

void write_f32(std::ostream& out, const float* values, std::size_t count) {
    std::vector<unsigned char> bytes(count * 4);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t u = std::bit_cast<std::uint32_t>(values[i]);
        bytes[4 * i + 0] = static_cast<unsigned char>(u & 0xff);
        bytes[4 * i + 1] = static_cast<unsigned char>((u >> 8) & 0xff);
        bytes[4 * i + 2] = static_cast<unsigned char>((u >> 16) & 0xff);
        bytes[4 * i + 3] = static_cast<unsigned char>((u >> 24) & 0xff);
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void read_f32(std::istream& in, float* values, std::size_t count, const std::string& context) {
    std::vector<unsigned char> bytes(count * 4);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size())
        throw IoError(context + ": truncated float payload");
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * i + 0]) |
                                (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                                (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                                (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
        values[i] = std::bit_cast<float>(u);
    }
}

} // namespace irsce

#include "qdtune/codec.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "qdtune/error.hpp"

namespace qdtune {

namespace {

std::uint64_t to_little(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
    return v;
}

}  // namespace

std::string encode_f64(std::span<const double> values) {
    std::vector<unsigned char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::uint64_t word = to_little(std::bit_cast<std::uint64_t>(values[i]));
        std::memcpy(bytes.data() + 8 * i, &word, 8);
    }
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<double> decode_f64(std::string_view text, const std::string& field,
                               std::size_t expected_count) {
    if (text.size() % 4 != 0) throw ParseError(field + ": base64 length is not a multiple of 4");
    std::size_t padding = 0;
    if (!text.empty() && text.back() == '=') ++padding;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
    std::vector<unsigned char> bytes(3 * (text.size() / 4));
    const int n = EVP_DecodeBlock(bytes.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) throw ParseError(field + ": invalid base64");
    const std::size_t len = static_cast<std::size_t>(n) - padding;
    if (len % 8 != 0) throw ParseError(field + ": byte length is not a multiple of 8");
    const std::size_t count = len / 8;
    if (expected_count != static_cast<std::size_t>(-1) && count != expected_count)
        throw ParseError(field + ": expected " + std::to_string(expected_count) + " values, got " +
                         std::to_string(count));
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t word;
        std::memcpy(&word, bytes.data() + 8 * i, 8);
        out[i] = std::bit_cast<double>(to_little(word));
    }
    return out;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path.string() + ": cannot open for reading");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void write_text_file(const std::string& text, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io_error", path.string() + ": cannot open for writing");
    out << text;
    if (!out) throw Error("io_error", path.string() + ": write failed");
}

void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path) {
    write_text_file(doc.dump(1) + "\n", path);
}

const nlohmann::json& require_field(const nlohmann::json& doc, const std::string& context,
                                    const char* name) {
    if (!doc.is_object()) throw ParseError(context + ": document is not an object");
    auto it = doc.find(name);
    if (it == doc.end()) throw ParseError(context + ": missing field \"" + name + "\"");
    return *it;
}

double require_number(const nlohmann::json& doc, const std::string& context, const char* name) {
    const auto& v = require_field(doc, context, name);
    if (!v.is_number()) throw ParseError(context + ": field \"" + name + "\" is not a number");
    return v.get<double>();
}

std::string require_string(const nlohmann::json& doc, const std::string& context, const char* name) {
    const auto& v = require_field(doc, context, name);
    if (!v.is_string()) throw ParseError(context + ": field \"" + name + "\" is not a string");
    return v.get<std::string>();
}

std::size_t require_size(const nlohmann::json& doc, const std::string& context, const char* name) {
    const auto& v = require_field(doc, context, name);
    if (!v.is_number_unsigned())
        throw ParseError(context + ": field \"" + name + "\" is not a non-negative integer");
    return v.get<std::size_t>();
}

void require_schema(const nlohmann::json& doc, const std::string& context, const char* expected) {
    const std::string schema = require_string(doc, context, "schema");
    if (schema != expected)
        throw VersionError(context + ": schema \"" + schema + "\", expected \"" + expected + "\"");
}

}  // namespace qdtune

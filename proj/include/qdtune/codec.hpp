#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace qdtune {

// Base64 of the little-endian IEEE-754 bytes of each value.
std::string encode_f64(std::span<const double> values);
// Throws ParseError naming `field` on bad base64 or a length that is not a
// multiple of 8 bytes (or not equal to expected_count when given).
std::vector<double> decode_f64(std::string_view text, const std::string& field,
                               std::size_t expected_count = static_cast<std::size_t>(-1));

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& doc, const std::filesystem::path& path);
void write_text_file(const std::string& text, const std::filesystem::path& path);

// Field accessors that throw ParseError("<context>: ...") naming the field.
const nlohmann::json& require_field(const nlohmann::json& doc, const std::string& context,
                                    const char* name);
double require_number(const nlohmann::json& doc, const std::string& context, const char* name);
std::string require_string(const nlohmann::json& doc, const std::string& context, const char* name);
std::size_t require_size(const nlohmann::json& doc, const std::string& context, const char* name);
void require_schema(const nlohmann::json& doc, const std::string& context, const char* expected);

}  // namespace qdtune

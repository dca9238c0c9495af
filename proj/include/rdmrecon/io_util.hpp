#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace rdmrecon {

// SHA-256 hex digest of a byte string (OpenSSL-backed).
std::string sha256_hex(std::string_view bytes);

// Short (16 hex char) digest used to key caches and tie files together.
std::string short_hash(std::string_view bytes);

// Locale-independent, round-trip-exact double formatting (%.17g).
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

std::vector<std::uint8_t> read_binary_file(const std::string& path);
void write_binary_file(const std::string& path, const void* data, std::size_t size);

// Split into lines, dropping a trailing '\r' (files may come from anywhere).
std::vector<std::string> split_lines(std::string_view text);

// Whitespace tokenizer for the plain-text formats.
std::vector<std::string> split_fields(std::string_view line);

double parse_double(const std::string& tok, const std::string& context);
long parse_long(const std::string& tok, const std::string& context);

}  // namespace rdmrecon

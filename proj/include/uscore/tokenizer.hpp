#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace uscore {

struct TokenizedSentence {
  std::string text;
  std::vector<std::string> tokens;

  bool operator==(const TokenizedSentence&) const = default;
};

enum class TokenizerKind {
  kDefault,     // NFC, whitespace split, punctuation detached
  kWhitespace,  // plain whitespace split
};

TokenizerKind parse_tokenizer(std::string_view name);

bool is_valid_utf8(std::string_view text);

// Decodes to code points. Throws ArgumentError on malformed input.
std::u32string decode_utf8(std::string_view text);

std::string nfc_normalize(std::string_view text);

std::vector<std::string> tokenize(std::string_view text, TokenizerKind kind = TokenizerKind::kDefault);

TokenizedSentence make_sentence(std::string_view text, TokenizerKind kind = TokenizerKind::kDefault);

std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace uscore

#include "uscore/tokenizer.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "uscore/error.hpp"

namespace uscore {

namespace {

// Returns the number of bytes of the sequence starting at text[pos], or 0 when malformed.
std::size_t utf8_sequence(std::string_view text, std::size_t pos, char32_t& cp) {
  const auto byte = [&](std::size_t i) { return static_cast<unsigned char>(text[i]); };
  const unsigned char lead = byte(pos);
  std::size_t len = 0;
  char32_t min = 0;
  if (lead < 0x80) {
    cp = lead;
    return 1;
  } else if ((lead & 0xE0) == 0xC0) {
    len = 2;
    cp = lead & 0x1F;
    min = 0x80;
  } else if ((lead & 0xF0) == 0xE0) {
    len = 3;
    cp = lead & 0x0F;
    min = 0x800;
  } else if ((lead & 0xF8) == 0xF0) {
    len = 4;
    cp = lead & 0x07;
    min = 0x10000;
  } else {
    return 0;
  }
  if (pos + len > text.size()) return 0;
  for (std::size_t i = 1; i < len; ++i) {
    const unsigned char c = byte(pos + i);
    if ((c & 0xC0) != 0x80) return 0;
    cp = (cp << 6) | (c & 0x3F);
  }
  if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return 0;
  return len;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace

TokenizerKind parse_tokenizer(std::string_view name) {
  if (name == "default") return TokenizerKind::kDefault;
  if (name == "whitespace") return TokenizerKind::kWhitespace;
  throw ArgumentError("unknown tokenizer '" + std::string(name) + "' (expected default|whitespace)");
}

bool is_valid_utf8(std::string_view text) {
  char32_t cp = 0;
  for (std::size_t pos = 0; pos < text.size();) {
    const std::size_t n = utf8_sequence(text, pos, cp);
    if (n == 0) return false;
    pos += n;
  }
  return true;
}

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  char32_t cp = 0;
  for (std::size_t pos = 0; pos < text.size();) {
    const std::size_t n = utf8_sequence(text, pos, cp);
    if (n == 0) throw ArgumentError("malformed UTF-8 at byte " + std::to_string(pos));
    out.push_back(cp);
    pos += n;
  }
  return out;
}

std::string nfc_normalize(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  const icu::UnicodeString in =
      icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  if (nfc->isNormalized(in, status) && U_SUCCESS(status)) return std::string(text);
  status = U_ZERO_ERROR;
  const icu::UnicodeString normalized = nfc->normalize(in, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

std::vector<std::string> tokenize(std::string_view text, TokenizerKind kind) {
  std::vector<std::string> tokens;
  std::string current;
  const auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  const std::string normalized = kind == TokenizerKind::kDefault ? nfc_normalize(text) : std::string(text);
  for (const char32_t cp : decode_utf8(normalized)) {
    if (u_isUWhiteSpace(static_cast<UChar32>(cp))) {
      flush();
    } else if (kind == TokenizerKind::kDefault && u_ispunct(static_cast<UChar32>(cp))) {
      flush();
      append_utf8(current, cp);
      flush();
    } else {
      append_utf8(current, cp);
    }
  }
  flush();
  return tokens;
}

TokenizedSentence make_sentence(std::string_view text, TokenizerKind kind) {
  TokenizedSentence s;
  s.text = kind == TokenizerKind::kDefault ? nfc_normalize(text) : std::string(text);
  s.tokens = tokenize(s.text, kind);
  return s;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

}  // namespace uscore

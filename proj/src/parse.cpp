#include "mvk/parse.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>

namespace mvk {

// ---------------------------------------------------------------------------
// UTF-8 + character classes
// ---------------------------------------------------------------------------

namespace {

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    size_t len = 1;
    if (b0 < 0x80) {
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      cp = b0 & 0x1F;
      len = 2;
    } else if ((b0 & 0xF0) == 0xE0) {
      cp = b0 & 0x0F;
      len = 3;
    } else if ((b0 & 0xF8) == 0xF0) {
      cp = b0 & 0x07;
      len = 4;
    } else {
      out.push_back(b0);  // stray byte, carried through
      ++i;
      continue;
    }
    if (i + len > s.size()) {
      out.push_back(b0);
      ++i;
      continue;
    }
    bool ok = true;
    for (size_t k = 1; k < len; ++k) {
      const auto bk = static_cast<unsigned char>(s[i + k]);
      if ((bk & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (bk & 0x3F);
    }
    if (!ok) {
      out.push_back(b0);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
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

bool is_cjk(char32_t cp) {
  return (cp >= 0x3400 && cp <= 0x4DBF) || (cp >= 0x4E00 && cp <= 0x9FFF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x3040 && cp <= 0x30FF) ||
         (cp >= 0xFF66 && cp <= 0xFF9D);
}

bool is_ascii_punct(char32_t cp) {
  return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
         (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
}

bool is_cjk_punct(char32_t cp) {
  switch (cp) {
    case 0x3001: case 0x3002: case 0x3008: case 0x3009: case 0x300A: case 0x300B:
    case 0x300C: case 0x300D: case 0x300E: case 0x300F: case 0x3010: case 0x3011:
    case 0x3014: case 0x3015: case 0x3016: case 0x3017: case 0x301C: case 0x2013:
    case 0x2014: case 0x2015: case 0x2018: case 0x2019: case 0x201C: case 0x201D:
    case 0x2022: case 0x2026: case 0x00B7: case 0xFF61: case 0xFF62: case 0xFF63:
    case 0xFF64: case 0xFF65:
      return true;
    default:
      return false;
  }
}

// Width folding, lowercasing, punctuation and whitespace to plain spaces.
std::u32string fold_chars(std::string_view text) {
  std::u32string cps = decode_utf8(text);
  for (auto& cp : cps) {
    if (cp == 0x3000) cp = 0x20;
    else if (cp >= 0xFF01 && cp <= 0xFF5E) cp -= 0xFEE0;
    if (cp >= 'A' && cp <= 'Z') cp += 0x20;
    else if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) cp += 0x20;
    if (is_ascii_punct(cp) || is_cjk_punct(cp)) cp = 0x20;
    if (cp == 0x09 || cp == 0x0A || cp == 0x0B || cp == 0x0C || cp == 0x0D) cp = 0x20;
  }
  return cps;
}

std::vector<std::u32string> space_words(const std::u32string& folded) {
  std::vector<std::u32string> words;
  std::u32string cur;
  for (char32_t cp : folded) {
    if (cp == 0x20) {
      if (!cur.empty()) {
        words.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(cp);
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

bool is_article(const std::u32string& w) {
  return w == U"a" || w == U"an" || w == U"the";
}

std::string to_utf8(const std::u32string& w) {
  std::string out;
  for (char32_t cp : w) append_utf8(out, cp);
  return out;
}

void segment_into(const std::u32string& word, std::vector<std::string>& out) {
  std::u32string cur;
  for (char32_t cp : word) {
    if (is_cjk(cp)) {
      if (!cur.empty()) {
        out.push_back(to_utf8(cur));
        cur.clear();
      }
      out.push_back(to_utf8(std::u32string(1, cp)));
    } else {
      cur.push_back(cp);
    }
  }
  if (!cur.empty()) out.push_back(to_utf8(cur));
}

}  // namespace

std::string normalize_answer(std::string_view text) {
  const std::u32string folded = fold_chars(text);
  std::string out;
  bool first = true;
  for (const auto& w : space_words(folded)) {
    if (is_article(w)) continue;
    if (!first) out.push_back(' ');
    out += to_utf8(w);
    first = false;
  }
  return out;
}

std::vector<std::string> metric_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  for (const auto& w : space_words(fold_chars(text))) segment_into(w, tokens);
  return tokens;
}

std::vector<std::string> answer_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  for (const auto& w : space_words(fold_chars(text))) {
    if (is_article(w)) continue;
    segment_into(w, tokens);
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Grounded output grammars
// ---------------------------------------------------------------------------

namespace {

struct Cursor {
  std::string_view text;
  size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() &&
           (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n' || text[pos] == '\r'))
      ++pos;
  }

  bool expect(char c) {
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  bool expect_any(const std::vector<std::string>& aliases) {
    for (const auto& a : aliases) {
      if (text.compare(pos, a.size(), a) == 0) {
        pos += a.size();
        return true;
      }
    }
    return false;
  }

  // Non-negative integer, at most 9 digits.
  bool parse_uint(long& out) {
    const size_t start = pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    if (pos == start || pos - start > 9) return false;
    out = 0;
    for (size_t i = start; i < pos; ++i) out = out * 10 + (text[i] - '0');
    return true;
  }

  // Non-negative decimal: digits with an optional fraction part.
  bool parse_decimal(double& out) {
    const size_t start = pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    if (pos == start) return false;
    if (pos < text.size() && text[pos] == '.') {
      ++pos;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    }
    const auto sub = text.substr(start, pos - start);
    auto [ptr, ec] = std::from_chars(sub.data(), sub.data() + sub.size(), out);
    return ec == std::errc() && ptr == sub.data() + sub.size();
  }

  bool parse_int_tuple(long* vals, int count) {
    skip_ws();
    if (!expect('(')) return false;
    for (int i = 0; i < count; ++i) {
      skip_ws();
      if (!parse_uint(vals[i])) return false;
      skip_ws();
      if (i + 1 < count && !expect(',')) return false;
    }
    return expect(')');
  }
};

// Earliest occurrence of any alias at or after `from`; npos when none.
size_t find_any(std::string_view text, const std::vector<std::string>& aliases, size_t from,
                size_t* match_len) {
  size_t best = std::string_view::npos;
  for (const auto& a : aliases) {
    if (a.empty()) continue;
    const size_t p = text.find(a, from);
    if (p != std::string_view::npos && (best == std::string_view::npos || p < best)) {
      best = p;
      *match_len = a.size();
    }
  }
  return best;
}

}  // namespace

ParsedOutput parse_box2d(std::string_view text, const TokenConfig& tokens) {
  size_t from = 0;
  while (true) {
    size_t start_len = 0;
    const size_t at = find_any(text, tokens.box_start, from, &start_len);
    if (at == std::string_view::npos) return ParseFailed{"no box found"};
    Cursor c{text, at + start_len};
    long p1[2], p2[2];
    if (c.parse_int_tuple(p1, 2)) {
      c.skip_ws();
      if (c.expect(',') && c.parse_int_tuple(p2, 2)) {
        c.skip_ws();
        if (c.expect_any(tokens.box_end)) {
          const long mx = std::max({p1[0], p1[1], p2[0], p2[1]});
          if (mx > 1000) return ParseFailed{"coordinate overflow"};
          Box2D box;
          box.x1 = static_cast<int>(std::min(p1[0], p2[0]));
          box.x2 = static_cast<int>(std::max(p1[0], p2[0]));
          box.y1 = static_cast<int>(std::min(p1[1], p2[1]));
          box.y2 = static_cast<int>(std::max(p1[1], p2[1]));
          return box;
        }
      }
    }
    from = at + 1;
  }
}

ParsedOutput parse_box3d(std::string_view text) {
  size_t from = 0;
  while (true) {
    const size_t at = text.find('[', from);
    if (at == std::string_view::npos) return ParseFailed{"no box found"};
    Cursor c{text, at + 1};
    long p1[3], p2[3];
    if (c.parse_int_tuple(p1, 3)) {
      c.skip_ws();
      if (c.expect(',') && c.parse_int_tuple(p2, 3)) {
        c.skip_ws();
        if (c.expect(']')) {
          Box3D box;
          box.x1 = static_cast<int>(std::min(p1[0], p2[0]));
          box.x2 = static_cast<int>(std::max(p1[0], p2[0]));
          box.y1 = static_cast<int>(std::min(p1[1], p2[1]));
          box.y2 = static_cast<int>(std::max(p1[1], p2[1]));
          box.z1 = static_cast<int>(std::min(p1[2], p2[2]));
          box.z2 = static_cast<int>(std::max(p1[2], p2[2]));
          return box;
        }
      }
    }
    from = at + 1;
  }
}

ParsedOutput parse_point(std::string_view text) {
  size_t from = 0;
  while (true) {
    const size_t at = text.find('[', from);
    if (at == std::string_view::npos) return ParseFailed{"no point found"};
    Cursor c{text, at + 1};
    double x = 0, y = 0;
    c.skip_ws();
    if (c.parse_decimal(x)) {
      c.skip_ws();
      if (c.expect(',')) {
        c.skip_ws();
        if (c.parse_decimal(y)) {
          c.skip_ws();
          if (c.expect(']')) return Point2D{x, y, std::nullopt};
        }
      }
    }
    from = at + 1;
  }
}

ParsedOutput parse_choice(std::string_view text, const std::vector<std::string>& options) {
  if (options.empty()) throw Error("parse_choice requires a non-empty options list");
  const std::string norm_text = normalize_answer(text);

  std::vector<int> exact;
  for (size_t i = 0; i < options.size(); ++i) {
    if (normalize_answer(options[i]) == norm_text) exact.push_back(static_cast<int>(i));
  }
  if (exact.size() == 1) return ChoiceAnswer{exact[0]};
  if (exact.size() > 1) return ParseFailed{"ambiguous"};

  const std::vector<std::string> text_toks = answer_tokens(text);
  std::vector<int> contained;
  for (size_t i = 0; i < options.size(); ++i) {
    const std::vector<std::string> opt_toks = answer_tokens(options[i]);
    if (opt_toks.empty() || opt_toks.size() > text_toks.size()) continue;
    bool found = false;
    for (size_t s = 0; s + opt_toks.size() <= text_toks.size() && !found; ++s) {
      found = std::equal(opt_toks.begin(), opt_toks.end(), text_toks.begin() + s);
    }
    if (found) contained.push_back(static_cast<int>(i));
  }
  if (contained.size() == 1) return ChoiceAnswer{contained[0]};
  if (contained.size() > 1) return ParseFailed{"ambiguous"};
  return ParseFailed{"no option matched"};
}

const char* to_string(ExpectedFormat f) {
  switch (f) {
    case ExpectedFormat::FreeText: return "free_text";
    case ExpectedFormat::OptionChoice: return "option_choice";
    case ExpectedFormat::BoxToken2D: return "box_token_2d";
    case ExpectedFormat::BracketBox3D: return "bracket_box_3d";
    case ExpectedFormat::BracketPoint: return "bracket_point";
  }
  return "unknown";
}

ExpectedFormat expected_format_from_string(const std::string& s) {
  if (s == "free_text") return ExpectedFormat::FreeText;
  if (s == "option_choice") return ExpectedFormat::OptionChoice;
  if (s == "box_token_2d") return ExpectedFormat::BoxToken2D;
  if (s == "bracket_box_3d") return ExpectedFormat::BracketBox3D;
  if (s == "bracket_point") return ExpectedFormat::BracketPoint;
  throw SchemaError("unknown expected_format: " + s);
}

ParsedOutput parse_prediction(std::string_view raw_text, ExpectedFormat format,
                              const std::vector<std::string>* options,
                              const TokenConfig& tokens) {
  switch (format) {
    case ExpectedFormat::FreeText:
      return TextAnswer{std::string(raw_text)};
    case ExpectedFormat::OptionChoice:
      if (!options) throw Error("option_choice parse requires the sample's options");
      return parse_choice(raw_text, *options);
    case ExpectedFormat::BoxToken2D:
      return parse_box2d(raw_text, tokens);
    case ExpectedFormat::BracketBox3D:
      return parse_box3d(raw_text);
    case ExpectedFormat::BracketPoint:
      return parse_point(raw_text);
  }
  throw Error("unreachable expected_format");
}

}  // namespace mvk

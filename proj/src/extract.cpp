#include <optional>
#include <string>

#include "mstage/llm_client.hpp"
#include "mstage/utf8.hpp"

namespace mstage {

namespace {

struct Letter {
  OptionLabel label;
  bool lowercase;
};

std::optional<Letter> as_letter(char32_t c) {
  if (c >= U'A' && c <= U'D') return Letter{label_at(c - U'A'), false};
  if (c >= U'a' && c <= U'd') return Letter{label_at(c - U'a'), true};
  if (c >= U'Ａ' && c <= U'Ｄ') return Letter{label_at(c - U'Ａ'), false};
  if (c >= U'ａ' && c <= U'ｄ') return Letter{label_at(c - U'ａ'), true};
  return std::nullopt;
}

bool is_word_char(char32_t c) {
  return (c >= U'A' && c <= U'Z') || (c >= U'a' && c <= U'z') || (c >= U'0' && c <= U'9') ||
         (c >= U'Ａ' && c <= U'Ｚ') || (c >= U'ａ' && c <= U'ｚ') || c == U'_';
}

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'　';
}

bool skippable(char32_t c) {
  static constexpr std::u32string_view kSkip = U" \t　:：\"'“”‘’(（[【「『{*";
  return kSkip.find(c) != std::u32string_view::npos;
}

char32_t fold(char32_t c) { return (c >= U'A' && c <= U'Z') ? c + 32 : c; }

bool matches_at(const std::u32string& text, std::size_t pos, std::u32string_view pattern) {
  if (pos + pattern.size() > text.size()) return false;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (fold(text[pos + i]) != pattern[i]) return false;
  }
  return true;
}

// Letter following a pattern that ends just before `pos`, if any.
std::optional<OptionLabel> letter_after(const std::u32string& text, std::size_t pos) {
  while (pos < text.size() && skippable(text[pos])) ++pos;
  if (pos >= text.size()) return std::nullopt;
  auto letter = as_letter(text[pos]);
  if (!letter) return std::nullopt;
  const std::size_t next = pos + 1;
  if (next < text.size()) {
    if (is_word_char(text[next])) return std::nullopt;
    if (letter->lowercase && is_space(text[next])) return std::nullopt;
  }
  return letter->label;
}

}  // namespace

std::optional<OptionLabel> extract_answer(std::string_view raw) {
  const std::u32string text = utf8::decode(raw);
  static constexpr std::u32string_view kEnglish = U"the answer is";
  static constexpr std::u32string_view kChinese = U"答案是";

  std::optional<OptionLabel> last;
  for (std::size_t pos = 0; pos < text.size(); ++pos) {
    std::size_t end = 0;
    if (matches_at(text, pos, kEnglish) && (pos == 0 || !is_word_char(text[pos - 1]))) {
      end = pos + kEnglish.size();
    } else if (matches_at(text, pos, kChinese)) {
      end = pos + kChinese.size();
    } else {
      continue;
    }
    if (auto label = letter_after(text, end)) last = label;
  }
  if (last) return last;

  std::u32string trimmed = text;
  while (!trimmed.empty() && is_space(trimmed.front())) trimmed.erase(trimmed.begin());
  while (!trimmed.empty() && is_space(trimmed.back())) trimmed.pop_back();
  if (trimmed.size() == 1) {
    if (auto letter = as_letter(trimmed[0])) return letter->label;
  }
  return std::nullopt;
}

}  // namespace mstage

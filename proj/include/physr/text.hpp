#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace physr::text {

// ASCII-only classification, independent of the global locale.
inline bool is_space(char c) { return c == ' ' || (c >= '\t' && c <= '\r'); }
inline bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_alnum(char c) { return is_alpha(c) || is_digit(c); }
inline char lower(char c) { return c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c; }
inline char upper(char c) { return c >= 'a' && c <= 'z' ? static_cast<char>(c - 'a' + 'A') : c; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), lower);
  return out;
}

inline bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) { return lower(x) == lower(y); });
}

/// Position of `needle` in `hay` ignoring ASCII case, or npos.
inline std::size_t ifind(std::string_view hay, std::string_view needle, std::size_t from = 0) {
  if (needle.empty()) return from <= hay.size() ? from : std::string_view::npos;
  for (std::size_t i = from; i + needle.size() <= hay.size(); ++i) {
    if (iequals(hay.substr(i, needle.size()), needle)) return i;
  }
  return std::string_view::npos;
}

/// Runs of whitespace become a single space; leading/trailing whitespace dropped.
inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending = true;
      continue;
    }
    if (pending) out.push_back(' ');
    pending = false;
    out.push_back(c);
  }
  return out;
}

/// Trim, lowercase, collapse whitespace. Used for option-text distinctness.
inline std::string normalize(std::string_view s) { return to_lower(collapse_whitespace(s)); }

/// normalize(a) == normalize(b) without allocating.
inline bool normalized_equal(std::string_view a, std::string_view b) {
  a = trim(a);
  b = trim(b);
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool sa = is_space(a[i]), sb = is_space(b[j]);
    if (sa != sb) return false;
    if (sa) {
      while (is_space(a[i])) ++i;  // trimmed, so a non-space follows
      while (is_space(b[j])) ++j;
      continue;
    }
    if (lower(a[i]) != lower(b[j])) return false;
    ++i;
    ++j;
  }
  return i == a.size() && j == b.size();
}

/// `normalize` plus stripping terminal punctuation; the answer-matching form.
inline std::string normalize_answer(std::string_view s) {
  std::string out = normalize(s);
  while (!out.empty() && std::string_view(".,!?;:").find(out.back()) != std::string_view::npos) {
    out.pop_back();
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

inline std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find('\n', start);
    if (end == std::string_view::npos) end = s.size();
    std::string_view line = s.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    if (end == s.size()) break;
    start = end + 1;
  }
  return lines;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(sep);
    out.append(parts[i]);
  }
  return out;
}

}  // namespace physr::text

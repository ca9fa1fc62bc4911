#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "physr/error.hpp"
#include "physr/text.hpp"

// Reader for the TOML subset used by run configs: comments, [table] and
// [dotted.table] headers, bare or quoted keys (dotted allowed), and values
// that are strings (basic or literal), integers, floats, booleans, or
// single-line arrays of those. Produces a JSON object.
namespace physr::toml {

namespace detail {

class LineParser {
 public:
  LineParser(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(line_, "toml: " + msg); }

  void skip_ws() {
    while (p_ < s_.size() && (s_[p_] == ' ' || s_[p_] == '\t')) ++p_;
  }
  bool at_end() {
    skip_ws();
    return p_ >= s_.size() || s_[p_] == '#';
  }
  bool eat(char c) {
    skip_ws();
    if (p_ < s_.size() && s_[p_] == c) {
      ++p_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!eat(c)) fail(std::string("expected '") + c + "'");
  }

  std::vector<std::string> key() {
    std::vector<std::string> parts;
    do {
      skip_ws();
      if (p_ < s_.size() && (s_[p_] == '"' || s_[p_] == '\'')) {
        parts.push_back(string_value());
      } else {
        const std::size_t start = p_;
        while (p_ < s_.size() && (text::is_alnum(s_[p_]) || s_[p_] == '_' || s_[p_] == '-')) ++p_;
        if (p_ == start) fail("expected a key");
        parts.emplace_back(s_.substr(start, p_ - start));
      }
    } while (eat('.'));
    return parts;
  }

  nlohmann::json value() {
    skip_ws();
    if (p_ >= s_.size()) fail("missing value");
    const char c = s_[p_];
    if (c == '"' || c == '\'') return string_value();
    if (c == '[') {
      ++p_;
      nlohmann::json arr = nlohmann::json::array();
      if (eat(']')) return arr;
      for (;;) {
        arr.push_back(value());
        if (eat(']')) break;
        expect(',');
        if (eat(']')) break;  // trailing comma
      }
      return arr;
    }
    if (s_.substr(p_, 4) == "true") {
      p_ += 4;
      return true;
    }
    if (s_.substr(p_, 5) == "false") {
      p_ += 5;
      return false;
    }
    return number();
  }

 private:
  std::string string_value() {
    const char quote = s_[p_++];
    std::string out;
    while (p_ < s_.size() && s_[p_] != quote) {
      char c = s_[p_++];
      if (quote == '"' && c == '\\') {
        if (p_ >= s_.size()) fail("dangling escape");
        switch (s_[p_++]) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case 'r': c = '\r'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail("unsupported escape");
        }
      }
      out += c;
    }
    if (p_ >= s_.size()) fail("unterminated string");
    ++p_;
    return out;
  }

  nlohmann::json number() {
    const std::size_t start = p_;
    while (p_ < s_.size() && (text::is_alnum(s_[p_]) || s_[p_] == '+' || s_[p_] == '-' || s_[p_] == '.' ||
                              s_[p_] == '_')) {
      ++p_;
    }
    std::string tok;
    for (char c : s_.substr(start, p_ - start)) {
      if (c != '_') tok += c;
    }
    if (tok.empty()) fail("expected a value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos;
    try {
      std::size_t used = 0;
      if (is_float) {
        const double d = std::stod(tok, &used);
        if (used == tok.size()) return d;
      } else {
        const long long i = std::stoll(tok, &used, 10);
        if (used == tok.size()) return i;
      }
    } catch (const std::exception&) {
    }
    fail("invalid value '" + tok + "'");
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t p_ = 0;
};

inline nlohmann::json& descend(nlohmann::json& root, const std::vector<std::string>& path, std::size_t n,
                               std::size_t line) {
  nlohmann::json* node = &root;
  for (std::size_t i = 0; i < n; ++i) {
    auto& child = (*node)[path[i]];
    if (child.is_null()) child = nlohmann::json::object();
    if (!child.is_object()) throw ParseError(line, "toml: '" + path[i] + "' is not a table");
    node = &child;
  }
  return *node;
}

}  // namespace detail

inline nlohmann::json parse(std::string_view content) {
  nlohmann::json root = nlohmann::json::object();
  std::vector<std::string> table;
  std::size_t line_no = 0;
  for (const auto& raw : text::split_lines(content)) {
    ++line_no;
    detail::LineParser p(raw, line_no);
    if (p.at_end()) continue;
    if (p.eat('[')) {
      table = p.key();
      p.expect(']');
      if (!p.at_end()) p.fail("trailing characters after table header");
      detail::descend(root, table, table.size(), line_no);
      continue;
    }
    const auto key = p.key();
    p.expect('=');
    auto value = p.value();
    if (!p.at_end()) p.fail("trailing characters after value");
    auto& parent = detail::descend(detail::descend(root, table, table.size(), line_no), key, key.size() - 1, line_no);
    if (parent.contains(key.back())) p.fail("duplicate key '" + key.back() + "'");
    parent[key.back()] = std::move(value);
  }
  return root;
}

inline nlohmann::json parse_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

}  // namespace physr::toml

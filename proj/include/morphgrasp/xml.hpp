#pragma once

// Minimal XML reader covering the URDF subset: elements, attributes,
// comments, XML declarations and CDATA-free text. Position-carrying syntax
// errors; no entity expansion beyond the five predefined ones.

#include <cctype>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "morphgrasp/core.hpp"

namespace morphgrasp::xml {

struct Element {
  std::string name;
  std::map<std::string, std::string> attributes;
  std::vector<std::unique_ptr<Element>> children;

  const std::string* attr(const std::string& key) const {
    auto it = attributes.find(key);
    return it == attributes.end() ? nullptr : &it->second;
  }
  const Element* child(const std::string& tag) const {
    for (const auto& c : children)
      if (c->name == tag) return c.get();
    return nullptr;
  }
  std::vector<const Element*> children_named(const std::string& tag) const {
    std::vector<const Element*> out;
    for (const auto& c : children)
      if (c->name == tag) out.push_back(c.get());
    return out;
  }
};

class Parser {
 public:
  explicit Parser(const std::string& text) : text_(text) {}

  std::unique_ptr<Element> parse() {
    skip_prolog();
    auto root = parse_element();
    skip_misc();
    if (pos_ != text_.size()) fail("trailing content after root element");
    return root;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::XmlSyntax,
                msg + " at offset " + std::to_string(pos_));
  }

  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }

  void skip_ws() {
    while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\n' ||
                      peek() == '\r'))
      ++pos_;
  }

  bool try_consume(const std::string& s) {
    if (text_.compare(pos_, s.size(), s) == 0) {
      pos_ += s.size();
      return true;
    }
    return false;
  }

  void skip_until(const std::string& end, const std::string& what) {
    size_t p = text_.find(end, pos_);
    if (p == std::string::npos) fail("unterminated " + what);
    pos_ = p + end.size();
  }

  void skip_misc() {
    for (;;) {
      skip_ws();
      if (try_consume("<!--")) {
        skip_until("-->", "comment");
      } else if (try_consume("<?")) {
        skip_until("?>", "processing instruction");
      } else {
        break;
      }
    }
  }

  void skip_prolog() {
    skip_misc();
    if (try_consume("<!DOCTYPE")) skip_until(">", "doctype");
    skip_misc();
  }

  static bool name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
           c == '-' || c == '.' || c == ':';
  }

  std::string parse_name() {
    size_t start = pos_;
    while (!eof() && name_char(peek())) ++pos_;
    if (pos_ == start) fail("expected name");
    return text_.substr(start, pos_ - start);
  }

  std::string decode_entities(const std::string& s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] != '&') {
        out.push_back(s[i]);
        continue;
      }
      size_t semi = s.find(';', i);
      if (semi == std::string::npos) fail("unterminated entity");
      std::string ent = s.substr(i + 1, semi - i - 1);
      if (ent == "lt") out.push_back('<');
      else if (ent == "gt") out.push_back('>');
      else if (ent == "amp") out.push_back('&');
      else if (ent == "quot") out.push_back('"');
      else if (ent == "apos") out.push_back('\'');
      else fail("unknown entity &" + ent + ";");
      i = semi;
    }
    return out;
  }

  std::unique_ptr<Element> parse_element() {
    if (eof() || peek() != '<') fail("expected element");
    ++pos_;
    auto el = std::make_unique<Element>();
    el->name = parse_name();
    for (;;) {
      skip_ws();
      if (eof()) fail("unterminated tag <" + el->name + ">");
      if (try_consume("/>")) return el;
      if (try_consume(">")) break;
      std::string key = parse_name();
      skip_ws();
      if (!try_consume("=")) fail("expected '=' after attribute " + key);
      skip_ws();
      if (eof() || (peek() != '"' && peek() != '\'')) fail("expected quote");
      char q = peek();
      ++pos_;
      size_t start = pos_;
      while (!eof() && peek() != q) ++pos_;
      if (eof()) fail("unterminated attribute value");
      std::string value = decode_entities(text_.substr(start, pos_ - start));
      ++pos_;
      if (!el->attributes.emplace(key, value).second)
        fail("duplicate attribute " + key);
    }
    // content
    for (;;) {
      skip_misc();
      if (eof()) fail("unterminated element <" + el->name + ">");
      if (try_consume("</")) {
        std::string close = parse_name();
        if (close != el->name)
          fail("mismatched closing tag </" + close + "> for <" + el->name + ">");
        skip_ws();
        if (!try_consume(">")) fail("malformed closing tag");
        return el;
      }
      if (peek() == '<') {
        el->children.push_back(parse_element());
      } else {
        ++pos_;  // URDF carries no meaningful text content
      }
    }
  }

  const std::string& text_;
  size_t pos_ = 0;
};

inline std::unique_ptr<Element> parse(const std::string& text) {
  return Parser(text).parse();
}

}  // namespace morphgrasp::xml

//===- syntax.cpp - error-tolerant C-subset parser --------------------------===//
//
// Part of fixprint, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//

#include "fixprint/syntax.hpp"

#include "fixprint/util.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <mutex>
#include <unordered_set>

namespace fixprint::syntax {

namespace {

//===----------------------------------------------------------------------===//
// Lexer
//===----------------------------------------------------------------------===//

enum class Tok : std::uint8_t {
  Ident,
  Keyword,
  Number,
  String,
  CharLit,
  Op,
  Punct,
  Preproc,
};

struct Token {
  Tok type;
  std::string_view text;
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
};

const std::unordered_set<std::string_view> &keywords() {
  static const std::unordered_set<std::string_view> kw = {
      "auto",   "break",  "case",     "char",   "const",    "continue",
      "default", "do",    "double",   "else",   "enum",     "extern",
      "float",  "for",    "goto",     "if",     "inline",   "int",
      "long",   "register", "return", "short",  "signed",   "sizeof",
      "static", "struct", "switch",   "typedef", "union",   "unsigned",
      "void",   "volatile", "while"};
  return kw;
}

bool is_ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}
bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)); }

class Lexer {
public:
  explicit Lexer(std::string_view src) : src_(src) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    bool line_start = true;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '\n') {
        ++pos_;
        line_start = true;
        continue;
      }
      if (c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f') {
        ++pos_;
        continue;
      }
      if (c == '/' && pos_ + 1 < src_.size()) {
        if (src_[pos_ + 1] == '/') {
          skip_line_comment();
          continue;
        }
        if (src_[pos_ + 1] == '*') {
          skip_block_comment();
          continue;
        }
      }
      if (c == '#' && line_start) {
        out.push_back(lex_preproc());
        line_start = true;
        continue;
      }
      line_start = false;
      if (is_ident_start(c)) {
        out.push_back(lex_ident());
      } else if (is_digit(c) || (c == '.' && pos_ + 1 < src_.size() &&
                                 is_digit(src_[pos_ + 1]))) {
        out.push_back(lex_number());
      } else if (c == '"') {
        out.push_back(lex_string('"', Tok::String));
      } else if (c == '\'') {
        out.push_back(lex_string('\'', Tok::CharLit));
      } else {
        out.push_back(lex_op_or_punct());
      }
    }
    return out;
  }

private:
  Token make(Tok t, std::size_t begin) {
    return Token{t, src_.substr(begin, pos_ - begin),
                 static_cast<std::uint32_t>(begin), static_cast<std::uint32_t>(pos_)};
  }

  void skip_line_comment() {
    while (pos_ < src_.size() && src_[pos_] != '\n')
      ++pos_;
  }

  void skip_block_comment() {
    pos_ += 2;
    while (pos_ + 1 < src_.size() && !(src_[pos_] == '*' && src_[pos_ + 1] == '/'))
      ++pos_;
    pos_ = std::min(pos_ + 2, src_.size());
  }

  Token lex_preproc() {
    std::size_t begin = pos_;
    while (pos_ < src_.size()) {
      if (src_[pos_] == '\n') {
        // Backslash continuation keeps the directive going.
        std::size_t back = pos_;
        while (back > begin && (src_[back - 1] == ' ' || src_[back - 1] == '\t' ||
                                src_[back - 1] == '\r'))
          --back;
        if (back > begin && src_[back - 1] == '\\') {
          ++pos_;
          continue;
        }
        break;
      }
      ++pos_;
    }
    return make(Tok::Preproc, begin);
  }

  Token lex_ident() {
    std::size_t begin = pos_;
    while (pos_ < src_.size() && is_ident_char(src_[pos_]))
      ++pos_;
    Token t = make(Tok::Ident, begin);
    if (keywords().count(t.text))
      t.type = Tok::Keyword;
    return t;
  }

  Token lex_number() {
    std::size_t begin = pos_;
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (is_ident_char(c) || c == '.') {
        ++pos_;
      } else if ((c == '+' || c == '-') && pos_ > begin &&
                 (src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E' ||
                  src_[pos_ - 1] == 'p' || src_[pos_ - 1] == 'P')) {
        ++pos_;
      } else {
        break;
      }
    }
    return make(Tok::Number, begin);
  }

  Token lex_string(char quote, Tok type) {
    std::size_t begin = pos_;
    ++pos_;
    while (pos_ < src_.size() && src_[pos_] != quote && src_[pos_] != '\n') {
      if (src_[pos_] == '\\' && pos_ + 1 < src_.size())
        ++pos_;
      ++pos_;
    }
    if (pos_ < src_.size() && src_[pos_] == quote)
      ++pos_;
    return make(type, begin);
  }

  Token lex_op_or_punct() {
    static constexpr std::array<std::string_view, 4> three = {"<<=", ">>=", "...",
                                                              "->*"};
    static constexpr std::array<std::string_view, 19> two = {
        "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&",
        "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^="};
    std::size_t begin = pos_;
    std::string_view rest = src_.substr(pos_);
    for (auto t : three)
      if (rest.substr(0, 3) == t) {
        pos_ += 3;
        Token tok = make(t == "..." ? Tok::Punct : Tok::Op, begin);
        return tok;
      }
    for (auto t : two)
      if (rest.substr(0, 2) == t) {
        pos_ += 2;
        return make(Tok::Op, begin);
      }
    char c = src_[pos_++];
    switch (c) {
    case '(': case ')': case '{': case '}': case '[': case ']':
    case ';': case ',': case ':': case '?':
      return make(Tok::Punct, begin);
    default:
      return make(Tok::Op, begin);
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

//===----------------------------------------------------------------------===//
// Temporary node pool (postorder-built, preorder-flattened at the end)
//===----------------------------------------------------------------------===//

struct TmpNode {
  const char *kind;
  std::string token;
  bool leaf = false;
  Span span;
  std::vector<int> children;
};

class Pool {
public:
  int leaf(const char *k, const Token &t) {
    pool_.push_back(TmpNode{k, std::string(t.text), true, Span{t.begin, t.end}, {}});
    return static_cast<int>(pool_.size()) - 1;
  }

  int leaf_span(const char *k, std::string token, Span span) {
    pool_.push_back(TmpNode{k, std::move(token), true, span, {}});
    return static_cast<int>(pool_.size()) - 1;
  }

  int node(const char *k, std::vector<int> children) {
    Span s{0, 0};
    if (!children.empty()) {
      s.begin = pool_[static_cast<std::size_t>(children.front())].span.begin;
      s.end = pool_[static_cast<std::size_t>(children.back())].span.end;
    }
    pool_.push_back(TmpNode{k, {}, false, s, std::move(children)});
    return static_cast<int>(pool_.size()) - 1;
  }

  std::size_t checkpoint() const { return pool_.size(); }
  void rollback(std::size_t ck) { pool_.resize(ck); }

  const TmpNode &at(int id) const { return pool_[static_cast<std::size_t>(id)]; }
  TmpNode &at(int id) { return pool_[static_cast<std::size_t>(id)]; }

private:
  std::vector<TmpNode> pool_;
};

//===----------------------------------------------------------------------===//
// Parser
//===----------------------------------------------------------------------===//

constexpr int kFail = -1;

bool is_type_keyword(std::string_view t) {
  static const std::unordered_set<std::string_view> k = {
      "auto", "char", "const", "double", "enum", "extern", "float", "inline",
      "int", "long", "register", "short", "signed", "static", "struct",
      "typedef", "union", "unsigned", "void", "volatile"};
  return k.count(t) != 0;
}

// Typedef-looking identifiers accepted as cast operands: common kernel
// aliases plus the *_t convention.
bool looks_like_typedef_name(std::string_view t) {
  static const std::unordered_set<std::string_view> k = {
      "u8", "u16", "u32", "u64", "s8", "s16", "s32", "s64",
      "__u8", "__u16", "__u32", "__u64", "uint", "ulong"};
  if (k.count(t))
    return true;
  return t.size() > 2 && t.substr(t.size() - 2) == "_t";
}

class Parser {
public:
  Parser(std::string_view src, std::vector<Token> toks)
      : src_(src), toks_(std::move(toks)) {}

  int run() {
    std::vector<int> top;
    while (!eof()) {
      if (cur().type == Tok::Preproc) {
        top.push_back(pool_.leaf(kind::PreprocLine, take()));
        continue;
      }
      std::size_t ck = pool_.checkpoint();
      std::size_t tk = pos_;
      int d = parse_external();
      if (d == kFail) {
        // Hunks and snippets are often bare statements; accept those too.
        pool_.rollback(ck);
        pos_ = tk;
        d = try_statement();
      }
      if (d == kFail) {
        pool_.rollback(ck);
        pos_ = tk;
        d = recover_unknown(/*top_level=*/true);
      }
      top.push_back(d);
    }
    if (top.empty())
      return pool_.leaf_span(kind::TranslationUnit, "", Span{0, 0});
    return pool_.node(kind::TranslationUnit, std::move(top));
  }

  Pool &pool() { return pool_; }

private:
  bool eof() const { return pos_ >= toks_.size(); }
  const Token &cur() const { return toks_[pos_]; }
  const Token &ahead(std::size_t n) const { return toks_[pos_ + n]; }
  bool has(std::size_t n) const { return pos_ + n < toks_.size(); }
  Token take() { return toks_[pos_++]; }

  bool at_punct(std::string_view p) const {
    return !eof() && cur().type == Tok::Punct && cur().text == p;
  }
  bool at_op(std::string_view o) const {
    return !eof() && cur().type == Tok::Op && cur().text == o;
  }
  bool at_keyword(std::string_view k) const {
    return !eof() && cur().type == Tok::Keyword && cur().text == k;
  }

  int punct(std::vector<int> &out) { // unchecked take
    int id = pool_.leaf(kind::Punct, take());
    out.push_back(id);
    return id;
  }

  // Consumes tokens that cannot be parsed into one opaque leaf. Stops after a
  // ';' or (at top level) a '}' at bracket depth zero, and before a '}' that
  // would close the enclosing block, a preprocessor line, or EOF.
  int recover_unknown(bool top_level) {
    std::size_t first = pos_;
    int depth = 0;
    while (!eof()) {
      const Token &t = cur();
      if (t.type == Tok::Preproc && pos_ > first)
        break;
      if (depth == 0 && !top_level && t.type == Tok::Punct && t.text == "}")
        break;
      if (t.type == Tok::Punct) {
        if (t.text == "(" || t.text == "[" || t.text == "{")
          ++depth;
        else if (t.text == ")" || t.text == "]" || t.text == "}")
          --depth;
      }
      ++pos_;
      if (depth <= 0 && t.type == Tok::Punct && (t.text == ";" || (top_level && t.text == "}")))
        break;
      if (depth < 0)
        break;
    }
    if (pos_ == first)
      ++pos_; // always make progress
    Span s{toks_[first].begin, toks_[pos_ - 1].end};
    return pool_.leaf_span(kind::Unknown,
                           std::string(src_.substr(s.begin, s.end - s.begin)), s);
  }

  //===--------------------------------------------------------------------===//
  // Declarations and definitions
  //===--------------------------------------------------------------------===//

  // Leading type specifiers: keywords plus at most one typedef-style
  // identifier. Returns false if nothing that can start a declaration is here.
  bool parse_specifiers(std::vector<int> &out) {
    bool any = false;
    bool saw_type_ident = false;
    while (!eof()) {
      if (cur().type == Tok::Keyword && is_type_keyword(cur().text)) {
        bool tag = cur().text == "struct" || cur().text == "union" || cur().text == "enum";
        out.push_back(pool_.leaf(kind::Keyword, take()));
        any = true;
        if (tag) {
          if (!eof() && cur().type == Tok::Ident)
            out.push_back(pool_.leaf(kind::Identifier, take()));
          if (at_punct("{")) {
            int fl = parse_field_list();
            if (fl == kFail)
              return false;
            out.push_back(fl);
          }
          saw_type_ident = true;
        }
        continue;
      }
      if (cur().type == Tok::Ident && !saw_type_ident && has(1) &&
          (ahead(1).type == Tok::Ident ||
           (ahead(1).type == Tok::Op && ahead(1).text == "*"))) {
        // "u8 len" / "size_t *p": identifier in type position.
        out.push_back(pool_.leaf(kind::Identifier, take()));
        saw_type_ident = true;
        any = true;
        continue;
      }
      break;
    }
    return any;
  }

  int parse_field_list() {
    std::vector<int> out;
    if (!at_punct("{"))
      return kFail;
    punct(out);
    while (!eof() && !at_punct("}")) {
      if (cur().type == Tok::Preproc) {
        out.push_back(pool_.leaf(kind::PreprocLine, take()));
        continue;
      }
      std::size_t ck = pool_.checkpoint();
      std::size_t tk = pos_;
      int d = parse_declaration(/*require_semi=*/true);
      if (d != kFail) {
        out.push_back(d);
      } else {
        pool_.rollback(ck);
        pos_ = tk;
        out.push_back(recover_unknown(false));
      }
    }
    if (at_punct("}"))
      punct(out);
    return pool_.node(kind::FieldList, std::move(out));
  }

  // Declarator core: stars, name, array suffixes, ":" bitfield. Also handles
  // the "(*name)" function-pointer spelling leniently.
  int parse_declarator() {
    std::vector<int> out;
    while (at_op("*") || at_keyword("const") || at_keyword("volatile")) {
      out.push_back(pool_.leaf(cur().type == Tok::Op ? kind::Operator : kind::Keyword,
                               take()));
    }
    if (at_punct("(") && has(1) && ahead(1).type == Tok::Op && ahead(1).text == "*") {
      punct(out);
      out.push_back(pool_.leaf(kind::Operator, take()));
      if (eof() || cur().type != Tok::Ident)
        return kFail;
      out.push_back(pool_.leaf(kind::Identifier, take()));
      if (!at_punct(")"))
        return kFail;
      punct(out);
    } else {
      if (eof() || cur().type != Tok::Ident)
        return kFail;
      out.push_back(pool_.leaf(kind::Identifier, take()));
    }
    while (at_punct("[")) {
      punct(out);
      if (!at_punct("]")) {
        int e = parse_expr();
        if (e == kFail)
          return kFail;
        out.push_back(e);
      }
      if (!at_punct("]"))
        return kFail;
      punct(out);
    }
    return pool_.node(kind::Declarator, std::move(out));
  }

  int parse_param_list() {
    std::vector<int> out;
    if (!at_punct("("))
      return kFail;
    punct(out);
    while (!eof() && !at_punct(")")) {
      if (at_punct("...")) {
        std::vector<int> p;
        punct(p);
        out.push_back(pool_.node(kind::Param, std::move(p)));
      } else {
        int p = parse_param();
        if (p == kFail)
          return kFail;
        out.push_back(p);
      }
      if (at_punct(","))
        punct(out);
      else
        break;
    }
    if (!at_punct(")"))
      return kFail;
    punct(out);
    return pool_.node(kind::ParamList, std::move(out));
  }

  // One parameter, kept flat: specifier tokens, stars, optional name, arrays.
  int parse_param() {
    std::vector<int> out;
    while (!eof()) {
      const Token &t = cur();
      if (t.type == Tok::Keyword && is_type_keyword(t.text)) {
        out.push_back(pool_.leaf(kind::Keyword, take()));
      } else if (t.type == Tok::Ident) {
        out.push_back(pool_.leaf(kind::Identifier, take()));
      } else if (t.type == Tok::Op && t.text == "*") {
        out.push_back(pool_.leaf(kind::Operator, take()));
      } else if (t.type == Tok::Punct && t.text == "[") {
        punct(out);
        if (!at_punct("]")) {
          int e = parse_expr();
          if (e == kFail)
            return kFail;
          out.push_back(e);
        }
        if (!at_punct("]"))
          return kFail;
        punct(out);
      } else {
        break;
      }
    }
    if (out.empty())
      return kFail;
    return pool_.node(kind::Param, std::move(out));
  }

  int parse_initializer() {
    if (at_punct("{"))
      return parse_init_list();
    return parse_assignment();
  }

  int parse_init_list() {
    std::vector<int> out;
    punct(out); // {
    while (!eof() && !at_punct("}")) {
      if (at_op(".")) { // designated initializer
        out.push_back(pool_.leaf(kind::Operator, take()));
        if (!eof() && cur().type == Tok::Ident)
          out.push_back(pool_.leaf(kind::Identifier, take()));
        if (at_op("="))
          out.push_back(pool_.leaf(kind::Operator, take()));
      }
      int e = parse_initializer();
      if (e == kFail)
        return kFail;
      out.push_back(e);
      if (at_punct(","))
        punct(out);
      else
        break;
    }
    if (!at_punct("}"))
      return kFail;
    punct(out);
    return pool_.node(kind::InitList, std::move(out));
  }

  // Declaration | FunctionDef | StructDecl. Fails without consuming pool
  // state only via caller rollback.
  int parse_declaration(bool require_semi) {
    std::vector<int> out;
    if (!parse_specifiers(out))
      return kFail;

    // "struct foo { ... };": pure type definition without declarators.
    if (at_punct(";")) {
      bool has_fields = std::any_of(out.begin(), out.end(), [&](int id) {
        return pool_.at(id).kind == std::string_view(kind::FieldList);
      });
      punct(out);
      return pool_.node(has_fields ? kind::StructDecl : kind::Declaration,
                        std::move(out));
    }

    bool first = true;
    while (true) {
      int d = parse_declarator();
      if (d == kFail)
        return kFail;
      out.push_back(d);

      if (first && at_punct("(")) {
        int params = parse_param_list();
        if (params == kFail)
          return kFail;
        out.push_back(params);
        if (at_punct("{")) {
          int body = parse_block();
          if (body == kFail)
            return kFail;
          out.push_back(body);
          return pool_.node(kind::FunctionDef, std::move(out));
        }
      }
      first = false;

      if (at_punct(":")) { // bitfield
        punct(out);
        int e = parse_conditional();
        if (e == kFail)
          return kFail;
        out.push_back(e);
      }
      if (at_op("=")) {
        out.push_back(pool_.leaf(kind::Operator, take()));
        int init = parse_initializer();
        if (init == kFail)
          return kFail;
        out.push_back(init);
      }
      if (at_punct(",")) {
        punct(out);
        continue;
      }
      break;
    }

    if (require_semi) {
      if (!at_punct(";"))
        return kFail;
      punct(out);
    }
    return pool_.node(kind::Declaration, std::move(out));
  }

  int parse_external() { return parse_declaration(/*require_semi=*/true); }

  //===--------------------------------------------------------------------===//
  // Statements
  //===--------------------------------------------------------------------===//

  int parse_block() {
    std::vector<int> out;
    if (!at_punct("{"))
      return kFail;
    punct(out);
    while (!eof() && !at_punct("}"))
      out.push_back(parse_statement());
    if (at_punct("}"))
      punct(out);
    return pool_.node(kind::Block, std::move(out));
  }

  // Never fails; malformed statements become Unknown leaves.
  int parse_statement() {
    std::size_t ck = pool_.checkpoint();
    std::size_t tk = pos_;
    int s = try_statement();
    if (s != kFail)
      return s;
    pool_.rollback(ck);
    pos_ = tk;
    return recover_unknown(false);
  }

  int try_statement() {
    if (eof())
      return kFail;
    const Token &t = cur();

    if (t.type == Tok::Preproc)
      return pool_.leaf(kind::PreprocLine, take());
    if (t.type == Tok::Punct && t.text == "{")
      return parse_block();
    if (t.type == Tok::Punct && t.text == ";") {
      std::vector<int> out;
      punct(out);
      return pool_.node(kind::EmptyStmt, std::move(out));
    }

    if (t.type == Tok::Keyword) {
      std::string_view k = t.text;
      if (k == "if")
        return parse_if();
      if (k == "for")
        return parse_for();
      if (k == "while")
        return parse_while();
      if (k == "do")
        return parse_do();
      if (k == "switch")
        return parse_switch();
      if (k == "case" || k == "default")
        return parse_case();
      if (k == "return")
        return parse_return();
      if (k == "goto")
        return parse_goto();
      if (k == "break" || k == "continue")
        return parse_jump(k == "break" ? kind::BreakStmt : kind::ContinueStmt);
      if (is_type_keyword(k))
        return parse_declaration(/*require_semi=*/true);
      return kFail;
    }

    if (t.type == Tok::Ident) {
      if (has(1) && ahead(1).type == Tok::Punct && ahead(1).text == ":") {
        std::vector<int> out;
        out.push_back(pool_.leaf(kind::Identifier, take()));
        punct(out);
        return pool_.node(kind::LabelStmt, std::move(out));
      }
      if (looks_like_declaration())
        return parse_declaration(/*require_semi=*/true);
    }

    // Expression statement.
    int e = parse_expr();
    if (e == kFail || !at_punct(";"))
      return kFail;
    std::vector<int> out{e};
    punct(out);
    return pool_.node(kind::ExprStmt, std::move(out));
  }

  bool looks_like_declaration() const {
    // "type_name name" or "type_name *name" followed by a declarator tail.
    if (!has(1))
      return false;
    if (ahead(1).type == Tok::Ident)
      return true;
    std::size_t i = 1;
    while (pos_ + i < toks_.size() && toks_[pos_ + i].type == Tok::Op &&
           toks_[pos_ + i].text == "*")
      ++i;
    if (i == 1 || pos_ + i >= toks_.size())
      return false;
    if (toks_[pos_ + i].type != Tok::Ident)
      return false;
    if (pos_ + i + 1 >= toks_.size())
      return false;
    const Token &after = toks_[pos_ + i + 1];
    return after.type == Tok::Punct
               ? (after.text == ";" || after.text == "," || after.text == "[")
               : (after.type == Tok::Op && after.text == "=");
  }

  int parse_paren_expr(std::vector<int> &out) {
    if (!at_punct("("))
      return kFail;
    punct(out);
    int e = parse_expr();
    if (e == kFail)
      return kFail;
    out.push_back(e);
    if (!at_punct(")"))
      return kFail;
    punct(out);
    return 0;
  }

  int parse_if() {
    std::vector<int> out;
    out.push_back(pool_.leaf(kind::Keyword, take()));
    if (parse_paren_expr(out) == kFail)
      return kFail;
    int body = parse_statement();
    out.push_back(body);
    if (at_keyword("else")) {
      std::vector<int> els;
      els.push_back(pool_.leaf(kind::Keyword, take()));
      els.push_back(parse_statement());
      out.push_back(pool_.node(kind::ElseClause, std::move(els)));
    }
    return pool_.node(kind::IfStmt, std::move(out));
  }

  int parse_for() {
    std::vector<int> out;
    out.push_back(pool_.leaf(kind::Keyword, take()));
    if (!at_punct("("))
      return kFail;
    punct(out);
    // init clause
    if (!at_punct(";")) {
      int init = kFail;
      std::size_t ck = pool_.checkpoint();
      std::size_t tk = pos_;
      if ((cur().type == Tok::Keyword && is_type_keyword(cur().text)) ||
          (cur().type == Tok::Ident && looks_like_declaration()))
        init = parse_declaration(/*require_semi=*/false);
      if (init == kFail) {
        pool_.rollback(ck);
        pos_ = tk;
        init = parse_expr();
      }
      if (init == kFail)
        return kFail;
      out.push_back(init);
    }
    if (!at_punct(";"))
      return kFail;
    punct(out);
    if (!at_punct(";")) {
      int cond = parse_expr();
      if (cond == kFail)
        return kFail;
      out.push_back(cond);
    }
    if (!at_punct(";"))
      return kFail;
    punct(out);
    if (!at_punct(")")) {
      int step = parse_expr();
      if (step == kFail)
        return kFail;
      out.push_back(step);
    }
    if (!at_punct(")"))
      return kFail;
    punct(out);
    out.push_back(parse_statement());
    return pool_.node(kind::ForStmt, std::move(out));
  }

  int parse_while() {
    std::vector<int> out;
    out.push_back(pool_.leaf(kind::Keyword, take()));
    if (parse_paren_expr(out) == kFail)
      return kFail;
    out.push_back(parse_statement());
    return pool_.node(kind::WhileStmt, std::move(out));
  }

  int parse_do() {
    std::vector<int> out;
    out.push_back(pool_.leaf(kind::Keyword, take()));
    out.push_back(parse_statement());
    if (!at_keyword("while"))
      return kFail;
    out.push_back(pool_.leaf(kind::Keyword, take()));
    if (parse_paren_expr(out) == kFail)
      return kFail;
    if (!at_punct(";"))
      return kFail;
    punct(out);
    return pool_.node(kind::DoStmt, std::move(out));
  }

  int parse_switch() {
    std::vector<int> out;
    out.push_back(pool_.leaf(kind::Keyword, take()));
    if (parse_paren_expr(out) == kFail)
      return kFail;
    out.push_back(parse_statement());
    return pool_.node(kind::SwitchStmt, std::move(out));
  }

  int parse_case() {
    std::vector<int> out;
    bool is_default = cur().text == "default";
    out.push_back(pool_.leaf(kind::Keyword, take()));
    if (!is_default) {
      int e = parse_conditional();
      if (e == kFail)
        return kFail;
      out.push_back(e);
    }
    if (!at_punct(":"))
      return kFail;
    punct(out);
    return pool_.node(kind::CaseLabel, std::move(out));
  }

  int parse_return() {
    std::vector<int> out;
    out.push_back(pool_.leaf(kind::Keyword, take()));
    if (!at_punct(";")) {
      int e = parse_expr();
      if (e == kFail)
        return kFail;
      out.push_back(e);
    }
    if (!at_punct(";"))
      return kFail;
    punct(out);
    return pool_.node(kind::ReturnStmt, std::move(out));
  }

  int parse_goto() {
    std::vector<int> out;
    out.push_back(pool_.leaf(kind::Keyword, take()));
    if (eof() || cur().type != Tok::Ident)
      return kFail;
    out.push_back(pool_.leaf(kind::Identifier, take()));
    if (!at_punct(";"))
      return kFail;
    punct(out);
    return pool_.node(kind::GotoStmt, std::move(out));
  }

  int parse_jump(const char *k) {
    std::vector<int> out;
    out.push_back(pool_.leaf(kind::Keyword, take()));
    if (!at_punct(";"))
      return kFail;
    punct(out);
    return pool_.node(k, std::move(out));
  }

  //===--------------------------------------------------------------------===//
  // Expressions (precedence climbing)
  //===--------------------------------------------------------------------===//

  int parse_expr() {
    int e = parse_assignment();
    if (e == kFail)
      return kFail;
    if (!at_punct(","))
      return e;
    std::vector<int> out{e};
    while (at_punct(",")) {
      punct(out);
      int n = parse_assignment();
      if (n == kFail)
        return kFail;
      out.push_back(n);
    }
    return pool_.node(kind::CommaExpr, std::move(out));
  }

  bool at_assign_op() const {
    if (eof() || cur().type != Tok::Op)
      return false;
    std::string_view t = cur().text;
    return t == "=" || t == "+=" || t == "-=" || t == "*=" || t == "/=" ||
           t == "%=" || t == "&=" || t == "|=" || t == "^=" || t == "<<=" ||
           t == ">>=";
  }

  int parse_assignment() {
    int lhs = parse_conditional();
    if (lhs == kFail)
      return kFail;
    if (!at_assign_op())
      return lhs;
    std::vector<int> out{lhs};
    out.push_back(pool_.leaf(kind::Operator, take()));
    int rhs = parse_assignment();
    if (rhs == kFail)
      return kFail;
    out.push_back(rhs);
    return pool_.node(kind::Assign, std::move(out));
  }

  int parse_conditional() {
    int cond = parse_binary(0);
    if (cond == kFail)
      return kFail;
    if (!at_punct("?"))
      return cond;
    std::vector<int> out{cond};
    punct(out);
    int then_e = parse_expr();
    if (then_e == kFail)
      return kFail;
    out.push_back(then_e);
    if (!at_punct(":"))
      return kFail;
    punct(out);
    int else_e = parse_conditional();
    if (else_e == kFail)
      return kFail;
    out.push_back(else_e);
    return pool_.node(kind::Conditional, std::move(out));
  }

  // Binary precedence tiers, loosest first.
  int binary_level(std::string_view op) const {
    if (op == "||") return 0;
    if (op == "&&") return 1;
    if (op == "|") return 2;
    if (op == "^") return 3;
    if (op == "&") return 4;
    if (op == "==" || op == "!=") return 5;
    if (op == "<" || op == ">" || op == "<=" || op == ">=") return 6;
    if (op == "<<" || op == ">>") return 7;
    if (op == "+" || op == "-") return 8;
    if (op == "*" || op == "/" || op == "%") return 9;
    return -1;
  }

  int parse_binary(int level) {
    if (level > 9)
      return parse_unary();
    int lhs = parse_binary(level + 1);
    if (lhs == kFail)
      return kFail;
    while (!eof() && cur().type == Tok::Op && binary_level(cur().text) == level) {
      std::vector<int> out{lhs};
      out.push_back(pool_.leaf(kind::Operator, take()));
      int rhs = parse_binary(level + 1);
      if (rhs == kFail)
        return kFail;
      out.push_back(rhs);
      lhs = pool_.node(kind::BinaryOp, std::move(out));
    }
    return lhs;
  }

  bool at_type_start() const {
    if (eof())
      return false;
    if (cur().type == Tok::Keyword && is_type_keyword(cur().text))
      return true;
    return cur().type == Tok::Ident && looks_like_typedef_name(cur().text);
  }

  int parse_type_name() {
    std::vector<int> out;
    while (!eof()) {
      if (cur().type == Tok::Keyword && is_type_keyword(cur().text))
        out.push_back(pool_.leaf(kind::Keyword, take()));
      else if (cur().type == Tok::Ident && out.empty())
        out.push_back(pool_.leaf(kind::Identifier, take()));
      else if (cur().type == Tok::Ident &&
               pool_.at(out.back()).kind == std::string_view(kind::Keyword))
        out.push_back(pool_.leaf(kind::Identifier, take()));
      else if (at_op("*"))
        out.push_back(pool_.leaf(kind::Operator, take()));
      else
        break;
    }
    if (out.empty())
      return kFail;
    return pool_.node(kind::TypeName, std::move(out));
  }

  int parse_unary() {
    if (eof())
      return kFail;
    const Token &t = cur();
    if (t.type == Tok::Op &&
        (t.text == "!" || t.text == "~" || t.text == "-" || t.text == "+" ||
         t.text == "*" || t.text == "&" || t.text == "++" || t.text == "--")) {
      std::vector<int> out;
      out.push_back(pool_.leaf(kind::Operator, take()));
      int e = parse_unary();
      if (e == kFail)
        return kFail;
      out.push_back(e);
      return pool_.node(kind::UnaryOp, std::move(out));
    }
    if (t.type == Tok::Keyword && t.text == "sizeof") {
      std::vector<int> out;
      out.push_back(pool_.leaf(kind::Keyword, take()));
      if (at_punct("(") && has(1) &&
          ((ahead(1).type == Tok::Keyword && is_type_keyword(ahead(1).text)) ||
           (ahead(1).type == Tok::Ident && looks_like_typedef_name(ahead(1).text)))) {
        punct(out);
        int ty = parse_type_name();
        if (ty == kFail)
          return kFail;
        out.push_back(ty);
        if (!at_punct(")"))
          return kFail;
        punct(out);
      } else {
        int e = parse_unary();
        if (e == kFail)
          return kFail;
        out.push_back(e);
      }
      return pool_.node(kind::UnaryOp, std::move(out));
    }
    // Cast: "(type) unary".
    if (t.type == Tok::Punct && t.text == "(" && has(1)) {
      bool keyword_type = ahead(1).type == Tok::Keyword && is_type_keyword(ahead(1).text);
      bool typedef_type = ahead(1).type == Tok::Ident && looks_like_typedef_name(ahead(1).text);
      if (keyword_type || typedef_type) {
        std::size_t ck = pool_.checkpoint();
        std::size_t tk = pos_;
        std::vector<int> out;
        punct(out);
        int ty = parse_type_name();
        if (ty != kFail && at_punct(")")) {
          out.push_back(ty);
          punct(out);
          int e = parse_unary();
          if (e != kFail) {
            out.push_back(e);
            return pool_.node(kind::Cast, std::move(out));
          }
        }
        pool_.rollback(ck);
        pos_ = tk;
      }
    }
    return parse_postfix();
  }

  int parse_postfix() {
    int base = parse_primary();
    if (base == kFail)
      return kFail;
    while (!eof()) {
      if (at_punct("(")) {
        std::vector<int> args;
        punct(args);
        while (!eof() && !at_punct(")")) {
          int a = parse_assignment();
          if (a == kFail)
            return kFail;
          args.push_back(a);
          if (at_punct(","))
            punct(args);
          else
            break;
        }
        if (!at_punct(")"))
          return kFail;
        punct(args);
        int arglist = pool_.node(kind::ArgList, std::move(args));
        base = pool_.node(kind::Call, {base, arglist});
      } else if (at_punct("[")) {
        std::vector<int> out{base};
        punct(out);
        int e = parse_expr();
        if (e == kFail)
          return kFail;
        out.push_back(e);
        if (!at_punct("]"))
          return kFail;
        punct(out);
        base = pool_.node(kind::Index, std::move(out));
      } else if (at_op(".") || at_op("->")) {
        std::vector<int> out{base};
        out.push_back(pool_.leaf(kind::Operator, take()));
        if (eof() || cur().type != Tok::Ident)
          return kFail;
        out.push_back(pool_.leaf(kind::Identifier, take()));
        base = pool_.node(kind::Member, std::move(out));
      } else if (at_op("++") || at_op("--")) {
        std::vector<int> out{base};
        out.push_back(pool_.leaf(kind::Operator, take()));
        base = pool_.node(kind::PostfixOp, std::move(out));
      } else {
        break;
      }
    }
    return base;
  }

  int parse_primary() {
    if (eof())
      return kFail;
    const Token &t = cur();
    switch (t.type) {
    case Tok::Ident:
      return pool_.leaf(kind::Identifier, take());
    case Tok::Number:
    case Tok::String:
    case Tok::CharLit:
      return pool_.leaf(kind::Literal, take());
    case Tok::Punct:
      if (t.text == "(") {
        std::vector<int> out;
        punct(out);
        int e = parse_expr();
        if (e == kFail)
          return kFail;
        out.push_back(e);
        if (!at_punct(")"))
          return kFail;
        punct(out);
        return pool_.node(kind::Paren, std::move(out));
      }
      if (t.text == "{")
        return parse_init_list();
      return kFail;
    default:
      return kFail;
    }
  }

  std::string_view src_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  Pool pool_;
};

} // namespace

//===----------------------------------------------------------------------===//
// Tree assembly: preorder flattening, heights, digests
//===----------------------------------------------------------------------===//

class TreeAssembler {
public:
  static SyntaxTree assemble(const Pool &pool, int root, std::string grammar_id,
                             Digest128 source_digest);
  static SyntaxTree assemble_spec(const NodeSpec &root, std::string grammar_id);
};

namespace {

void compute_digests(std::vector<Digest128> &out,
                     const std::vector<SyntaxNode> &nodes) {
  // Children have larger preorder indices, so a reverse sweep sees children
  // before parents.
  out.resize(nodes.size());
  for (std::size_t i = nodes.size(); i-- > 0;) {
    const SyntaxNode &n = nodes[i];
    Fnv128 h;
    h.update_field(n.kind);
    h.update_byte(n.leaf ? 1 : 0);
    if (n.leaf)
      h.update_field(n.token);
    h.update_u32(static_cast<std::uint32_t>(n.children.size()));
    for (NodeId c : n.children) {
      const Digest128 &d = out[static_cast<std::size_t>(c)];
      h.update_u32(static_cast<std::uint32_t>(d.hi >> 32));
      h.update_u32(static_cast<std::uint32_t>(d.hi));
      h.update_u32(static_cast<std::uint32_t>(d.lo >> 32));
      h.update_u32(static_cast<std::uint32_t>(d.lo));
    }
    out[i] = h.finish();
  }
}

} // namespace

SyntaxTree TreeAssembler::assemble(const Pool &pool, int root, std::string grammar_id,
                                   Digest128 source_digest) {
  SyntaxTree t;
  t.grammar_id_ = std::move(grammar_id);
  t.source_digest_ = source_digest;

  // Iterative preorder copy.
  struct Frame {
    int tmp_id;
    NodeId parent;
  };
  std::vector<Frame> stack{{root, kInvalidNode}};
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    const TmpNode &src = pool.at(f.tmp_id);
    NodeId id = static_cast<NodeId>(t.nodes_.size());
    t.nodes_.push_back(SyntaxNode{src.kind, src.token, src.leaf, src.span, f.parent, {}, 1});
    if (f.parent != kInvalidNode)
      t.nodes_[static_cast<std::size_t>(f.parent)].children.push_back(id);
    for (std::size_t i = src.children.size(); i-- > 0;)
      stack.push_back({src.children[i], id});
  }

  // Preorder-pushed children of the same parent must keep source order; the
  // reversed stack push above already guarantees it.
  t.subtree_end_.assign(t.nodes_.size(), 0);
  for (std::size_t i = t.nodes_.size(); i-- > 0;) {
    SyntaxNode &n = t.nodes_[i];
    NodeId end = static_cast<NodeId>(i) + 1;
    int h = 1;
    for (NodeId c : n.children) {
      end = std::max(end, t.subtree_end_[static_cast<std::size_t>(c)]);
      h = std::max(h, t.nodes_[static_cast<std::size_t>(c)].height + 1);
    }
    t.subtree_end_[i] = end;
    n.height = h;
  }
  compute_digests(t.digests_, t.nodes_);
  return t;
}

SyntaxTree TreeAssembler::assemble_spec(const NodeSpec &root, std::string grammar_id) {
  Pool pool;
  // Build bottom-up into the pool.
  struct Rec {
    static int build(Pool &p, const NodeSpec &s) {
      if (s.token.has_value() && s.children.empty())
        return p.leaf_span(intern(s.kind), *s.token, Span{0, 0});
      std::vector<int> kids;
      kids.reserve(s.children.size());
      for (const NodeSpec &c : s.children)
        kids.push_back(build(p, c));
      return p.node(intern(s.kind), std::move(kids));
    }
    // TmpNode stores const char*; keep spec-provided kinds alive for the
    // duration of assembly. Guarded: build_tree may run from worker threads.
    static const char *intern(const std::string &k) {
      static std::mutex mu;
      static std::unordered_set<std::string> table;
      std::lock_guard<std::mutex> lock(mu);
      return table.insert(k).first->c_str();
    }
  };
  int root_id = Rec::build(pool, root);
  return assemble(pool, root_id, std::move(grammar_id), Digest128{});
}

//===----------------------------------------------------------------------===//
// Public entry points
//===----------------------------------------------------------------------===//

bool grammar_registered(std::string_view grammar_id) {
  return grammar_id == kGrammarCSubset;
}

SyntaxTree parse_source(std::string_view text, std::string_view grammar_id) {
  if (!grammar_registered(grammar_id))
    throw Error("unknown grammar_id: " + std::string(grammar_id));
  Lexer lexer(text);
  Parser parser(text, lexer.run());
  int root = parser.run();
  return TreeAssembler::assemble(parser.pool(), root, std::string(grammar_id),
                                 digest_bytes(text));
}

SyntaxTree build_tree(const NodeSpec &root, std::string_view grammar_id) {
  return TreeAssembler::assemble_spec(root, std::string(grammar_id));
}

std::string quote_token(std::string_view token) {
  std::string out;
  out.reserve(token.size() + 2);
  out += '"';
  for (unsigned char c : token) {
    switch (c) {
    case '"': out += "\\\""; break;
    case '\\': out += "\\\\"; break;
    case '\n': out += "\\n"; break;
    case '\t': out += "\\t"; break;
    case '\r': out += "\\r"; break;
    default:
      if (c < 0x20 || c == 0x7f) {
        static const char *hex = "0123456789abcdef";
        out += "\\x";
        out += hex[c >> 4];
        out += hex[c & 0xf];
      } else {
        out += static_cast<char>(c);
      }
    }
  }
  out += '"';
  return out;
}

std::optional<std::string> unquote_token(std::string_view quoted) {
  if (quoted.size() < 2 || quoted.front() != '"' || quoted.back() != '"')
    return std::nullopt;
  std::string out;
  for (std::size_t i = 1; i + 1 < quoted.size(); ++i) {
    char c = quoted[i];
    if (c != '\\') {
      out += c;
      continue;
    }
    if (i + 2 >= quoted.size())
      return std::nullopt; // escape runs into the closing quote
    char e = quoted[++i];
    switch (e) {
    case '"': out += '"'; break;
    case '\\': out += '\\'; break;
    case 'n': out += '\n'; break;
    case 't': out += '\t'; break;
    case 'r': out += '\r'; break;
    case 'x': {
      if (i + 2 >= quoted.size())
        return std::nullopt;
      auto hexval = [](char h) -> int {
        if (h >= '0' && h <= '9') return h - '0';
        if (h >= 'a' && h <= 'f') return h - 'a' + 10;
        if (h >= 'A' && h <= 'F') return h - 'A' + 10;
        return -1;
      };
      int hi = hexval(quoted[i + 1]), lo = hexval(quoted[i + 2]);
      if (hi < 0 || lo < 0)
        return std::nullopt;
      out += static_cast<char>(hi * 16 + lo);
      i += 2;
      break;
    }
    default:
      return std::nullopt;
    }
  }
  return out;
}

std::string SyntaxTree::to_sexpr(NodeId id) const {
  const SyntaxNode &n = node(id);
  std::string out = "(" + n.kind;
  if (n.leaf) {
    out += ' ';
    out += quote_token(n.token);
  }
  for (NodeId c : n.children) {
    out += ' ';
    out += to_sexpr(c);
  }
  out += ')';
  return out;
}

std::string reconstruct_source(const SyntaxTree &tree, std::string_view source) {
  std::string out;
  std::size_t pos = 0;
  for (NodeId id = 0; id < static_cast<NodeId>(tree.size()); ++id) {
    if (!tree.is_leaf(id))
      continue;
    Span s = tree.span(id);
    if (s.begin == s.end && tree.token(id).empty())
      continue; // degenerate empty-file root
    if (s.begin < pos)
      return out; // overlapping leaves; reconstruction is already broken
    out += source.substr(pos, s.begin - pos);
    out += tree.token(id);
    pos = s.end;
  }
  out += source.substr(pos);
  return out;
}

NodeId enclosing_function(const SyntaxTree &tree, NodeId id) {
  for (NodeId cur = id; cur != kInvalidNode; cur = tree.parent(cur))
    if (tree.kind(cur) == kind::FunctionDef)
      return cur;
  return kInvalidNode;
}

std::string function_name(const SyntaxTree &tree, NodeId fn) {
  if (fn == kInvalidNode || tree.kind(fn) != kind::FunctionDef)
    return {};
  for (NodeId c : tree.children(fn)) {
    if (tree.kind(c) != kind::Declarator)
      continue;
    std::string name;
    for (NodeId d : tree.children(c))
      if (tree.kind(d) == kind::Identifier)
        name = tree.token(d);
    return name;
  }
  return {};
}

} // namespace fixprint::syntax

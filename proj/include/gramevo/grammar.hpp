#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gramevo/format.hpp"

namespace gramevo {

// ---------------------------------------------------------------------------
// Grammar model
//
// A context-free grammar over three symbol kinds:
//   <name>                       non-terminal reference
//   key:value                    fixed terminal attribute
//   [name,kind,count,min,max]    parameterised terminal block; `kind` is
//                                int or float, `count` values are sampled
//                                uniformly from [min, max]
//
// Grammar text is line oriented: a rule is `<name> ::= alt | alt | ...`,
// alternatives may continue on following lines that start with `|` or with
// indented whitespace, `#` starts a comment, blank lines are ignored.
// ---------------------------------------------------------------------------

struct NonTerminal {
  std::string name;
  friend bool operator==(const NonTerminal&, const NonTerminal&) = default;
};

struct TerminalAttr {
  std::string key;
  std::string value;
  friend bool operator==(const TerminalAttr&, const TerminalAttr&) = default;
};

enum class ParamKind { Int, Float };

struct ParamBlock {
  std::string name;
  ParamKind kind = ParamKind::Int;
  int count = 1;
  double min_value = 0.0;
  double max_value = 0.0;
  friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

using Symbol = std::variant<NonTerminal, TerminalAttr, ParamBlock>;
using Alternative = std::vector<Symbol>;

struct Production {
  std::string lhs;
  std::vector<Alternative> alternatives;
  friend bool operator==(const Production&, const Production&) = default;
};

enum class GrammarErrorKind {
  MalformedRule,
  UnknownNonTerminal,
  MalformedParamBlock,
  DuplicateLhs,
  EmptyAlternative,
  SymbolClash,        // an identifier used both as non-terminal and terminal
  MalformedStructure,
};

class GrammarError : public std::runtime_error {
 public:
  GrammarError(GrammarErrorKind kind, const std::string& message, int line = 0)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
        kind_(kind),
        line_(line) {}

  GrammarErrorKind kind() const { return kind_; }
  int line() const { return line_; }

 private:
  GrammarErrorKind kind_;
  int line_;
};

class Grammar {
 public:
  bool defines(const std::string& nt) const { return index_.count(nt) != 0; }

  const Production& production(const std::string& nt) const {
    auto it = index_.find(nt);
    if (it == index_.end())
      throw GrammarError(GrammarErrorKind::UnknownNonTerminal, "unknown non-terminal <" + nt + ">");
    return productions_[it->second];
  }

  std::size_t alternatives_count(const std::string& nt) const {
    return production(nt).alternatives.size();
  }

  // Productions in definition order.
  const std::vector<Production>& productions() const { return productions_; }

  // Terminal identifiers: attribute keys and parameter block names.
  const std::set<std::string>& terminals() const { return terminals_; }

  std::size_t size() const { return productions_.size(); }

  void add_production(Production p, int line = 0) {
    if (index_.count(p.lhs))
      throw GrammarError(GrammarErrorKind::DuplicateLhs, "duplicate rule for <" + p.lhs + ">", line);
    index_[p.lhs] = productions_.size();
    productions_.push_back(std::move(p));
  }

  friend bool operator==(const Grammar& a, const Grammar& b) {
    return a.productions_ == b.productions_;
  }

 private:
  std::vector<Production> productions_;
  std::map<std::string, std::size_t> index_;
  std::set<std::string> terminals_;

  friend Grammar parse_grammar(const std::string&);
};

namespace detail {

inline std::string strip_comment(std::string_view line) {
  auto pos = line.find('#');
  if (pos != std::string_view::npos) line = line.substr(0, pos);
  return std::string(line);
}

inline bool valid_identifier(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c == '<' || c == '>' || c == '[' || c == ']' || c == '|' || c == ' ' || c == '\t') return false;
  return true;
}

inline ParamBlock parse_param_block(std::string_view body, int line) {
  auto fields = split(body, ',');
  if (fields.size() != 5)
    throw GrammarError(GrammarErrorKind::MalformedParamBlock,
                       "parameter block needs 5 fields [name,kind,count,min,max]: [" + std::string(body) + "]",
                       line);
  ParamBlock pb;
  pb.name = std::string(trim(fields[0]));
  if (!valid_identifier(pb.name) || pb.name.find(':') != std::string::npos)
    throw GrammarError(GrammarErrorKind::MalformedParamBlock, "bad parameter name in [" + std::string(body) + "]", line);

  auto kind = trim(fields[1]);
  if (kind == "int")
    pb.kind = ParamKind::Int;
  else if (kind == "float")
    pb.kind = ParamKind::Float;
  else
    throw GrammarError(GrammarErrorKind::MalformedParamBlock,
                       "parameter kind must be int or float, got '" + std::string(kind) + "'", line);

  long long count = 0;
  if (!parse_long(trim(fields[2]), count) || count < 1)
    throw GrammarError(GrammarErrorKind::MalformedParamBlock, "parameter count must be a positive integer", line);
  pb.count = static_cast<int>(count);

  if (pb.kind == ParamKind::Int) {
    long long lo = 0, hi = 0;
    if (!parse_long(trim(fields[3]), lo) || !parse_long(trim(fields[4]), hi))
      throw GrammarError(GrammarErrorKind::MalformedParamBlock, "int parameter bounds must be integers", line);
    pb.min_value = static_cast<double>(lo);
    pb.max_value = static_cast<double>(hi);
  } else {
    double lo = 0, hi = 0;
    if (!parse_double(trim(fields[3]), lo) || !parse_double(trim(fields[4]), hi))
      throw GrammarError(GrammarErrorKind::MalformedParamBlock, "float parameter bounds must be numbers", line);
    pb.min_value = lo;
    pb.max_value = hi;
  }
  if (pb.min_value > pb.max_value)
    throw GrammarError(GrammarErrorKind::MalformedParamBlock, "parameter min exceeds max in [" + std::string(body) + "]", line);
  return pb;
}

// Tokenizes the right-hand side of one rule into alternatives.
inline std::vector<Alternative> parse_rhs(std::string_view rhs, const std::string& lhs, int line) {
  std::vector<Alternative> alternatives;
  Alternative current;
  std::size_t i = 0;
  const std::size_t n = rhs.size();

  auto close_alternative = [&] {
    if (current.empty())
      throw GrammarError(GrammarErrorKind::EmptyAlternative, "empty alternative in rule <" + lhs + ">", line);
    alternatives.push_back(std::move(current));
    current.clear();
  };

  while (i < n) {
    char c = rhs[i];
    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++i;
      continue;
    }
    if (c == '|') {
      close_alternative();
      ++i;
      continue;
    }
    if (c == '<') {
      auto end = rhs.find('>', i);
      if (end == std::string_view::npos)
        throw GrammarError(GrammarErrorKind::MalformedRule, "unterminated non-terminal in rule <" + lhs + ">", line);
      std::string name(rhs.substr(i + 1, end - i - 1));
      if (!valid_identifier(name))
        throw GrammarError(GrammarErrorKind::MalformedRule, "bad non-terminal name <" + name + ">", line);
      if (end + 1 < n && rhs[end + 1] != ' ' && rhs[end + 1] != '\t')
        throw GrammarError(GrammarErrorKind::MalformedRule, "junk after non-terminal <" + name + ">", line);
      current.push_back(NonTerminal{std::move(name)});
      i = end + 1;
      continue;
    }
    if (c == '[') {
      auto end = rhs.find(']', i);
      if (end == std::string_view::npos)
        throw GrammarError(GrammarErrorKind::MalformedParamBlock, "unterminated parameter block in rule <" + lhs + ">", line);
      if (end + 1 < n && rhs[end + 1] != ' ' && rhs[end + 1] != '\t')
        throw GrammarError(GrammarErrorKind::MalformedParamBlock, "junk after parameter block in rule <" + lhs + ">", line);
      current.push_back(parse_param_block(rhs.substr(i + 1, end - i - 1), line));
      i = end + 1;
      continue;
    }
    // Plain token: a key:value terminal attribute.
    auto end = rhs.find_first_of(" \t", i);
    if (end == std::string_view::npos) end = n;
    std::string_view token = rhs.substr(i, end - i);
    auto colon = token.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == token.size())
      throw GrammarError(GrammarErrorKind::MalformedRule,
                         "expected key:value terminal, got '" + std::string(token) + "' in rule <" + lhs + ">", line);
    current.push_back(TerminalAttr{std::string(token.substr(0, colon)), std::string(token.substr(colon + 1))});
    i = end;
  }
  close_alternative();
  return alternatives;
}

}  // namespace detail

inline Grammar parse_grammar(const std::string& text) {
  struct RawRule {
    std::string content;  // logical line with continuations joined
    int line = 0;
  };
  std::vector<RawRule> rules;

  int lineno = 0;
  for (auto raw : split(text, '\n')) {
    ++lineno;
    std::string stripped = detail::strip_comment(raw);
    if (trim(stripped).empty()) continue;
    bool continuation = stripped[0] == ' ' || stripped[0] == '\t' || trim(stripped).front() == '|';
    if (stripped.find("::=") != std::string::npos && !continuation) {
      rules.push_back({stripped, lineno});
    } else if (continuation) {
      if (rules.empty())
        throw GrammarError(GrammarErrorKind::MalformedRule, "continuation line before any rule", lineno);
      rules.back().content += " " + std::string(trim(stripped));
    } else {
      throw GrammarError(GrammarErrorKind::MalformedRule, "expected `<name> ::= ...`", lineno);
    }
  }

  Grammar g;
  for (const auto& rule : rules) {
    auto sep = rule.content.find("::=");
    std::string_view lhs_text = trim(std::string_view(rule.content).substr(0, sep));
    if (lhs_text.size() < 3 || lhs_text.front() != '<' || lhs_text.back() != '>')
      throw GrammarError(GrammarErrorKind::MalformedRule, "left-hand side must be <name>", rule.line);
    std::string lhs(lhs_text.substr(1, lhs_text.size() - 2));
    if (!detail::valid_identifier(lhs))
      throw GrammarError(GrammarErrorKind::MalformedRule, "bad non-terminal name <" + lhs + ">", rule.line);

    Production p;
    p.lhs = lhs;
    p.alternatives = detail::parse_rhs(std::string_view(rule.content).substr(sep + 3), lhs, rule.line);
    g.add_production(std::move(p), rule.line);
  }

  // Every referenced non-terminal must be defined. Attribute keys may repeat
  // non-terminal names (`<bias> ::= bias:True` is idiomatic), because their
  // `key:value` spelling can never be confused with an expansion; a parameter
  // block's bare name has no such marker, so it must not shadow a
  // non-terminal.
  for (const auto& p : g.productions_) {
    for (const auto& alt : p.alternatives) {
      for (const auto& sym : alt) {
        if (const auto* nt = std::get_if<NonTerminal>(&sym)) {
          if (!g.defines(nt->name))
            throw GrammarError(GrammarErrorKind::UnknownNonTerminal,
                               "rule <" + p.lhs + "> references undefined <" + nt->name + ">");
        } else if (const auto* attr = std::get_if<TerminalAttr>(&sym)) {
          g.terminals_.insert(attr->key);
        } else if (const auto* pb = std::get_if<ParamBlock>(&sym)) {
          g.terminals_.insert(pb->name);
          if (g.defines(pb->name))
            throw GrammarError(GrammarErrorKind::SymbolClash,
                               "'" + pb->name + "' is both a non-terminal and a parameter block");
        }
      }
    }
  }
  return g;
}

inline std::string print_symbol(const Symbol& sym) {
  if (const auto* nt = std::get_if<NonTerminal>(&sym)) return "<" + nt->name + ">";
  if (const auto* attr = std::get_if<TerminalAttr>(&sym)) return attr->key + ":" + attr->value;
  const auto& pb = std::get<ParamBlock>(sym);
  std::string lo, hi;
  if (pb.kind == ParamKind::Int) {
    lo = format_int(static_cast<long long>(pb.min_value));
    hi = format_int(static_cast<long long>(pb.max_value));
  } else {
    lo = format_double(pb.min_value);
    hi = format_double(pb.max_value);
  }
  return "[" + pb.name + "," + (pb.kind == ParamKind::Int ? "int" : "float") + "," +
         format_int(pb.count) + "," + lo + "," + hi + "]";
}

// Canonical one-rule-per-line form; parse_grammar(print_grammar(g)) == g.
inline std::string print_grammar(const Grammar& g) {
  std::string out;
  for (const auto& p : g.productions()) {
    out += "<" + p.lhs + "> ::= ";
    for (std::size_t a = 0; a < p.alternatives.size(); ++a) {
      if (a) out += " | ";
      for (std::size_t s = 0; s < p.alternatives[a].size(); ++s) {
        if (s) out += " ";
        out += print_symbol(p.alternatives[a][s]);
      }
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Module structure: the ordered list of (start symbol, layer-count bounds)
// that fixes the outer genotype layout. File format: one `name min max` per
// line; `#` comments and blank lines are ignored.
// ---------------------------------------------------------------------------

struct StructureEntry {
  std::string nonterminal;
  int min_layers = 1;
  int max_layers = 1;
  friend bool operator==(const StructureEntry&, const StructureEntry&) = default;
};

struct GaStructure {
  std::vector<StructureEntry> entries;
  friend bool operator==(const GaStructure&, const GaStructure&) = default;
};

inline GaStructure parse_structure(const std::string& text) {
  GaStructure s;
  int lineno = 0;
  for (auto raw : split(text, '\n')) {
    ++lineno;
    std::string stripped = detail::strip_comment(raw);
    auto content = trim(stripped);
    if (content.empty()) continue;

    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    while (i < content.size()) {
      while (i < content.size() && (content[i] == ' ' || content[i] == '\t')) ++i;
      if (i >= content.size()) break;
      auto end = content.find_first_of(" \t", i);
      if (end == std::string_view::npos) end = content.size();
      tokens.push_back(content.substr(i, end - i));
      i = end;
    }
    if (tokens.size() != 3)
      throw GrammarError(GrammarErrorKind::MalformedStructure, "expected `name min max`", lineno);

    StructureEntry e;
    std::string_view name = tokens[0];
    if (name.size() >= 2 && name.front() == '<' && name.back() == '>') name = name.substr(1, name.size() - 2);
    if (!detail::valid_identifier(name))
      throw GrammarError(GrammarErrorKind::MalformedStructure, "bad module name", lineno);
    e.nonterminal = std::string(name);

    long long lo = 0, hi = 0;
    if (!parse_long(tokens[1], lo) || !parse_long(tokens[2], hi))
      throw GrammarError(GrammarErrorKind::MalformedStructure, "layer bounds must be integers", lineno);
    e.min_layers = static_cast<int>(lo);
    e.max_layers = static_cast<int>(hi);
    s.entries.push_back(std::move(e));
  }
  return s;
}

enum class StructureIssueKind { UnknownNonTerminal, NonPositiveMin, MinExceedsMax };

struct StructureIssue {
  StructureIssueKind kind;
  std::size_t entry_index = 0;
  std::string message;
};

// Checks a module structure against a grammar; empty result means valid.
inline std::vector<StructureIssue> validate_structure(const Grammar& g, const GaStructure& s) {
  std::vector<StructureIssue> issues;
  for (std::size_t i = 0; i < s.entries.size(); ++i) {
    const auto& e = s.entries[i];
    if (!g.defines(e.nonterminal))
      issues.push_back({StructureIssueKind::UnknownNonTerminal, i,
                        "module <" + e.nonterminal + "> is not defined by the grammar"});
    if (e.min_layers < 1)
      issues.push_back({StructureIssueKind::NonPositiveMin, i,
                        "module <" + e.nonterminal + "> must allow at least one layer"});
    if (e.min_layers > e.max_layers)
      issues.push_back({StructureIssueKind::MinExceedsMax, i,
                        "module <" + e.nonterminal + "> has min_layers > max_layers"});
  }
  return issues;
}

}  // namespace gramevo

#include "ddrmpc/lp_format.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace ddrmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append_linear_terms(std::ostringstream& out, const Eigen::VectorXd& coeffs,
                         bool* first) {
  for (int j = 0; j < coeffs.size(); ++j) {
    const double c = coeffs(j);
    if (c == 0.0) continue;
    if (*first) {
      out << fmt(c) << " x" << j;
      *first = false;
    } else {
      out << (c < 0 ? " - " : " + ") << fmt(std::abs(c)) << " x" << j;
    }
  }
}

struct Token {
  enum Kind { Number, Name, Op, End } kind = End;
  std::string text;
  double value = 0.0;
  int line = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) {}

  Token next() {
    skip();
    Token t;
    t.line = line_;
    if (pos_ >= text_.size()) return t;
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      size_t end = pos_;
      while (end < text_.size() &&
             (std::isdigit(static_cast<unsigned char>(text_[end])) || text_[end] == '.' ||
              text_[end] == 'e' || text_[end] == 'E' ||
              ((text_[end] == '+' || text_[end] == '-') &&
               (text_[end - 1] == 'e' || text_[end - 1] == 'E'))))
        ++end;
      t.kind = Token::Number;
      t.text = text_.substr(pos_, end - pos_);
      t.value = std::stod(t.text);
      pos_ = end;
      return t;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t end = pos_;
      while (end < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[end])) ||
                                    text_[end] == '_'))
        ++end;
      t.kind = Token::Name;
      t.text = text_.substr(pos_, end - pos_);
      pos_ = end;
      return t;
    }
    if (c == '<' || c == '>') {
      t.kind = Token::Op;
      t.text = std::string(1, c);
      ++pos_;
      if (pos_ < text_.size() && text_[pos_] == '=') ++pos_;  // <= / >= fold to < / >
      return t;
    }
    t.kind = Token::Op;
    t.text = std::string(1, c);
    ++pos_;
    return t;
  }

  Token peek() {
    const size_t save_pos = pos_;
    const int save_line = line_;
    Token t = next();
    pos_ = save_pos;
    line_ = save_line;
    return t;
  }

 private:
  void skip() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '\\') {  // comment to end of line
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else if (c == '\n') {
        ++line_;
        ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& text_;
  size_t pos_ = 0;
  int line_ = 1;
};

[[noreturn]] void fail(const Token& t, const std::string& what) {
  throw std::invalid_argument("lp parse error at line " + std::to_string(t.line) + ": " + what +
                              (t.text.empty() ? "" : " near '" + t.text + "'"));
}

bool is_keyword(const Token& t, const char* kw) {
  if (t.kind != Token::Name) return false;
  std::string lower;
  for (char c : t.text) lower.push_back(static_cast<char>(std::tolower(c)));
  return lower == kw;
}

int var_index(const Token& t, std::map<std::string, int>& vars) {
  auto it = vars.find(t.text);
  if (it != vars.end()) return it->second;
  if (t.text.size() < 2 || t.text[0] != 'x') fail(t, "unknown variable");
  const int idx = static_cast<int>(vars.size());
  vars.emplace(t.text, idx);
  return idx;
}

}  // namespace

std::string write_lp(const ProgramDescription& prog) {
  prog.validate();
  std::ostringstream out;
  out << "\\ generated program: " << prog.num_vars << " variables, " << prog.num_eq()
      << " equalities, " << prog.num_ineq() << " inequalities\n";
  out << "Minimize\n obj: ";
  bool first = true;
  append_linear_terms(out, prog.linear, &first);
  if (prog.constant != 0.0) {
    if (first) out << fmt(prog.constant);
    else out << (prog.constant < 0 ? " - " : " + ") << fmt(std::abs(prog.constant));
    first = false;
  }
  if (prog.quad.nonZeros() > 0) {
    out << (first ? "[ " : " + [ ");
    bool qfirst = true;
    for (int j = 0; j < prog.quad.outerSize(); ++j)
      for (Eigen::SparseMatrix<double>::InnerIterator it(prog.quad, j); it; ++it) {
        if (it.row() > it.col()) continue;  // emit upper triangle once
        const double c = it.row() == it.col() ? it.value() : 2.0 * it.value();
        if (c == 0.0) continue;
        if (qfirst) {
          out << fmt(c);
          qfirst = false;
        } else {
          out << (c < 0 ? " - " : " + ") << fmt(std::abs(c));
        }
        if (it.row() == it.col()) out << " x" << it.row() << " ^ 2";
        else out << " x" << it.row() << " * x" << it.col();
      }
    out << " ] / 2";
    first = false;
  }
  if (first) out << "0";
  out << "\nSubject To\n";
  const Eigen::SparseMatrix<double, Eigen::RowMajor> eq_rows = prog.eq_matrix;
  const Eigen::SparseMatrix<double, Eigen::RowMajor> in_rows = prog.ineq_matrix;
  auto write_row = [&out](const Eigen::SparseMatrix<double, Eigen::RowMajor>& mat, int i) {
    bool f = true;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(mat, i); it; ++it) {
      const double c = it.value();
      if (c == 0.0) continue;
      if (f) {
        out << fmt(c) << " x" << it.col();
        f = false;
      } else {
        out << (c < 0 ? " - " : " + ") << fmt(std::abs(c)) << " x" << it.col();
      }
    }
    if (f) out << "0 x0";
  };
  for (int i = 0; i < prog.num_eq(); ++i) {
    out << " eq" << i << ": ";
    write_row(eq_rows, i);
    out << " = " << fmt(prog.eq_rhs(i)) << "\n";
  }
  for (int i = 0; i < prog.num_ineq(); ++i) {
    out << " in" << i << ": ";
    write_row(in_rows, i);
    out << " <= " << fmt(prog.ineq_rhs(i)) << "\n";
  }
  out << "Bounds\n";
  for (int j = 0; j < prog.num_vars; ++j) {
    const double lo = prog.lower(j), hi = prog.upper(j);
    if (lo == -kInf && hi == kInf) out << " x" << j << " free\n";
    else if (lo == -kInf) out << " x" << j << " <= " << fmt(hi) << "\n";
    else if (hi == kInf) out << " x" << j << " >= " << fmt(lo) << "\n";
    else out << " " << fmt(lo) << " <= x" << j << " <= " << fmt(hi) << "\n";
  }
  out << "End\n";
  return out.str();
}

ProgramDescription parse_lp(const std::string& text) {
  Lexer lex(text);
  Token t = lex.next();
  if (!is_keyword(t, "minimize") && !is_keyword(t, "min"))
    fail(t, "expected Minimize");

  std::map<std::string, int> vars;
  double constant = 0.0;
  std::vector<std::pair<int, double>> lin;
  std::vector<Eigen::Triplet<double>> quad_trips;

  // Objective: optional 'obj:' label, then signed linear terms, optional
  // [ quadratic ] / 2 section, until 'Subject' keyword.
  t = lex.next();
  if (t.kind == Token::Name && lex.peek().text == ":") {
    lex.next();
    t = lex.next();
  }
  double sign = 1.0;
  bool in_quad = false;
  while (true) {
    if (t.kind == Token::End) fail(t, "unexpected end in objective");
    if (is_keyword(t, "subject") || is_keyword(t, "st")) break;
    if (t.text == "+") { t = lex.next(); continue; }
    if (t.text == "-") { sign = -sign; t = lex.next(); continue; }
    if (t.text == "[") { in_quad = true; sign = 1.0; t = lex.next(); continue; }
    if (t.text == "]") {
      Token slash = lex.next();
      if (slash.text != "/" || lex.next().value != 2.0) fail(slash, "expected ] / 2");
      in_quad = false;
      sign = 1.0;
      t = lex.next();
      continue;
    }
    double coeff = sign;
    if (t.kind == Token::Number) {
      coeff *= t.value;
      t = lex.next();
    }
    if (t.kind != Token::Name || is_keyword(t, "subject")) {
      if (!in_quad) {
        constant += coeff;  // bare constant term
        sign = 1.0;
        continue;
      }
      fail(t, "expected variable in quadratic section");
    }
    const int v1 = var_index(t, vars);
    t = lex.next();
    if (in_quad) {
      if (t.text == "^") {
        if (lex.next().value != 2.0) fail(t, "only squares supported");
        quad_trips.emplace_back(v1, v1, coeff);
        t = lex.next();
      } else if (t.text == "*") {
        Token other = lex.next();
        if (other.kind != Token::Name) fail(other, "expected variable after *");
        const int v2 = var_index(other, vars);
        quad_trips.emplace_back(v1, v2, coeff / 2.0);
        quad_trips.emplace_back(v2, v1, coeff / 2.0);
        t = lex.next();
      } else {
        fail(t, "expected ^ 2 or * in quadratic section");
      }
    } else {
      lin.emplace_back(v1, coeff);
    }
    sign = 1.0;
  }
  if (is_keyword(t, "subject")) {
    Token to = lex.next();
    if (!is_keyword(to, "to")) fail(to, "expected To");
  }

  struct Row {
    std::vector<std::pair<int, double>> terms;
    char rel = '<';
    double rhs = 0.0;
    bool is_eq = false;
  };
  std::vector<Row> rows;

  t = lex.next();
  while (!is_keyword(t, "bounds") && !is_keyword(t, "end")) {
    if (t.kind == Token::End) fail(t, "unexpected end in constraints");
    Row row;
    if (t.kind == Token::Name && lex.peek().text == ":") {
      lex.next();
      t = lex.next();
    }
    double s = 1.0;
    while (t.text != "=" && t.text != "<" && t.text != ">") {
      if (t.kind == Token::End) fail(t, "constraint missing relation");
      if (t.text == "+") { t = lex.next(); continue; }
      if (t.text == "-") { s = -s; t = lex.next(); continue; }
      double coeff = s;
      if (t.kind == Token::Number) {
        coeff *= t.value;
        t = lex.next();
      }
      if (t.kind != Token::Name) fail(t, "expected variable");
      row.terms.emplace_back(var_index(t, vars), coeff);
      s = 1.0;
      t = lex.next();
    }
    row.is_eq = t.text == "=";
    row.rel = t.text[0];
    Token rhs_tok = lex.next();
    double rsign = 1.0;
    while (rhs_tok.text == "-" || rhs_tok.text == "+") {
      if (rhs_tok.text == "-") rsign = -rsign;
      rhs_tok = lex.next();
    }
    if (rhs_tok.kind != Token::Number) fail(rhs_tok, "expected numeric rhs");
    row.rhs = rsign * rhs_tok.value;
    if (row.rel == '>') {  // normalize to <=
      for (auto& term : row.terms) term.second = -term.second;
      row.rhs = -row.rhs;
      row.rel = '<';
    }
    rows.push_back(std::move(row));
    t = lex.next();
  }

  const int n = static_cast<int>(vars.size());
  // LP format default bound is x >= 0.
  Eigen::VectorXd lower = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd upper = Eigen::VectorXd::Constant(n, kInf);

  if (is_keyword(t, "bounds")) {
    t = lex.next();
    while (!is_keyword(t, "end")) {
      if (t.kind == Token::End) fail(t, "unexpected end in bounds");
      // forms: lo <= x <= hi | x <= hi | x >= lo | x free | lo <= x
      double first_num = 0.0;
      bool have_first = false;
      double s = 1.0;
      while (t.text == "-" || t.text == "+") {
        if (t.text == "-") s = -s;
        t = lex.next();
      }
      if (t.kind == Token::Number) {
        first_num = s * t.value;
        have_first = true;
        Token rel = lex.next();
        if (rel.text != "<") fail(rel, "expected <= after bound value");
        t = lex.next();
      }
      if (t.kind != Token::Name) fail(t, "expected variable in bounds");
      const int v = var_index(t, vars);
      if (v >= n) fail(t, "bounds introduced a new variable");
      t = lex.next();
      if (have_first) lower(v) = first_num;
      if (is_keyword(t, "free")) {
        lower(v) = -kInf;
        upper(v) = kInf;
        t = lex.next();
      } else if (t.text == "<") {
        Token num = lex.next();
        double s2 = 1.0;
        while (num.text == "-" || num.text == "+") {
          if (num.text == "-") s2 = -s2;
          num = lex.next();
        }
        if (num.kind != Token::Number) fail(num, "expected bound value");
        upper(v) = s2 * num.value;
        if (!have_first) lower(v) = -kInf;
        t = lex.next();
      } else if (t.text == ">") {
        Token num = lex.next();
        double s2 = 1.0;
        while (num.text == "-" || num.text == "+") {
          if (num.text == "-") s2 = -s2;
          num = lex.next();
        }
        if (num.kind != Token::Number) fail(num, "expected bound value");
        lower(v) = s2 * num.value;
        upper(v) = kInf;
        t = lex.next();
      } else if (!have_first) {
        fail(t, "malformed bounds line");
      }
    }
  }

  ProgramDescription prog;
  prog.num_vars = n;
  prog.lower = lower;
  prog.upper = upper;
  prog.linear = Eigen::VectorXd::Zero(n);
  for (const auto& [v, c] : lin) prog.linear(v) += c;
  prog.constant = constant;
  prog.quad.resize(n, n);
  prog.quad.setFromTriplets(quad_trips.begin(), quad_trips.end());

  int n_eq = 0, n_in = 0;
  for (const auto& row : rows) (row.is_eq ? n_eq : n_in)++;
  prog.eq_matrix.resize(n_eq, n);
  prog.ineq_matrix.resize(n_in, n);
  prog.eq_rhs.resize(n_eq);
  prog.ineq_rhs.resize(n_in);
  std::vector<Eigen::Triplet<double>> eq_trips, in_trips;
  int ie = 0, ii = 0;
  for (const auto& row : rows) {
    if (row.is_eq) {
      for (const auto& [v, c] : row.terms) eq_trips.emplace_back(ie, v, c);
      prog.eq_rhs(ie++) = row.rhs;
    } else {
      for (const auto& [v, c] : row.terms) in_trips.emplace_back(ii, v, c);
      prog.ineq_rhs(ii++) = row.rhs;
    }
  }
  prog.eq_matrix.setFromTriplets(eq_trips.begin(), eq_trips.end());
  prog.ineq_matrix.setFromTriplets(in_trips.begin(), in_trips.end());
  prog.validate();
  return prog;
}

}  // namespace ddrmpc

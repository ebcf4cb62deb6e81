#include <cctype>
#include <string>

#include "miold/errors.hpp"
#include "miold/expr/expr.hpp"

namespace miold::expr {

namespace {

// Exact decimal/scientific literal to rational.
Rational decimal_to_rational(std::string_view digits, std::string_view fraction, long exponent) {
  mpz_class num(std::string(digits) + std::string(fraction), 10);
  Rational r(num);
  long shift = exponent - static_cast<long>(fraction.size());
  mpz_class ten_pow;
  mpz_ui_pow_ui(ten_pow.get_mpz_t(), 10, static_cast<unsigned long>(std::labs(shift)));
  if (shift >= 0)
    r *= ten_pow;
  else
    r /= ten_pow;
  r.canonicalize();
  return r;
}

class Parser {
 public:
  Parser(std::string_view text, std::span<const std::string> vars, const ParseOptions& options)
      : text_(text), vars_(vars), options_(options) {}

  Expr run() {
    skip_ws();
    if (at_end()) fail("empty expression");
    Expr e = expression();
    skip_ws();
    if (!at_end()) fail(std::string("unexpected '") + peek() + "'");
    return e;
  }

 private:
  std::string_view text_;
  std::span<const std::string> vars_;
  const ParseOptions& options_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& message) const { throw ParseError(message, pos_); }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip_ws();
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Expr expression() {
    Expr acc = term();
    for (;;) {
      if (accept('+'))
        acc = acc + term();
      else if (accept('-'))
        acc = acc - term();
      else
        return acc;
    }
  }

  Expr term() {
    Expr acc = factor();
    for (;;) {
      if (accept('*'))
        acc = acc * factor();
      else if (accept('/'))
        acc = acc / factor();
      else
        return acc;
    }
  }

  Expr factor() {
    if (accept('-')) return -factor();
    if (accept('+')) return factor();
    Expr base = atom();
    if (accept('^')) return pow(base, exponent());
    return base;
  }

  Rational number_literal() {
    skip_ws();
    const std::size_t start = pos_;
    std::size_t int_begin = pos_;
    while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
    std::string_view digits = text_.substr(int_begin, pos_ - int_begin);
    std::string_view fraction;
    if (peek() == '.') {
      ++pos_;
      std::size_t frac_begin = pos_;
      while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
      fraction = text_.substr(frac_begin, pos_ - frac_begin);
    }
    if (digits.empty() && fraction.empty()) {
      pos_ = start;
      fail("expected a number");
    }
    long exp10 = 0;
    if (peek() == 'e' || peek() == 'E') {
      std::size_t save = pos_;
      ++pos_;
      bool negative = false;
      if (peek() == '+' || peek() == '-') negative = text_[pos_++] == '-';
      std::size_t exp_begin = pos_;
      while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
      if (pos_ == exp_begin) {
        pos_ = save;  // not an exponent; leave 'e' for the caller
      } else {
        const auto text = std::string(text_.substr(exp_begin, pos_ - exp_begin));
        if (text.size() > 6) fail("exponent out of range");
        exp10 = std::stol(text);
        if (negative) exp10 = -exp10;
      }
    }
    return decimal_to_rational(digits.empty() ? "0" : digits, fraction, exp10);
  }

  Rational exponent() {
    skip_ws();
    if (accept('(')) {
      bool negative = accept('-');
      Rational r = number_literal();
      if (accept('/')) {
        Rational d = number_literal();
        if (d == 0) fail("zero denominator in exponent");
        r /= d;
      }
      expect(')');
      return negative ? Rational(-r) : r;
    }
    bool negative = accept('-');
    skip_ws();
    Rational r = number_literal();
    return negative ? Rational(-r) : r;
  }

  Expr atom() {
    skip_ws();
    const char c = peek();
    if (c == '(') {
      ++pos_;
      Expr e = expression();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return Expr::constant(number_literal());
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_') ++pos_;
      const std::string ident(text_.substr(start, pos_ - start));
      skip_ws();
      if (peek() == '(') {
        static const std::pair<const char*, Op> functions[] = {
            {"sin", Op::Sin}, {"cos", Op::Cos}, {"tan", Op::Tan},   {"sec", Op::Sec},
            {"exp", Op::Exp}, {"ln", Op::Ln},   {"sqrt", Op::Sqrt},
        };
        for (const auto& [name, op] : functions) {
          if (ident == name) {
            ++pos_;
            Expr arg = expression();
            expect(')');
            return apply_unary(op, arg);
          }
        }
        pos_ = start;
        fail("unknown function '" + ident + "'");
      }
      for (std::size_t i = 0; i < vars_.size(); ++i)
        if (vars_[i] == ident) return Expr::var(static_cast<int>(i));
      if (options_.definitions) {
        auto it = options_.definitions->find(ident);
        if (it != options_.definitions->end()) return it->second;
      }
      if (options_.known_params && !options_.known_params->contains(ident)) {
        pos_ = start;
        fail("unknown identifier '" + ident + "'");
      }
      return Expr::param(ident);
    }
    if (at_end()) fail("unexpected end of input");
    fail(std::string("unexpected '") + c + "'");
  }
};

}  // namespace

Expr parse(std::string_view text, std::span<const std::string> var_names, const ParseOptions& options) {
  return Parser(text, var_names, options).run();
}

}  // namespace miold::expr

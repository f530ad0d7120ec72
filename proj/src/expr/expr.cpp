#include "cdyn/expr.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace cdyn::expr {

namespace {

constexpr std::array<std::pair<std::string_view, Func>, 7> kFuncs{{
    {"sin", Func::Sin},
    {"cos", Func::Cos},
    {"tan", Func::Tan},
    {"sqrt", Func::Sqrt},
    {"exp", Func::Exp},
    {"log", Func::Log},
    {"abs", Func::Abs},
}};

std::shared_ptr<Node> make(Kind k) {
  auto n = std::make_shared<Node>();
  n->kind = k;
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------
// Construction and access

Expr Expr::number(double x) {
  auto n = make(Kind::Number);
  n->number = x;
  return Expr(std::move(n));
}
Expr Expr::pi() { return Expr(make(Kind::Pi)); }
Expr Expr::var(std::string name) {
  auto n = make(Kind::Var);
  n->name = std::move(name);
  return Expr(std::move(n));
}
Expr Expr::neg(Expr a) {
  auto n = make(Kind::Neg);
  n->a = std::move(a);
  return Expr(std::move(n));
}
Expr Expr::binary(Kind k, Expr a, Expr b) {
  auto n = make(k);
  n->a = std::move(a);
  n->b = std::move(b);
  return Expr(std::move(n));
}
Expr Expr::call(Func f, Expr a) {
  auto n = make(Kind::Call);
  n->func = f;
  n->a = std::move(a);
  return Expr(std::move(n));
}

Kind Expr::kind() const { return node_->kind; }
double Expr::number_value() const { return node_->number; }
const std::string& Expr::name() const { return node_->name; }
Func Expr::func() const { return node_->func; }
const Expr& Expr::lhs() const { return node_->a; }
const Expr& Expr::rhs() const { return node_->b; }

bool operator==(const Expr& x, const Expr& y) {
  if (x.node_ == y.node_) return true;
  if (!x.node_ || !y.node_) return false;
  const Node& a = *x.node_;
  const Node& b = *y.node_;
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Kind::Number: return a.number == b.number;
    case Kind::Pi: return true;
    case Kind::Var: return a.name == b.name;
    case Kind::Call: return a.func == b.func && a.a == b.a;
    case Kind::Neg: return a.a == b.a;
    default: return a.a == b.a && a.b == b.b;
  }
}

Expr operator+(Expr a, Expr b) { return Expr::binary(Kind::Add, std::move(a), std::move(b)); }
Expr operator-(Expr a, Expr b) { return Expr::binary(Kind::Sub, std::move(a), std::move(b)); }
Expr operator*(Expr a, Expr b) { return Expr::binary(Kind::Mul, std::move(a), std::move(b)); }

std::string_view func_name(Func f) {
  for (const auto& [name, fn] : kFuncs) {
    if (fn == f) return name;
  }
  return "?";
}

std::optional<Func> func_from_name(std::string_view name) {
  for (const auto& [n, fn] : kFuncs) {
    if (n == name) return fn;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  Expr parse_all() {
    Expr e = parse_expr();
    skip_ws();
    if (pos_ != src_.size()) fail({"+", "-", "*", "/", "^", "end of input"});
    return e;
  }

 private:
  // expr := term (('+'|'-') term)*
  Expr parse_expr() {
    Expr e = parse_term();
    for (;;) {
      skip_ws();
      if (accept('+')) {
        e = Expr::binary(Kind::Add, e, parse_term());
      } else if (accept('-')) {
        e = Expr::binary(Kind::Sub, e, parse_term());
      } else {
        return e;
      }
    }
  }

  // term := factor (('*'|'/') factor)*
  Expr parse_term() {
    Expr e = parse_factor();
    for (;;) {
      skip_ws();
      if (accept('*')) {
        e = Expr::binary(Kind::Mul, e, parse_factor());
      } else if (accept('/')) {
        e = Expr::binary(Kind::Div, e, parse_factor());
      } else {
        return e;
      }
    }
  }

  // factor := '-' factor | power
  Expr parse_factor() {
    skip_ws();
    if (accept('-')) return Expr::neg(parse_factor());
    return parse_power();
  }

  // power := atom ('^' factor)?
  Expr parse_power() {
    Expr base = parse_atom();
    skip_ws();
    if (accept('^')) return Expr::binary(Kind::Pow, base, parse_factor());
    return base;
  }

  // atom := number | ident | ident '(' expr ')' | '(' expr ')'
  Expr parse_atom() {
    skip_ws();
    if (pos_ >= src_.size()) fail({"number", "identifier", "(", "-"});
    char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_expr();
      skip_ws();
      if (!accept(')')) fail({")"});
      return e;
    }
    if (is_digit(c) || c == '.') return parse_number();
    if (is_ident_start(c)) {
      std::size_t start = pos_;
      while (pos_ < src_.size() && is_ident_char(src_[pos_])) ++pos_;
      std::string name(src_.substr(start, pos_ - start));
      std::size_t after = pos_;
      skip_ws();
      if (pos_ < src_.size() && src_[pos_] == '(') {
        auto f = func_from_name(name);
        if (!f) {
          throw ParseError(start, {"function name"},
                           "unknown function '" + name + "' at offset " + std::to_string(start));
        }
        ++pos_;
        Expr arg = parse_expr();
        skip_ws();
        if (!accept(')')) fail({")"});
        return Expr::call(*f, arg);
      }
      pos_ = after;
      if (name == "pi") return Expr::pi();
      return Expr::var(std::move(name));
    }
    fail({"number", "identifier", "(", "-"});
  }

  Expr parse_number() {
    std::size_t start = pos_;
    while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (pos_ < src_.size() && is_digit(src_[pos_])) {
        while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
      } else {
        pos_ = save;  // "2e" is the number 2 followed by identifier e
      }
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (ec != std::errc() || ptr != src_.data() + pos_) {
      pos_ = start;
      fail({"number"});
    }
    return Expr::number(value);
  }

  [[noreturn]] void fail(std::set<std::string> expected) const {
    std::ostringstream os;
    os << "syntax error at offset " << pos_ << ": expected ";
    bool first = true;
    for (const auto& e : expected) {
      os << (first ? "" : ", ") << "'" << e << "'";
      first = false;
    }
    throw ParseError(pos_, std::move(expected), os.str());
  }

  bool accept(char c) {
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void skip_ws() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' ||
                                  src_[pos_] == '\r')) {
      ++pos_;
    }
  }
  static bool is_digit(char c) { return c >= '0' && c <= '9'; }
  static bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  }
  static bool is_ident_char(char c) { return is_ident_start(c) || is_digit(c); }

  std::string_view src_;
  std::size_t pos_{0};
};

}  // namespace

Expr parse(std::string_view source) { return Parser(source).parse_all(); }

// ---------------------------------------------------------------------------
// Printer

namespace {

int precedence(const Expr& e) {
  switch (e.kind()) {
    case Kind::Add:
    case Kind::Sub: return 1;
    case Kind::Mul:
    case Kind::Div: return 2;
    case Kind::Neg: return 3;
    case Kind::Pow: return 4;
    default: return 5;
  }
}

void print(const Expr& e, std::string& out);

void print_wrapped(const Expr& e, bool wrap, std::string& out) {
  if (wrap) out += '(';
  print(e, out);
  if (wrap) out += ')';
}

void print(const Expr& e, std::string& out) {
  switch (e.kind()) {
    case Kind::Number: {
      std::array<char, 32> buf{};
      auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), e.number_value());
      out.append(buf.data(), ptr);
      return;
    }
    case Kind::Pi: out += "pi"; return;
    case Kind::Var: out += e.name(); return;
    case Kind::Call:
      out += func_name(e.func());
      out += '(';
      print(e.lhs(), out);
      out += ')';
      return;
    case Kind::Neg:
      out += '-';
      print_wrapped(e.lhs(), precedence(e.lhs()) < 3, out);
      return;
    case Kind::Add:
    case Kind::Sub:
      print_wrapped(e.lhs(), false, out);
      out += e.kind() == Kind::Add ? " + " : " - ";
      print_wrapped(e.rhs(), precedence(e.rhs()) <= 1, out);
      return;
    case Kind::Mul:
    case Kind::Div:
      print_wrapped(e.lhs(), precedence(e.lhs()) < 2, out);
      out += e.kind() == Kind::Mul ? "*" : "/";
      print_wrapped(e.rhs(), precedence(e.rhs()) <= 2, out);
      return;
    case Kind::Pow:
      print_wrapped(e.lhs(), precedence(e.lhs()) < 5, out);
      out += '^';
      print_wrapped(e.rhs(), precedence(e.rhs()) < 3, out);
      return;
  }
}

void collect_vars(const Expr& e, std::set<std::string>& out) {
  switch (e.kind()) {
    case Kind::Number:
    case Kind::Pi: return;
    case Kind::Var: out.insert(e.name()); return;
    case Kind::Neg:
    case Kind::Call: collect_vars(e.lhs(), out); return;
    default:
      collect_vars(e.lhs(), out);
      collect_vars(e.rhs(), out);
  }
}

}  // namespace

std::string to_string(const Expr& e) {
  std::string out;
  print(e, out);
  return out;
}

std::set<std::string> free_vars(const Expr& e) {
  std::set<std::string> out;
  collect_vars(e, out);
  return out;
}

int polynomial_degree(const Expr& e, const std::set<std::string>& vars) {
  auto cap = [](long d) { return static_cast<int>(std::min<long>(d, kNonPolynomial)); };
  switch (e.kind()) {
    case Kind::Number:
    case Kind::Pi: return 0;
    case Kind::Var: return vars.count(e.name()) ? 1 : 0;
    case Kind::Neg: return polynomial_degree(e.lhs(), vars);
    case Kind::Add:
    case Kind::Sub:
      return std::max(polynomial_degree(e.lhs(), vars), polynomial_degree(e.rhs(), vars));
    case Kind::Mul:
      return cap(static_cast<long>(polynomial_degree(e.lhs(), vars)) +
                 polynomial_degree(e.rhs(), vars));
    case Kind::Div:
      return polynomial_degree(e.rhs(), vars) == 0 ? polynomial_degree(e.lhs(), vars)
                                                   : kNonPolynomial;
    case Kind::Pow: {
      int base = polynomial_degree(e.lhs(), vars);
      int ex = polynomial_degree(e.rhs(), vars);
      if (base == 0 && ex == 0) return 0;
      if (ex == 0 && e.rhs().kind() == Kind::Number) {
        double k = e.rhs().number_value();
        if (k >= 0.0 && k == std::floor(k) && k < 64) return cap(static_cast<long>(base) * static_cast<long>(k));
      }
      return kNonPolynomial;
    }
    case Kind::Call: return polynomial_degree(e.lhs(), vars) == 0 ? 0 : kNonPolynomial;
  }
  return kNonPolynomial;
}

// ---------------------------------------------------------------------------
// Evaluation

double Bindings::at(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw UnboundVariable(name);
  return it->second;
}

namespace {

double constant_value(const Expr& e, const std::map<std::string, double>& constants) {
  Tape tape(e, [](const std::string&) { return std::optional<int>{}; }, constants);
  std::vector<double> none;
  return tape.eval<double>(std::span<const double>(none));
}

bool is_constant(const Expr& e, const Tape::Resolver& slot_of,
                 const std::map<std::string, double>& constants) {
  for (const auto& v : free_vars(e)) {
    if (slot_of(v) || !constants.count(v)) return false;
  }
  return true;
}

}  // namespace

Tape::Tape(const Expr& e, const Resolver& slot_of, const std::map<std::string, double>& constants)
    : source_(e) {
  emit(e, slot_of, constants);
}

int Tape::emit(const Expr& e, const Resolver& slot_of, const std::map<std::string, double>& constants) {
  Instr in{};
  in.node = e.node();
  switch (e.kind()) {
    case Kind::Number:
      in.op = Op::Const;
      in.c = e.number_value();
      break;
    case Kind::Pi:
      in.op = Op::Const;
      in.c = std::numbers::pi;
      break;
    case Kind::Var:
      if (auto slot = slot_of(e.name())) {
        in.op = Op::Slot;
        in.a = *slot;
      } else if (auto it = constants.find(e.name()); it != constants.end()) {
        in.op = Op::Const;
        in.c = it->second;
      } else {
        throw UnboundVariable(e.name());
      }
      break;
    case Kind::Neg:
      in.op = Op::Neg;
      in.a = emit(e.lhs(), slot_of, constants);
      break;
    case Kind::Call: {
      in.a = emit(e.lhs(), slot_of, constants);
      switch (e.func()) {
        case Func::Sin: in.op = Op::Sin; break;
        case Func::Cos: in.op = Op::Cos; break;
        case Func::Tan: in.op = Op::Tan; break;
        case Func::Sqrt: in.op = Op::Sqrt; break;
        case Func::Exp: in.op = Op::Exp; break;
        case Func::Log: in.op = Op::Log; break;
        case Func::Abs: in.op = Op::Abs; break;
      }
      break;
    }
    case Kind::Pow:
      in.a = emit(e.lhs(), slot_of, constants);
      if (is_constant(e.rhs(), slot_of, constants)) {
        in.op = Op::PowConst;
        in.c = constant_value(e.rhs(), constants);
      } else {
        in.op = Op::Pow;
        in.b = emit(e.rhs(), slot_of, constants);
      }
      break;
    default:
      in.a = emit(e.lhs(), slot_of, constants);
      in.b = emit(e.rhs(), slot_of, constants);
      in.op = e.kind() == Kind::Add   ? Op::Add
              : e.kind() == Kind::Sub ? Op::Sub
              : e.kind() == Kind::Mul ? Op::Mul
                                      : Op::Div;
      break;
  }
  code_.push_back(in);
  return static_cast<int>(code_.size()) - 1;
}

void Tape::domain_error(const Instr& in) const {
  // Rebuild a handle for the offending node by searching the source tree.
  std::function<const Expr*(const Expr&)> find = [&](const Expr& e) -> const Expr* {
    if (e.node() == in.node) return &e;
    switch (e.kind()) {
      case Kind::Number:
      case Kind::Pi:
      case Kind::Var: return nullptr;
      case Kind::Neg:
      case Kind::Call: return find(e.lhs());
      default:
        if (const Expr* hit = find(e.lhs())) return hit;
        return find(e.rhs());
    }
  };
  const Expr* hit = find(source_);
  throw DomainError(hit ? to_string(*hit) : std::string("<expression>"));
}

bool Tape::uses_slot(int i) const {
  return std::any_of(code_.begin(), code_.end(),
                     [i](const Instr& in) { return in.op == Op::Slot && in.a == i; });
}

namespace {

struct BoundTape {
  std::vector<std::string> names;
  std::vector<double> values;
  Tape tape;
};

BoundTape bind(const Expr& e, const Bindings& env, const std::vector<std::string>& extra) {
  BoundTape bt;
  std::set<std::string> vars = free_vars(e);
  vars.insert(extra.begin(), extra.end());
  for (const auto& v : vars) {
    bt.names.push_back(v);
    bt.values.push_back(env.at(v));
  }
  const auto& names = bt.names;
  bt.tape = Tape(e, [&names](const std::string& n) -> std::optional<int> {
    auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) return std::nullopt;
    return static_cast<int>(it - names.begin());
  });
  return bt;
}

}  // namespace

double eval(const Expr& e, const Bindings& env) {
  BoundTape bt = bind(e, env, {});
  return bt.tape.eval<double>(std::span<const double>(bt.values));
}

Derivatives eval_derivs(const Expr& e, const Bindings& env, const std::vector<std::string>& wrt,
                        int order) {
  if (order != 1 && order != 2) throw Error("eval_derivs: order must be 1 or 2");
  BoundTape bt = bind(e, env, wrt);
  std::vector<int> idx;
  for (const auto& w : wrt) {
    idx.push_back(static_cast<int>(std::find(bt.names.begin(), bt.names.end(), w) - bt.names.begin()));
  }
  std::span<const double> x(bt.values);
  Derivatives out;
  const std::size_t k = wrt.size();
  out.gradient.resize(k);
  if (order == 1) {
    out.value = bt.tape.eval<double>(x);
    for (std::size_t i = 0; i < k; ++i) out.gradient[i] = bt.tape.partial<double>(x, idx[i]);
    return out;
  }
  out.hessian.assign(k, std::vector<double>(k, 0.0));
  using D2 = Dual<Dual<double>>;
  std::vector<D2> y(x.size());
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      for (std::size_t s = 0; s < x.size(); ++s) y[s] = D2(Dual<double>(x[s], 0.0), Dual<double>(0.0, 0.0));
      y[static_cast<std::size_t>(idx[j])].v.d = 1.0;
      y[static_cast<std::size_t>(idx[i])].d.v = 1.0;
      D2 r = bt.tape.eval<D2>(std::span<const D2>(y));
      out.hessian[i][j] = out.hessian[j][i] = r.d.d;
      if (i == j) {
        out.value = r.v.v;
        out.gradient[i] = r.d.v;
      }
    }
  }
  if (k == 0) out.value = bt.tape.eval<double>(x);
  return out;
}

}  // namespace cdyn::expr

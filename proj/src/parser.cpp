#include "ewash/parser.hpp"

#include <string>

#include "ewash/errors.hpp"

namespace ewash {
namespace {

constexpr int kMaxNesting = 400;

bool is_aug_op(std::string_view op) {
  return op == "+=" || op == "-=" || op == "*=" || op == "/=" || op == "//=" || op == "%=" ||
         op == "@=" || op == "&=" || op == "|=" || op == "^=" || op == ">>=" || op == "<<=" ||
         op == "**=";
}

const char* describe(ExprKind k) {
  switch (k) {
    case ExprKind::Call:
      return "function call";
    case ExprKind::Str:
    case ExprKind::FStr:
    case ExprKind::Constant:
      return "literal";
    case ExprKind::NamedExpr:
      return "named expression";
    case ExprKind::Lambda:
      return "lambda";
    case ExprKind::Yield:
      return "yield expression";
    case ExprKind::Await:
      return "await expression";
    case ExprKind::Starred:
      return "starred";
    default:
      return "operator";
  }
}

enum class TargetCtx { Store, Del };

class Parser {
 public:
  Parser(std::string_view src, const std::vector<Token>& toks,
         std::optional<Clock::time_point> deadline)
      : src_(src), t_(toks), deadline_(deadline) {}

  std::vector<Stmt> file() {
    std::vector<Stmt> out;
    while (cur().kind != TokKind::EndMarker) {
      if (cur().kind == TokKind::Newline) {
        advance();
        continue;
      }
      statement(out);
    }
    return out;
  }

  // Used for f-string fields: the whole token stream must be one expression.
  void standalone_expression() {
    testlist_star_expr();
    while (cur().kind == TokKind::Newline) advance();
    if (cur().kind != TokKind::EndMarker) fail("f-string: invalid expression");
  }

 private:
  // ---- token helpers -------------------------------------------------------
  const Token& cur() const { return t_[p_]; }
  const Token& peek(std::size_t k = 1) const { return t_[std::min(p_ + k, t_.size() - 1)]; }
  std::string_view text(const Token& t) const { return t.text(src_); }
  std::string_view cur_text() const { return text(cur()); }
  bool is_op(std::string_view op) const { return cur().kind == TokKind::Op && cur_text() == op; }
  bool is_kw(std::string_view kw) const { return cur().kind == TokKind::Name && cur_text() == kw; }
  bool is_plain_name() const {
    return cur().kind == TokKind::Name && !is_python_keyword(cur_text());
  }
  bool at_stmt_end() const { return cur().kind == TokKind::Newline || is_op(";"); }

  [[noreturn]] void fail(const std::string& msg) const { fail_at(cur(), msg); }
  [[noreturn]] void fail_at(const Token& t, const std::string& msg) const {
    throw SyntaxError(msg, static_cast<int>(t.line), static_cast<int>(t.col) + 1);
  }

  std::uint32_t advance() {
    if (deadline_ && (++tick_ & 255) == 0 && Clock::now() > *deadline_) throw ParseTimeout();
    const auto idx = static_cast<std::uint32_t>(p_);
    const TokKind k = cur().kind;
    if (k != TokKind::Newline && k != TokKind::Indent && k != TokKind::Dedent &&
        k != TokKind::EndMarker) {
      last_sig_ = idx;
    }
    if (p_ + 1 < t_.size()) ++p_;
    return idx;
  }
  std::uint32_t expect_op(std::string_view op) {
    if (!is_op(op)) fail("invalid syntax");
    return advance();
  }
  std::uint32_t expect_kw(std::string_view kw) {
    if (!is_kw(kw)) fail("invalid syntax");
    return advance();
  }
  std::uint32_t expect_name() {
    if (!is_plain_name()) fail("invalid syntax");
    return advance();
  }

  bool starts_test() const {
    const Token& t = cur();
    switch (t.kind) {
      case TokKind::Name: {
        const auto w = text(t);
        if (!is_python_keyword(w)) return true;
        return w == "not" || w == "lambda" || w == "await" || w == "None" || w == "True" ||
               w == "False";
      }
      case TokKind::Number:
      case TokKind::String:
        return true;
      case TokKind::Op: {
        const auto w = text(t);
        return w == "(" || w == "[" || w == "{" || w == "-" || w == "+" || w == "~" ||
               w == "...";
      }
      default:
        return false;
    }
  }
  bool at_comp_for() const {
    return is_kw("for") || (is_kw("async") && peek().kind == TokKind::Name &&
                            text(peek()) == "for");
  }

  struct DepthGuard {
    explicit DepthGuard(Parser& p) : p_(p) {
      if (++p_.depth_ > kMaxNesting) p_.fail("too many nested expressions");
    }
    ~DepthGuard() { --p_.depth_; }
    Parser& p_;
  };

  Expr make(ExprKind k, std::uint32_t first) const {
    Expr e;
    e.kind = k;
    e.range = {first, last_sig_};
    return e;
  }

  // ---- statements ----------------------------------------------------------
  bool at_compound() const {
    if (is_op("@")) return true;
    if (cur().kind != TokKind::Name) return false;
    const auto w = cur_text();
    if (w == "if" || w == "while" || w == "for" || w == "try" || w == "with" || w == "def" ||
        w == "class") {
      return true;
    }
    if (w == "async" && peek().kind == TokKind::Name) {
      const auto n = text(peek());
      return n == "def" || n == "with" || n == "for";
    }
    return false;
  }

  void statement(std::vector<Stmt>& out) {
    if (at_compound()) {
      out.push_back(compound());
    } else {
      simple_stmt(out);
    }
  }

  void simple_stmt(std::vector<Stmt>& out) {
    while (true) {
      out.push_back(small_stmt());
      if (is_op(";")) {
        advance();
        if (cur().kind == TokKind::Newline) break;
        continue;
      }
      break;
    }
    if (cur().kind != TokKind::Newline) fail("invalid syntax");
    advance();
  }

  std::vector<Stmt> suite() {
    std::vector<Stmt> out;
    if (cur().kind == TokKind::Newline) {
      advance();
      if (cur().kind != TokKind::Indent) fail("expected an indented block");
      advance();
      while (cur().kind != TokKind::Dedent && cur().kind != TokKind::EndMarker) {
        if (cur().kind == TokKind::Newline) {
          advance();
          continue;
        }
        statement(out);
      }
      if (cur().kind == TokKind::Dedent) advance();
    } else {
      simple_stmt(out);
    }
    return out;
  }

  Stmt small_stmt() {
    Stmt s;
    const auto first = static_cast<std::uint32_t>(p_);
    const auto w = cur().kind == TokKind::Name ? cur_text() : std::string_view{};
    if (w == "pass" || w == "break" || w == "continue") {
      s.kind = w == "pass" ? StmtKind::Pass : w == "break" ? StmtKind::Break : StmtKind::Continue;
      advance();
    } else if (w == "del") {
      s.kind = StmtKind::Del;
      advance();
      Expr e = exprlist();
      check_target(e, TargetCtx::Del);
      s.targets.push_back(std::move(e));
    } else if (w == "return") {
      s.kind = StmtKind::Return;
      advance();
      if (!at_stmt_end()) check_not_bare_star(testlist_star_expr());
    } else if (w == "raise") {
      s.kind = StmtKind::Raise;
      advance();
      if (!at_stmt_end()) {
        test();
        if (is_kw("from")) {
          advance();
          test();
        }
      }
    } else if (w == "global" || w == "nonlocal") {
      s.kind = w == "global" ? StmtKind::Global : StmtKind::Nonlocal;
      advance();
      expect_name();
      while (is_op(",")) {
        advance();
        expect_name();
      }
    } else if (w == "assert") {
      s.kind = StmtKind::Assert;
      advance();
      test();
      if (is_op(",")) {
        advance();
        test();
      }
    } else if (w == "import") {
      s.kind = StmtKind::Import;
      advance();
      dotted_as_name();
      while (is_op(",")) {
        advance();
        dotted_as_name();
      }
    } else if (w == "from") {
      s.kind = StmtKind::ImportFrom;
      import_from();
    } else {
      expr_stmt(s);
    }
    s.range = {first, last_sig_};
    return s;
  }

  void dotted_name() {
    expect_name();
    while (is_op(".")) {
      advance();
      expect_name();
    }
  }
  void dotted_as_name() {
    dotted_name();
    if (is_kw("as")) {
      advance();
      expect_name();
    }
  }
  void import_from() {
    advance();
    bool dots = false;
    while (is_op(".") || is_op("...")) {
      advance();
      dots = true;
    }
    if (is_plain_name()) {
      dotted_name();
    } else if (!dots) {
      fail("invalid syntax");
    }
    expect_kw("import");
    if (is_op("*")) {
      advance();
      return;
    }
    const bool paren = is_op("(");
    if (paren) advance();
    auto as_name = [&] {
      expect_name();
      if (is_kw("as")) {
        advance();
        expect_name();
      }
    };
    as_name();
    while (is_op(",")) {
      advance();
      if (paren && is_op(")")) break;
      if (!paren && at_stmt_end()) fail("trailing comma not allowed without surrounding parentheses");
      as_name();
    }
    if (paren) expect_op(")");
  }

  void expr_stmt(Stmt& s) {
    if (is_kw("yield")) {
      s.kind = StmtKind::Expr;
      s.value = yield_expr();
      return;
    }
    Expr lhs = testlist_star_expr();
    if (is_op(":")) {
      s.kind = StmtKind::AnnAssign;
      if (lhs.kind == ExprKind::Tuple || lhs.kind == ExprKind::List) {
        fail_at(t_[lhs.range.first], "only single target (not tuple) can be annotated");
      }
      if (lhs.kind != ExprKind::Name && lhs.kind != ExprKind::Attribute &&
          lhs.kind != ExprKind::Subscript) {
        fail_at(t_[lhs.range.first], "illegal target for annotation");
      }
      s.split_tok = advance();
      test();
      if (is_op("=")) {
        advance();
        if (is_kw("yield")) {
          yield_expr();
        } else {
          testlist_star_expr();
        }
      }
      s.targets.push_back(std::move(lhs));
      return;
    }
    if (cur().kind == TokKind::Op && is_aug_op(cur_text())) {
      s.kind = StmtKind::AugAssign;
      if (lhs.kind != ExprKind::Name && lhs.kind != ExprKind::Attribute &&
          lhs.kind != ExprKind::Subscript) {
        fail_at(t_[lhs.range.first], "illegal expression for augmented assignment");
      }
      s.split_tok = advance();
      if (is_kw("yield")) {
        yield_expr();
      } else {
        testlist();
      }
      s.targets.push_back(std::move(lhs));
      return;
    }
    if (is_op("=")) {
      s.kind = StmtKind::Assign;
      Expr rhs = std::move(lhs);
      while (is_op("=")) {
        check_target(rhs, TargetCtx::Store);
        s.targets.push_back(std::move(rhs));
        s.split_tok = advance();
        rhs = is_kw("yield") ? yield_expr() : testlist_star_expr();
      }
      check_not_bare_star(rhs);
      return;
    }
    s.kind = StmtKind::Expr;
    check_not_bare_star(lhs);
    s.value = std::move(lhs);
  }

  void check_not_bare_star(const Expr& e) const {
    if (e.kind == ExprKind::Starred) fail_at(t_[e.range.first], "can't use starred expression here");
  }

  void check_target(const Expr& e, TargetCtx ctx) const {
    switch (e.kind) {
      case ExprKind::Name:
      case ExprKind::Attribute:
      case ExprKind::Subscript:
        return;
      case ExprKind::Starred:
        if (ctx == TargetCtx::Del) fail_at(t_[e.range.first], "cannot delete starred");
        check_target(e.elts.front(), ctx);
        return;
      case ExprKind::Tuple:
      case ExprKind::List:
        for (const Expr& x : e.elts) check_target(x, ctx);
        return;
      default:
        fail_at(t_[e.range.first], std::string(ctx == TargetCtx::Del ? "cannot delete " : "cannot assign to ") +
                                       describe(e.kind));
    }
  }

  Stmt compound() {
    Stmt s;
    const auto first = static_cast<std::uint32_t>(p_);
    if (is_op("@")) {
      while (is_op("@")) {
        const auto at = advance();
        dotted_name();
        if (is_op("(")) {
          advance();
          arglist(")");
          expect_op(")");
        }
        s.decorators.push_back({at, last_sig_});
        if (cur().kind != TokKind::Newline) fail("invalid syntax");
        advance();
      }
      if (is_kw("def") || is_kw("class") ||
          (is_kw("async") && peek().kind == TokKind::Name && text(peek()) == "def")) {
        definition(s);
      } else {
        fail("invalid syntax");
      }
    } else if (is_kw("def") || is_kw("class") ||
               (is_kw("async") && text(peek()) == "def")) {
      definition(s);
    } else {
      bool is_async = false;
      if (is_kw("async")) {
        advance();
        is_async = true;
      }
      const auto w = cur_text();
      if (w == "if") {
        if_stmt(s);
      } else if (w == "while") {
        while_stmt(s);
      } else if (w == "for") {
        for_stmt(s);
      } else if (w == "try") {
        try_stmt(s);
      } else if (w == "with") {
        with_stmt(s);
      } else {
        fail("invalid syntax");
      }
      s.is_async = is_async;
    }
    s.range = {first, last_sig_};
    return s;
  }

  void append(std::vector<Stmt>& dst, std::vector<Stmt> src) {
    for (auto& x : src) dst.push_back(std::move(x));
  }

  void if_stmt(Stmt& s) {
    s.kind = StmtKind::If;
    advance();
    namedexpr_test();
    expect_op(":");
    append(s.body, suite());
    while (is_kw("elif")) {
      advance();
      namedexpr_test();
      expect_op(":");
      append(s.body, suite());
    }
    if (is_kw("else")) {
      advance();
      expect_op(":");
      append(s.body, suite());
    }
  }
  void while_stmt(Stmt& s) {
    s.kind = StmtKind::While;
    advance();
    namedexpr_test();
    expect_op(":");
    append(s.body, suite());
    if (is_kw("else")) {
      advance();
      expect_op(":");
      append(s.body, suite());
    }
  }
  void for_stmt(Stmt& s) {
    s.kind = StmtKind::For;
    advance();
    Expr target = exprlist();
    check_target(target, TargetCtx::Store);
    expect_kw("in");
    testlist();
    expect_op(":");
    append(s.body, suite());
    if (is_kw("else")) {
      advance();
      expect_op(":");
      append(s.body, suite());
    }
  }
  void try_stmt(Stmt& s) {
    s.kind = StmtKind::Try;
    advance();
    expect_op(":");
    append(s.body, suite());
    bool handlers = false;
    bool bare_seen = false;
    while (is_kw("except")) {
      const Token& at = cur();
      if (bare_seen) fail_at(at, "default 'except:' must be last");
      advance();
      handlers = true;
      if (!is_op(":")) {
        test();
        if (is_kw("as")) {
          advance();
          expect_name();
        }
      } else {
        bare_seen = true;
      }
      expect_op(":");
      append(s.body, suite());
    }
    if (handlers && is_kw("else")) {
      advance();
      expect_op(":");
      append(s.body, suite());
    }
    if (is_kw("finally")) {
      advance();
      expect_op(":");
      append(s.body, suite());
    } else if (!handlers) {
      fail("invalid syntax");
    }
  }
  void with_stmt(Stmt& s) {
    s.kind = StmtKind::With;
    advance();
    auto item = [&] {
      test();
      if (is_kw("as")) {
        advance();
        Expr target = expr();
        check_target(target, TargetCtx::Store);
      }
    };
    item();
    while (is_op(",")) {
      advance();
      item();
    }
    expect_op(":");
    append(s.body, suite());
  }

  void definition(Stmt& s) {
    const auto header_first = static_cast<std::uint32_t>(p_);
    if (is_kw("async")) {
      advance();
      s.is_async = true;
    }
    if (is_kw("class")) {
      s.kind = StmtKind::ClassDef;
      advance();
      s.name_tok = expect_name();
      if (is_op("(")) {
        advance();
        arglist(")");
        expect_op(")");
      }
    } else {
      s.kind = StmtKind::FunctionDef;
      expect_kw("def");
      s.name_tok = expect_name();
      expect_op("(");
      s.first_param_tok = parameters(")", true);
      expect_op(")");
      if (is_op("->")) {
        advance();
        test();
      }
    }
    const auto colon = expect_op(":");
    s.header = {header_first, colon};
    s.body = suite();
  }

  // Parses a parameter list up to (not including) `close`; returns the first
  // parameter's name token.
  std::optional<std::uint32_t> parameters(std::string_view close, bool annotations) {
    std::optional<std::uint32_t> first_name;
    bool seen_default = false;
    bool seen_star = false;
    bool seen_slash = false;
    bool bare_star = false;
    bool named_after_star = false;
    std::size_t count = 0;
    auto param_name = [&] {
      const auto idx = expect_name();
      if (!first_name) first_name = idx;
      if (annotations && is_op(":")) {
        advance();
        test();
      }
    };
    while (!is_op(close)) {
      if (is_op("/")) {
        if (seen_slash || seen_star || count == 0) fail("invalid syntax");
        advance();
        seen_slash = true;
      } else if (is_op("**")) {
        advance();
        param_name();
        if (is_op(",")) advance();
        if (!is_op(close)) fail("invalid syntax");
        break;
      } else if (is_op("*")) {
        if (seen_star) fail("invalid syntax");
        advance();
        seen_star = true;
        if (is_plain_name()) {
          param_name();
        } else {
          bare_star = true;
        }
      } else {
        param_name();
        if (is_op("=")) {
          advance();
          test();
          if (!seen_star) seen_default = true;
        } else if (seen_default && !seen_star) {
          fail("non-default argument follows default argument");
        }
        if (seen_star) named_after_star = true;
      }
      ++count;
      if (is_op(",")) {
        advance();
        continue;
      }
      break;
    }
    if (bare_star && !named_after_star) fail("named arguments must follow bare *");
    return first_name;
  }

  // ---- expressions ---------------------------------------------------------
  Expr yield_expr() {
    const auto first = expect_kw("yield");
    if (is_kw("from")) {
      advance();
      test();
    } else if (starts_test() || is_op("*")) {
      testlist_star_expr();
    }
    return make(ExprKind::Yield, first);
  }

  Expr star_expr() {
    const auto first = expect_op("*");
    Expr inner = expr();
    Expr e = make(ExprKind::Starred, first);
    e.elts.push_back(std::move(inner));
    return e;
  }

  template <typename Item>
  Expr sequence(Item item, bool allow_star) {
    const auto first = static_cast<std::uint32_t>(p_);
    Expr e0 = (allow_star && is_op("*")) ? star_expr() : item();
    if (!is_op(",")) return e0;
    Expr tup = make(ExprKind::Tuple, first);
    tup.elts.push_back(std::move(e0));
    while (is_op(",")) {
      advance();
      if (!(starts_test() || (allow_star && is_op("*")))) break;
      tup.elts.push_back((allow_star && is_op("*")) ? star_expr() : item());
    }
    tup.range = {first, last_sig_};
    return tup;
  }

  Expr testlist_star_expr() {
    return sequence([this] { return test(); }, true);
  }
  Expr testlist() {
    return sequence([this] { return test(); }, false);
  }
  Expr exprlist() {
    return sequence([this] { return expr(); }, true);
  }

  Expr namedexpr_test() {
    const auto first = static_cast<std::uint32_t>(p_);
    Expr e = test();
    if (!is_op(":=")) return e;
    if (e.kind != ExprKind::Name || e.parenthesized) {
      fail_at(t_[e.range.first],
              std::string("cannot use assignment expressions with ") + describe(e.kind));
    }
    advance();
    test();
    return make(ExprKind::NamedExpr, first);
  }

  Expr test() {
    DepthGuard guard(*this);
    if (is_kw("lambda")) return lambdef(true);
    const auto first = static_cast<std::uint32_t>(p_);
    Expr e = or_test();
    if (is_kw("if")) {
      advance();
      or_test();
      expect_kw("else");
      test();
      return make(ExprKind::Other, first);
    }
    return e;
  }

  Expr test_nocond() {
    if (is_kw("lambda")) return lambdef(false);
    return or_test();
  }

  Expr lambdef(bool with_cond) {
    const auto first = expect_kw("lambda");
    parameters(":", false);
    expect_op(":");
    if (with_cond) {
      test();
    } else {
      test_nocond();
    }
    return make(ExprKind::Lambda, first);
  }

  Expr or_test() {
    const auto first = static_cast<std::uint32_t>(p_);
    Expr e = and_test();
    if (!is_kw("or")) return e;
    while (is_kw("or")) {
      advance();
      and_test();
    }
    return make(ExprKind::Other, first);
  }
  Expr and_test() {
    const auto first = static_cast<std::uint32_t>(p_);
    Expr e = not_test();
    if (!is_kw("and")) return e;
    while (is_kw("and")) {
      advance();
      not_test();
    }
    return make(ExprKind::Other, first);
  }
  Expr not_test() {
    if (is_kw("not")) {
      DepthGuard guard(*this);
      const auto first = advance();
      not_test();
      return make(ExprKind::Other, first);
    }
    return comparison();
  }
  bool at_comp_op() const {
    if (cur().kind == TokKind::Op) {
      const auto w = cur_text();
      return w == "<" || w == ">" || w == "==" || w == ">=" || w == "<=" || w == "!=";
    }
    if (is_kw("in") || is_kw("is")) return true;
    return is_kw("not") && peek().kind == TokKind::Name && text(peek()) == "in";
  }
  Expr comparison() {
    const auto first = static_cast<std::uint32_t>(p_);
    Expr e = expr();
    if (!at_comp_op()) return e;
    while (at_comp_op()) {
      if (is_kw("not")) {
        advance();
        advance();
      } else if (is_kw("is")) {
        advance();
        if (is_kw("not")) advance();
      } else {
        advance();
      }
      expr();
    }
    return make(ExprKind::Other, first);
  }

  template <typename Next>
  Expr binary(Next next, std::initializer_list<std::string_view> ops) {
    const auto first = static_cast<std::uint32_t>(p_);
    Expr e = (this->*next)();
    auto at_op = [&] {
      if (cur().kind != TokKind::Op) return false;
      for (auto o : ops) {
        if (cur_text() == o) return true;
      }
      return false;
    };
    if (!at_op()) return e;
    while (at_op()) {
      advance();
      (this->*next)();
    }
    return make(ExprKind::Other, first);
  }
  Expr expr() { return binary(&Parser::xor_expr, {"|"}); }
  Expr xor_expr() { return binary(&Parser::and_expr, {"^"}); }
  Expr and_expr() { return binary(&Parser::shift_expr, {"&"}); }
  Expr shift_expr() { return binary(&Parser::arith_expr, {"<<", ">>"}); }
  Expr arith_expr() { return binary(&Parser::term, {"+", "-"}); }
  Expr term() { return binary(&Parser::factor, {"*", "@", "/", "%", "//"}); }

  Expr factor() {
    if (is_op("+") || is_op("-") || is_op("~")) {
      DepthGuard guard(*this);
      const auto first = advance();
      factor();
      return make(ExprKind::Other, first);
    }
    return power();
  }
  Expr power() {
    const auto first = static_cast<std::uint32_t>(p_);
    Expr e = atom_expr();
    if (is_op("**")) {
      advance();
      factor();
      return make(ExprKind::Other, first);
    }
    return e;
  }

  Expr atom_expr() {
    const auto first = static_cast<std::uint32_t>(p_);
    bool awaited = false;
    if (is_kw("await")) {
      advance();
      awaited = true;
    }
    Expr e = atom();
    while (true) {
      if (is_op("(")) {
        advance();
        arglist(")");
        expect_op(")");
        Expr call = make(ExprKind::Call, first);
        call.elts.push_back(std::move(e));
        e = std::move(call);
      } else if (is_op("[")) {
        advance();
        subscriptlist();
        expect_op("]");
        Expr sub = make(ExprKind::Subscript, first);
        sub.elts.push_back(std::move(e));
        e = std::move(sub);
      } else if (is_op(".")) {
        advance();
        expect_name();
        Expr attr = make(ExprKind::Attribute, first);
        attr.elts.push_back(std::move(e));
        e = std::move(attr);
      } else {
        break;
      }
    }
    if (awaited) return make(ExprKind::Await, first);
    return e;
  }

  Expr atom() {
    DepthGuard guard(*this);
    const auto first = static_cast<std::uint32_t>(p_);
    const Token& t = cur();
    switch (t.kind) {
      case TokKind::Name: {
        const auto w = cur_text();
        if (!is_python_keyword(w)) {
          advance();
          return make(ExprKind::Name, first);
        }
        if (w == "None" || w == "True" || w == "False") {
          advance();
          return make(ExprKind::Constant, first);
        }
        fail("invalid syntax");
      }
      case TokKind::Number:
        advance();
        return make(ExprKind::Constant, first);
      case TokKind::String:
        return strings();
      case TokKind::Op:
        break;
      default:
        fail("invalid syntax");
    }
    if (is_op("...")) {
      advance();
      return make(ExprKind::Constant, first);
    }
    if (is_op("(")) {
      advance();
      if (is_op(")")) {
        advance();
        return make(ExprKind::Tuple, first);
      }
      if (is_kw("yield")) {
        yield_expr();
        expect_op(")");
        Expr y = make(ExprKind::Yield, first);
        y.parenthesized = true;
        return y;
      }
      Expr inner = testlist_comp(")", ExprKind::Tuple);
      expect_op(")");
      if (inner.kind == ExprKind::Tuple && !inner.parenthesized) {
        inner.range = {first, last_sig_};
        inner.parenthesized = true;
        return inner;
      }
      inner.parenthesized = true;
      return inner;
    }
    if (is_op("[")) {
      advance();
      if (is_op("]")) {
        advance();
        return make(ExprKind::List, first);
      }
      Expr inner = testlist_comp("]", ExprKind::List);
      expect_op("]");
      if (inner.kind == ExprKind::List || inner.kind == ExprKind::Other) {
        inner.range = {first, last_sig_};
        return inner;
      }
      // single element list
      Expr list = make(ExprKind::List, first);
      list.elts.push_back(std::move(inner));
      return list;
    }
    if (is_op("{")) {
      advance();
      dictorsetmaker();
      expect_op("}");
      return make(ExprKind::Other, first);
    }
    fail("invalid syntax");
  }

  // Items of a parenthesised or bracketed display. `seq_kind` is Tuple or
  // List; a comprehension yields Other. A lone parenthesised item without a
  // trailing comma is returned as-is (List displays wrap it at the caller).
  Expr testlist_comp(std::string_view close, ExprKind seq_kind) {
    const auto first = static_cast<std::uint32_t>(p_);
    Expr e0 = is_op("*") ? star_expr() : namedexpr_test();
    if (at_comp_for()) {
      if (e0.kind == ExprKind::Starred) {
        fail_at(t_[e0.range.first], "iterable unpacking cannot be used in comprehension");
      }
      comp_for();
      return make(ExprKind::Other, first);
    }
    if (!is_op(",")) {
      if (seq_kind == ExprKind::Tuple && e0.kind == ExprKind::Starred) {
        fail_at(t_[e0.range.first], "can't use starred expression here");
      }
      return e0;
    }
    Expr seq = make(seq_kind, first);
    seq.elts.push_back(std::move(e0));
    while (is_op(",")) {
      advance();
      if (is_op(close)) break;
      seq.elts.push_back(is_op("*") ? star_expr() : namedexpr_test());
    }
    seq.range = {first, last_sig_};
    return seq;
  }

  void comp_for() {
    while (true) {
      if (is_kw("async")) advance();
      expect_kw("for");
      Expr target = exprlist();
      check_target(target, TargetCtx::Store);
      expect_kw("in");
      or_test();
      while (is_kw("if")) {
        advance();
        test_nocond();
      }
      if (!at_comp_for()) break;
    }
  }

  void dictorsetmaker() {
    if (is_op("}")) return;
    enum class Mode { Dict, Set } mode;
    bool first_unpack = false;
    if (is_op("**")) {
      advance();
      expr();
      mode = Mode::Dict;
      first_unpack = true;
    } else if (is_op("*")) {
      star_expr();
      mode = Mode::Set;
      first_unpack = true;
    } else {
      test();
      if (is_op(":")) {
        advance();
        test();
        mode = Mode::Dict;
      } else {
        mode = Mode::Set;
      }
    }
    if (at_comp_for()) {
      if (first_unpack) {
        fail(mode == Mode::Dict ? "dict unpacking cannot be used in dict comprehension"
                                : "iterable unpacking cannot be used in comprehension");
      }
      comp_for();
      return;
    }
    while (is_op(",")) {
      advance();
      if (is_op("}")) break;
      if (mode == Mode::Dict) {
        if (is_op("**")) {
          advance();
          expr();
        } else {
          test();
          expect_op(":");
          test();
        }
      } else {
        if (is_op("*")) {
          star_expr();
        } else {
          test();
        }
      }
    }
  }

  void subscriptlist() {
    subscript();
    while (is_op(",")) {
      advance();
      if (is_op("]")) break;
      subscript();
    }
  }
  void subscript() {
    if (!is_op(":")) {
      test();
      if (!is_op(":")) return;
    }
    advance();
    if (!is_op(":") && !is_op("]") && !is_op(",")) test();
    if (is_op(":")) {
      advance();
      if (!is_op("]") && !is_op(",")) test();
    }
  }

  void arglist(std::string_view close) {
    bool seen_keyword = false;
    bool seen_kw_unpack = false;
    std::size_t count = 0;
    bool bare_genexp = false;
    while (!is_op(close)) {
      const Token& at = cur();
      if (is_op("**")) {
        advance();
        test();
        seen_kw_unpack = true;
      } else if (is_op("*")) {
        if (seen_kw_unpack) {
          fail_at(at, "iterable argument unpacking follows keyword argument unpacking");
        }
        advance();
        test();
      } else {
        Expr e = test();
        if (is_op(":=")) {
          if (e.kind != ExprKind::Name || e.parenthesized) {
            fail_at(at, std::string("cannot use assignment expressions with ") + describe(e.kind));
          }
          advance();
          test();
          check_positional(at, seen_keyword, seen_kw_unpack);
        } else if (is_op("=")) {
          if (e.kind != ExprKind::Name || e.parenthesized) {
            fail_at(at, "expression cannot contain assignment, perhaps you meant \"==\"?");
          }
          advance();
          test();
          seen_keyword = true;
        } else if (at_comp_for()) {
          comp_for();
          bare_genexp = true;
          check_positional(at, seen_keyword, seen_kw_unpack);
        } else {
          check_positional(at, seen_keyword, seen_kw_unpack);
        }
      }
      ++count;
      if (is_op(",")) {
        advance();
        continue;
      }
      break;
    }
    if (bare_genexp && count > 1) fail("Generator expression must be parenthesized");
    if (bare_genexp && t_[p_ - 1].kind == TokKind::Op && text(t_[p_ - 1]) == ",") {
      fail("Generator expression must be parenthesized");
    }
  }
  void check_positional(const Token& at, bool seen_keyword, bool seen_kw_unpack) const {
    if (seen_kw_unpack) fail_at(at, "positional argument follows keyword argument unpacking");
    if (seen_keyword) fail_at(at, "positional argument follows keyword argument");
  }

  Expr strings();

  std::string_view src_;
  const std::vector<Token>& t_;
  std::size_t p_ = 0;
  std::uint32_t last_sig_ = 0;
  std::optional<Clock::time_point> deadline_;
  std::size_t tick_ = 0;
  int depth_ = 0;
};

// ---- f-strings -------------------------------------------------------------

void check_fstring_expression(std::string_view expr, const Token& at) {
  auto fail = [&](const std::string& msg) {
    throw SyntaxError(msg, static_cast<int>(at.line), static_cast<int>(at.col) + 1);
  };
  bool blank = true;
  for (char c : expr) {
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r' && c != '\f') blank = false;
  }
  if (blank) fail("f-string: empty expression not allowed");
  const std::string wrapped = "(" + std::string(expr) + ")";
  try {
    std::vector<Token> all = lex_python(wrapped);
    std::vector<Token> sig;
    for (const Token& t : all) {
      if (t.kind != TokKind::Comment && t.kind != TokKind::Nl) sig.push_back(t);
    }
    Parser p(wrapped, sig, std::nullopt);
    p.standalone_expression();
  } catch (const SyntaxError&) {
    fail("f-string: invalid syntax");
  }
}

// Validates one f-string body; `depth` counts format-spec nesting.
void check_fstring(std::string_view c, bool raw, const Token& at, int depth = 0) {
  auto fail = [&](const std::string& msg) {
    throw SyntaxError(msg, static_cast<int>(at.line), static_cast<int>(at.col) + 1);
  };
  if (depth > 2) fail("f-string: expressions nested too deeply");
  const std::size_t n = c.size();
  std::size_t i = 0;
  while (i < n) {
    const char ch = c[i];
    if (ch == '\\' && !raw) {
      if (i + 2 < n && c[i + 1] == 'N' && c[i + 2] == '{') {
        const auto close = c.find('}', i + 3);
        if (close == std::string_view::npos) fail("f-string: malformed \\N escape");
        i = close + 1;
      } else {
        i += 2;
      }
      continue;
    }
    if (ch == '}') {
      if (depth == 0 && i + 1 < n && c[i + 1] == '}') {
        i += 2;
        continue;
      }
      fail("f-string: single '}' is not allowed");
    }
    if (ch != '{') {
      ++i;
      continue;
    }
    if (depth == 0 && i + 1 < n && c[i + 1] == '{') {
      i += 2;
      continue;
    }
    // expression field
    std::size_t j = i + 1;
    int nest = 0;
    char quote = 0;
    bool triple = false;
    for (; j < n; ++j) {
      const char x = c[j];
      if (quote) {
        if (x == '\\') fail("f-string expression part cannot include a backslash");
        if (x == quote) {
          if (!triple) {
            quote = 0;
          } else if (j + 2 < n && c[j + 1] == quote && c[j + 2] == quote) {
            j += 2;
            quote = 0;
          }
        }
        continue;
      }
      if (x == '\\') fail("f-string expression part cannot include a backslash");
      if (x == '\'' || x == '"') {
        quote = x;
        triple = j + 2 < n && c[j + 1] == x && c[j + 2] == x;
        if (triple) j += 2;
        continue;
      }
      if (x == '#') fail("f-string expression part cannot include '#'");
      if (x == '(' || x == '[' || x == '{') {
        ++nest;
        continue;
      }
      if (x == ')' || x == ']' || (x == '}' && nest > 0)) {
        --nest;
        continue;
      }
      if (nest > 0) continue;
      if (x == '}' || x == ':') break;
      if (x == '!' && !(j + 1 < n && c[j + 1] == '=')) break;
      if (x == '=' && !(j + 1 < n && c[j + 1] == '=') &&
          !(j > i + 1 && (c[j - 1] == '=' || c[j - 1] == '!' || c[j - 1] == '<' ||
                          c[j - 1] == '>'))) {
        break;
      }
    }
    if (quote) fail("f-string: unterminated string");
    if (j >= n) fail("f-string: expecting '}'");
    check_fstring_expression(c.substr(i + 1, j - i - 1), at);
    if (c[j] == '=') {
      ++j;
      while (j < n && (c[j] == ' ' || c[j] == '\t' || c[j] == '\n')) ++j;
    }
    if (j < n && c[j] == '!') {
      if (j + 1 >= n || (c[j + 1] != 's' && c[j + 1] != 'r' && c[j + 1] != 'a')) {
        fail("f-string: invalid conversion character: expected 's', 'r', or 'a'");
      }
      j += 2;
    }
    if (j < n && c[j] == ':') {
      // format spec runs to the matching '}' and may hold nested fields
      std::size_t k = j + 1;
      int braces = 0;
      for (; k < n; ++k) {
        if (c[k] == '{') ++braces;
        if (c[k] == '}') {
          if (braces == 0) break;
          --braces;
        }
      }
      if (k >= n) fail("f-string: expecting '}'");
      check_fstring(c.substr(j + 1, k - j - 1), raw, at, depth + 1);
      j = k;
    }
    if (j >= n || c[j] != '}') fail("f-string: expecting '}'");
    i = j + 1;
  }
}

void check_escapes(std::string_view c, bool bytes, const Token& at) {
  auto fail = [&](const char* what) {
    throw SyntaxError(std::string("(unicode error) truncated ") + what + " escape",
                      static_cast<int>(at.line), static_cast<int>(at.col) + 1);
  };
  auto hex_run = [&](std::size_t from, std::size_t count) {
    if (from + count > c.size()) return false;
    for (std::size_t k = from; k < from + count; ++k) {
      const char h = c[k];
      const bool ok = (h >= '0' && h <= '9') || (h >= 'a' && h <= 'f') || (h >= 'A' && h <= 'F');
      if (!ok) return false;
    }
    return true;
  };
  for (std::size_t i = 0; i + 1 < c.size(); ++i) {
    if (c[i] != '\\') continue;
    const char e = c[i + 1];
    if (e == 'x') {
      if (!hex_run(i + 2, 2)) fail("\\xXX");
    } else if (!bytes && e == 'u') {
      if (!hex_run(i + 2, 4)) fail("\\uXXXX");
    } else if (!bytes && e == 'U') {
      if (!hex_run(i + 2, 8)) fail("\\UXXXXXXXX");
      if (std::stoul(std::string(c.substr(i + 2, 8)), nullptr, 16) > 0x10FFFF) {
        fail("\\UXXXXXXXX");
      }
    } else if (!bytes && e == 'N') {
      const auto close = c.find('}', i + 2);
      if (i + 2 >= c.size() || c[i + 2] != '{' || close == std::string_view::npos ||
          close == i + 3) {
        fail("\\N{...}");
      }
    }
    ++i;
  }
}

Expr Parser::strings() {
  const auto first = static_cast<std::uint32_t>(p_);
  bool any_f = false;
  bool any_bytes = false;
  bool any_text = false;
  while (cur().kind == TokKind::String) {
    const Token& t = cur();
    const auto parts = split_string_literal(text(t));
    if (!parts) fail("invalid string literal");
    bool f = false;
    bool b = false;
    bool r = false;
    for (char ch : parts->prefix) {
      const char l = static_cast<char>(ch | 0x20);
      f = f || l == 'f';
      b = b || l == 'b';
      r = r || l == 'r';
    }
    if (b) {
      any_bytes = true;
      for (char ch : parts->content) {
        if (static_cast<unsigned char>(ch) >= 0x80) {
          fail_at(t, "bytes can only contain ASCII literal characters.");
        }
      }
    } else {
      any_text = true;
    }
    if (!r) check_escapes(parts->content, b, t);
    if (f) {
      any_f = true;
      check_fstring(parts->content, r, t);
    }
    advance();
  }
  if (any_bytes && any_text) fail_at(t_[first], "cannot mix bytes and nonbytes literals");
  return make(any_f ? ExprKind::FStr : ExprKind::Str, first);
}

}  // namespace

Module parse_module(std::string_view src, std::optional<Clock::time_point> deadline) {
  Module m;
  std::vector<Token> all = lex_python(src, deadline);
  m.tokens.reserve(all.size());
  for (const Token& t : all) {
    if (t.kind == TokKind::Comment) {
      m.comments.push_back(t);
    } else if (t.kind != TokKind::Nl) {
      m.tokens.push_back(t);
    }
  }
  Parser p(src, m.tokens, deadline);
  m.body = p.file();
  return m;
}

bool parses(std::string_view src) {
  try {
    parse_module(src);
    return true;
  } catch (const SyntaxError&) {
    return false;
  }
}

}  // namespace ewash

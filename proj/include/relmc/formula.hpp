#pragma once
// Probabilistic CTL formulas over relational atoms: abstract syntax, the
// ASCII parser, a renderer producing the same concrete syntax, and the
// post-order evaluation plan used by the checker.
//
// Concrete syntax:
//
//   state   :=  or
//   or      :=  and { '|' and }
//   and     :=  unary { '&' unary }
//   unary   :=  '~' atom  |  primary
//   primary :=  'true' | 'false' | atom | prob | '(' state ')'
//   prob    :=  'P' cmp number '[' path ']'         cmp in { <= < >= > }
//   path    :=  'X' state
//            |  'F' [ '<=' int ] state              sugar for true U state
//            |  state 'U' [ '<=' int ] state
//
// Negation applies to atoms only; '~' binds tighter than '&', which binds
// tighter than '|'. 'F phi' and 'F<=k phi' expand to until immediately, so
// the checker never sees them. Variables (upper-case identifiers) are scoped
// to the innermost enclosing probability operator: if a name reappears in a
// different scope the parser renames the later occurrence apart and records
// a warning, because object identity cannot be tracked across operators.

#include "relmc/errors.hpp"
#include "relmc/logic.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace relmc {

enum class Comparator { Le, Lt, Ge, Gt };

inline std::string render_comparator(Comparator c) {
    switch (c) {
    case Comparator::Le: return "<=";
    case Comparator::Lt: return "<";
    case Comparator::Ge: return ">=";
    default: return ">";
    }
}

struct StateFormula;
struct PathFormula;
using StateFormulaPtr = std::shared_ptr<const StateFormula>;
using PathFormulaPtr = std::shared_ptr<const PathFormula>;

/// A state formula: literal truth, one (possibly negated) atom, a binary
/// connective, or a probability bound on a path formula.
struct StateFormula {
    enum class Kind { True, False, Lit, NegLit, And, Or, Prob };

    Kind kind = Kind::True;
    Atom atom;                   // Lit / NegLit
    StateFormulaPtr left, right; // And / Or
    Comparator cmp = Comparator::Ge; // Prob
    double threshold = 0.0;          // Prob
    PathFormulaPtr path;             // Prob

    static StateFormulaPtr make_true() {
        auto f = std::make_shared<StateFormula>();
        f->kind = Kind::True;
        return f;
    }
    static StateFormulaPtr make_false() {
        auto f = std::make_shared<StateFormula>();
        f->kind = Kind::False;
        return f;
    }
    static StateFormulaPtr make_lit(Atom a) {
        auto f = std::make_shared<StateFormula>();
        f->kind = Kind::Lit;
        f->atom = std::move(a);
        return f;
    }
    static StateFormulaPtr make_neg_lit(Atom a) {
        auto f = std::make_shared<StateFormula>();
        f->kind = Kind::NegLit;
        f->atom = std::move(a);
        return f;
    }
    static StateFormulaPtr make_and(StateFormulaPtr l, StateFormulaPtr r) {
        auto f = std::make_shared<StateFormula>();
        f->kind = Kind::And;
        f->left = std::move(l);
        f->right = std::move(r);
        return f;
    }
    static StateFormulaPtr make_or(StateFormulaPtr l, StateFormulaPtr r) {
        auto f = std::make_shared<StateFormula>();
        f->kind = Kind::Or;
        f->left = std::move(l);
        f->right = std::move(r);
        return f;
    }
    static StateFormulaPtr make_prob(Comparator cmp, double threshold,
                                     PathFormulaPtr path) {
        if (threshold < 0.0 || threshold > 1.0)
            throw ValidationError("probability threshold must lie in [0,1]");
        auto f = std::make_shared<StateFormula>();
        f->kind = Kind::Prob;
        f->cmp = cmp;
        f->threshold = threshold;
        f->path = std::move(path);
        return f;
    }
};

/// A path formula: one step into a state formula, or until with an optional
/// step bound (absent bound means unbounded).
struct PathFormula {
    enum class Kind { Next, Until };

    Kind kind = Kind::Next;
    StateFormulaPtr operand;  // Next
    StateFormulaPtr lhs, rhs; // Until
    std::optional<std::size_t> bound; // Until; nullopt = unbounded

    static PathFormulaPtr make_next(StateFormulaPtr f) {
        auto p = std::make_shared<PathFormula>();
        p->kind = Kind::Next;
        p->operand = std::move(f);
        return p;
    }
    static PathFormulaPtr make_until(StateFormulaPtr l, StateFormulaPtr r,
                                     std::optional<std::size_t> bound) {
        if (bound && *bound == 0)
            throw ValidationError("until bound must be positive");
        auto p = std::make_shared<PathFormula>();
        p->kind = Kind::Until;
        p->lhs = std::move(l);
        p->rhs = std::move(r);
        p->bound = bound;
        return p;
    }
};

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline std::string render_formula(const StateFormula& f);

namespace detail {

inline std::string render_path_operand(const StateFormula& f) {
    if (f.kind == StateFormula::Kind::And || f.kind == StateFormula::Kind::Or)
        return "(" + render_formula(f) + ")";
    return render_formula(f);
}

} // namespace detail

inline std::string render_formula(const PathFormula& p) {
    if (p.kind == PathFormula::Kind::Next)
        return "X " + detail::render_path_operand(*p.operand);
    std::string op = "U";
    if (p.bound) op += "<=" + std::to_string(*p.bound);
    return detail::render_path_operand(*p.lhs) + " " + op + " " +
           detail::render_path_operand(*p.rhs);
}

inline std::string render_formula(const StateFormula& f) {
    switch (f.kind) {
    case StateFormula::Kind::True: return "true";
    case StateFormula::Kind::False: return "false";
    case StateFormula::Kind::Lit: return f.atom.render();
    case StateFormula::Kind::NegLit: return "~" + f.atom.render();
    case StateFormula::Kind::And: {
        auto wrap = [](const StateFormula& g) {
            std::string s = render_formula(g);
            if (g.kind == StateFormula::Kind::Or) return "(" + s + ")";
            return s;
        };
        return wrap(*f.left) + " & " + wrap(*f.right);
    }
    case StateFormula::Kind::Or:
        return render_formula(*f.left) + " | " + render_formula(*f.right);
    default:
        return "P" + render_comparator(f.cmp) +
               detail::render_number(f.threshold) + " [ " +
               render_formula(*f.path) + " ]";
    }
}

// ---------------------------------------------------------------------------
// Evaluation plan
// ---------------------------------------------------------------------------

/// Post-order listing of the state-formula nodes: every node appears after
/// all state subformulas it depends on. Path formulas are folded into their
/// probability node, whose children are the state formulas inside the path.
inline std::vector<const StateFormula*> parse_tree(const StateFormula& root) {
    std::vector<const StateFormula*> out;
    auto rec = [&](auto&& self, const StateFormula& f) -> void {
        switch (f.kind) {
        case StateFormula::Kind::And:
        case StateFormula::Kind::Or:
            self(self, *f.left);
            self(self, *f.right);
            break;
        case StateFormula::Kind::Prob:
            if (f.path->kind == PathFormula::Kind::Next) {
                self(self, *f.path->operand);
            } else {
                self(self, *f.path->lhs);
                self(self, *f.path->rhs);
            }
            break;
        default:
            break;
        }
        out.push_back(&f);
    };
    rec(rec, root);
    return out;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Informational notice that a variable name was renamed apart because it
/// reappeared in a probability scope where its identity cannot refer to the
/// earlier occurrence.
struct ScopeWarning {
    std::string variable;
    std::string renamed_to;
    std::string message;
};

namespace detail {

class FormulaParser {
public:
    explicit FormulaParser(std::string text) : text_(std::move(text)) {}

    StateFormulaPtr parse(std::vector<ScopeWarning>* warnings) {
        StateFormulaPtr f = state_formula();
        skip_ws();
        if (!at_end()) fail("unexpected trailing input");
        f = rename_scopes(f, warnings);
        return f;
    }

private:
    std::string text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg, line_, col_);
    }

    bool at_end() const { return pos_ >= text_.size(); }
    char peek() const { return at_end() ? '\0' : text_[pos_]; }
    char peek2() const {
        return pos_ + 1 < text_.size() ? text_[pos_ + 1] : '\0';
    }

    void advance() {
        if (text_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    void skip_ws() {
        while (!at_end()) {
            char ch = peek();
            if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
                advance();
            } else if (ch == '%') {
                while (!at_end() && peek() != '\n') advance();
            } else {
                break;
            }
        }
    }

    void expect(char ch, const std::string& what) {
        skip_ws();
        if (peek() != ch) fail("expected '" + std::string(1, ch) + "' " + what);
        advance();
    }

    static bool digit(char ch) { return ch >= '0' && ch <= '9'; }

    std::string ident() {
        skip_ws();
        if (!ident_start(peek())) fail("expected identifier");
        std::string out;
        while (!at_end() && ident_char(peek())) {
            out += peek();
            advance();
        }
        return out;
    }

    /// Peeks the next identifier without consuming it.
    std::string peek_ident() {
        skip_ws();
        if (!ident_start(peek())) return "";
        std::size_t p = pos_;
        std::string out;
        while (p < text_.size() && ident_char(text_[p])) out += text_[p++];
        return out;
    }

    double number() {
        skip_ws();
        if (!digit(peek())) fail("expected number");
        std::string out;
        while (digit(peek())) {
            out += peek();
            advance();
        }
        if (peek() == '.' && digit(peek2())) {
            out += '.';
            advance();
            while (digit(peek())) {
                out += peek();
                advance();
            }
        }
        if (peek() == 'e' || peek() == 'E') {
            out += 'e';
            advance();
            if (peek() == '+' || peek() == '-') {
                out += peek();
                advance();
            }
            if (!digit(peek())) fail("expected exponent digits");
            while (digit(peek())) {
                out += peek();
                advance();
            }
        }
        return std::stod(out);
    }

    std::size_t integer() {
        skip_ws();
        if (!digit(peek())) fail("expected integer");
        std::string out;
        while (digit(peek())) {
            out += peek();
            advance();
        }
        return static_cast<std::size_t>(std::stoul(out));
    }

    Atom atom_from(std::string name) {
        std::vector<Term> args;
        skip_ws();
        if (peek() == '(') {
            advance();
            for (;;) {
                args.push_back(Term::make(ident()));
                skip_ws();
                if (peek() == ',') {
                    advance();
                    continue;
                }
                if (peek() == ')') {
                    advance();
                    break;
                }
                fail("expected ',' or ')' in argument list");
            }
        }
        std::size_t arity = args.size();
        return Atom(Pred::make(name, arity), std::move(args));
    }

    Comparator comparator() {
        skip_ws();
        char ch = peek();
        if (ch == '<') {
            advance();
            if (peek() == '=') {
                advance();
                return Comparator::Le;
            }
            return Comparator::Lt;
        }
        if (ch == '>') {
            advance();
            if (peek() == '=') {
                advance();
                return Comparator::Ge;
            }
            return Comparator::Gt;
        }
        fail("expected comparator after 'P'");
    }

    StateFormulaPtr state_formula() {
        StateFormulaPtr f = and_expr();
        skip_ws();
        while (peek() == '|') {
            advance();
            f = StateFormula::make_or(f, and_expr());
            skip_ws();
        }
        return f;
    }

    StateFormulaPtr and_expr() {
        StateFormulaPtr f = unary();
        skip_ws();
        while (peek() == '&') {
            advance();
            f = StateFormula::make_and(f, unary());
            skip_ws();
        }
        return f;
    }

    StateFormulaPtr unary() {
        skip_ws();
        if (peek() == '~') {
            advance();
            std::string name = ident();
            if (name == "true" || name == "false")
                fail("negation applies to atoms only");
            return StateFormula::make_neg_lit(atom_from(std::move(name)));
        }
        return primary();
    }

    StateFormulaPtr primary() {
        skip_ws();
        if (peek() == '(') {
            advance();
            StateFormulaPtr f = state_formula();
            expect(')', "to close the group");
            return f;
        }
        std::string name = ident();
        if (name == "true") return StateFormula::make_true();
        if (name == "false") return StateFormula::make_false();
        if (name == "P") {
            Comparator cmp = comparator();
            double threshold = number();
            expect('[', "to open the path formula");
            PathFormulaPtr path = path_formula();
            expect(']', "to close the path formula");
            return StateFormula::make_prob(cmp, threshold, std::move(path));
        }
        return StateFormula::make_lit(atom_from(std::move(name)));
    }

    /// Optional '<=k' after a temporal operator name.
    std::optional<std::size_t> optional_bound() {
        skip_ws();
        if (peek() == '<' && peek2() == '=') {
            advance();
            advance();
            return integer();
        }
        return std::nullopt;
    }

    PathFormulaPtr path_formula() {
        std::string head = peek_ident();
        if (head == "X") {
            ident();
            return PathFormula::make_next(state_formula_no_until());
        }
        if (head == "F") {
            ident();
            std::optional<std::size_t> bound = optional_bound();
            return PathFormula::make_until(StateFormula::make_true(),
                                           state_formula_no_until(), bound);
        }
        StateFormulaPtr lhs = state_formula_no_until();
        skip_ws();
        std::string op = peek_ident();
        if (op != "U") fail("expected 'U' in path formula");
        ident();
        std::optional<std::size_t> bound = optional_bound();
        StateFormulaPtr rhs = state_formula_no_until();
        return PathFormula::make_until(std::move(lhs), std::move(rhs), bound);
    }

    /// State formula inside a path context: parsing stops before a bare 'U'
    /// so the until operator stays at the lowest precedence level.
    StateFormulaPtr state_formula_no_until() {
        StateFormulaPtr f = and_expr_no_until();
        skip_ws();
        while (peek() == '|') {
            advance();
            f = StateFormula::make_or(f, and_expr_no_until());
            skip_ws();
        }
        return f;
    }

    StateFormulaPtr and_expr_no_until() {
        StateFormulaPtr f = unary();
        skip_ws();
        while (peek() == '&') {
            advance();
            f = StateFormula::make_and(f, unary());
            skip_ws();
        }
        return f;
    }

    // -- Variable-scope hygiene --------------------------------------------

    struct Region {
        std::vector<const StateFormula*> literals;
    };

    /// Collects the literal nodes of each scope: region 0 is the outermost
    /// state formula, and each probability operator opens a region for the
    /// literals directly inside its path formula.
    static void collect_regions(const StateFormula& f, std::size_t region,
                                std::vector<Region>& regions) {
        switch (f.kind) {
        case StateFormula::Kind::Lit:
        case StateFormula::Kind::NegLit:
            regions[region].literals.push_back(&f);
            break;
        case StateFormula::Kind::And:
        case StateFormula::Kind::Or:
            collect_regions(*f.left, region, regions);
            collect_regions(*f.right, region, regions);
            break;
        case StateFormula::Kind::Prob: {
            regions.emplace_back();
            std::size_t fresh = regions.size() - 1;
            if (f.path->kind == PathFormula::Kind::Next) {
                collect_regions(*f.path->operand, fresh, regions);
            } else {
                collect_regions(*f.path->lhs, fresh, regions);
                collect_regions(*f.path->rhs, fresh, regions);
            }
            break;
        }
        default:
            break;
        }
    }

    /// Renames apart variable names that reappear across scopes, recording
    /// one warning per renamed name.
    static StateFormulaPtr rename_scopes(const StateFormulaPtr& root,
                                         std::vector<ScopeWarning>* warnings) {
        std::vector<Region> regions(1);
        collect_regions(*root, 0, regions);

        std::set<std::string> all_names;
        for (const Region& r : regions)
            for (const StateFormula* lit : r.literals)
                for (Term t : lit->atom.args) all_names.insert(t.name());

        std::set<std::string> claimed;
        std::map<const StateFormula*, Substitution> per_literal;
        bool any = false;
        for (const Region& r : regions) {
            std::map<Term, Term> local;
            std::set<std::string> here;
            for (const StateFormula* lit : r.literals)
                for (Term t : lit->atom.args)
                    if (t.is_variable()) here.insert(t.name());
            for (const std::string& name : here) {
                if (!claimed.count(name)) {
                    claimed.insert(name);
                    continue;
                }
                std::string fresh;
                for (int n = 2;; ++n) {
                    fresh = name + std::to_string(n);
                    if (!all_names.count(fresh)) break;
                }
                all_names.insert(fresh);
                claimed.insert(fresh);
                local.emplace(Term::variable(name), Term::variable(fresh));
                if (warnings)
                    warnings->push_back(ScopeWarning{
                        name, fresh,
                        "variable '" + name +
                            "' is also used in a different operator scope; "
                            "this occurrence is independent and was renamed "
                            "to '" + fresh + "'"});
                any = true;
            }
            if (!local.empty())
                for (const StateFormula* lit : r.literals)
                    per_literal[lit] = local;
        }
        if (!any) return root;

        auto rebuild = [&](auto&& self,
                           const StateFormulaPtr& f) -> StateFormulaPtr {
            switch (f->kind) {
            case StateFormula::Kind::Lit:
            case StateFormula::Kind::NegLit: {
                auto it = per_literal.find(f.get());
                if (it == per_literal.end()) return f;
                Atom renamed = subst_atom(it->second, f->atom);
                return f->kind == StateFormula::Kind::Lit
                           ? StateFormula::make_lit(std::move(renamed))
                           : StateFormula::make_neg_lit(std::move(renamed));
            }
            case StateFormula::Kind::And:
                return StateFormula::make_and(self(self, f->left),
                                              self(self, f->right));
            case StateFormula::Kind::Or:
                return StateFormula::make_or(self(self, f->left),
                                             self(self, f->right));
            case StateFormula::Kind::Prob: {
                PathFormulaPtr path;
                if (f->path->kind == PathFormula::Kind::Next)
                    path = PathFormula::make_next(self(self, f->path->operand));
                else
                    path = PathFormula::make_until(self(self, f->path->lhs),
                                                   self(self, f->path->rhs),
                                                   f->path->bound);
                return StateFormula::make_prob(f->cmp, f->threshold,
                                               std::move(path));
            }
            default:
                return f;
            }
        };
        return rebuild(rebuild, root);
    }
};

} // namespace detail

/// Parses the ASCII formula syntax. Scope renamings (see the header comment)
/// are appended to `warnings` when the caller provides it.
inline StateFormulaPtr
parse_formula(const std::string& text,
              std::vector<ScopeWarning>* warnings = nullptr) {
    return detail::FormulaParser(text).parse(warnings);
}

} // namespace relmc

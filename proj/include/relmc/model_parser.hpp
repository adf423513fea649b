#pragma once
// Parser for the relational MDP model file format. Statements end with '.',
// '%' starts a line comment:
//
//   relation cl/1.
//   action move/3.
//   rule move(A,B,C): pre cl(A), cl(B), on(A,C)
//                     ; 0.9 -> cl(A), cl(C), on(A,B)
//                     ; 0.1 -> cl(A), cl(B), on(A,C).
//   constraint on(X,Y), on(X,Z).
//   constants a, b, c.       (optional; absent means unbounded domain)
//   state_bound 5.           (optional)
//
// Syntax faults raise ParseError with 1-based line/column; violations of the
// model invariants raise ValidationError naming the broken invariant.

#include "relmc/errors.hpp"
#include "relmc/logic.hpp"
#include "relmc/model.hpp"

#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace relmc {
namespace detail {

class ModelParser {
public:
    explicit ModelParser(std::string text) : text_(std::move(text)) {}

    RMDPModel parse() {
        skip_ws();
        while (!at_end()) {
            statement();
            skip_ws();
        }
        validate();
        return std::move(model_);
    }

private:
    std::string text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
    RMDPModel model_;

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

    /// Unsigned decimal with optional fraction and exponent. A '.' is part of
    /// the number only when a digit follows, so the statement terminator
    /// after "state_bound 5." stays intact.
    std::string number_text() {
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
        return out;
    }

    Atom atom() {
        std::string name = ident();
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

    /// Comma list of atoms and X!=c disequalities, or the keyword "true" for
    /// the empty conjunction. Stops before ';' or '.'.
    Conjunction conjunction() {
        std::vector<Atom> atoms;
        std::vector<Conjunction::Diseq> diseqs;
        bool saw_true = false;
        for (;;) {
            std::string name = ident();
            skip_ws();
            if (peek() == '(') {
                advance();
                std::vector<Term> args;
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
                atoms.emplace_back(Pred::make(name, args.size()),
                                   std::move(args));
            } else if (peek() == '!' && peek2() == '=') {
                advance();
                advance();
                diseqs.emplace_back(Term::make(name), Term::make(ident()));
            } else if (name == "true") {
                saw_true = true;
            } else {
                atoms.emplace_back(Pred::make(name, 0), std::vector<Term>{});
            }
            skip_ws();
            if (peek() == ',') {
                advance();
                continue;
            }
            break;
        }
        if (saw_true && (!atoms.empty() || !diseqs.empty()))
            fail("'true' cannot be combined with atoms");
        return Conjunction::make(std::move(atoms), std::move(diseqs));
    }

    void statement() {
        std::string kw = ident();
        if (kw == "relation" || kw == "action") {
            std::string name = ident();
            expect('/', "after symbol name");
            std::string ar = number_text();
            if (ar.find('.') != std::string::npos ||
                ar.find('e') != std::string::npos)
                fail("arity must be an integer");
            Pred p = Pred::make(name, static_cast<std::size_t>(std::stoul(ar)));
            if (kw == "relation")
                model_.relations.insert(p);
            else
                model_.actions.insert(p);
        } else if (kw == "rule") {
            Atom act = atom();
            expect(':', "after action atom");
            std::string pre_kw = ident();
            if (pre_kw != "pre") fail("expected 'pre'");
            Conjunction body = conjunction();
            std::vector<ActionRule> rules;
            skip_ws();
            while (peek() == ';') {
                advance();
                double prob = std::stod(number_text());
                skip_ws();
                if (!(peek() == '-' && peek2() == '>'))
                    fail("expected '->' after branch probability");
                advance();
                advance();
                Conjunction head = conjunction();
                rules.push_back(ActionRule{prob, std::move(head), body, act});
                skip_ws();
            }
            if (rules.empty()) fail("rule needs at least one ';' branch");
            merge_equal_heads(rules);
            model_.transitions.push_back(
                AbstractTransition{act, std::move(rules)});
        } else if (kw == "constraint") {
            model_.integrity_constraints.push_back(conjunction());
        } else if (kw == "constants") {
            std::vector<Term> consts;
            for (;;) {
                std::string name = ident();
                if (!(name[0] >= 'a' && name[0] <= 'z'))
                    fail("declared constants must be lower-case");
                consts.push_back(Term::constant(name));
                skip_ws();
                if (peek() == ',') {
                    advance();
                    continue;
                }
                break;
            }
            model_.constants = std::move(consts);
        } else if (kw == "state_bound") {
            std::string n = number_text();
            if (n.find('.') != std::string::npos ||
                n.find('e') != std::string::npos)
                fail("state_bound must be an integer");
            unsigned long b = std::stoul(n);
            if (b == 0)
                throw ValidationError("state_bound must be positive");
            model_.state_bound = static_cast<std::size_t>(b);
        } else {
            fail("unknown statement '" + kw + "'");
        }
        expect('.', "to end the statement");
    }

    /// Branches with an identical postcondition describe one outcome; their
    /// probabilities are summed so distributions compare canonically.
    static void merge_equal_heads(std::vector<ActionRule>& rules) {
        std::vector<ActionRule> merged;
        for (ActionRule& r : rules) {
            bool found = false;
            for (ActionRule& m : merged) {
                if (m.head == r.head) {
                    m.prob += r.prob;
                    found = true;
                    break;
                }
            }
            if (!found) merged.push_back(std::move(r));
        }
        rules = std::move(merged);
    }

    // -- Post-parse validation ---------------------------------------------

    void check_declared_relation(const Atom& a) const {
        if (!model_.relations.count(a.pred))
            throw ValidationError("atom '" + a.render() +
                                  "' uses undeclared relation " +
                                  a.pred.name() + "/" +
                                  std::to_string(a.pred.arity()));
    }

    void validate() const {
        for (Pred ap : model_.actions)
            for (Pred rp : model_.relations)
                if (ap.name() == rp.name())
                    throw ValidationError("symbol '" + ap.name() +
                                          "' is declared both as a relation "
                                          "and an action");
        std::set<Term> domain;
        if (model_.constants)
            domain.insert(model_.constants->begin(), model_.constants->end());
        auto check_domain = [&](const Conjunction& c) {
            if (!model_.constants) return;
            for (Term t : c.constants())
                if (!domain.count(t))
                    throw ValidationError(
                        "constant '" + t.name() +
                        "' is missing from the constants declaration");
        };
        for (const AbstractTransition& t : model_.transitions) {
            if (!model_.actions.count(t.action_template.pred))
                throw ValidationError(
                    "atom '" + t.action_template.render() +
                    "' uses undeclared action " + t.action_template.pred.name() +
                    "/" + std::to_string(t.action_template.pred.arity()));
            std::set<Term> body_vars;
            for (Term v : t.body().variables()) body_vars.insert(v);
            for (Term v : t.action_template.args)
                if (v.is_variable() && !body_vars.count(v))
                    throw ValidationError(
                        "action atom variable '" + v.name() +
                        "' does not occur in the precondition "
                        "(vars(action) must be a subset of vars(body))");
            double total = 0.0;
            for (const ActionRule& r : t.rules) {
                if (r.prob < 0.0 || r.prob > 1.0)
                    throw ValidationError(
                        "branch probability " + render_number(r.prob) +
                        " of action " + t.action_template.pred.name() + "/" +
                        std::to_string(t.action_template.pred.arity()) +
                        " is outside [0,1]");
                total += r.prob;
                for (const Atom& a : r.body.atoms()) check_declared_relation(a);
                for (const Atom& a : r.head.atoms()) check_declared_relation(a);
                for (Term v : r.head.variables())
                    if (!body_vars.count(v))
                        throw ValidationError(
                            "postcondition variable '" + v.name() +
                            "' does not occur in the precondition "
                            "(vars(head) must be a subset of vars(body))");
                check_domain(r.body);
                check_domain(r.head);
            }
            if (std::abs(total - 1.0) > 1e-9)
                throw ValidationError(
                    "probabilities of action " + t.action_template.pred.name() +
                    "/" + std::to_string(t.action_template.pred.arity()) +
                    " sum to " + render_number(total));
        }
        for (const Conjunction& ic : model_.integrity_constraints) {
            for (const Atom& a : ic.atoms()) check_declared_relation(a);
            check_domain(ic);
        }
    }
};

} // namespace detail

/// Parses and fully validates a model file. Syntax faults raise ParseError
/// with position information; semantic faults raise ValidationError naming
/// the violated invariant.
inline RMDPModel parse_model(const std::string& text) {
    return detail::ModelParser(text).parse();
}

} // namespace relmc

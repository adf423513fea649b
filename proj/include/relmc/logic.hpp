#pragma once

#include <algorithm>
#include <cstddef>
#include <sstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "symbols.hpp"

namespace relmc {

namespace detail {

/// Shortest decimal form that parses back to exactly the same double.
inline std::string render_number(double v) {
    for (int prec = 1; prec <= 17; ++prec) {
        std::ostringstream os;
        os.precision(prec);
        os << v;
        if (std::stod(os.str()) == v) return os.str();
    }
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace detail

/// A function-free atom: predicate applied to constants and variables.
struct Atom {
    Pred pred;
    std::vector<Term> args;

    Atom() = default;
    Atom(Pred p, std::vector<Term> a) : pred(p), args(std::move(a)) {
        if (args.size() != pred.arity())
            throw ValidationError("atom arity mismatch for '" + pred.name() + "'");
    }

    bool operator==(const Atom& other) const {
        return pred == other.pred && args == other.args;
    }
    bool operator!=(const Atom& other) const { return !(*this == other); }

    bool operator<(const Atom& other) const {
        if (pred != other.pred) return pred < other.pred;
        return std::lexicographical_compare(args.begin(), args.end(),
                                            other.args.begin(), other.args.end());
    }

    std::string render() const {
        if (args.empty()) return pred.name();
        std::string out = pred.name();
        out += '(';
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (i) out += ',';
            out += args[i].name();
        }
        out += ')';
        return out;
    }
};

/// Variable-to-term mapping. Kept in term order so iteration is reproducible.
using Substitution = std::map<Term, Term>;

inline Term subst_term(const Substitution& s, Term t) {
    if (t.is_constant()) return t;
    auto it = s.find(t);
    return it == s.end() ? t : it->second;
}

inline Atom subst_atom(const Substitution& s, const Atom& a) {
    std::vector<Term> args;
    args.reserve(a.args.size());
    for (Term t : a.args) args.push_back(subst_term(s, t));
    return Atom(a.pred, std::move(args));
}

/// An abstract state: an existentially quantified conjunction of atoms, read
/// under the convention that all distinct terms occurring in it denote
/// distinct objects (and distinct constants are always distinct objects).
///
/// A conjunction may additionally carry explicit disequalities. These only
/// ever relate a variable occurring in the atoms to a constant that does not
/// occur in them — every other combination is either redundant (distinctness
/// of co-occurring terms is already implied), vacuous (a variable outside the
/// conjunction is unconstrained), or trivially true (two distinct constants).
/// The factory normalises accordingly.
class Conjunction {
public:
    using Diseq = std::pair<Term, Term>; // (variable in atoms, constant outside)

    Conjunction() = default;

    static Conjunction make(std::vector<Atom> atoms,
                            std::vector<Diseq> diseqs = {}) {
        Conjunction c;
        std::sort(atoms.begin(), atoms.end());
        atoms.erase(std::unique(atoms.begin(), atoms.end()), atoms.end());
        c.atoms_ = std::move(atoms);

        std::set<Term> in_conj;
        for (const Atom& a : c.atoms_)
            for (Term t : a.args) in_conj.insert(t);

        std::vector<Diseq> kept;
        for (auto [l, r] : diseqs) {
            if (l == r)
                throw ValidationError("reflexive disequality on '" + l.name() + "'");
            bool l_in = in_conj.count(l) != 0;
            bool r_in = in_conj.count(r) != 0;
            if (l_in && r_in) continue;             // implied by distinctness
            if (!l_in && !r_in) continue;           // constrains nothing here
            if (!l_in) std::swap(l, r);             // occurring term first
            if (l.is_constant()) continue;          // outside term is free
            if (r.is_variable()) continue;          // outside variable is free
            kept.emplace_back(l, r);                // (variable, fresh constant)
        }
        std::sort(kept.begin(), kept.end());
        kept.erase(std::unique(kept.begin(), kept.end()), kept.end());
        c.diseqs_ = std::move(kept);
        return c;
    }

    const std::vector<Atom>& atoms() const { return atoms_; }
    const std::vector<Diseq>& diseqs() const { return diseqs_; }
    bool empty() const { return atoms_.empty(); }
    std::size_t size() const { return atoms_.size(); }

    bool operator==(const Conjunction& other) const {
        return atoms_ == other.atoms_ && diseqs_ == other.diseqs_;
    }
    bool operator!=(const Conjunction& other) const { return !(*this == other); }
    bool operator<(const Conjunction& other) const {
        if (atoms_ != other.atoms_) return atoms_ < other.atoms_;
        return diseqs_ < other.diseqs_;
    }

    bool contains(const Atom& a) const {
        return std::binary_search(atoms_.begin(), atoms_.end(), a);
    }

    /// Distinct terms of the atoms, in term order.
    std::vector<Term> terms() const {
        std::set<Term> s;
        for (const Atom& a : atoms_)
            for (Term t : a.args) s.insert(t);
        return {s.begin(), s.end()};
    }

    std::vector<Term> variables() const {
        std::vector<Term> out;
        for (Term t : terms())
            if (t.is_variable()) out.push_back(t);
        return out;
    }

    std::vector<Term> constants() const {
        std::vector<Term> out;
        for (Term t : terms())
            if (t.is_constant()) out.push_back(t);
        return out;
    }

    /// Number of distinct terms occurring in the atoms.
    std::size_t term_count() const { return terms().size(); }

    bool is_ground() const {
        for (const Atom& a : atoms_)
            for (Term t : a.args)
                if (t.is_variable()) return false;
        return true;
    }

    /// Plain text form: atoms then disequalities, comma separated, no spaces.
    /// The empty conjunction renders as "true".
    std::string render() const {
        if (atoms_.empty() && diseqs_.empty()) return "true";
        std::string out;
        for (const Atom& a : atoms_) {
            if (!out.empty()) out += ',';
            out += a.render();
        }
        for (const auto& [l, r] : diseqs_) {
            if (!out.empty()) out += ',';
            out += l.name();
            out += "!=";
            out += r.name();
        }
        return out;
    }

private:
    std::vector<Atom> atoms_;   // sorted, unique
    std::vector<Diseq> diseqs_; // normalised, sorted, unique
};

// ---------------------------------------------------------------------------
// Substitution application
// ---------------------------------------------------------------------------

/// Applies a substitution without any distinctness checking. Returns nothing
/// when the image is inconsistent: an atom that mentions the same term twice,
/// or a disequality whose two sides became identical.
inline std::optional<Conjunction> substituted(const Conjunction& c,
                                              const Substitution& s) {
    std::vector<Atom> atoms;
    atoms.reserve(c.atoms().size());
    for (const Atom& a : c.atoms()) {
        Atom img = subst_atom(s, a);
        for (std::size_t i = 0; i < img.args.size(); ++i)
            for (std::size_t j = i + 1; j < img.args.size(); ++j)
                if (img.args[i] == img.args[j]) return std::nullopt;
        atoms.push_back(std::move(img));
    }
    std::vector<Conjunction::Diseq> diseqs;
    for (auto [l, r] : c.diseqs()) {
        Term li = subst_term(s, l);
        if (li == r) return std::nullopt;
        diseqs.emplace_back(li, r);
    }
    return Conjunction::make(std::move(atoms), std::move(diseqs));
}

/// Applies a substitution to an abstract state. The state's distinctness
/// reading makes this legal only when the substitution keeps every pair of
/// distinct occurring terms distinct and respects the explicit
/// disequalities; otherwise an OIViolation is raised.
inline Conjunction apply(const Substitution& s, const Conjunction& c) {
    std::map<Term, Term> image_of;
    std::set<Term> images;
    for (Term t : c.terms()) {
        Term img = subst_term(s, t);
        image_of.emplace(t, img);
        if (!images.insert(img).second)
            throw OIViolation("substitution identifies distinct terms of '" +
                              c.render() + "'");
    }
    for (auto [l, r] : c.diseqs()) {
        auto it = image_of.find(l);
        Term li = it == image_of.end() ? subst_term(s, l) : it->second;
        if (li == subst_term(s, r))
            throw OIViolation("substitution contradicts disequality " +
                              l.name() + "!=" + r.name());
    }
    auto out = substituted(c, s);
    if (!out)
        throw OIViolation("substitution produces an inconsistent state from '" +
                          c.render() + "'");
    return *out;
}

// ---------------------------------------------------------------------------
// Subsumption
// ---------------------------------------------------------------------------

namespace detail {

/// Shared backtracking core for subsumption. Maps every atom of `general`
/// onto a distinct atom of `specific` with a substitution that is injective
/// over the terms of `general` (so the cover respects distinctness on the
/// general side). Calls `sink` for each witness in a fixed order; stops when
/// the sink returns false.
template <typename Sink>
void subsumption_search(const Conjunction& general, const Conjunction& specific,
                        Sink&& sink) {
    const auto& gas = general.atoms();
    const auto& sas = specific.atoms();
    if (gas.size() > sas.size()) return;

    // Images already taken; seeded with the general side's constants, which
    // map to themselves and must not be reused as a variable's image.
    std::set<Term> used;
    for (Term t : general.constants()) used.insert(t);

    Substitution theta;
    std::vector<bool> taken(sas.size(), false);
    bool stop = false;

    auto entailed_diseqs = [&]() {
        // Every explicit disequality of the general side must hold in the
        // world of the specific side: distinct co-occurring terms are
        // distinct, distinct constants are distinct, and anything else needs
        // a matching recorded disequality.
        std::set<Term> spec_terms;
        for (Term t : specific.terms()) spec_terms.insert(t);
        for (auto [l, r] : general.diseqs()) {
            Term li = subst_term(theta, l);
            Term ri = subst_term(theta, r);
            if (li == ri) return false;
            if (li.is_constant() && ri.is_constant()) continue;
            if (spec_terms.count(li) && spec_terms.count(ri)) continue;
            Conjunction::Diseq want(li, ri);
            if (li.is_constant()) std::swap(want.first, want.second);
            bool found = false;
            for (const auto& d : specific.diseqs())
                if (d == want) { found = true; break; }
            if (!found) return false;
        }
        return true;
    };

    auto rec = [&](auto&& self, std::size_t gi) -> void {
        if (stop) return;
        if (gi == gas.size()) {
            if (entailed_diseqs() && !sink(theta)) stop = true;
            return;
        }
        const Atom& ga = gas[gi];
        for (std::size_t si = 0; si < sas.size() && !stop; ++si) {
            if (taken[si] || sas[si].pred != ga.pred) continue;
            const Atom& sa = sas[si];
            std::vector<Term> bound;
            std::vector<Term> claimed;
            bool ok = true;
            for (std::size_t k = 0; k < ga.args.size() && ok; ++k) {
                Term g = ga.args[k], s = sa.args[k];
                if (g.is_constant()) {
                    ok = (g == s);
                } else if (auto it = theta.find(g); it != theta.end()) {
                    ok = (it->second == s);
                } else if (used.count(s)) {
                    ok = false; // image already claimed: cover must stay injective
                } else {
                    theta.emplace(g, s);
                    used.insert(s);
                    bound.push_back(g);
                    claimed.push_back(s);
                }
            }
            if (ok) {
                taken[si] = true;
                self(self, gi + 1);
                taken[si] = false;
            }
            for (Term g : bound) theta.erase(g);
            for (Term s : claimed) used.erase(s);
        }
    };
    rec(rec, 0);
}

} // namespace detail

/// Decides whether `general` covers `specific`: a substitution of the general
/// side's variables, injective over its terms, embedding all its atoms into
/// the specific side and preserving its disequalities. Returns the first
/// witness in a fixed deterministic order, or nothing.
inline std::optional<Substitution> oi_subsumes(const Conjunction& general,
                                               const Conjunction& specific) {
    std::optional<Substitution> out;
    detail::subsumption_search(general, specific, [&](const Substitution& s) {
        out = s;
        return false; // first witness suffices
    });
    return out;
}

/// All subsumption witnesses, in the same deterministic order.
inline std::vector<Substitution> oi_witnesses(const Conjunction& general,
                                              const Conjunction& specific) {
    std::vector<Substitution> out;
    detail::subsumption_search(general, specific, [&](const Substitution& s) {
        out.push_back(s);
        return true;
    });
    return out;
}

// ---------------------------------------------------------------------------
// Unification
// ---------------------------------------------------------------------------

namespace detail {

/// Union-find over terms for positionwise merging. A merge fails when a
/// class would hold two distinct constants, or two distinct terms from the
/// same side (each side keeps its own terms pairwise distinct).
class MergeClasses {
public:
    void add(Term t, int side) {
        if (parent_.count(t)) { sides_[find(t)] |= side; return; }
        parent_[t] = t;
        sides_[t] = side;
    }

    Term find(Term t) {
        Term r = t;
        while (parent_[r] != r) r = parent_[r];
        while (parent_[t] != r) { Term next = parent_[t]; parent_[t] = r; t = next; }
        return r;
    }

    bool merge(Term a, Term b) {
        Term ra = find(a), rb = find(b);
        if (ra == rb) return true;
        if (ra.is_constant() && rb.is_constant()) return false;
        if ((sides_[ra] & sides_[rb]) != 0) return false; // same-side collapse
        // Keep the constant, else the smaller term, as the class root.
        if (rb.is_constant() || (!ra.is_constant() && rb < ra)) std::swap(ra, rb);
        parent_[rb] = ra;
        sides_[ra] |= sides_[rb];
        return true;
    }

    /// Substitution sending every term to its class representative.
    Substitution to_substitution() {
        Substitution s;
        for (const auto& [t, p] : parent_) {
            (void)p;
            Term r = find(t);
            if (t.is_variable() && r != t) s.emplace(t, r);
        }
        return s;
    }

private:
    std::map<Term, Term> parent_;
    std::map<Term, int> sides_;
};

} // namespace detail

/// Unifies two conjunctions of equal size by a bijective atom matching and
/// positionwise merging, returning the most general substitution that maps
/// both onto a common image. Both sides are read under distinctness, so a
/// merge may never identify two distinct terms of one side, and a class
/// holds at most one constant. The operands must not share variables.
/// Returns the first solution in a fixed deterministic order, or nothing.
inline std::optional<Substitution> unify(const Conjunction& a,
                                         const Conjunction& b) {
    {
        std::set<Term> av;
        for (Term t : a.variables()) av.insert(t);
        for (Term t : b.variables())
            if (av.count(t))
                throw SharedVariables("unify operands share variable '" +
                                      t.name() + "'");
    }
    if (a.size() != b.size()) return std::nullopt;

    const auto& aas = a.atoms();
    const auto& bas = b.atoms();
    std::vector<bool> taken(bas.size(), false);
    std::optional<Substitution> out;

    // Side tags: constants may occur on both sides and are tagged as such.
    auto side_of = [&](Term t) {
        int side = 0;
        for (const Atom& at : aas)
            for (Term u : at.args)
                if (u == t) side |= 1;
        for (const Atom& bt : bas)
            for (Term u : bt.args)
                if (u == t) side |= 2;
        return side;
    };

    auto rec = [&](auto&& self, std::size_t ai,
                   detail::MergeClasses classes) -> bool {
        if (ai == aas.size()) {
            Substitution s = classes.to_substitution();
            if (!substituted(a, s)) return false;
            out = std::move(s);
            return true;
        }
        const Atom& aa = aas[ai];
        for (std::size_t bi = 0; bi < bas.size(); ++bi) {
            if (taken[bi] || bas[bi].pred != aa.pred) continue;
            detail::MergeClasses next = classes;
            bool ok = true;
            for (std::size_t k = 0; k < aa.args.size() && ok; ++k)
                ok = next.merge(aa.args[k], bas[bi].args[k]);
            if (!ok) continue;
            taken[bi] = true;
            if (self(self, ai + 1, std::move(next))) return true;
            taken[bi] = false;
        }
        return false;
    };

    detail::MergeClasses base;
    for (const Atom& at : aas)
        for (Term t : at.args) base.add(t, side_of(t));
    for (const Atom& bt : bas)
        for (Term t : bt.args) base.add(t, side_of(t));
    rec(rec, 0, std::move(base));
    return out;
}

// ---------------------------------------------------------------------------
// Renaming
// ---------------------------------------------------------------------------

/// Replaces every variable by a fresh one. Returns the renamed conjunction
/// and the renaming used.
inline std::pair<Conjunction, Substitution> rename_apart(const Conjunction& c) {
    Substitution ren;
    for (Term v : c.variables()) ren.emplace(v, Term::fresh_variable());
    auto out = substituted(c, ren);
    // A renaming is a bijection on variables, so it can never be rejected.
    return {std::move(*out), std::move(ren)};
}

/// Renames the variables of `c` away from `avoid`: variables that collide
/// are replaced by fresh ones, the rest stay. The result is a variant of `c`
/// sharing no variable with `avoid`.
inline Conjunction standardize_apart(const Conjunction& c,
                                     const std::set<Term>& avoid) {
    Substitution ren;
    for (Term v : c.variables())
        if (avoid.count(v)) ren.emplace(v, Term::fresh_variable());
    if (ren.empty()) return c;
    return *substituted(c, ren);
}

/// Renames `b` apart from `a` if they share variables; otherwise returns `b`
/// unchanged with an empty renaming.
inline std::pair<Conjunction, Substitution>
standardize_apart_from(const Conjunction& a, const Conjunction& b) {
    std::set<Term> av;
    for (Term t : a.variables()) av.insert(t);
    bool overlap = false;
    for (Term t : b.variables())
        if (av.count(t)) { overlap = true; break; }
    if (!overlap) return {b, {}};
    return rename_apart(b);
}

// ---------------------------------------------------------------------------
// Canonical form
// ---------------------------------------------------------------------------

namespace detail {

/// Order-defining skeleton of an atom that ignores variable names: the
/// predicate plus, per argument, either the constant's name or a marker.
inline std::string atom_skeleton(const Atom& a) {
    std::string key = a.pred.name();
    key += '/';
    key += std::to_string(a.pred.arity());
    for (Term t : a.args) {
        key += '|';
        key += t.is_constant() ? "c:" + t.name() : std::string("v");
    }
    return key;
}

struct CanonicalResult {
    std::vector<Atom> atoms;                   // winning order, renumbered
    std::vector<Conjunction::Diseq> diseqs;    // renumbered
    std::string key;
};

/// Searches for the name-independent normal form: atoms are arranged by
/// skeleton, ties are broken by trying every arrangement of same-skeleton
/// atoms (with branch-and-bound pruning), variables are renumbered V1, V2,
/// ... in order of first occurrence, and the smallest resulting sequence
/// wins. Two conjunctions are renamings of each other exactly when their
/// normal forms coincide.
inline CanonicalResult canonicalize(const Conjunction& c) {
    const auto& atoms = c.atoms();
    std::size_t n = atoms.size();

    // Stable grouping by skeleton.
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::vector<std::string> skel(n);
    for (std::size_t i = 0; i < n; ++i) skel[i] = atom_skeleton(atoms[i]);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return skel[a] < skel[b];
    });
    std::vector<std::pair<std::size_t, std::size_t>> groups; // [begin, end)
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && skel[idx[j]] == skel[idx[i]]) ++j;
        groups.emplace_back(i, j);
        i = j;
    }

    auto renumber = [&](const std::vector<std::size_t>& order) {
        std::map<Term, Term> numbering;
        std::vector<Atom> out;
        out.reserve(order.size());
        for (std::size_t oi : order) {
            const Atom& a = atoms[oi];
            std::vector<Term> args;
            args.reserve(a.args.size());
            for (Term t : a.args) {
                if (t.is_constant()) { args.push_back(t); continue; }
                auto it = numbering.find(t);
                if (it == numbering.end()) {
                    Term v = Term::variable("V" + std::to_string(numbering.size() + 1));
                    it = numbering.emplace(t, v).first;
                }
                args.push_back(it->second);
            }
            out.emplace_back(a.pred, std::move(args));
        }
        return std::pair(std::move(out), std::move(numbering));
    };

    auto diseq_block = [&](const std::map<Term, Term>& numbering) {
        std::vector<Conjunction::Diseq> out;
        for (auto [l, r] : c.diseqs()) {
            auto it = numbering.find(l);
            out.emplace_back(it == numbering.end() ? l : it->second, r);
        }
        std::sort(out.begin(), out.end());
        return out;
    };

    std::vector<std::size_t> best_order;
    std::vector<Atom> best_atoms;
    std::vector<Conjunction::Diseq> best_diseqs;
    bool have_best = false;

    // Depth-first search over arrangements of same-skeleton atoms, pruned as
    // soon as the renumbered prefix exceeds the best complete sequence.
    std::vector<std::size_t> order(idx);
    auto rec = [&](auto&& self, std::size_t pos) -> void {
        if (have_best) {
            // Compare the prefix built so far against the incumbent.
            auto [prefix, numbering] = renumber(
                std::vector<std::size_t>(order.begin(), order.begin() + pos));
            (void)numbering;
            for (std::size_t i = 0; i < pos; ++i) {
                if (prefix[i] < best_atoms[i]) break;
                if (best_atoms[i] < prefix[i]) return;
            }
        }
        if (pos == n) {
            auto [cand, numbering] = renumber(order);
            auto cand_d = diseq_block(numbering);
            if (!have_best || cand < best_atoms ||
                (cand == best_atoms && cand_d < best_diseqs)) {
                best_order = order;
                best_atoms = std::move(cand);
                best_diseqs = std::move(cand_d);
                have_best = true;
            }
            return;
        }
        // Which group does this position belong to?
        for (auto [gb, ge] : groups) {
            if (pos < gb || pos >= ge) continue;
            if (ge - gb == 1) { self(self, pos + 1); return; }
            // Try each remaining atom of the group at this position.
            for (std::size_t i = pos; i < ge; ++i) {
                std::swap(order[pos], order[i]);
                self(self, pos + 1);
                std::swap(order[pos], order[i]);
            }
            return;
        }
    };
    rec(rec, 0);

    CanonicalResult res;
    res.atoms = std::move(best_atoms);
    res.diseqs = std::move(best_diseqs);
    std::string key;
    for (const Atom& a : res.atoms) {
        if (!key.empty()) key += ',';
        key += a.render();
    }
    for (const auto& [l, r] : res.diseqs) {
        if (!key.empty()) key += ',';
        key += l.name();
        key += "!=";
        key += r.name();
    }
    if (key.empty()) key = "true";
    res.key = std::move(key);
    return res;
}

} // namespace detail

/// Normal form of a conjunction: variables renamed to V1, V2, ... so that
/// any two renamings of the same state become identical.
inline Conjunction canonical_form(const Conjunction& c) {
    auto res = detail::canonicalize(c);
    return Conjunction::make(std::move(res.atoms), std::move(res.diseqs));
}

/// Text key of the normal form; equal exactly for renamings of one another.
/// Also the preferred display form for states in reports and JSON output.
inline std::string canonical_key(const Conjunction& c) {
    return detail::canonicalize(c).key;
}

/// True when `general` covers `specific` but not the other way round.
inline bool properly_subsumes(const Conjunction& general,
                              const Conjunction& specific) {
    if (!oi_subsumes(general, specific)) return false;
    return !oi_subsumes(specific, general).has_value();
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline bool ident_start(char ch) {
    return (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') || ch == '_';
}
inline bool ident_char(char ch) {
    return ident_start(ch) || (ch >= '0' && ch <= '9');
}

} // namespace detail

/// Parses the textual form produced by Conjunction::render: a comma list of
/// atoms and X!=c disequalities, or "true" for the empty conjunction.
/// Positions in errors are 1-based columns into `text`.
inline Conjunction parse_conjunction(const std::string& text) {
    std::size_t pos = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw ParseError(msg, 1, pos + 1);
    };
    auto skip_ws = [&] {
        while (pos < text.size() &&
               (text[pos] == ' ' || text[pos] == '\t'))
            ++pos;
    };
    auto ident = [&]() -> std::string {
        skip_ws();
        if (pos >= text.size() || !detail::ident_start(text[pos]))
            fail("expected identifier");
        std::size_t start = pos;
        while (pos < text.size() && detail::ident_char(text[pos])) ++pos;
        return text.substr(start, pos - start);
    };

    std::vector<Atom> atoms;
    std::vector<Conjunction::Diseq> diseqs;
    bool saw_true = false;

    skip_ws();
    if (pos < text.size()) {
        for (;;) {
            std::string name = ident();
            skip_ws();
            if (pos < text.size() && text[pos] == '(') {
                ++pos;
                std::vector<Term> args;
                for (;;) {
                    args.push_back(Term::make(ident()));
                    skip_ws();
                    if (pos < text.size() && text[pos] == ',') { ++pos; continue; }
                    if (pos < text.size() && text[pos] == ')') { ++pos; break; }
                    fail("expected ',' or ')' in argument list");
                }
                atoms.emplace_back(Pred::make(name, args.size()), std::move(args));
            } else if (pos + 1 < text.size() && text[pos] == '!' &&
                       text[pos + 1] == '=') {
                pos += 2;
                std::string rhs = ident();
                diseqs.emplace_back(Term::make(name), Term::make(rhs));
            } else if (name == "true") {
                saw_true = true;
            } else {
                atoms.emplace_back(Pred::make(name, 0), std::vector<Term>{});
            }
            skip_ws();
            if (pos < text.size() && text[pos] == ',') { ++pos; continue; }
            break;
        }
    }
    skip_ws();
    if (pos != text.size()) fail("unexpected trailing input");
    if (saw_true && (!atoms.empty() || !diseqs.empty()))
        fail("'true' cannot be combined with atoms");
    return Conjunction::make(std::move(atoms), std::move(diseqs));
}

} // namespace relmc

#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "engine.hpp"
#include "errors.hpp"
#include "formula.hpp"
#include "logic.hpp"
#include "mgs.hpp"
#include "model.hpp"
#include "values.hpp"

namespace relmc {

// ---------------------------------------------------------------------------
// Formula evaluation over abstract states
// ---------------------------------------------------------------------------
//
// Recursive descent over the formula parse tree. Every node yields a set of
// abstract states — a ground state satisfies the node iff some set member
// covers it — with probability nodes resolved by relational value iteration
// through the backward engine.

/// One satisfying abstract state. `value` is present when the entry came out
/// of a probability node (the state's computed probability, which passed the
/// node's threshold); it is absent for purely boolean entries. `negated`
/// marks the entry as the complement reading of its single atom.
struct SatEntry {
    Conjunction state;
    std::optional<double> value;
    bool negated = false;
};

/// The satisfying set of one formula node, deduplicated, with no entry
/// covered by another entry of equal or greater value.
struct SatSet {
    std::vector<SatEntry> entries;
};

/// Knobs shared by every evaluation: abstract-state size bound (falls back
/// to the model's own when absent), convergence threshold and iteration cap
/// for step-unbounded untils, regression worker count, and optional
/// symmetric slack applied when comparing a value against a threshold.
struct CheckOptions {
    std::optional<std::size_t> state_bound;
    double epsilon = 1e-6;
    std::size_t max_iterations = 1000;
    unsigned jobs = 1;
    double threshold_slack = 0.0;
};

/// Evaluation outcome for a whole formula: the satisfying set, the value
/// function and iteration diagnostics of the outermost probability operator
/// (when the root is one), and whether its iteration reached the fixpoint
/// tolerance (step-bounded runs always count as converged).
struct CheckResult {
    SatSet sat;
    std::size_t iterations = 0;
    bool converged = true;
    bool has_values = false;
    ValueFunction values;
};

namespace detail {

/// True when `value` passes the comparison against `threshold`, widened
/// symmetrically by `slack`.
inline bool passes_threshold(Comparator cmp, double value, double threshold,
                             double slack) {
    switch (cmp) {
    case Comparator::Ge: return value >= threshold - slack;
    case Comparator::Gt: return value > threshold - slack;
    case Comparator::Le: return value <= threshold + slack;
    case Comparator::Lt: return value < threshold + slack;
    }
    return false;
}

inline std::string entry_key(const SatEntry& e) {
    std::string key = e.negated ? "!" : "";
    key += canonical_key(e.state);
    if (e.value) key += "#" + render_number(*e.value);
    return key;
}

/// Deduplicates entries and drops every entry covered by another entry
/// whose value is at least as good. Valueless and valued entries make
/// different claims, so they never prune one another, and negated entries
/// are left untouched.
inline SatSet prune_entries(std::vector<SatEntry> entries) {
    std::map<std::string, SatEntry> uniq;
    for (auto& e : entries) {
        std::string key = entry_key(e);
        uniq.emplace(std::move(key), std::move(e));
    }
    std::vector<SatEntry> kept;
    for (const auto& [key, e] : uniq) {
        bool covered = false;
        for (const auto& [okey, g] : uniq) {
            if (okey == key || g.negated || e.negated) continue;
            if (static_cast<bool>(g.value) != static_cast<bool>(e.value))
                continue;
            if (g.value && *g.value < *e.value) continue;
            if (!oi_subsumes(g.state, e.state)) continue;
            // Mutual coverage at equal value: keep the first key only.
            if (g.value && *g.value == *e.value && oi_subsumes(e.state, g.state) &&
                key < okey)
                continue;
            if (!g.value && oi_subsumes(e.state, g.state) && key < okey)
                continue;
            covered = true;
            break;
        }
        if (!covered) kept.push_back(e);
    }
    SatSet out;
    out.entries = std::move(kept);
    return out;
}

/// States of a child satisfying set headed into the backward engine, which
/// has no reading for complement entries.
inline std::vector<Conjunction> plain_states(const SatSet& s,
                                             const char* where) {
    std::vector<Conjunction> out;
    for (const SatEntry& e : s.entries) {
        if (e.negated)
            throw UnsupportedNegation(
                std::string("negated literal cannot flow into ") + where);
        out.push_back(e.state);
    }
    return out;
}

inline std::optional<std::size_t> effective_bound(const RMDPModel& model,
                                                  const CheckOptions& opt) {
    return opt.state_bound ? opt.state_bound : model.state_bound;
}

/// Iteration diagnostics of one probability node.
struct ProbDiag {
    std::size_t iterations = 0;
    bool converged = true;
    ValueFunction values;
};

SatSet check_set(const StateFormula& f, const RMDPModel& model,
                 const CheckOptions& opt, ProbDiag* diag);

/// Value iteration for `lhs U rhs`: start from the goal set, apply the
/// constrained Bellman operator while steps remain and the value function
/// still moves, then keep the rules whose value passes the threshold.
inline SatSet check_until(Comparator cmp, double threshold,
                          const StateFormula& lhs, const StateFormula& rhs,
                          std::optional<std::size_t> steps,
                          const RMDPModel& model, const CheckOptions& opt,
                          ProbDiag* diag) {
    std::vector<Conjunction> constraint =
        plain_states(check_set(lhs, model, opt, nullptr), "value iteration");
    std::vector<Conjunction> goals =
        plain_states(check_set(rhs, model, opt, nullptr), "value iteration");

    ValueFunction v = ValueFunction::initial(goals);
    StepFormula psi = StepFormula::until(std::move(constraint), std::move(goals));
    std::optional<std::size_t> bound = effective_bound(model, opt);

    std::size_t cap = steps ? *steps : opt.max_iterations;
    double delta = std::numeric_limits<double>::infinity();
    std::size_t t = 0;
    while (t < cap && delta >= opt.epsilon) {
        ValueFunction next = one_iteration(v, psi, model, bound, opt.jobs);
        delta = distance(v, next);
        v = std::move(next);
        ++t;
    }
    if (!steps && delta >= opt.epsilon)
        throw NonConvergence("value iteration still moved by " +
                                 render_number(delta) + " after " +
                                 std::to_string(t) + " iterations (tolerance " +
                                 render_number(opt.epsilon) + ")",
                             delta, t);
    if (diag) {
        diag->iterations = t;
        diag->converged = steps ? true : delta < opt.epsilon;
        diag->values = v;
    }

    std::vector<SatEntry> entries;
    for (const VRule& r : v.rules)
        if (passes_threshold(cmp, r.value, threshold, opt.threshold_slack))
            entries.push_back(SatEntry{r.state, r.value, false});
    return prune_entries(std::move(entries));
}

/// One-step evaluation for `X φ`: a single unconstrained Bellman application
/// with nothing absorbing, filtered by the threshold.
inline SatSet check_next(Comparator cmp, double threshold,
                         const StateFormula& operand, const RMDPModel& model,
                         const CheckOptions& opt, ProbDiag* diag) {
    std::vector<Conjunction> goals =
        plain_states(check_set(operand, model, opt, nullptr), "value iteration");
    ValueFunction v0 = ValueFunction::initial(goals);
    StepFormula psi = StepFormula::next(std::move(goals));
    ValueFunction v1 =
        one_iteration(v0, psi, model, effective_bound(model, opt), opt.jobs);
    if (diag) {
        diag->iterations = 1;
        diag->converged = true;
        diag->values = v1;
    }
    std::vector<SatEntry> entries;
    for (const VRule& r : v1.rules)
        if (passes_threshold(cmp, r.value, threshold, opt.threshold_slack))
            entries.push_back(SatEntry{r.state, r.value, false});
    return prune_entries(std::move(entries));
}

/// Recursive node evaluation. Conjunction combines child entries through
/// all most-general merges under the model's forbidden patterns (children
/// are renamed apart first, so co-occurring and distinct readings both
/// appear); disjunction is plain union.
inline SatSet check_set(const StateFormula& f, const RMDPModel& model,
                        const CheckOptions& opt, ProbDiag* diag) {
    switch (f.kind) {
    case StateFormula::Kind::True: {
        SatSet s;
        s.entries.push_back(SatEntry{Conjunction(), std::nullopt, false});
        return s;
    }
    case StateFormula::Kind::False:
        return SatSet{};
    case StateFormula::Kind::Lit: {
        SatSet s;
        s.entries.push_back(
            SatEntry{Conjunction::make({f.atom}), std::nullopt, false});
        return s;
    }
    case StateFormula::Kind::NegLit: {
        SatSet s;
        s.entries.push_back(
            SatEntry{Conjunction::make({f.atom}), std::nullopt, true});
        return s;
    }
    case StateFormula::Kind::And: {
        SatSet left = check_set(*f.left, model, opt, nullptr);
        SatSet right = check_set(*f.right, model, opt, nullptr);
        std::vector<SatEntry> entries;
        for (const SatEntry& a : left.entries) {
            for (const SatEntry& b : right.entries) {
                if (a.negated || b.negated)
                    throw UnsupportedNegation(
                        "negated literal cannot flow into a conjunction merge");
                Conjunction b2 = standardize_apart_from(a.state, b.state).first;
                for (Conjunction& merged :
                     mgs(a.state, b2, model.integrity_constraints))
                    entries.push_back(
                        SatEntry{std::move(merged), std::nullopt, false});
            }
        }
        return prune_entries(std::move(entries));
    }
    case StateFormula::Kind::Or: {
        SatSet left = check_set(*f.left, model, opt, nullptr);
        SatSet right = check_set(*f.right, model, opt, nullptr);
        std::vector<SatEntry> entries = left.entries;
        entries.insert(entries.end(), right.entries.begin(),
                       right.entries.end());
        return prune_entries(std::move(entries));
    }
    case StateFormula::Kind::Prob:
        if (f.path->kind == PathFormula::Kind::Next)
            return check_next(f.cmp, f.threshold, *f.path->operand, model, opt,
                              diag);
        return check_until(f.cmp, f.threshold, *f.path->lhs, *f.path->rhs,
                           f.path->bound, model, opt, diag);
    }
    return SatSet{};
}

} // namespace detail

/// Evaluates a state formula against the model, returning its satisfying
/// abstract states plus the value function and iteration diagnostics of the
/// outermost probability operator when the formula is one.
inline CheckResult check(const StateFormula& f, const RMDPModel& model,
                         const CheckOptions& opt = {}) {
    CheckResult out;
    detail::ProbDiag diag;
    bool root_prob = f.kind == StateFormula::Kind::Prob;
    out.sat = detail::check_set(f, model, opt, root_prob ? &diag : nullptr);
    if (root_prob) {
        out.iterations = diag.iterations;
        out.converged = diag.converged;
        out.has_values = true;
        out.values = std::move(diag.values);
    }
    return out;
}

/// Ground satisfaction outcome; `witness` binds the satisfying entry's (or
/// negated atom's) variables when one was needed.
struct Satisfaction {
    bool holds = false;
    Substitution witness;
};

namespace detail {

/// Constants available for grounding a negated atom: the state's own plus
/// a declared pool.
inline std::vector<Term> negation_domain(const std::vector<Term>& declared,
                                         const Conjunction& s) {
    std::set<Term> pool;
    for (Term t : s.constants()) pool.insert(t);
    for (Term t : declared) pool.insert(t);
    return {pool.begin(), pool.end()};
}

/// Complement semantics of one atom: some injective grounding of its
/// variables over the domain yields an instance absent from the state. The
/// atom's own constants are excluded from variable images, matching the
/// distinctness reading everywhere else.
inline Satisfaction negated_atom_holds(const std::vector<Term>& declared,
                                       const Conjunction& s, const Atom& atom) {
    std::vector<Term> vars;
    std::set<Term> seen, own_consts;
    for (Term t : atom.args) {
        if (t.is_variable() && seen.insert(t).second) vars.push_back(t);
        if (t.is_constant()) own_consts.insert(t);
    }
    if (vars.empty()) {
        if (!s.contains(atom)) return {true, {}};
        return {false, {}};
    }
    std::vector<Term> domain;
    for (Term t : negation_domain(declared, s))
        if (!own_consts.count(t)) domain.push_back(t);
    Satisfaction found{false, {}};
    std::vector<bool> used(domain.size(), false);
    Substitution theta;
    auto rec = [&](auto&& self, std::size_t vi) -> bool {
        if (vi == vars.size()) {
            Atom img = subst_atom(theta, atom);
            for (std::size_t i = 0; i < img.args.size(); ++i)
                for (std::size_t j = i + 1; j < img.args.size(); ++j)
                    if (img.args[i] == img.args[j]) return false;
            if (!s.contains(img)) {
                found = {true, theta};
                return true;
            }
            return false;
        }
        for (std::size_t d = 0; d < domain.size(); ++d) {
            if (used[d]) continue;
            used[d] = true;
            theta.emplace(vars[vi], domain[d]);
            if (self(self, vi + 1)) return true;
            theta.erase(vars[vi]);
            used[d] = false;
        }
        return false;
    };
    rec(rec, 0);
    return found;
}

} // namespace detail

/// Ground membership test with witness: literals are covered-or-not under
/// the distinctness reading, negated literals look for a grounding whose
/// instance the state lacks, connectives recurse, and probability nodes are
/// answered by abstract evaluation followed by coverage of the ground state.
inline Satisfaction satisfies(const RMDPModel& model, const Conjunction& s,
                              const StateFormula& f,
                              const CheckOptions& opt = {}) {
    if (!s.is_ground())
        throw NonGroundState("satisfaction is defined on ground states, got '" +
                             s.render() + "'");
    switch (f.kind) {
    case StateFormula::Kind::True:
        return {true, {}};
    case StateFormula::Kind::False:
        return {false, {}};
    case StateFormula::Kind::Lit: {
        auto theta = oi_subsumes(Conjunction::make({f.atom}), s);
        if (theta) return {true, *theta};
        return {false, {}};
    }
    case StateFormula::Kind::NegLit:
        return detail::negated_atom_holds(
            model.constants ? *model.constants : std::vector<Term>{}, s,
            f.atom);
    case StateFormula::Kind::And: {
        Satisfaction left = satisfies(model, s, *f.left, opt);
        if (!left.holds) return {false, {}};
        Satisfaction right = satisfies(model, s, *f.right, opt);
        if (!right.holds) return {false, {}};
        Substitution merged = left.witness;
        for (const auto& [v, t] : right.witness) merged.emplace(v, t);
        return {true, std::move(merged)};
    }
    case StateFormula::Kind::Or: {
        Satisfaction left = satisfies(model, s, *f.left, opt);
        if (left.holds) return left;
        return satisfies(model, s, *f.right, opt);
    }
    case StateFormula::Kind::Prob: {
        SatSet sat = detail::check_set(f, model, opt, nullptr);
        for (const SatEntry& e : sat.entries) {
            auto theta = oi_subsumes(e.state, s);
            if (theta) return {true, *theta};
        }
        return {false, {}};
    }
    }
    return {false, {}};
}

} // namespace relmc

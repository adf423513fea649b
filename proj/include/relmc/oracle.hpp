#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "checker.hpp"
#include "errors.hpp"
#include "formula.hpp"
#include "logic.hpp"
#include "mgs.hpp"
#include "model.hpp"
#include "values.hpp"

namespace relmc {

// ---------------------------------------------------------------------------
// Explicit ground semantics
// ---------------------------------------------------------------------------
//
// A reference implementation that expands an abstract model into an ordinary
// finite MDP over ground states and evaluates formulas by explicit value
// iteration. It shares no machinery with the backward engine beyond the term
// layer, which makes it a meaningful cross-check.

/// One ground action choice: the concrete action instance and its outcome
/// distribution over successor state indices.
struct GroundTransition {
    Atom action;
    std::vector<std::pair<std::size_t, double>> outcomes;
};

/// An explicit MDP over ground states. States are sorted, so two
/// enumerations of the same reachable set are identical structures.
/// `constants` holds the model's declared pool, used as the extra grounding
/// domain for negated atoms.
struct GroundMDP {
    std::vector<Conjunction> states;
    std::vector<std::vector<GroundTransition>> transitions;
    std::map<Conjunction, std::size_t> index;
    std::vector<Term> constants;

    /// Index of a ground state; raises InconsistentPath for a state outside
    /// the enumerated space.
    std::size_t state_index(const Conjunction& s) const {
        auto it = index.find(s);
        if (it == index.end())
            throw InconsistentPath("state '" + s.render() +
                                   "' is not part of the ground MDP");
        return it->second;
    }

    /// Action instances available in the given state.
    std::vector<Atom> actions_of(std::size_t state) const {
        std::vector<Atom> out;
        for (const GroundTransition& t : transitions.at(state))
            out.push_back(t.action);
        return out;
    }

    /// Outcome distribution of one action in one state; raises
    /// InapplicableAction when the state has no such choice.
    const std::vector<std::pair<std::size_t, double>>&
    trans(std::size_t state, const Atom& action) const {
        for (const GroundTransition& t : transitions.at(state))
            if (t.action == action) return t.outcomes;
        throw InapplicableAction("action '" + action.render() +
                                 "' is not applicable in state '" +
                                 states.at(state).render() + "'");
    }
};

namespace detail {

/// Every ground atom over the declared relations and the given constant
/// pool. Atoms that repeat a constant are left out: distinct argument
/// positions denote distinct objects.
inline std::vector<Atom> ground_atom_universe(const RMDPModel& model,
                                              const std::vector<Term>& pool) {
    std::vector<Atom> universe;
    for (const Pred& p : model.relations) {
        std::vector<std::vector<Term>> tuples{{}};
        for (std::size_t i = 0; i < p.arity(); ++i) {
            std::vector<std::vector<Term>> next;
            for (const auto& partial : tuples) {
                for (Term c : pool) {
                    if (std::find(partial.begin(), partial.end(), c) !=
                        partial.end())
                        continue;
                    auto extended = partial;
                    extended.push_back(c);
                    next.push_back(std::move(extended));
                }
            }
            tuples = std::move(next);
        }
        for (auto& args : tuples) universe.emplace_back(p, std::move(args));
    }
    return universe;
}

/// All maximal legal states over the pool: legal atom sets that cannot be
/// extended by any further atom without embedding a forbidden pattern.
/// Explored as an include/exclude tree over the atom universe; including an
/// atom that already violates a pattern prunes the whole subtree, which the
/// monotonicity of pattern embedding makes sound.
inline std::vector<Conjunction>
maximal_legal_states(const RMDPModel& model, const std::vector<Term>& pool) {
    std::vector<Atom> universe = ground_atom_universe(model, pool);
    const auto& ics = model.integrity_constraints;
    std::vector<Conjunction> out;
    std::vector<Atom> current;
    std::vector<Atom> excluded;
    auto rec = [&](auto&& self, std::size_t idx) -> void {
        if (idx == universe.size()) {
            for (const Atom& u : excluded) {
                auto extended = current;
                extended.push_back(u);
                if (!violates_integrity(Conjunction::make(std::move(extended)),
                                        ics))
                    return;  // extensible, hence not maximal
            }
            out.push_back(Conjunction::make(current));
            return;
        }
        const Atom& u = universe[idx];
        {
            auto extended = current;
            extended.push_back(u);
            Conjunction cand = Conjunction::make(std::move(extended));
            if (!violates_integrity(cand, ics)) {
                current.push_back(u);
                self(self, idx + 1);
                current.pop_back();
            }
        }
        excluded.push_back(u);
        self(self, idx + 1);
        excluded.pop_back();
    };
    rec(rec, 0);
    return out;
}

} // namespace detail

/// Expands the abstract model into an explicit MDP: the closure of the seed
/// states under every applicable ground action. Without seeds, enumeration
/// starts from all maximal legal states over the pool, so every
/// constraint-respecting configuration is covered. Successors that embed a
/// forbidden pattern are excluded, as are illegal seeds; for models whose
/// actions preserve legality the outcome distributions keep summing to one.
/// Raises ExplosionGuard when the reachable set outgrows `cap`.
inline GroundMDP enumerate(const RMDPModel& model,
                           const std::vector<Term>& pool,
                           std::vector<Conjunction> seeds = {},
                           std::size_t cap = 1'000'000) {
    for (Term t : pool)
        if (!t.is_constant())
            throw ValidationError("enumeration pool must contain constants, "
                                  "got '" + t.name() + "'");
    if (seeds.empty()) seeds = detail::maximal_legal_states(model, pool);

    GroundMDP mdp;
    if (model.constants) mdp.constants = *model.constants;

    auto intern = [&](const Conjunction& s) -> std::size_t {
        auto it = mdp.index.find(s);
        if (it != mdp.index.end()) return it->second;
        if (mdp.states.size() >= cap)
            throw ExplosionGuard("ground state space exceeds the cap of " +
                                 std::to_string(cap) + " states");
        std::size_t id = mdp.states.size();
        mdp.states.push_back(s);
        mdp.index.emplace(s, id);
        return id;
    };
    for (const Conjunction& s : seeds) {
        if (!s.is_ground())
            throw NonGroundState("enumeration seeds must be ground, got '" +
                                 s.render() + "'");
        if (violates_integrity(s, model.integrity_constraints)) continue;
        intern(s);
    }

    mdp.transitions.resize(mdp.states.size());
    for (std::size_t i = 0; i < mdp.states.size(); ++i) {
        Conjunction s = mdp.states[i];
        std::vector<GroundTransition> row;
        for (const Atom& a : ground_actions(model, s)) {
            GroundTransition tr;
            tr.action = a;
            for (auto& [succ, p] : ground_step(model, s, a)) {
                if (violates_integrity(succ, model.integrity_constraints))
                    continue;
                tr.outcomes.emplace_back(intern(succ), p);
            }
            if (!tr.outcomes.empty()) row.push_back(std::move(tr));
        }
        if (mdp.transitions.size() < mdp.states.size())
            mdp.transitions.resize(mdp.states.size());
        mdp.transitions[i] = std::move(row);
    }

    // Sort states so the result is independent of seed order, remapping
    // transition targets through the permutation.
    std::vector<std::size_t> perm(mdp.states.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) {
        return mdp.states[a] < mdp.states[b];
    });
    std::vector<std::size_t> pos(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) pos[perm[i]] = i;

    GroundMDP sorted;
    sorted.constants = std::move(mdp.constants);
    sorted.states.reserve(mdp.states.size());
    sorted.transitions.resize(mdp.states.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        sorted.states.push_back(std::move(mdp.states[perm[i]]));
        std::vector<GroundTransition> row = std::move(mdp.transitions[perm[i]]);
        for (GroundTransition& tr : row)
            for (auto& [target, p] : tr.outcomes) target = pos[target];
        sorted.transitions[i] = std::move(row);
        sorted.index.emplace(sorted.states[i], i);
    }
    return sorted;
}

/// A finite path: n+1 states interleaved with the n actions taken.
struct Path {
    std::vector<Conjunction> states;
    std::vector<Atom> actions;
};

/// A stationary deterministic policy: the action chosen in each state.
using Policy = std::map<Conjunction, Atom>;

/// Probability of traversing `rho` under `pi`: the product of the step
/// probabilities. Raises InconsistentPath when the path leaves the state
/// space, disagrees with the policy, or takes a zero-probability step.
inline double path_probability(const GroundMDP& mdp, const Policy& pi,
                               const Path& rho) {
    if (rho.states.empty())
        throw InconsistentPath("a path contains at least one state");
    if (rho.actions.size() + 1 != rho.states.size())
        throw InconsistentPath(
            "a path alternates states and actions, got " +
            std::to_string(rho.states.size()) + " states and " +
            std::to_string(rho.actions.size()) + " actions");
    for (const Conjunction& s : rho.states) mdp.state_index(s);
    double p = 1.0;
    for (std::size_t i = 0; i < rho.actions.size(); ++i) {
        std::size_t here = mdp.state_index(rho.states[i]);
        std::size_t there = mdp.state_index(rho.states[i + 1]);
        auto chosen = pi.find(rho.states[i]);
        if (chosen == pi.end() || !(chosen->second == rho.actions[i]))
            throw InconsistentPath("path action '" + rho.actions[i].render() +
                                   "' disagrees with the policy in state '" +
                                   rho.states[i].render() + "'");
        double step = 0.0;
        for (const auto& [target, q] : mdp.trans(here, rho.actions[i]))
            if (target == there) step += q;
        if (step <= 0.0)
            throw InconsistentPath("step from '" + rho.states[i].render() +
                                   "' to '" + rho.states[i + 1].render() +
                                   "' has zero probability");
        p *= step;
    }
    return p;
}

/// Per-state outcome of explicit evaluation: whether each state satisfies
/// the formula, and the probability value of the outermost probability
/// operator (0/1 truth values when the root is purely boolean).
struct ExplicitResult {
    std::vector<char> sat;
    std::vector<double> value;
};

namespace detail {

/// Explicit recursive evaluation; truth vectors per node, Bellman backups
/// over the ground transition table for probability nodes.
inline ExplicitResult explicit_eval(const GroundMDP& mdp,
                                    const StateFormula& f, double epsilon,
                                    std::size_t max_iterations) {
    std::size_t n = mdp.states.size();
    ExplicitResult out;
    out.sat.assign(n, 0);
    out.value.assign(n, 0.0);

    auto backup = [&](const std::vector<char>& sat1,
                      const std::vector<char>& sat2,
                      const std::vector<double>& prev, bool constrained) {
        std::vector<double> next(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (constrained && sat2[i]) {
                next[i] = 1.0;  // the goal absorbs
                continue;
            }
            if (constrained && !sat1[i]) continue;
            double best = 0.0;
            for (const GroundTransition& tr : mdp.transitions[i]) {
                double q = 0.0;
                for (const auto& [target, p] : tr.outcomes)
                    q += p * prev[target];
                best = std::max(best, q);
            }
            next[i] = best;
        }
        return next;
    };

    switch (f.kind) {
    case StateFormula::Kind::True:
        out.sat.assign(n, 1);
        for (auto& v : out.value) v = 1.0;
        return out;
    case StateFormula::Kind::False:
        return out;
    case StateFormula::Kind::Lit: {
        Conjunction pat = Conjunction::make({f.atom});
        for (std::size_t i = 0; i < n; ++i)
            if (oi_subsumes(pat, mdp.states[i])) {
                out.sat[i] = 1;
                out.value[i] = 1.0;
            }
        return out;
    }
    case StateFormula::Kind::NegLit:
        for (std::size_t i = 0; i < n; ++i)
            if (negated_atom_holds(mdp.constants, mdp.states[i], f.atom)
                    .holds) {
                out.sat[i] = 1;
                out.value[i] = 1.0;
            }
        return out;
    case StateFormula::Kind::And:
    case StateFormula::Kind::Or: {
        ExplicitResult left =
            explicit_eval(mdp, *f.left, epsilon, max_iterations);
        ExplicitResult right =
            explicit_eval(mdp, *f.right, epsilon, max_iterations);
        bool conj = f.kind == StateFormula::Kind::And;
        for (std::size_t i = 0; i < n; ++i) {
            out.sat[i] = conj ? (left.sat[i] && right.sat[i])
                              : (left.sat[i] || right.sat[i]);
            out.value[i] = out.sat[i] ? 1.0 : 0.0;
        }
        return out;
    }
    case StateFormula::Kind::Prob: {
        std::vector<double> v(n, 0.0);
        if (f.path->kind == PathFormula::Kind::Next) {
            ExplicitResult sub =
                explicit_eval(mdp, *f.path->operand, epsilon, max_iterations);
            std::vector<double> base(n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                base[i] = sub.sat[i] ? 1.0 : 0.0;
            v = backup(sub.sat, sub.sat, base, false);
        } else {
            ExplicitResult lhs =
                explicit_eval(mdp, *f.path->lhs, epsilon, max_iterations);
            ExplicitResult rhs =
                explicit_eval(mdp, *f.path->rhs, epsilon, max_iterations);
            for (std::size_t i = 0; i < n; ++i)
                if (rhs.sat[i]) v[i] = 1.0;
            if (f.path->bound) {
                for (std::size_t t = 0; t < *f.path->bound; ++t)
                    v = backup(lhs.sat, rhs.sat, v, true);
            } else {
                // Iterated to the same tolerance as the lifted side; the
                // result is an approximation from below either way.
                for (std::size_t t = 0; t < max_iterations; ++t) {
                    std::vector<double> next = backup(lhs.sat, rhs.sat, v, true);
                    double delta = 0.0;
                    for (std::size_t i = 0; i < n; ++i)
                        delta = std::max(delta, std::abs(next[i] - v[i]));
                    v = std::move(next);
                    if (delta < epsilon) break;
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            out.sat[i] =
                passes_threshold(f.cmp, v[i], f.threshold, 0.0) ? 1 : 0;
            out.value[i] = v[i];
        }
        return out;
    }
    }
    return out;
}

} // namespace detail

/// Evaluates a formula on the explicit MDP: per-state truth plus the value
/// of the outermost probability operator. Step-unbounded untils iterate to
/// `epsilon` like the lifted side, capped at `max_iterations`.
inline ExplicitResult explicit_check(const GroundMDP& mdp,
                                     const StateFormula& f,
                                     double epsilon = 1e-6,
                                     std::size_t max_iterations = 1000) {
    return detail::explicit_eval(mdp, f, epsilon, max_iterations);
}

/// One ground state on which the lifted and explicit answers disagree.
struct CompareMismatch {
    std::size_t state;
    bool lifted;
    bool explicit_holds;
};

/// Outcome of checking a lifted result against explicit evaluation:
/// boolean disagreements per ground state plus the largest absolute value
/// deviation when a value function was supplied.
struct CompareReport {
    std::size_t states = 0;
    std::vector<CompareMismatch> mismatches;
    bool values_compared = false;
    double max_value_deviation = 0.0;
};

/// Checks a lifted satisfying set (and optionally its value function)
/// against explicit evaluation on every enumerated ground state. Lifted
/// membership means some entry covers the state — complement entries count
/// a state when their atom has a grounding absent from it.
inline CompareReport compare(const GroundMDP& mdp, const StateFormula& f,
                             const SatSet& sat,
                             const std::optional<ValueFunction>& values,
                             double epsilon = 1e-6,
                             std::size_t max_iterations = 1000) {
    ExplicitResult expl = explicit_check(mdp, f, epsilon, max_iterations);
    CompareReport report;
    report.states = mdp.states.size();
    for (std::size_t i = 0; i < mdp.states.size(); ++i) {
        const Conjunction& s = mdp.states[i];
        bool lifted = false;
        for (const SatEntry& e : sat.entries) {
            if (e.negated)
                lifted = detail::negated_atom_holds(mdp.constants, s,
                                                    e.state.atoms().front())
                             .holds;
            else
                lifted = oi_subsumes(e.state, s).has_value();
            if (lifted) break;
        }
        if (lifted != static_cast<bool>(expl.sat[i]))
            report.mismatches.push_back(
                CompareMismatch{i, lifted, static_cast<bool>(expl.sat[i])});
        if (values) {
            report.values_compared = true;
            double dev = std::abs(evaluate(*values, s) - expl.value[i]);
            report.max_value_deviation =
                std::max(report.max_value_deviation, dev);
        }
    }
    return report;
}

/// Renders per-state values as CSV with a header row; states are quoted.
inline std::string values_csv(const GroundMDP& mdp,
                              const std::vector<double>& values) {
    std::string out = "state,value\n";
    for (std::size_t i = 0; i < mdp.states.size(); ++i) {
        out += '"' + mdp.states[i].render() + "\",";
        out += detail::render_number(i < values.size() ? values[i] : 0.0);
        out += '\n';
    }
    return out;
}

} // namespace relmc

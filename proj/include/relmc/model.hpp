#pragma once
// Relational MDP models: the in-memory representation of a model file
// (relations, probabilistic action rules, forbidden state patterns, optional
// finite domain) together with the single-state grounding helpers used by the
// explicit-state oracle.

#include "relmc/errors.hpp"
#include "relmc/logic.hpp"
#include "relmc/mgs.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace relmc {

/// One probabilistic branch of an abstract action. When the action fires in a
/// state covered by `body`, this branch replaces the matched body atoms with
/// the `head` atoms with probability `prob`.
struct ActionRule {
    double prob = 0.0;
    Conjunction head; // postcondition
    Conjunction body; // precondition
    Atom action;

    /// Every head and action variable must be bound by the body, otherwise
    /// firing the rule could introduce unconstrained objects.
};

/// A probabilistic abstract transition: an ordered list of branches that share
/// one action atom and one precondition, whose probabilities form a
/// distribution.
struct AbstractTransition {
    Atom action_template;
    std::vector<ActionRule> rules;

    const Conjunction& body() const { return rules.front().body; }
};

/// A relational MDP: declared relation and action symbols, the abstract
/// transitions, forbidden state patterns (a state is legal iff no pattern
/// covers it), and optionally a finite constant domain and a default size
/// bound for abstract states.
struct RMDPModel {
    std::set<Pred> relations;
    std::set<Pred> actions;
    std::vector<AbstractTransition> transitions;
    std::vector<Conjunction> integrity_constraints;
    std::optional<std::vector<Term>> constants;
    std::optional<std::size_t> state_bound;
};

/// True iff the state matches none of the model's forbidden patterns.
inline bool is_legal(const RMDPModel& m, const Conjunction& s) {
    return !violates_integrity(s, m.integrity_constraints);
}

namespace detail {

/// Rejects ground states that mention constants outside the declared domain;
/// with no constants block every constant is admissible.
inline void require_in_domain(const RMDPModel& m, const Conjunction& s) {
    if (!m.constants) return;
    for (Term c : s.constants()) {
        if (std::find(m.constants->begin(), m.constants->end(), c) ==
            m.constants->end())
            throw ValidationError("state mentions constant '" + c.name() +
                                  "' outside the declared domain");
    }
}

} // namespace detail

/// All ground action instances enabled in the ground state `s`: for every
/// transition, every witness embedding of its precondition into `s` yields
/// one instance of the action atom. Enumerates all witnesses, not just the
/// first, so symmetric states report every applicable move.
inline std::set<Atom> ground_actions(const RMDPModel& m, const Conjunction& s) {
    if (!s.is_ground())
        throw NonGroundState("ground_actions requires a ground state, got '" +
                             s.render() + "'");
    detail::require_in_domain(m, s);
    std::set<Atom> out;
    for (const AbstractTransition& t : m.transitions)
        for (const Substitution& theta : oi_witnesses(t.body(), s))
            out.insert(subst_atom(theta, t.action_template));
    return out;
}

/// The outcome distribution of firing ground action `a` in ground state `s`:
/// one entry per branch, successor = (s minus matched body atoms) plus
/// instantiated head atoms; branches that produce the same successor have
/// their probabilities summed. When several embeddings instantiate the same
/// action the first one in enumeration order is used, which is unambiguous
/// whenever body atoms are consumed and reproduced consistently.
inline std::vector<std::pair<Conjunction, double>>
ground_step(const RMDPModel& m, const Conjunction& s, const Atom& a) {
    if (!s.is_ground())
        throw NonGroundState("ground_step requires a ground state, got '" +
                             s.render() + "'");
    detail::require_in_domain(m, s);
    for (const AbstractTransition& t : m.transitions) {
        if (!(t.action_template.pred == a.pred)) continue;
        for (const Substitution& theta : oi_witnesses(t.body(), s)) {
            if (!(subst_atom(theta, t.action_template) == a)) continue;
            std::map<Conjunction, double> merged;
            for (const ActionRule& r : t.rules) {
                Conjunction body_img = apply(theta, r.body);
                Conjunction head_img = apply(theta, r.head);
                std::vector<Atom> atoms;
                for (const Atom& at : s.atoms())
                    if (!body_img.contains(at)) atoms.push_back(at);
                for (const Atom& at : head_img.atoms()) atoms.push_back(at);
                Conjunction succ = Conjunction::make(std::move(atoms));
                merged[succ] += r.prob;
            }
            std::vector<std::pair<Conjunction, double>> out;
            for (auto& [succ, p] : merged) out.emplace_back(succ, p);
            return out;
        }
    }
    throw InapplicableAction("action '" + a.render() +
                             "' is not enabled in state '" + s.render() + "'");
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Serializes the model in its own file grammar; parsing the result yields a
/// structurally identical model.
inline std::string render_model(const RMDPModel& m) {
    std::string out;
    for (Pred p : m.relations)
        out += "relation " + p.name() + "/" + std::to_string(p.arity()) + ".\n";
    for (Pred p : m.actions)
        out += "action " + p.name() + "/" + std::to_string(p.arity()) + ".\n";
    for (const AbstractTransition& t : m.transitions) {
        out += "rule " + t.action_template.render() + ": pre " +
               t.body().render();
        for (const ActionRule& r : t.rules)
            out += " ; " + detail::render_number(r.prob) + " -> " +
                   r.head.render();
        out += ".\n";
    }
    for (const Conjunction& ic : m.integrity_constraints)
        out += "constraint " + ic.render() + ".\n";
    if (m.constants) {
        out += "constants ";
        for (std::size_t i = 0; i < m.constants->size(); ++i) {
            if (i) out += ", ";
            out += (*m.constants)[i].name();
        }
        out += ".\n";
    }
    if (m.state_bound)
        out += "state_bound " + std::to_string(*m.state_bound) + ".\n";
    return out;
}

} // namespace relmc

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "logic.hpp"
#include "symbols.hpp"

namespace relmc {

// ---------------------------------------------------------------------------
// Lifted value functions
// ---------------------------------------------------------------------------
//
// A value function assigns a probability to every ground state through an
// ordered rule list with first-match semantics: the state's value is the
// value of the first rule whose abstract state covers it. The trailing
// default rule 0 <- true makes the assignment total.

/// One value rule "value <- state": every ground state covered by `state`
/// (under the distinctness reading) is assigned `value` unless an earlier
/// rule matched first.
struct VRule {
    double value = 0.0;
    Conjunction state;
};

/// One state-action value rule "value: action <- state". Rules without an
/// action atom play the role of absorbing entries during maximisation and
/// never carry an action into the result.
struct QRule {
    double value = 0.0;
    std::optional<Atom> action;
    Conjunction state;
};

/// An ordered list of value rules, sorted by non-increasing value, whose
/// last rule is the default 0 <- true.
struct ValueFunction {
    std::vector<VRule> rules;

    /// The starting point of value iteration: each goal state at 1, every
    /// other state at 0.
    static ValueFunction initial(std::vector<Conjunction> goal_states) {
        std::sort(goal_states.begin(), goal_states.end(),
                  [](const Conjunction& a, const Conjunction& b) {
                      return canonical_key(a) < canonical_key(b);
                  });
        ValueFunction vf;
        for (Conjunction& g : goal_states)
            vf.rules.push_back(VRule{1.0, canonical_form(g)});
        vf.rules.push_back(VRule{0.0, Conjunction()});
        return vf;
    }
};

/// Clamps a stored value into [0, 1] for reporting.
inline double clamp_probability(double v) {
    return std::min(1.0, std::max(0.0, v));
}

/// Value of a ground state: the value of the first rule whose state covers
/// it. Total thanks to the default rule; an ill-formed function without one
/// yields 0 for unmatched states.
inline double evaluate(const ValueFunction& vf, const Conjunction& s) {
    for (const VRule& r : vf.rules)
        if (oi_subsumes(r.state, s)) return clamp_probability(r.value);
    return 0.0;
}

/// Convergence measure between two iterates. Defined only when both carry
/// the same abstract states (as canonical multisets): then it is the
/// largest absolute value change over matching states. Any change in the
/// state sets themselves means the iteration is still reshaping the
/// abstraction, reported as infinity.
inline double distance(const ValueFunction& a, const ValueFunction& b) {
    std::map<std::string, std::vector<double>> va, vb;
    for (const VRule& r : a.rules) va[canonical_key(r.state)].push_back(r.value);
    for (const VRule& r : b.rules) vb[canonical_key(r.state)].push_back(r.value);
    if (va.size() != vb.size()) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (auto& [key, xs] : va) {
        auto it = vb.find(key);
        if (it == vb.end() || it->second.size() != xs.size())
            return std::numeric_limits<double>::infinity();
        std::sort(xs.begin(), xs.end());
        std::sort(it->second.begin(), it->second.end());
        for (std::size_t i = 0; i < xs.size(); ++i)
            worst = std::max(worst, std::fabs(xs[i] - it->second[i]));
    }
    return worst;
}

/// One line per rule, "value <- state", in stored order.
inline std::string render_value_function(const ValueFunction& vf) {
    std::string out;
    for (const VRule& r : vf.rules) {
        if (!out.empty()) out += '\n';
        out += detail::render_number(clamp_probability(r.value));
        out += " <- ";
        out += r.state.render();
    }
    return out;
}

namespace detail {

/// Escapes a string for embedding in a JSON literal. Rule renderings are
/// plain ASCII, so this only guards the structural characters.
inline std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char ch : s) {
        switch (ch) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += ch; break;
        }
    }
    return out;
}

} // namespace detail

/// JSON array form, one object per rule in stored order:
/// [{"value":0.9,"state":"cl(a),cl(b),on(a,Z)"},...]
inline std::string value_function_json(const ValueFunction& vf) {
    std::string out = "[";
    bool first = true;
    for (const VRule& r : vf.rules) {
        if (!first) out += ',';
        first = false;
        out += "{\"value\":";
        out += detail::render_number(clamp_probability(r.value));
        out += ",\"state\":\"";
        out += detail::json_escape(r.state.render());
        out += "\"}";
    }
    out += ']';
    return out;
}

} // namespace relmc

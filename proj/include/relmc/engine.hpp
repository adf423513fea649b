#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "logic.hpp"
#include "mgs.hpp"
#include "model.hpp"
#include "symbols.hpp"
#include "values.hpp"

namespace relmc {

// ---------------------------------------------------------------------------
// Relational Bellman operator
// ---------------------------------------------------------------------------
//
// One value-iteration step over abstract states: regress every value rule
// backward through every probabilistic branch of every transition, combine
// the per-branch partial values into state-action rules, and maximise over
// actions into the next value function. All reasoning happens on abstract
// states under the distinctness reading; ground states are never touched.

/// The one-step path obligation a Bellman update realises. `Until` restricts
/// every pre-state to the given constraint states and treats the goal states
/// as absorbing; `Next` imposes no constraint and nothing is absorbing (the
/// goal must be hit by exactly one transition).
struct StepFormula {
    enum class Kind { Next, Until };
    Kind kind = Kind::Next;
    std::vector<Conjunction> constraint_states; // Until only: allowed waypoints
    std::vector<Conjunction> goal_states;       // states to be reached

    static StepFormula next(std::vector<Conjunction> goals) {
        return StepFormula{Kind::Next, {}, std::move(goals)};
    }
    static StepFormula until(std::vector<Conjunction> lhs,
                             std::vector<Conjunction> goals) {
        return StepFormula{Kind::Until, std::move(lhs), std::move(goals)};
    }
};

namespace detail {

/// Substitution application that rejects images where one atom mentions the
/// same term twice (such an instance breaks the distinctness reading).
inline std::optional<Atom> subst_atom_checked(const Substitution& s,
                                              const Atom& a) {
    Atom img = subst_atom(s, a);
    for (std::size_t i = 0; i < img.args.size(); ++i)
        for (std::size_t j = i + 1; j < img.args.size(); ++j)
            if (img.args[i] == img.args[j]) return std::nullopt;
    return img;
}

/// Name-independent key of a state together with an optional action atom.
/// Action and state are canonicalised jointly, so shared variables keep
/// their relationship; the state's own key is appended because the joint
/// normalisation can absorb a disequality whose constant occurs only in the
/// action atom.
inline std::string joint_key(const std::optional<Atom>& action,
                             const Conjunction& state) {
    if (!action) return "#" + canonical_key(state);
    std::vector<Atom> atoms = state.atoms();
    atoms.push_back(*action);
    Conjunction joint = Conjunction::make(std::move(atoms), state.diseqs());
    return canonical_key(joint) + "|" + canonical_key(state);
}

/// A candidate pre-state paired with the action instance that reaches the
/// regressed target from it.
struct ActionState {
    Atom action;
    Conjunction state;
};

/// Enumerates every way of matching a subset of target atoms against a
/// subset of head atoms, one-to-one with equal predicates, merging argument
/// terms positionwise. Merges respect distinctness on each side: no two
/// target terms and no two rule terms may fall together, and a constant
/// occurring on a side blocks that side's variables from mapping onto it.
/// Emits (matched flags over target atoms, most general unifier).
template <typename Emit>
void for_each_target_matching(const std::vector<Atom>& target_atoms,
                              const std::vector<Atom>& head_atoms,
                              const std::set<Term>& target_side,
                              const std::set<Term>& rule_side,
                              Emit&& emit) {
    auto side_mask = [&](Term t) {
        return (target_side.count(t) ? 1 : 0) | (rule_side.count(t) ? 2 : 0);
    };
    std::vector<bool> matched(target_atoms.size(), false);
    std::vector<bool> head_used(head_atoms.size(), false);
    auto rec = [&](auto&& self, std::size_t ti, MergeClasses classes) -> void {
        if (ti == target_atoms.size()) {
            emit(matched, classes.to_substitution());
            return;
        }
        self(self, ti + 1, classes); // leave this target atom unmatched
        for (std::size_t hi = 0; hi < head_atoms.size(); ++hi) {
            if (head_used[hi]) continue;
            if (!(target_atoms[ti].pred == head_atoms[hi].pred)) continue;
            MergeClasses merged = classes;
            bool ok = true;
            for (std::size_t k = 0; k < target_atoms[ti].args.size() && ok; ++k) {
                Term x = target_atoms[ti].args[k];
                Term y = head_atoms[hi].args[k];
                merged.add(x, side_mask(x));
                merged.add(y, side_mask(y));
                ok = merged.merge(x, y);
            }
            if (!ok) continue;
            matched[ti] = true;
            head_used[hi] = true;
            self(self, ti + 1, std::move(merged));
            matched[ti] = false;
            head_used[hi] = false;
        }
    };
    rec(rec, 0, MergeClasses{});
}

/// Backward application of one probabilistic branch to one target state,
/// keeping the action instance of every candidate. Pipeline per candidate:
/// subset matching against the head, completion merges between surviving
/// target terms and body terms (a survivor may name the same object as a
/// rule term, and distinctness makes each identification a separate state),
/// rejection of candidates where a survivor coincides with a consumed or
/// added atom, disequalities against head constants the candidate does not
/// mention, the forbidden-pattern filter, specialisation onto each
/// constraint state, and the term-count bound.
inline std::vector<ActionState>
regress_rule(const ActionRule& rule,
             const std::optional<std::vector<Conjunction>>& constraint_states,
             const Conjunction& target,
             std::optional<std::size_t> bound,
             const std::vector<Conjunction>& integrity) {
    // Work on a variant of the rule sharing no variable with the target.
    std::set<Term> avoid;
    for (Term t : target.variables()) avoid.insert(t);
    Substitution ren;
    auto freshen = [&](Term v) {
        if (v.is_variable() && avoid.count(v) && !ren.count(v))
            ren.emplace(v, Term::fresh_variable());
    };
    for (Term t : rule.body.variables()) freshen(t);
    for (Term t : rule.head.variables()) freshen(t);
    for (Term t : rule.action.args) freshen(t);
    const Conjunction body =
        ren.empty() ? rule.body : *substituted(rule.body, ren);
    const Conjunction head =
        ren.empty() ? rule.head : *substituted(rule.head, ren);
    const Atom action = subst_atom(ren, rule.action);

    std::vector<Term> target_terms = target.terms();
    std::set<Term> target_side(target_terms.begin(), target_terms.end());
    std::set<Term> rule_side;
    for (Term t : body.terms()) rule_side.insert(t);
    for (Term t : head.terms()) rule_side.insert(t);
    for (Term t : action.args) rule_side.insert(t);

    // Disequalities carried into every candidate: the target's own and the
    // body's, instantiated alongside the atoms.
    std::vector<Conjunction::Diseq> carried;
    for (auto d : target.diseqs()) carried.push_back(d);
    for (auto d : body.diseqs()) carried.push_back(d);

    std::map<std::string, ActionState> out;

    auto consider = [&](const Atom& act, Conjunction cand) {
        if (violates_integrity(cand, integrity)) return;
        if (bound && cand.term_count() > *bound) return;
        if (!constraint_states) {
            std::string key = joint_key(act, cand);
            out.emplace(std::move(key), ActionState{act, std::move(cand)});
            return;
        }
        // Specialise the candidate onto each constraint state; keep the most
        // general specialisations of each pairing.
        for (const Conjunction& cs : *constraint_states) {
            std::set<Term> cand_vars;
            for (Term t : cand.variables()) cand_vars.insert(t);
            for (Term t : act.args)
                if (t.is_variable()) cand_vars.insert(t);
            Conjunction cs_apart = standardize_apart(cs, cand_vars);
            std::map<std::string, ActionState> merged;
            mgs_search(cand, cs_apart, integrity, {}, bound,
                       [&](const Substitution& sigma, Conjunction spec) {
                Atom act_spec = subst_atom(sigma, act);
                std::string key = joint_key(act_spec, spec);
                merged.emplace(std::move(key),
                               ActionState{std::move(act_spec), std::move(spec)});
            });
            for (const auto& [key, entry] : merged) {
                bool dominated = false;
                for (const auto& [okey, other] : merged) {
                    if (okey == key) continue;
                    if (oi_subsumes(other.state, entry.state) &&
                        !oi_subsumes(entry.state, other.state)) {
                        dominated = true;
                        break;
                    }
                }
                if (dominated) continue;
                if (bound && entry.state.term_count() > *bound) continue;
                out.emplace(key, entry);
            }
        }
    };

    for_each_target_matching(
        target.atoms(), head.atoms(), target_side, rule_side,
        [&](const std::vector<bool>& matched, const Substitution& theta) {
        // Base images under the matching unifier.
        std::vector<Atom> surv_theta;
        for (std::size_t i = 0; i < target.atoms().size(); ++i) {
            if (matched[i]) continue;
            auto img = subst_atom_checked(theta, target.atoms()[i]);
            if (!img) return;
            surv_theta.push_back(*img);
        }
        std::vector<Atom> body_theta, head_theta;
        for (const Atom& a : body.atoms()) {
            auto img = subst_atom_checked(theta, a);
            if (!img) return;
            body_theta.push_back(*img);
        }
        for (const Atom& a : head.atoms()) {
            auto img = subst_atom_checked(theta, a);
            if (!img) return;
            head_theta.push_back(*img);
        }
        std::vector<Conjunction::Diseq> carried_theta;
        for (auto [l, r] : carried) {
            Term li = subst_term(theta, l);
            Term ri = subst_term(theta, r);
            if (li == ri) return; // matching contradicts a disequality
            carried_theta.emplace_back(li, ri);
        }
        Atom act_theta = subst_atom(theta, action);

        // Completion merges: a surviving target term may coincide with a
        // body term in some covered ground states; distinctness turns each
        // choice into a candidate of its own.
        std::set<Term> surv_terms_set, body_terms_set;
        for (const Atom& a : surv_theta)
            for (Term t : a.args) surv_terms_set.insert(t);
        for (const Atom& a : body_theta)
            for (Term t : a.args) body_terms_set.insert(t);
        std::vector<Term> surv_terms(surv_terms_set.begin(), surv_terms_set.end());
        std::vector<Term> body_terms(body_terms_set.begin(), body_terms_set.end());

        enumerate_matchings(surv_terms, body_terms, {},
                            [&](const Substitution& mu) {
            std::vector<Atom> surv, body_img, head_img;
            for (const Atom& a : surv_theta) {
                auto img = subst_atom_checked(mu, a);
                if (!img) return true;
                surv.push_back(*img);
            }
            for (const Atom& a : body_theta) {
                auto img = subst_atom_checked(mu, a);
                if (!img) return true;
                body_img.push_back(*img);
            }
            for (const Atom& a : head_theta) {
                auto img = subst_atom_checked(mu, a);
                if (!img) return true;
                head_img.push_back(*img);
            }
            std::vector<Conjunction::Diseq> diseqs;
            for (auto [l, r] : carried_theta) {
                Term li = subst_term(mu, l);
                Term ri = subst_term(mu, r);
                if (li == ri) return true;
                diseqs.emplace_back(li, ri);
            }
            Atom act = subst_atom(mu, act_theta);

            // A survivor identical to a consumed atom would not persist, and
            // one identical to an added atom is already covered by the
            // larger matching; both candidates are dropped.
            std::set<Atom> rule_atoms(body_img.begin(), body_img.end());
            rule_atoms.insert(head_img.begin(), head_img.end());
            for (const Atom& l : surv)
                if (rule_atoms.count(l)) return true;

            // Distinctness separates the candidate's own terms, so a
            // survivor can only collide with a rule atom through head
            // constants the candidate does not mention; forbid exactly
            // those collisions.
            std::set<Term> cand_terms;
            for (const Atom& a : surv)
                for (Term t : a.args) cand_terms.insert(t);
            for (const Atom& a : body_img)
                for (Term t : a.args) cand_terms.insert(t);
            for (const Atom& l : surv) {
                for (const Atom& o : rule_atoms) {
                    if (!(l.pred == o.pred)) continue;
                    bool collapsible = true;
                    std::vector<Conjunction::Diseq> pairs;
                    for (std::size_t k = 0; k < l.args.size(); ++k) {
                        if (l.args[k] == o.args[k]) continue;
                        if (l.args[k].is_variable() && o.args[k].is_constant() &&
                            !cand_terms.count(o.args[k])) {
                            pairs.emplace_back(l.args[k], o.args[k]);
                        } else {
                            collapsible = false;
                            break;
                        }
                    }
                    if (collapsible)
                        diseqs.insert(diseqs.end(), pairs.begin(), pairs.end());
                }
            }

            std::vector<Atom> atoms = surv;
            atoms.insert(atoms.end(), body_img.begin(), body_img.end());
            consider(act, Conjunction::make(std::move(atoms), std::move(diseqs)));
            return true;
        });
    });

    std::vector<ActionState> result;
    result.reserve(out.size());
    for (auto& [key, entry] : out) result.push_back(std::move(entry));
    return result;
}

} // namespace detail

/// All abstract states from which one application of `rule` reaches the
/// target. When constraint states are given, every pre-state is specialised
/// to lie inside one of them; candidates exceeding the term bound or
/// embedding a forbidden pattern are dropped. Returned in a deterministic
/// name-independent order, deduplicated.
inline std::vector<Conjunction>
regression(const ActionRule& rule,
           const std::optional<std::vector<Conjunction>>& constraint_states,
           const Conjunction& target,
           std::optional<std::size_t> bound = std::nullopt,
           const std::vector<Conjunction>& integrity = {}) {
    std::map<std::string, Conjunction> uniq;
    for (auto& entry :
         detail::regress_rule(rule, constraint_states, target, bound, integrity)) {
        std::string key = canonical_key(entry.state);
        uniq.emplace(std::move(key), std::move(entry.state));
    }
    std::vector<Conjunction> out;
    out.reserve(uniq.size());
    for (auto& [key, state] : uniq) out.push_back(std::move(state));
    return out;
}

namespace detail {

/// A per-branch partial value: this branch contributes `q` to the given
/// action instance when taken from the given state.
struct Partial {
    double q = 0.0;
    Atom action;
    Conjunction state;
};

/// Drops every partial that another partial covers at no smaller value.
/// Coverage embeds the action atom alongside the state, so the covering
/// partial pins the same action arguments; it then reproduces, at least as
/// valuably, every combination the dropped partial could have joined, and
/// the maximisation over the finished rules never misses the difference.
/// Equal shapes keep only their best value.
inline std::vector<Partial> prune_partials(std::vector<Partial> ps) {
    if (ps.size() <= 1) return ps;
    struct Row {
        Partial p;
        Conjunction joint;
        std::string key;
    };
    std::vector<Row> rows;
    rows.reserve(ps.size());
    for (Partial& p : ps) {
        std::vector<Atom> atoms = p.state.atoms();
        atoms.push_back(p.action);
        Conjunction joint =
            Conjunction::make(std::move(atoms), p.state.diseqs());
        std::string key = canonical_key(joint);
        rows.push_back(Row{std::move(p), std::move(joint), std::move(key)});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
        if (x.p.q != y.p.q) return x.p.q > y.p.q;
        return x.key < y.key;
    });
    std::vector<Partial> kept;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < rows.size() && !dominated; ++j) {
            if (j == i || rows[j].p.q < rows[i].p.q) continue;
            if (rows[j].joint.atoms().size() > rows[i].joint.atoms().size())
                continue;
            if (rows[j].key == rows[i].key) {
                // Same shape: the best value wins, ties keep the first.
                dominated = rows[j].p.q > rows[i].p.q || j < i;
                continue;
            }
            if (rows[j].p.q == rows[i].p.q) {
                dominated = oi_subsumes(rows[j].joint, rows[i].joint) &&
                            !oi_subsumes(rows[i].joint, rows[j].joint);
            } else {
                dominated = oi_subsumes(rows[j].joint, rows[i].joint).has_value();
            }
        }
        if (!dominated) kept.push_back(std::move(rows[i].p));
    }
    return kept;
}

/// Combines the partials of two branch groups pairwise: the action atoms
/// are forced to coincide argument by argument and the states are
/// specialised onto each other; every consistent specialisation yields one
/// combined partial whose value is the sum. Pairs that cannot be made to
/// agree contribute nothing, and combined states past the term bound are
/// dropped at the source. The merges of a pair depend only on its shape,
/// the forbidden patterns, and the bound, and converging value iterations
/// re-pair the same shapes over and over, so results are memoised
/// process-wide in canonical form.
inline std::vector<Partial> combine_partials(
    const std::vector<Partial>& first, const std::vector<Partial>& second,
    const std::vector<Conjunction>& integrity,
    std::optional<std::size_t> bound) {
    std::string context = bound ? std::to_string(*bound) : "-";
    for (const Conjunction& pattern : integrity)
        context += ";" + canonical_key(pattern);

    static std::mutex cache_mutex;
    static std::map<std::string, std::vector<std::pair<Atom, Conjunction>>>
        cache;

    // Renames an action/state pair as one shape so equal shapes share one
    // cache entry. Fails when the action's symbol is not recoverable from
    // the joint form, which only a state using the action's own symbol
    // could cause.
    auto canonical_pair =
        [](const Atom& action,
           const Conjunction& state) -> std::optional<std::pair<Atom, Conjunction>> {
        std::vector<Atom> atoms = state.atoms();
        atoms.push_back(action);
        Conjunction joint = canonical_form(
            Conjunction::make(std::move(atoms), state.diseqs()));
        std::optional<Atom> act;
        std::vector<Atom> rest;
        for (const Atom& a : joint.atoms()) {
            if (a.pred == action.pred) {
                if (act) return std::nullopt;
                act = a;
            } else {
                rest.push_back(a);
            }
        }
        if (!act) return std::nullopt;
        return std::make_pair(*act,
                              Conjunction::make(std::move(rest), joint.diseqs()));
    };
    // Each partial's shape key prices one canonicalisation; computing them
    // once per side keeps the pair loop from re-deriving them per pairing.
    std::vector<std::string> first_keys, second_keys;
    first_keys.reserve(first.size());
    for (const Partial& p : first)
        first_keys.push_back(joint_key(p.action, p.state));
    second_keys.reserve(second.size());
    for (const Partial& p : second)
        second_keys.push_back(joint_key(p.action, p.state));

    std::map<std::string, Partial> out;
    auto take = [&](double q, const Atom& action, const Conjunction& state) {
        Partial p{q, action, state};
        std::string key =
            joint_key(p.action, p.state) + "#" + render_number(p.q);
        out.emplace(std::move(key), std::move(p));
    };
    for (std::size_t xi = 0; xi < first.size(); ++xi) {
        const Partial& x = first[xi];
        for (std::size_t yi = 0; yi < second.size(); ++yi) {
            const Partial& y = second[yi];
            if (!(x.action.pred == y.action.pred)) continue;
            std::string pair_key =
                first_keys[xi] + "&" + second_keys[yi] + "&" + context;
            {
                std::lock_guard<std::mutex> lock(cache_mutex);
                auto it = cache.find(pair_key);
                if (it != cache.end()) {
                    for (const auto& [act, st] : it->second)
                        take(x.q + y.q, act, st);
                    continue;
                }
            }

            std::set<Term> avoid;
            for (Term t : x.state.variables()) avoid.insert(t);
            for (Term t : x.action.args)
                if (t.is_variable()) avoid.insert(t);
            Substitution ren;
            auto freshen = [&](Term v) {
                if (v.is_variable() && avoid.count(v) && !ren.count(v))
                    ren.emplace(v, Term::fresh_variable());
            };
            for (Term t : y.state.variables()) freshen(t);
            for (Term t : y.action.args) freshen(t);
            Conjunction ys =
                ren.empty() ? y.state : *substituted(y.state, ren);
            Atom ya = subst_atom(ren, y.action);

            std::vector<std::pair<Term, Term>> forced;
            for (std::size_t k = 0; k < x.action.args.size(); ++k)
                forced.emplace_back(x.action.args[k], ya.args[k]);
            std::vector<std::pair<Atom, Conjunction>> results;
            bool cacheable = true;
            mgs_search(x.state, ys, integrity, forced, bound,
                       [&](const Substitution& sigma, Conjunction merged) {
                Atom act = subst_atom(sigma, x.action);
                if (cacheable) {
                    if (auto cp = canonical_pair(act, merged)) {
                        results.push_back(std::move(*cp));
                        return;
                    }
                    // Fall back to the raw forms for the whole pair.
                    cacheable = false;
                    for (auto& [cact, cst] : results) take(x.q + y.q, cact, cst);
                    results.clear();
                }
                results.emplace_back(std::move(act), std::move(merged));
            });
            for (const auto& [act, st] : results) take(x.q + y.q, act, st);
            if (cacheable) {
                std::lock_guard<std::mutex> lock(cache_mutex);
                cache.emplace(std::move(pair_key), std::move(results));
            }
        }
    }
    std::vector<Partial> result;
    result.reserve(out.size());
    for (auto& [key, p] : out) result.push_back(std::move(p));
    return result;
}

} // namespace detail

/// State-action value rules after one backward step: for every transition,
/// every branch regresses every value rule (the trailing default included —
/// its zero partials let a branch pair with outcomes that miss every
/// target), the branch partials are combined pairwise in branch order, and
/// the per-transition rules are sorted by decreasing value. The output
/// concatenates the transitions in model order.
inline std::vector<QRule>
qrules(const ValueFunction& vf,
       const std::optional<std::vector<Conjunction>>& constraint_states,
       const RMDPModel& model, std::optional<std::size_t> bound = std::nullopt,
       unsigned jobs = 1) {
    // One regression task per (transition, branch, value rule); results are
    // collected into fixed slots so any execution order yields one output.
    struct Task {
        const ActionRule* branch;
        const VRule* vrule;
    };
    std::vector<Task> tasks;
    std::vector<std::pair<std::size_t, std::size_t>> spans; // per transition×branch
    for (const AbstractTransition& tr : model.transitions) {
        for (const ActionRule& branch : tr.rules) {
            std::size_t begin = tasks.size();
            for (const VRule& v : vf.rules) tasks.push_back(Task{&branch, &v});
            spans.emplace_back(begin, tasks.size());
        }
    }
    std::vector<std::vector<detail::ActionState>> results(tasks.size());
    auto run_task = [&](std::size_t i) {
        results[i] = detail::regress_rule(*tasks[i].branch, constraint_states,
                                          tasks[i].vrule->state, bound,
                                          model.integrity_constraints);
    };
    if (jobs <= 1 || tasks.size() <= 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        auto worker = [&]() {
            for (std::size_t i = next++; i < tasks.size(); i = next++) {
                try {
                    run_task(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        };
        std::vector<std::thread> pool;
        std::size_t n = std::min<std::size_t>(jobs, tasks.size());
        pool.reserve(n);
        for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    std::vector<QRule> out;
    std::size_t span_idx = 0;
    for (const AbstractTransition& tr : model.transitions) {
        // Partial rules per branch: regression states weighted by branch
        // probability times the regressed rule's value.
        std::vector<std::vector<detail::Partial>> branch_partials;
        for (const ActionRule& branch : tr.rules) {
            auto [begin, end] = spans[span_idx++];
            std::vector<detail::Partial> partials;
            for (std::size_t i = begin; i < end; ++i) {
                double q = branch.prob * tasks[i].vrule->value;
                for (const detail::ActionState& entry : results[i])
                    partials.push_back(
                        detail::Partial{q, entry.action, entry.state});
            }
            // Dominated partials add nothing the maximisation could keep;
            // dropping them before combining cuts the pairing square.
            branch_partials.push_back(
                detail::prune_partials(std::move(partials)));
        }
        std::vector<detail::Partial> acc = std::move(branch_partials.front());
        for (std::size_t b = 1; b < branch_partials.size(); ++b)
            acc = detail::combine_partials(acc, branch_partials[b],
                                           model.integrity_constraints, bound);
        // Deduplicate exact value/action/state repeats, then order by
        // decreasing value with a name-independent tie-break.
        std::map<std::string, detail::Partial> uniq;
        for (auto& p : acc) {
            std::string key = detail::joint_key(p.action, p.state) + "#" +
                              detail::render_number(p.q);
            uniq.emplace(std::move(key), std::move(p));
        }
        struct Row {
            detail::Partial p;
            std::string key;
        };
        std::vector<Row> rows;
        rows.reserve(uniq.size());
        for (auto& [key, p] : uniq)
            rows.push_back(Row{p, detail::joint_key(p.action, p.state)});
        std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
            if (a.p.q != b.p.q) return a.p.q > b.p.q;
            return a.key < b.key;
        });
        for (Row& r : rows)
            out.push_back(QRule{r.p.q, std::move(r.p.action),
                                std::move(r.p.state)});
    }
    return out;
}

/// Maximisation over actions: sorts the state-action rules by decreasing
/// value, prepends an absorbing 1-rule per goal state when the step is an
/// until step (goal states trap the run, so anything they cover is worth
/// 1), and keeps a rule only while no equally-valued rule still pending
/// covers its state; each kept rule deletes every pending rule it covers.
/// Action atoms are dropped and the default closes the list.
inline ValueFunction vrules(const std::vector<QRule>& q,
                            const StepFormula& psi) {
    struct Row {
        QRule r;
        std::string skey;
        std::string akey;
    };
    std::vector<Row> rows;
    rows.reserve(q.size());
    for (const QRule& r : q)
        rows.push_back(
            Row{r, canonical_key(r.state), r.action ? r.action->render() : ""});
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.r.value != b.r.value) return a.r.value > b.r.value;
        if (a.skey != b.skey) return a.skey < b.skey;
        return a.akey < b.akey;
    });
    if (psi.kind == StepFormula::Kind::Until) {
        std::vector<Row> absorbing;
        for (const Conjunction& goal : psi.goal_states)
            absorbing.push_back(Row{QRule{1.0, std::nullopt, goal},
                                    canonical_key(goal), ""});
        std::sort(absorbing.begin(), absorbing.end(),
                  [](const Row& a, const Row& b) { return a.skey < b.skey; });
        rows.insert(rows.begin(), absorbing.begin(), absorbing.end());
    }

    std::vector<bool> alive(rows.size(), true);
    ValueFunction vf;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!alive[i]) continue;
        bool redundant = false;
        for (std::size_t j = i + 1; j < rows.size() && !redundant; ++j) {
            if (!alive[j]) continue;
            if (rows[j].r.value != rows[i].r.value) break; // sorted by value
            if (oi_subsumes(rows[j].r.state, rows[i].r.state)) redundant = true;
        }
        if (redundant) {
            alive[i] = false;
            continue;
        }
        for (std::size_t j = i + 1; j < rows.size(); ++j) {
            if (!alive[j]) continue;
            if (oi_subsumes(rows[i].r.state, rows[j].r.state)) alive[j] = false;
        }
        vf.rules.push_back(VRule{clamp_probability(rows[i].r.value),
                                 canonical_form(rows[i].r.state)});
    }
    vf.rules.push_back(VRule{0.0, Conjunction()});
    return vf;
}

/// One application of the relational Bellman operator: state-action rules
/// from the current value function, maximised into the next one.
inline ValueFunction one_iteration(const ValueFunction& vf,
                                   const StepFormula& psi,
                                   const RMDPModel& model,
                                   std::optional<std::size_t> bound = std::nullopt,
                                   unsigned jobs = 1) {
    std::optional<std::vector<Conjunction>> cs;
    if (psi.kind == StepFormula::Kind::Until) cs = psi.constraint_states;
    return vrules(qrules(vf, cs, model, bound, jobs), psi);
}

} // namespace relmc

// Backward-reasoning engine: regression golden sets, state-action rule
// construction, maximisation, and equivalence with explicit ground value
// iteration on small block worlds.

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "relmc/engine.hpp"
#include "relmc/model_parser.hpp"
#include "relmc/values.hpp"

namespace relmc {
namespace {

Conjunction C(const std::string& text) { return parse_conjunction(text); }

RMDPModel blocks_model() {
    return parse_model(R"(
        relation on/2.
        relation cl/1.
        action move/3.
        rule move(A,B,C): pre cl(A), cl(B), on(A,C)
                          ; 0.9 -> cl(A), cl(C), on(A,B)
                          ; 0.1 -> cl(A), cl(B), on(A,C).
        constraint on(X,Y), on(X,Z).
        constraint on(X,Z), on(Y,Z).
        constraint cl(X), on(Y,X).
    )");
}

std::set<std::string> state_keys(const std::vector<Conjunction>& states) {
    std::set<std::string> out;
    for (const Conjunction& s : states) out.insert(canonical_key(s));
    return out;
}

std::set<std::string> expected_keys(const std::vector<std::string>& texts) {
    std::set<std::string> out;
    for (const std::string& t : texts) out.insert(canonical_key(C(t)));
    return out;
}

// The four purely abstract pre-states of on(a,b) under the move success
// branch: the distinguished move onto b, and the three shapes of an
// unrelated move that leaves an existing on(a,b) untouched.
const std::vector<std::string> kNextPreStates = {
    "cl(a), cl(b), on(a,Z)",
    "cl(X), cl(a), on(X,Z), on(a,b)",
    "cl(X), cl(Y), on(X,a), on(a,b)",
    "cl(X), cl(Y), on(X,Z), on(a,b)",
};

TEST(Regression, SuccessBranchPreStatesOfGoal) {
    RMDPModel m = blocks_model();
    const ActionRule& success = m.transitions[0].rules[0];
    auto pre = regression(success, std::nullopt, C("on(a,b)"), std::nullopt,
                          m.integrity_constraints);
    EXPECT_EQ(state_keys(pre), expected_keys(kNextPreStates));
}

TEST(Regression, TermBoundFiltersLargeCandidates) {
    RMDPModel m = blocks_model();
    const ActionRule& success = m.transitions[0].rules[0];
    auto pre = regression(success, std::nullopt, C("on(a,b)"), 3,
                          m.integrity_constraints);
    EXPECT_EQ(state_keys(pre), expected_keys({"cl(a), cl(b), on(a,Z)"}));
}

// Constrained regression specialises every pre-state onto the constraint
// state on(c,d). Each of the four shapes above splits into its disjoint
// union with on(c,d) plus every consistent identification of one of its
// variables with c or d that survives the forbidden patterns, including the
// identifications that collapse the moved-block atom into on(c,d) itself.
// The result is the complete set of most general pre-states that lie inside
// the constraint; identifications that would place two distinct terms on
// one object, or that duplicate a consumed atom, are excluded by the
// distinctness reading, and a specialisation covered by a strictly more
// general sibling (e.g. cl(X),cl(c),on(X,Z),on(a,b),on(c,d), whose ground
// instances all embed cl(c),cl(Y),on(a,b),on(c,d)) is pruned.
const std::vector<std::string> kConstrainedPreStates = {
    // from cl(a), cl(b), on(a,Z)
    "cl(a), cl(b), on(a,Z), on(c,d)",
    "cl(a), cl(b), on(a,c), on(c,d)",
    // from cl(X), cl(a), on(X,Z), on(a,b)
    "cl(X), cl(a), on(X,Z), on(a,b), on(c,d)",
    "cl(X), cl(a), on(X,c), on(a,b), on(c,d)",
    "cl(a), cl(c), on(a,b), on(c,d)",
    // from cl(X), cl(Y), on(X,a), on(a,b)
    "cl(X), cl(Y), on(X,a), on(a,b), on(c,d)",
    "cl(X), cl(c), on(X,a), on(a,b), on(c,d)",
    // from cl(X), cl(Y), on(X,Z), on(a,b)
    "cl(X), cl(Y), on(X,Z), on(a,b), on(c,d)",
    "cl(X), cl(Y), on(X,c), on(a,b), on(c,d)",
    "cl(c), cl(Y), on(a,b), on(c,d)",
};

TEST(Regression, ConstraintStateSpecialisesPreStates) {
    RMDPModel m = blocks_model();
    const ActionRule& success = m.transitions[0].rules[0];
    std::vector<Conjunction> cs = {C("on(c,d)")};
    auto pre = regression(success, cs, C("on(a,b)"), std::nullopt,
                          m.integrity_constraints);
    EXPECT_EQ(state_keys(pre), expected_keys(kConstrainedPreStates));
}

// ---------------------------------------------------------------------------
// State-action rules
// ---------------------------------------------------------------------------

std::multiset<std::string> qrule_keys(const std::vector<QRule>& rules) {
    std::multiset<std::string> out;
    for (const QRule& r : rules)
        out.insert(detail::render_number(r.value) + "@" +
                   detail::joint_key(r.action, r.state));
    return out;
}

struct ExpectedQ {
    double value;
    std::string action;
    std::string state;
};

std::multiset<std::string> expected_q_keys(const std::vector<ExpectedQ>& rules) {
    std::multiset<std::string> out;
    for (const ExpectedQ& e : rules) {
        // Parsing action and state separately keeps shared variable names
        // shared: terms are interned by name.
        Atom act = C(e.action).atoms().front();
        out.insert(detail::render_number(e.value) + "@" +
                   detail::joint_key(act, C(e.state)));
    }
    return out;
}

TEST(QRules, OneStepGoalValues) {
    RMDPModel m = blocks_model();
    ValueFunction v0 = ValueFunction::initial({C("on(a,b)")});
    auto q = qrules(v0, std::nullopt, m);

    // Both branches hit the goal: certainty. Success alone: 0.9. Failure
    // alone (a move that would destroy on(a,b) and misfires): 0.1. No
    // branch: 0.
    std::vector<ExpectedQ> expected = {
        {1.0, "move(X,a,Z)", "cl(X), cl(a), on(X,Z), on(a,b)"},
        {1.0, "move(X,Y,a)", "cl(X), cl(Y), on(X,a), on(a,b)"},
        {1.0, "move(X,Y,Z)", "cl(X), cl(Y), on(X,Z), on(a,b)"},
        {0.9, "move(a,b,Z)", "cl(a), cl(b), on(a,Z)"},
        {0.9, "move(X,a,Z)", "cl(X), cl(a), on(X,Z), on(a,b)"},
        {0.9, "move(X,Y,a)", "cl(X), cl(Y), on(X,a), on(a,b)"},
        {0.9, "move(X,Y,Z)", "cl(X), cl(Y), on(X,Z), on(a,b)"},
        {0.1, "move(a,Y,b)", "cl(a), cl(Y), on(a,b)"},
        {0.1, "move(X,a,Z)", "cl(X), cl(a), on(X,Z), on(a,b)"},
        {0.1, "move(X,Y,a)", "cl(X), cl(Y), on(X,a), on(a,b)"},
        {0.1, "move(X,Y,Z)", "cl(X), cl(Y), on(X,Z), on(a,b)"},
        {0.0, "move(X,Y,Z)", "cl(X), cl(Y), on(X,Z)"},
    };
    EXPECT_EQ(qrule_keys(q), expected_q_keys(expected));
}

TEST(QRules, ValuesStayWithinProbabilityRange) {
    RMDPModel m = blocks_model();
    ValueFunction v0 = ValueFunction::initial({C("on(a,b)")});
    ValueFunction v1 =
        one_iteration(v0, StepFormula::next({C("on(a,b)")}), m);
    for (const QRule& r : qrules(v1, std::nullopt, m)) {
        EXPECT_GE(r.value, 0.0);
        EXPECT_LE(r.value, 1.0 + 1e-9);
    }
}

// ---------------------------------------------------------------------------
// Maximisation
// ---------------------------------------------------------------------------

TEST(VRules, NextStepValueFunction) {
    RMDPModel m = blocks_model();
    ValueFunction v0 = ValueFunction::initial({C("on(a,b)")});
    ValueFunction v1 =
        one_iteration(v0, StepFormula::next({C("on(a,b)")}), m);

    ASSERT_EQ(v1.rules.size(), 7u);
    std::vector<double> values;
    for (const VRule& r : v1.rules) values.push_back(r.value);
    EXPECT_EQ(values, (std::vector<double>{1.0, 1.0, 1.0, 0.9, 0.1, 0.0, 0.0}));

    std::set<std::string> certain = {canonical_key(v1.rules[0].state),
                                     canonical_key(v1.rules[1].state),
                                     canonical_key(v1.rules[2].state)};
    EXPECT_EQ(certain, expected_keys({"cl(X), cl(a), on(X,Z), on(a,b)",
                                      "cl(X), cl(Y), on(X,a), on(a,b)",
                                      "cl(X), cl(Y), on(X,Z), on(a,b)"}));
    EXPECT_EQ(canonical_key(v1.rules[3].state),
              canonical_key(C("cl(a), cl(b), on(a,Z)")));
    EXPECT_EQ(canonical_key(v1.rules[4].state),
              canonical_key(C("cl(a), cl(Y), on(a,b)")));
    EXPECT_EQ(canonical_key(v1.rules[5].state),
              canonical_key(C("cl(X), cl(Y), on(X,Z)")));
    EXPECT_TRUE(v1.rules[6].state.atoms().empty());
    EXPECT_EQ(v1.rules[6].value, 0.0);
}

TEST(VRules, UntilStepValueFunction) {
    RMDPModel m = blocks_model();
    ValueFunction v0 = ValueFunction::initial({C("on(a,b)")});
    StepFormula psi = StepFormula::until({C("on(c,d)")}, {C("on(a,b)")});
    ValueFunction v1 = one_iteration(v0, psi, m);

    // The goal state heads the list as an absorbing certainty, the two ways
    // of completing the goal in one step through an on(c,d) state follow,
    // and everything else is worthless. Zero-valued rules beyond the two
    // shown carry no ground information (the default already assigns 0).
    ASSERT_GE(v1.rules.size(), 4u);
    EXPECT_EQ(v1.rules[0].value, 1.0);
    EXPECT_EQ(canonical_key(v1.rules[0].state), canonical_key(C("on(a,b)")));
    EXPECT_EQ(v1.rules[1].value, 0.9);
    EXPECT_EQ(v1.rules[2].value, 0.9);
    EXPECT_EQ((std::set<std::string>{canonical_key(v1.rules[1].state),
                                     canonical_key(v1.rules[2].state)}),
              expected_keys({"cl(a), cl(b), on(a,Z), on(c,d)",
                             "cl(a), cl(b), on(a,c), on(c,d)"}));
    for (std::size_t i = 3; i < v1.rules.size(); ++i)
        EXPECT_EQ(v1.rules[i].value, 0.0) << "rule " << i;
    EXPECT_TRUE(v1.rules.back().state.atoms().empty());
}

TEST(VRules, EmptyQRuleListYieldsDefaultOnly) {
    ValueFunction vf = vrules({}, StepFormula::next({C("on(a,b)")}));
    ASSERT_EQ(vf.rules.size(), 1u);
    EXPECT_EQ(vf.rules[0].value, 0.0);
    EXPECT_TRUE(vf.rules[0].state.atoms().empty());
}

TEST(VRules, KeptRulesFormAntichainPerValue) {
    RMDPModel m = blocks_model();
    ValueFunction v0 = ValueFunction::initial({C("on(a,b)")});
    StepFormula psi = StepFormula::until({C("on(c,d)")}, {C("on(a,b)")});
    ValueFunction v = one_iteration(v0, psi, m);
    v = one_iteration(v, psi, m);
    // The final catch-all covers everything by design; the antichain claim
    // is about the rules before it.
    for (std::size_t i = 0; i + 1 < v.rules.size(); ++i)
        for (std::size_t j = 0; j + 1 < v.rules.size(); ++j) {
            if (i == j || v.rules[i].value != v.rules[j].value) continue;
            EXPECT_FALSE(properly_subsumes(v.rules[i].state, v.rules[j].state))
                << v.rules[i].state.render() << " makes "
                << v.rules[j].state.render() << " redundant";
        }
}

// ---------------------------------------------------------------------------
// Evaluation pins
// ---------------------------------------------------------------------------

TEST(Evaluate, FirstCoveringRuleWins) {
    ValueFunction v0 = ValueFunction::initial({C("on(a,b)")});
    EXPECT_EQ(evaluate(v0, C("cl(c), on(c,a), on(a,b)")), 1.0);
    EXPECT_EQ(evaluate(v0, C("cl(a), cl(b)")), 0.0);

    RMDPModel m = blocks_model();
    StepFormula psi = StepFormula::until({C("on(c,d)")}, {C("on(a,b)")});
    ValueFunction v1 = one_iteration(v0, psi, m);
    EXPECT_NEAR(evaluate(v1, C("cl(a), cl(b), on(a,c), on(c,d)")), 0.9, 1e-12);
}

TEST(Distance, DetectsValueShiftAndShapeChange) {
    RMDPModel m = blocks_model();
    ValueFunction v0 = ValueFunction::initial({C("on(a,b)")});
    ValueFunction v1 =
        one_iteration(v0, StepFormula::next({C("on(a,b)")}), m);
    EXPECT_EQ(distance(v1, v1), 0.0);

    ValueFunction shifted = v1;
    shifted.rules[3].value += 0.001;
    EXPECT_NEAR(distance(v1, shifted), 0.001, 1e-15);

    EXPECT_TRUE(std::isinf(distance(v0, v1)));
}

// ---------------------------------------------------------------------------
// Ground equivalence
// ---------------------------------------------------------------------------

// Independent enumeration of every stacking of the given blocks: each block
// either rests on the floor or directly on one other block, no block
// carries two, and towers cannot loop. Enumerated by brute force over the
// "rests on" assignment, entirely separate from the engine under test.
// cl marks each block with nothing on it; on(x,y) stacks x directly onto y.
std::vector<Conjunction> all_stackings(const std::vector<std::string>& names) {
    std::vector<Term> blocks;
    for (const std::string& n : names) blocks.push_back(Term::make(n));
    const int n = static_cast<int>(blocks.size());
    std::vector<Conjunction> out;
    std::vector<int> base(n, 0); // digit n encodes the floor
    for (;;) {
        bool valid = true;
        for (int i = 0; i < n && valid; ++i) {
            if (base[i] == i) valid = false; // nothing rests on itself
            for (int j = i + 1; j < n && valid; ++j)
                if (base[i] == base[j] && base[i] != n)
                    valid = false; // two blocks on one base
        }
        for (int i = 0; i < n && valid; ++i) {
            int steps = 0;
            for (int j = i; j != n; j = base[j])
                if (++steps > n) { valid = false; break; } // a loop of blocks
        }
        if (valid) {
            std::vector<Atom> atoms;
            Pred on = Pred::make("on", 2);
            Pred cl = Pred::make("cl", 1);
            for (int i = 0; i < n; ++i) {
                if (base[i] != n)
                    atoms.push_back(Atom{on, {blocks[i], blocks[base[i]]}});
                bool covered = false;
                for (int j = 0; j < n; ++j)
                    if (base[j] == i) covered = true;
                if (!covered) atoms.push_back(Atom{cl, {blocks[i]}});
            }
            out.push_back(Conjunction::make(std::move(atoms)));
        }
        int k = 0;
        while (k < n) {
            if (base[k] < n) {
                ++base[k];
                break;
            }
            base[k] = 0;
            ++k;
        }
        if (k == n) break;
    }
    return out;
}

// Explicit value iteration on the ground state space, used as the reference
// semantics. `absorbing` distinguishes the reach-and-stop reading from the
// exactly-one-step reading.
std::map<std::string, double>
ground_iterate(const RMDPModel& m, const std::vector<Conjunction>& states,
               const Conjunction& goal, bool absorbing,
               const std::map<std::string, double>& prev) {
    std::map<std::string, double> next;
    for (const Conjunction& s : states) {
        if (absorbing && oi_subsumes(goal, s)) {
            next[canonical_key(s)] = 1.0;
            continue;
        }
        double best = 0.0;
        for (const Atom& a : ground_actions(m, s)) {
            double q = 0.0;
            for (auto& [succ, p] : ground_step(m, s, a))
                q += p * prev.at(canonical_key(succ));
            best = std::max(best, q);
        }
        next[canonical_key(s)] = best;
    }
    return next;
}

TEST(GroundEquivalence, ThreeBlockWorldMatchesExplicitIteration) {
    RMDPModel m = blocks_model();
    std::vector<Conjunction> states = all_stackings({"a", "b", "c"});
    ASSERT_EQ(states.size(), 13u); // 3 singles·arrangements: known count

    Conjunction goal = C("on(a,b)");
    ValueFunction v0 = ValueFunction::initial({goal});

    // Reference start: goal states are worth 1, everything else 0.
    std::map<std::string, double> ground;
    for (const Conjunction& s : states)
        ground[canonical_key(s)] = oi_subsumes(goal, s) ? 1.0 : 0.0;
    for (const Conjunction& s : states)
        EXPECT_EQ(evaluate(v0, s), ground.at(canonical_key(s)));

    // Reach-and-stop over four steps: lifted and ground iterations agree on
    // every state at every horizon, and values never decrease.
    StepFormula reach = StepFormula::until({Conjunction()}, {goal});
    ValueFunction lifted = v0;
    for (int t = 1; t <= 4; ++t) {
        lifted = one_iteration(lifted, reach, m);
        ground = ground_iterate(m, states, goal, true, ground);
        for (const Conjunction& s : states) {
            double lv = evaluate(lifted, s);
            double gv = ground.at(canonical_key(s));
            EXPECT_NEAR(lv, gv, 1e-9)
                << "t=" << t << " state " << s.render();
            EXPECT_GE(lv, 0.0);
            EXPECT_LE(lv, 1.0);
        }
    }

    // Exactly-one-step reading.
    ValueFunction next_vf =
        one_iteration(v0, StepFormula::next({goal}), m);
    std::map<std::string, double> ground0;
    for (const Conjunction& s : states)
        ground0[canonical_key(s)] = oi_subsumes(goal, s) ? 1.0 : 0.0;
    auto ground_next = ground_iterate(m, states, goal, false, ground0);
    for (const Conjunction& s : states)
        EXPECT_NEAR(evaluate(next_vf, s), ground_next.at(canonical_key(s)),
                    1e-9)
            << "state " << s.render();
}

TEST(GroundEquivalence, ConstrainedReachRespectsWaypoints) {
    RMDPModel m = blocks_model();
    std::vector<Conjunction> states = all_stackings({"a", "b", "c", "d"});

    Conjunction goal = C("on(a,b)");
    Conjunction waypoint = C("on(c,d)");
    StepFormula psi = StepFormula::until({waypoint}, {goal});

    // Ground reference: goal states absorb at 1; states covered by the
    // waypoint may step; all others are stuck at 0.
    std::map<std::string, double> ground;
    for (const Conjunction& s : states)
        ground[canonical_key(s)] = oi_subsumes(goal, s) ? 1.0 : 0.0;
    ValueFunction lifted = ValueFunction::initial({goal});

    for (int t = 1; t <= 3; ++t) {
        std::map<std::string, double> next;
        for (const Conjunction& s : states) {
            std::string key = canonical_key(s);
            if (oi_subsumes(goal, s)) {
                next[key] = 1.0;
                continue;
            }
            if (!oi_subsumes(waypoint, s)) {
                next[key] = 0.0;
                continue;
            }
            double best = 0.0;
            for (const Atom& a : ground_actions(m, s)) {
                double q = 0.0;
                for (auto& [succ, p] : ground_step(m, s, a))
                    q += p * ground.at(canonical_key(succ));
                best = std::max(best, q);
            }
            next[key] = best;
        }
        ground = next;
        lifted = one_iteration(lifted, psi, m);
        for (const Conjunction& s : states)
            EXPECT_NEAR(evaluate(lifted, s), ground.at(canonical_key(s)), 1e-9)
                << "t=" << t << " state " << s.render();
    }
}

TEST(GroundEquivalence, ParallelRegressionMatchesSequential) {
    RMDPModel m = blocks_model();
    ValueFunction v0 = ValueFunction::initial({C("on(a,b)")});
    StepFormula psi = StepFormula::until({C("on(c,d)")}, {C("on(a,b)")});
    ValueFunction seq = one_iteration(v0, psi, m, std::nullopt, 1);
    ValueFunction par = one_iteration(v0, psi, m, std::nullopt, 4);
    ASSERT_EQ(seq.rules.size(), par.rules.size());
    for (std::size_t i = 0; i < seq.rules.size(); ++i) {
        EXPECT_EQ(seq.rules[i].value, par.rules[i].value);
        EXPECT_EQ(canonical_key(seq.rules[i].state),
                  canonical_key(par.rules[i].state));
    }
}

} // namespace
} // namespace relmc

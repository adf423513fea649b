#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "relmc/model_parser.hpp"
#include "relmc/oracle.hpp"

namespace relmc {
namespace {

Conjunction C(const std::string& text) { return parse_conjunction(text); }

StateFormulaPtr F(const std::string& text) { return parse_formula(text); }

/// Blocks world with the full set of structural patterns: functional on,
/// clear means uncovered, and no circular towers up to length six.
RMDPModel blocks_model() {
    return parse_model(R"(
        relation on/2.
        relation cl/1.
        action move/3.
        rule move(A, B, C):
            pre cl(A), cl(B), on(A, C) ;
            0.9 -> cl(A), cl(C), on(A, B) ;
            0.1 -> cl(A), cl(B), on(A, C).
        constraint on(X, Y), on(X, Z).
        constraint on(X, Z), on(Y, Z).
        constraint cl(X), on(Y, X).
        constraint on(X, Y), on(Y, X).
        constraint on(X, Y), on(Y, Z), on(Z, X).
        constraint on(X, Y), on(Y, Z), on(Z, W), on(W, X).
        constraint on(X, Y), on(Y, Z), on(Z, W), on(W, V), on(V, X).
        constraint on(X, Y), on(Y, Z), on(Z, W), on(W, V), on(V, U), on(U, X).
    )");
}

std::vector<Term> consts(std::initializer_list<const char*> names) {
    std::vector<Term> out;
    for (const char* n : names) out.push_back(Term::make(n));
    return out;
}

/// Applies a constant-to-constant renaming to a ground state.
Conjunction rename_constants(const Conjunction& s,
                             const std::map<Term, Term>& perm) {
    std::vector<Atom> atoms;
    for (const Atom& a : s.atoms()) {
        std::vector<Term> args;
        for (Term t : a.args) {
            auto it = perm.find(t);
            args.push_back(it == perm.end() ? t : it->second);
        }
        atoms.emplace_back(a.pred, std::move(args));
    }
    return Conjunction::make(std::move(atoms));
}

TEST(Enumerate, CountsConfigurationsPerWorldSize) {
    RMDPModel m = blocks_model();
    EXPECT_EQ(enumerate(m, consts({"b1"})).states.size(), 1u);
    EXPECT_EQ(enumerate(m, consts({"a", "b", "c"})).states.size(), 13u);
    EXPECT_EQ(enumerate(m, consts({"a", "b", "c", "d", "e"})).states.size(),
              501u);
}

TEST(Enumerate, SingleBlockHasNoActions) {
    RMDPModel m = blocks_model();
    GroundMDP mdp = enumerate(m, consts({"b1"}));
    ASSERT_EQ(mdp.states.size(), 1u);
    EXPECT_EQ(mdp.states[0], C("cl(b1)"));
    EXPECT_TRUE(mdp.transitions[0].empty());
}

TEST(Enumerate, ResultIsIndependentOfSeedOrder) {
    RMDPModel m = blocks_model();
    GroundMDP base = enumerate(m, consts({"a", "b", "c"}));

    std::vector<Conjunction> forward = base.states;
    std::vector<Conjunction> backward(forward.rbegin(), forward.rend());
    GroundMDP a = enumerate(m, consts({"a", "b", "c"}), forward);
    GroundMDP b = enumerate(m, consts({"a", "b", "c"}), backward);
    ASSERT_EQ(a.states, b.states);
    EXPECT_EQ(a.states, base.states);

    // A single seed closes to the whole space reachable from it.
    GroundMDP closed =
        enumerate(m, consts({"a", "b", "c"}), {C("cl(a), cl(b), on(a, c)")});
    EXPECT_GT(closed.states.size(), 1u);
    for (const Conjunction& s : closed.states)
        EXPECT_TRUE(base.index.count(s));
}

TEST(Enumerate, DistributionsAreClosedAndNormalized) {
    RMDPModel m = blocks_model();
    GroundMDP mdp = enumerate(m, consts({"a", "b", "c"}));
    for (std::size_t i = 0; i < mdp.states.size(); ++i) {
        for (const GroundTransition& tr : mdp.transitions[i]) {
            double total = 0.0;
            for (const auto& [target, p] : tr.outcomes) {
                ASSERT_LT(target, mdp.states.size());
                ASSERT_GT(p, 0.0);
                total += p;
            }
            EXPECT_NEAR(total, 1.0, 1e-9);
        }
    }
}

TEST(Enumerate, GuardsAgainstExplosion) {
    RMDPModel m = blocks_model();
    EXPECT_THROW(enumerate(m, consts({"a", "b", "c"}), {}, 5), ExplosionGuard);
}

TEST(Enumerate, RejectsVariablePools) {
    RMDPModel m = blocks_model();
    EXPECT_THROW(enumerate(m, {Term::make("X")}), ValidationError);
}

TEST(PathProbability, MultipliesStepProbabilities) {
    RMDPModel m = blocks_model();
    GroundMDP mdp = enumerate(m, consts({"a", "b", "c"}));

    Conjunction s0 = C("cl(a), cl(b), on(a, c)");
    Conjunction s1 = C("cl(a), cl(c), on(a, b)");
    Atom first = C("move(a, b, c)").atoms().front();
    Atom second = C("move(a, c, b)").atoms().front();
    Policy pi{{s0, first}, {s1, second}};

    // A path of one state traverses nothing.
    EXPECT_NEAR(path_probability(mdp, pi, Path{{s0}, {}}), 1.0, 1e-12);
    // One successful move.
    EXPECT_NEAR(path_probability(mdp, pi, Path{{s0, s1}, {first}}), 0.9,
                1e-12);
    // Two successful moves in a row.
    EXPECT_NEAR(
        path_probability(mdp, pi, Path{{s0, s1, s0}, {first, second}}),
        0.81, 1e-12);
}

TEST(PathProbability, RejectsInconsistentPaths) {
    RMDPModel m = blocks_model();
    GroundMDP mdp = enumerate(m, consts({"a", "b", "c"}));

    Conjunction s0 = C("cl(a), cl(b), on(a, c)");
    Conjunction s1 = C("cl(a), cl(c), on(a, b)");
    Conjunction elsewhere = C("cl(b), cl(c), on(b, a)");
    Atom first = C("move(a, b, c)").atoms().front();
    Atom other = C("move(b, a, c)").atoms().front();
    Policy pi{{s0, first}};

    // Action disagrees with the policy.
    EXPECT_THROW(path_probability(mdp, pi, Path{{s0, s1}, {other}}),
                 InconsistentPath);
    // Target is not an outcome of the chosen action.
    EXPECT_THROW(path_probability(mdp, pi, Path{{s0, elsewhere}, {first}}),
                 InconsistentPath);
    // State outside the enumerated space.
    EXPECT_THROW(
        path_probability(mdp, pi, Path{{C("cl(a), cl(b), cl(c), cl(d)")}, {}}),
        InconsistentPath);
    // Shape mismatch.
    EXPECT_THROW(path_probability(mdp, pi, Path{{s0, s1}, {}}),
                 InconsistentPath);
}

TEST(ExplicitCheck, ReachabilityValuePins) {
    RMDPModel m = blocks_model();

    // Goal states hold with certainty.
    GroundMDP small = enumerate(m, consts({"a", "b", "c"}));
    ExplicitResult far = explicit_check(*&small, *F("P>=0.5 [F<=10 on(a, b)]"));
    for (std::size_t i = 0; i < small.states.size(); ++i)
        if (oi_subsumes(C("on(a, b)"), small.states[i]))
            EXPECT_NEAR(far.value[i], 1.0, 1e-12);

    // One required move with one retry: 0.9 + 0.1 * 0.9.
    ExplicitResult two = explicit_check(small, *F("P>=0.5 [F<=2 on(a, b)]"));
    EXPECT_NEAR(two.value[small.state_index(C("cl(a), cl(b), on(a, c)"))],
                0.99, 1e-12);

    // Two moves both forced to succeed within the bound: 0.9 * 0.9. Block b
    // must first be uncovered, then a goes onto it; any failure leaves too
    // little time.
    GroundMDP big = enumerate(m, consts({"a", "b", "c", "d", "e"}));
    ExplicitResult wide = explicit_check(big, *F("P>=0.5 [F<=2 on(a, b)]"));
    EXPECT_NEAR(
        wide.value[big.state_index(
            C("cl(a), cl(d), cl(e), on(a, c), on(d, b)"))],
        0.81, 1e-12);
}

TEST(ExplicitCheck, BoundedValuesGrowWithTheBound) {
    RMDPModel m = blocks_model();
    GroundMDP mdp = enumerate(m, consts({"a", "b", "c"}));
    std::vector<double> prev(mdp.states.size(), -1.0);
    for (int k = 1; k <= 4; ++k) {
        ExplicitResult r = explicit_check(
            mdp, *F("P>=0.5 [F<=" + std::to_string(k) + " on(a, b)]"));
        for (std::size_t i = 0; i < mdp.states.size(); ++i) {
            EXPECT_GE(r.value[i] + 1e-12, prev[i]);
            prev[i] = r.value[i];
        }
    }
}

TEST(ExplicitCheck, ValuesRespectConstantRenaming) {
    // Swapping two constants that the formula never mentions permutes the
    // state space without changing any value.
    RMDPModel m = blocks_model();
    GroundMDP mdp = enumerate(m, consts({"a", "b", "c", "d"}));
    ExplicitResult r = explicit_check(mdp, *F("P>=0.5 [F<=3 on(a, b)]"));
    std::map<Term, Term> swap_cd{{Term::make("c"), Term::make("d")},
                                 {Term::make("d"), Term::make("c")}};
    for (std::size_t i = 0; i < mdp.states.size(); ++i) {
        std::size_t j = mdp.state_index(rename_constants(mdp.states[i], swap_cd));
        EXPECT_NEAR(r.value[i], r.value[j], 1e-12);
    }
}

TEST(ExplicitCheck, NegatedAtomUsesTheStatesObjects) {
    RMDPModel m = blocks_model();
    GroundMDP mdp = enumerate(m, consts({"a", "b", "c"}));
    ExplicitResult r = explicit_check(mdp, *F("~cl(A)"));
    // With every block clear there is no uncovered-free grounding...
    EXPECT_FALSE(r.sat[mdp.state_index(C("cl(a), cl(b), cl(c)"))]);
    // ...while a covered block provides one.
    EXPECT_TRUE(r.sat[mdp.state_index(C("cl(a), cl(b), on(a, c)"))]);
}

TEST(Compare, LiftedAndExplicitAnswersAgree) {
    RMDPModel m = blocks_model();
    GroundMDP mdp = enumerate(m, consts({"a", "b", "c"}));
    for (const char* text :
         {"P>=0.9 [X on(a, b)]", "P>=0.5 [F<=2 on(a, b)]",
          "P>=0.5 [cl(X) U<=2 on(a, b)]"}) {
        CheckResult lifted = check(*F(text), m);
        CompareReport report =
            compare(mdp, *F(text), lifted.sat,
                    std::optional<ValueFunction>(lifted.values));
        EXPECT_EQ(report.states, mdp.states.size());
        EXPECT_TRUE(report.mismatches.empty()) << text;
        EXPECT_TRUE(report.values_compared);
        EXPECT_LT(report.max_value_deviation, 1e-9) << text;
    }
}

TEST(Compare, DetectsCorruptedResults) {
    RMDPModel m = blocks_model();
    GroundMDP mdp = enumerate(m, consts({"a", "b", "c"}));
    StateFormulaPtr f = F("P>=0.9 [X on(a, b)]");
    CheckResult lifted = check(*f, m);

    // Values bent away from the truth show up as a deviation.
    ValueFunction bent = lifted.values;
    ASSERT_FALSE(bent.rules.empty());
    for (VRule& r : bent.rules) r.value = 0.0;
    CompareReport values_off =
        compare(mdp, *f, lifted.sat, std::optional<ValueFunction>(bent));
    EXPECT_GT(values_off.max_value_deviation, 0.1);

    // A dropped satisfying entry shows up as boolean mismatches.
    SatSet pruned = lifted.sat;
    ASSERT_FALSE(pruned.entries.empty());
    pruned.entries.clear();
    CompareReport sat_off =
        compare(mdp, *f, pruned, std::optional<ValueFunction>(lifted.values));
    EXPECT_FALSE(sat_off.mismatches.empty());
}

TEST(ValuesCsv, RendersOneRowPerState) {
    RMDPModel m = blocks_model();
    GroundMDP mdp = enumerate(m, consts({"a", "b", "c"}));
    ExplicitResult r = explicit_check(mdp, *F("P>=0.5 [F<=2 on(a, b)]"));
    std::string csv = values_csv(mdp, r.value);
    std::size_t rows = std::count(csv.begin(), csv.end(), '\n');
    EXPECT_EQ(rows, mdp.states.size() + 1);
    EXPECT_EQ(csv.rfind("state,value\n", 0), 0u);
}

} // namespace
} // namespace relmc

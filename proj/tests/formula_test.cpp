// Formula parsing, rendering, scope hygiene, and the evaluation plan.

#include "relmc/formula.hpp"

#include <gtest/gtest.h>

#include <random>
#include <string>
#include <vector>

namespace {

using relmc::Comparator;
using relmc::parse_formula;
using relmc::parse_tree;
using relmc::PathFormula;
using relmc::render_formula;
using relmc::ScopeWarning;
using relmc::StateFormula;
using relmc::StateFormulaPtr;

using SK = StateFormula::Kind;
using PK = PathFormula::Kind;

std::string reparse(const std::string& text) {
    return render_formula(*parse_formula(text));
}

TEST(FormulaParse, TruthConstants) {
    EXPECT_EQ(parse_formula("true")->kind, SK::True);
    EXPECT_EQ(parse_formula("false")->kind, SK::False);
}

TEST(FormulaParse, LiteralsAndNegation) {
    StateFormulaPtr f = parse_formula("on(a,b)");
    ASSERT_EQ(f->kind, SK::Lit);
    EXPECT_EQ(f->atom.render(), "on(a,b)");
    StateFormulaPtr neg = parse_formula("~cl(a)");
    ASSERT_EQ(neg->kind, SK::NegLit);
    EXPECT_EQ(neg->atom.render(), "cl(a)");
    StateFormulaPtr freevar = parse_formula("cl(A)");
    ASSERT_EQ(freevar->kind, SK::Lit);
    EXPECT_TRUE(freevar->atom.args[0].is_variable());
    EXPECT_THROW(parse_formula("~true"), relmc::ParseError);
    EXPECT_THROW(parse_formula("~(cl(a))"), relmc::ParseError);
}

TEST(FormulaParse, ConnectivePrecedence) {
    StateFormulaPtr f = parse_formula("~cl(a) & cl(b) | on(a,b)");
    ASSERT_EQ(f->kind, SK::Or);
    ASSERT_EQ(f->left->kind, SK::And);
    EXPECT_EQ(f->left->left->kind, SK::NegLit);
    EXPECT_EQ(render_formula(*f), "~cl(a) & cl(b) | on(a,b)");

    StateFormulaPtr g = parse_formula("cl(a) & (cl(b) | on(a,b))");
    ASSERT_EQ(g->kind, SK::And);
    ASSERT_EQ(g->right->kind, SK::Or);
    EXPECT_EQ(render_formula(*g), "cl(a) & (cl(b) | on(a,b))");
}

TEST(FormulaParse, ProbabilityOperator) {
    StateFormulaPtr f = parse_formula("P>=0.5 [ X cl(a) ]");
    ASSERT_EQ(f->kind, SK::Prob);
    EXPECT_EQ(f->cmp, Comparator::Ge);
    EXPECT_DOUBLE_EQ(f->threshold, 0.5);
    ASSERT_EQ(f->path->kind, PK::Next);
    EXPECT_EQ(f->path->operand->kind, SK::Lit);
    EXPECT_EQ(render_formula(*f), "P>=0.5 [ X cl(a) ]");

    StateFormulaPtr g = parse_formula("P<0.1 [ cl(a) U<=4 on(a,b) ]");
    ASSERT_EQ(g->path->kind, PK::Until);
    ASSERT_TRUE(g->path->bound.has_value());
    EXPECT_EQ(*g->path->bound, 4u);
    EXPECT_EQ(render_formula(*g), "P<0.1 [ cl(a) U<=4 on(a,b) ]");
}

TEST(FormulaParse, EventuallyIsSugarForUntil) {
    StateFormulaPtr f = parse_formula("P>=0.5 [ F<=10 on(a,b) ]");
    ASSERT_EQ(f->kind, SK::Prob);
    ASSERT_EQ(f->path->kind, PK::Until);
    EXPECT_EQ(f->path->lhs->kind, SK::True);
    EXPECT_EQ(f->path->rhs->atom.render(), "on(a,b)");
    ASSERT_TRUE(f->path->bound.has_value());
    EXPECT_EQ(*f->path->bound, 10u);

    StateFormulaPtr g = parse_formula("P>0 [ F on(a,b) ]");
    ASSERT_EQ(g->path->kind, PK::Until);
    EXPECT_FALSE(g->path->bound.has_value());
}

TEST(FormulaParse, ThresholdMustLieInUnitInterval) {
    EXPECT_THROW(parse_formula("P>=1.5 [ X cl(a) ]"), relmc::ValidationError);
}

TEST(FormulaParse, UntilBoundMustBePositive) {
    EXPECT_THROW(parse_formula("P>=0.5 [ cl(a) U<=0 cl(b) ]"),
                 relmc::ValidationError);
}

TEST(FormulaParse, SyntaxFaultCarriesPosition) {
    try {
        parse_formula("P>=0.5 [ X ]");
        FAIL() << "expected ParseError";
    } catch (const relmc::ParseError& e) {
        EXPECT_GE(e.col, 1);
        EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
    }
    EXPECT_THROW(parse_formula("cl(a"), relmc::ParseError);
    EXPECT_THROW(parse_formula("cl(a) cl(b)"), relmc::ParseError);
}

TEST(FormulaParse, CommentsAndNewlinesAreWhitespace) {
    StateFormulaPtr f = parse_formula(
        "% reachability\nP>=0.5 [\n  F<=10 on(a,b) % goal\n]");
    EXPECT_EQ(f->kind, SK::Prob);
}

TEST(FormulaPlan, NestedExampleYieldsFourInnerNodes) {
    StateFormulaPtr f = parse_formula(
        "P>=0.5 [ cl(a) U<=4 (on(a,b) & "
        "P>=0.8 [ P>=0.9 [X cl(e)] U<=2 on(c,d) ]) ]");
    auto plan = parse_tree(*f);
    EXPECT_EQ(plan.size(), 8u);
    std::vector<const StateFormula*> inner;
    for (const StateFormula* n : plan)
        if (n->kind == SK::And || n->kind == SK::Or || n->kind == SK::Prob)
            inner.push_back(n);
    ASSERT_EQ(inner.size(), 4u);
    EXPECT_EQ(inner[0]->kind, SK::Prob);
    EXPECT_DOUBLE_EQ(inner[0]->threshold, 0.9);
    EXPECT_EQ(inner[0]->path->kind, PK::Next);
    EXPECT_EQ(inner[1]->kind, SK::Prob);
    EXPECT_DOUBLE_EQ(inner[1]->threshold, 0.8);
    EXPECT_EQ(inner[2]->kind, SK::And);
    EXPECT_EQ(inner[3]->kind, SK::Prob);
    EXPECT_DOUBLE_EQ(inner[3]->threshold, 0.5);
    EXPECT_EQ(plan.back(), inner[3]);
}

TEST(FormulaPlan, EveryNodeFollowsItsChildren) {
    StateFormulaPtr f = parse_formula("cl(a) & cl(b)");
    auto plan = parse_tree(*f);
    ASSERT_EQ(plan.size(), 3u);
    EXPECT_EQ(plan[0]->kind, SK::Lit);
    EXPECT_EQ(plan[1]->kind, SK::Lit);
    EXPECT_EQ(plan[2]->kind, SK::And);

    auto single = parse_tree(*parse_formula("cl(a)"));
    EXPECT_EQ(single.size(), 1u);
}

TEST(FormulaScope, SiblingOperatorsShareNoVariables) {
    std::vector<ScopeWarning> warnings;
    StateFormulaPtr f = parse_formula(
        "P>=0.5 [ X cl(A) ] & P>=0.3 [ X on(A,B) ]", &warnings);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_EQ(warnings[0].variable, "A");
    EXPECT_EQ(warnings[0].renamed_to, "A2");
    EXPECT_EQ(render_formula(*f),
              "P>=0.5 [ X cl(A) ] & P>=0.3 [ X on(A2,B) ]");
}

TEST(FormulaScope, NestedOperatorOpensItsOwnScope) {
    std::vector<ScopeWarning> warnings;
    StateFormulaPtr f = parse_formula(
        "P>=0.5 [ cl(A) U P>=0.3 [ X cl(A) ] ]", &warnings);
    ASSERT_EQ(warnings.size(), 1u);
    EXPECT_NE(render_formula(*f).find("cl(A2)"), std::string::npos);
}

TEST(FormulaScope, SharingWithinOnePathFormulaIsKept) {
    std::vector<ScopeWarning> warnings;
    StateFormulaPtr f =
        parse_formula("P>=0.5 [ cl(A) U on(A,B) ]", &warnings);
    EXPECT_TRUE(warnings.empty());
    EXPECT_EQ(render_formula(*f), "P>=0.5 [ cl(A) U on(A,B) ]");
}

// Random formulas: after one parse, printing and reparsing is a fixpoint.
TEST(FormulaProperty, PrintParseFixpoint) {
    std::mt19937 rng(20260822);
    auto pick = [&](int n) { return static_cast<int>(rng() % n); };
    auto leaf = [&]() -> std::string {
        static const char* pool[] = {"true",    "false",   "cl(a)",
                                     "on(a,b)", "cl(A)",   "on(A,B)",
                                     "~cl(a)",  "~on(X,b)"};
        return pool[pick(8)];
    };
    auto gen = [&](auto&& self, int depth) -> std::string {
        if (depth == 0) return leaf();
        switch (pick(4)) {
        case 0:
            return self(self, depth - 1) + " & " + self(self, depth - 1);
        case 1:
            return "(" + self(self, depth - 1) + " | " + self(self, depth - 1) +
                   ")";
        case 2: {
            static const char* cmps[] = {"<=", "<", ">=", ">"};
            static const char* ps[] = {"0", "0.25", "0.5", "0.9", "1"};
            return std::string("P") + cmps[pick(4)] + ps[pick(5)] + " [ X " +
                   self(self, depth - 1) + " ]";
        }
        default: {
            static const char* bounds[] = {"", "<=1", "<=3", "<=10"};
            return "P>=0.5 [ " + self(self, depth - 1) + " U" +
                   std::string(bounds[pick(4)]) + " " + self(self, depth - 1) +
                   " ]";
        }
        }
    };
    for (int i = 0; i < 50; ++i) {
        std::string text = gen(gen, 1 + pick(3));
        std::string once = reparse(text);
        EXPECT_EQ(reparse(once), once) << "source: " << text;
    }
}

} // namespace

#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "logic.hpp"
#include "symbols.hpp"

namespace relmc {

/// True when some forbidden pattern embeds into the conjunction. A pattern
/// embeds exactly as in subsumption: injectively over the pattern's terms,
/// so the distinctness reading of the conjunction decides which embeddings
/// exist in every grounding it covers.
inline bool violates_integrity(const Conjunction& c,
                               const std::vector<Conjunction>& integrity) {
    for (const Conjunction& pattern : integrity)
        if (oi_subsumes(pattern, c)) return true;
    return false;
}

namespace detail {

/// Enumerates the ways of identifying terms across two term lists: partial
/// injective matchings pairing a term of one side with a term of the other.
/// Identifying two terms of the same side is never allowed (each side keeps
/// its own terms distinct), so terms both sides already share take no part,
/// and two distinct constants can never pair. `forced` pairs are merged
/// unconditionally first; if they are inconsistent nothing is emitted.
///
/// Emits one substitution per matching (smaller merges first), mapping each
/// merged variable to its partner — the constant if there is one, else the
/// first side's term. The emit callback returns false to stop.
template <typename Emit>
void enumerate_matchings(const std::vector<Term>& a_terms,
                         const std::vector<Term>& b_terms,
                         const std::vector<std::pair<Term, Term>>& forced,
                         Emit&& emit) {
    std::set<Term> a_set(a_terms.begin(), a_terms.end());
    std::set<Term> b_set(b_terms.begin(), b_terms.end());

    Substitution sigma;
    std::set<Term> used;
    auto merge_pair = [&](Term x, Term y) -> bool {
        if (x == y) return true;                            // already one term
        if (x.is_constant() && y.is_constant()) return false;
        if (a_set.count(x) && b_set.count(x)) return false; // shared term
        if (a_set.count(y) && b_set.count(y)) return false;
        if (used.count(x) || used.count(y)) return false;   // matched twice
        used.insert(x);
        used.insert(y);
        // Representative: the constant if either is one, else the first side.
        if (x.is_constant()) sigma.emplace(y, x);
        else if (y.is_constant()) sigma.emplace(x, y);
        else sigma.emplace(y, x);
        return true;
    };
    for (const auto& [x, y] : forced)
        if (!merge_pair(x, y)) return;

    // Free terms still available for optional pairing, in term order.
    std::vector<Term> fa, fb;
    for (Term t : a_terms)
        if (!used.count(t) && !b_set.count(t)) fa.push_back(t);
    for (Term t : b_terms)
        if (!used.count(t) && !a_set.count(t)) fb.push_back(t);
    std::vector<bool> taken(fb.size(), false);

    bool stop = false;
    auto rec = [&](auto&& self, std::size_t ai) -> void {
        if (stop) return;
        if (ai == fa.size()) {
            if (!emit(static_cast<const Substitution&>(sigma))) stop = true;
            return;
        }
        // Leave fa[ai] unmatched.
        self(self, ai + 1);
        for (std::size_t bi = 0; bi < fb.size() && !stop; ++bi) {
            if (taken[bi]) continue;
            Term x = fa[ai], y = fb[bi];
            if (x.is_constant() && y.is_constant()) continue;
            taken[bi] = true;
            if (x.is_constant()) sigma.emplace(y, x);
            else if (y.is_constant()) sigma.emplace(x, y);
            else sigma.emplace(y, x);
            self(self, ai + 1);
            if (x.is_constant()) sigma.erase(y);
            else if (y.is_constant()) sigma.erase(x);
            else sigma.erase(y);
            taken[bi] = false;
        }
    };
    rec(rec, 0);
}

/// All consistent cross-merges of two conjunctions. For each partial
/// injective identification of terms across the sides, the candidate is the
/// union of both instantiated sides; candidates with an atom mentioning one
/// term twice, a broken disequality, or an embedded forbidden pattern are
/// dropped, and candidates beyond the term bound are not reported. Calls
/// `sink(sigma, candidate)` once per surviving identification.
///
/// The search walks atoms before loose terms. The first phase decides, atom
/// by atom of the first side in order, which second-side atom of the same
/// relation it collapses onto, if any; the second phase identifies leftover
/// terms pairwise. Equal cross-side atoms dedicate each merge set to one
/// branch — the one whose matched pairs are exactly the atom pairs the
/// merges collapse — so nothing is reported twice, and the structure exposes
/// subtree prunes a flat enumeration cannot see:
///
///  * an atom with a doubled argument or a broken disequality can never be
///    repaired by further merges, so its subtree is dead;
///  * a collapse whose atoms this branch can no longer match dedicates the
///    whole subtree to a sibling branch;
///  * once every further merge must still leave the candidate above the
///    term bound, no descendant can be reported;
///  * a forbidden pattern embedding that no reachable merge can break
///    condemns the subtree, because merges only ever identify one still-free
///    term of each side: an embedding outlives every merge except one that
///    identifies two of its image terms without first killing the branch on
///    a doubled argument or handing the merge set to a sibling.
template <typename Sink>
void mgs_search(const Conjunction& a, const Conjunction& b,
                const std::vector<Conjunction>& integrity,
                const std::vector<std::pair<Term, Term>>& forced,
                std::optional<std::size_t> bound, Sink&& sink) {
    const std::vector<Atom>& aa = a.atoms();
    const std::vector<Atom>& bb = b.atoms();

    // The walk runs on a dense index space: every term in sight becomes a
    // small integer, atoms become argument spans in one pool, and all the
    // per-node checks work on plain arrays. Conjunctions are materialised
    // only when a node is actually reported.
    std::vector<Term> ix_term;
    std::map<Term, int> term_ix;
    auto intern = [&](Term t) -> int {
        auto it = term_ix.find(t);
        if (it != term_ix.end()) return it->second;
        int idx = static_cast<int>(ix_term.size());
        ix_term.push_back(t);
        term_ix.emplace(t, idx);
        return idx;
    };

    struct PAtom {
        Pred pred;
        int begin, end; // argument span in arg_pool
    };
    std::vector<int> arg_pool;
    auto intern_atom = [&](const Atom& at, std::vector<PAtom>& into) {
        PAtom p{at.pred, static_cast<int>(arg_pool.size()), 0};
        for (Term t : at.args) arg_pool.push_back(intern(t));
        p.end = static_cast<int>(arg_pool.size());
        into.push_back(p);
    };
    std::vector<PAtom> pa, pb;
    pa.reserve(aa.size());
    pb.reserve(bb.size());
    for (const Atom& at : aa) intern_atom(at, pa);
    for (const Atom& bt : bb) intern_atom(bt, pb);

    // Side membership of the occurring terms decides what may merge: a term
    // of both sides is pinned, and free terms of one side pair only with
    // free terms of the other.
    std::vector<std::pair<int, int>> pdiseq; // (left idx, constant idx)
    for (auto [l, r] : a.diseqs()) pdiseq.emplace_back(intern(l), intern(r));
    for (auto [l, r] : b.diseqs()) pdiseq.emplace_back(intern(l), intern(r));
    std::vector<std::pair<int, int>> forced_ix;
    forced_ix.reserve(forced.size());
    for (const auto& [x, y] : forced)
        forced_ix.emplace_back(intern(x), intern(y));

    // Forbidden patterns, split: pure-atom patterns drive the subtree
    // pruning below; patterns with disequalities are only consulted when a
    // node is reported, because merges can change what their entailment
    // sees and persistence is never claimed for them.
    struct PPattern {
        std::vector<PAtom> atoms; // arg >= 0: variable slot; arg < 0: ~constant idx
        int n_vars = 0;
        std::vector<int> const_ix; // interned constants, images of themselves
    };
    std::vector<PPattern> pure_pats;
    std::vector<const Conjunction*> diseq_pats;
    for (const Conjunction& pattern : integrity) {
        if (!pattern.diseqs().empty()) {
            diseq_pats.push_back(&pattern);
            continue;
        }
        PPattern pp;
        std::map<Term, int> var_slot;
        std::size_t pool_mark = arg_pool.size();
        bool fits = true;
        for (const Atom& at : pattern.atoms()) {
            PAtom p{at.pred, static_cast<int>(arg_pool.size()), 0};
            fits = fits && at.args.size() <= 8;
            for (Term t : at.args) {
                if (t.is_constant()) {
                    int ci = intern(t);
                    arg_pool.push_back(~ci);
                    pp.const_ix.push_back(ci);
                } else {
                    auto it = var_slot.find(t);
                    if (it == var_slot.end())
                        it = var_slot.emplace(t, pp.n_vars++).first;
                    arg_pool.push_back(it->second);
                }
            }
            p.end = static_cast<int>(arg_pool.size());
            pp.atoms.push_back(p);
        }
        std::sort(pp.const_ix.begin(), pp.const_ix.end());
        pp.const_ix.erase(std::unique(pp.const_ix.begin(), pp.const_ix.end()),
                          pp.const_ix.end());
        // The fast walk uses fixed-size scratch; an outsized pattern falls
        // back to the reported-node check, which is sound, just unpruned.
        if (!fits || pp.n_vars > 16 ||
            pp.n_vars + static_cast<int>(pp.const_ix.size()) > 24) {
            arg_pool.resize(pool_mark);
            diseq_pats.push_back(&pattern);
            continue;
        }
        pure_pats.push_back(std::move(pp));
    }

    const int n_ix = static_cast<int>(ix_term.size());
    std::vector<char> in_a(n_ix, 0), in_b(n_ix, 0), is_c(n_ix, 0);
    for (int i = 0; i < n_ix; ++i) is_c[i] = ix_term[i].is_constant() ? 1 : 0;
    for (const PAtom& p : pa)
        for (int k = p.begin; k < p.end; ++k) in_a[arg_pool[k]] = 1;
    for (const PAtom& p : pb)
        for (int k = p.begin; k < p.end; ++k) in_b[arg_pool[k]] = 1;

    // Merge bookkeeping. rep points each merged-away term at its
    // representative: the constant of the pair if there is one, else the
    // first side's term. A term takes part in at most one identification,
    // so rep never chains; sigma mirrors the merges as a substitution for
    // the reported results.
    std::vector<int> rep(n_ix);
    for (int i = 0; i < n_ix; ++i) rep[i] = i;
    std::vector<char> used(n_ix, 0);
    int free_a_cnt = 0, free_b_cnt = 0;
    for (int i = 0; i < n_ix; ++i) {
        if (in_a[i] && !in_b[i]) ++free_a_cnt;
        if (in_b[i] && !in_a[i]) ++free_b_cnt;
    }
    Substitution sigma;
    struct Undo {
        int x, y, loser;
    };
    std::vector<Undo> undo_log;
    auto count_free = [&](int i, int delta) {
        if (in_a[i] && !in_b[i]) free_a_cnt += delta;
        if (in_b[i] && !in_a[i]) free_b_cnt += delta;
    };
    // 1: merged, one undo record. 0: already identified, nothing to do.
    // -1: the pair can never be identified.
    auto merge_pair = [&](int x, int y) -> int {
        if (rep[x] == rep[y]) return 0;
        if (is_c[x] && is_c[y]) return -1;
        if (in_a[x] && in_b[x]) return -1; // shared term
        if (in_a[y] && in_b[y]) return -1;
        if (used[x] || used[y]) return -1; // matched twice
        int winner = is_c[x] ? x : (is_c[y] ? y : x);
        int loser = winner == x ? y : x;
        rep[loser] = winner;
        used[x] = used[y] = 1;
        count_free(x, -1);
        count_free(y, -1);
        sigma.emplace(ix_term[loser], ix_term[winner]);
        undo_log.push_back(Undo{x, y, loser});
        return 1;
    };
    auto rollback_to = [&](std::size_t n) {
        while (undo_log.size() > n) {
            const Undo& u = undo_log.back();
            sigma.erase(ix_term[u.loser]);
            rep[u.loser] = u.loser;
            used[u.x] = used[u.y] = 0;
            count_free(u.x, +1);
            count_free(u.y, +1);
            undo_log.pop_back();
        }
    };
    for (const auto& [x, y] : forced_ix)
        if (merge_pair(x, y) < 0) return;

    // Which first-side atom each second-side atom is matched to, if any.
    std::vector<char> b_taken(pb.size(), 0);
    std::vector<int> match_of_b(pb.size(), -1);

    // Scratch for counting distinct representatives, epoch-stamped so no
    // clearing is needed between nodes.
    std::vector<int> stamp(n_ix, 0);
    int epoch = 0;

    auto image_equal = [&](const PAtom& g, const PAtom& h) {
        if (!(g.pred == h.pred) || g.end - g.begin != h.end - h.begin)
            return false;
        for (int k = 0; k < g.end - g.begin; ++k)
            if (rep[arg_pool[g.begin + k]] != rep[arg_pool[h.begin + k]])
                return false;
        return true;
    };

    // Verdict on the node the current merges describe. `frontier` is the
    // first still-undecided first-side atom; `l2` marks the term-pair
    // phase, where no further atom match can happen.
    struct Verdict {
        bool descend = false;
        bool emit = false;
    };
    auto node_check = [&](std::size_t frontier, bool l2) -> Verdict {
        // A doubled argument or a broken disequality never heals: merges
        // only pile up along a branch.
        for (const std::vector<PAtom>* side : {&pa, &pb})
            for (const PAtom& p : *side)
                for (int i = p.begin; i < p.end; ++i)
                    for (int j = i + 1; j < p.end; ++j)
                        if (rep[arg_pool[i]] == rep[arg_pool[j]]) return {};
        for (auto [l, r] : pdiseq)
            if (rep[l] == r) return {};

        // Distinct terms the union still mentions; each further merge can
        // shave off at most one, and only while both sides have free terms.
        ++epoch;
        std::size_t terms_now = 0;
        for (const std::vector<PAtom>* side : {&pa, &pb})
            for (const PAtom& p : *side)
                for (int k = p.begin; k < p.end; ++k) {
                    int r = rep[arg_pool[k]];
                    if (stamp[r] != epoch) {
                        stamp[r] = epoch;
                        ++terms_now;
                    }
                }
        std::size_t slack = static_cast<std::size_t>(
            std::min(free_a_cnt, free_b_cnt));
        if (bound && terms_now > *bound + slack) return {};

        // An equal cross-side pair of atoms that is not matched means this
        // merge set belongs to the branch matching that pair. While this
        // branch can still take the match the subtree continues silently;
        // once it cannot, the subtree is done.
        bool collapse_open = false;
        for (std::size_t j = 0; j < pb.size(); ++j) {
            for (std::size_t i = 0; i < pa.size(); ++i) {
                if (!image_equal(pa[i], pb[j])) continue;
                if (match_of_b[j] == static_cast<int>(i)) break;
                if (l2 || i < frontier || b_taken[j]) return {};
                collapse_open = true;
                break;
            }
        }

        // Pure-atom forbidden patterns: an embedding makes the node
        // unreportable, and one that no merge reachable below can break
        // makes the whole subtree dead. Merges only ever identify one
        // still-free term of each side, so an embedding outlives every
        // merge except one identifying two of its image terms — and such a
        // merge is only reachable if it neither doubles an argument, nor
        // collapses two atoms (the matching branch owns that merge set),
        // nor, in the atom phase, appears among the still-takeable matches.
        bool violated = false;
        for (const PPattern& pp : pure_pats) {
            int pimg[16];
            int claimed[24];
            int n_claimed = 0;
            for (int ci : pp.const_ix) claimed[n_claimed++] = ci;
            for (int v = 0; v < pp.n_vars; ++v) pimg[v] = -1;
            bool prune = false;
            auto is_claimed = [&](int r) {
                for (int i = 0; i < n_claimed; ++i)
                    if (claimed[i] == r) return true;
                return false;
            };
            // Enumerates embeddings; true from the visitor stops the walk.
            auto embed = [&](auto&& self, std::size_t pi) -> bool {
                if (pi == pp.atoms.size()) {
                    // Embedding found: image terms are the claimed reps.
                    violated = true;
                    bool persistent = true;
                    for (int ui = 0; ui < n_claimed && persistent; ++ui) {
                        for (int vi = ui + 1; vi < n_claimed && persistent;
                             ++vi) {
                            int s = claimed[ui], t = claimed[vi];
                            // Orient as (first side, second side); both must
                            // still be free for a merge to exist.
                            bool s_a = in_a[s] && !in_b[s] && !used[s];
                            bool s_b = in_b[s] && !in_a[s] && !used[s];
                            bool t_a = in_a[t] && !in_b[t] && !used[t];
                            bool t_b = in_b[t] && !in_a[t] && !used[t];
                            if (t_a && s_b) std::swap(s, t);
                            else if (!(s_a && t_b)) continue;
                            if (is_c[s] && is_c[t]) continue;
                            // Sharing an atom: the merge doubles an argument.
                            bool doubled = false;
                            for (const std::vector<PAtom>* side : {&pa, &pb}) {
                                for (const PAtom& p : *side) {
                                    bool has_s = false, has_t = false;
                                    for (int k = p.begin; k < p.end; ++k) {
                                        int r = rep[arg_pool[k]];
                                        has_s = has_s || r == s;
                                        has_t = has_t || r == t;
                                    }
                                    if (has_s && has_t) {
                                        doubled = true;
                                        break;
                                    }
                                }
                                if (doubled) break;
                            }
                            if (doubled) continue;
                            // A still-takeable atom match merging s with t.
                            if (!l2) {
                                bool escapable = false;
                                for (std::size_t i = frontier;
                                     i < pa.size() && !escapable; ++i) {
                                    for (std::size_t j = 0;
                                         j < pb.size() && !escapable; ++j) {
                                        if (b_taken[j]) continue;
                                        if (!(pa[i].pred == pb[j].pred))
                                            continue;
                                        int len = pa[i].end - pa[i].begin;
                                        if (len != pb[j].end - pb[j].begin)
                                            continue;
                                        for (int k = 0; k < len; ++k)
                                            if (rep[arg_pool[pa[i].begin + k]] ==
                                                    s &&
                                                rep[arg_pool[pb[j].begin + k]] ==
                                                    t) {
                                                escapable = true;
                                                break;
                                            }
                                    }
                                }
                                if (escapable) {
                                    persistent = false;
                                    break;
                                }
                            }
                            // A term-pair merge collapsing two atoms hands
                            // the merge set to an atom-matching branch.
                            auto squash = [&](int r) { return r == t ? s : r; };
                            bool collapses = false;
                            auto each_atom = [&](auto&& fn) {
                                for (const std::vector<PAtom>* side :
                                     {&pa, &pb})
                                    for (const PAtom& p : *side)
                                        if (!fn(p)) return;
                            };
                            std::vector<const PAtom*> all;
                            all.reserve(pa.size() + pb.size());
                            each_atom([&](const PAtom& p) {
                                all.push_back(&p);
                                return true;
                            });
                            for (std::size_t gi = 0;
                                 gi < all.size() && !collapses; ++gi) {
                                for (std::size_t hi = gi + 1;
                                     hi < all.size() && !collapses; ++hi) {
                                    const PAtom& g = *all[gi];
                                    const PAtom& h = *all[hi];
                                    if (!(g.pred == h.pred)) continue;
                                    int len = g.end - g.begin;
                                    if (len != h.end - h.begin) continue;
                                    bool same = true;
                                    for (int k = 0; k < len && same; ++k)
                                        same =
                                            squash(rep[arg_pool[g.begin + k]]) ==
                                            squash(rep[arg_pool[h.begin + k]]);
                                    collapses = same;
                                }
                            }
                            if (collapses) continue;
                            persistent = false;
                        }
                    }
                    if (persistent) {
                        prune = true;
                        return true;
                    }
                    return false;
                }
                const PAtom& pat = pp.atoms[pi];
                int len = pat.end - pat.begin;
                for (const std::vector<PAtom>* side : {&pa, &pb}) {
                    for (const PAtom& cnd : *side) {
                        if (!(cnd.pred == pat.pred)) continue;
                        if (cnd.end - cnd.begin != len) continue;
                        int bound_slots[8];
                        int n_bound = 0;
                        bool ok = true;
                        for (int k = 0; k < len && ok; ++k) {
                            int parg = arg_pool[pat.begin + k];
                            int r = rep[arg_pool[cnd.begin + k]];
                            if (parg < 0) {
                                ok = (~parg == r);
                            } else if (pimg[parg] >= 0) {
                                ok = (pimg[parg] == r);
                            } else if (is_claimed(r)) {
                                ok = false;
                            } else {
                                pimg[parg] = r;
                                claimed[n_claimed++] = r;
                                bound_slots[n_bound++] = parg;
                            }
                        }
                        if (ok && self(self, pi + 1)) return true;
                        for (int u = 0; u < n_bound; ++u) {
                            pimg[bound_slots[u]] = -1;
                            --n_claimed;
                        }
                    }
                }
                return false;
            };
            embed(embed, 0);
            if (prune) return {};
        }

        Verdict out;
        out.descend = true;
        out.emit = !violated && !collapse_open &&
                   (!bound || terms_now <= *bound);
        return out;
    };

    // Materialises and reports the current node. The patterns carrying
    // disequalities are checked here, on the real conjunction.
    auto emit_current = [&]() {
        auto ia = substituted(a, sigma);
        auto ib = substituted(b, sigma);
        if (!ia || !ib) return; // cannot happen after node_check
        std::vector<Atom> atoms = ia->atoms();
        atoms.insert(atoms.end(), ib->atoms().begin(), ib->atoms().end());
        std::vector<Conjunction::Diseq> diseqs = ia->diseqs();
        diseqs.insert(diseqs.end(), ib->diseqs().begin(), ib->diseqs().end());
        Conjunction cand = Conjunction::make(std::move(atoms), std::move(diseqs));
        for (const Conjunction* dp : diseq_pats)
            if (oi_subsumes(*dp, cand)) return;
        sink(static_cast<const Substitution&>(sigma), std::move(cand));
    };

    // Second phase: identify leftover terms pairwise, first-side index
    // ascending so each pair set is visited once. The free lists are frozen
    // on entry; merge_pair skips terms a deeper pair already consumed.
    auto l2_rec = [&](auto&& self, const std::vector<int>& fa,
                      const std::vector<int>& fb, std::size_t next_j) -> void {
        for (std::size_t j = next_j; j < fa.size(); ++j) {
            for (std::size_t k = 0; k < fb.size(); ++k) {
                std::size_t mark = undo_log.size();
                if (merge_pair(fa[j], fb[k]) <= 0) {
                    rollback_to(mark);
                    continue;
                }
                Verdict v = node_check(pa.size(), true);
                if (v.emit) emit_current();
                if (v.descend) self(self, fa, fb, j + 1);
                rollback_to(mark);
            }
        }
    };

    // First phase: decide the first-side atoms in order. Skipping an atom
    // narrows what the subtree may still collapse, so the node is
    // re-examined, but its merge set, unchanged, is not re-reported.
    auto l1_rec = [&](auto&& self, std::size_t ai) -> void {
        if (ai == pa.size()) {
            std::vector<int> fa, fb;
            for (int i = 0; i < n_ix; ++i) {
                if (used[i]) continue;
                if (in_a[i] && !in_b[i]) fa.push_back(i);
                if (in_b[i] && !in_a[i]) fb.push_back(i);
            }
            l2_rec(l2_rec, fa, fb, 0);
            return;
        }
        {
            Verdict v = node_check(ai + 1, false);
            if (v.descend) self(self, ai + 1);
        }
        const PAtom& pat = pa[ai];
        for (std::size_t bi = 0; bi < pb.size(); ++bi) {
            if (b_taken[bi]) continue;
            if (!(pb[bi].pred == pat.pred)) continue;
            if (pb[bi].end - pb[bi].begin != pat.end - pat.begin) continue;
            std::size_t mark = undo_log.size();
            bool ok = true;
            for (int k = 0; k < pat.end - pat.begin && ok; ++k)
                ok = merge_pair(arg_pool[pat.begin + k],
                                arg_pool[pb[bi].begin + k]) >= 0;
            if (ok) {
                b_taken[bi] = 1;
                match_of_b[bi] = static_cast<int>(ai);
                Verdict v = node_check(ai + 1, false);
                if (v.emit) emit_current();
                if (v.descend) self(self, ai + 1);
                b_taken[bi] = 0;
                match_of_b[bi] = -1;
            }
            rollback_to(mark);
        }
    };

    Verdict root = node_check(0, false);
    if (root.emit) emit_current();
    if (root.descend) l1_rec(l1_rec, 0);
}

} // namespace detail

/// Keeps only the most general elements: drops every conjunction that is
/// properly covered by another element. Deduplicates renamings first and
/// returns the survivors sorted by their normal-form key.
inline std::vector<Conjunction>
prune_to_most_general(const std::vector<Conjunction>& candidates) {
    std::map<std::string, Conjunction> by_key;
    for (const Conjunction& c : candidates)
        by_key.emplace(canonical_key(c), c);
    std::vector<Conjunction> kept;
    for (const auto& [key, c] : by_key) {
        bool dominated = false;
        for (const auto& [okey, other] : by_key) {
            if (okey == key) continue;
            if (oi_subsumes(other, c) && !oi_subsumes(c, other)) {
                dominated = true;
                break;
            }
        }
        if (!dominated) kept.push_back(c);
    }
    return kept;
}

/// Maximally general specialisations of two abstract states: the most
/// general states covered by both. Enumerates every consistent way of
/// identifying terms across the two sides, keeps the consistent unions, and
/// prunes those properly covered by another result. States that embed a
/// forbidden pattern are dropped along the way, which can rule out whole
/// branches of the specialisation space, and a term bound drops the states
/// that grew past it. The operands must not share variables.
inline std::vector<Conjunction>
mgs(const Conjunction& a, const Conjunction& b,
    const std::vector<Conjunction>& integrity = {},
    std::optional<std::size_t> bound = std::nullopt) {
    {
        std::set<Term> av;
        for (Term t : a.variables()) av.insert(t);
        for (Term t : b.variables())
            if (av.count(t))
                throw SharedVariables("mgs operands share variable '" +
                                      t.name() + "'");
    }
    std::vector<Conjunction> candidates;
    detail::mgs_search(a, b, integrity, {}, bound,
                       [&](const Substitution&, Conjunction cand) {
        candidates.push_back(std::move(cand));
    });
    std::vector<Conjunction> canon;
    canon.reserve(candidates.size());
    for (const Conjunction& c : candidates) canon.push_back(canonical_form(c));
    return prune_to_most_general(canon);
}

} // namespace relmc

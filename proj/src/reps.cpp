#include "qqs/reps.hpp"

#include "qqs/relations.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace qqs {

RepMap elementary_rep(int i, int n) {
    if (n < 1) throw std::invalid_argument("elementary_rep: rank must be positive");
    if (i < 1 || i > n) throw std::invalid_argument("elementary_rep: letter index out of range");
    const int N = 2 * n;
    RepMap r;
    r.n = n;
    r.sig = {Sort::Nat};
    r.table.assign(static_cast<size_t>(N) * N, OperatorExpr::zero({Sort::Nat}));
    for (int k = 1; k <= N; ++k) r.at(k, k) = prim_id(Sort::Nat);

    // Weighted shift sqrt(1-q^{2N+2})S and its adjoint S*sqrt(1-q^{2N+2}).
    OperatorExpr aS = compose(prim_diag(Sort::Nat, sq1m(2, 2)), prim_shift(Sort::Nat));
    OperatorExpr Sa = adjoint(aS);
    if (i < n) {
        r.at(i, i) = aS;
        r.at(2 * n - i, 2 * n - i) = aS;
        r.at(i + 1, i + 1) = Sa;
        r.at(2 * n - i + 1, 2 * n - i + 1) = Sa;
        r.at(i, i + 1) = scale(prim_diag(Sort::Nat, qpow(1, 1)), -1.0);
        r.at(i + 1, i) = prim_diag(Sort::Nat, qpow(1, 0));
        r.at(2 * n - i, 2 * n - i + 1) = prim_diag(Sort::Nat, qpow(1, 1));
        r.at(2 * n - i + 1, 2 * n - i) = scale(prim_diag(Sort::Nat, qpow(1, 0)), -1.0);
    } else {
        OperatorExpr bS = compose(prim_diag(Sort::Nat, sq1m(4, 4)), prim_shift(Sort::Nat));
        r.at(n, n) = bS;
        r.at(n + 1, n + 1) = adjoint(bS);
        r.at(n, n + 1) = scale(prim_diag(Sort::Nat, qpow(2, 2)), -1.0);
        r.at(n + 1, n) = prim_diag(Sort::Nat, qpow(2, 0));
    }
    for (auto& e : r.table) e = normalize(e);
    return r;
}

RepMap torus_char(const std::vector<cplx>& t, int n) {
    if (static_cast<int>(t.size()) != n) throw std::invalid_argument("torus_char: need n components");
    for (const auto& c : t)
        if (std::abs(std::abs(c) - 1.0) > 1e-12)
            throw std::invalid_argument("torus_char: components must be unimodular");
    RepMap r;
    r.n = n;
    r.sig = {};
    const int N = 2 * n;
    r.table.assign(static_cast<size_t>(N) * N, OperatorExpr::zero({}));
    for (int i = 1; i <= N; ++i) {
        cplx v = (i <= n) ? std::conj(t[i - 1]) : t[2 * n - i];
        r.at(i, i) = OperatorExpr::scalar(v);
    }
    return r;
}

RepMap convolve(const RepMap& phi, const RepMap& psi) {
    if (phi.n != psi.n) throw std::invalid_argument("convolve: rank mismatch");
    const int N = 2 * phi.n;
    RepMap r;
    r.n = phi.n;
    r.sig = phi.sig;
    r.sig.insert(r.sig.end(), psi.sig.begin(), psi.sig.end());
    r.table.assign(static_cast<size_t>(N) * N, OperatorExpr::zero(r.sig));
    for (int i = 1; i <= N; ++i) {
        for (int j = 1; j <= N; ++j) {
            OperatorExpr acc = OperatorExpr::zero(r.sig);
            for (int k = 1; k <= N; ++k) {
                const OperatorExpr& a = phi.at(i, k);
                const OperatorExpr& b = psi.at(k, j);
                if (a.is_zero() || b.is_zero()) continue;
                acc = add(acc, tensor(a, b));
            }
            r.at(i, j) = normalize(acc);
        }
    }
    return r;
}

WeylWord weyl_word(int k, int n) {
    if (k < 1 || k > 2 * n) throw std::invalid_argument("weyl_word: k out of range");
    WeylWord w;
    if (k == 1) return w;
    if (k <= n) {
        for (int i = 1; i <= k - 1; ++i) w.letters.push_back(i);
        return w;
    }
    for (int i = 1; i <= n; ++i) w.letters.push_back(i);
    for (int i = n - 1; i >= 2 * n - k + 1; --i) w.letters.push_back(i);
    return w;
}

namespace {
RepMap delta_character(int n) {
    RepMap r;
    r.n = n;
    r.sig = {};
    const int N = 2 * n;
    r.table.assign(static_cast<size_t>(N) * N, OperatorExpr::zero({}));
    for (int i = 1; i <= N; ++i) r.at(i, i) = OperatorExpr::scalar(1.0);
    return r;
}
}  // namespace

RepMap word_rep_plain(const WeylWord& w, int n) {
    RepMap acc = delta_character(n);
    for (int letter : w.letters) acc = convolve(acc, elementary_rep(letter, n));
    return acc;
}

RepMap word_rep(const WeylWord& w, const std::vector<cplx>& t, int n) {
    RepMap acc = torus_char(t, n);
    for (int letter : w.letters) acc = convolve(acc, elementary_rep(letter, n));
    return acc;
}

std::string GeneratorAssignment::to_string() const {
    std::ostringstream os;
    for (size_t l = 0; l < slots.size(); ++l) {
        if (l) os << ";";
        os << "z" << (l + 1) << "=";
        if (slots[l].sign < 0) os << "-";
        os << "u(" << slots[l].sym.row << "," << slots[l].sym.col << ")";
        if (slots[l].starred) os << "*";
    }
    return os.str();
}

GeneratorAssignment default_assignment(int n) {
    GeneratorAssignment a;
    a.n = n;
    a.slots.resize(2 * n);
    for (int l = 1; l <= 2 * n; ++l) {
        GeneratorSlot s;
        s.sym = {2 * n, 2 * n + 1 - l};
        s.starred = false;
        s.sign = 1;
        a.slots[l - 1] = s;
    }
    if (n == 2) {
        // Orientation gauge (an automorphism of the relations) fixing the
        // circle-fiber closed forms t (x) q^N and t (x) q^N (x) q^{2N} with
        // positive sign.
        a.slots[1].sign = -1;
        a.slots[2].sign = -1;
    }
    return a;
}

QuotientRep eta(int k, int n, CircleMode mode, cplx t0, const GeneratorAssignment& assign_in) {
    if (k < 1 || k > 2 * n) throw std::invalid_argument("eta: k out of range");
    GeneratorAssignment assign = assign_in;
    if (assign.slots.empty()) assign = default_assignment(n);
    if (static_cast<int>(assign.slots.size()) != 2 * n)
        throw std::invalid_argument("eta: assignment arity mismatch");
    if (mode == CircleMode::Sampled && std::abs(std::abs(t0) - 1.0) > 1e-12)
        throw std::invalid_argument("eta: sample point must lie on the unit circle");

    RepMap plain = word_rep_plain(weyl_word(k, n), n);
    QuotientRep r;
    r.k = k;
    r.n = n;
    r.sig = plain.sig;
    if (mode == CircleMode::Bilateral) r.sig.insert(r.sig.begin(), Sort::Int);

    for (int l = 1; l <= 2 * n; ++l) {
        const GeneratorSlot& s = assign.slots[l - 1];
        if (s.sym.row != 1 && s.sym.row != 2 * n)
            throw std::invalid_argument("eta: assignment entry outside rows 1 and 2n");
        OperatorExpr X = plain.at(s.sym.row, s.sym.col);
        if (s.starred) X = adjoint(X);
        // The character contributes t through row 2n and conj(t) through row
        // 1; a star conjugates it.
        int circle_deg = (s.sym.row == 2 * n) ? 1 : -1;
        if (s.starred) circle_deg = -circle_deg;
        OperatorExpr img;
        if (mode == CircleMode::Bilateral) {
            OperatorExpr tpow = power_expr(Sort::Int, ShiftKind::Shift, circle_deg);
            img = tensor(tpow, X);
        } else {
            img = scale(X, circle_deg == 1 ? t0 : std::conj(t0));
        }
        img = scale(img, static_cast<double>(s.sign));
        r.images.push_back(normalize(img));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Dictionary search
// ---------------------------------------------------------------------------

namespace {

struct Candidate {
    MatrixSymbol sym;
    bool starred = false;
};

// Image expression of one candidate under the k = 2n quotient, bilateral
// circle.
OperatorExpr candidate_image(const RepMap& plain, const Candidate& c, int n) {
    OperatorExpr X = plain.at(c.sym.row, c.sym.col);
    if (c.starred) X = adjoint(X);
    int circle_deg = (c.sym.row == 2 * n) ? 1 : -1;
    if (c.starred) circle_deg = -circle_deg;
    return normalize(tensor(power_expr(Sort::Int, ShiftKind::Shift, circle_deg), X));
}

double frob_of(const TruncOp& x) {
    double s = 0.0;
    for (const auto& col : x.cols)
        for (const auto& [r, v] : col) s += std::norm(v);
    return std::sqrt(s);
}

}  // namespace

AssignmentSearchResult assignment_search(int n, int D, double q, double threshold) {
    if (n < 1 || D < 6) throw std::invalid_argument("assignment_search: need n >= 1 and D >= 6");
    const int N = 2 * n;

    // Slot 1 must satisfy the one-dimensional constraint z_1 -> t; the other
    // slots must vanish under it.  Any assignment violating it is rejected
    // outright, so those candidates are never enumerated.
    std::vector<std::vector<Candidate>> cands(N);
    cands[0].push_back({{N, N}, false});
    cands[0].push_back({{1, 1}, true});
    for (int l = 2; l <= N; ++l) {
        for (int row : {1, N}) {
            for (int col = 1; col <= N; ++col) {
                if (col == row) continue;
                cands[l - 1].push_back({{row, col}, false});
                cands[l - 1].push_back({{row, col}, true});
            }
        }
    }

    // Triangular sieve: the l-th generator dies in every quotient below its
    // own level, which is a per-slot symbol-level zero test.
    std::vector<RepMap> plains(N + 1);
    for (int k = 1; k <= N; ++k) plains[k] = word_rep_plain(weyl_word(k, n), n);
    for (int l = 2; l <= N; ++l) {
        std::vector<Candidate> kept;
        for (const auto& c : cands[l - 1]) {
            bool ok = true;
            for (int k = 2; k < l && ok; ++k) {
                if (!plains[k].at(c.sym.row, c.sym.col).is_zero()) ok = false;
            }
            if (ok) kept.push_back(c);
        }
        cands[l - 1] = std::move(kept);
        if (cands[l - 1].empty()) throw std::runtime_error("assignment_search: sieve emptied a slot");
    }

    // Candidates whose images agree under every quotient level name the same
    // algebra element (the quotient family is complete); keep one spelling.
    for (int l = 1; l <= N; ++l) {
        std::vector<Candidate> kept;
        std::vector<std::pair<int, std::vector<OperatorExpr>>> seen;
        for (const auto& c : cands[l - 1]) {
            int deg = (c.sym.row == N) ? 1 : -1;
            if (c.starred) deg = -deg;
            std::vector<OperatorExpr> imgs;
            for (int k = 1; k <= N; ++k) {
                OperatorExpr X = plains[k].at(c.sym.row, c.sym.col);
                if (c.starred) X = adjoint(X);
                imgs.push_back(normalize(X));
            }
            bool dup = false;
            for (const auto& [odeg, other] : seen) {
                if (odeg != deg) continue;
                bool same = true;
                for (int k = 0; k < N && same; ++k)
                    if (!symbol_equal(imgs[k], other[k], 1e-14)) same = false;
                if (same) {
                    dup = true;
                    break;
                }
            }
            if (!dup) {
                seen.push_back({deg, std::move(imgs)});
                kept.push_back(c);
            }
        }
        cands[l - 1] = std::move(kept);
    }

    long total = 1;
    for (const auto& cs : cands) total *= static_cast<long>(cs.size());
    if (total > 200000) throw std::runtime_error("assignment_search: candidate space too large");

    // Cheap ranking pass at a reduced truncation with Frobenius residuals of
    // the sign-free families; the survivors are rescored with true interior
    // operator norms at the requested truncation.
    const int Dc = std::min(D, 8);
    const int band = 3;
    auto build_images = [&](int dim) {
        SpaceSpec sp;
        sp.factors.push_back(int_factor(dim));
        for (int f = 0; f < N - 1; ++f) sp.factors.push_back(nat_factor(dim));
        std::vector<std::vector<TruncOp>> imgs(N);
        for (int l = 0; l < N; ++l)
            for (const auto& c : cands[l])
                imgs[l].push_back(materialize(candidate_image(plains[N], c, n), sp, q));
        return std::pair{sp, std::move(imgs)};
    };
    auto [spc, imgc] = build_images(Dc);

    std::vector<Relation> rels = build_presentation_sign_free(n);
    PresentationParams params = default_params(n);

    struct Pick {
        std::vector<int> choice;
        double score;
    };
    std::vector<Pick> ranked;
    std::vector<int> choice(N, 0);
    // Interior mask for the Frobenius pass.
    std::vector<bool> keep;
    {
        std::vector<long> pos;
        keep.assign(static_cast<size_t>(spc.dim()), true);
        for (long idx = 0; idx < spc.dim(); ++idx) {
            spc.positions_of(idx, pos);
            for (size_t f = 0; f < spc.factors.size(); ++f) {
                const Factor& fa = spc.factors[f];
                bool ok = fa.sort == Sort::Nat ? pos[f] <= fa.hi() - band
                                               : (pos[f] >= fa.lo() + band && pos[f] <= fa.hi() - band);
                if (!ok) {
                    keep[idx] = false;
                    break;
                }
            }
        }
    }
    std::map<std::tuple<int, int, bool, int, int, bool>, TruncOp> prodcache;
    auto product = [&](int slotA, int candA, bool starA, int slotB, int candB, bool starB) -> const TruncOp& {
        auto key = std::make_tuple(slotA * 1000 + candA, 0, starA, slotB * 1000 + candB, 0, starB);
        auto it = prodcache.find(key);
        if (it != prodcache.end()) return it->second;
        TruncOp A = starA ? adjoint_op(imgc[slotA][candA]) : imgc[slotA][candA];
        TruncOp B = starB ? adjoint_op(imgc[slotB][candB]) : imgc[slotB][candB];
        return prodcache.emplace(key, mul(A, B)).first->second;
    };

    while (true) {
        double worst = 0.0;
        for (const auto& rel : rels) {
            TruncOp acc = TruncOp::zero(spc);
            for (const auto& t : rel.terms) {
                double cv = term_coefficient(t, params, q);
                if (cv == 0.0) continue;
                if (t.mono.letters.empty()) {
                    TruncOp idm = TruncOp::identity(spc);
                    idm *= cv;
                    acc += idm;
                } else if (t.mono.letters.size() == 2) {
                    const auto& [la, sa] = t.mono.letters[0];
                    const auto& [lb, sb] = t.mono.letters[1];
                    TruncOp p = product(la - 1, choice[la - 1], sa, lb - 1, choice[lb - 1], sb);
                    p *= cv;
                    acc += p;
                } else {
                    throw std::logic_error("assignment_search: unexpected monomial length");
                }
            }
            worst = std::max(worst, frob_of(compress(acc, keep)));
            if (worst > 1e6) break;
        }
        ranked.push_back({choice, worst});
        int f = 0;
        for (; f < N; ++f) {
            if (++choice[f] < static_cast<int>(cands[f].size())) break;
            choice[f] = 0;
        }
        if (f == N) break;
    }

    std::sort(ranked.begin(), ranked.end(), [](const Pick& a, const Pick& b) { return a.score < b.score; });
    const size_t rescore = std::min<size_t>(ranked.size(), 8);

    AssignmentSearchResult out;
    out.candidates_scored = static_cast<int>(ranked.size());
    std::vector<Relation> full_rels = build_presentation_sign_free(n);
    for (size_t r = 0; r < rescore; ++r) {
        GeneratorAssignment a;
        a.n = n;
        for (int l = 0; l < N; ++l) {
            const Candidate& c = cands[l][ranked[r].choice[l]];
            a.slots.push_back({c.sym, c.starred, 1});
        }
        QuotientRep qr = eta(N, n, CircleMode::Bilateral, cplx(1, 0), a);
        SpaceSpec sp;
        sp.factors.push_back(int_factor(D));
        for (int f = 0; f < N - 1; ++f) sp.factors.push_back(nat_factor(D));
        std::vector<TruncOp> imgs;
        for (const auto& e : qr.images) imgs.push_back(materialize(e, sp, q));
        RelationEvaluator ev(std::move(imgs), q);
        double worst = 0.0;
        for (const auto& rel : full_rels) {
            worst = std::max(worst, ev.residual(rel, params, band));
            if (worst > 1e-3) break;  // hopeless; the value only feeds a gap check
        }
        out.table.push_back({a, worst});
    }
    std::sort(out.table.begin(), out.table.end(),
              [](const AssignmentScore& a, const AssignmentScore& b) { return a.residual < b.residual; });
    out.winner = out.table.front();
    out.runner_up = out.table.size() > 1 ? out.table[1] : out.table.front();
    out.ok = out.winner.residual <= threshold;
    return out;
}

}  // namespace qqs

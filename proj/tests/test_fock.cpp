#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "qqs/fock.hpp"

#include <cmath>
#include <random>

using namespace qqs;

namespace {

SpaceSpec nat_space(int d, int copies = 1) {
    SpaceSpec s;
    for (int i = 0; i < copies; ++i) s.factors.push_back(nat_factor(d));
    return s;
}

// Deterministic random expression on a single Nat factor: short words over
// the primitive letters with small integer coefficients.
OperatorExpr random_expr(std::mt19937& rng, int max_terms = 3, int max_letters = 3) {
    std::uniform_int_distribution<int> nt(1, max_terms), nl(1, max_letters), pick(0, 5),
        coef(-2, 2), idx(0, 2);
    OperatorExpr e = OperatorExpr::zero({Sort::Nat});
    int terms = nt(rng);
    for (int t = 0; t < terms; ++t) {
        OperatorExpr w = prim_id(Sort::Nat);
        int letters = nl(rng);
        for (int l = 0; l < letters; ++l) {
            OperatorExpr p;
            switch (pick(rng)) {
                case 0: p = prim_shift(Sort::Nat); break;
                case 1: p = prim_coshift(Sort::Nat); break;
                case 2: p = prim_proj(Sort::Nat, idx(rng)); break;
                case 3: p = prim_diag(Sort::Nat, qpow(1, idx(rng))); break;
                case 4: p = prim_diag(Sort::Nat, sq1m(2, 2 * idx(rng) + 2)); break;
                default: p = prim_id(Sort::Nat); break;
            }
            w = compose(w, p);
        }
        e = add(e, scale(w, cplx(coef(rng), 0)));
    }
    return e;
}

double max_entry_diff(const TruncOp& a, const TruncOp& b) {
    TruncOp d = sub(a, b);
    return d.max_abs_entry();
}

}  // namespace

TEST_CASE("shift matrix on NatTrunc(3)") {
    SpaceSpec sp = nat_space(3);
    TruncOp m = materialize(prim_shift(Sort::Nat), sp, 0.5);
    CHECK(m.entry(0, 1) == cplx(1, 0));
    CHECK(m.entry(1, 2) == cplx(1, 0));
    CHECK(m.nnz() == 2);
}

TEST_CASE("q^N at q=0 is the rank-one projection p_0") {
    SpaceSpec sp = nat_space(3);
    for (int a = 1; a <= 3; ++a) {
        TruncOp m = materialize(prim_diag(Sort::Nat, qpow(a, 0)), sp, 0.0);
        TruncOp p = materialize(prim_proj(Sort::Nat, 0), sp, 0.0);
        CHECK(max_entry_diff(m, p) == 0.0);
    }
}

TEST_CASE("weighted shift sqrt(1-q^{2N+2})S on NatTrunc(4)") {
    SpaceSpec sp = nat_space(4);
    OperatorExpr w = compose(prim_diag(Sort::Nat, sq1m(2, 2)), prim_shift(Sort::Nat));
    TruncOp m = materialize(w, sp, 0.5);
    // Weight evaluated at the row index: entry (n, n+1) = sqrt(1-q^{2n+2}).
    for (long n = 0; n <= 2; ++n) {
        double expect = std::sqrt(1.0 - std::pow(0.5, 2 * n + 2));
        CHECK(std::abs(m.entry(n, n + 1) - cplx(expect, 0)) < 1e-15);
    }
    CHECK(m.nnz() == 3);
}

TEST_CASE("power() handles negative exponents through the adjoint") {
    CHECK(power(ShiftKind::CoShift, 0).is_identity());
    CHECK(power(ShiftKind::CoShift, -2) == power(ShiftKind::Shift, 2));
    // S^3 on NatTrunc(5) equals the cube of the shift matrix.
    SpaceSpec sp = nat_space(5);
    TruncOp s = materialize(prim_shift(Sort::Nat), sp, 0.3);
    TruncOp s3 = mul(mul(s, s), s);
    TruncOp p3 = materialize(power_expr(Sort::Nat, ShiftKind::Shift, 3), sp, 0.3);
    CHECK(max_entry_diff(s3, p3) == 0.0);
}

TEST_CASE("adjoint of the shift is the co-shift") {
    CHECK(symbol_equal(adjoint(prim_shift(Sort::Nat)), prim_coshift(Sort::Nat)));
    CHECK(symbol_equal(adjoint(prim_coshift(Sort::Int)), prim_shift(Sort::Int)));
}

TEST_CASE("S S* = 1 exactly at symbol level; matrix defect sits at the top index") {
    OperatorExpr ss = compose(prim_shift(Sort::Nat), prim_coshift(Sort::Nat));
    CHECK(symbol_equal(normalize(ss), prim_id(Sort::Nat)));
    for (int d : {4, 7}) {
        SpaceSpec sp = nat_space(d);
        TruncOp m = materialize(ss, sp, 0.5);
        TruncOp expect = sub(TruncOp::identity(sp), materialize(prim_proj(Sort::Nat, d - 1), sp, 0.5));
        CHECK(max_entry_diff(m, expect) == 0.0);
        TruncOp defect = sub(m, TruncOp::identity(sp));
        CHECK(interior_residual(defect, 1) == 0.0);
        CHECK(interior_residual(defect, 0) == doctest::Approx(1.0));
    }
}

TEST_CASE("S* S = 1 - p_0 exactly, all truncations") {
    OperatorExpr sstar_s = compose(prim_coshift(Sort::Nat), prim_shift(Sort::Nat));
    OperatorExpr expect = sub(prim_id(Sort::Nat), prim_proj(Sort::Nat, 0));
    CHECK(symbol_equal(normalize(sstar_s), normalize(expect)));
    SpaceSpec sp = nat_space(4);
    CHECK(max_entry_diff(materialize(sstar_s, sp, 0.5), materialize(expect, sp, 0.5)) == 0.0);
}

TEST_CASE("bilateral shifts are unitary at symbol level") {
    OperatorExpr ss = compose(prim_shift(Sort::Int), prim_coshift(Sort::Int));
    OperatorExpr s2 = compose(prim_coshift(Sort::Int), prim_shift(Sort::Int));
    CHECK(symbol_equal(normalize(ss), prim_id(Sort::Int)));
    CHECK(symbol_equal(normalize(s2), prim_id(Sort::Int)));
}

TEST_CASE("materialize is an exact homomorphism for composition and addition") {
    std::mt19937 rng(20240811);
    SpaceSpec sp = nat_space(4);
    for (int trial = 0; trial < 40; ++trial) {
        OperatorExpr a = random_expr(rng), b = random_expr(rng);
        TruncOp lhs = materialize(compose(a, b), sp, 0.6);
        TruncOp rhs = mul(materialize(a, sp, 0.6), materialize(b, sp, 0.6));
        CHECK(max_entry_diff(lhs, rhs) < 1e-13);
        TruncOp ls = materialize(add(a, b), sp, 0.6);
        TruncOp rs = add(materialize(a, sp, 0.6), materialize(b, sp, 0.6));
        CHECK(max_entry_diff(ls, rs) == 0.0);
    }
}

TEST_CASE("normalization respects the operators: normalized form materializes identically on the interior") {
    std::mt19937 rng(77);
    SpaceSpec sp = nat_space(6);
    for (int trial = 0; trial < 40; ++trial) {
        OperatorExpr a = random_expr(rng, 2, 4);
        TruncOp raw = materialize(a, sp, 0.4);
        TruncOp canon = materialize(normalize(a), sp, 0.4);
        // The l2 rewrites only move truncation defects near the top index.
        CHECK(interior_residual(sub(raw, canon), 4) < 1e-12);
    }
}

TEST_CASE("*-algebra laws on random small expressions") {
    std::mt19937 rng(99);
    SpaceSpec sp = nat_space(4);
    for (int trial = 0; trial < 30; ++trial) {
        OperatorExpr a = random_expr(rng), b = random_expr(rng), c = random_expr(rng);
        TruncOp A = materialize(a, sp, 0.5), B = materialize(b, sp, 0.5), C = materialize(c, sp, 0.5);
        CHECK(max_entry_diff(mul(mul(A, B), C), mul(A, mul(B, C))) < 1e-12);
        CHECK(max_entry_diff(mul(A, add(B, C)), add(mul(A, B), mul(A, C))) < 1e-12);
        CHECK(max_entry_diff(adjoint_op(mul(A, B)), mul(adjoint_op(B), adjoint_op(A))) < 1e-12);
        // Symbol level: adjoint is an involution and anti-multiplicative.
        CHECK(symbol_equal(normalize(adjoint(adjoint(a))), normalize(a), 1e-12));
        CHECK(symbol_equal(normalize(adjoint(compose(a, b))),
                           normalize(compose(adjoint(b), adjoint(a))), 1e-12));
    }
}

TEST_CASE("op_norm basics") {
    SpaceSpec sp = nat_space(8);
    CHECK(op_norm(TruncOp::zero(sp)) == 0.0);
    CHECK(op_norm(materialize(prim_shift(Sort::Nat), sp, 0.5)) == doctest::Approx(1.0).epsilon(1e-9));
    SpaceSpec sp6 = nat_space(6);
    TruncOp d = materialize(prim_diag(Sort::Nat, qpow(1, 0)), sp6, 0.5);
    CHECK(op_norm(d) == doctest::Approx(1.0).epsilon(1e-9));  // attained at n=0
}

TEST_CASE("interior_residual preconditions and zero case") {
    SpaceSpec sp = nat_space(6);
    CHECK(interior_residual(TruncOp::zero(sp), 2) == 0.0);
    CHECK_THROWS_AS(interior_residual(TruncOp::zero(sp), 6), std::invalid_argument);
}

TEST_CASE("ess_norm_est on diagonal tails") {
    SpaceSpec sp = nat_space(10);
    TruncOp x = materialize(prim_diag(Sort::Nat, qpow(2, 0)), sp, 0.5);
    CHECK(ess_norm_est(x, 3, {0}) == doctest::Approx(std::pow(0.5, 6)).epsilon(1e-10));
    TruncOp id = TruncOp::identity(sp);
    for (long m : {0L, 2L, 5L, 9L}) CHECK(ess_norm_est(id, m, {0}) == doctest::Approx(1.0));
    SpaceSpec sp40 = nat_space(40);
    TruncOp y = materialize(prim_diag(Sort::Nat, sq1m(2, 0)), sp40, 0.5);
    CHECK(std::abs(ess_norm_est(y, 2, {0}) - 1.0) < 1e-2);
    // Monotone non-increasing in M, up to the norm estimator accuracy.
    double prev = 1e300;
    for (long m = 0; m < 40; m += 5) {
        double v = ess_norm_est(y, m, {0});
        CHECK(v <= prev + 2e-9);
        prev = v;
    }
}

TEST_CASE("canonical text form is stable") {
    OperatorExpr w = compose(prim_diag(Sort::Nat, sq1m(2, 2)), prim_shift(Sort::Nat));
    CHECK(to_text(normalize(w)) == "1 * sqrt(1-q^{2N+2}) S@1");
    OperatorExpr two = scale(prim_proj(Sort::Nat, 1), cplx(2, 0));
    CHECK(to_text(normalize(two)) == "2 * p_1@1");
    CHECK(to_text(normalize(sub(w, w))) == "0");
}

TEST_CASE("tensor factors and row-major enumeration") {
    SpaceSpec sp;
    sp.factors = {nat_factor(2), int_factor(2)};
    CHECK(sp.dim() == 2 * 5);
    CHECK(sp.index_of({0, -2}) == 0);
    CHECK(sp.index_of({1, 2}) == 9);
    OperatorExpr e = tensor(prim_proj(Sort::Nat, 1), prim_shift(Sort::Int));
    TruncOp m = materialize(e, sp, 0.5);
    // p_1 (x) S : e_{1,k} -> e_{1,k-1}
    CHECK(m.entry(sp.index_of({1, 0}), sp.index_of({1, 1})) == cplx(1, 0));
    CHECK(m.entry(sp.index_of({0, 0}), sp.index_of({0, 1})) == cplx(0, 0));
    CHECK(m.nnz() == 4);
}

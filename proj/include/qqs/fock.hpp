/*
 * fock.hpp -- symbolic operator expressions on truncated sequence spaces.
 *
 * Operators live on tensor products of truncated copies of l2(N) and l2(Z).
 * An expression is a finite sum of terms; each term is a complex coefficient
 * (times an integer power of the deformation parameter q) tensored over one
 * word per factor.  Words are products of shift letters S, S* and diagonal
 * functions of the number operator: q^{aN+b} and sqrt(1-q^{aN+b}), plus the
 * rank-one projections p_i.
 *
 * Composition is a strict homomorphism down to the truncated matrices: a word
 * stores its multiplicative segments unreduced, so materialize(a*b) equals
 * materialize(a)*materialize(b) entry for entry.  normalize() rewrites words
 * to the canonical single-segment form using the exact l2 identities
 * S S* = 1 and S* S = 1 - p_0 (both sides unitary on l2(Z)); those rewrites
 * move truncation defects, which is why relation checks compare interior
 * compressions rather than full matrices.
 */
#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qqs {

using cplx = std::complex<double>;

inline constexpr double kPruneTol = 1e-15;

enum class Sort : std::uint8_t { Nat, Int };

// One tensor factor.  Nat(D) carries the basis e_0..e_{D-1}; Int(D) carries
// e_{-D}..e_D.  The left shift S sends e_n to e_{n-1} and annihilates the
// lowest basis vector; S* is its truncated adjoint.
struct Factor {
    Sort sort = Sort::Nat;
    int dim = 2;  // Nat: D >= 2.  Int: radius D >= 2.

    long lo() const { return sort == Sort::Nat ? 0 : -static_cast<long>(dim); }
    long hi() const { return static_cast<long>(dim) - (sort == Sort::Nat ? 1 : 0); }
    long size() const { return hi() - lo() + 1; }
    bool operator==(const Factor&) const = default;
};

Factor nat_factor(int dim);
Factor int_factor(int dim);

// Ordered factor list with a fixed row-major basis enumeration (first factor
// slowest).  The empty list is the scalar space C.
struct SpaceSpec {
    std::vector<Factor> factors;

    long dim() const;
    std::vector<Sort> signature() const;
    long index_of(const std::vector<long>& pos) const;
    void positions_of(long idx, std::vector<long>& pos) const;
    bool operator==(const SpaceSpec&) const = default;
};

// Named diagonal function of the number operator.
//   QPow:  n -> q^{a n + b}
//   Sq1m:  n -> sqrt(1 - q^{a n + b})
// The convention 0^0 = 1 is used throughout so q^N degenerates to p_0 at
// q = 0.  Arguments a n + b < 0 evaluate to 0: they only arise at basis
// indices whose contribution is annihilated by the co-factors of the word.
struct DiagAtom {
    enum class Fn : std::uint8_t { QPow, Sq1m };
    Fn fn = Fn::QPow;
    int a = 0;
    int b = 0;

    double eval(long n, double q) const;
    DiagAtom shifted(long d) const { return {fn, a, b + a * static_cast<int>(d)}; }
    auto operator<=>(const DiagAtom&) const = default;
};

inline DiagAtom qpow(int a, int b) { return {DiagAtom::Fn::QPow, a, b}; }
inline DiagAtom sq1m(int a, int b) { return {DiagAtom::Fn::Sq1m, a, b}; }

// q^e with the 0^0 = 1 convention; e < 0 at q = 0 evaluates to 0 (masked,
// see DiagAtom).
double qpow_val(double q, long e);

// One multiplicative segment on a single factor:
//   (product of atoms) . (optional p_proj) . S^shift
// with shift > 0 a power of S and shift < 0 a power of S*.  The shift acts
// first; diagonal weights are evaluated at the target (row) index, so the
// matrix has entry (n-shift, n) for every admissible column n.
struct Seg {
    std::vector<DiagAtom> atoms;
    std::optional<long> proj;
    long shift = 0;

    bool is_identity() const { return atoms.empty() && !proj && shift == 0; }
    bool operator==(const Seg&) const = default;
};

// A word on one factor: operator product of segments, segs.front() applied
// last.  Normalized words have at most one segment.
struct Word {
    std::vector<Seg> segs;

    static Word identity() { return {}; }
    static Word of(Seg s);
    bool is_identity() const { return segs.empty(); }
    bool operator==(const Word&) const = default;
};

struct Term {
    cplx coeff{1.0, 0.0};
    int qexp = 0;  // scalar factor q^qexp
    std::vector<Word> words;
};

// Formal sum of elementary tensor terms over a fixed factor signature.
struct OperatorExpr {
    std::vector<Sort> sig;
    std::vector<Term> terms;

    static OperatorExpr zero(std::vector<Sort> sig) { return {std::move(sig), {}}; }
    static OperatorExpr identity(std::vector<Sort> sig);
    // Scalar expression (empty signature).
    static OperatorExpr scalar(cplx c);
    // Single-factor expression from one segment.
    static OperatorExpr single(Sort sort, Seg seg, cplx coeff = 1.0);

    bool is_zero() const { return terms.empty(); }
};

// Single-factor primitives.
OperatorExpr prim_shift(Sort sort);     // S : e_n -> e_{n-1}
OperatorExpr prim_coshift(Sort sort);   // S*: e_n -> e_{n+1}
OperatorExpr prim_proj(Sort sort, long i);
OperatorExpr prim_diag(Sort sort, DiagAtom atom);
OperatorExpr prim_id(Sort sort);

enum class ShiftKind { Shift, CoShift };
// m-fold power with the convention that a negative power of one shift is the
// corresponding power of the other: power(CoShift, -2) = S^2.
Word power(ShiftKind kind, long m);
OperatorExpr power_expr(Sort sort, ShiftKind kind, long m);

// Algebra.  All operations check signature compatibility.
OperatorExpr add(const OperatorExpr& a, const OperatorExpr& b);
OperatorExpr sub(const OperatorExpr& a, const OperatorExpr& b);
OperatorExpr scale(const OperatorExpr& a, cplx c, int qexp = 0);
OperatorExpr compose(const OperatorExpr& a, const OperatorExpr& b);  // a.b, b acts first
OperatorExpr tensor(const OperatorExpr& a, const OperatorExpr& b);
OperatorExpr adjoint(const OperatorExpr& a);

// Canonical form: every word a single segment, QPow constants migrated into
// the term's q-exponent, duplicate sq1m atoms expanded via sq1m^2 = 1 - q^{.},
// like terms collected, terms sorted.  The rewrite system is confluent on the
// supported words; two expressions are equal as operators on the untruncated
// spaces iff their normal forms coincide.
OperatorExpr normalize(const OperatorExpr& a);

// Max coefficient magnitude of normalize(a - b); 0 for symbolically equal
// expressions.
double symbol_distance(const OperatorExpr& a, const OperatorExpr& b);
bool symbol_equal(const OperatorExpr& a, const OperatorExpr& b, double tol = 0.0);

// Canonical text form, stable across runs.
std::string to_text(const OperatorExpr& a);
std::string to_text(const Word& w);

// Sparse matrix on a truncated space, column-compressed.  Every stored column
// is sorted by row and pruned at kPruneTol.
struct TruncOp {
    SpaceSpec space;
    std::vector<std::vector<std::pair<long, cplx>>> cols;

    static TruncOp zero(SpaceSpec space);
    static TruncOp identity(SpaceSpec space);

    long dim() const { return static_cast<long>(cols.size()); }
    long nnz() const;
    cplx entry(long row, long col) const;
    void set_entry(long row, long col, cplx v);

    TruncOp& operator+=(const TruncOp& o);
    TruncOp& operator-=(const TruncOp& o);
    TruncOp& operator*=(cplx c);

    void matvec(const std::vector<cplx>& x, std::vector<cplx>& y) const;
    void adj_matvec(const std::vector<cplx>& x, std::vector<cplx>& y) const;

    double max_abs_entry() const;
};

TruncOp add(const TruncOp& a, const TruncOp& b);
TruncOp sub(const TruncOp& a, const TruncOp& b);
TruncOp mul(const TruncOp& a, const TruncOp& b);  // a*b, b acts first
TruncOp adjoint_op(const TruncOp& a);
// Zeroes every row and column outside the kept index set.
TruncOp compress(const TruncOp& a, const std::vector<bool>& keep);

// Sparse materialization.  Linear in the expression and an exact homomorphism
// for composition and addition: truncation effects live inside the letters'
// action, never in the assembly.
TruncOp materialize(const OperatorExpr& e, const SpaceSpec& space, double q);

// Largest singular value via power iteration on x*x with the deterministic
// all-ones start vector, relative accuracy 1e-10.
double op_norm(const TruncOp& x);

// Norm of the compression to interior basis vectors: Nat indices in
// [0, D-1-band], Int indices in [-D+band, D-band].  Truncation defects of
// banded words live inside the discarded shell.
double interior_residual(const TruncOp& x, int band);

// Norm of the compression to basis vectors with index >= M in every selected
// NatTrunc factor; a finite-scale probe of the essential norm.  Monotone
// non-increasing in M.
double ess_norm_est(const TruncOp& x, long M, const std::vector<int>& factor_set);

}  // namespace qqs

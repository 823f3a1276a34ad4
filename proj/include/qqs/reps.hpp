/*
 * reps.hpp -- representation engine for the quantum symplectic group and the
 * quantum quaternion sphere.
 *
 * Builds the elementary representations pi_{s_i} of C(SP_q(2n)) as symbol
 * tables over one truncated copy of l2(N), the torus characters tau_t, and
 * their convolution products (phi * psi)(u^i_j) = sum_k phi(u^i_k) (x)
 * psi(u^k_j) coming from the corepresentation coproduct.  Composing a fixed
 * Weyl word with a generator dictionary yields the quotient representations
 * of the quaternion sphere algebra; the circle parameter is either sampled on
 * the unit circle or realized as the bilateral shift on a leading l2(Z)
 * factor.
 */
#pragma once

#include "qqs/fock.hpp"

#include <array>
#include <string>
#include <vector>

namespace qqs {

// Fundamental-matrix entry u^row_col, 1-based indices in 1..2n.
struct MatrixSymbol {
    int row = 1;
    int col = 1;
    auto operator<=>(const MatrixSymbol&) const = default;
};

// Total symbol table u^i_j -> OperatorExpr over a fixed factor signature.
// A scalar table (empty signature) models the torus characters.
struct RepMap {
    int n = 1;  // rank; the table is (2n)x(2n)
    std::vector<Sort> sig;
    std::vector<OperatorExpr> table;  // row-major, (i-1)*2n + (j-1)

    const OperatorExpr& at(int i, int j) const { return table[(i - 1) * 2 * n + (j - 1)]; }
    OperatorExpr& at(int i, int j) { return table[(i - 1) * 2 * n + (j - 1)]; }
};

// Elementary representation pi_{s_i}, acting on one NatTrunc factor.  The
// non-delta entries sit in the {i, i+1} and {2n-i, 2n-i+1} blocks; for i = n
// the two blocks coincide in the middle.
RepMap elementary_rep(int i, int n);

// Torus character tau_t, t in T^n: u^i_j -> conj(t_i) delta_ij for i <= n and
// t_{2n+1-i} delta_ij for i > n.  Entries must be unimodular.
RepMap torus_char(const std::vector<cplx>& t, int n);

// Convolution through the coproduct; scalar factors are absorbed.  Results
// are normalized before they are returned.
RepMap convolve(const RepMap& phi, const RepMap& psi);

// Weyl word for the k-th quotient: empty for k = 1, s_1..s_{k-1} for
// 2 <= k <= n, and s_1..s_{n-1} s_n s_{n-1}..s_{2n-k+1} for n < k <= 2n.
struct WeylWord {
    std::vector<int> letters;
};
WeylWord weyl_word(int k, int n);

// tau_t * pi_{s_{i_1}} * ... * pi_{s_{i_m}}; one NatTrunc factor per letter.
RepMap word_rep(const WeylWord& w, const std::vector<cplx>& t, int n);
// Convolution of the elementary representations only (no character).
RepMap word_rep_plain(const WeylWord& w, int n);

// Dictionary identifying the sphere generators z_1..z_{2n} with entries of
// the first or last row of the fundamental matrix, possibly starred, with an
// orientation sign.  The sign is an automorphism degree of freedom fixed so
// the circle-fiber closed forms of the quotient generators are positively
// oriented.
struct GeneratorSlot {
    MatrixSymbol sym;
    bool starred = false;
    int sign = 1;
};
struct GeneratorAssignment {
    int n = 1;
    std::vector<GeneratorSlot> slots;  // index l-1 holds z_l

    std::string to_string() const;
};

// The calibrated default dictionary: z_l = sign_l * u^{2n}_{2n+1-l}.
GeneratorAssignment default_assignment(int n);

enum class CircleMode { Bilateral, Sampled };

// Images of z_1..z_{2n} under the k-th quotient representation.  In
// bilateral mode the circle coordinate acts as the bilateral shift on a
// leading IntTrunc factor, so the signature is Int (x) Nat^{k-1}; in sampled
// mode the scalar t0 is substituted and the signature is Nat^{k-1}.
struct QuotientRep {
    int k = 1;
    int n = 1;
    std::vector<Sort> sig;
    std::vector<OperatorExpr> images;  // size 2n, normalized
};
QuotientRep eta(int k, int n, CircleMode mode, cplx t0 = cplx(1, 0),
                const GeneratorAssignment& assign = {});

// Search data: one scored dictionary.
struct AssignmentScore {
    GeneratorAssignment assignment;
    double residual = 0.0;  // max interior relation residual, sign-free families
};

struct AssignmentSearchResult {
    AssignmentScore winner;
    AssignmentScore runner_up;
    bool ok = false;           // winner residual <= threshold
    int candidates_scored = 0;
    std::vector<AssignmentScore> table;  // all fully scored candidates, best first
};

// Exhaustive search over row-1/row-2n entries and their adjoints (sign-free),
// hard-constrained by the one-dimensional representations and by the
// triangularity of the quotient images, scored by the total interior residual
// of the sign-independent relation families under the k = 2n images.
AssignmentSearchResult assignment_search(int n, int D, double q, double threshold = 1e-8);

}  // namespace qqs

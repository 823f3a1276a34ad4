/*
 * index.hpp -- Fredholm index pairing for the circle-valued unitary of the
 * odd sphere against the Toeplitz-type representations.
 *
 * The representation theta_m sends the last sphere generator to
 * p^(x)l (x) (S*)^m on Nat^l (x) Int(Z); P projects onto the nonnegative
 * bilateral indices; R_m is the compression P theta_m(u) P of the canonical
 * unitary u = p^(x)l (x) t + 1 - p^(x)l (x) 1.  The stabilized difference of
 * kernel dimensions across a truncation ladder computes the index pairing.
 */
#pragma once

#include "qqs/fock.hpp"

#include <string>
#include <vector>

namespace qqs {

struct ThetaRep {
    int m = 0;
    int ell = 1;
    std::vector<Sort> sig;             // Nat^ell, Int
    std::vector<OperatorExpr> images;  // ell + 1 generator images
};
ThetaRep theta_rep(int m, int ell);

// The canonical unitary generating the odd K_1 class.
OperatorExpr u_generator(int ell);
// Its theta_m image, assembled by generator substitution.
OperatorExpr theta_u(int m, int ell);

// The compression R_m on the nonnegative-index corner, reindexed onto
// Nat(D)^ell (x) Nat(D+1).
TruncOp compress_Rm(int m, int ell, int D);

struct KernelCounts {
    long ker = 0;
    long coker = 0;
    long ker_discarded = 0;    // boundary-band artifacts
    long coker_discarded = 0;
};

// Kernel and cokernel dimensions by singular-value thresholding at rank_tol,
// computed blockwise over the connected components of the nonzero pattern.
// Null vectors with at least 99% of their mass within two indices of a
// truncation edge are discarded as boundary artifacts.  Throws on a singular
// value inside the ambiguity guard (rank_tol, 10 rank_tol].
KernelCounts kernel_counts(const TruncOp& a, double rank_tol);

struct IndexRung {
    int D = 0;
    long ker = 0;
    long coker = 0;
};

struct IndexResult {
    int m = 0;
    int ell = 0;
    std::vector<IndexRung> rungs;
    bool stabilized = false;
    long index = 0;    // ker - coker at the stabilized rung
    int sigma = 0;     // frozen global orientation
    long pairing = 0;  // sigma * index
    std::string error;
};

// Runs the ladder, checks stabilization over >= 3 consecutive rungs, and
// applies the frozen orientation sign.
IndexResult index_pairing(int m, int ell, const std::vector<int>& ladder,
                          double rank_tol = 1e-8);

// Signed winding count of the symbol carried by the p-block of R_m, computed
// combinatorially from the shift power without floating point.
long winding_oracle(int m);

// Global orientation: calibrated once so that pairing(1) = +1 at ell = 1,
// then frozen for every other (m, ell).
int sigma_global();

}  // namespace qqs

/*
 * spheres.hpp -- concrete odd-sphere generators at q = 0, the quantum double
 * suspension, the Busby images phi_m of the circle-fibered extensions, the
 * middle algebras A_m, the symbol quotient that collapses the last Toeplitz
 * factor, and the homogeneity probes for the extension
 *   0 -> C(T) (x) K -> C_{k+1} -> C_k -> 0.
 *
 * The circle coordinate t always materializes as the bilateral left shift
 * e_j -> e_{j-1} on an IntTrunc factor.
 */
#pragma once

#include "qqs/fock.hpp"
#include "qqs/reps.hpp"

#include <string>
#include <vector>

namespace qqs {

// Circle coordinate on one IntTrunc factor.
OperatorExpr circle_coordinate();

// Generators of C(S^{2l+1}) at q = 0 on Nat^l (x) Int:
//   g_r     = p^{(x)(r-1)} (x) S* (x) 1...   for r <= l
//   g_{l+1} = p^{(x)l} (x) t
struct SphereGenerators {
    int ell = 0;
    std::vector<Sort> sig;
    std::vector<OperatorExpr> ops;
};
SphereGenerators sphere_generators(int ell);
SpaceSpec sphere_space(int ell, int D);

// Quantum double suspension on a generator family: {g (x) p} plus {1 (x) S}
// on a fresh trailing NatTrunc factor.
std::vector<OperatorExpr> qds(const std::vector<OperatorExpr>& gens);

// Reverses the tensor factor order of an expression.
OperatorExpr reverse_factors(const OperatorExpr& e);

// The declared reconciliation between a suspension tower and the sphere
// list: reverse the factors, reverse the generator order, and take adjoints
// of the Nat-shift generators (the circle generator is kept as is).
std::vector<OperatorExpr> tower_to_sphere_form(const std::vector<OperatorExpr>& tower);

struct QdsCheckReport {
    int ell = 0;
    bool pass = false;
    double max_deviation = 0.0;
};
// qds iterated ell times on [t] against sphere_generators(ell), entrywise at
// truncation D; apply_reversal = false is the negative control.
QdsCheckReport qds_check(int ell, int D, bool apply_reversal = true);

// Busby images of the sphere generators for the m-th extension class: the
// first l generators extend by identity factors, the last one maps to
// p^{(x)l} (x) (S*)^m (x) 1 on Nat^{l+1} (x) Int.
std::vector<OperatorExpr> phi_m_images(int m, int ell);

// Generator list of the middle algebra A_m inside C(S^{2l+3}): the phi_m
// images together with a marker generating the ideal K (x) C(T).
struct AmGenerators {
    int m = 0;
    int ell = 0;
    std::vector<Sort> sig;
    std::vector<OperatorExpr> ops;  // ell + 2 expressions
};
AmGenerators am_generators(int m, int ell);

// Symbol quotient on the last tensor factor: S, S* -> 1, projections -> 0,
// diagonals -> their limit (q-powers -> 0, sq1m -> 1).  Defined on normalized
// expressions.
OperatorExpr symbol_quotient(const OperatorExpr& e);

struct SigmaCheckReport {
    int k = 0;
    bool exact_symbol = false;
    double symbol_deviation = 0.0;   // max coefficient of the normalized difference
    double numeric_deviation = 0.0;  // interior deviation at the given D (fallback)
    bool pass = false;
};
// Compares sigma(y^{k+1}_l) with y^k_l for all l: exact symbol equality is
// expected, with a numeric interior fallback at tolerance 1e-9.
SigmaCheckReport sigma_check(int k, int n, double q, int D,
                             const GeneratorAssignment& assign = {});

struct HomogeneityReport {
    int k = 0;
    int n = 0;
    double q = 0.0;
    int D = 0;
    std::vector<double> t0_angles;       // sample points exp(i theta)
    std::vector<long> M_grid;
    // values[s][m]: essential-norm estimate of the tau_{t0}-image of
    // y_k y_k* at tail cutoff M_grid[m].
    std::vector<std::vector<double>> values;
    std::vector<double> circle_probe;    // per sample: the p (x) .. (x) f(S*) probe
    double target_lo = 0.95, target_hi = 1.0;
    bool monotone = false;
    bool converged = false;
    bool pass = false;
};
// Evaluates the k-th circle fiber at the sampled points: the tau_{t0}-image
// of y_k y_k* must carry essential norm 1 (probed through last-factor tail
// compressions), and the circle direction p^{(x)(k-1)} (x) sqrt(1-q^{2N})S*
// must stay uniformly bounded below.
HomogeneityReport homogeneity_probe(int k, int n, double q, int D, int t0_samples,
                                    const std::vector<long>& M_grid,
                                    const GeneratorAssignment& assign = {});

}  // namespace qqs

/*
 * relations.hpp -- the defining relations of the quantum quaternion sphere
 * algebra as noncommutative polynomials, residual evaluation under a
 * representation, the q = 0 degeneration, and the comparison against the
 * odd-sphere presentation.
 *
 * Relation families (z_1..z_2n, i' = 2n+1-i):
 *   c1: z_i z_j       = q z_j z_i                            i > j, i+j != 2n+1
 *   c2: z_i z_{i'}    = q^2 z_{i'} z_i
 *                       - (1-q^2) sum_{k>i} q^{i-k} z_k z_{k'}          i > n
 *   c3: z_i* z_{i'}   = q^2 z_{i'} z_i*
 *   c4: z_i* z_j      = q z_j z_i*                        i+j > 2n+1, i != j
 *   c5: z_i* z_j      = q z_j z_i*
 *                       + (1-q^2) eps_i eps_j q^{rho_i+rho_j} z_{i'} z_{j'}*
 *                                                          i+j < 2n+1, i != j
 *   c6: z_i* z_i      = z_i z_i* + (1-q^2) sum_{k>i} z_k z_k*           i > n
 *   c7: z_i* z_i      = z_i z_i* + (1-q^2) q^{2 rho_i} z_{i'} z_{i'}*
 *                       + (1-q^2) sum_{k>i} z_k z_k*                   i <= n
 *   c8: sum_i z_i z_i* = 1
 *
 * The integer weights rho_i and the signs eps_i are free parameters with a
 * calibrated default; see calibrate_rho_eps.
 */
#pragma once

#include "qqs/fock.hpp"

#include <map>
#include <string>
#include <vector>

namespace qqs {

struct PresentationParams {
    int n = 1;
    std::vector<int> rho;  // 1-based semantics: rho[i-1]
    std::vector<int> eps;  // entries +-1

    int prime(int i) const { return 2 * n + 1 - i; }
};

// Calibrated defaults: rho_i = n-i+1 for i <= n, n-i for i > n (so
// rho_i + rho_{i'} = 0) and eps_i = +1 for i <= n, -1 for i > n.
PresentationParams default_params(int n);

// Word in the letters z_l / z_l*; (index, starred), index 1-based.
struct Monomial {
    std::vector<std::pair<int, bool>> letters;
};

// One summand: r * q^{qc} * (1-q^2)^{omq} * [rho/eps factors] * monomial.
// The polynomial of a relation is the sum of its terms, set equal to zero.
struct RelTerm {
    double r = 1.0;
    int qc = 0;
    int omq = 0;  // power of (1-q^2)
    enum class Rho { None, SumIJ, TwoI } rho = Rho::None;
    bool eps_ij = false;
    Monomial mono;  // empty = constant 1
};

struct Relation {
    std::string id;  // c1..c8
    int i = 0;       // index tuple; 0 = unused
    int j = 0;
    std::vector<RelTerm> terms;
};

// The full presentation for the given parameters, one Relation per admissible
// index tuple per family.
std::vector<Relation> build_presentation(const PresentationParams& params);

// Only the families whose coefficients do not involve rho/eps
// (c1, c2, c3, c4, c6, c8); used while those parameters are being calibrated.
std::vector<Relation> build_presentation_sign_free(int n);

// Numeric coefficient of a term at the given q.  Negative q-exponents are
// rejected at q = 0 (the q = 0 system is produced by q_zero_presentation
// instead).
double term_coefficient(const RelTerm& t, const PresentationParams& params, double q);

// Residual evaluator over a fixed image set z_l -> TruncOp, with cached
// adjoints and two-letter products.
class RelationEvaluator {
  public:
    RelationEvaluator(std::vector<TruncOp> images, double q);

    const SpaceSpec& space() const { return space_; }
    TruncOp eval_poly(const Relation& rel, const PresentationParams& params);
    // interior_residual of the relation polynomial.
    double residual(const Relation& rel, const PresentationParams& params, int band);
    // Frobenius norm of the interior compression; an upper bound on the
    // operator-norm residual, cheap enough for calibration sweeps.
    double frobenius_residual(const Relation& rel, const PresentationParams& params, int band);

  private:
    const TruncOp& letter(int idx, bool star);
    const TruncOp& pair_product(const std::pair<int, bool>& a, const std::pair<int, bool>& b);

    SpaceSpec space_;
    double q_;
    std::vector<TruncOp> z_, zs_;
    std::map<std::tuple<int, bool, int, bool>, TruncOp> cache_;
};

double eval_residual(const Relation& rel, RelationEvaluator& ev, const PresentationParams& params,
                     int band);

// The q = 0 relation system obtained by the descending-index substitution in
// c2 and the q = 0 limit of the remaining families, in canonical normal form.
// Requires rho_i + rho_j > 0 on the c5 index range and rho_i > 0 for i <= n.
std::vector<Relation> q_zero_presentation(int n);

// The odd-sphere presentation at q = 0 with the same number of generators
// (2n of them, i.e. the sphere S^{4n-1}): z_i z_j = 0 for i > j,
// z_i* z_j = 0 for i != j, z_i* z_i = z_i z_i* + sum_{k>i} z_k z_k*,
// sum z_i z_i* = 1.
std::vector<Relation> sphere_q0_presentation(int gens);

// Canonical text of a relation / parse of the same format.  format/parse are
// mutually inverse on the presentation families.
std::string format_relation(const Relation& rel);
Relation parse_relation(const std::string& text);

// Canonical multiset of normalized polynomial strings for set comparison.
std::vector<std::string> canonical_polynomials(const std::vector<Relation>& rels,
                                               const PresentationParams& params, double q);

struct CompareQ0Report {
    bool syntactic_equal = false;     // q0 presentation == sphere presentation
    double max_eval_residual = 0.0;   // q0 relations on the sphere generators
    bool eval_exact = false;
    double max_generator_deviation = 0.0;  // eta(q=0) vs reversed sphere generators
    bool generators_equal = false;
    std::vector<std::string> mismatches;
};

// Checks the q = 0 degeneration: (a) the q = 0 presentation coincides with
// the sphere presentation and annihilates the concrete sphere generators
// exactly; (b) entrywise comparison of the q = 0 quotient images against the
// reversed sphere generator list.
CompareQ0Report compare_q0(int n, int D);

struct RhoEpsCalibration {
    PresentationParams winner;
    double winner_residual = 0.0;
    PresentationParams runner_up;
    double runner_up_residual = 0.0;
    int candidates = 0;
    bool ok = false;
};

// Search over rho_i in [-n, n] and eps_i in {+-1} (eps_1 fixed to +1; only
// components that occur in some coefficient are varied, the rest filled by
// the involution convention), constrained by rho_i + rho_j > 0 for
// i + j < 2n+1, minimizing the c5/c7 residuals under the k = 2n images.
RhoEpsCalibration calibrate_rho_eps(int n, int D, double q, int band = 3);

}  // namespace qqs

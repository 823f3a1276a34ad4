#include "qqs/spheres.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qqs {

OperatorExpr circle_coordinate() { return prim_shift(Sort::Int); }

namespace {

OperatorExpr chain(const std::vector<OperatorExpr>& parts) {
    OperatorExpr acc = OperatorExpr::scalar(1.0);
    for (const auto& p : parts) acc = tensor(acc, p);
    return acc;
}

OperatorExpr nat_id() { return prim_id(Sort::Nat); }
OperatorExpr nat_p() { return prim_proj(Sort::Nat, 0); }

}  // namespace

SphereGenerators sphere_generators(int ell) {
    if (ell < 0) throw std::invalid_argument("sphere_generators: ell must be >= 0");
    SphereGenerators g;
    g.ell = ell;
    for (int f = 0; f < ell; ++f) g.sig.push_back(Sort::Nat);
    g.sig.push_back(Sort::Int);
    for (int r = 1; r <= ell; ++r) {
        std::vector<OperatorExpr> parts;
        for (int f = 1; f < r; ++f) parts.push_back(nat_p());
        parts.push_back(prim_coshift(Sort::Nat));
        for (int f = r; f < ell; ++f) parts.push_back(nat_id());
        parts.push_back(prim_id(Sort::Int));
        g.ops.push_back(normalize(chain(parts)));
    }
    std::vector<OperatorExpr> last;
    for (int f = 0; f < ell; ++f) last.push_back(nat_p());
    last.push_back(circle_coordinate());
    g.ops.push_back(normalize(chain(last)));
    return g;
}

SpaceSpec sphere_space(int ell, int D) {
    SpaceSpec sp;
    for (int f = 0; f < ell; ++f) sp.factors.push_back(nat_factor(D));
    sp.factors.push_back(int_factor(D));
    return sp;
}

std::vector<OperatorExpr> qds(const std::vector<OperatorExpr>& gens) {
    std::vector<OperatorExpr> out;
    std::vector<Sort> sig;
    if (!gens.empty()) sig = gens.front().sig;
    for (const auto& g : gens) out.push_back(normalize(tensor(g, nat_p())));
    out.push_back(normalize(tensor(OperatorExpr::identity(sig), prim_shift(Sort::Nat))));
    return out;
}

OperatorExpr reverse_factors(const OperatorExpr& e) {
    OperatorExpr r;
    r.sig.assign(e.sig.rbegin(), e.sig.rend());
    r.terms = e.terms;
    for (auto& t : r.terms) std::reverse(t.words.begin(), t.words.end());
    return r;
}

std::vector<OperatorExpr> tower_to_sphere_form(const std::vector<OperatorExpr>& tower) {
    const int N = static_cast<int>(tower.size());
    std::vector<OperatorExpr> out;
    for (int r = 1; r <= N; ++r) {
        if (r <= N - 1) {
            out.push_back(normalize(adjoint(reverse_factors(tower[N - r]))));
        } else {
            out.push_back(normalize(reverse_factors(tower[0])));
        }
    }
    return out;
}

QdsCheckReport qds_check(int ell, int D, bool apply_reversal) {
    QdsCheckReport rep;
    rep.ell = ell;
    std::vector<OperatorExpr> tower = {circle_coordinate()};
    for (int i = 0; i < ell; ++i) tower = qds(tower);
    std::vector<OperatorExpr> forms;
    if (apply_reversal) {
        forms = tower_to_sphere_form(tower);
    } else {
        // Diagnostic control: align the factor order but skip the declared
        // generator reconciliation.
        for (const auto& g : tower) forms.push_back(normalize(reverse_factors(g)));
    }
    SphereGenerators sph = sphere_generators(ell);
    SpaceSpec sp = sphere_space(ell, D);
    double worst = 0.0;
    for (int r = 0; r < static_cast<int>(sph.ops.size()); ++r) {
        TruncOp a = materialize(forms[r], sp, 0.0);
        TruncOp b = materialize(sph.ops[r], sp, 0.0);
        worst = std::max(worst, sub(a, b).max_abs_entry());
    }
    rep.max_deviation = worst;
    rep.pass = (worst == 0.0);
    return rep;
}

std::vector<OperatorExpr> phi_m_images(int m, int ell) {
    std::vector<OperatorExpr> out;
    for (int r = 1; r <= ell; ++r) {
        std::vector<OperatorExpr> parts;
        for (int f = 1; f < r; ++f) parts.push_back(nat_p());
        parts.push_back(prim_coshift(Sort::Nat));
        for (int f = r; f < ell; ++f) parts.push_back(nat_id());
        parts.push_back(nat_id());
        parts.push_back(prim_id(Sort::Int));
        out.push_back(normalize(chain(parts)));
    }
    std::vector<OperatorExpr> last;
    for (int f = 0; f < ell; ++f) last.push_back(nat_p());
    last.push_back(power_expr(Sort::Nat, ShiftKind::CoShift, m));
    last.push_back(prim_id(Sort::Int));
    out.push_back(normalize(chain(last)));
    return out;
}

AmGenerators am_generators(int m, int ell) {
    AmGenerators a;
    a.m = m;
    a.ell = ell;
    for (int f = 0; f <= ell; ++f) a.sig.push_back(Sort::Nat);
    a.sig.push_back(Sort::Int);
    a.ops = phi_m_images(m, ell);
    // Marker for the ideal K (x) C(T): a rank-one projection tensored with
    // the circle coordinate.
    std::vector<OperatorExpr> marker;
    for (int f = 0; f <= ell; ++f) marker.push_back(nat_p());
    marker.push_back(circle_coordinate());
    a.ops.push_back(normalize(chain(marker)));
    return a;
}

OperatorExpr symbol_quotient(const OperatorExpr& e_in) {
    OperatorExpr e = normalize(e_in);
    if (e.sig.empty()) throw std::invalid_argument("symbol_quotient: no factor to collapse");
    OperatorExpr out;
    out.sig.assign(e.sig.begin(), e.sig.end() - 1);
    for (const auto& t : e.terms) {
        const Word& w = t.words.back();
        if (w.segs.size() > 1) throw std::logic_error("symbol_quotient: word not normalized");
        Term nt;
        nt.coeff = t.coeff;
        nt.qexp = t.qexp;
        bool dead = false;
        if (!w.segs.empty()) {
            const Seg& s = w.segs.front();
            if (s.proj) dead = true;  // rank-one pieces are compact
            for (const auto& at : s.atoms) {
                if (at.fn == DiagAtom::Fn::QPow) {
                    if (at.a > 0) {
                        dead = true;  // q-power diagonals are compact
                    } else if (at.a == 0) {
                        nt.qexp += at.b;
                    } else {
                        throw std::domain_error("symbol_quotient: diagonal without a limit");
                    }
                } else {
                    if (at.a <= 0) throw std::domain_error("symbol_quotient: diagonal without a limit");
                    // sqrt(1-q^{aN+b}) -> 1
                }
            }
            // shifts map to the unit circle value 1
        }
        if (dead) continue;
        nt.words.assign(t.words.begin(), t.words.end() - 1);
        out.terms.push_back(std::move(nt));
    }
    return normalize(out);
}

SigmaCheckReport sigma_check(int k, int n, double q, int D, const GeneratorAssignment& assign) {
    if (k < 1 || k >= 2 * n) throw std::invalid_argument("sigma_check: need 1 <= k < 2n");
    SigmaCheckReport rep;
    rep.k = k;
    QuotientRep up = eta(k + 1, n, CircleMode::Bilateral, cplx(1, 0), assign);
    QuotientRep dn = eta(k, n, CircleMode::Bilateral, cplx(1, 0), assign);
    SpaceSpec sp;
    sp.factors.push_back(int_factor(D));
    for (int f = 0; f < k - 1; ++f) sp.factors.push_back(nat_factor(D));
    double sym = 0.0, numdev = 0.0;
    for (int l = 0; l < 2 * n; ++l) {
        OperatorExpr dropped = symbol_quotient(up.images[l]);
        sym = std::max(sym, symbol_distance(dropped, dn.images[l]));
        TruncOp a = materialize(dropped, sp, q);
        TruncOp b = materialize(dn.images[l], sp, q);
        numdev = std::max(numdev, interior_residual(sub(a, b), 1));
    }
    rep.symbol_deviation = sym;
    rep.exact_symbol = (sym == 0.0);
    rep.numeric_deviation = numdev;
    rep.pass = rep.exact_symbol || numdev <= 1e-9;
    return rep;
}

HomogeneityReport homogeneity_probe(int k, int n, double q, int D, int t0_samples,
                                    const std::vector<long>& M_grid,
                                    const GeneratorAssignment& assign) {
    if (k < 1 || k > 2 * n - 1) throw std::invalid_argument("homogeneity_probe: k out of range");
    if (t0_samples < 1 || M_grid.empty()) throw std::invalid_argument("homogeneity_probe: empty grid");
    HomogeneityReport rep;
    rep.k = k;
    rep.n = n;
    rep.q = q;
    rep.D = D;
    rep.M_grid = M_grid;

    SpaceSpec sp;
    for (int f = 0; f < k; ++f) sp.factors.push_back(nat_factor(D));
    const std::vector<int> last = {k - 1};

    // Circle-direction probe p^(x)(k-1) (x) sqrt(1-q^{2N}) S*, the image of
    // the circle fiber over the base point.
    std::vector<OperatorExpr> parts;
    for (int f = 1; f < k; ++f) parts.push_back(nat_p());
    parts.push_back(compose(prim_diag(Sort::Nat, sq1m(2, 0)), prim_coshift(Sort::Nat)));
    TruncOp probe = materialize(normalize(chain(parts)), sp, q);

    bool all_ok = true;
    bool monotone = true;
    bool converged = true;
    for (int s = 0; s < t0_samples; ++s) {
        double theta = 2.0 * std::numbers::pi * s / t0_samples;
        cplx t0(std::cos(theta), std::sin(theta));
        rep.t0_angles.push_back(theta);
        QuotientRep lift = eta(k + 1, n, CircleMode::Sampled, t0, assign);
        OperatorExpr yy = normalize(compose(lift.images[k - 1], adjoint(lift.images[k - 1])));
        TruncOp A = materialize(yy, sp, q);
        std::vector<double> curve;
        double prev = 1e300;
        for (long M : M_grid) {
            double v = ess_norm_est(A, M, last);
            if (v > prev + 2e-9) monotone = false;
            prev = v;
            curve.push_back(v);
        }
        if (curve.size() >= 2 &&
            std::abs(curve[curve.size() - 1] - curve[curve.size() - 2]) >= 1e-3)
            converged = false;
        double final_v = curve.back();
        if (!(final_v >= rep.target_lo && final_v <= rep.target_hi + 1e-9)) all_ok = false;
        rep.values.push_back(std::move(curve));
        double pv = ess_norm_est(probe, M_grid.back(), last);
        rep.circle_probe.push_back(pv);
        if (pv < 0.9) all_ok = false;
    }
    rep.monotone = monotone;
    rep.converged = converged;
    rep.pass = all_ok && monotone && converged;
    return rep;
}

}  // namespace qqs

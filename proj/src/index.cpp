#include "qqs/index.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace qqs {

namespace {

OperatorExpr chain(const std::vector<OperatorExpr>& parts) {
    OperatorExpr acc = OperatorExpr::scalar(1.0);
    for (const auto& p : parts) acc = tensor(acc, p);
    return acc;
}

OperatorExpr p_block(int ell) {
    std::vector<OperatorExpr> parts;
    for (int f = 0; f < ell; ++f) parts.push_back(prim_proj(Sort::Nat, 0));
    return chain(parts);
}

}  // namespace

ThetaRep theta_rep(int m, int ell) {
    if (ell < 1) throw std::invalid_argument("theta_rep: ell must be >= 1");
    ThetaRep t;
    t.m = m;
    t.ell = ell;
    for (int f = 0; f < ell; ++f) t.sig.push_back(Sort::Nat);
    t.sig.push_back(Sort::Int);
    for (int r = 1; r <= ell; ++r) {
        std::vector<OperatorExpr> parts;
        for (int f = 1; f < r; ++f) parts.push_back(prim_proj(Sort::Nat, 0));
        parts.push_back(prim_coshift(Sort::Nat));
        for (int f = r; f < ell; ++f) parts.push_back(prim_id(Sort::Nat));
        parts.push_back(prim_id(Sort::Int));
        t.images.push_back(normalize(chain(parts)));
    }
    std::vector<OperatorExpr> last;
    for (int f = 0; f < ell; ++f) last.push_back(prim_proj(Sort::Nat, 0));
    last.push_back(power_expr(Sort::Int, ShiftKind::CoShift, m));
    t.images.push_back(normalize(chain(last)));
    return t;
}

OperatorExpr u_generator(int ell) {
    if (ell < 1) throw std::invalid_argument("u_generator: ell must be >= 1");
    std::vector<Sort> sig;
    for (int f = 0; f < ell; ++f) sig.push_back(Sort::Nat);
    sig.push_back(Sort::Int);
    OperatorExpr pt = tensor(p_block(ell), prim_shift(Sort::Int));
    OperatorExpr p1 = tensor(p_block(ell), prim_id(Sort::Int));
    return normalize(add(pt, sub(OperatorExpr::identity(sig), p1)));
}

OperatorExpr theta_u(int m, int ell) {
    std::vector<Sort> sig;
    for (int f = 0; f < ell; ++f) sig.push_back(Sort::Nat);
    sig.push_back(Sort::Int);
    OperatorExpr pt = tensor(p_block(ell), power_expr(Sort::Int, ShiftKind::CoShift, m));
    OperatorExpr p1 = tensor(p_block(ell), prim_id(Sort::Int));
    return normalize(add(pt, sub(OperatorExpr::identity(sig), p1)));
}

TruncOp compress_Rm(int m, int ell, int D) {
    SpaceSpec full;
    for (int f = 0; f < ell; ++f) full.factors.push_back(nat_factor(D));
    full.factors.push_back(int_factor(D));
    TruncOp big = materialize(theta_u(m, ell), full, 0.0);

    SpaceSpec comp;
    for (int f = 0; f < ell; ++f) comp.factors.push_back(nat_factor(D));
    comp.factors.push_back(nat_factor(D + 1));
    TruncOp out = TruncOp::zero(comp);

    // The nonnegative bilateral indices sit at the tail of each Int column
    // block; both spaces enumerate factors row-major, so the compression is a
    // per-factor position shift.
    const long zlen = 2L * D + 1;
    const long plen = D + 1;
    std::vector<long> pos;
    for (long col = 0; col < big.dim(); ++col) {
        long zc = col % zlen;
        if (zc < D) continue;  // negative bilateral index
        long newcol = (col / zlen) * plen + (zc - D);
        for (const auto& [row, v] : big.cols[col]) {
            long zr = row % zlen;
            if (zr < D) continue;
            long newrow = (row / zlen) * plen + (zr - D);
            out.cols[newcol].push_back({newrow, v});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Kernel counting
// ---------------------------------------------------------------------------

namespace {

// True when at least 99% of the vector's mass sits within two indices of a
// truncation edge (the top of each factor; bilateral factors also truncate at
// the bottom, but compressed corners are re-expressed over Nat factors whose
// bottom is genuine).
bool boundary_artifact(const SpaceSpec& space, const std::vector<std::pair<long, cplx>>& vec) {
    double total = 0.0, edge = 0.0;
    std::vector<long> pos;
    for (const auto& [idx, v] : vec) {
        double w = std::norm(v);
        total += w;
        space.positions_of(idx, pos);
        bool near = false;
        for (size_t f = 0; f < space.factors.size() && !near; ++f) {
            const Factor& fa = space.factors[f];
            if (pos[f] >= fa.hi() - 2) near = true;
            if (fa.sort == Sort::Int && pos[f] <= fa.lo() + 2) near = true;
        }
        if (near) edge += w;
    }
    return total > 0.0 && edge >= 0.99 * total;
}

struct UnionFind {
    std::vector<long> parent;
    explicit UnionFind(long n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    long find(long x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(long a, long b) { parent[find(a)] = find(b); }
};

}  // namespace

KernelCounts kernel_counts(const TruncOp& a, double rank_tol) {
    const long dim = a.dim();
    KernelCounts out;

    std::vector<int> row_nnz(dim, 0), col_nnz(dim, 0);
    for (long j = 0; j < dim; ++j) {
        col_nnz[j] = static_cast<int>(a.cols[j].size());
        for (const auto& [r, v] : a.cols[j]) ++row_nnz[r];
    }

    auto classify_null = [&](const std::vector<std::pair<long, cplx>>& vec, bool is_ker) {
        if (boundary_artifact(a.space, vec)) {
            (is_ker ? out.ker_discarded : out.coker_discarded) += 1;
        } else {
            (is_ker ? out.ker : out.coker) += 1;
        }
    };

    // Trivial blocks first: empty columns/rows and isolated 1x1 entries.
    std::vector<bool> col_pending(dim, false), row_pending(dim, false);
    long pending = 0;
    for (long j = 0; j < dim; ++j) {
        if (col_nnz[j] == 0) {
            classify_null({{j, cplx(1, 0)}}, true);
        } else if (col_nnz[j] == 1 && row_nnz[a.cols[j][0].first] == 1) {
            double s = std::abs(a.cols[j][0].second);
            if (s <= rank_tol) {
                classify_null({{j, cplx(1, 0)}}, true);
                classify_null({{a.cols[j][0].first, cplx(1, 0)}}, false);
            } else if (s <= 10.0 * rank_tol) {
                throw std::runtime_error("kernel_counts: singular value inside the ambiguity guard");
            }
        } else {
            col_pending[j] = true;
            ++pending;
        }
    }
    for (long r = 0; r < dim; ++r) {
        if (row_nnz[r] == 0) classify_null({{r, cplx(1, 0)}}, false);
    }
    if (pending == 0) return out;

    // Remaining entries form small connected components; index rows as
    // node r, columns as node dim + c.
    UnionFind uf(2 * dim);
    for (long j = 0; j < dim; ++j) {
        if (!col_pending[j]) continue;
        for (const auto& [r, v] : a.cols[j]) uf.unite(r, dim + j);
    }
    std::map<long, std::pair<std::vector<long>, std::vector<long>>> comps;  // root -> (rows, cols)
    for (long j = 0; j < dim; ++j) {
        if (!col_pending[j]) continue;
        comps[uf.find(dim + j)].second.push_back(j);
        for (const auto& [r, v] : a.cols[j]) row_pending[r] = true;
    }
    for (long r = 0; r < dim; ++r)
        if (row_pending[r]) comps[uf.find(r)].first.push_back(r);

    for (auto& [root, rc] : comps) {
        auto& [rows, cols] = rc;
        std::sort(rows.begin(), rows.end());
        std::sort(cols.begin(), cols.end());
        const long R = static_cast<long>(rows.size());
        const long C = static_cast<long>(cols.size());
        if (R * C > 4000000L)
            throw std::runtime_error("kernel_counts: component too large for dense SVD");
        Eigen::MatrixXcd Mt = Eigen::MatrixXcd::Zero(R, C);
        std::map<long, long> rmap;
        for (long i = 0; i < R; ++i) rmap[rows[i]] = i;
        for (long c = 0; c < C; ++c)
            for (const auto& [r, v] : a.cols[cols[c]]) Mt(rmap[r], c) = v;
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Mt, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        long rank = 0;
        for (long s = 0; s < sv.size(); ++s) {
            if (sv(s) > 10.0 * rank_tol) {
                ++rank;
            } else if (sv(s) > rank_tol) {
                throw std::runtime_error("kernel_counts: singular value inside the ambiguity guard");
            }
        }
        for (long k = rank; k < C; ++k) {
            std::vector<std::pair<long, cplx>> vec;
            for (long c = 0; c < C; ++c) {
                cplx v = svd.matrixV()(c, k);
                if (std::abs(v) > 1e-14) vec.push_back({cols[c], v});
            }
            classify_null(vec, true);
        }
        for (long k = rank; k < R; ++k) {
            std::vector<std::pair<long, cplx>> vec;
            for (long r = 0; r < R; ++r) {
                cplx v = svd.matrixU()(r, k);
                if (std::abs(v) > 1e-14) vec.push_back({rows[r], v});
            }
            classify_null(vec, false);
        }
    }
    return out;
}

IndexResult index_pairing(int m, int ell, const std::vector<int>& ladder, double rank_tol) {
    IndexResult res;
    res.m = m;
    res.ell = ell;
    if (ladder.empty()) {
        res.error = "empty ladder";
        return res;
    }
    for (size_t i = 1; i < ladder.size(); ++i)
        if (ladder[i] <= ladder[i - 1]) throw std::invalid_argument("index_pairing: ladder not increasing");
    for (int D : ladder) {
        TruncOp r = compress_Rm(m, ell, D);
        KernelCounts kc = kernel_counts(r, rank_tol);
        res.rungs.push_back({D, kc.ker, kc.coker});
    }
    // Longest constant suffix.
    size_t run = 1;
    for (size_t i = res.rungs.size(); i-- > 1;) {
        if (res.rungs[i].ker == res.rungs[i - 1].ker && res.rungs[i].coker == res.rungs[i - 1].coker)
            ++run;
        else
            break;
    }
    if (run >= 3) {
        res.stabilized = true;
        res.index = res.rungs.back().ker - res.rungs.back().coker;
        res.sigma = sigma_global();
        res.pairing = res.sigma * res.index;
    } else {
        res.error = "kernel dimensions did not stabilize across the ladder";
    }
    return res;
}

long winding_oracle(int m) {
    // Count unmatched basis vectors of the shifted block over a window large
    // enough to clear the shift; pure integer arithmetic.
    const long K = std::abs(static_cast<long>(m)) + 4;
    long ker = 0, coker = 0;
    for (long j = 0; j < K; ++j)
        if (j + m < 0) ++ker;  // columns annihilated at the bottom edge
    for (long r = 0; r < K; ++r)
        if (r - m < 0) ++coker;  // rows never reached
    return ker - coker;
}

int sigma_global() {
    static const int sigma = [] {
        std::vector<int> ladder = {8, 10, 12, 14, 16};
        IndexResult raw;
        raw.m = 1;
        raw.ell = 1;
        for (int D : ladder) {
            TruncOp r = compress_Rm(1, 1, D);
            KernelCounts kc = kernel_counts(r, 1e-8);
            raw.rungs.push_back({D, kc.ker, kc.coker});
        }
        long idx = raw.rungs.back().ker - raw.rungs.back().coker;
        for (const auto& rung : raw.rungs)
            if (rung.ker - rung.coker != idx)
                throw std::runtime_error("sigma_global: calibration ladder unstable");
        if (idx != 1 && idx != -1)
            throw std::runtime_error("sigma_global: calibration index is not a unit");
        return idx > 0 ? 1 : -1;
    }();
    return sigma;
}

}  // namespace qqs

#include "qqs/relations.hpp"

#include "qqs/reps.hpp"
#include "qqs/spheres.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

namespace qqs {

PresentationParams default_params(int n) {
    PresentationParams p;
    p.n = n;
    p.rho.resize(2 * n);
    p.eps.resize(2 * n);
    for (int i = 1; i <= 2 * n; ++i) {
        p.rho[i - 1] = (i <= n) ? n - i + 1 : n - i;
        p.eps[i - 1] = (i <= n) ? 1 : -1;
    }
    return p;
}

namespace {

Monomial mono2(int a, bool sa, int b, bool sb) {
    Monomial m;
    m.letters = {{a, sa}, {b, sb}};
    return m;
}

RelTerm term(double r, int qc, int omq, Monomial m, RelTerm::Rho rho = RelTerm::Rho::None,
             bool eps = false) {
    RelTerm t;
    t.r = r;
    t.qc = qc;
    t.omq = omq;
    t.mono = std::move(m);
    t.rho = rho;
    t.eps_ij = eps;
    return t;
}

void push_c1(std::vector<Relation>& out, int n) {
    for (int i = 1; i <= 2 * n; ++i)
        for (int j = 1; j < i; ++j) {
            if (i + j == 2 * n + 1) continue;
            Relation r;
            r.id = "c1";
            r.i = i;
            r.j = j;
            r.terms.push_back(term(1, 0, 0, mono2(i, false, j, false)));
            r.terms.push_back(term(-1, 1, 0, mono2(j, false, i, false)));
            out.push_back(std::move(r));
        }
}

void push_c2(std::vector<Relation>& out, int n) {
    for (int i = n + 1; i <= 2 * n; ++i) {
        int ip = 2 * n + 1 - i;
        Relation r;
        r.id = "c2";
        r.i = i;
        r.terms.push_back(term(1, 0, 0, mono2(i, false, ip, false)));
        r.terms.push_back(term(-1, 2, 0, mono2(ip, false, i, false)));
        for (int k = i + 1; k <= 2 * n; ++k)
            r.terms.push_back(term(1, i - k, 1, mono2(k, false, 2 * n + 1 - k, false)));
        out.push_back(std::move(r));
    }
}

void push_c3(std::vector<Relation>& out, int n) {
    for (int i = 1; i <= 2 * n; ++i) {
        int ip = 2 * n + 1 - i;
        Relation r;
        r.id = "c3";
        r.i = i;
        r.terms.push_back(term(1, 0, 0, mono2(i, true, ip, false)));
        r.terms.push_back(term(-1, 2, 0, mono2(ip, false, i, true)));
        out.push_back(std::move(r));
    }
}

void push_c4(std::vector<Relation>& out, int n) {
    for (int i = 1; i <= 2 * n; ++i)
        for (int j = 1; j <= 2 * n; ++j) {
            if (i == j || i + j <= 2 * n + 1) continue;
            Relation r;
            r.id = "c4";
            r.i = i;
            r.j = j;
            r.terms.push_back(term(1, 0, 0, mono2(i, true, j, false)));
            r.terms.push_back(term(-1, 1, 0, mono2(j, false, i, true)));
            out.push_back(std::move(r));
        }
}

void push_c5(std::vector<Relation>& out, int n) {
    for (int i = 1; i <= 2 * n; ++i)
        for (int j = 1; j <= 2 * n; ++j) {
            if (i == j || i + j >= 2 * n + 1) continue;
            Relation r;
            r.id = "c5";
            r.i = i;
            r.j = j;
            r.terms.push_back(term(1, 0, 0, mono2(i, true, j, false)));
            r.terms.push_back(term(-1, 1, 0, mono2(j, false, i, true)));
            r.terms.push_back(term(-1, 0, 1, mono2(2 * n + 1 - i, false, 2 * n + 1 - j, true),
                                   RelTerm::Rho::SumIJ, true));
            out.push_back(std::move(r));
        }
}

void push_c6(std::vector<Relation>& out, int n) {
    for (int i = n + 1; i <= 2 * n; ++i) {
        Relation r;
        r.id = "c6";
        r.i = i;
        r.terms.push_back(term(1, 0, 0, mono2(i, true, i, false)));
        r.terms.push_back(term(-1, 0, 0, mono2(i, false, i, true)));
        for (int k = i + 1; k <= 2 * n; ++k)
            r.terms.push_back(term(-1, 0, 1, mono2(k, false, k, true)));
        out.push_back(std::move(r));
    }
}

void push_c7(std::vector<Relation>& out, int n) {
    for (int i = 1; i <= n; ++i) {
        int ip = 2 * n + 1 - i;
        Relation r;
        r.id = "c7";
        r.i = i;
        r.terms.push_back(term(1, 0, 0, mono2(i, true, i, false)));
        r.terms.push_back(term(-1, 0, 0, mono2(i, false, i, true)));
        r.terms.push_back(term(-1, 0, 1, mono2(ip, false, ip, true), RelTerm::Rho::TwoI));
        for (int k = i + 1; k <= 2 * n; ++k)
            r.terms.push_back(term(-1, 0, 1, mono2(k, false, k, true)));
        out.push_back(std::move(r));
    }
}

void push_c8(std::vector<Relation>& out, int n) {
    Relation r;
    r.id = "c8";
    for (int i = 1; i <= 2 * n; ++i) r.terms.push_back(term(1, 0, 0, mono2(i, false, i, true)));
    RelTerm one;
    one.r = -1;
    r.terms.push_back(one);
    out.push_back(std::move(r));
}

}  // namespace

std::vector<Relation> build_presentation(const PresentationParams& params) {
    const int n = params.n;
    std::vector<Relation> out;
    push_c1(out, n);
    push_c2(out, n);
    push_c3(out, n);
    push_c4(out, n);
    push_c5(out, n);
    push_c6(out, n);
    push_c7(out, n);
    push_c8(out, n);
    return out;
}

std::vector<Relation> build_presentation_sign_free(int n) {
    std::vector<Relation> out;
    push_c1(out, n);
    push_c2(out, n);
    push_c3(out, n);
    push_c4(out, n);
    push_c6(out, n);
    push_c8(out, n);
    return out;
}

double term_coefficient(const RelTerm& t, const PresentationParams& params, double q) {
    long e = t.qc;
    if (t.rho == RelTerm::Rho::SumIJ) throw std::logic_error("term_coefficient: unresolved rho");
    double v = t.r;
    for (int p = 0; p < t.omq; ++p) v *= (1.0 - q * q);
    if (e != 0) {
        if (q == 0.0) {
            if (e < 0) throw std::domain_error("term_coefficient: negative q power at q=0");
            return 0.0;
        }
        v *= std::pow(q, static_cast<double>(e));
    }
    return v;
}

namespace {
double resolved_coefficient(const RelTerm& t, const PresentationParams& params, double q, int i,
                            int j) {
    long e = t.qc;
    double v = t.r;
    if (t.rho == RelTerm::Rho::SumIJ) e += params.rho[i - 1] + params.rho[j - 1];
    if (t.rho == RelTerm::Rho::TwoI) e += 2 * params.rho[i - 1];
    if (t.eps_ij) v *= params.eps[i - 1] * params.eps[j - 1];
    for (int p = 0; p < t.omq; ++p) v *= (1.0 - q * q);
    if (e != 0) {
        if (q == 0.0) {
            if (e < 0) throw std::domain_error("relation coefficient: negative q power at q=0");
            return 0.0;
        }
        v *= std::pow(q, static_cast<double>(e));
    }
    return v;
}
}  // namespace

RelationEvaluator::RelationEvaluator(std::vector<TruncOp> images, double q)
    : q_(q), z_(std::move(images)) {
    if (z_.empty()) throw std::invalid_argument("RelationEvaluator: no images");
    space_ = z_.front().space;
    zs_.reserve(z_.size());
    for (const auto& op : z_) zs_.push_back(adjoint_op(op));
}

const TruncOp& RelationEvaluator::letter(int idx, bool star) {
    return star ? zs_[idx - 1] : z_[idx - 1];
}

const TruncOp& RelationEvaluator::pair_product(const std::pair<int, bool>& a,
                                               const std::pair<int, bool>& b) {
    auto key = std::make_tuple(a.first, a.second, b.first, b.second);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    TruncOp p = mul(letter(a.first, a.second), letter(b.first, b.second));
    return cache_.emplace(key, std::move(p)).first->second;
}

TruncOp RelationEvaluator::eval_poly(const Relation& rel, const PresentationParams& params) {
    TruncOp acc = TruncOp::zero(space_);
    for (const auto& t : rel.terms) {
        double cv = resolved_coefficient(t, params, q_, rel.i, rel.j);
        if (cv == 0.0) continue;
        TruncOp piece = TruncOp::zero(space_);
        if (t.mono.letters.empty()) {
            piece = TruncOp::identity(space_);
        } else if (t.mono.letters.size() == 1) {
            piece = letter(t.mono.letters[0].first, t.mono.letters[0].second);
        } else if (t.mono.letters.size() == 2) {
            piece = pair_product(t.mono.letters[0], t.mono.letters[1]);
        } else {
            piece = letter(t.mono.letters[0].first, t.mono.letters[0].second);
            for (size_t l = 1; l < t.mono.letters.size(); ++l)
                piece = mul(piece, letter(t.mono.letters[l].first, t.mono.letters[l].second));
        }
        piece *= cv;
        acc += piece;
    }
    return acc;
}

double RelationEvaluator::residual(const Relation& rel, const PresentationParams& params,
                                   int band) {
    return interior_residual(eval_poly(rel, params), band);
}

double RelationEvaluator::frobenius_residual(const Relation& rel, const PresentationParams& params,
                                             int band) {
    TruncOp p = eval_poly(rel, params);
    std::vector<bool> keep(static_cast<size_t>(space_.dim()), true);
    std::vector<long> pos;
    for (long idx = 0; idx < space_.dim(); ++idx) {
        space_.positions_of(idx, pos);
        for (size_t f = 0; f < space_.factors.size(); ++f) {
            const Factor& fa = space_.factors[f];
            bool ok = fa.sort == Sort::Nat
                          ? pos[f] <= fa.hi() - band
                          : (pos[f] >= fa.lo() + band && pos[f] <= fa.hi() - band);
            if (!ok) {
                keep[idx] = false;
                break;
            }
        }
    }
    TruncOp c = compress(p, keep);
    double s = 0.0;
    for (const auto& col : c.cols)
        for (const auto& [r, v] : col) s += std::norm(v);
    return std::sqrt(s);
}

double eval_residual(const Relation& rel, RelationEvaluator& ev, const PresentationParams& params,
                     int band) {
    return ev.residual(rel, params, band);
}

// ---------------------------------------------------------------------------
// q = 0 degeneration
// ---------------------------------------------------------------------------

namespace {

// Laurent polynomial in q with double coefficients.
using Laurent = std::map<int, double>;

void laurent_add(Laurent& dst, const Laurent& src, double c, int shift) {
    for (const auto& [e, v] : src) {
        dst[e + shift] += c * v;
        if (std::abs(dst[e + shift]) < 1e-12) dst.erase(e + shift);
    }
}

double laurent_at_zero(const Laurent& l) {
    for (const auto& [e, v] : l)
        if (e < 0 && std::abs(v) > 1e-9)
            throw std::logic_error("q_zero_presentation: negative q power survived substitution");
    auto it = l.find(0);
    return it == l.end() ? 0.0 : it->second;
}

}  // namespace

std::vector<Relation> q_zero_presentation(int n) {
    PresentationParams params = default_params(n);
    // The q = 0 limit of c5/c7 needs strictly positive rho weights.
    for (int i = 1; i <= n; ++i)
        if (params.rho[i - 1] <= 0) throw std::logic_error("q_zero_presentation: rho_i <= 0");
    std::vector<Relation> out;

    // c1 degenerations: z_i z_j = 0 for i > j, i + j != 2n+1.
    for (int i = 1; i <= 2 * n; ++i)
        for (int j = 1; j < i; ++j) {
            if (i + j == 2 * n + 1) continue;
            Relation r;
            r.id = "q0-prod";
            r.i = i;
            r.j = j;
            r.terms.push_back(term(1, 0, 0, mono2(i, false, j, false)));
            out.push_back(std::move(r));
        }

    // c2 by descending substitution: X_i := z_i z_{i'} expressed in the
    // opposite-order monomials Y_k := z_{k'} z_k with Laurent coefficients;
    // every coefficient vanishes at q = 0, leaving z_i z_{i'} = 0 for i > n.
    {
        std::map<int, std::map<int, Laurent>> X;  // i -> (k -> coeff of Y_k)
        for (int i = 2 * n; i > n; --i) {
            std::map<int, Laurent> xi;
            xi[i][2] = 1.0;  // q^2 Y_i
            for (int k = i + 1; k <= 2 * n; ++k) {
                // -(1-q^2) q^{i-k} X_k
                for (const auto& [m, coeff] : X[k]) {
                    laurent_add(xi[m], coeff, -1.0, i - k);
                    laurent_add(xi[m], coeff, +1.0, i - k + 2);
                }
            }
            X[i] = std::move(xi);
        }
        for (int i = n + 1; i <= 2 * n; ++i) {
            for (const auto& [k, coeff] : X[i]) {
                if (std::abs(laurent_at_zero(coeff)) > 1e-9)
                    throw std::logic_error("q_zero_presentation: c2 substitution kept a term at q=0");
            }
            Relation r;
            r.id = "q0-prod";
            r.i = i;
            r.j = 2 * n + 1 - i;
            r.terms.push_back(term(1, 0, 0, mono2(i, false, 2 * n + 1 - i, false)));
            out.push_back(std::move(r));
        }
    }

    // c3/c4/c5 degenerations: z_i* z_j = 0 for every i != j.  The c5
    // coefficient term dies because rho_i + rho_j > 0 on its index range.
    for (int i = 1; i <= 2 * n; ++i)
        for (int j = 1; j <= 2 * n; ++j) {
            if (i == j) continue;
            if (i + j < 2 * n + 1 && params.rho[i - 1] + params.rho[j - 1] <= 0)
                throw std::logic_error("q_zero_presentation: rho_i + rho_j <= 0 on the c5 range");
            Relation r;
            r.id = "q0-star";
            r.i = i;
            r.j = j;
            r.terms.push_back(term(1, 0, 0, mono2(i, true, j, false)));
            out.push_back(std::move(r));
        }

    // c6/c7 degenerations.
    for (int i = 1; i <= 2 * n; ++i) {
        Relation r;
        r.id = "q0-comm";
        r.i = i;
        r.terms.push_back(term(1, 0, 0, mono2(i, true, i, false)));
        r.terms.push_back(term(-1, 0, 0, mono2(i, false, i, true)));
        for (int k = i + 1; k <= 2 * n; ++k) r.terms.push_back(term(-1, 0, 0, mono2(k, false, k, true)));
        out.push_back(std::move(r));
    }

    // c8.
    {
        Relation r;
        r.id = "q0-sum";
        for (int i = 1; i <= 2 * n; ++i) r.terms.push_back(term(1, 0, 0, mono2(i, false, i, true)));
        RelTerm one;
        one.r = -1;
        r.terms.push_back(one);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<Relation> sphere_q0_presentation(int gens) {
    std::vector<Relation> out;
    for (int i = 1; i <= gens; ++i)
        for (int j = 1; j < i; ++j) {
            Relation r;
            r.id = "s-prod";
            r.i = i;
            r.j = j;
            r.terms.push_back(term(1, 0, 0, mono2(i, false, j, false)));
            out.push_back(std::move(r));
        }
    for (int i = 1; i <= gens; ++i)
        for (int j = 1; j <= gens; ++j) {
            if (i == j) continue;
            Relation r;
            r.id = "s-star";
            r.i = i;
            r.j = j;
            r.terms.push_back(term(1, 0, 0, mono2(i, true, j, false)));
            out.push_back(std::move(r));
        }
    for (int i = 1; i <= gens; ++i) {
        Relation r;
        r.id = "s-comm";
        r.i = i;
        r.terms.push_back(term(1, 0, 0, mono2(i, true, i, false)));
        r.terms.push_back(term(-1, 0, 0, mono2(i, false, i, true)));
        for (int k = i + 1; k <= gens; ++k) r.terms.push_back(term(-1, 0, 0, mono2(k, false, k, true)));
        out.push_back(std::move(r));
    }
    Relation r;
    r.id = "s-sum";
    for (int i = 1; i <= gens; ++i) r.terms.push_back(term(1, 0, 0, mono2(i, false, i, true)));
    RelTerm one;
    one.r = -1;
    r.terms.push_back(one);
    out.push_back(std::move(r));
    return out;
}

// ---------------------------------------------------------------------------
// Relation DSL
// ---------------------------------------------------------------------------

namespace {

std::string mono_text(const Monomial& m) {
    if (m.letters.empty()) return "1";
    std::string s;
    for (const auto& [idx, star] : m.letters) {
        if (!s.empty()) s += " ";
        s += "z" + std::to_string(idx);
        if (star) s += "*";
    }
    return s;
}

std::string term_text(const RelTerm& t, int i, int j) {
    std::string s;
    double ar = std::abs(t.r);
    if (ar != 1.0) {
        std::ostringstream os;
        os << ar;
        s += os.str();
    }
    auto piece = [&](const std::string& p) {
        if (!s.empty()) s += " ";
        s += p;
    };
    if (t.qc == 1) {
        piece("q");
    } else if (t.qc != 0) {
        piece(t.qc < 0 ? "q^(" + std::to_string(t.qc) + ")" : "q^" + std::to_string(t.qc));
    }
    if (t.omq == 1) piece("(1-q^2)");
    if (t.omq > 1) piece("(1-q^2)^" + std::to_string(t.omq));
    if (t.eps_ij) piece("eps" + std::to_string(i) + " eps" + std::to_string(j));
    if (t.rho == RelTerm::Rho::SumIJ)
        piece("q^(rho" + std::to_string(i) + "+rho" + std::to_string(j) + ")");
    if (t.rho == RelTerm::Rho::TwoI) piece("q^(2rho" + std::to_string(i) + ")");
    if (!t.mono.letters.empty() || s.empty()) piece(mono_text(t.mono));
    return s;
}

}  // namespace

std::string format_relation(const Relation& rel) {
    std::string s = rel.id;
    if (rel.i != 0) {
        s += "[i=" + std::to_string(rel.i);
        if (rel.j != 0) s += ",j=" + std::to_string(rel.j);
        s += "]";
    }
    s += ": ";
    for (size_t t = 0; t < rel.terms.size(); ++t) {
        double r = rel.terms[t].r;
        if (t == 0) {
            if (r < 0) s += "- ";
        } else {
            s += r < 0 ? " - " : " + ";
        }
        s += term_text(rel.terms[t], rel.i, rel.j);
    }
    s += " = 0";
    return s;
}

namespace {

struct Lexer {
    std::string s;
    size_t p = 0;

    void skip() {
        while (p < s.size() && std::isspace(static_cast<unsigned char>(s[p]))) ++p;
    }
    bool eat(const std::string& tok) {
        skip();
        if (s.compare(p, tok.size(), tok) == 0) {
            p += tok.size();
            return true;
        }
        return false;
    }
    bool peek(const std::string& tok) {
        skip();
        return s.compare(p, tok.size(), tok) == 0;
    }
    long integer() {
        skip();
        size_t q = p;
        if (q < s.size() && (s[q] == '-' || s[q] == '+')) ++q;
        size_t st = q;
        while (q < s.size() && std::isdigit(static_cast<unsigned char>(s[q]))) ++q;
        if (q == st) throw std::invalid_argument("relation parse: expected integer at " + std::to_string(p));
        long v = std::stol(s.substr(p, q - p));
        p = q;
        return v;
    }
    double number() {
        skip();
        size_t q = p;
        while (q < s.size() &&
               (std::isdigit(static_cast<unsigned char>(s[q])) || s[q] == '.' || s[q] == 'e' ||
                s[q] == 'E' || ((s[q] == '-' || s[q] == '+') && q > p && (s[q - 1] == 'e' || s[q - 1] == 'E'))))
            ++q;
        if (q == p) throw std::invalid_argument("relation parse: expected number");
        double v = std::stod(s.substr(p, q - p));
        p = q;
        return v;
    }
    bool done() {
        skip();
        return p >= s.size();
    }
};

}  // namespace

Relation parse_relation(const std::string& text) {
    Lexer lx{text};
    Relation rel;
    lx.skip();
    size_t st = lx.p;
    while (lx.p < lx.s.size() && lx.s[lx.p] != '[' && lx.s[lx.p] != ':')
        ++lx.p;
    rel.id = lx.s.substr(st, lx.p - st);
    while (!rel.id.empty() && std::isspace(static_cast<unsigned char>(rel.id.back()))) rel.id.pop_back();
    if (lx.eat("[")) {
        if (!lx.eat("i=")) throw std::invalid_argument("relation parse: expected i=");
        rel.i = static_cast<int>(lx.integer());
        if (lx.eat(",")) {
            if (!lx.eat("j=")) throw std::invalid_argument("relation parse: expected j=");
            rel.j = static_cast<int>(lx.integer());
        }
        if (!lx.eat("]")) throw std::invalid_argument("relation parse: expected ]");
    }
    if (!lx.eat(":")) throw std::invalid_argument("relation parse: expected :");

    bool first = true;
    while (true) {
        lx.skip();
        double sign = 1.0;
        if (lx.eat("-")) sign = -1.0;
        else if (lx.eat("+")) sign = 1.0;
        else if (!first) break;
        if (lx.eat("=")) break;  // "= 0" after trailing sign cannot occur
        first = false;

        RelTerm t;
        t.r = sign;
        bool any = true;
        while (any) {
            any = false;
            lx.skip();
            if (lx.peek("(1-q^2)")) {
                lx.eat("(1-q^2)");
                t.omq = lx.eat("^") ? static_cast<int>(lx.integer()) : t.omq + 1;
                any = true;
            } else if (lx.peek("q^(rho")) {
                lx.eat("q^(rho");
                lx.integer();
                if (!lx.eat("+rho")) throw std::invalid_argument("relation parse: bad rho sum");
                lx.integer();
                if (!lx.eat(")")) throw std::invalid_argument("relation parse: bad rho sum");
                t.rho = RelTerm::Rho::SumIJ;
                any = true;
            } else if (lx.peek("q^(2rho")) {
                lx.eat("q^(2rho");
                lx.integer();
                if (!lx.eat(")")) throw std::invalid_argument("relation parse: bad 2rho");
                t.rho = RelTerm::Rho::TwoI;
                any = true;
            } else if (lx.peek("q^(")) {
                lx.eat("q^(");
                t.qc += static_cast<int>(lx.integer());
                if (!lx.eat(")")) throw std::invalid_argument("relation parse: bad q power");
                any = true;
            } else if (lx.peek("q^")) {
                lx.eat("q^");
                t.qc += static_cast<int>(lx.integer());
                any = true;
            } else if (lx.peek("q ") || (lx.peek("q") && lx.p + 1 < lx.s.size() && lx.s[lx.p + 1] == ' ')) {
                lx.eat("q");
                t.qc += 1;
                any = true;
            } else if (lx.peek("eps")) {
                lx.eat("eps");
                lx.integer();
                lx.skip();
                if (!lx.eat("eps")) throw std::invalid_argument("relation parse: eps comes in pairs");
                lx.integer();
                t.eps_ij = true;
                any = true;
            } else if (lx.peek("z")) {
                while (lx.peek("z")) {
                    lx.eat("z");
                    int idx = static_cast<int>(lx.integer());
                    bool star = lx.eat("*");
                    t.mono.letters.push_back({idx, star});
                    lx.skip();
                }
                any = true;
            } else if (lx.peek("1") && t.mono.letters.empty()) {
                lx.eat("1");
                any = true;
            } else if (lx.p < lx.s.size() && (std::isdigit(static_cast<unsigned char>(lx.s[lx.p])))) {
                t.r *= lx.number();
                any = true;
            }
        }
        rel.terms.push_back(std::move(t));
        lx.skip();
        if (lx.eat("=")) break;
    }
    if (!lx.eat("0")) throw std::invalid_argument("relation parse: expected = 0");
    return rel;
}

std::vector<std::string> canonical_polynomials(const std::vector<Relation>& rels,
                                               const PresentationParams& params, double q) {
    std::vector<std::string> out;
    for (const auto& rel : rels) {
        std::map<std::string, double> poly;
        for (const auto& t : rel.terms) {
            double cv = resolved_coefficient(t, params, q, rel.i, rel.j);
            if (cv == 0.0) continue;
            poly[mono_text(t.mono)] += cv;
        }
        std::string s;
        for (const auto& [m, c] : poly) {
            if (std::abs(c) < 1e-12) continue;
            std::ostringstream os;
            os << c << "*" << m;
            if (!s.empty()) s += " ; ";
            s += os.str();
        }
        if (s.empty()) continue;  // vacuous relation
        out.push_back(s);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// q = 0 comparison
// ---------------------------------------------------------------------------

CompareQ0Report compare_q0(int n, int D) {
    CompareQ0Report rep;
    PresentationParams params = default_params(n);

    auto lhs = canonical_polynomials(q_zero_presentation(n), params, 0.0);
    auto rhs = canonical_polynomials(sphere_q0_presentation(2 * n), params, 0.0);
    rep.syntactic_equal = (lhs == rhs);
    if (!rep.syntactic_equal) rep.mismatches.push_back("presentation sets differ");

    // (a) the normalized q = 0 relations annihilate the sphere generators:
    // exactly at the symbol level and, away from the truncation shell, at the
    // matrix level.
    SphereGenerators sph = sphere_generators(2 * n - 1);
    SpaceSpec ssp = sphere_space(2 * n - 1, D);
    std::vector<OperatorExpr> adj;
    for (const auto& g : sph.ops) adj.push_back(adjoint(g));
    for (const auto& rel : q_zero_presentation(n)) {
        OperatorExpr poly = OperatorExpr::zero(sph.sig);
        for (const auto& t : rel.terms) {
            double cv = term_coefficient(t, params, 0.0);
            if (cv == 0.0) continue;
            OperatorExpr piece = OperatorExpr::identity(sph.sig);
            for (const auto& [idx, star] : t.mono.letters)
                piece = compose(piece, star ? adj[idx - 1] : sph.ops[idx - 1]);
            poly = add(poly, scale(piece, cv));
        }
        double dev = std::max(symbol_distance(poly, OperatorExpr::zero(sph.sig)),
                              interior_residual(materialize(poly, ssp, 0.0), 1));
        if (dev > rep.max_eval_residual) {
            rep.max_eval_residual = dev;
            if (dev > 0.0) rep.mismatches.push_back("nonzero on sphere generators: " + format_relation(rel));
        }
    }
    rep.eval_exact = (rep.max_eval_residual == 0.0);

    // (b) entrywise comparison of the q = 0 quotient images with the sphere
    // list under the declared reconciliation (factor reversal, generator
    // order reversal, adjoint on the shift generators).
    QuotientRep qr = eta(2 * n, n, CircleMode::Bilateral, cplx(1, 0), default_assignment(n));
    SpaceSpec esp;
    esp.factors.push_back(int_factor(D));
    for (int f = 0; f < 2 * n - 1; ++f) esp.factors.push_back(nat_factor(D));
    for (int l = 1; l <= 2 * n; ++l) {
        int m = 2 * n + 1 - l;  // sphere index paired with y_l
        OperatorExpr target = reverse_factors(sph.ops[m - 1]);
        if (m <= 2 * n - 1) target = adjoint(target);
        TruncOp a = materialize(qr.images[l - 1], esp, 0.0);
        TruncOp b = materialize(target, esp, 0.0);
        double dev = sub(a, b).max_abs_entry();
        if (dev > rep.max_generator_deviation) rep.max_generator_deviation = dev;
        if (dev != 0.0)
            rep.mismatches.push_back("generator " + std::to_string(l) + " deviates by " +
                                     std::to_string(dev));
    }
    rep.generators_equal = (rep.max_generator_deviation == 0.0);
    return rep;
}

// ---------------------------------------------------------------------------
// rho/eps calibration
// ---------------------------------------------------------------------------

RhoEpsCalibration calibrate_rho_eps(int n, int D, double q, int band) {
    RhoEpsCalibration out;
    QuotientRep qr = eta(2 * n, n, CircleMode::Bilateral, cplx(1, 0), default_assignment(n));
    SpaceSpec sp;
    sp.factors.push_back(int_factor(D));
    for (int f = 0; f < 2 * n - 1; ++f) sp.factors.push_back(nat_factor(D));
    std::vector<TruncOp> imgs;
    for (const auto& e : qr.images) imgs.push_back(materialize(e, sp, q));

    std::vector<bool> keep(static_cast<size_t>(sp.dim()), true);
    {
        std::vector<long> pos;
        for (long idx = 0; idx < sp.dim(); ++idx) {
            sp.positions_of(idx, pos);
            for (size_t f = 0; f < sp.factors.size(); ++f) {
                const Factor& fa = sp.factors[f];
                bool ok = fa.sort == Sort::Nat
                              ? pos[f] <= fa.hi() - band
                              : (pos[f] >= fa.lo() + band && pos[f] <= fa.hi() - band);
                if (!ok) {
                    keep[idx] = false;
                    break;
                }
            }
        }
    }

    std::vector<TruncOp> zs;
    for (const auto& im : imgs) zs.push_back(adjoint_op(im));
    auto interior_frob2 = [&](const TruncOp& x) {
        TruncOp c = compress(x, keep);
        double s = 0.0;
        for (const auto& col : c.cols)
            for (const auto& [r, v] : col) s += std::norm(v);
        return s;
    };
    auto interior_dot = [&](const TruncOp& a, const TruncOp& b) {
        TruncOp ca = compress(a, keep), cb = compress(b, keep);
        cplx s{};
        for (long j = 0; j < ca.dim(); ++j) {
            size_t ia = 0, ib = 0;
            const auto& colA = ca.cols[j];
            const auto& colB = cb.cols[j];
            while (ia < colA.size() && ib < colB.size()) {
                if (colA[ia].first < colB[ib].first) ++ia;
                else if (colA[ia].first > colB[ib].first) ++ib;
                else s += std::conj(colA[ia++].second) * colB[ib++].second;
            }
        }
        return s;
    };

    // Fixed parts A and coefficient carriers B per relation.
    struct Piece {
        char fam;  // '5' or '7'
        int i, j;
        double a2, b2;
        cplx ab;
    };
    std::vector<Piece> pieces;
    for (int i = 1; i <= 2 * n; ++i) {
        for (int j = 1; j <= 2 * n; ++j) {
            if (i == j || i + j >= 2 * n + 1) continue;
            TruncOp A = mul(zs[i - 1], imgs[j - 1]);
            TruncOp t2 = mul(imgs[j - 1], zs[i - 1]);
            t2 *= q;
            A -= t2;
            TruncOp B = mul(imgs[2 * n - i], zs[2 * n - j]);
            pieces.push_back({'5', i, j, interior_frob2(A), interior_frob2(B), interior_dot(A, B)});
        }
    }
    for (int i = 1; i <= n; ++i) {
        TruncOp A = mul(zs[i - 1], imgs[i - 1]);
        TruncOp t2 = mul(imgs[i - 1], zs[i - 1]);
        A -= t2;
        for (int k = i + 1; k <= 2 * n; ++k) {
            TruncOp t3 = mul(imgs[k - 1], zs[k - 1]);
            t3 *= (1.0 - q * q);
            A -= t3;
        }
        TruncOp B = mul(imgs[2 * n - i], zs[2 * n - i]);
        pieces.push_back({'7', i, 0, interior_frob2(A), interior_frob2(B), interior_dot(A, B)});
    }

    // Components that actually occur in some coefficient.
    std::set<int> rho_idx, eps_idx;
    for (const auto& p : pieces) {
        if (p.fam == '5') {
            rho_idx.insert(p.i);
            rho_idx.insert(p.j);
            eps_idx.insert(p.i);
            eps_idx.insert(p.j);
        } else {
            rho_idx.insert(p.i);
        }
    }
    eps_idx.erase(1);  // gauge: eps_1 = +1

    std::vector<int> rhos(rho_idx.begin(), rho_idx.end());
    std::vector<int> epss(eps_idx.begin(), eps_idx.end());
    PresentationParams base = default_params(n);

    auto score_of = [&](const PresentationParams& p) {
        double worst = 0.0;
        for (const auto& pc : pieces) {
            double lam;
            if (pc.fam == '5') {
                lam = (1.0 - q * q) * p.eps[pc.i - 1] * p.eps[pc.j - 1] *
                      std::pow(q, p.rho[pc.i - 1] + p.rho[pc.j - 1]);
            } else {
                lam = (1.0 - q * q) * std::pow(q, 2.0 * p.rho[pc.i - 1]);
            }
            double r2 = pc.a2 - 2.0 * lam * pc.ab.real() + lam * lam * pc.b2;
            worst = std::max(worst, std::sqrt(std::max(r2, 0.0)));
        }
        return worst;
    };

    PresentationParams best = base, second = base;
    double best_s = 1e300, second_s = 1e300;
    std::vector<int> rv(rhos.size(), -n);
    std::vector<int> evv(epss.size(), 0);  // 0 -> +1, 1 -> -1
    long count = 0;
    while (true) {
        PresentationParams cand = base;
        for (size_t a = 0; a < rhos.size(); ++a) cand.rho[rhos[a] - 1] = rv[a];
        bool admissible = true;
        for (const auto& pc : pieces) {
            if (pc.fam == '5' && cand.rho[pc.i - 1] + cand.rho[pc.j - 1] <= 0) {
                admissible = false;
                break;
            }
        }
        if (admissible) {
            std::vector<int> ev0(evv);
            while (true) {
                PresentationParams c2 = cand;
                for (size_t a = 0; a < epss.size(); ++a) c2.eps[epss[a] - 1] = ev0[a] ? -1 : 1;
                double s = score_of(c2);
                ++count;
                if (s < best_s) {
                    second = best;
                    second_s = best_s;
                    best = c2;
                    best_s = s;
                } else if (s < second_s) {
                    second = c2;
                    second_s = s;
                }
                size_t a = 0;
                for (; a < ev0.size(); ++a) {
                    if (++ev0[a] < 2) break;
                    ev0[a] = 0;
                }
                if (a == ev0.size()) break;
            }
        }
        size_t a = 0;
        for (; a < rv.size(); ++a) {
            if (++rv[a] <= n) break;
            rv[a] = -n;
        }
        if (a == rv.size()) break;
    }

    // Rescore the two leaders with true interior operator norms over the full
    // c5/c7 families.
    RelationEvaluator evl(imgs, q);
    std::vector<Relation> rels;
    push_c5(rels, n);
    push_c7(rels, n);
    auto full_score = [&](const PresentationParams& p) {
        double worst = 0.0;
        for (const auto& rel : rels) worst = std::max(worst, evl.residual(rel, p, band));
        return worst;
    };
    out.winner = best;
    out.winner_residual = full_score(best);
    out.runner_up = second;
    out.runner_up_residual = full_score(second);
    out.candidates = static_cast<int>(count);
    out.ok = out.winner_residual <= 1e-8;
    return out;
}

}  // namespace qqs

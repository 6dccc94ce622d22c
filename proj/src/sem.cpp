#include "hols/sem.hpp"

#include "hols/error.hpp"
#include "hols/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace hols {

// ---------------------------------------------------------------------------
// NoiseSpec

NoiseSpec NoiseSpec::gaussian(double variance) {
    if (!(variance >= 0.0) || !std::isfinite(variance)) throw InputError("gaussian variance must be >= 0");
    return {Kind::gaussian, variance, 0.0, 0.0};
}

NoiseSpec NoiseSpec::uniform_var(double variance) {
    if (!(variance >= 0.0) || !std::isfinite(variance)) throw InputError("uniform variance must be >= 0");
    return uniform_half(std::sqrt(3.0 * variance));
}

NoiseSpec NoiseSpec::uniform_half(double half_width) {
    if (!(half_width >= 0.0) || !std::isfinite(half_width)) throw InputError("uniform half-width must be >= 0");
    return {Kind::uniform, half_width, 0.0, 0.0};
}

NoiseSpec NoiseSpec::mixture(double weight, double var1, double var2) {
    if (!(weight >= 0.0 && weight <= 1.0)) throw InputError("mixture weight must lie in [0, 1]");
    if (!(var1 >= 0.0) || !(var2 >= 0.0) || !std::isfinite(var1) || !std::isfinite(var2)) {
        throw InputError("mixture variances must be >= 0");
    }
    return {Kind::mixture, weight, var1, var2};
}

double NoiseSpec::variance() const {
    switch (kind) {
    case Kind::gaussian: return a;
    case Kind::uniform: return a * a / 3.0;
    case Kind::mixture: return a * v1 + (1.0 - a) * v2;
    }
    return 0.0;
}

double NoiseSpec::fourth_cumulant() const {
    switch (kind) {
    case Kind::gaussian: return 0.0;
    case Kind::uniform: return -2.0 / 15.0 * a * a * a * a;
    case Kind::mixture: {
        const double var = variance();
        return 3.0 * (a * v1 * v1 + (1.0 - a) * v2 * v2) - 3.0 * var * var;
    }
    }
    return 0.0;
}

NoiseSpec NoiseSpec::with_variance(double variance_target) const {
    if (!(variance_target >= 0.0)) throw InputError("target variance must be >= 0");
    const double var = variance();
    switch (kind) {
    case Kind::gaussian: return gaussian(variance_target);
    case Kind::uniform: return uniform_var(variance_target);
    case Kind::mixture:
        if (var == 0.0) return gaussian(variance_target);
        return mixture(a, v1 * variance_target / var, v2 * variance_target / var);
    }
    return *this;
}

double NoiseSpec::sample(RandomStream& rng) const {
    switch (kind) {
    case Kind::gaussian: return std::sqrt(a) * rng.normal();
    case Kind::uniform: return a * (2.0 * rng.uniform() - 1.0);
    case Kind::mixture: {
        const double var = rng.uniform() < a ? v1 : v2;
        return std::sqrt(var) * rng.normal();
    }
    }
    return 0.0;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

double parse_number(const std::string& s, const std::string& what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw InputError("expected a number for " + what + ", got '" + s + "'");
    }
    if (used != s.size() || !std::isfinite(v)) throw InputError("expected a number for " + what + ", got '" + s + "'");
    return v;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream is(s);
    std::vector<std::string> out;
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

} // namespace

std::string NoiseSpec::to_string() const {
    switch (kind) {
    case Kind::gaussian: return "gaussian var=" + fmt(a);
    case Kind::uniform: return "uniform half=" + fmt(a);
    case Kind::mixture: return "mixture w=" + fmt(a) + " v1=" + fmt(v1) + " v2=" + fmt(v2);
    }
    return "";
}

NoiseSpec NoiseSpec::parse(const std::string& text) {
    const auto tok = split_ws(text);
    if (tok.empty()) throw InputError("empty noise specification");
    std::map<std::string, double> kv;
    for (std::size_t i = 1; i < tok.size(); ++i) {
        const auto eq = tok[i].find('=');
        if (eq == std::string::npos) throw InputError("noise parameter '" + tok[i] + "' is not key=value");
        const std::string key = tok[i].substr(0, eq);
        if (kv.count(key)) throw InputError("duplicate noise parameter '" + key + "'");
        kv[key] = parse_number(tok[i].substr(eq + 1), key);
    }
    auto take = [&](const std::string& key) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw InputError("noise '" + tok[0] + "' needs parameter '" + key + "'");
        const double v = it->second;
        kv.erase(it);
        return v;
    };
    NoiseSpec out;
    if (tok[0] == "gaussian") {
        out = gaussian(take("var"));
    } else if (tok[0] == "uniform") {
        if (kv.count("half")) out = uniform_half(take("half"));
        else out = uniform_var(take("var"));
    } else if (tok[0] == "mixture") {
        const double w = take("w");
        const double a1 = take("v1");
        out = mixture(w, a1, take("v2"));
    } else {
        throw InputError("unknown noise kind '" + tok[0] + "' (expected gaussian, uniform or mixture)");
    }
    if (!kv.empty()) throw InputError("unexpected noise parameter '" + kv.begin()->first + "'");
    return out;
}

// ---------------------------------------------------------------------------
// SemScenario

Index SemScenario::node_index(const std::string& n) const {
    const auto it = std::find(nodes.begin(), nodes.end(), n);
    if (it == nodes.end()) throw GraphError("unknown node '" + n + "'");
    return static_cast<Index>(it - nodes.begin());
}

std::vector<Index> SemScenario::observed() const {
    std::vector<Index> out;
    for (Index k = 0; k < node_count(); ++k) {
        if (k == response) continue;
        if (std::find(hidden.begin(), hidden.end(), k) != hidden.end()) continue;
        out.push_back(k);
    }
    return out;
}

std::vector<Index> SemScenario::topological_order() const {
    const Index m = node_count();
    std::vector<std::vector<Index>> children(static_cast<std::size_t>(m));
    std::vector<Index> indeg(static_cast<std::size_t>(m), 0);
    for (const auto& e : edges) {
        children[static_cast<std::size_t>(e.from)].push_back(e.to);
        ++indeg[static_cast<std::size_t>(e.to)];
    }
    // smallest ready index first, so the order is canonical
    std::set<Index> ready;
    for (Index k = 0; k < m; ++k)
        if (indeg[static_cast<std::size_t>(k)] == 0) ready.insert(k);
    std::vector<Index> order;
    order.reserve(static_cast<std::size_t>(m));
    while (!ready.empty()) {
        const Index k = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(k);
        for (Index c : children[static_cast<std::size_t>(k)]) {
            if (--indeg[static_cast<std::size_t>(c)] == 0) ready.insert(c);
        }
    }
    if (static_cast<Index>(order.size()) != m) {
        for (Index k = 0; k < m; ++k) {
            if (indeg[static_cast<std::size_t>(k)] > 0) {
                throw GraphError("edge relation has a cycle through node '" + nodes[static_cast<std::size_t>(k)] + "'");
            }
        }
    }
    return order;
}

void SemScenario::validate() const {
    const Index m = node_count();
    if (m == 0) throw GraphError("scenario has no nodes");
    {
        std::set<std::string> seen;
        for (const auto& n : nodes) {
            if (n.empty()) throw GraphError("empty node name");
            if (!seen.insert(n).second) throw GraphError("duplicate node '" + n + "'");
        }
    }
    if (static_cast<Index>(noise.size()) != m) throw GraphError("need exactly one noise specification per node");
    if (response < 0 || response >= m) throw GraphError("response node out of range");
    std::set<std::pair<Index, Index>> pairs;
    for (const auto& e : edges) {
        if (e.from < 0 || e.from >= m || e.to < 0 || e.to >= m) throw GraphError("edge endpoint out of range");
        if (e.from == e.to) throw GraphError("self-loop on node '" + nodes[static_cast<std::size_t>(e.from)] + "'");
        if (!std::isfinite(e.weight)) throw GraphError("non-finite edge weight");
        if (!pairs.insert({e.from, e.to}).second) {
            throw GraphError("duplicate edge " + nodes[static_cast<std::size_t>(e.from)] + " -> " +
                             nodes[static_cast<std::size_t>(e.to)]);
        }
    }
    for (Index h : hidden) {
        if (h < 0 || h >= m) throw GraphError("hidden node out of range");
        if (h == response) throw GraphError("the response cannot be hidden");
    }
    std::set<Index> grouped;
    for (const auto& g : groups) {
        const auto k = static_cast<Index>(g.nodes.size());
        if (k == 0 || g.factor.rows() != k || g.factor.cols() != k) throw GraphError("noise group factor must be square");
        if (!g.factor.allFinite()) throw GraphError("noise group factor has non-finite entries");
        for (Index v : g.nodes) {
            if (v < 0 || v >= m) throw GraphError("noise group node out of range");
            if (!grouped.insert(v).second) throw GraphError("node in more than one noise group");
        }
    }
    if (observed().empty()) throw GraphError("scenario has no observed covariates");
    topological_order();
}

void solve_unit_variance(SemScenario& s, const std::vector<Index>& targets) {
    s.validate();
    std::set<Index> grouped;
    for (const auto& g : s.groups) grouped.insert(g.nodes.begin(), g.nodes.end());
    const std::set<Index> want(targets.begin(), targets.end());
    const Index m = s.node_count();
    std::vector<std::vector<std::pair<Index, double>>> parents(static_cast<std::size_t>(m));
    for (const auto& e : s.edges) parents[static_cast<std::size_t>(e.to)].push_back({e.from, e.weight});

    // covariance built row by row in topological order
    MatrixXd sigma = MatrixXd::Zero(m, m);
    for (Index k : s.topological_order()) {
        if (want.count(k) && grouped.count(k)) throw InputError("unit-variance solving does not support noise groups");
        VectorXd row = VectorXd::Zero(m);
        for (const auto& [p, w] : parents[static_cast<std::size_t>(k)]) row += w * sigma.row(p).transpose();
        double explained = 0.0;
        for (const auto& [p, w] : parents[static_cast<std::size_t>(k)]) explained += w * row(p);
        auto& nz = s.noise[static_cast<std::size_t>(k)];
        if (want.count(k)) {
            const double rest = 1.0 - explained;
            if (!(rest > 0.0)) {
                throw InputError("node '" + s.nodes[static_cast<std::size_t>(k)] +
                                 "': parents already explain variance " + fmt(explained) + " >= 1");
            }
            nz = nz.with_variance(rest);
        }
        row(k) = explained + nz.variance();
        sigma.row(k) = row.transpose();
        sigma.col(k) = row;
    }
}

// ---------------------------------------------------------------------------
// Sampling

SemSample sample_sem(const SemScenario& s, Index n, std::uint64_t seed) {
    s.validate();
    if (n < 1) throw InputError("sample size must be positive");
    const Index m = s.node_count();
    MatrixXd x(n, m);
    for (Index k = 0; k < m; ++k) {
        RandomStream rng(seed, static_cast<std::uint64_t>(k));
        const NoiseSpec& nz = s.noise[static_cast<std::size_t>(k)];
        for (Index i = 0; i < n; ++i) x(i, k) = nz.sample(rng);
    }
    for (const auto& g : s.groups) {
        MatrixXd u(n, static_cast<Index>(g.nodes.size()));
        for (std::size_t c = 0; c < g.nodes.size(); ++c) u.col(static_cast<Index>(c)) = x.col(g.nodes[c]);
        const MatrixXd e = u * g.factor.transpose();
        for (std::size_t c = 0; c < g.nodes.size(); ++c) x.col(g.nodes[c]) = e.col(static_cast<Index>(c));
    }
    std::vector<std::vector<std::pair<Index, double>>> parents(static_cast<std::size_t>(m));
    for (const auto& e : s.edges) parents[static_cast<std::size_t>(e.to)].push_back({e.from, e.weight});
    for (Index k : s.topological_order()) {
        for (const auto& [p, w] : parents[static_cast<std::size_t>(k)]) x.col(k) += w * x.col(p);
    }

    SemSample out;
    const auto obs = s.observed();
    out.data.x.resize(n, static_cast<Index>(obs.size()));
    for (std::size_t c = 0; c < obs.size(); ++c) {
        out.data.x.col(static_cast<Index>(c)) = x.col(obs[c]);
        out.data.names.push_back(s.nodes[static_cast<std::size_t>(obs[c])]);
    }
    out.data.y = x.col(s.response);
    out.latent = std::move(x);
    return out;
}

// ---------------------------------------------------------------------------
// Named scenarios

SemScenario scenario_global_null(const GlobalNullOptions& o) {
    if (!(std::abs(o.r) < 1.0)) throw InputError("|r| must be < 1");
    if (o.p < 1) throw InputError("p must be positive");
    SemScenario s;
    s.name = "global-null";
    for (Index j = 1; j <= o.p; ++j) s.nodes.push_back("X" + std::to_string(j));
    s.nodes.push_back("Y");
    s.response = o.p;
    const NoiseSpec unit = o.noise.with_variance(1.0);
    s.noise.push_back(unit);
    for (Index j = 1; j < o.p; ++j) {
        s.edges.push_back({j - 1, j, o.r});
        s.noise.push_back(unit.with_variance(1.0 - o.r * o.r));
    }
    s.noise.push_back(unit);
    for (Index a : o.active) {
        if (a < 1 || a > o.p) throw InputError("active index " + std::to_string(a) + " outside 1..p");
        s.edges.push_back({a - 1, s.response, o.coef});
    }
    s.validate();
    return s;
}

SemScenario scenario_fig2(const Fig2Options& o) {
    SemScenario s;
    s.name = "fig2";
    s.nodes = {"X1", "X2", "X3", "X4", "X5", "X6", "X7", "Y"};
    s.response = 7;
    s.hidden = {2};
    s.edges = {{0, 1, o.w12}, {1, 3, o.w24}, {2, 3, o.w34}, {3, 5, o.w46},
               {4, 5, o.w56}, {5, 6, o.w67}, {2, 7, o.w3y}};
    s.noise.assign(8, o.observed_noise);
    s.noise[2] = o.hidden_noise;
    s.noise[7] = NoiseSpec::uniform_var(o.response_noise_var);
    solve_unit_variance(s, {0, 1, 2, 3, 4, 5, 6});
    return s;
}

SemScenario scenario_hd_chain(Index n, const HdChainOptions& o) {
    if (n < 2) throw InputError("hd-chain needs n >= 2");
    const Index chains = n / 2;
    SemScenario s;
    s.name = "hd-chain";
    s.nodes.push_back("X1");
    for (Index c = 0; c < chains; ++c) {
        for (Index k = 0; k < 3; ++k) {
            const Index id = 1 + 3 * c + k;
            s.nodes.push_back("X" + std::to_string(id + 1));
            s.edges.push_back({k == 0 ? 0 : id - 1, id, k == 0 ? o.root_weight : o.chain_weight});
        }
    }
    s.response = 2;   // X3, middle of the first chain
    s.noise.assign(static_cast<std::size_t>(s.node_count()), NoiseSpec::uniform_var(1.0));
    std::vector<Index> all(static_cast<std::size_t>(s.node_count()));
    for (Index k = 0; k < s.node_count(); ++k) all[static_cast<std::size_t>(k)] = k;
    solve_unit_variance(s, all);
    return s;
}

MatrixXd default_block_cov(Index b) {
    MatrixXd c(b, b);
    for (Index i = 0; i < b; ++i)
        for (Index j = 0; j < b; ++j) c(i, j) = 1.0 / (1.0 + double(std::abs(i - j)));
    return c;
}

SemScenario scenario_block(const BlockOptions& o) {
    const MatrixXd cov = o.block_cov.size() == 0 ? default_block_cov() : o.block_cov;
    const Index b = cov.rows();
    if (b < 1 || cov.cols() != b || !cov.allFinite()) throw InputError("block covariance must be a square finite matrix");
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, cov.cwiseAbs().maxCoeff())) {
        throw InputError("block covariance must be symmetric");
    }
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw InputError("block covariance is not positive definite");
    std::vector<Index> conf = o.confounded;
    if (conf.empty()) conf = b > 1 ? std::vector<Index>{0, b / 2} : std::vector<Index>{0};
    std::vector<double> signs = o.signs;
    if (signs.empty()) {
        for (std::size_t i = 0; i < conf.size(); ++i) signs.push_back(i % 2 == 0 ? 1.0 : -1.0);
    }
    if (signs.size() != conf.size()) throw InputError("need one sign per confounded column");

    SemScenario s;
    s.name = "block";
    for (Index j = 1; j <= 2 * b; ++j) s.nodes.push_back("X" + std::to_string(j));
    s.nodes.push_back("H");
    s.nodes.push_back("Y");
    const Index h = 2 * b;
    s.response = 2 * b + 1;
    s.hidden = {h};
    const NoiseSpec unit = o.noise.with_variance(1.0);
    s.noise.assign(static_cast<std::size_t>(2 * b), unit);
    s.noise.push_back(NoiseSpec::gaussian(1.0));
    s.noise.push_back(NoiseSpec::gaussian(0.0));
    const MatrixXd factor = llt.matrixL();
    for (Index blk = 0; blk < 2; ++blk) {
        NoiseGroup g;
        for (Index j = 0; j < b; ++j) g.nodes.push_back(blk * b + j);
        g.factor = factor;
        s.groups.push_back(std::move(g));
    }
    for (std::size_t i = 0; i < conf.size(); ++i) {
        if (conf[i] < 0 || conf[i] >= b) throw InputError("confounded column outside the first block");
        s.edges.push_back({h, conf[i], signs[i]});
    }
    s.edges.push_back({h, s.response, 1.0});
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Oracle

std::vector<Index> graph_confounded(const SemScenario& s) {
    s.validate();
    const Index m = s.node_count();
    const Index y = s.response;
    std::vector<std::set<Index>> pa(static_cast<std::size_t>(m)), ch(static_cast<std::size_t>(m));
    for (const auto& e : s.edges) {
        if (e.weight == 0.0) continue;
        pa[static_cast<std::size_t>(e.to)].insert(e.from);
        ch[static_cast<std::size_t>(e.from)].insert(e.to);
    }
    const auto obs = s.observed();
    const std::set<Index> observed(obs.begin(), obs.end());

    // does the response have observed descendants?
    bool y_descendants = false;
    {
        std::vector<Index> stack(ch[static_cast<std::size_t>(y)].begin(), ch[static_cast<std::size_t>(y)].end());
        std::set<Index> seen;
        while (!stack.empty()) {
            const Index k = stack.back();
            stack.pop_back();
            if (!seen.insert(k).second) continue;
            if (observed.count(k)) y_descendants = true;
            for (Index c : ch[static_cast<std::size_t>(k)]) stack.push_back(c);
        }
    }
    // without observed descendants the response is not part of the covariate SEM
    if (!y_descendants) {
        for (Index p : pa[static_cast<std::size_t>(y)]) ch[static_cast<std::size_t>(p)].erase(y);
        pa[static_cast<std::size_t>(y)].clear();
    }
    std::vector<Index> sources(s.hidden.begin(), s.hidden.end());
    if (y_descendants) sources.push_back(y);

    std::set<Index> touched;   // Markov-boundary members and children of the sources
    for (Index h : sources) {
        for (Index p : pa[static_cast<std::size_t>(h)]) touched.insert(p);
        for (Index c : ch[static_cast<std::size_t>(h)]) {
            touched.insert(c);
            for (Index q : pa[static_cast<std::size_t>(c)])
                if (q != h) touched.insert(q);
        }
    }
    // a correlated-noise block shares confounding with any touched member
    for (const auto& g : s.groups) {
        const bool hit = std::any_of(g.nodes.begin(), g.nodes.end(), [&](Index k) { return touched.count(k) > 0; });
        if (hit) touched.insert(g.nodes.begin(), g.nodes.end());
    }
    std::vector<Index> out;
    for (Index k : touched)
        if (observed.count(k)) out.push_back(k);
    return out;
}

PopulationOracle population_oracle(const SemScenario& s, double tol) {
    s.validate();
    const Index m = s.node_count();
    // X = A E with A = (I - B)^{-1}; E = Q u
    MatrixXd b = MatrixXd::Zero(m, m);
    for (const auto& e : s.edges) b(e.to, e.from) += e.weight;
    const MatrixXd a = (MatrixXd::Identity(m, m) - b).partialPivLu().inverse();
    MatrixXd q = MatrixXd::Identity(m, m);
    for (const auto& g : s.groups) {
        for (std::size_t r = 0; r < g.nodes.size(); ++r)
            for (std::size_t c = 0; c < g.nodes.size(); ++c)
                q(g.nodes[r], g.nodes[c]) = g.factor(static_cast<Index>(r), static_cast<Index>(c));
    }
    PopulationOracle o;
    o.source_loadings = a * q;
    o.source_var.resize(m);
    VectorXd kappa(m);
    for (Index k = 0; k < m; ++k) {
        o.source_var(k) = s.noise[static_cast<std::size_t>(k)].variance();
        kappa(k) = s.noise[static_cast<std::size_t>(k)].fourth_cumulant();
    }
    const MatrixXd& load = o.source_loadings;
    const MatrixXd sigma = load * o.source_var.asDiagonal() * load.transpose();

    o.observed = s.observed();
    const auto p = static_cast<Index>(o.observed.size());
    MatrixXd lo(p, m);   // loadings of observed covariates
    for (Index i = 0; i < p; ++i) lo.row(i) = load.row(o.observed[static_cast<std::size_t>(i)]);
    o.sigma_x.resize(p, p);
    VectorXd sxy(p);
    for (Index i = 0; i < p; ++i) {
        sxy(i) = sigma(o.observed[static_cast<std::size_t>(i)], s.response);
        for (Index j = 0; j < p; ++j) {
            o.sigma_x(i, j) = sigma(o.observed[static_cast<std::size_t>(i)], o.observed[static_cast<std::size_t>(j)]);
        }
    }
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(o.sigma_x, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    if (!(ev(0) > 1e-12 * ev(p - 1))) throw SingularDesignError("population covariance of the observed covariates is singular", {});
    const Eigen::LDLT<MatrixXd> ldlt(o.sigma_x);
    o.beta_ols = ldlt.solve(sxy);

    // causal parameter: Y's total effects re-expressed through the observed covariates
    MatrixXd omega_mm(p, p);
    VectorXd omega_ym(p);
    for (Index i = 0; i < p; ++i) {
        omega_ym(i) = a(s.response, o.observed[static_cast<std::size_t>(i)]);
        for (Index j = 0; j < p; ++j) omega_mm(i, j) = a(o.observed[static_cast<std::size_t>(i)], o.observed[static_cast<std::size_t>(j)]);
    }
    o.beta = omega_mm.transpose().partialPivLu().solve(omega_ym);

    // fourth-order moments
    const MatrixXd prec = ldlt.solve(MatrixXd::Identity(p, p));
    const VectorXd resid_load = load.row(s.response).transpose() - lo.transpose() * o.beta_ols;
    o.hols_moment.resize(p);
    o.hols_diff.resize(p);
    const MatrixXd az_all = lo.transpose() * prec;
    for (Index j = 0; j < p; ++j) {
        const VectorXd az = az_all.col(j) / prec(j, j);
        const double ez2 = az.cwiseAbs2().dot(o.source_var);
        const double ez4 = 3.0 * ez2 * ez2 + az.array().square().square().matrix().dot(kappa);
        o.hols_moment(j) = (az.array().cube() * resid_load.array() * kappa.array()).sum();
        o.hols_diff(j) = o.hols_moment(j) / ez4;
    }

    const double scale = std::max(1.0, o.beta_ols.cwiseAbs().maxCoeff());
    for (Index j = 0; j < p; ++j) {
        if (std::abs(o.beta_ols(j) - o.beta(j)) < tol * scale) o.v_set.push_back(j);
    }
    const auto confounded = graph_confounded(s);
    for (Index j = 0; j < p; ++j) {
        const Index node = o.observed[static_cast<std::size_t>(j)];
        if (!std::binary_search(confounded.begin(), confounded.end(), node)) o.u_set.push_back(j);
    }
    return o;
}

// ---------------------------------------------------------------------------
// Scenario files

namespace {

std::vector<std::string> parse_list(const std::string& v) {
    std::string t = trim(v);
    if (!t.empty() && t.front() == '[') {
        if (t.back() != ']') throw InputError("unterminated list");
        t = t.substr(1, t.size() - 2);
    }
    std::replace(t.begin(), t.end(), ',', ' ');
    return split_ws(t);
}

} // namespace

SemScenario parse_scenario(std::istream& in) {
    SemScenario s;
    std::string section;
    std::string response_name;
    std::vector<std::string> hidden_names, unit_names;
    struct RawEdge { std::string from, to; double w; int line; };
    std::vector<RawEdge> raw_edges;
    std::map<std::string, std::pair<NoiseSpec, int>> noise_by_name;
    std::optional<NoiseSpec> default_noise;
    struct RawGroup { std::vector<std::string> names; std::vector<double> values; int line; };
    std::vector<RawGroup> raw_groups;
    bool have_nodes = false;

    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) -> InputError {
        return InputError("scenario line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const bool indented = line[0] == ' ' || line[0] == '\t';
        const std::string t = trim(line);
        try {
            if (!indented) {
                const auto colon = t.find(':');
                if (colon == std::string::npos) throw fail("expected 'key: value'");
                const std::string key = trim(t.substr(0, colon));
                const std::string value = trim(t.substr(colon + 1));
                section.clear();
                if (key == "name") s.name = value;
                else if (key == "nodes") { s.nodes = parse_list(value); have_nodes = true; }
                else if (key == "response") response_name = value;
                else if (key == "hidden") hidden_names = parse_list(value);
                else if (key == "unit_variance") unit_names = parse_list(value);
                else if (key == "edges" || key == "noise" || key == "groups") {
                    if (!value.empty()) throw fail("section '" + key + "' takes indented entries");
                    section = key;
                } else throw fail("unknown key '" + key + "'");
                continue;
            }
            if (section == "edges") {
                const auto arrow = t.find("->");
                const auto colon = t.rfind(':');
                if (arrow == std::string::npos || colon == std::string::npos || colon < arrow) {
                    throw fail("expected 'from -> to: weight'");
                }
                raw_edges.push_back({trim(t.substr(0, arrow)), trim(t.substr(arrow + 2, colon - arrow - 2)),
                                     parse_number(trim(t.substr(colon + 1)), "edge weight"), lineno});
            } else if (section == "noise") {
                const auto colon = t.find(':');
                if (colon == std::string::npos) throw fail("expected 'node: law params'");
                const std::string who = trim(t.substr(0, colon));
                const NoiseSpec spec = NoiseSpec::parse(t.substr(colon + 1));
                if (who == "default") default_noise = spec;
                else if (!noise_by_name.emplace(who, std::make_pair(spec, lineno)).second) {
                    throw fail("duplicate noise for '" + who + "'");
                }
            } else if (section == "groups") {
                const auto colon = t.find(':');
                if (colon == std::string::npos) throw fail("expected 'nodes: factor entries'");
                RawGroup g;
                g.names = split_ws(t.substr(0, colon));
                for (const auto& tok : split_ws(t.substr(colon + 1))) g.values.push_back(parse_number(tok, "group factor"));
                g.line = lineno;
                raw_groups.push_back(std::move(g));
            } else {
                throw fail("indented line outside a section");
            }
        } catch (const GraphError&) {
            throw;
        } catch (const InputError& e) {
            const std::string msg = e.what();
            if (msg.rfind("scenario line", 0) == 0) throw;
            throw fail(msg);
        }
    }
    if (!have_nodes) throw InputError("scenario: missing 'nodes'");
    if (response_name.empty()) throw InputError("scenario: missing 'response'");
    auto index_at = [&](const std::string& name, int at) {
        const auto it = std::find(s.nodes.begin(), s.nodes.end(), name);
        if (it == s.nodes.end()) {
            throw GraphError("scenario line " + std::to_string(at) + ": unknown node '" + name + "'");
        }
        return static_cast<Index>(it - s.nodes.begin());
    };
    s.response = index_at(response_name, 0);
    for (const auto& h : hidden_names) s.hidden.push_back(index_at(h, 0));
    for (const auto& e : raw_edges) s.edges.push_back({index_at(e.from, e.line), index_at(e.to, e.line), e.w});
    s.noise.assign(s.nodes.size(), default_noise.value_or(NoiseSpec::gaussian(1.0)));
    for (const auto& [name, spec] : noise_by_name) s.noise[static_cast<std::size_t>(index_at(name, spec.second))] = spec.first;
    for (const auto& g : raw_groups) {
        NoiseGroup grp;
        for (const auto& nme : g.names) grp.nodes.push_back(index_at(nme, g.line));
        const auto k = static_cast<Index>(grp.nodes.size());
        if (static_cast<Index>(g.values.size()) != k * k) {
            throw InputError("scenario line " + std::to_string(g.line) + ": group of " + std::to_string(k) +
                             " nodes needs " + std::to_string(k * k) + " factor entries");
        }
        grp.factor.resize(k, k);
        for (Index r = 0; r < k; ++r)
            for (Index c = 0; c < k; ++c) grp.factor(r, c) = g.values[static_cast<std::size_t>(r * k + c)];
        s.groups.push_back(std::move(grp));
    }
    s.validate();
    if (!unit_names.empty()) {
        std::vector<Index> ids;
        for (const auto& u : unit_names) ids.push_back(index_at(u, 0));
        solve_unit_variance(s, ids);
    }
    return s;
}

SemScenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open scenario file '" + path + "'");
    return parse_scenario(in);
}

std::string serialize_scenario(const SemScenario& s) {
    std::ostringstream os;
    auto name = [&](Index k) { return s.nodes[static_cast<std::size_t>(k)]; };
    if (!s.name.empty()) os << "name: " << s.name << "\n";
    os << "nodes:";
    for (const auto& n : s.nodes) os << ' ' << n;
    os << "\nresponse: " << name(s.response) << "\n";
    os << "hidden: [";
    for (std::size_t i = 0; i < s.hidden.size(); ++i) os << (i ? ", " : "") << name(s.hidden[i]);
    os << "]\n";
    if (!s.edges.empty()) {
        os << "edges:\n";
        for (const auto& e : s.edges) os << "  " << name(e.from) << " -> " << name(e.to) << ": " << fmt(e.weight) << "\n";
    }
    os << "noise:\n";
    for (Index k = 0; k < s.node_count(); ++k) os << "  " << name(k) << ": " << s.noise[static_cast<std::size_t>(k)].to_string() << "\n";
    if (!s.groups.empty()) {
        os << "groups:\n";
        for (const auto& g : s.groups) {
            os << " ";
            for (Index k : g.nodes) os << ' ' << name(k);
            os << ":";
            for (Index r = 0; r < g.factor.rows(); ++r)
                for (Index c = 0; c < g.factor.cols(); ++c) os << ' ' << fmt(g.factor(r, c));
            os << "\n";
        }
    }
    return os.str();
}

} // namespace hols

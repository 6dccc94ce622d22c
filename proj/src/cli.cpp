#include "hols/cli.hpp"

#include "hols/error.hpp"
#include "hols/parallel.hpp"
#include "hols/random.hpp"
#include "hols/recovery.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

namespace hols::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// CSV input

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

std::string where(const std::string& source, std::size_t line) {
    return source + " line " + std::to_string(line) + ": ";
}

std::vector<std::string> split_fields(const std::string& line, const std::string& source, std::size_t lineno) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            if (!trim(cur).empty()) throw InputError(where(source, lineno) + "stray quote inside a field");
            cur.clear();
            quoted = was_quoted = true;
        } else if (c == ',') {
            out.push_back(was_quoted ? cur : trim(cur));
            cur.clear();
            was_quoted = false;
        } else {
            if (was_quoted && c != ' ' && c != '\t') {
                throw InputError(where(source, lineno) + "text after a closing quote");
            }
            if (!was_quoted) cur += c;
        }
    }
    if (quoted) throw InputError(where(source, lineno) + "unterminated quote");
    out.push_back(was_quoted ? cur : trim(cur));
    return out;
}

bool skippable(const std::string& line) {
    const auto b = line.find_first_not_of(" \t");
    return b == std::string::npos || line[b] == '#';
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
    std::string s;
    for (const auto& it : items) s += (s.empty() ? "" : sep) + it;
    return s;
}

} // namespace

Table read_csv(std::istream& in, const std::string& source) {
    Table t;
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (skippable(line)) continue;
        auto fields = split_fields(line, source, lineno);
        if (!have_header) {
            std::set<std::string> seen;
            for (const auto& f : fields) {
                if (f.empty()) throw InputError(where(source, lineno) + "empty column name in header");
                if (!seen.insert(f).second) throw InputError(where(source, lineno) + "duplicate column '" + f + "'");
            }
            t.header = std::move(fields);
            have_header = true;
            continue;
        }
        if (fields.size() != t.header.size()) {
            throw InputError(where(source, lineno) + "expected " + std::to_string(t.header.size()) +
                             " fields, found " + std::to_string(fields.size()));
        }
        std::vector<double> row(fields.size());
        for (std::size_t c = 0; c < fields.size(); ++c) {
            const std::string& f = fields[c];
            const std::string col = "column '" + t.header[c] + "': ";
            if (f.empty()) throw InputError(where(source, lineno) + col + "missing value");
            const char* first = f.data();
            if (f.size() > 1 && f[0] == '+' && f[1] != '-') ++first;
            const auto res = std::from_chars(first, f.data() + f.size(), row[c]);
            if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
                throw InputError(where(source, lineno) + col + "'" + f + "' is not a number");
            }
            if (!std::isfinite(row[c])) throw InputError(where(source, lineno) + col + "non-finite value");
        }
        rows.push_back(std::move(row));
    }
    if (!have_header) throw InputError(source + ": no header row");
    if (rows.empty()) throw InputError(source + ": no data rows");
    t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < rows[r].size(); ++c) t.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
    }
    return t;
}

Table read_csv_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open data file '" + path + "'");
    return read_csv(f, path);
}

Dataset dataset_from_table(const Table& table, const std::string& response) {
    const auto it = std::find(table.header.begin(), table.header.end(), response);
    if (it == table.header.end()) {
        throw InputError("response column '" + response + "' not found; available columns: " + join(table.header, ", "));
    }
    if (table.header.size() < 2) throw InputError("data has no covariate columns besides '" + response + "'");
    const auto ry = static_cast<Index>(it - table.header.begin());
    Dataset d;
    d.y = table.values.col(ry);
    d.x.resize(table.values.rows(), table.values.cols() - 1);
    Index k = 0;
    for (Index c = 0; c < table.values.cols(); ++c) {
        if (c == ry) continue;
        d.x.col(k++) = table.values.col(c);
        d.names.push_back(table.header[static_cast<std::size_t>(c)]);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Scenarios and studies

namespace {

// "name:key=value,key=value"
std::pair<std::string, std::map<std::string, double>> split_spec(const std::string& spec) {
    const auto colon = spec.find(':');
    std::map<std::string, double> params;
    if (colon == std::string::npos) return {spec, params};
    std::stringstream ss(spec.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw InputError("scenario parameter '" + item + "' is not key=value");
        const std::string key = trim(item.substr(0, eq));
        const std::string val = trim(item.substr(eq + 1));
        double v = 0.0;
        const auto res = std::from_chars(val.data(), val.data() + val.size(), v);
        if (res.ec != std::errc() || res.ptr != val.data() + val.size()) {
            throw InputError("scenario parameter '" + key + "': '" + val + "' is not a number");
        }
        params[key] = v;
    }
    return {spec.substr(0, colon), params};
}

void reject_unknown(const std::map<std::string, double>& params, const std::set<std::string>& known,
                    const std::string& name) {
    for (const auto& [k, v] : params) {
        if (!known.count(k)) throw InputError("scenario '" + name + "' has no parameter '" + k + "'");
    }
}

const std::set<std::string> kNamed = {"global-null", "fig2", "hd-chain", "block"};

} // namespace

bool is_named_scenario(const std::string& spec) { return kNamed.count(split_spec(spec).first) > 0; }

SemScenario resolve_scenario(const std::string& spec, Index n) {
    if (spec.empty()) throw InputError("empty scenario");
    const std::string base = spec.substr(0, spec.find(':'));
    if (!kNamed.count(base)) {
        if (!fs::exists(spec)) {
            throw InputError("unknown scenario '" + spec + "': not one of global-null, fig2, hd-chain, block "
                             "and no such file");
        }
        return load_scenario(spec);
    }
    const auto [name, params] = split_spec(spec);
    if (name == "global-null") {
        reject_unknown(params, {"p", "r", "coef"}, name);
        GlobalNullOptions o;
        if (params.count("p")) {
            const double p = params.at("p");
            if (!(p >= 1 && p == std::floor(p))) throw InputError("global-null: p must be a positive integer");
            o.p = static_cast<Index>(p);
        }
        if (params.count("r")) o.r = params.at("r");
        if (params.count("coef")) o.coef = params.at("coef");
        std::erase_if(o.active, [&](Index a) { return a > o.p; });
        return scenario_global_null(o);
    }
    if (name == "fig2") {
        reject_unknown(params, {"w24", "w34"}, name);
        Fig2Options o;
        if (params.count("w24")) o.w24 = params.at("w24");
        if (params.count("w34")) o.w34 = params.at("w34");
        return scenario_fig2(o);
    }
    if (name == "hd-chain") {
        reject_unknown(params, {"weight"}, name);
        HdChainOptions o;
        if (params.count("weight")) o.root_weight = o.chain_weight = params.at("weight");
        return scenario_hd_chain(n, o);
    }
    reject_unknown(params, {}, name);
    return scenario_block();
}

Method parse_method(const std::string& s) {
    if (s == "auto") return Method::automatic;
    if (s == "ols") return Method::ols;
    if (s == "hd") return Method::hd;
    throw InputError("unknown method '" + s + "' (expected auto, ols or hd)");
}

std::string to_string(Method m) {
    switch (m) {
    case Method::automatic: return "auto";
    case Method::ols: return "ols";
    case Method::hd: return "hd";
    }
    return "auto";
}

std::uint64_t replicate_seed(std::uint64_t seed, Index n, std::size_t r) {
    return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(n)), r);
}

std::vector<StudyCell> run_study(const StudyConfig& config) {
    if (config.replicates < 1) throw InputError("replicates must be positive");
    if (config.n_list.empty()) throw InputError("empty sample-size list");
    std::vector<StudyCell> cells;
    for (Index n : config.n_list) {
        StudyCell cell;
        cell.n = n;
        cell.scenario = resolve_scenario(config.scenario, n);
        cell.oracle = population_oracle(cell.scenario);
        const auto p = static_cast<Index>(cell.oracle.observed.size());
        // exact least squares while n is comfortably larger than p
        cell.method = config.method != Method::automatic ? config.method : (2 * p > n ? Method::hd : Method::ols);
        if (cell.method == Method::ols && n <= p + 1) {
            throw InputError("n=" + std::to_string(n) + " is too small for the ols method with p=" + std::to_string(p));
        }
        const auto reps = config.replicates;
        cell.z.resize(static_cast<Index>(reps), p);
        cell.p_raw.resize(static_cast<Index>(reps), p);
        cell.p_adj.resize(static_cast<Index>(reps), p);
        cell.sigma_hat.resize(static_cast<Index>(reps));
        cell.global_reject.assign(reps, 0);
        cell.seeds.resize(reps);
        HdConfig hd = config.hd;
        hd.n_sim = config.n_sim;
        parallel_for(reps, [&](std::size_t r) {
            const std::uint64_t s = replicate_seed(config.seed, n, r);
            cell.seeds[r] = s;
            const SemSample sample = sample_sem(cell.scenario, n, s);
            const HolsReport rep = cell.method == Method::ols
                                       ? hols_check(sample.data, config.n_sim, config.alpha, derive_seed(s, 1))
                                       : hd_hols_check(sample.data, hd, config.alpha, derive_seed(s, 1)).report;
            const auto row = static_cast<Index>(r);
            for (Index j = 0; j < p; ++j) {
                const auto& st = rep.stats[static_cast<std::size_t>(j)];
                cell.z(row, j) = st.z;
                cell.p_raw(row, j) = st.p_raw;
                cell.p_adj(row, j) = st.p_adj;
            }
            cell.sigma_hat(row) = rep.sigma_hat;
            cell.global_reject[r] = rep.global_reject ? 1 : 0;
        });
        cells.push_back(std::move(cell));
    }
    return cells;
}

double ks_uniform(std::vector<double> values) {
    if (values.empty()) throw InputError("ks_uniform: empty sample");
    std::sort(values.begin(), values.end());
    const double m = double(values.size());
    double d = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double u = std::clamp(values[i], 0.0, 1.0);
        d = std::max({d, double(i + 1) / m - u, u - double(i) / m});
    }
    return d;
}

// ---------------------------------------------------------------------------
// Output

namespace {

std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + '"';
}

std::uint64_t fnv1a_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open '" + path + "'");
    std::uint64_t h = 1469598103934665603ull;
    char buf[1 << 16];
    while (f) {
        f.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < f.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

std::string hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

class Csv {
public:
    Csv(const fs::path& path, const ojson& manifest, const std::vector<std::string>& header)
        : f_(path, std::ios::binary) {
        if (!f_) throw InputError("cannot write '" + path.string() + "'");
        f_ << "# hols-manifest " << manifest.dump() << '\n';
        row(header);
    }
    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) f_ << (i ? "," : "") << csv_field(fields[i]);
        f_ << '\n';
    }

private:
    std::ofstream f_;
};

void write_json(const fs::path& path, const ojson& j) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write '" + path.string() + "'");
    f << j.dump(2) << '\n';
}

fs::path prepare_out(const std::string& out) {
    if (out.empty()) throw InputError("--out must name a directory");
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw InputError("cannot create output directory '" + out + "'");
    return fs::path(out);
}

ojson defaults_json() {
    const LassoOptions lasso;
    return ojson{{"n_sim", kDefaultNSim},
                 {"alpha", 0.05},
                 {"exact_fit_tolerance", kExactFitTolerance},
                 {"lasso_tolerance", lasso.tolerance},
                 {"lasso_kkt_tolerance", lasso.kkt_tolerance},
                 {"lasso_max_sweeps", lasso.max_sweeps},
                 {"cv_saturated_fraction", kSaturatedFraction}};
}

ojson make_manifest(const std::string& command, const ojson& options, const ojson& inputs) {
    return ojson{{"tool", "hols"},     {"version", kVersion}, {"command", command},
                 {"options", options}, {"inputs", inputs},    {"defaults", defaults_json()}};
}

ojson stat_json(const CovariateStat& s) {
    ojson j{{"index", s.index + 1},   {"name", s.name}, {"beta_ols", s.beta_ols}, {"beta_hols", s.beta_hols},
            {"diff", s.diff},     {"se", s.se},     {"z", s.z},               {"p_raw", s.p_raw},
            {"p_adj", s.p_adj},   {"degenerate", s.degenerate}};
    if (!s.note.empty()) j["note"] = s.note;
    return j;
}

ojson report_json(const HolsReport& r, const std::string& method) {
    ojson stats = ojson::array();
    for (const auto& s : r.stats) stats.push_back(stat_json(s));
    return ojson{{"method", method},
                 {"n", r.n},
                 {"p", r.p},
                 {"alpha", r.alpha},
                 {"n_sim", r.n_sim},
                 {"seed", r.seed},
                 {"sigma_hat", r.sigma_hat},
                 {"global_reject", r.global_reject},
                 {"min_p_adj", r.min_p_adj()},
                 {"degenerate", r.degenerate},
                 {"warnings", r.warnings},
                 {"covariates", stats}};
}

const std::vector<std::string> kStatsHeader = {"index", "name", "beta_ols", "beta_hols", "diff", "se",
                                               "z",     "p_raw", "p_adj",   "degenerate"};

std::vector<std::string> stat_row(const CovariateStat& s) {
    return {std::to_string(s.index + 1), s.name,      num(s.beta_ols), num(s.beta_hols), num(s.diff),
            num(s.se),               num(s.z),    num(s.p_raw),    num(s.p_adj),     s.degenerate ? "1" : "0"};
}

void print_report(const HolsReport& r, std::ostream& out) {
    out << "n=" << r.n << " p=" << r.p << " sigma_hat=" << num(r.sigma_hat) << " min_p_adj=" << num(r.min_p_adj())
        << " global_reject=" << (r.global_reject ? "true" : "false") << '\n';
    for (const auto& s : r.stats) {
        out << "  " << s.name << ": z=" << num(s.z) << " p_raw=" << num(s.p_raw) << " p_adj=" << num(s.p_adj)
            << (s.degenerate ? " (degenerate)" : "") << '\n';
    }
}

// ---------------------------------------------------------------------------
// Command options

struct CommonOptions {
    double alpha = 0.05;
    std::size_t nsim = kDefaultNSim;
    std::uint64_t seed = 1;
    std::string out;
};

struct HdOptions {
    std::string lambda_mode = "cv";
    std::string lambda_j_mode;
    std::string lambda_tilde_mode;
    double lambda = 0.0, lambda_j = 0.0, lambda_tilde = 0.0;
    double rate_constant = 1.0;
    double tilde_rate_constant = 0.0;
    double sparsity = 0.0;
    int folds = 10;
    std::size_t grid_size = 50;
    std::size_t cv_patience = kDefaultCvPatience;
    std::string cv_rule = "1se";
    std::string sigma_mode = "dof";
    CLI::Option* lambda_opt = nullptr;
    CLI::Option* lambda_j_opt = nullptr;
    CLI::Option* lambda_tilde_opt = nullptr;
    CLI::Option* tilde_rate_opt = nullptr;
};

struct StudyOptions {
    std::string scenario;
    std::string n = "1000";
    std::size_t reps = 200;
    std::string method = "auto";
    std::string tau_grid;
};

void add_common(CLI::App* sub, CommonOptions& o) {
    sub->add_option("--alpha", o.alpha, "level of the global test")->capture_default_str();
    sub->add_option("--nsim", o.nsim, "draws of the simulated max-null")->capture_default_str();
    sub->add_option("--seed", o.seed, "random seed")->capture_default_str();
    sub->add_option("--out", o.out, "output directory")->required();
}

void add_hd(CLI::App* sub, HdOptions& o) {
    sub->add_option("--lambda-mode", o.lambda_mode, "penalty source for every fit: cv, rate or fixed")
        ->capture_default_str();
    sub->add_option("--lambda-j-mode", o.lambda_j_mode, "penalty source of the nodewise fits (default: --lambda-mode)");
    sub->add_option("--lambda-tilde-mode", o.lambda_tilde_mode,
                    "penalty source of the second-level fits (default: --lambda-mode)");
    o.lambda_opt = sub->add_option("--lambda", o.lambda, "fixed penalty of the response fit");
    o.lambda_j_opt = sub->add_option("--lambda-j", o.lambda_j, "fixed nodewise penalty");
    o.lambda_tilde_opt = sub->add_option("--lambda-tilde", o.lambda_tilde, "fixed second-level penalty");
    sub->add_option("--rate-constant", o.rate_constant, "constant of the rate penalties")->capture_default_str();
    o.tilde_rate_opt = sub->add_option("--tilde-rate-constant", o.tilde_rate_constant,
                                       "constant of the second-level rate (default: --rate-constant)");
    sub->add_option("--sparsity", o.sparsity, "nodewise sparsity used by the second-level rate")
        ->capture_default_str();
    sub->add_option("--folds", o.folds, "cross-validation folds")->capture_default_str();
    sub->add_option("--grid-size", o.grid_size, "cross-validation grid length")->capture_default_str();
    sub->add_option("--cv-patience", o.cv_patience, "grid points without improvement before a CV path stops (0: never)")
        ->capture_default_str();
    sub->add_option("--lambda-cv-rule", o.cv_rule, "CV pick of the response penalty: min or 1se")->capture_default_str();
    sub->add_option("--sigma-mode", o.sigma_mode, "noise estimate: dof or plugin")->capture_default_str();
}

void add_study(CLI::App* sub, StudyOptions& o) {
    sub->add_option("--scenario", o.scenario, "global-null, fig2, hd-chain, block or a scenario file")->required();
    sub->add_option("--n", o.n, "comma-separated sample sizes")->capture_default_str();
    sub->add_option("--reps", o.reps, "replicates per sample size")->capture_default_str();
    sub->add_option("--method", o.method, "auto, ols or hd")->capture_default_str();
}

void validate_common(const CommonOptions& o) {
    if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw InputError("--alpha must lie in (0, 1)");
    if (o.nsim < 100) throw InputError("--nsim must be at least 100");
}

// Normalizes the mode strings in place.
HdConfig resolve_hd(HdOptions& o) {
    if (o.lambda_j_mode.empty()) o.lambda_j_mode = o.lambda_mode;
    if (o.lambda_tilde_mode.empty()) o.lambda_tilde_mode = o.lambda_mode;
    if (o.tilde_rate_opt == nullptr || o.tilde_rate_opt->count() == 0) o.tilde_rate_constant = o.rate_constant;
    if (!(o.rate_constant > 0.0) || !(o.tilde_rate_constant > 0.0)) throw InputError("rate constants must be positive");
    if (o.sparsity < 0.0) throw InputError("--sparsity must be nonnegative");
    if (o.folds < 2) throw InputError("--folds must be at least 2");
    if (o.grid_size < 2) throw InputError("--grid-size must be at least 2");
    HdConfig c;
    auto fill = [&](PenaltySpec& spec, const std::string& mode, double value, CLI::Option* opt, const char* flag,
                    double rate) {
        spec.source = parse_penalty_source(mode);
        spec.rate_constant = rate;
        spec.sparsity = o.sparsity;
        if (spec.source == PenaltySource::fixed) {
            const bool given = opt == nullptr ? value > 0.0 : opt->count() > 0;
            if (!given) throw InputError(std::string(flag) + " is required when its mode is fixed");
            if (!(value >= 0.0)) throw InputError(std::string(flag) + " must be nonnegative");
            spec.value = value;
        }
    };
    fill(c.lambda, o.lambda_mode, o.lambda, o.lambda_opt, "--lambda", o.rate_constant);
    fill(c.lambda_j, o.lambda_j_mode, o.lambda_j, o.lambda_j_opt, "--lambda-j", o.rate_constant);
    fill(c.lambda_tilde, o.lambda_tilde_mode, o.lambda_tilde, o.lambda_tilde_opt, "--lambda-tilde",
         o.tilde_rate_constant);
    c.folds = o.folds;
    c.grid_size = o.grid_size;
    c.cv_patience = o.cv_patience;
    c.lambda.rule = parse_cv_rule(o.cv_rule);
    c.sigma_mode = parse_sigma_mode(o.sigma_mode);
    return c;
}

void hd_options_json(ojson& j, const HdOptions& o) {
    j["lambda-mode"] = o.lambda_mode;
    j["lambda-j-mode"] = o.lambda_j_mode;
    j["lambda-tilde-mode"] = o.lambda_tilde_mode;
    if (o.lambda_mode == "fixed") j["lambda"] = o.lambda;
    if (o.lambda_j_mode == "fixed") j["lambda-j"] = o.lambda_j;
    if (o.lambda_tilde_mode == "fixed") j["lambda-tilde"] = o.lambda_tilde;
    j["rate-constant"] = o.rate_constant;
    j["tilde-rate-constant"] = o.tilde_rate_constant;
    j["sparsity"] = o.sparsity;
    j["folds"] = o.folds;
    j["grid-size"] = o.grid_size;
    j["cv-patience"] = o.cv_patience;
    j["lambda-cv-rule"] = o.cv_rule;
    j["sigma-mode"] = o.sigma_mode;
}

std::vector<Index> parse_n_list(const std::string& text) {
    std::vector<Index> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string t = trim(item);
        double v = 0.0;
        const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
        if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size() || !(v >= 2.0) || v != std::floor(v) ||
            v > 1e9) {
            throw InputError("--n: '" + t + "' is not a sample size >= 2");
        }
        out.push_back(static_cast<Index>(v));
    }
    if (out.empty()) throw InputError("--n: empty list");
    return out;
}

std::string n_list_string(const std::vector<Index>& ns) {
    std::string s;
    for (Index n : ns) s += (s.empty() ? "" : ",") + std::to_string(n);
    return s;
}

ojson file_input(const std::string& path) { return ojson{{"path", path}, {"fnv1a", hex(fnv1a_file(path))}}; }

// ---------------------------------------------------------------------------
// Commands

int cmd_check(const std::string& data_path, const std::string& response, CommonOptions& common, HdOptions* hd,
              std::ostream& out, std::ostream& err) {
    validate_common(common);
    const Table table = read_csv_file(data_path);
    const Dataset data = dataset_from_table(table, response);
    ojson options{{"data", data_path}, {"response", response}};
    options["alpha"] = common.alpha;
    options["nsim"] = common.nsim;
    options["seed"] = common.seed;
    HdConfig config;
    if (hd) {
        config = resolve_hd(*hd);
        config.n_sim = common.nsim;
        hd_options_json(options, *hd);
    }
    options["out"] = common.out;
    const ojson manifest = make_manifest(hd ? "check-hd" : "check", options, ojson{{"data", file_input(data_path)}});

    ojson report;
    HolsReport base;
    if (hd) {
        const HdReport r = hd_hols_check(data, config, common.alpha, common.seed);
        base = r.report;
        report = report_json(base, "hols-hd");
        ojson pen = ojson::array();
        for (std::size_t j = 0; j < r.lambda_j.size(); ++j) {
            pen.push_back(ojson{{"name", base.stats[j].name},
                                {"lambda_j", r.lambda_j[j]},
                                {"lambda_tilde_j", r.lambda_tilde_j[j]},
                                {"tilde_fallback", static_cast<bool>(r.tilde_fallback[j])}});
        }
        report["hd"] = ojson{{"lambda", r.beta_fit.lambda},
                             {"support_size", r.beta_fit.active_set.size()},
                             {"sigma_mode", to_string(config.sigma_mode)},
                             {"penalties", pen}};
    } else {
        base = hols_check(data, common.nsim, common.alpha, common.seed);
        report = report_json(base, "hols");
    }
    ojson doc{{"manifest", manifest}};
    for (auto& [k, v] : report.items()) doc[k] = v;

    const fs::path dir = prepare_out(common.out);
    write_json(dir / "report.json", doc);
    write_json(dir / "manifest.json", manifest);
    Csv stats(dir / "stats.csv", manifest, kStatsHeader);
    for (const auto& s : base.stats) stats.row(stat_row(s));

    print_report(base, out);
    for (const auto& w : base.warnings) err << "warning: " << w << '\n';
    if (base.degenerate) {
        err << "hols: error: residual variance is zero, no test is possible (report written)\n";
        return 2;
    }
    return 0;
}

struct StudyRun {
    StudyConfig config;
    std::vector<StudyCell> cells;
    ojson manifest;
};

StudyRun run_study_command(const std::string& command, StudyOptions& s, CommonOptions& common, HdOptions& hd,
                           const std::vector<double>* tau_grid) {
    validate_common(common);
    StudyRun run;
    StudyConfig& c = run.config;
    c.scenario = s.scenario;
    c.n_list = parse_n_list(s.n);
    c.replicates = s.reps;
    if (c.replicates < 1) throw InputError("--reps must be positive");
    c.seed = common.seed;
    c.alpha = common.alpha;
    c.n_sim = common.nsim;
    c.method = parse_method(s.method);
    c.hd = resolve_hd(hd);

    ojson options{{"scenario", s.scenario}, {"n", n_list_string(c.n_list)}, {"reps", s.reps}, {"method", s.method}};
    if (tau_grid) options["tau-grid"] = s.tau_grid;
    options["alpha"] = common.alpha;
    options["nsim"] = common.nsim;
    options["seed"] = common.seed;
    hd_options_json(options, hd);
    options["out"] = common.out;
    ojson inputs = ojson::object();
    if (!is_named_scenario(s.scenario)) {
        if (!fs::exists(s.scenario)) resolve_scenario(s.scenario, c.n_list.front());   // throws the usual message
        inputs["scenario"] = file_input(s.scenario);
    }
    run.manifest = make_manifest(command, options, inputs);

    if (tau_grid) {
        for (Index n : c.n_list) {
            const SemScenario sc = resolve_scenario(c.scenario, n);
            const PopulationOracle o = population_oracle(sc);
            if (o.u_set.size() == o.observed.size()) {
                throw InputError("scenario '" + s.scenario + "' has no confounded covariate at n=" + std::to_string(n) +
                                 "; recovery curves need one");
            }
        }
    }
    prepare_out(common.out);
    run.cells = run_study(c);
    return run;
}

bool contains(const std::vector<Index>& v, Index x) { return std::find(v.begin(), v.end(), x) != v.end(); }

std::string name_of(const StudyCell& cell, Index j) {
    return cell.scenario.nodes[static_cast<std::size_t>(cell.oracle.observed[static_cast<std::size_t>(j)])];
}

ojson oracle_json(const StudyCell& cell) {
    ojson names = ojson::array();
    for (std::size_t j = 0; j < cell.oracle.observed.size(); ++j) names.push_back(name_of(cell, static_cast<Index>(j)));
    auto vec = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return ojson{{"names", names},
                 {"u_set", cell.oracle.u_set},
                 {"v_set", cell.oracle.v_set},
                 {"beta", vec(cell.oracle.beta)},
                 {"beta_ols", vec(cell.oracle.beta_ols)}};
}

int cmd_simulate(StudyOptions& s, CommonOptions& common, HdOptions& hd, std::ostream& out) {
    const StudyRun run = run_study_command("simulate", s, common, hd, nullptr);
    const fs::path dir(common.out);
    const double alpha = common.alpha;
    Csv summary(dir / "summary.csv", run.manifest,
                {"n", "index", "name", "in_u", "bias", "mean_abs_z", "mean_z", "reject_raw", "reject_adj"});
    Csv runs(dir / "runs.csv", run.manifest, {"n", "replicate", "seed", "sigma_hat", "global_reject", "min_p_adj"});
    Csv zstats(dir / "zstats.csv", run.manifest, {"n", "replicate", "index", "name", "z", "p_raw", "p_adj"});
    Csv ecdf(dir / "ecdf.csv", run.manifest, {"n", "set", "p_value", "ecdf"});
    ojson cells = ojson::array();
    for (const StudyCell& cell : run.cells) {
        const Index reps = cell.z.rows();
        const Index p = cell.z.cols();
        const std::string ns = std::to_string(cell.n);
        const VectorXd bias = cell.oracle.bias();
        for (Index j = 0; j < p; ++j) {
            const double rr = (cell.p_raw.col(j).array() <= alpha).cast<double>().mean();
            const double ra = (cell.p_adj.col(j).array() <= alpha).cast<double>().mean();
            summary.row({ns, std::to_string(j + 1), name_of(cell, j), contains(cell.oracle.u_set, j) ? "1" : "0",
                         num(bias(j)), num(cell.z.col(j).cwiseAbs().mean()), num(cell.z.col(j).mean()), num(rr),
                         num(ra)});
        }
        for (Index r = 0; r < reps; ++r) {
            const auto rr = static_cast<std::size_t>(r);
            runs.row({ns, std::to_string(r), std::to_string(cell.seeds[rr]), num(cell.sigma_hat(r)),
                      cell.global_reject[rr] ? "1" : "0", num(cell.p_adj.row(r).minCoeff())});
            for (Index j = 0; j < p; ++j) {
                zstats.row({ns, std::to_string(r), std::to_string(j + 1), name_of(cell, j), num(cell.z(r, j)),
                            num(cell.p_raw(r, j)), num(cell.p_adj(r, j))});
            }
        }
        auto pooled = [&](bool only_u) {
            std::vector<double> v;
            for (Index j = 0; j < p; ++j) {
                if (only_u && !contains(cell.oracle.u_set, j)) continue;
                for (Index r = 0; r < reps; ++r) v.push_back(cell.p_raw(r, j));
            }
            std::sort(v.begin(), v.end());
            return v;
        };
        ojson cj{{"n", cell.n}, {"method", to_string(cell.method)}, {"replicates", reps}};
        for (const bool only_u : {true, false}) {
            const auto v = pooled(only_u);
            const char* set = only_u ? "u" : "all";
            if (v.empty()) {
                cj[std::string("ks_") + set] = nullptr;
                continue;
            }
            for (std::size_t i = 0; i < v.size(); ++i) ecdf.row({ns, set, num(v[i]), num(double(i + 1) / double(v.size()))});
            cj[std::string("ks_") + set] = ks_uniform(v);
        }
        const double global = double(std::count(cell.global_reject.begin(), cell.global_reject.end(), 1)) / double(reps);
        const VectorXd s2 = cell.sigma_hat.array().square();
        cj["global_reject_rate"] = global;
        cj["mean_sigma2"] = s2.mean();
        cj["fraction_sigma2_above_1"] = (s2.array() > 1.0).cast<double>().mean();
        cj["oracle"] = oracle_json(cell);
        cells.push_back(cj);
        out << "n=" << cell.n << " method=" << to_string(cell.method) << " reps=" << reps
            << " global_reject_rate=" << num(global);
        if (!cj["ks_u"].is_null()) out << " ks_u=" << num(cj["ks_u"].get<double>());
        out << '\n';
    }
    write_json(dir / "simulate.json", ojson{{"manifest", run.manifest}, {"cells", cells}});
    write_json(dir / "manifest.json", run.manifest);
    return 0;
}

int cmd_recover(StudyOptions& s, CommonOptions& common, HdOptions& hd, std::ostream& out) {
    const std::vector<double> grid = s.tau_grid.empty() ? default_tau_grid() : parse_tau_grid(s.tau_grid);
    if (s.tau_grid.empty()) s.tau_grid = "default";
    const StudyRun run = run_study_command("recover", s, common, hd, &grid);
    const fs::path dir(common.out);
    Csv curves(dir / "recovery_curves.csv", run.manifest,
               {"n", "tau", "p_perfect", "mean_intersection", "p_no_false", "remaining_fraction"});
    Csv oracle(dir / "oracle.csv", run.manifest, {"n", "index", "name", "in_u", "beta", "beta_ols", "bias"});
    ojson cells = ojson::array();
    for (const StudyCell& cell : run.cells) {
        const std::string ns = std::to_string(cell.n);
        const RecoveryCurves rc =
            recovery_curves(cell.z, cell.oracle.u_set, cell.oracle.beta, cell.oracle.beta_ols, grid);
        for (std::size_t t = 0; t < rc.thresholds.size(); ++t) {
            curves.row({ns, num(rc.thresholds[t]), num(rc.p_perfect[t]), num(rc.mean_intersection[t]),
                        num(rc.p_no_false[t]), rc.remaining_fraction.empty() ? "" : num(rc.remaining_fraction[t])});
        }
        const VectorXd bias = cell.oracle.bias();
        for (Index j = 0; j < cell.z.cols(); ++j) {
            oracle.row({ns, std::to_string(j + 1), name_of(cell, j), contains(cell.oracle.u_set, j) ? "1" : "0",
                        num(cell.oracle.beta(j)), num(cell.oracle.beta_ols(j)), num(bias(j))});
        }
        const auto best = std::max_element(rc.p_perfect.begin(), rc.p_perfect.end()) - rc.p_perfect.begin();
        const auto bi = static_cast<std::size_t>(best);
        cells.push_back(ojson{{"n", cell.n},
                              {"method", to_string(cell.method)},
                              {"replicates", rc.n_replicates},
                              {"max_p_perfect", rc.p_perfect[bi]},
                              {"best_tau", rc.thresholds[bi]},
                              {"oracle", oracle_json(cell)}});
        out << "n=" << cell.n << " max_p_perfect=" << num(rc.p_perfect[bi]) << " at tau=" << num(rc.thresholds[bi])
            << '\n';
    }
    write_json(dir / "recover.json", ojson{{"manifest", run.manifest}, {"cells", cells}});
    write_json(dir / "manifest.json", run.manifest);
    return 0;
}

ojson load_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open manifest '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const std::string tag = "# hols-manifest ";
    ojson j;
    try {
        if (text.rfind(tag, 0) == 0) {
            j = ojson::parse(text.substr(tag.size(), text.find('\n') - tag.size()));
        } else {
            j = ojson::parse(text);
            if (j.contains("manifest")) j = j["manifest"];
        }
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path + ": not a manifest (" + e.what() + ")");
    }
    if (!j.is_object() || j.value("tool", "") != "hols" || !j.contains("command") || !j.contains("options")) {
        throw InputError(path + ": not a hols manifest");
    }
    return j;
}

std::vector<std::string> replay_args(const ojson& manifest, const std::string& out_override, std::ostream& err) {
    const std::string version = manifest.value("version", "");
    if (version != kVersion) err << "warning: manifest written by version " << version << ", running " << kVersion << '\n';
    const auto& inputs = manifest.value("inputs", ojson::object());
    for (const auto& [key, in] : inputs.items()) {
        const std::string path = in.value("path", "");
        if (!fs::exists(path)) throw InputError("input '" + path + "' named in the manifest no longer exists");
        if (hex(fnv1a_file(path)) != in.value("fnv1a", "")) {
            throw InputError("input '" + path + "' changed since the manifest was written");
        }
    }
    std::vector<std::string> args{manifest["command"].get<std::string>()};
    for (const auto& [key, v] : manifest["options"].items()) {
        if (key == "out" && !out_override.empty()) continue;
        if (key == "tau-grid" && v == "default") continue;
        args.push_back("--" + key);
        if (v.is_string()) args.push_back(v.get<std::string>());
        else if (v.is_number_float()) args.push_back(num(v.get<double>()));
        else args.push_back(v.dump());
    }
    if (!out_override.empty()) {
        args.push_back("--out");
        args.push_back(out_override);
    }
    return args;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, bool allow_replay);

int exit_code_for(std::exception_ptr e, std::ostream& err) {
    try {
        std::rethrow_exception(e);
    } catch (const InputError& ex) {
        err << "hols: error: " << ex.what() << '\n';
        return 1;
    } catch (const NumericalError& ex) {
        err << "hols: numerical error: " << ex.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& ex) {
        err << "hols: error: " << ex.what() << '\n';
        return 1;
    } catch (const std::exception& ex) {
        err << "hols: internal error: " << ex.what() << '\n';
        return 3;
    } catch (...) {
        err << "hols: internal error\n";
        return 3;
    }
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, bool allow_replay) {
    CLI::App app{"HOLS goodness-of-fit diagnostic for linear causal models", "hols"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    CommonOptions common;
    HdOptions hd;
    StudyOptions study;
    std::string data, response, manifest_path, replay_out;

    auto* check = app.add_subcommand("check", "low-dimensional check of a CSV dataset");
    check->add_option("--data", data, "CSV file with a header row")->required();
    check->add_option("--response", response, "name of the response column")->required();
    add_common(check, common);

    CommonOptions hd_common;
    auto* check_hd = app.add_subcommand("check-hd", "high-dimensional (debiased Lasso) check of a CSV dataset");
    check_hd->add_option("--data", data, "CSV file with a header row")->required();
    check_hd->add_option("--response", response, "name of the response column")->required();
    add_common(check_hd, hd_common);
    add_hd(check_hd, hd);

    CommonOptions sim_common;
    HdOptions sim_hd;
    auto* simulate = app.add_subcommand("simulate", "replicated simulation study of a scenario");
    add_study(simulate, study);
    add_common(simulate, sim_common);
    add_hd(simulate, sim_hd);

    CommonOptions rec_common;
    HdOptions rec_hd;
    StudyOptions rec_study;
    auto* recover = app.add_subcommand("recover", "unconfounded-set recovery curves of a scenario");
    add_study(recover, rec_study);
    recover->add_option("--tau-grid", rec_study.tau_grid, "thresholds: log:LO:HI:COUNT or a comma list");
    add_common(recover, rec_common);
    add_hd(recover, rec_hd);

    CLI::App* replay = nullptr;
    if (allow_replay) {
        replay = app.add_subcommand("replay", "rerun the command recorded in a manifest");
        replay->add_option("--manifest", manifest_path, "manifest.json or any output file")->required();
        replay->add_option("--out", replay_out, "output directory (default: the recorded one)");
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << "hols: error: " << e.what() << "\nRun 'hols --help' for usage.\n";
        return 1;
    }

    try {
        if (check->parsed()) return cmd_check(data, response, common, nullptr, out, err);
        if (check_hd->parsed()) return cmd_check(data, response, hd_common, &hd, out, err);
        if (simulate->parsed()) return cmd_simulate(study, sim_common, sim_hd, out);
        if (recover->parsed()) return cmd_recover(rec_study, rec_common, rec_hd, out);
        if (replay && replay->parsed()) {
            const ojson m = load_manifest(manifest_path);
            return dispatch(replay_args(m, replay_out, err), out, err, false);
        }
    } catch (...) {
        return exit_code_for(std::current_exception(), err);
    }
    return 3;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    try {
        return dispatch(args, out, err, true);
    } catch (...) {
        return exit_code_for(std::current_exception(), err);
    }
}

} // namespace hols::cli

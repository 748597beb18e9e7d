// csgeom-cli: runs the library's experiments and writes CSV/JSON artifacts.
//
//   csgeom-cli [--config FILE] [--seed N] [--out DIR] [--threads T] <subcommand> [--param value ...]
//
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include <csgeom/histories.hpp>
#include <csgeom/klauder.hpp>
#include <csgeom/poincare.hpp>
#include <csgeom/report.hpp>
#include <csgeom/uncertainty.hpp>
#include <csgeom/weyl.hpp>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/json_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace csgeom;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Schema
// ---------------------------------------------------------------------------

enum class Kind { real, integer, real_list, choice, flag };

struct Param {
  std::string name;
  Kind kind;
  std::string def;
  std::string help;
  Real lo = -std::numeric_limits<Real>::infinity(), hi = std::numeric_limits<Real>::infinity();
  std::vector<std::string> choices{};
  std::size_t min_len = 1, max_len = 64;  // lists
};

struct Subcommand {
  std::string name;
  std::string help;
  std::vector<Param> params;
};

Param real(std::string n, std::string d, std::string h, Real lo, Real hi) {
  return {std::move(n), Kind::real, std::move(d), std::move(h), lo, hi};
}
Param integer(std::string n, std::string d, std::string h, Real lo, Real hi) {
  return {std::move(n), Kind::integer, std::move(d), std::move(h), lo, hi};
}
Param list(std::string n, std::string d, std::string h, Real lo, Real hi, std::size_t mn, std::size_t mx) {
  Param p{std::move(n), Kind::real_list, std::move(d), std::move(h), lo, hi};
  p.min_len = mn;
  p.max_len = mx;
  return p;
}
Param choice(std::string n, std::string d, std::string h, std::vector<std::string> c) {
  Param p{std::move(n), Kind::choice, std::move(d), std::move(h)};
  p.choices = std::move(c);
  return p;
}
Param flag(std::string n, std::string d, std::string h) { return {std::move(n), Kind::flag, std::move(d), std::move(h)}; }

const std::vector<Subcommand>& schema() {
  static const std::vector<Subcommand> s = {
      {"weyl-geometry",
       "connection, metric and curvature of the Weyl family at a chart point, closed form against finite differences",
       {real("sigma", "1.0", "reference width", 1e-3, 1e3), real("cpq", "0.0", "reference covariance C_pq", -1e3, 1e3),
        choice("gauge", "position", "representative phase", {"position", "symmetric", "momentum"}),
        list("z", "1.3,-0.7", "chart point q,p", -1e3, 1e3, 2, 2), real("fd-step", "0", "finite-difference step (0: automatic)", 0, 1)}},
      {"histories",
       "discrete Bargmann phase of a rectangular loop against the line integral of A",
       {real("sigma", "1.0", "reference width", 1e-3, 1e3), list("origin", "0,0", "corner q0,p0", -1e3, 1e3, 2, 2),
        list("size", "1,1", "side lengths a,b", 1e-6, 1e3, 2, 2),
        list("refinements", "4,8,16,32,64,128", "points on the loop, increasing", 3, 1e6, 1, 32)}},
      {"zeno",
       "probability of an N-step history against e^{-N}",
       {real("sigma", "1.0", "reference width", 1e-3, 1e3), integer("steps", "10", "number of steps", 1, 10000),
        real("ds2", "1.0", "metric length of every step", 0, 1e4)}},
      {"uncertainty",
       "fixed-reference and optimal-reference uncertainty chains",
       {real("sigma", "1.0", "reference width", 1e-3, 1e3), real("cpq", "0.0", "reference covariance C_pq", -1e3, 1e3),
        real("product", "1.0", "probe dq*dp (sign selects the direction)", -1e3, 1e3),
        list("dq-range", "0.01,100", "scan range lo,hi", 1e-9, 1e9, 2, 2),
        integer("points", "201", "scan points", 3, 1e6)}},
      {"extended",
       "survey of the extended time-energy chain over seeded harmonic configurations",
       {integer("count", "100", "configurations", 1, 1e7)}},
      {"klauder",
       "regularized phase-space propagator against the exact oscillator or free kernel",
       {list("nu", "4,16,64,256", "diffusion constants, increasing", 1e-6, 1e6, 1, 32),
        real("time", "1.5707963267948966", "total time", 0, 1e3), integer("steps", "64", "time slices", 1, 1e5),
        integer("grid", "128", "lattice points per axis", 8, 1024), real("range", "8", "lattice half-width", 1, 100),
        choice("hamiltonian", "harmonic", "H", {"harmonic", "free", "zero"}), real("omega", "1.0", "oscillator frequency", 1e-6, 1e3),
        list("z", "1,0", "final point q,p", -50, 50, 2, 2), list("zp", "0,1", "initial point q,p", -50, 50, 2, 2),
        choice("method", "transfer", "estimator", {"transfer", "mc", "both"}),
        integer("samples", "100000", "Monte Carlo samples", 100, 1e9), integer("batches", "20", "Monte Carlo batches", 2, 1e5)}},
      {"poincare",
       "Poincare coherent states: kappa and alpha, pulled-back geometry, covariant scans, optional slice integrals",
       {real("sigma", "0.1", "reference width", 1e-3, 0.99), real("m", "1.0", "mass", 1e-3, 1e3),
        list("I", "0,0,0", "spatial part of the boost label", -50, 50, 3, 3),
        list("X", "0,0,0,0", "translation label X^0..X^3", -1e3, 1e3, 4, 4),
        integer("order", "24", "Gauss-Hermite order of overlaps", 3, 88),
        list("sigmas", "0.05,0.1,0.2", "widths for the kappa/alpha table", 1e-3, 0.99, 1, 64),
        list("scan-sigma", "0.01,10", "covariant scan range lo,hi", 1e-6, 1e6, 2, 2),
        flag("sample", "false", "run the sampled resolution-of-unity and Newton-Wigner integrals"),
        integer("points", "2048", "Sobol points per replicate", 16, 1e7), integer("replicates", "8", "random shifts", 2, 1e4)}},
      {"report", "merge the consistency entries written by earlier runs in the output directory",
       {flag("fresh", "false", "recompute every entry instead of merging (sampled entry included)")}},
  };
  return s;
}

const Subcommand* find_sub(const std::string& n) {
  for (const auto& s : schema())
    if (s.name == n) return &s;
  return nullptr;
}

std::string schema_dump() {
  std::ostringstream os;
  os << "csgeom-cli " << kVersion << "\n"
     << "usage: csgeom-cli [--config FILE] [--seed N] [--out DIR] [--threads T] <subcommand> [--param value ...]\n"
     << "config: INI (key = value, one [section] per subcommand) or JSON; top-level keys: subcommand, seed, out, threads\n\n";
  static const char* kinds[] = {"real", "integer", "list", "choice", "flag"};
  for (const auto& s : schema()) {
    os << s.name << ": " << s.help << "\n";
    for (const auto& p : s.params) {
      os << "  --" << std::left << std::setw(13) << p.name << kinds[static_cast<int>(p.kind)] << "  default " << p.def << "  "
         << p.help;
      if (p.kind == Kind::choice) {
        os << " {";
        for (std::size_t i = 0; i < p.choices.size(); ++i) os << (i ? "," : "") << p.choices[i];
        os << "}";
      }
      os << "\n";
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Values
// ---------------------------------------------------------------------------

Real parse_real(const std::string& name, const std::string& s) {
  std::size_t pos = 0;
  Real v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (s.empty() || pos != s.size() || !std::isfinite(v)) throw ValidationError("parameter '" + name + "': '" + s + "' is not a number");
  return v;
}

std::vector<Real> parse_list(const std::string& name, const std::string& s) {
  std::vector<Real> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(parse_real(name, tok));
  return out;
}

class Params {
 public:
  Params(const Subcommand& sub, std::map<std::string, std::string> raw) : sub_(sub), raw_(std::move(raw)) {
    for (const auto& p : sub.params)
      if (!raw_.count(p.name)) raw_[p.name] = p.def;
  }

  // every value is checked before anything is computed
  void validate() const {
    for (const auto& p : sub_.params) {
      const std::string& v = raw_.at(p.name);
      auto in_range = [&](Real x) {
        if (x < p.lo || x > p.hi) {
          std::ostringstream os;
          os << "parameter '" << p.name << "': " << x << " outside [" << p.lo << ", " << p.hi << "]";
          throw ValidationError(os.str());
        }
      };
      switch (p.kind) {
        case Kind::real: in_range(parse_real(p.name, v)); break;
        case Kind::integer: {
          const Real x = parse_real(p.name, v);
          if (x != std::floor(x)) throw ValidationError("parameter '" + p.name + "': '" + v + "' is not an integer");
          in_range(x);
          break;
        }
        case Kind::real_list: {
          const auto xs = parse_list(p.name, v);
          if (xs.size() < p.min_len || xs.size() > p.max_len) {
            std::ostringstream os;
            os << "parameter '" << p.name << "': expected " << p.min_len;
            if (p.max_len != p.min_len) os << " to " << p.max_len;
            os << " comma-separated values, got " << xs.size();
            throw ValidationError(os.str());
          }
          for (Real x : xs) in_range(x);
          break;
        }
        case Kind::choice:
          if (std::find(p.choices.begin(), p.choices.end(), v) == p.choices.end())
            throw ValidationError("parameter '" + p.name + "': '" + v + "' is not one of the allowed values");
          break;
        case Kind::flag:
          if (v != "true" && v != "false" && v != "1" && v != "0")
            throw ValidationError("parameter '" + p.name + "': expected true or false");
          break;
      }
    }
  }

  [[nodiscard]] Real r(const std::string& n) const { return parse_real(n, raw_.at(n)); }
  [[nodiscard]] std::size_t n(const std::string& k) const { return static_cast<std::size_t>(r(k)); }
  [[nodiscard]] std::vector<Real> v(const std::string& n) const { return parse_list(n, raw_.at(n)); }
  [[nodiscard]] const std::string& s(const std::string& n) const { return raw_.at(n); }
  [[nodiscard]] bool b(const std::string& n) const { return raw_.at(n) == "true" || raw_.at(n) == "1"; }
  [[nodiscard]] json to_json() const {
    json j = json::object();
    for (const auto& [k, val] : raw_) j[k] = val;
    return j;
  }

 private:
  const Subcommand& sub_;
  std::map<std::string, std::string> raw_;
};

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

std::string fmt(Real v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(12) << (v == 0.0 ? 0.0 : v);  // no "-0"
  return os.str();
}
std::string fmt(bool b) { return b ? "true" : "false"; }

std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(buf.data(), buf.size(), md, &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string sha256_string(const std::string& s) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(s.data(), s.size(), md, &len, EVP_sha256(), nullptr);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

  /// header cells carry units as name[unit]
  void csv(const std::string& file, const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream os;
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << csv_field(header[i]);
    os << "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << csv_field(r[i]);
      os << "\n";
    }
    write(file, os.str());
  }
  void json_file(const std::string& file, const json& j) { write(file, j.dump(2) + "\n"); }

  [[nodiscard]] const std::vector<std::string>& files() const { return files_; }
  [[nodiscard]] const fs::path& dir() const { return dir_; }

 private:
  void write(const std::string& file, const std::string& body) {
    std::ofstream out(dir_ / file, std::ios::binary | std::ios::trunc);
    out << body;
    if (!out) throw ValidationError("cannot write " + (dir_ / file).string());
    files_.push_back(file);
  }
  fs::path dir_;
  std::vector<std::string> files_;
};

/// Exclusive lock on the output directory for the duration of a run.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".csgeom.lock") {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) {
      if (fs::exists(path_))
        throw ValidationError("output directory is locked by another run (" + path_.string() + ")");
      throw ValidationError("output directory is not writable: " + dir.string());
    }
    std::fprintf(f, "%s\n", utc_now().c_str());
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

struct Context {
  std::uint64_t seed = 2024;
  unsigned threads = 1;
};

PhasePoint point(const std::vector<Real>& v) { return {v.at(0), v.at(1)}; }

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

void run_weyl(const Params& p, const Context&, Outputs& out) {
  const Gauge g = p.s("gauge") == "position" ? Gauge::position_phase : p.s("gauge") == "symmetric" ? Gauge::symmetric : Gauge::momentum_phase;
  const Real sigma = p.r("sigma"), cpq = p.r("cpq");
  const StateFamily fam = cpq == 0.0 ? weyl_family(GaussianReference(sigma), g)
                                     : weyl_family(CorrelatedReference::with_covariance(sigma, cpq));
  const auto z = p.v("z");
  const auto fd = geometry(fam, z, GeometryMethod::finite_difference, p.r("fd-step"));
  const auto an = geometry(fam, z, GeometryMethod::analytic);
  std::vector<std::vector<std::string>> rows;
  auto add = [&](const std::string& c, Real a, Real f, const std::string& unit) {
    rows.push_back({c, fmt(a), fmt(f), fmt(std::abs(a - f)), unit});
  };
  add("A_q", an.A(0), fd.A(0), "hbar/L");
  add("A_p", an.A(1), fd.A(1), "L");
  add("g_qq", an.g(0, 0), fd.g(0, 0), "1/L^2");
  add("g_qp", an.g(0, 1), fd.g(0, 1), "1/hbar");
  add("g_pp", an.g(1, 1), fd.g(1, 1), "L^2/hbar^2");
  add("Omega_qp", an.Omega(0, 1), fd.Omega(0, 1), "1");
  out.csv("weyl_geometry.csv", {"component", "analytic", "finite_difference", "abs_difference", "unit"}, rows);
  out.json_file("weyl-geometry_consistency.json", weyl_entries().to_json());
}

void run_histories(const Params& p, const Context&, Outputs& out) {
  const auto fam = weyl_family(GaussianReference(p.r("sigma")));
  const auto o = p.v("origin"), sz = p.v("size");
  std::vector<std::size_t> ref;
  for (Real x : p.v("refinements")) {
    if (x != std::floor(x)) throw ValidationError("parameter 'refinements': values must be integers");
    ref.push_back(static_cast<std::size_t>(x));
  }
  const auto bl = berry_limit(fam, rectangle(o[0], o[1], sz[0], sz[1]), ref);
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : bl.rows)
    rows.push_back({std::to_string(r.points), fmt(r.phase), fmt(bl.line_integral), fmt(r.difference), fmt(r.ambiguous)});
  out.csv("berry.csv", {"points[1]", "phase[rad]", "line_integral[rad]", "difference[rad]", "ambiguous[bool]"}, rows);
  out.json_file("histories.json", {{"line_integral", bl.line_integral}, {"enclosed_area", sz[0] * sz[1]}, {"converging", bl.converging}});
  out.json_file("histories_consistency.json", histories_entries().to_json());
}

void run_zeno(const Params& p, const Context&, Outputs& out) {
  const Real sigma = p.r("sigma"), ds2 = p.r("ds2");
  const auto steps = p.n("steps");
  const auto fam = share(weyl_family(GaussianReference(sigma)));
  // g_pp = σ²/2
  const Real dp = std::sqrt(2.0 * ds2) / sigma;
  std::vector<ChartPoint> pts;
  for (std::size_t k = 0; k <= steps; ++k) pts.push_back({0.0, dp * static_cast<Real>(k)});
  const auto z = zeno_report(History(fam, pts));
  std::vector<std::vector<std::string>> rows;
  Real cum = 0.0;
  for (std::size_t i = 0; i < z.ds2.size(); ++i) {
    cum += z.ds2[i];
    rows.push_back({std::to_string(i + 1), fmt(z.ds2[i]), fmt(cum), fmt(std::exp(-cum)), fmt(std::exp(-static_cast<Real>(i + 1)))});
  }
  out.csv("zeno.csv", {"step[1]", "ds2[1]", "ds2_cumulative[1]", "exp_minus_cumulative[1]", "bound[1]"}, rows);
  out.json_file("zeno.json", {{"p", z.p},
                              {"steps", z.steps},
                              {"bound", z.bound},
                              {"ratio", z.p / z.bound},
                              {"below_floor", z.below_floor},
                              {"all_steps_resolved", z.all_steps_resolved},
                              {"bound_holds", z.bound_holds},
                              {"verdict", z.verdict}});
  out.json_file("zeno_consistency.json", histories_entries().to_json());
}

std::vector<std::string> chain_row(const std::string& prefix, const ChainEntry& e) {
  return {prefix + e.name, fmt(e.lhs), fmt(e.rhs), fmt(e.satisfied), fmt(e.informational), e.note};
}

void run_uncertainty(const Params& p, const Context&, Outputs& out) {
  const Real sigma = p.r("sigma"), cpq = p.r("cpq"), product = p.r("product");
  if (product == 0.0) throw ValidationError("parameter 'product': must be nonzero");
  const auto range = p.v("dq-range");
  if (!(range[1] > range[0])) throw ValidationError("parameter 'dq-range': need lo < hi");
  const auto grid = log_grid(range[0], range[1], p.n("points"));
  const auto fixed = chain_fixed_reference(metric_analytic(CorrelatedReference::with_covariance(sigma, cpq)), grid, product);
  const auto opt = chain_optimal_reference({1.0, std::abs(product), 0.0});
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"min ds2", fmt(fixed.ds2), fmt(std::abs(product)), fmt(fixed.ds2 >= std::abs(product) * (1 - 1e-9)), "false",
                  "fixed reference"});
  for (const auto& e : fixed.chain) rows.push_back(chain_row("fixed: ", e));
  for (const auto& e : opt.chain) rows.push_back(chain_row("optimal: ", e));
  out.csv("uncertainty.csv", {"row", "lhs[1]", "rhs[1]", "satisfied[bool]", "informational[bool]", "note"}, rows);
  out.json_file("uncertainty.json", {{"min_ds2", fixed.ds2},
                                     {"argmin_dq", fixed.minimizer.dq},
                                     {"argmin_dp", fixed.minimizer.dp},
                                     {"all_satisfied", fixed.all_satisfied()},
                                     {"optimal_min_ds2", opt.ds2},
                                     {"optimal_sigma", opt.reference_sigma}});
  out.json_file("uncertainty_consistency.json", uncertainty_entries().to_json());
}

void run_extended(const Params& p, const Context& ctx, Outputs& out) {
  const auto s = survey_extended_chain(ctx.seed, p.n("count"));
  std::vector<std::vector<std::string>> rows;
  for (const auto& [name, fails] : s.failures)
    rows.push_back({name, std::to_string(s.configurations), std::to_string(fails), fmt(s.failure_fraction(name)),
                    fmt(s.worst_slack.at(name))});
  out.csv("extended_survey.csv", {"row", "configurations[1]", "failures[1]", "fraction[1]", "worst_slack[1]"}, rows);
  json f = json::object();
  for (const auto& [name, fails] : s.failures) f[name] = fails;
  out.json_file("extended.json", {{"seed", ctx.seed}, {"configurations", s.configurations}, {"failures", f}});
  out.json_file("extended_consistency.json", uncertainty_entries().to_json());
}

void run_klauder(const Params& p, const Context& ctx, Outputs& out) {
  const auto nus = p.v("nu");
  for (std::size_t k = 1; k < nus.size(); ++k)
    if (!(nus[k] > nus[k - 1])) throw ValidationError("parameter 'nu': values must increase");
  const std::string hk = p.s("hamiltonian");
  const HamiltonianSpec H = hk == "harmonic" ? HamiltonianSpec::harmonic(p.r("omega"))
                            : hk == "free"   ? HamiltonianSpec::free_particle()
                                             : HamiltonianSpec::zero();
  const PhasePoint z = point(p.v("z")), zp = point(p.v("zp"));
  auto cfg = [&](Real nu) {
    LatticeConfig c;
    c.nu = nu;
    c.time = p.r("time");
    c.steps = p.n("steps");
    c.nq = c.np = p.n("grid");
    c.q_lo = c.p_lo = -p.r("range");
    c.q_hi = c.p_hi = p.r("range");
    return c;
  };
  const std::string method = p.s("method");
  std::vector<std::vector<std::string>> rows;
  auto row = [&](const PropagatorEstimate& e) {
    rows.push_back({fmt(e.nu), to_string(e.method), fmt(e.value.real()), fmt(e.value.imag()), fmt(e.rel_error), fmt(e.std_error)});
  };
  json summary = {{"exact_re", exact_propagator(H, z, zp, p.r("time")).real()},
                  {"exact_im", exact_propagator(H, z, zp, p.r("time")).imag()}};
  if (method != "mc") {
    std::vector<LatticeConfig> cfgs;
    for (Real nu : nus) cfgs.push_back(cfg(nu));
    if (cfgs.size() >= 3) {
      const auto sw = nu_sweep(cfgs, H, z, zp, ctx.threads);
      for (const auto& r : sw.rows) row(r.estimate);
      summary["monotone"] = sw.monotone;
      summary["extrapolated_re"] = sw.extrapolated.real();
      summary["extrapolated_im"] = sw.extrapolated.imag();
    } else {
      for (const auto& c : cfgs) row(transfer_matrix(c, H, z, zp, ctx.threads));
    }
  }
  if (method != "transfer")
    for (Real nu : nus) row(mc_estimate(cfg(nu), H, z, zp, p.n("samples"), RngSeed{ctx.seed}, ctx.threads, p.n("batches")));
  out.csv("klauder.csv", {"nu[1/T]", "method", "re[1]", "im[1]", "rel_error[1]", "stderr[1]"}, rows);
  out.json_file("klauder.json", summary);
}

void run_poincare(const Params& p, const Context& ctx, Outputs& out) {
  const Real sigma = p.r("sigma"), m = p.r("m");
  const auto Iv = p.v("I"), Xv = p.v("X");
  const PoincareState st{{Xv[0], Xv[1], Xv[2], Xv[3]}, UnitTimelike{{Iv[0], Iv[1], Iv[2]}}, sigma, m};
  const HyperboloidQuadrature quad{p.n("order"), true};

  std::vector<std::vector<std::string>> krows;
  for (Real s : p.v("sigmas")) {
    const auto k = kappa(s);
    const auto a = alpha(s);
    krows.push_back({fmt(s), fmt(k.kappa_num), fmt(k.series_printed), fmt(k.series_derived), fmt(a.alpha_num),
                     fmt(boost_metric_coefficient(s)), fmt(energy_variance(s))});
  }
  out.csv("poincare_kappa.csv",
          {"sigma[1]", "kappa[1]", "kappa_series_printed[1]", "kappa_series_derived[1]", "alpha[1]", "boost_coefficient[1]",
           "energy_variance[1]"},
          krows);

  const auto gc = geometry_compare(st, quad);
  std::vector<std::vector<std::string>> grows;
  for (const auto& r : gc.rows) {
    const std::string unit = r.block == "connection" ? "hbar/chart" : r.block == "curvature" ? "hbar/chart^2" : "1/chart^2";
    grows.push_back({r.name, r.block, fmt(r.fd), fmt(r.derived), fmt(r.printed), fmt(r.noise), to_string(r.verdict),
                     fmt(r.printed_within_budget), unit});
  }
  out.csv("poincare_geometry.csv",
          {"component", "block", "finite_difference", "derived", "printed", "noise", "verdict", "printed_within_budget[bool]", "unit"},
          grows);

  // generic and worldline steps at the state's label
  const auto range = p.v("scan-sigma");
  if (!(range[1] > range[0])) throw ValidationError("parameter 'scan-sigma': need lo < hi");
  const std::vector<CovariantDisplacement> fam{{st.I, {1, 0, 0}, {0, 0, 1, 0}}, CovariantDisplacement::clock(st.I, {1, 0, 0}, 1.0)};
  const auto scan = covariant_uncertainty_scan(log_grid(range[0], range[1], 121), m, fam);
  std::vector<std::vector<std::string>> srows;
  for (const auto& r : scan.rows)
    srows.push_back({to_string(r.branch), fmt(r.dI), fmt(r.dIX), fmt(r.dt), fmt(r.model_min), fmt(r.model_sigma), fmt(r.bound),
                     fmt(r.model_holds), fmt(r.exact_min), fmt(r.exact_sigma), fmt(r.exact_above_bound)});
  out.csv("poincare_scan.csv",
          {"branch", "dI[1]", "dIX[L]", "dt[T]", "model_min[1]", "model_sigma[1]", "bound[1]", "model_holds[bool]", "exact_min[1]",
           "exact_sigma[1]", "exact_above_bound[bool]"},
          srows);

  json summary = {{"kappa", kappa_value(sigma)},
                  {"momentum", momentum_expectation(st, quad).P},
                  {"agree", gc.count(ComponentVerdict::agree)},
                  {"disagree", gc.count(ComponentVerdict::disagree)},
                  {"inconclusive", gc.count(ComponentVerdict::inconclusive)}};
  std::optional<SliceSampling> sampling;
  if (p.b("sample")) {
    SliceSampling o;
    o.points = p.n("points");
    o.replicates = p.n("replicates");
    o.seed = RngSeed{ctx.seed};
    o.threads = ctx.threads;
    sampling = o;
    const auto psi = as_function(PoincareState{{}, {}, sigma, m});
    const auto res = resolution_of_unity_check(sigma, m, 0.0, psi, psi, o);
    const auto nw = newton_wigner_expectation(st, o);
    summary["resolution"] = {{"lhs", res.lhs.real()}, {"stderr", res.lhs_stderr}, {"rhs", res.rhs.real()},
                             {"rhs_printed", res.rhs_printed.real()}, {"rel_error", res.rel_error}, {"ess", res.ess}};
    summary["newton_wigner"] = {{"value", nw.value}, {"stderr", nw.std_error}, {"weight", nw.weight}, {"ess", nw.ess}};
  }
  out.json_file("poincare.json", summary);
  out.json_file("poincare_consistency.json", poincare_entries(sampling).to_json());
}

void run_report(const Params& p, const Context& ctx, Outputs& out) {
  ConsistencyReport merged;
  if (p.b("fresh")) {
    SliceSampling o;
    o.seed = RngSeed{ctx.seed};
    o.threads = ctx.threads;
    merged = full_report(o);
  } else {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(out.dir())) {
      const std::string n = e.path().filename().string();
      if (n.size() > 17 && n.ends_with("_consistency.json")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<ConsistencyReport> parts;
    for (const auto& f : files) {
      std::ifstream in(f);
      try {
        parts.push_back(ConsistencyReport::from_json(json::parse(in)));
      } catch (const json::exception& e) {
        throw ValidationError("report: cannot read " + f.string() + ": " + e.what());
      }
    }
    merged = merge(parts);
  }
  out.json_file("consistency_report.json", merged.to_json());
}

using Runner = void (*)(const Params&, const Context&, Outputs&);

Runner runner(const std::string& n) {
  static const std::map<std::string, Runner> r = {{"weyl-geometry", run_weyl}, {"histories", run_histories},
                                                  {"zeno", run_zeno},          {"uncertainty", run_uncertainty},
                                                  {"extended", run_extended},  {"klauder", run_klauder},
                                                  {"poincare", run_poincare},  {"report", run_report}};
  return r.at(n);
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

namespace pt = boost::property_tree;

// JSON arrays arrive as children with empty keys
std::string node_value(const pt::ptree& t) {
  if (t.empty()) return t.data();
  std::string s;
  for (const auto& [k, c] : t) {
    if (!k.empty() || !c.empty()) return {};
    s += (s.empty() ? "" : ",") + c.data();
  }
  return s;
}

struct FileConfig {
  std::map<std::string, std::string> top;
  std::map<std::string, std::map<std::string, std::string>> sections;
};

FileConfig read_config(const std::string& path) {
  pt::ptree tree;
  try {
    if (path.ends_with(".json"))
      pt::read_json(path, tree);
    else
      pt::read_ini(path, tree);
  } catch (const pt::ptree_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  static const std::vector<std::string> top_keys{"subcommand", "seed", "out", "threads"};
  FileConfig fc;
  std::vector<std::string> unknown;
  for (const auto& [k, node] : tree) {
    if (std::find(top_keys.begin(), top_keys.end(), k) != top_keys.end() && node.empty()) {
      fc.top[k] = node.data();
    } else if (const auto* sub = find_sub(k)) {
      for (const auto& [pk, pv] : node) {
        const bool known = std::any_of(sub->params.begin(), sub->params.end(), [&](const Param& p) { return p.name == pk; });
        if (!known) {
          unknown.push_back(k + "." + pk);
          continue;
        }
        fc.sections[k][pk] = node_value(pv);
      }
    } else {
      unknown.push_back(k);
    }
  }
  if (!unknown.empty()) {
    std::string msg = "config: unknown keys:";
    for (const auto& u : unknown) msg += " " + u;
    throw ValidationError(msg);
  }
  return fc;
}

int run(int argc, char** argv) {
  CLI::App app{"csgeom-cli: coherent-state geometry experiments"};
  app.fallthrough();
  std::string config, out_dir, seed_s, threads_s;
  bool show_schema = false;
  app.add_option("--config", config, "INI or JSON configuration file");
  app.add_option("--seed", seed_s, "random seed (default 2024)");
  app.add_option("--out", out_dir, "output directory (default csgeom-out)");
  app.add_option("--threads", threads_s, "worker threads (default 1)");
  app.add_flag("--schema", show_schema, "print every subcommand's parameters and exit");

  std::map<std::string, std::map<std::string, std::string>> cli_values;
  std::map<std::string, CLI::App*> subs;
  for (const auto& s : schema()) {
    auto* sc = app.add_subcommand(s.name, s.help);
    subs[s.name] = sc;
    for (const auto& p : s.params) {
      sc->add_option_function<std::string>("--" + p.name, [&cli_values, sn = s.name, pn = p.name](const std::string& v) {
        cli_values[sn][pn] = v;
      }, p.help + " (default " + p.def + ")");
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (show_schema) {
    std::cout << schema_dump();
    return 0;
  }

  FileConfig fc;
  if (!config.empty()) fc = read_config(config);

  std::string sub_name;
  for (const auto& [n, sc] : subs)
    if (sc->parsed()) sub_name = n;
  if (fc.top.count("subcommand")) {
    const std::string from_file = fc.top["subcommand"];
    if (!find_sub(from_file)) throw ValidationError("config: unknown subcommand '" + from_file + "'");
    if (!sub_name.empty() && sub_name != from_file)
      throw ValidationError("subcommand '" + sub_name + "' conflicts with '" + from_file + "' in the config file");
    sub_name = from_file;
  }
  if (sub_name.empty()) {
    std::cerr << "no subcommand given\n\n" << schema_dump();
    return 2;
  }

  Context ctx;
  auto pick = [&](const std::string& cli, const std::string& key, const std::string& def) {
    return !cli.empty() ? cli : fc.top.count(key) ? fc.top[key] : def;
  };
  const Real seed = parse_real("seed", pick(seed_s, "seed", "2024"));
  if (seed < 0 || seed != std::floor(seed) || seed > 9.007199254740992e15) throw ValidationError("seed must be a non-negative integer");
  ctx.seed = static_cast<std::uint64_t>(seed);
  const Real threads = parse_real("threads", pick(threads_s, "threads", "1"));
  if (threads < 1 || threads > 1024 || threads != std::floor(threads)) throw ValidationError("threads must be an integer in [1, 1024]");
  ctx.threads = static_cast<unsigned>(threads);
  const fs::path dir = pick(out_dir, "out", "csgeom-out");

  const Subcommand& sub = *find_sub(sub_name);
  auto raw = fc.sections[sub_name];
  for (const auto& [k, v] : cli_values[sub_name]) raw[k] = v;
  const Params params(sub, raw);
  params.validate();

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ValidationError("cannot create output directory " + dir.string());
  DirLock lock(dir);

  const json canonical = {{"subcommand", sub_name}, {"seed", ctx.seed}, {"parameters", params.to_json()}};
  const std::string started = utc_now();
  Outputs out(dir);
  runner(sub_name)(params, ctx, out);

  json outputs = json::array();
  for (const auto& f : out.files()) outputs.push_back({{"file", f}, {"sha256", sha256_file(dir / f)}, {"bytes", fs::file_size(dir / f)}});
  const json manifest = {{"tool", "csgeom-cli"},
                         {"version", kVersion},
                         {"config", canonical},
                         {"config_sha256", sha256_string(canonical.dump())},
                         {"threads", ctx.threads},
                         {"started", started},
                         {"finished", utc_now()},
                         {"outputs", outputs}};
  std::ofstream(dir / (sub_name + ".manifest.json")) << manifest.dump(2) << "\n";
  std::cout << sub_name << ": wrote " << out.files().size() << " file(s) to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

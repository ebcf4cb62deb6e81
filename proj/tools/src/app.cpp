#include "miold/cli/app.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "miold/errors.hpp"

#ifndef MIOLD_CORPUS_DIR
#define MIOLD_CORPUS_DIR "corpus"
#endif

namespace miold::cli {

using json = nlohmann::ordered_json;
using expr::Expr;
using model::MechanicalSystem;

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, sep)) {
    const auto b = part.find_first_not_of(" \t");
    const auto e = part.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(part.substr(b, e - b + 1));
  }
  return out;
}

// Accepts repeated values and ';'-separated lists.
std::vector<std::string> flatten(const std::vector<std::string>& values) {
  std::vector<std::string> out;
  for (const auto& v : values)
    for (auto& p : split(v, ';')) out.push_back(std::move(p));
  return out;
}

std::string tuple(const std::vector<int>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + ")";
}

std::string tuple(const std::vector<double>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt::format("{:.6g}", v[i]);
  return s + ")";
}

std::vector<int> optional_values(const std::vector<std::optional<int>>& v) {
  std::vector<int> out;
  for (const auto& x : v) out.push_back(x.value_or(0));
  return out;
}

std::string str(const Expr& e, const MechanicalSystem& s) { return expr::to_string(e, s.vars); }

json matrix_json(const Eigen::MatrixXd& a) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
    rows.push_back(row);
  }
  return rows;
}

json expr_matrix_json(const expr::ExprMatrix& a, std::span<const std::string> names) {
  json rows = json::array();
  for (const auto& r : a) {
    json row = json::array();
    for (const auto& e : r) row.push_back(expr::to_string(e, names));
    rows.push_back(row);
  }
  return rows;
}

json expr_vector_json(const expr::ExprVector& a, std::span<const std::string> names) {
  json out = json::array();
  for (const auto& e : a) out.push_back(expr::to_string(e, names));
  return out;
}

json point_json(const expr::Point& p) {
  json j;
  j["x"] = p.x;
  if (p.v) j["v"] = *p.v;
  return j;
}

std::string point_text(const expr::Point& p) {
  std::string s = "x = " + tuple(p.x);
  if (p.v) s += ", v = " + tuple(*p.v);
  return s;
}

// ---------------------------------------------------------------------------
// Reports

std::string mr1_text(const geometry::HalfDegreeReport& r) {
  if (!r.defined()) return "violated (relative half-degree undefined)";
  if (r.mr1) return "holds";
  return fmt::format("violated (rank D = {} < m = {})", r.rank_at_point, r.m);
}

std::string mr2_text(const MechanicalSystem& s, const geometry::HalfDegreeReport& r) {
  if (!r.defined()) return "not checked";
  if (r.mr2.empty()) return "holds (no conditions: all nu = 1)";
  for (const auto& e : r.mr2)
    if (!e.holds) {
      const auto [j, k] = e.witness_entry.value_or(std::make_pair(0, 0));
      return fmt::format("violated at output {}, q = {}: (nabla d L_e^q h)[{},{}] = {}", e.output + 1, e.q, j + 1,
                         k + 1, str(e.residual[j][k], s));
    }
  return fmt::format("holds ({} conditions)", r.mr2.size());
}

std::string verdict_reason(const geometry::HalfDegreeReport& r) {
  if (!r.defined()) return "relative half-degree undefined";
  if (!r.mr1) return "MR1 violated";
  if (!r.mr2_holds) return "MR2 violated";
  return "";
}

void print_half_degree(std::ostream& out, const MechanicalSystem& s, const geometry::HalfDegreeReport& r) {
  out << "relative half-degree nu = " << tuple(optional_values(r.nu));
  if (r.defined()) out << "   mu = " << r.mu() << " of n = " << s.n;
  out << "\n";
  for (int l = 0; l < r.m; ++l) {
    if (!r.nu[l]) {
      out << "  output " << l + 1 << ": undefined\n";
      continue;
    }
    out << "  output " << l + 1 << ": h = " << str(r.chains[l][0], s) << "\n";
    for (std::size_t q = 1; q < r.chains[l].size(); ++q)
      out << "    L_e^" << q << " h = " << str(r.chains[l][q], s) << "\n";
  }
  if (r.defined()) {
    out << "D(x):\n";
    for (int l = 0; l < r.m; ++l)
      for (int c = 0; c < r.m; ++c) out << "  D[" << l + 1 << "," << c + 1 << "] = " << str(r.D[l][c], s) << "\n";
    out << "D at point:";
    for (Eigen::Index i = 0; i < r.D_at_point.rows(); ++i) {
      out << (i ? "; " : " [");
      for (Eigen::Index j = 0; j < r.D_at_point.cols(); ++j) out << (j ? " " : "") << fmt::format("{:.6g}", r.D_at_point(i, j));
    }
    out << "]   singular values " << tuple(r.singular_values) << "   rank " << r.rank_at_point << "\n";
  }
  out << "MR1: " << mr1_text(r) << "\n";
  out << "MR2: " << mr2_text(s, r) << "\n";
  int proven = 0;
  for (const auto& c : r.claims) proven += c.verdict.certified();
  out << "zero claims: " << r.claims.size() << " (" << proven << " proven, " << r.claims.size() - proven
      << " numerically zero)   certified: " << (r.certified ? "yes" : "no") << "\n";
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
}

json half_degree_json(const MechanicalSystem& s, const geometry::HalfDegreeReport& r) {
  json j;
  json nu = json::array();
  for (const auto& v : r.nu) nu.push_back(v ? json(*v) : json(nullptr));
  j["nu"] = nu;
  j["defined"] = r.defined();
  j["mu"] = r.mu();
  json chains = json::array();
  for (const auto& c : r.chains) chains.push_back(expr_vector_json(c, s.vars));
  j["chains"] = chains;
  if (r.defined()) {
    j["D"] = expr_matrix_json(r.D, s.vars);
    j["D_at_point"] = matrix_json(r.D_at_point);
    j["singular_values"] = r.singular_values;
    j["rank_at_point"] = r.rank_at_point;
  }
  j["mr1"] = r.mr1;
  j["mr2"] = r.mr2_holds;
  json mr2 = json::array();
  for (const auto& e : r.mr2) {
    json m;
    m["output"] = e.output + 1;
    m["q"] = e.q;
    m["holds"] = e.holds;
    m["certified"] = e.certified;
    if (e.witness_entry) m["witness"] = {e.witness_entry->first + 1, e.witness_entry->second + 1};
    m["residual"] = expr_matrix_json(e.residual, s.vars);
    mr2.push_back(m);
  }
  j["mr2_checks"] = mr2;
  json claims = json::array();
  for (const auto& c : r.claims)
    claims.push_back({{"output", c.output + 1}, {"q", c.q}, {"input", c.input + 1},
                      {"verdict", expr::to_string(c.verdict.kind)}});
  j["zero_claims"] = claims;
  j["certified"] = r.certified;
  j["generic_ranks"] = r.generic_ranks;
  j["warnings"] = r.warnings;
  j["solvable"] = r.solvable();
  return j;
}

void print_relative_degree(std::ostream& out, const MechanicalSystem& s, const geometry::RelativeDegreeReport& r,
                           const geometry::HalfDegreeReport& h) {
  out << "full relative degree rho = " << tuple(optional_values(r.rho));
  if (r.defined()) out << "   rank of the decoupling matrix at the point = " << r.rank_at_point << " of " << s.m;
  out << "\n";
  if (r.defined() && h.defined()) {
    bool doubled = true;
    for (int l = 0; l < s.m; ++l) doubled = doubled && *r.rho[l] == 2 * *h.nu[l];
    out << "rho = 2 nu: " << (doubled ? "yes" : "no") << "\n";
  }
}

json relative_degree_json(const MechanicalSystem& s, const geometry::RelativeDegreeReport& r) {
  json j;
  json rho = json::array();
  for (const auto& v : r.rho) rho.push_back(v ? json(*v) : json(nullptr));
  j["rho"] = rho;
  if (r.defined()) {
    const auto names = s.state_names();
    j["decoupling_matrix"] = expr_matrix_json(r.DD, names);
    j["at_point"] = matrix_json(r.DD_at_point);
    j["singular_values"] = r.singular_values;
    j["rank_at_point"] = r.rank_at_point;
  }
  j["certified"] = r.certified;
  return j;
}

void print_synthesis(std::ostream& out, const MechanicalSystem& s, const synthesis::Synthesis& syn) {
  const auto& law = syn.law;
  const auto& nf = syn.normal_form;
  out << "phi:\n";
  for (int a = 0; a < s.n; ++a) {
    out << "  xt" << a + 1 << " = " << str(law.phi[a], s);
    if (a >= law.mu()) out << "   (completion)";
    out << "\n";
  }
  out << fmt::format("Jacobian of phi at the point: smallest singular value {:.6g}\n", law.jacobian_sigma_min);
  out << "A:\n";
  for (int l = 0; l < s.m; ++l) out << "  A[" << l + 1 << "] = " << str(law.A[l], s) << "\n";
  out << "C (v^T C v):";
  bool any = false;
  for (int l = 0; l < s.m; ++l)
    for (int j = 0; j < s.n; ++j)
      for (int k = j; k < s.n; ++k)
        if (!law.C[l][j][k].is_const(0)) {
          out << (any ? "" : "\n") << "  C[" << l + 1 << "][" << j + 1 << "," << k + 1 << "] = " << str(law.C[l][j][k], s)
              << "\n";
          any = true;
        }
  if (!any) out << " all zero\n";
  out << "normal form: chains " << tuple(nf.chain_lengths) << ", observable dimension " << nf.observable_dim
      << ", unobserved dimension " << nf.unobserved_dim << "\n";
  out << "  observable Christoffel symbols vanish: " << (nf.gamma_vanishes ? "yes" : "no") << "\n";
  out << "  drift is the chain shift: " << (nf.drift_is_shift ? "yes" : "no") << "\n";
  out << "  control pattern of the chains: " << (nf.control_pattern ? "yes" : "no") << "\n";
  if (nf.unobserved_control_free)
    out << "  unobserved block free of controls: " << (*nf.unobserved_control_free ? "yes" : "no") << "\n";
  out << "  verified: " << (nf.verified() ? "yes" : "no") << (nf.certified ? " (exact)" : " (numerical zero tests)")
      << "\n";
  for (const auto& f : nf.failures) out << "  failed: " << f.what << " at coordinate " << f.index + 1 << "\n";
  out << "flatness: " << synthesis::flatness_remark(law).text << "\n";
}

json synthesis_json(const MechanicalSystem& s, const synthesis::Synthesis& syn) {
  const auto& law = syn.law;
  const auto& nf = syn.normal_form;
  json j;
  j["phi"] = expr_vector_json(law.phi, s.vars);
  j["completion_indices"] = law.completion_indices;
  j["jacobian_sigma_min"] = law.jacobian_sigma_min;
  j["A"] = expr_vector_json(law.A, s.vars);
  j["D"] = expr_matrix_json(law.D, s.vars);
  json c = json::array();
  for (const auto& m : law.C) c.push_back(expr_matrix_json(m, s.vars));
  j["C"] = c;
  j["offsets"] = law.offsets;
  json n;
  n["chain_lengths"] = nf.chain_lengths;
  n["observable_dim"] = nf.observable_dim;
  n["unobserved_dim"] = nf.unobserved_dim;
  n["gamma_vanishes"] = nf.gamma_vanishes;
  n["drift_is_shift"] = nf.drift_is_shift;
  n["control_pattern"] = nf.control_pattern;
  if (nf.unobserved_control_free) n["unobserved_control_free"] = *nf.unobserved_control_free;
  n["verified"] = nf.verified();
  n["certified"] = nf.certified;
  j["normal_form"] = n;
  const auto flat = synthesis::flatness_remark(law);
  j["flatness"] = {{"applicable", flat.applicable}, {"weight", flat.weight}, {"text", flat.text}};
  j["controller_card"] = synthesis::controller_card(s, law);
  return j;
}

void print_certificate(std::ostream& out, const sim::Certificate& c) {
  out << fmt::format("decoupling certificate (horizon {:g} s, dt {:g} s)\n", c.horizon, c.dt);
  for (const auto& ch : c.channels)
    out << fmt::format("  channel {}: max cross deviation {:.3e}, deviation from the chain response {:.3e}  {}\n",
                       ch.channel + 1, ch.max_cross, ch.analytic_deviation, ch.passed ? "ok" : "FAIL");
  out << fmt::format("  free response deviation {:.3e}\n", c.baseline_deviation);
  out << fmt::format("  superposition deviation {:.3e}\n", c.superposition_deviation);
  if (!c.failure.empty()) out << "  " << c.failure << "\n";
  out << "certificate: " << (c.passed ? "PASS" : "FAIL") << "\n";
}

json certificate_json(const sim::Certificate& c) {
  json j;
  j["nu"] = c.nu;
  j["horizon"] = c.horizon;
  j["dt"] = c.dt;
  json chans = json::array();
  for (const auto& ch : c.channels)
    chans.push_back({{"channel", ch.channel + 1},
                     {"cross", ch.cross},
                     {"max_cross", ch.max_cross},
                     {"analytic_deviation", ch.analytic_deviation},
                     {"passed", ch.passed}});
  j["channels"] = chans;
  j["baseline_deviation"] = c.baseline_deviation;
  j["superposition_deviation"] = c.superposition_deviation;
  j["runs_ok"] = c.runs_ok;
  j["failure"] = c.failure;
  j["passed"] = c.passed;
  return j;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path);
  f << j.dump(2) << "\n";
}

void write_csv_file(const std::filesystem::path& path, const sim::Trajectory& t, const std::vector<std::string>& names) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path.string());
  sim::write_csv(f, t, names);
}

std::filesystem::path csv_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw InputError("cannot create directory " + dir + ": " + ec.message());
  return p;
}

sim::InputSignal parse_signal(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.empty() || parts[0] == "zero") return sim::InputSignal::zero();
  auto number = [&](std::size_t i) {
    if (i >= parts.size()) throw InputError("input signal '" + text + "' is missing a value");
    try {
      return std::stod(parts[i]);
    } catch (const std::exception&) {
      throw InputError("bad number in input signal '" + text + "'");
    }
  };
  if (parts[0] == "step") return sim::InputSignal::step(number(1), parts.size() > 2 ? number(2) : 0.0);
  if (parts[0] == "sin") return sim::InputSignal::sinusoid(number(1), number(2));
  if (parts[0] == "table") {
    if (parts.size() != 2) throw InputError("table input needs 'table:t=v,t=v,...'");
    std::vector<std::pair<double, double>> rows;
    for (const auto& row : split(parts[1], ',')) {
      const auto kv = split(row, '=');
      if (kv.size() != 2) throw InputError("bad table row '" + row + "'");
      try {
        rows.emplace_back(std::stod(kv[0]), std::stod(kv[1]));
      } catch (const std::exception&) {
        throw InputError("bad table row '" + row + "'");
      }
    }
    return sim::InputSignal::piecewise(std::move(rows));
  }
  throw InputError("unknown input signal '" + text + "' (zero, step:A:T0, sin:A:F, table:t=v,...)");
}

// ---------------------------------------------------------------------------
// Commands

struct Common {
  std::string system;
  std::string point;
  std::vector<std::string> outputs;
  std::string regime;
  std::string output_set;
  std::uint64_t seed = expr::kDefaultSeed;
  double zero_tolerance = 1e-9;
  double rank_tolerance = 1e-8;
  std::string json_path;
  std::string csv;
  double dt = 1e-4;
  double horizon = 1.0;
};

geometry::Options analysis_options(const Common& c) {
  geometry::Options o;
  o.zero.seed = c.seed;
  o.zero.tolerance = c.zero_tolerance;
  o.rank_tolerance = c.rank_tolerance;
  return o;
}

LoadedCase load(const Common& c, const geometry::Options& o) {
  if (c.system.empty()) throw InputError("--system is required");
  return load_case({c.system, c.regime, c.output_set, flatten(c.outputs), c.point}, o);
}

void print_header(std::ostream& out, const LoadedCase& lc) {
  const auto& s = lc.system;
  out << "system: " << s.name << "   n = " << s.n << ", m = " << s.m << "\n";
  out << "outputs:";
  for (const auto& h : s.h) out << " " << str(h, s) << ";";
  out << "\npoint: " << point_text(lc.point) << "\n";
  if (lc.prefeedback_law) out << "system is the feedback loop of output set '" << *lc.source.prefeedback << "'\n";
}

json header_json(const LoadedCase& lc) {
  json j;
  j["system"] = lc.system.name;
  j["n"] = lc.system.n;
  j["m"] = lc.system.m;
  j["outputs"] = expr_vector_json(lc.system.h, lc.system.vars);
  j["point"] = point_json(lc.point);
  if (lc.source.prefeedback) j["prefeedback"] = *lc.source.prefeedback;
  return j;
}

int cmd_analyze(const Common& c, const std::vector<std::string>& candidates, std::ostream& out) {
  const auto o = analysis_options(c);
  const auto lc = load(c, o);
  const auto& s = lc.system;
  print_header(out, lc);
  const auto rep = geometry::half_degree(s, lc.point, o);
  print_half_degree(out, s, rep);
  json j = header_json(lc);
  j["half_degree"] = half_degree_json(s, rep);
  if (lc.point.v) {
    const auto rr = geometry::full_relative_degree(s, lc.point, o);
    print_relative_degree(out, s, rr, rep);
    j["relative_degree"] = relative_degree_json(s, rr);
  } else {
    out << "full relative degree: skipped (the point has no velocities)\n";
  }
  int code = rep.solvable() ? kSuccess : kConditionViolated;
  if (rep.solvable())
    out << "MIOLD solvable at the point: yes\n";
  else
    out << "MIOLD solvable at the point: no, " << verdict_reason(rep) << "\n";
  const auto cand = flatten(candidates);
  if (!cand.empty()) {
    const auto mf = geometry::check_mf_linearizable(s, lc.source.parse_expressions(cand), lc.point, o);
    out << "candidate outputs: nu = " << tuple(mf.report.nu_values()) << ", MF-linearizable: "
        << (mf.linearizable ? "yes" : "no") << " (" << mf.reason << ")\n";
    j["candidates"] = {{"outputs", cand},
                       {"half_degree", half_degree_json(s.with_outputs(lc.source.parse_expressions(cand)), mf.report)},
                       {"linearizable", mf.linearizable},
                       {"reason", mf.reason}};
    code = mf.linearizable ? kSuccess : kConditionViolated;
  }
  if (!c.json_path.empty()) write_json(c.json_path, j);
  return code;
}

struct Synthesized {
  LoadedCase lc;
  geometry::HalfDegreeReport report;
  synthesis::Synthesis syn;
};

Synthesized synthesize_case(const Common& c, const std::vector<std::string>& completion, std::ostream& out) {
  const auto o = analysis_options(c);
  auto lc = load(c, o);
  print_header(out, lc);
  auto rep = geometry::half_degree(lc.system, lc.point, o);
  print_half_degree(out, lc.system, rep);
  if (!rep.solvable()) throw ConditionError("MIOLD not solvable at the point: " + verdict_reason(rep));
  std::optional<expr::ExprVector> comp;
  const auto texts = flatten(completion);
  if (!texts.empty()) comp = lc.source.parse_expressions(texts);
  auto syn = synthesis::synthesize(lc.system, rep, lc.point, comp, o);
  return {std::move(lc), std::move(rep), std::move(syn)};
}

int cmd_synthesize(const Common& c, const std::vector<std::string>& completion, bool card, std::ostream& out) {
  const auto r = synthesize_case(c, completion, out);
  print_synthesis(out, r.lc.system, r.syn);
  if (card) out << synthesis::controller_card(r.lc.system, r.syn.law);
  if (!c.json_path.empty()) {
    json j = header_json(r.lc);
    j["half_degree"] = half_degree_json(r.lc.system, r.report);
    j["synthesis"] = synthesis_json(r.lc.system, r.syn);
    write_json(c.json_path, j);
  }
  return r.syn.normal_form.verified() ? kSuccess : kConditionViolated;
}

sim::IntegrateOptions integrate_options(const Common& c) {
  sim::IntegrateOptions o;
  o.dt = c.dt;
  o.horizon = c.horizon;
  return o;
}

int cmd_simulate(const Common& c, const std::string& inputs, bool closed, std::ostream& out) {
  const auto o = analysis_options(c);
  std::optional<Synthesized> syn;
  LoadedCase lc;
  if (closed) {
    std::ostringstream quiet;
    syn = synthesize_case(c, {}, quiet);
    lc = syn->lc;
  } else {
    lc = load(c, o);
  }
  print_header(out, lc);
  const auto& s = lc.system;
  sim::InputVector u(s.m);
  const auto specs = split(inputs, ';');
  if (!specs.empty() && static_cast<int>(specs.size()) != s.m)
    throw InputError(fmt::format("--inputs needs {} signals separated by ';'", s.m));
  for (std::size_t r = 0; r < specs.size(); ++r) u[r] = parse_signal(specs[r]);
  const auto names = s.state_names();
  sim::Trajectory traj;
  std::optional<sim::Trajectory> transformed;
  if (closed) {
    auto run = sim::closed_loop_run(s, syn->syn.law, lc.point, u, integrate_options(c));
    traj = std::move(run.original);
    transformed = std::move(run.transformed);
  } else {
    traj = sim::integrate(s, lc.point, u, integrate_options(c));
  }
  out << (closed ? "closed loop" : "open loop") << " run: " << traj.size() << " samples, status "
      << sim::to_string(traj.status) << "\n";
  if (!traj.ok()) out << "  " << traj.message << "\n";
  if (traj.size()) {
    out << fmt::format("  final t = {:g}: x = {}, v = {}, y = {}\n", traj.times.back(), tuple(traj.x.back()),
                       tuple(traj.v.back()), tuple(traj.y.back()));
  }
  if (!c.csv.empty()) {
    const auto dir = csv_dir(c.csv);
    write_csv_file(dir / "trajectory.csv", traj, names);
    if (transformed) {
      std::vector<std::string> tnames;
      for (int i = 0; i < s.n; ++i) tnames.push_back("xt" + std::to_string(i + 1));
      for (int i = 0; i < s.n; ++i) tnames.push_back("vt" + std::to_string(i + 1));
      write_csv_file(dir / "transformed.csv", *transformed, tnames);
    }
  }
  if (!c.json_path.empty()) {
    json j = header_json(lc);
    j["closed_loop"] = closed;
    j["status"] = sim::to_string(traj.status);
    j["message"] = traj.message;
    j["samples"] = traj.size();
    if (traj.size()) j["final"] = {{"t", traj.times.back()}, {"x", traj.x.back()}, {"v", traj.v.back()}, {"y", traj.y.back()}};
    write_json(c.json_path, j);
  }
  return traj.ok() ? kSuccess : kNumericalAbort;
}

int cmd_certify(const Common& c, std::optional<double> step, bool zero_gamma, bool serial, std::ostream& out) {
  auto r = synthesize_case(c, {}, out);
  print_synthesis(out, r.lc.system, r.syn);
  if (zero_gamma) {
    for (auto& m : r.syn.law.C) m = expr::zero_matrix(r.lc.system.n, r.lc.system.n);
    out << "negative control: velocity terms of the feedback removed\n";
  }
  sim::CertificateOptions co;
  co.integrate = integrate_options(c);
  co.parallel = !serial;
  if (r.lc.source.step_amplitude) co.step_amplitude = *r.lc.source.step_amplitude;
  if (step) co.step_amplitude = *step;
  const auto cert = sim::decoupling_certificate(r.lc.system, r.syn.law, r.lc.point, co);
  print_certificate(out, cert);
  if (!c.csv.empty()) {
    const auto dir = csv_dir(c.csv);
    const auto names = r.lc.system.state_names();
    write_csv_file(dir / "baseline.csv", cert.baseline, names);
    for (std::size_t j = 0; j < cert.stepped.size(); ++j)
      write_csv_file(dir / fmt::format("step_{}.csv", j + 1), cert.stepped[j], names);
  }
  if (!c.json_path.empty()) {
    json j = header_json(r.lc);
    j["half_degree"] = half_degree_json(r.lc.system, r.report);
    j["synthesis"] = synthesis_json(r.lc.system, r.syn);
    j["negative_control"] = zero_gamma;
    j["step_amplitude"] = co.step_amplitude;
    j["certificate"] = certificate_json(cert);
    write_json(c.json_path, j);
  }
  if (cert.passed && r.syn.normal_form.verified()) return kSuccess;
  return cert.runs_ok ? kConditionViolated : kNumericalAbort;
}

int cmd_corpus(const Common& c, const std::string& dir, bool no_certify, bool timings, bool serial,
               std::ostream& out) {
  CorpusOptions o;
  o.directory = dir.empty() ? std::filesystem::path(MIOLD_CORPUS_DIR) : std::filesystem::path(dir);
  o.certify = !no_certify;
  o.parallel = !serial;
  o.analysis = analysis_options(c);
  o.certificate.integrate = integrate_options(c);
  const auto rows = run_corpus(o);
  out << format_corpus_table(rows);
  bool regression = false;
  for (const auto& r : rows) regression = regression || r.regression;
  if (timings) {
    out << "\ntimings:\n";
    for (const auto& r : rows) out << fmt::format("  {} {}: {:.3f} s\n", r.file, r.label, r.seconds);
  }
  if (!c.json_path.empty()) {
    json arr = json::array();
    for (const auto& r : rows)
      arr.push_back({{"file", r.file},
                     {"case", r.label},
                     {"nu", r.nu},
                     {"rho", r.rho},
                     {"mr1", r.mr1},
                     {"mr2", r.mr2},
                     {"solvable", r.solvable},
                     {"mf_linearizable", r.linearizable},
                     {"certified", r.certified},
                     {"certificate", r.certificate},
                     {"max_cross", r.max_cross},
                     {"max_analytic", r.max_analytic},
                     {"seconds", r.seconds},
                     {"regression", r.regression},
                     {"note", r.note}});
    write_json(c.json_path, json{{"rows", arr}, {"regression", regression}});
  }
  out << (regression ? "corpus: REGRESSION\n" : "corpus: all rows match\n");
  return regression ? kConditionViolated : kSuccess;
}

void add_common(CLI::App* cmd, Common& c, bool needs_system) {
  auto* sys = cmd->add_option("--system", c.system, "System file");
  if (needs_system) sys->required();
  cmd->add_option("--point", c.point, "Analysis point \"x=...;v=...\" (overrides the file)");
  cmd->add_option("--outputs", c.outputs, "Output expressions, ';'-separated (override the file)");
  cmd->add_option("--regime", c.regime, "Regime overlay of the system file");
  cmd->add_option("--output-set", c.output_set, "Named output set of the system file");
  cmd->add_option("--seed", c.seed, "Seed of the probabilistic zero test");
  cmd->add_option("--zero-tol", c.zero_tolerance, "Tolerance of the probabilistic zero test");
  cmd->add_option("--rank-tol", c.rank_tolerance, "Relative singular-value threshold for ranks");
  cmd->add_option("--json", c.json_path, "Write the report as JSON");
}

void add_sim(CLI::App* cmd, Common& c) {
  cmd->add_option("--dt", c.dt, "Integration step [s]")->check(CLI::PositiveNumber);
  cmd->add_option("--horizon", c.horizon, "Simulation horizon [s]")->check(CLI::NonNegativeNumber);
  cmd->add_option("--csv", c.csv, "Directory for CSV trajectories");
}

}  // namespace

// ---------------------------------------------------------------------------

LoadedCase load_case(const CaseRequest& request, const geometry::Options& options) {
  const auto doc = model::SystemDocument::load(request.file);
  LoadedCase lc;
  lc.source = model::build_system(doc, request.regime, request.output_set, options.zero);
  lc.system = lc.source.system;
  if (!request.point.empty())
    lc.point = model::parse_point(request.point, lc.system);
  else if (lc.source.point)
    lc.point = *lc.source.point;
  else
    throw InputError(request.file.string() + ": no analysis point (give --point or point = ... in the file)");

  if (lc.source.prefeedback) {
    const auto base = model::build_system(doc, request.regime, *lc.source.prefeedback, options.zero);
    const auto rep = geometry::half_degree(base.system, lc.point, options);
    if (!rep.solvable())
      throw ConditionError("prefeedback output set '" + *lc.source.prefeedback + "' is not decouplable: " +
                           verdict_reason(rep));
    auto syn = synthesis::synthesize(base.system, rep, lc.point, std::nullopt, options);
    lc.system = synthesis::feedback_closed_loop(base.system, syn.law).with_outputs(lc.source.system.h);
    lc.prefeedback_law = std::move(syn.law);
  }
  if (!request.outputs.empty()) {
    auto h = lc.source.parse_expressions(request.outputs);
    if (static_cast<int>(h.size()) != lc.system.m)
      throw InputError(fmt::format("expected {} output expressions, got {}", lc.system.m, h.size()));
    for (const auto& e : h)
      if (expr::variable_count(e) > lc.system.n) throw InputError("outputs must depend on x only");
    lc.system = lc.system.with_outputs(std::move(h));
  }
  return lc;
}

Expectation parse_expectation(const std::string& text) {
  Expectation e;
  auto ints = [](const std::string& v) {
    std::vector<int> out;
    for (const auto& p : split(v, ',')) {
      try {
        out.push_back(std::stoi(p));
      } catch (const std::exception&) {
        throw InputError("bad integer '" + p + "' in expectation");
      }
    }
    return out;
  };
  auto boolean = [](const std::string& v) {
    if (v == "yes" || v == "true") return true;
    if (v == "no" || v == "false") return false;
    throw InputError("expected yes/no in expectation, got '" + v + "'");
  };
  for (const auto& item : split(text, ';')) {
    const auto kv = split(item, '=');
    if (kv.size() != 2) throw InputError("bad expectation item '" + item + "'");
    if (kv[0] == "nu")
      e.nu = ints(kv[1]);
    else if (kv[0] == "rho")
      e.rho = ints(kv[1]);
    else if (kv[0] == "solvable")
      e.solvable = boolean(kv[1]);
    else if (kv[0] == "linearizable")
      e.linearizable = boolean(kv[1]);
    else
      throw InputError("unknown expectation key '" + kv[0] + "'");
  }
  return e;
}

namespace {

CorpusRow run_corpus_case(const std::filesystem::path& file, const model::SystemDocument& doc, const std::string& regime,
                          const std::string& set, const CorpusOptions& o) {
  CorpusRow row;
  row.file = file.filename().string();
  row.label = regime.empty() && set.empty() ? "default" : !regime.empty() && !set.empty() ? regime + "/" + set
                                                                        : regime + set;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const auto lc = load_case({file, regime, set, {}, {}}, o.analysis);
    const auto rep = geometry::half_degree(lc.system, lc.point, o.analysis);
    row.nu = rep.nu_values();
    row.defined = rep.defined();
    row.mr1 = rep.mr1;
    row.mr2 = rep.mr2_holds;
    row.solvable = rep.solvable();
    row.linearizable = row.solvable && rep.mu() == lc.system.n;
    row.certified = rep.certified;
    if (lc.point.v) row.rho = optional_values(geometry::full_relative_degree(lc.system, lc.point, o.analysis).rho);
    if (!row.solvable) row.note = verdict_reason(rep);
    if (o.certify && row.solvable) {
      const auto syn = synthesis::synthesize(lc.system, rep, lc.point, std::nullopt, o.analysis);
      auto co = o.certificate;
      co.parallel = false;
      if (lc.source.step_amplitude) co.step_amplitude = *lc.source.step_amplitude;
      const auto cert = sim::decoupling_certificate(lc.system, syn.law, lc.point, co);
      for (const auto& ch : cert.channels) {
        row.max_cross = std::max(row.max_cross, ch.max_cross);
        row.max_analytic = std::max(row.max_analytic, ch.analytic_deviation);
      }
      const bool ok = cert.passed && syn.normal_form.verified();
      row.certificate = ok ? "pass" : "FAIL";
      if (!ok) {
        row.regression = true;
        row.note = !syn.normal_form.verified() ? "normal form not verified" : cert.failure;
      }
    }
    const auto& sections = doc.sections();
    const auto it = sections.find("expect");
    const std::string key = row.label;
    if (it == sections.end() || !it->second.entries.contains(key)) {
      if (row.note.empty()) row.note = "no expectation";
    } else {
      const auto e = parse_expectation(it->second.entries.at(key).text);
      std::vector<std::string> bad;
      if (e.nu && *e.nu != row.nu) bad.push_back("nu " + tuple(row.nu) + " != " + tuple(*e.nu));
      if (e.rho && *e.rho != row.rho) bad.push_back("rho " + tuple(row.rho) + " != " + tuple(*e.rho));
      if (e.solvable && *e.solvable != row.solvable) bad.push_back("solvable verdict differs");
      if (e.linearizable && *e.linearizable != row.linearizable) bad.push_back("MF-linearizable verdict differs");
      if (!bad.empty()) {
        row.regression = true;
        std::string msg;
        for (const auto& b : bad) msg += (msg.empty() ? "" : "; ") + b;
        row.note = msg;
      }
    }
  } catch (const std::exception& err) {
    row.regression = true;
    row.certificate = "error";
    row.note = err.what();
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

}  // namespace

std::vector<CorpusRow> run_corpus(const CorpusOptions& options) {
  if (!std::filesystem::is_directory(options.directory))
    throw InputError("corpus directory not found: " + options.directory.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(options.directory))
    if (entry.path().extension() == ".toml") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  std::vector<std::future<CorpusRow>> jobs;
  std::vector<model::SystemDocument> docs;
  docs.reserve(files.size());
  for (const auto& f : files) docs.push_back(model::SystemDocument::load(f));
  const auto policy = options.parallel ? std::launch::async : std::launch::deferred;
  for (std::size_t i = 0; i < files.size(); ++i) {
    auto regimes = docs[i].regimes();
    auto sets = docs[i].output_sets();
    if (regimes.empty()) regimes.push_back("");
    if (sets.empty()) sets.push_back("");
    for (const auto& r : regimes)
      for (const auto& s : sets)
        jobs.push_back(std::async(policy, [&, i, r, s] { return run_corpus_case(files[i], docs[i], r, s, options); }));
  }
  std::vector<CorpusRow> rows;
  for (auto& j : jobs) rows.push_back(j.get());
  return rows;
}

std::string format_corpus_table(const std::vector<CorpusRow>& rows) {
  std::string out = fmt::format("{:<26} {:<12} {:<8} {:<8} {:<4} {:<4} {:<9} {:<7} {:<11} {}\n", "system", "case",
                                "nu", "rho", "MR1", "MR2", "solvable", "MF-lin", "certificate", "note");
  for (const auto& r : rows) {
    auto compact = [](const std::vector<int>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s.empty() ? "-" : s;
    };
    out += fmt::format("{:<26} {:<12} {:<8} {:<8} {:<4} {:<4} {:<9} {:<7} {:<11} {}{}\n", r.file, r.label,
                       compact(r.nu), compact(r.rho), r.mr1 ? "yes" : "no", r.mr2 ? "yes" : "no",
                       r.solvable ? "yes" : "no", r.linearizable ? "yes" : "no", r.certificate,
                       r.regression ? "REGRESSION: " : "", r.note);
  }
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"miold: mechanical input-output linearization and decoupling"};
  app.require_subcommand(1);
  Common c;

  auto* analyze = app.add_subcommand("analyze", "Relative half-degree, MR1/MR2 and relative degree");
  add_common(analyze, c, true);
  std::vector<std::string> candidates;
  analyze->add_option("--candidates", candidates, "Candidate outputs for full MF-linearization, ';'-separated");

  auto* synth = app.add_subcommand("synthesize", "Build phi and the decoupling feedback");
  add_common(synth, c, true);
  std::vector<std::string> completion;
  bool card = false;
  synth->add_option("--completion", completion, "Completion functions, ';'-separated");
  synth->add_flag("--card", card, "Print the controller card");

  auto* simulate = app.add_subcommand("simulate", "Integrate the open or closed loop");
  add_common(simulate, c, true);
  add_sim(simulate, c);
  std::string inputs;
  bool closed = false;
  simulate->add_option("--inputs", inputs, "Per-channel signals: zero | step:A:T0 | sin:A:F | table:t=v,...");
  simulate->add_flag("--closed-loop", closed, "Apply the decoupling feedback; inputs drive the chains");

  auto* certify = app.add_subcommand("certify", "Synthesize and certify decoupling by simulation");
  add_common(certify, c, true);
  add_sim(certify, c);
  std::optional<double> step;
  bool zero_gamma = false, serial = false;
  certify->add_option("--step", step, "Step amplitude (default: file setting or 1)");
  certify->add_flag("--zero-gamma", zero_gamma, "Negative control: drop the velocity terms of the feedback");
  certify->add_flag("--serial", serial, "Run the paired simulations one after another");

  auto* corpus = app.add_subcommand("corpus", "Analyze and certify every bundled system");
  add_common(corpus, c, false);
  add_sim(corpus, c);
  std::string corpus_dir;
  bool no_certify = false, timings = false;
  corpus->add_option("--corpus-dir", corpus_dir, "Directory of system files");
  corpus->add_flag("--no-certify", no_certify, "Skip the certificates");
  corpus->add_flag("--timings", timings, "Print per-row timings");
  corpus->add_flag("--serial", serial, "Run rows one after another");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kInputError;
  }

  try {
    if (*analyze) return cmd_analyze(c, candidates, out);
    if (*synth) return cmd_synthesize(c, completion, card, out);
    if (*simulate) return cmd_simulate(c, inputs, closed, out);
    if (*certify) return cmd_certify(c, step, zero_gamma, serial, out);
    if (*corpus) return cmd_corpus(c, corpus_dir, no_certify, timings, serial, out);
  } catch (const ConditionError& e) {
    err << "condition violated: " << e.what() << "\n";
    return kConditionViolated;
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << "\n";
    return kNumericalAbort;
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kInputError;
}

}  // namespace miold::cli

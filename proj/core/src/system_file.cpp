#include "miold/model/system_file.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "miold/errors.hpp"

namespace miold::model {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

int bracket_balance(const std::string& s) {
  int depth = 0;
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
    if (quoted) continue;
    if (s[i] == '[') ++depth;
    if (s[i] == ']') --depth;
  }
  return depth;
}

class ValueParser {
 public:
  ValueParser(const SystemDocument& doc, std::string_view text, int line)
      : doc_(doc), text_(text), line_(line) {}

  FileValue parse() {
    FileValue v = value();
    skip();
    if (pos_ != text_.size()) doc_.fail(line_, "trailing characters after value");
    return v;
  }

 private:
  const SystemDocument& doc_;
  std::string_view text_;
  int line_;
  std::size_t pos_ = 0;

  void skip() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  FileValue value() {
    skip();
    if (pos_ >= text_.size()) doc_.fail(line_, "missing value");
    FileValue v;
    v.line = line_;
    const char c = text_[pos_];
    if (c == '"') {
      ++pos_;
      v.kind = FileValue::Kind::String;
      while (pos_ < text_.size() && text_[pos_] != '"') {
        if (text_[pos_] == '\\' && pos_ + 1 < text_.size()) ++pos_;
        v.text += text_[pos_++];
      }
      if (pos_ >= text_.size()) doc_.fail(line_, "unterminated string");
      ++pos_;
      return v;
    }
    if (c == '[') {
      ++pos_;
      v.kind = FileValue::Kind::Array;
      skip();
      if (pos_ < text_.size() && text_[pos_] == ']') {
        ++pos_;
        return v;
      }
      for (;;) {
        v.items.push_back(value());
        skip();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          ++pos_;
          skip();
          if (pos_ < text_.size() && text_[pos_] == ']') {
            ++pos_;
            return v;
          }
          continue;
        }
        if (pos_ < text_.size() && text_[pos_] == ']') {
          ++pos_;
          return v;
        }
        doc_.fail(line_, "expected ',' or ']' in array");
      }
    }
    const std::size_t start = pos_;
    while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                   text_[pos_] == '.' || text_[pos_] == '-' || text_[pos_] == '+'))
      ++pos_;
    if (start == pos_) doc_.fail(line_, std::string("unexpected '") + c + "'");
    v.kind = FileValue::Kind::Number;
    v.text = std::string(text_.substr(start, pos_ - start));
    return v;
  }
};

}  // namespace

void SystemDocument::fail(int line, const std::string& message) const {
  throw InputError(origin_ + ":" + std::to_string(line) + ": " + message);
}

SystemDocument SystemDocument::parse(std::string_view text, std::string origin) {
  SystemDocument doc;
  doc.origin_ = std::move(origin);
  doc.sections_[""].line = 1;
  std::string current;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[' && line.find('=') == std::string::npos) {
      if (line.back() != ']') doc.fail(line_no, "malformed section header");
      current = trim(std::string_view(line).substr(1, line.size() - 2));
      if (current.empty()) doc.fail(line_no, "empty section name");
      if (doc.sections_.contains(current) && current != "")
        doc.fail(line_no, "duplicate section [" + current + "]");
      doc.sections_[current].line = line_no;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) doc.fail(line_no, "expected 'key = value'");
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.size() >= 2 && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
    if (key.empty()) doc.fail(line_no, "empty key");
    std::string body = line.substr(eq + 1);
    const int start_line = line_no;
    while (bracket_balance(body) > 0 && std::getline(in, raw)) {
      ++line_no;
      body += " " + trim(strip_comment(raw));
    }
    if (bracket_balance(body) != 0) doc.fail(start_line, "unbalanced brackets");
    FileValue v = ValueParser(doc, body, start_line).parse();
    auto& section = doc.sections_[current];
    if (section.entries.contains(key)) doc.fail(start_line, "duplicate key '" + key + "'");
    section.entries.emplace(key, std::move(v));
    section.order.push_back(key);
  }
  return doc;
}

SystemDocument SystemDocument::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot read system file '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.string());
}

std::vector<std::string> SystemDocument::regimes() const {
  std::set<std::string> out;
  for (const auto& [name, s] : sections_) {
    if (name.rfind("regime.", 0) != 0) continue;
    std::string rest = name.substr(7);
    out.insert(rest.substr(0, rest.find('.')));
  }
  return {out.begin(), out.end()};
}

std::vector<std::string> SystemDocument::output_sets() const {
  auto it = sections_.find("output_sets");
  if (it == sections_.end()) return {};
  return it->second.order;
}

FileSection SystemDocument::effective(const std::string& section, const std::string& regime) const {
  FileSection out;
  if (auto it = sections_.find(section); it != sections_.end()) out = it->second;
  if (regime.empty()) return out;
  const std::string overlay = section.empty() ? "regime." + regime : "regime." + regime + "." + section;
  if (auto it = sections_.find(overlay); it != sections_.end()) {
    for (const auto& key : it->second.order) {
      if (!out.entries.contains(key)) out.order.push_back(key);
      out.entries[key] = it->second.entries.at(key);
    }
  }
  return out;
}

ExprVector SystemCase::parse_expressions(const std::vector<std::string>& texts) const {
  std::set<std::string> known;
  for (const auto& [k, v] : system.params) known.insert(k);
  expr::ParseOptions opts{&known, &defs};
  ExprVector out;
  for (const auto& t : texts) out.push_back(expr::parse(t, system.vars, opts));
  return out;
}

namespace {

class Builder {
 public:
  Builder(const SystemDocument& doc, const std::string& regime) : doc_(doc), regime_(regime) {}

  const FileSection& section(const std::string& name) {
    auto it = cache_.find(name);
    if (it == cache_.end()) it = cache_.emplace(name, doc_.effective(name, regime_)).first;
    return it->second;
  }

  bool has(const std::string& sec, const std::string& key) { return section(sec).entries.contains(key); }
  const FileValue& get(const std::string& sec, const std::string& key) {
    const auto& s = section(sec);
    auto it = s.entries.find(key);
    if (it == s.entries.end())
      doc_.fail(s.line, "missing key '" + key + "'" + (sec.empty() ? "" : " in [" + sec + "]"));
    return it->second;
  }

  long integer(const FileValue& v) {
    if (v.kind != FileValue::Kind::Number) doc_.fail(v.line, "expected an integer");
    try {
      std::size_t used = 0;
      const long k = std::stol(v.text, &used);
      if (used != v.text.size()) throw std::invalid_argument("trailing");
      return k;
    } catch (const std::exception&) {
      doc_.fail(v.line, "expected an integer, got '" + v.text + "'");
    }
  }

  std::string text_of(const FileValue& v) {
    if (v.kind == FileValue::Kind::Array) doc_.fail(v.line, "expected an expression, got an array");
    return v.text;
  }

  Expr expression(const FileValue& v, const std::vector<std::string>& vars) {
    try {
      expr::ParseOptions opts{&known_, &defs_};
      return expr::parse(text_of(v), vars, opts);
    } catch (const InputError& err) {
      doc_.fail(v.line, err.what());
    }
  }

  ExprVector expression_list(const FileValue& v, const std::vector<std::string>& vars,
                             std::size_t expected, const std::string& what) {
    if (v.kind != FileValue::Kind::Array) doc_.fail(v.line, what + " must be an array");
    if (expected && v.items.size() != expected)
      doc_.fail(v.line, what + " must have " + std::to_string(expected) + " entries, got " +
                            std::to_string(v.items.size()));
    ExprVector out;
    for (const auto& item : v.items) out.push_back(expression(item, vars));
    return out;
  }

  std::vector<int> indices(const std::string& key, const std::string& prefix, std::size_t count,
                           int n, int line) {
    std::vector<int> out;
    std::stringstream ss(key.substr(prefix.size()));
    std::string part;
    while (std::getline(ss, part, '.')) {
      try {
        std::size_t used = 0;
        const int k = std::stoi(part, &used);
        if (used != part.size()) throw std::invalid_argument("trailing");
        out.push_back(k);
      } catch (const std::exception&) {
        doc_.fail(line, "malformed index in key '" + key + "'");
      }
    }
    if (out.size() != count) doc_.fail(line, "key '" + key + "' needs " + std::to_string(count) + " indices");
    for (int k : out)
      if (k < 1 || k > n) doc_.fail(line, "index out of range in key '" + key + "'");
    return out;
  }

  SystemCase build(const std::string& output_set, const expr::ZeroTestOptions& zero) {
    SystemCase c;
    c.regime = regime_;
    c.output_set = output_set;
    MechanicalSystem& s = c.system;
    const FileSection& root = section("");
    s.name = has("", "name") ? text_of(get("", "name")) : doc_.origin();
    if (!regime_.empty()) s.name += " [" + regime_ + "]";
    if (!regime_.empty()) {
      const auto rs = doc_.regimes();
      if (std::find(rs.begin(), rs.end(), regime_) == rs.end())
        throw InputError(doc_.origin() + ": unknown regime '" + regime_ + "'");
    }
    s.n = static_cast<int>(integer(get("", "n")));
    if (s.n <= 0 || s.n > 12) doc_.fail(get("", "n").line, "n must be in 1..12");
    if (has("", "vars")) {
      const auto& v = get("", "vars");
      if (v.kind != FileValue::Kind::Array || static_cast<int>(v.items.size()) != s.n)
        doc_.fail(v.line, "vars must list n names");
      for (const auto& item : v.items) s.vars.push_back(item.text);
    } else {
      for (int i = 0; i < s.n; ++i) s.vars.push_back("x" + std::to_string(i + 1));
    }
    std::set<std::string> taken(s.vars.begin(), s.vars.end());

    // Parameters, evaluated in file order; later entries may use earlier ones.
    const FileSection& params = section("params");
    for (const auto& key : params.order) {
      const FileValue& v = params.entries.at(key);
      if (taken.contains(key)) doc_.fail(v.line, "parameter '" + key + "' clashes with a variable");
      try {
        expr::ParseOptions opts{&known_, nullptr};
        s.params[key] = expr::eval(expr::parse(text_of(v), {}, opts), std::span<const double>{}, s.params);
      } catch (const Error& err) {
        doc_.fail(v.line, "parameter '" + key + "': " + err.what());
      }
      known_.insert(key);
    }
    const FileSection& defs = section("defs");
    for (const auto& key : defs.order) {
      const FileValue& v = defs.entries.at(key);
      if (taken.contains(key) || known_.contains(key))
        doc_.fail(v.line, "definition '" + key + "' clashes with a variable or parameter");
      defs_[key] = expression(v, s.vars);
    }

    const int n = s.n;
    const bool christoffel = doc_.sections().contains("christoffel");
    const bool lagrangian = doc_.sections().contains("lagrangian");
    if (christoffel == lagrangian)
      doc_.fail(root.line, "exactly one of [christoffel] or [lagrangian] is required");

    // Outputs.
    std::string set_name = output_set;
    const FileValue* outputs = nullptr;
    if (set_name.empty()) {
      if (has("", "outputs")) outputs = &get("", "outputs");
    } else {
      const auto& sets = section("output_sets");
      auto it = sets.entries.find(set_name);
      if (it == sets.entries.end())
        throw InputError(doc_.origin() + ": unknown output set '" + set_name + "'");
      outputs = &it->second;
      const auto& pre = section("prefeedback");
      if (auto p = pre.entries.find(set_name); p != pre.entries.end()) c.prefeedback = text_of(p->second);
    }
    if (!outputs) doc_.fail(root.line, "missing outputs");
    s.h = expression_list(*outputs, s.vars, 0, "outputs");
    const int m_out = static_cast<int>(s.h.size());
    s.m = has("", "m") ? static_cast<int>(integer(get("", "m"))) : m_out;
    if (s.m != m_out) doc_.fail(outputs->line, "number of outputs differs from m");

    if (christoffel) {
      const FileSection& sec = section("christoffel");
      s.gamma.assign(static_cast<std::size_t>(n * n * n), Expr());
      std::map<std::tuple<int, int, int>, int> seen;
      std::map<int, ExprVector> fields;
      for (const auto& key : sec.order) {
        const FileValue& v = sec.entries.at(key);
        if (key.rfind("G.", 0) == 0) {
          auto idx = indices(key, "G.", 3, n, v.line);
          const int i = idx[0] - 1, j = std::min(idx[1], idx[2]) - 1, k = std::max(idx[1], idx[2]) - 1;
          const Expr value = expression(v, s.vars);
          if (auto it = seen.find({i, j, k}); it != seen.end()) {
            if (!(expr::simplify(value - s.christoffel(i, j, k)).is_const(0)))
              doc_.fail(v.line, "conflicting entries for G." + std::to_string(i + 1) + "." +
                                    std::to_string(j + 1) + "." + std::to_string(k + 1));
          }
          seen[{i, j, k}] = v.line;
          s.christoffel(i, j, k) = s.christoffel(i, k, j) = value;
        } else if (key == "e") {
          s.e = expression_list(v, s.vars, n, "e");
        } else if (key.rfind("g.", 0) == 0) {
          auto idx = indices(key, "g.", 1, s.m, v.line);
          fields[idx[0] - 1] = expression_list(v, s.vars, n, key);
        } else {
          doc_.fail(v.line, "unknown key '" + key + "' in [christoffel]");
        }
      }
      if (s.e.empty()) s.e.assign(n, Expr());
      for (int r = 0; r < s.m; ++r) {
        if (!fields.contains(r)) doc_.fail(sec.line, "missing control field g." + std::to_string(r + 1));
        s.g.push_back(fields[r]);
      }
      s.validate(zero);
    } else {
      const FileSection& sec = section("lagrangian");
      LagrangianSpec spec;
      spec.M = expr::zero_matrix(n, n);
      std::vector<std::vector<bool>> given(n, std::vector<bool>(n, false));
      std::map<int, ExprVector> fields;
      for (const auto& key : sec.order) {
        const FileValue& v = sec.entries.at(key);
        if (key.rfind("M.", 0) == 0) {
          auto idx = indices(key, "M.", 2, n, v.line);
          const int i = idx[0] - 1, j = idx[1] - 1;
          spec.M[i][j] = expression(v, s.vars);
          given[i][j] = true;
          if (!given[j][i]) spec.M[j][i] = spec.M[i][j];
        } else if (key == "V") {
          spec.V = expression(v, s.vars);
        } else if (key == "tau0") {
          spec.tau0 = expression_list(v, s.vars, n, "tau0");
        } else if (key.rfind("tau.", 0) == 0) {
          auto idx = indices(key, "tau.", 1, s.m, v.line);
          fields[idx[0] - 1] = expression_list(v, s.vars, n, key);
        } else {
          doc_.fail(v.line, "unknown key '" + key + "' in [lagrangian]");
        }
      }
      if (spec.tau0.empty()) spec.tau0.assign(n, Expr());
      for (int r = 0; r < s.m; ++r) {
        if (!fields.contains(r)) doc_.fail(sec.line, "missing control force tau." + std::to_string(r + 1));
        spec.tau.push_back(fields[r]);
      }
      std::optional<Point> pt;
      if (has("", "point")) {
        MechanicalSystem probe;
        probe.n = n;
        probe.params = s.params;
        pt = parse_point(text_of(get("", "point")), probe);
      }
      const std::string name = s.name;
      s = from_lagrangian(spec, s.vars, s.params, s.h, pt, zero);
      s.name = name;
      s.validate(zero);
    }

    if (has("", "point")) {
      const auto& v = get("", "point");
      try {
        c.point = parse_point(text_of(v), s);
      } catch (const InputError& err) {
        doc_.fail(v.line, err.what());
      }
    }
    const FileSection& cert = section("certify");
    for (const auto& key : cert.order) {
      const FileValue& v = cert.entries.at(key);
      if (key != "step_amplitude") doc_.fail(v.line, "unknown key '" + key + "' in [certify]");
      try {
        const double a = expr::eval(expr::parse(text_of(v), {}), std::span<const double>{}, s.params);
        if (!(a > 0.0)) throw InputError("must be positive");
        c.step_amplitude = a;
      } catch (const Error& err) {
        doc_.fail(v.line, std::string("step_amplitude: ") + err.what());
      }
    }
    c.defs = defs_;
    return c;
  }

 private:
  const SystemDocument& doc_;
  std::string regime_;
  std::map<std::string, FileSection> cache_;
  std::set<std::string> known_;
  std::map<std::string, Expr> defs_;
};

}  // namespace

SystemCase build_system(const SystemDocument& doc, const std::string& regime,
                        const std::string& output_set, const expr::ZeroTestOptions& zero) {
  return Builder(doc, regime).build(output_set, zero);
}

}  // namespace miold::model

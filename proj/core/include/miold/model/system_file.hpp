#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "miold/model/system.hpp"

namespace miold::model {

/// One value of the TOML-like system file: quoted string, bare number, or array.
struct FileValue {
  enum class Kind { String, Number, Array };
  Kind kind = Kind::String;
  std::string text;
  std::vector<FileValue> items;
  int line = 0;
};

struct FileSection {
  std::map<std::string, FileValue> entries;
  std::vector<std::string> order;
  int line = 0;
};

/// Parsed system file. Sections: root (""), params, defs, christoffel or
/// lagrangian, output_sets, prefeedback, and overlays regime.NAME[.SECTION].
class SystemDocument {
 public:
  static SystemDocument parse(std::string_view text, std::string origin = "<input>");
  static SystemDocument load(const std::filesystem::path& path);

  const std::string& origin() const { return origin_; }
  const std::map<std::string, FileSection>& sections() const { return sections_; }
  std::vector<std::string> regimes() const;
  std::vector<std::string> output_sets() const;

  /// Section with the regime overlay applied (empty regime: base only).
  FileSection effective(const std::string& section, const std::string& regime) const;

  [[noreturn]] void fail(int line, const std::string& message) const;

 private:
  std::string origin_;
  std::map<std::string, FileSection> sections_;
};

struct SystemCase {
  MechanicalSystem system;
  std::optional<Point> point;
  std::string regime;
  std::string output_set;
  /// When set, the outputs are meant for the feedback-only closed loop
  /// obtained from this other output set.
  std::optional<std::string> prefeedback;
  std::map<std::string, Expr> defs;
  /// Step amplitude for decoupling certificates ([certify] step_amplitude).
  std::optional<double> step_amplitude;

  /// Parses expressions in the case's variables, parameters and definitions.
  ExprVector parse_expressions(const std::vector<std::string>& texts) const;
};

SystemCase build_system(const SystemDocument& doc, const std::string& regime = {},
                        const std::string& output_set = {}, const expr::ZeroTestOptions& zero = {});

}  // namespace miold::model

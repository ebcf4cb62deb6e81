#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "miold/model/system_file.hpp"
#include "miold/sim/sim.hpp"

namespace miold::cli {

enum ExitCode { kSuccess = 0, kConditionViolated = 1, kInputError = 2, kNumericalAbort = 3 };

struct CaseRequest {
  std::filesystem::path file;
  std::string regime;
  std::string output_set;
  /// Replaces the outputs when non-empty (parsed with the file's names).
  std::vector<std::string> outputs;
  /// Replaces the file's point when non-empty.
  std::string point;
};

/// A system file resolved into the system to analyze. When the output set
/// asks for a prefeedback, `system` is the feedback loop of that other set.
struct LoadedCase {
  model::SystemCase source;
  model::MechanicalSystem system;
  expr::Point point;
  std::optional<synthesis::FeedbackLaw> prefeedback_law;
};

LoadedCase load_case(const CaseRequest& request, const geometry::Options& options = {});

struct Expectation {
  std::optional<std::vector<int>> nu;
  std::optional<std::vector<int>> rho;
  std::optional<bool> solvable;
  std::optional<bool> linearizable;
};

/// Parses "nu = 1,2; rho = 2,4; solvable = yes; linearizable = no".
Expectation parse_expectation(const std::string& text);

struct CorpusRow {
  std::string file;
  std::string label;  // regime and/or output set, "default" when neither
  std::vector<int> nu;
  std::vector<int> rho;
  bool defined = false;
  bool mr1 = false;
  bool mr2 = false;
  bool solvable = false;
  bool linearizable = false;
  bool certified = false;  // zero claims all proven
  std::string certificate = "skipped";
  double max_cross = 0.0;
  double max_analytic = 0.0;
  double seconds = 0.0;
  bool regression = false;
  std::string note;
};

struct CorpusOptions {
  std::filesystem::path directory;
  bool certify = true;
  bool parallel = true;
  geometry::Options analysis;
  sim::CertificateOptions certificate;
};

/// All regime x output-set cases of every *.toml file in the directory, in
/// file and case order. Rows are checked against each file's [expect] section.
std::vector<CorpusRow> run_corpus(const CorpusOptions& options);

std::string format_corpus_table(const std::vector<CorpusRow>& rows);

/// Full command-line entry point; returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace miold::cli

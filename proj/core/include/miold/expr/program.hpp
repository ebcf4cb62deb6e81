#pragma once

#include <span>
#include <vector>

#include "miold/expr/expr.hpp"

namespace miold::expr {

/// A batch of expressions compiled into one straight-line program with shared
/// subexpressions evaluated once. Parameters are bound at compile time.
/// Immutable after construction; run() is safe to call from many threads.
class Program {
 public:
  Program() = default;
  Program(std::span<const Expr> outputs, const ParamTable& params);

  std::size_t output_count() const { return outputs_.size(); }
  std::size_t instruction_count() const { return code_.size(); }
  /// Number of variables the program reads (largest index + 1).
  int variable_count() const { return n_vars_; }

  /// Evaluates all outputs. `scratch` is resized as needed and may be reused
  /// across calls. Throws DomainError like eval().
  void run(std::span<const double> vars, std::span<double> out, std::vector<double>& scratch) const;
  std::vector<double> operator()(std::span<const double> vars) const;

 private:
  struct Instr {
    Op op;
    int a = -1;
    int b = -1;
    double value = 0.0;
    bool integer_power = false;
  };

  std::vector<Instr> code_;
  std::vector<int> outputs_;
  int n_vars_ = 0;
};

}  // namespace miold::expr

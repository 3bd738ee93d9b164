#pragma once

#include <vector>

#include "ddrmpc/solver.hpp"

namespace ddrmpc {

// Sparse affine expression over builder variables: sum of coeff*x_i plus a
// constant. Kept deliberately small; repeated indices are allowed and are
// merged when rows are emitted.
class LinExpr {
 public:
  LinExpr() = default;
  /* implicit */ LinExpr(double constant) : constant_(constant) {}
  static LinExpr variable(int index, double coeff = 1.0) {
    LinExpr e;
    e.add(index, coeff);
    return e;
  }

  void add(int index, double coeff) {
    if (coeff != 0.0) terms_.emplace_back(index, coeff);
  }
  LinExpr& operator+=(const LinExpr& other);
  LinExpr& operator-=(const LinExpr& other);
  LinExpr& operator+=(double c) { constant_ += c; return *this; }
  LinExpr& operator-=(double c) { constant_ -= c; return *this; }
  LinExpr& operator*=(double s);
  friend LinExpr operator+(LinExpr a, const LinExpr& b) { a += b; return a; }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) { a -= b; return a; }
  friend LinExpr operator*(double s, LinExpr e) { e *= s; return e; }
  friend LinExpr operator-(LinExpr e) { e *= -1.0; return e; }

  const std::vector<std::pair<int, double>>& terms() const { return terms_; }
  double constant() const { return constant_; }

 private:
  std::vector<std::pair<int, double>> terms_;
  double constant_ = 0.0;
};

// Incremental assembly of a ProgramDescription. Constraints are stored as
// expr == 0 / expr <= 0; the expression constant moves to the rhs on build.
class ProgramBuilder {
 public:
  int add_variable(double lower = -std::numeric_limits<double>::infinity(),
                   double upper = std::numeric_limits<double>::infinity());
  // Contiguous block; returns the first index.
  int add_variables(int count, double lower = -std::numeric_limits<double>::infinity(),
                    double upper = std::numeric_limits<double>::infinity());
  int num_variables() const { return static_cast<int>(lower_.size()); }

  void add_equality(const LinExpr& expr);    // expr == 0
  void add_inequality(const LinExpr& expr);  // expr <= 0

  void add_linear_cost(const LinExpr& expr);
  void add_quadratic_cost(int i, int j, double coeff);  // += coeff * x_i * x_j
  // += weight * expr^2, expanded into quadratic/linear/constant terms.
  void add_squared_cost(const LinExpr& expr, double weight);
  // += exprs' W exprs for symmetric PSD W.
  void add_quadratic_form(const std::vector<LinExpr>& exprs, const Eigen::MatrixXd& w);

  int num_equalities() const { return static_cast<int>(eq_.size()); }
  int num_inequalities() const { return static_cast<int>(ineq_.size()); }

  ProgramDescription build() const;

 private:
  std::vector<double> lower_, upper_;
  std::vector<LinExpr> eq_, ineq_;
  std::vector<Eigen::Triplet<double>> quad_;
  std::vector<std::pair<int, double>> linear_;
  double constant_ = 0.0;
};

}  // namespace ddrmpc

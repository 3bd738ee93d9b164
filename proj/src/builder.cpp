#include "ddrmpc/builder.hpp"

#include <stdexcept>

namespace ddrmpc {

LinExpr& LinExpr::operator+=(const LinExpr& other) {
  terms_.insert(terms_.end(), other.terms_.begin(), other.terms_.end());
  constant_ += other.constant_;
  return *this;
}

LinExpr& LinExpr::operator-=(const LinExpr& other) {
  terms_.reserve(terms_.size() + other.terms_.size());
  for (const auto& [idx, c] : other.terms_) terms_.emplace_back(idx, -c);
  constant_ -= other.constant_;
  return *this;
}

LinExpr& LinExpr::operator*=(double s) {
  for (auto& [idx, c] : terms_) c *= s;
  constant_ *= s;
  return *this;
}

int ProgramBuilder::add_variable(double lower, double upper) {
  lower_.push_back(lower);
  upper_.push_back(upper);
  return static_cast<int>(lower_.size()) - 1;
}

int ProgramBuilder::add_variables(int count, double lower, double upper) {
  const int first = num_variables();
  for (int i = 0; i < count; ++i) add_variable(lower, upper);
  return first;
}

void ProgramBuilder::add_equality(const LinExpr& expr) { eq_.push_back(expr); }

void ProgramBuilder::add_inequality(const LinExpr& expr) { ineq_.push_back(expr); }

void ProgramBuilder::add_linear_cost(const LinExpr& expr) {
  for (const auto& term : expr.terms()) linear_.push_back(term);
  constant_ += expr.constant();
}

void ProgramBuilder::add_quadratic_cost(int i, int j, double coeff) {
  if (coeff == 0.0) return;
  // The objective reads 0.5 x'Px, so contributing coeff * x_i * x_j takes
  // coeff on both mirror entries (the diagonal collects 2 coeff). Stored as
  // two triplets so the assembled P is symmetric by construction.
  quad_.emplace_back(i, j, coeff);
  quad_.emplace_back(j, i, coeff);
}

void ProgramBuilder::add_squared_cost(const LinExpr& expr, double weight) {
  if (weight == 0.0) return;
  const auto& terms = expr.terms();
  for (size_t a = 0; a < terms.size(); ++a)
    for (size_t b = 0; b < terms.size(); ++b)
      add_quadratic_cost(terms[a].first, terms[b].first,
                         weight * terms[a].second * terms[b].second);
  if (expr.constant() != 0.0) {
    for (const auto& [idx, c] : terms) linear_.emplace_back(idx, 2.0 * weight * expr.constant() * c);
    constant_ += weight * expr.constant() * expr.constant();
  }
}

void ProgramBuilder::add_quadratic_form(const std::vector<LinExpr>& exprs,
                                        const Eigen::MatrixXd& w) {
  const int k = static_cast<int>(exprs.size());
  if (w.rows() != k || w.cols() != k)
    throw std::invalid_argument("quadratic form: weight matrix shape mismatch");
  for (int a = 0; a < k; ++a) {
    for (int b = 0; b < k; ++b) {
      const double wab = w(a, b);
      if (wab == 0.0) continue;
      for (const auto& [ia, ca] : exprs[a].terms())
        for (const auto& [ib, cb] : exprs[b].terms())
          add_quadratic_cost(ia, ib, wab * ca * cb);
      for (const auto& [ia, ca] : exprs[a].terms())
        linear_.emplace_back(ia, wab * ca * exprs[b].constant());
      for (const auto& [ib, cb] : exprs[b].terms())
        linear_.emplace_back(ib, wab * cb * exprs[a].constant());
      constant_ += wab * exprs[a].constant() * exprs[b].constant();
    }
  }
}

ProgramDescription ProgramBuilder::build() const {
  const int n = num_variables();
  ProgramDescription prog;
  prog.num_vars = n;
  prog.lower = Eigen::Map<const Eigen::VectorXd>(lower_.data(), n);
  prog.upper = Eigen::Map<const Eigen::VectorXd>(upper_.data(), n);

  auto fill_rows = [n](const std::vector<LinExpr>& rows, Eigen::SparseMatrix<double>& mat,
                       Eigen::VectorXd& rhs) {
    const int m = static_cast<int>(rows.size());
    mat.resize(m, n);
    rhs.resize(m);
    std::vector<Eigen::Triplet<double>> trips;
    for (int i = 0; i < m; ++i) {
      for (const auto& [idx, c] : rows[i].terms()) trips.emplace_back(i, idx, c);
      rhs(i) = -rows[i].constant();
    }
    mat.setFromTriplets(trips.begin(), trips.end());  // duplicate entries are summed
  };
  fill_rows(eq_, prog.eq_matrix, prog.eq_rhs);
  fill_rows(ineq_, prog.ineq_matrix, prog.ineq_rhs);

  prog.quad.resize(n, n);
  prog.quad.setFromTriplets(quad_.begin(), quad_.end());
  prog.linear = Eigen::VectorXd::Zero(n);
  for (const auto& [idx, c] : linear_) prog.linear(idx) += c;
  prog.constant = constant_;
  return prog;
}

}  // namespace ddrmpc

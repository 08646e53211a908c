#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "seamsim/types.hpp"

namespace seamsim::qp {

/// Convex program
///   min 0.5 x'diag(q)x + c'x   s.t.  A x = b,  G x <= h
/// with diagonal positive-semidefinite quadratic term. Linear programs set
/// q to zero.
struct Program {
    Eigen::VectorXd q;   // diagonal of Q, size n (may be empty for pure LP)
    Eigen::VectorXd c;   // size n
    Eigen::MatrixXd a;   // m_eq x n
    Eigen::VectorXd b;   // m_eq
    Eigen::MatrixXd g;   // m_in x n
    Eigen::VectorXd h;   // m_in

    std::vector<std::string> eq_names; // optional, for diagnostics
    std::vector<std::string> in_names;

    int n_vars() const { return static_cast<int>(c.size()); }
    int n_eq() const { return static_cast<int>(b.size()); }
    int n_in() const { return static_cast<int>(h.size()); }

    double objective(const Eigen::VectorXd& x) const;
};

enum class SolveStatus { Optimal, Infeasible, MaxIterations, NumericalFailure };

/// Worst Karush-Kuhn-Tucker residuals of a candidate solution.
struct KktResiduals {
    double stationarity = 0.0;    // ||q.*x + c + A'y + G'z||_inf
    double primal_eq = 0.0;       // ||Ax - b||_inf
    double primal_in = 0.0;       // max(Gx - h, 0)_inf
    double dual_nonneg = 0.0;     // max(-z, 0)_inf
    double complementarity = 0.0; // max |z_i (h - Gx)_i|

    double worst() const;
};

struct Solution {
    SolveStatus status = SolveStatus::NumericalFailure;
    Eigen::VectorXd x;
    Eigen::VectorXd y; // equality duals, objective gradient convention:
                       // q.*x + c + A'y + G'z = 0
    Eigen::VectorXd z; // inequality duals, z >= 0
    double objective = 0.0;
    int iterations = 0;
    bool polished = false;
    KktResiduals kkt;

    /// Rows of A / G that could not be satisfied, populated on Infeasible.
    std::vector<std::pair<std::string, double>> infeasible_rows;
};

struct SolverOptions {
    int max_iterations = 120;
    double tolerance = 1e-9;     // relative residual target
    bool polish = true;
};

KktResiduals kkt_residuals(const Program& prob, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& y, const Eigen::VectorXd& z);

/// Mehrotra-style primal-dual interior point with an active-set polish pass.
Solution solve(const Program& prob, const SolverOptions& opts = {});

/// Minimal uniform slack that restores feasibility when added to the
/// selected inequality rows: min t s.t. Ax = b, Gx <= h + t*mask, t >= 0.
/// Returns nullopt when even the relaxed program is infeasible.
std::optional<double> minimal_row_relaxation(const Program& prob,
                                             const std::vector<bool>& relax_mask);

} // namespace seamsim::qp

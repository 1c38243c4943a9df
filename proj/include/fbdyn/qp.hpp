#pragma once

#include "fbdyn/types.hpp"

namespace fbdyn {

// Dense convex QP: minimize 1/2 x'Hx + g'x subject to A_eq x = b_eq and A_in x <= b_in.
struct QpProblem {
    MatX hessian;  // symmetric positive definite
    VecX gradient;
    MatX a_eq; // may be 0 x n
    VecX b_eq;
    MatX a_in; // may be 0 x n
    VecX b_in;

    int variable_count() const { return static_cast<int>(hessian.rows()); }
};

enum class QpStatus { kOptimal, kInfeasible, kMaxIterations };

struct QpSolution {
    QpStatus status = QpStatus::kMaxIterations;
    VecX x;
    VecX eq_multipliers;
    VecX in_multipliers;     // one per inequality row, zero when inactive
    // Max-norm KKT residual; stationarity and complementarity components are scaled by the
    // problem magnitude so the tolerance is meaningful across force scales.
    double kkt_residual = 0.0;
    double infeasibility = 0.0; // Farkas-type residual reported on kInfeasible
    int iterations = 0;
};

struct QpSettings {
    double tolerance = 1e-9;
    int max_iterations = 200;
    // Optional feasible starting point; when absent the solver starts from the minimum-norm
    // solution of the equalities and runs a phase-1 problem if inequalities are violated there.
    const VecX* initial_point = nullptr;
};

// Primal active-set method with dense Cholesky refactorization per working set. Deterministic:
// blocking and dropping choices break ties by lowest constraint index.
QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings = {});

} // namespace fbdyn

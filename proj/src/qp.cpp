#include "fbdyn/qp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace fbdyn {

namespace {

// Step and ratio tests are relative to the iterate scale; absolute thresholds stall on
// well-scaled problems whose solutions are numerically large.
constexpr double kStepTolerance = 1e-10;
constexpr double kRatioTolerance = 1e-12;

struct Workspace {
    const QpProblem& problem;
    Eigen::LLT<MatX> hessian_chol;
    int n = 0;

    explicit Workspace(const QpProblem& p) : problem(p), n(p.variable_count()) {
        MatX h = 0.5 * (p.hessian + p.hessian.transpose());
        Eigen::LLT<MatX> llt(h);
        if (llt.info() != Eigen::Success) {
            // PSD-but-singular Hessians get a ridge tied to the matrix scale; callers that need
            // exact semidefinite handling solve their equality-constrained problems directly.
            const double ridge = 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff());
            h += ridge * MatX::Identity(n, n);
            llt.compute(h);
        }
        hessian_chol = llt;
    }
};

// Rows of the working set stacked on top of the equalities.
MatX active_matrix(const QpProblem& p, const std::vector<int>& working) {
    const int me = static_cast<int>(p.a_eq.rows());
    MatX a(me + working.size(), p.variable_count());
    if (me > 0) a.topRows(me) = p.a_eq;
    for (size_t k = 0; k < working.size(); ++k) a.row(me + k) = p.a_in.row(working[k]);
    return a;
}

// Solves the equality-constrained step: minimize the model at x+p subject to A p = 0.
// Returns the step and the multipliers of the active rows (equalities first).
void eqp_step(const Workspace& ws, const MatX& a, const VecX& x, VecX& p, VecX& lambda) {
    const VecX grad = ws.problem.hessian * x + ws.problem.gradient;
    const VecX h_inv_grad = ws.hessian_chol.solve(grad);
    if (a.rows() == 0) {
        p = -h_inv_grad;
        lambda.resize(0);
        return;
    }
    const MatX h_inv_at = ws.hessian_chol.solve(a.transpose());
    const MatX schur = a * h_inv_at;
    // Minimum-norm multipliers; rank-deficient working sets (redundant rows) stay well posed
    // because A^T lambda is unique.
    lambda = MatX(schur).completeOrthogonalDecomposition().solve(-(a * h_inv_grad));
    p = -h_inv_grad - h_inv_at * lambda;
}

double max_violation(const QpProblem& p, const VecX& x) {
    double v = 0.0;
    if (p.a_eq.rows() > 0) v = (p.a_eq * x - p.b_eq).cwiseAbs().maxCoeff();
    if (p.a_in.rows() > 0) v = std::max(v, (p.a_in * x - p.b_in).maxCoeff());
    return v;
}

double kkt_residual(const QpProblem& p, const VecX& x, const VecX& lam_eq, const VecX& lam_in) {
    VecX stationarity = p.hessian * x + p.gradient;
    const double scale = std::max({1.0, p.gradient.cwiseAbs().maxCoeff(),
                                   (p.hessian * x).cwiseAbs().maxCoeff()});
    if (p.a_eq.rows() > 0) stationarity += p.a_eq.transpose() * lam_eq;
    if (p.a_in.rows() > 0) stationarity += p.a_in.transpose() * lam_in;
    double r = stationarity.cwiseAbs().maxCoeff() / scale;
    if (p.a_eq.rows() > 0) r = std::max(r, (p.a_eq * x - p.b_eq).cwiseAbs().maxCoeff());
    for (int i = 0; i < p.a_in.rows(); ++i) {
        const double slack = p.b_in[i] - p.a_in.row(i).dot(x);
        r = std::max(r, std::max(0.0, -slack));            // primal feasibility
        r = std::max(r, std::max(0.0, -lam_in[i]));        // dual feasibility
        r = std::max(r, std::abs(lam_in[i] * slack) / scale); // complementarity
    }
    return r;
}

QpSolution solve_from_feasible(const Workspace& ws, const VecX& x0, const QpSettings& settings) {
    const QpProblem& p = ws.problem;
    const int me = static_cast<int>(p.a_eq.rows());
    const int mi = static_cast<int>(p.a_in.rows());

    QpSolution sol;
    VecX x = x0;
    std::vector<int> working;
    std::vector<char> in_working(mi, 0);
    // Constraints already at their boundary join the working set (lowest index first by
    // construction of the scan).
    for (int i = 0; i < mi; ++i) {
        if (p.b_in[i] - p.a_in.row(i).dot(x) <= settings.tolerance) {
            working.push_back(i);
            in_working[i] = 1;
        }
    }

    VecX lambda;
    for (int iter = 0; iter < settings.max_iterations; ++iter) {
        sol.iterations = iter + 1;
        MatX a = active_matrix(p, working);
        VecX step;
        eqp_step(ws, a, x, step, lambda);

        const double iterate_scale = std::max(1.0, x.cwiseAbs().maxCoeff());
        if (step.cwiseAbs().maxCoeff() <= kStepTolerance * iterate_scale) {
            // Stationary on the working set: optimal unless an active inequality wants out.
            int drop = -1;
            double most_negative = -settings.tolerance;
            for (size_t k = 0; k < working.size(); ++k) {
                const double m = lambda[me + k];
                if (m < most_negative - 1e-15 ||
                    (drop >= 0 && std::abs(m - most_negative) <= 1e-15 && working[k] < working[drop])) {
                    most_negative = m;
                    drop = static_cast<int>(k);
                }
            }
            if (drop < 0) {
                sol.status = QpStatus::kOptimal;
                sol.x = x;
                sol.eq_multipliers = me > 0 ? VecX(lambda.head(me)) : VecX();
                sol.in_multipliers = VecX::Zero(mi);
                for (size_t k = 0; k < working.size(); ++k)
                    sol.in_multipliers[working[k]] = std::max(0.0, lambda[me + k]);
                sol.kkt_residual = kkt_residual(p, x, sol.eq_multipliers, sol.in_multipliers);
                return sol;
            }
            in_working[working[drop]] = 0;
            working.erase(working.begin() + drop);
            continue;
        }

        // Ratio test over inactive inequalities; ties resolved toward the lowest index.
        double alpha = 1.0;
        int blocking = -1;
        for (int i = 0; i < mi; ++i) {
            if (in_working[i]) continue;
            const double along = p.a_in.row(i).dot(step);
            if (along <= kRatioTolerance) continue;
            const double ratio = std::max(0.0, (p.b_in[i] - p.a_in.row(i).dot(x)) / along);
            if (ratio < alpha - 1e-15) {
                alpha = ratio;
                blocking = i;
            }
        }
        x += alpha * step;
        if (blocking >= 0) {
            // A blocking row is always independent of the working set: the step lies in the
            // working set's null space and the blocking row has positive inner product with it.
            working.push_back(blocking);
            in_working[blocking] = 1;
            std::sort(working.begin(), working.end());
        }
    }
    sol.status = QpStatus::kMaxIterations;
    sol.x = x;
    sol.eq_multipliers = VecX::Zero(me);
    sol.in_multipliers = VecX::Zero(mi);
    return sol;
}

// Phase-1: minimize t^2 (plus a small tether to the start) over A_eq x = b_eq,
// A_in x - t <= b_in, t >= 0. Reaches t ~ 0 iff the problem is feasible.
QpSolution phase_one(const QpProblem& p, const VecX& x0, const QpSettings& settings, double epsilon) {
    const int n = p.variable_count();
    const int mi = static_cast<int>(p.a_in.rows());

    QpProblem aux;
    aux.hessian = MatX::Identity(n + 1, n + 1) * epsilon;
    aux.hessian(n, n) = 1.0;
    aux.gradient = VecX::Zero(n + 1);
    aux.gradient.head(n) = -epsilon * x0;
    if (p.a_eq.rows() > 0) {
        aux.a_eq = MatX::Zero(p.a_eq.rows(), n + 1);
        aux.a_eq.leftCols(n) = p.a_eq;
        aux.b_eq = p.b_eq;
    }
    aux.a_in = MatX::Zero(mi + 1, n + 1);
    aux.a_in.block(0, 0, mi, n) = p.a_in;
    aux.a_in.col(n).head(mi).setConstant(-1.0);
    aux.a_in(mi, n) = -1.0;
    aux.b_in = VecX::Zero(mi + 1);
    aux.b_in.head(mi) = p.b_in;

    double t0 = 0.0;
    if (mi > 0) t0 = std::max(0.0, (p.a_in * x0 - p.b_in).maxCoeff());
    VecX start(n + 1);
    start.head(n) = x0;
    start[n] = t0 + 1.0;

    Workspace ws(aux);
    QpSettings aux_settings = settings;
    aux_settings.initial_point = nullptr;
    aux_settings.max_iterations = std::max(settings.max_iterations, 100 + 2 * mi);
    return solve_from_feasible(ws, start, aux_settings);
}

} // namespace

QpSolution solve_qp(const QpProblem& problem, const QpSettings& settings) {
    const int n = problem.variable_count();
    Workspace ws(problem);

    VecX x0;
    if (settings.initial_point) {
        x0 = *settings.initial_point;
    } else if (problem.a_eq.rows() > 0) {
        x0 = MatX(problem.a_eq).completeOrthogonalDecomposition().solve(problem.b_eq);
    } else {
        x0 = VecX::Zero(n);
    }

    // Equalities must be attainable at all.
    if (problem.a_eq.rows() > 0) {
        const double eq_residual = (problem.a_eq * x0 - problem.b_eq).cwiseAbs().maxCoeff();
        if (eq_residual > std::max(1e-8, settings.tolerance * 100)) {
            QpSolution sol;
            sol.status = QpStatus::kInfeasible;
            sol.infeasibility = eq_residual;
            sol.x = x0;
            return sol;
        }
    }

    double violation = 0.0;
    if (problem.a_in.rows() > 0) violation = std::max(0.0, (problem.a_in * x0 - problem.b_in).maxCoeff());
    if (violation > settings.tolerance) {
        QpSolution feas = phase_one(problem, x0, settings, 1e-8);
        double t = feas.x.size() > 0 ? feas.x[n] : violation;
        if (t > 1e-9 && t < 1e-2) {
            // Ambiguous: retry with a weaker tether before declaring infeasibility.
            const VecX near = feas.x.head(n);
            feas = phase_one(problem, near, settings, 1e-14);
            t = feas.x[n];
        }
        if (t > 1e-9) {
            QpSolution sol;
            sol.status = QpStatus::kInfeasible;
            sol.infeasibility = t;
            sol.x = feas.x.head(n);
            return sol;
        }
        x0 = feas.x.head(n);
    }

    QpSolution sol = solve_from_feasible(ws, x0, settings);
    sol.infeasibility = sol.status == QpStatus::kOptimal ? 0.0 : max_violation(problem, sol.x);
    return sol;
}

} // namespace fbdyn

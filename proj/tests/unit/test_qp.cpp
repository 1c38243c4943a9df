#include "fbdyn/qp.hpp"

#include <doctest.h>

#include <random>

using namespace fbdyn;

namespace {

double objective(const QpProblem& p, const VecX& x) {
    return 0.5 * x.dot(p.hessian * x) + p.gradient.dot(x);
}

// Independent oracle: enumerate every subset of inequalities as a candidate active set, solve
// the equality-constrained stationarity system, keep the best feasible candidate.
double brute_force_optimum(const QpProblem& p, bool& feasible) {
    const int n = p.variable_count();
    const int mi = static_cast<int>(p.a_in.rows());
    double best = std::numeric_limits<double>::infinity();
    feasible = false;
    for (int mask = 0; mask < (1 << mi); ++mask) {
        std::vector<int> active;
        for (int i = 0; i < mi; ++i)
            if (mask & (1 << i)) active.push_back(i);
        const int me = static_cast<int>(p.a_eq.rows());
        const int ma = me + static_cast<int>(active.size());
        MatX kkt = MatX::Zero(n + ma, n + ma);
        kkt.topLeftCorner(n, n) = p.hessian;
        VecX rhs(n + ma);
        rhs.head(n) = -p.gradient;
        if (me > 0) {
            kkt.block(n, 0, me, n) = p.a_eq;
            kkt.block(0, n, n, me) = p.a_eq.transpose();
            rhs.segment(n, me) = p.b_eq;
        }
        for (size_t k = 0; k < active.size(); ++k) {
            kkt.block(n + me + k, 0, 1, n) = p.a_in.row(active[k]);
            kkt.block(0, n + me + k, n, 1) = p.a_in.row(active[k]).transpose();
            rhs[n + me + k] = p.b_in[active[k]];
        }
        Eigen::FullPivLU<MatX> lu(kkt);
        if (!lu.isInvertible()) continue;
        const VecX sol = lu.solve(rhs);
        const VecX x = sol.head(n);
        bool ok = true;
        if (me > 0 && (p.a_eq * x - p.b_eq).cwiseAbs().maxCoeff() > 1e-9) ok = false;
        if (mi > 0 && (p.a_in * x - p.b_in).maxCoeff() > 1e-9) ok = false;
        if (!ok) continue;
        feasible = true;
        best = std::min(best, objective(p, x));
    }
    return best;
}

} // namespace

TEST_CASE("projection onto an equality: min |x|^2 s.t. x1 = 1") {
    QpProblem p;
    p.hessian = 2.0 * MatX::Identity(3, 3);
    p.gradient = VecX::Zero(3);
    p.a_eq = MatX::Zero(1, 3);
    p.a_eq(0, 0) = 1.0;
    p.b_eq = VecX::Constant(1, 1.0);

    const QpSolution sol = solve_qp(p);
    REQUIRE(sol.status == QpStatus::kOptimal);
    CHECK(sol.x.isApprox(Vec3(1, 0, 0), 1e-10));
    CHECK(sol.kkt_residual < 1e-9);
}

TEST_CASE("hand KKT: min |x - (2,0)|^2 s.t. x1 <= 1 gives multiplier 2") {
    QpProblem p;
    p.hessian = 2.0 * MatX::Identity(2, 2);
    p.gradient = VecX(2);
    p.gradient << -4.0, 0.0;
    p.a_in = MatX::Zero(1, 2);
    p.a_in(0, 0) = 1.0;
    p.b_in = VecX::Constant(1, 1.0);

    const QpSolution sol = solve_qp(p);
    REQUIRE(sol.status == QpStatus::kOptimal);
    CHECK(sol.x.isApprox(Eigen::Vector2d(1, 0), 1e-10));
    CHECK(sol.in_multipliers[0] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("random small problems match the brute-force enumeration oracle") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<int> nd(2, 6), md(1, 4);

    int solved = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = nd(rng);
        const int mi = md(rng);
        QpProblem p;
        MatX a = MatX::NullaryExpr(n, n, [&]() { return u(rng); });
        p.hessian = a * a.transpose() + 0.5 * MatX::Identity(n, n);
        p.gradient = VecX::NullaryExpr(n, [&]() { return u(rng); });
        p.a_in = MatX::NullaryExpr(mi, n, [&]() { return u(rng); });
        // b >= 0 keeps the origin feasible so both solver and oracle agree a solution exists.
        p.b_in = VecX::NullaryExpr(mi, [&]() { return 0.2 + std::abs(u(rng)); });

        const QpSolution sol = solve_qp(p);
        REQUIRE(sol.status == QpStatus::kOptimal);
        bool oracle_feasible = false;
        const double oracle = brute_force_optimum(p, oracle_feasible);
        REQUIRE(oracle_feasible);
        CHECK(std::abs(objective(p, sol.x) - oracle) < 1e-8);
        CHECK(sol.kkt_residual < 1e-8);
        ++solved;
    }
    CHECK(solved == 200);
}

TEST_CASE("equalities and inequalities together") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 4;
        QpProblem p;
        MatX a = MatX::NullaryExpr(n, n, [&]() { return u(rng); });
        p.hessian = a * a.transpose() + 0.5 * MatX::Identity(n, n);
        p.gradient = VecX::NullaryExpr(n, [&]() { return u(rng); });
        p.a_eq = MatX::NullaryExpr(1, n, [&]() { return u(rng); });
        p.b_eq = VecX::Zero(1); // origin stays feasible
        p.a_in = MatX::NullaryExpr(3, n, [&]() { return u(rng); });
        p.b_in = VecX::NullaryExpr(3, [&]() { return 0.2 + std::abs(u(rng)); });

        const QpSolution sol = solve_qp(p);
        REQUIRE(sol.status == QpStatus::kOptimal);
        bool oracle_feasible = false;
        const double oracle = brute_force_optimum(p, oracle_feasible);
        REQUIRE(oracle_feasible);
        CHECK(std::abs(objective(p, sol.x) - oracle) < 1e-8);
    }
}

TEST_CASE("infeasible problems are certified") {
    QpProblem p;
    p.hessian = 2.0 * MatX::Identity(1, 1);
    p.gradient = VecX::Zero(1);
    p.a_in = MatX::Zero(2, 1);
    p.a_in << 1.0, -1.0; // x <= -1 and -x <= -2, i.e. x >= 2
    p.b_in = VecX(2);
    p.b_in << -1.0, -2.0;

    const QpSolution sol = solve_qp(p);
    CHECK(sol.status == QpStatus::kInfeasible);
    CHECK(sol.infeasibility > 0.1);
}

TEST_CASE("inconsistent equalities are infeasible") {
    QpProblem p;
    p.hessian = 2.0 * MatX::Identity(2, 2);
    p.gradient = VecX::Zero(2);
    p.a_eq = MatX(2, 2);
    p.a_eq << 1, 0, 1, 0;
    p.b_eq = VecX(2);
    p.b_eq << 0.0, 1.0;
    CHECK(solve_qp(p).status == QpStatus::kInfeasible);
}

TEST_CASE("deterministic: identical inputs give bit-identical solutions") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    QpProblem p;
    MatX a = MatX::NullaryExpr(5, 5, [&]() { return u(rng); });
    p.hessian = a * a.transpose() + MatX::Identity(5, 5);
    p.gradient = VecX::NullaryExpr(5, [&]() { return u(rng); });
    p.a_in = MatX::NullaryExpr(4, 5, [&]() { return u(rng); });
    p.b_in = VecX::NullaryExpr(4, [&]() { return 0.1 + std::abs(u(rng)); });

    const QpSolution s1 = solve_qp(p);
    const QpSolution s2 = solve_qp(p);
    REQUIRE(s1.status == QpStatus::kOptimal);
    CHECK((s1.x - s2.x).norm() == 0.0);
    CHECK(s1.iterations == s2.iterations);
}

TEST_CASE("warm start from a supplied feasible point") {
    QpProblem p;
    p.hessian = 2.0 * MatX::Identity(2, 2);
    p.gradient = VecX(2);
    p.gradient << -4.0, -4.0;
    p.a_in = MatX::Identity(2, 2);
    p.b_in = VecX::Constant(2, 1.0);

    VecX start(2);
    start << 0.5, 0.5;
    QpSettings settings;
    settings.initial_point = &start;
    const QpSolution sol = solve_qp(p, settings);
    REQUIRE(sol.status == QpStatus::kOptimal);
    CHECK(sol.x.isApprox(Eigen::Vector2d(1, 1), 1e-10));
}

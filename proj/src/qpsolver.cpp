#include "seamsim/qpsolver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace seamsim::qp {

namespace {

constexpr double kStepScale = 0.99;
constexpr double kRegularization = 1e-11;

Eigen::VectorXd quad_diag(const Program& prob) {
    if (prob.q.size() == 0) return Eigen::VectorXd::Zero(prob.n_vars());
    return prob.q;
}

double inf_norm(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

/// Largest alpha in (0, 1] with v + alpha*dv >= (1-kStepScale)*v-ish margin.
double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double alpha = 1.0;
    for (int i = 0; i < v.size(); ++i)
        if (dv(i) < 0.0) alpha = std::min(alpha, -v(i) / dv(i));
    return alpha;
}

struct IpmState {
    Eigen::VectorXd x, y, z, w;
};

} // namespace

double Program::objective(const Eigen::VectorXd& x) const {
    double obj = c.dot(x);
    if (q.size()) obj += 0.5 * x.dot(q.cwiseProduct(x));
    return obj;
}

double KktResiduals::worst() const {
    return std::max({stationarity, primal_eq, primal_in, dual_nonneg, complementarity});
}

KktResiduals kkt_residuals(const Program& prob, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& y, const Eigen::VectorXd& z) {
    KktResiduals r;
    Eigen::VectorXd stat = quad_diag(prob).cwiseProduct(x) + prob.c;
    if (prob.n_eq()) stat += prob.a.transpose() * y;
    if (prob.n_in()) stat += prob.g.transpose() * z;
    r.stationarity = inf_norm(stat);
    if (prob.n_eq()) r.primal_eq = inf_norm(prob.a * x - prob.b);
    if (prob.n_in()) {
        const Eigen::VectorXd slack = prob.h - prob.g * x;
        r.primal_in = std::max(0.0, -slack.minCoeff());
        r.dual_nonneg = std::max(0.0, -z.minCoeff());
        r.complementarity = z.cwiseProduct(slack).cwiseAbs().maxCoeff();
    }
    return r;
}

namespace {

/// Solve the equality-constrained KKT system for a guessed active set,
/// iterating add/drop corrections, evaluating every candidate, and keeping
/// whichever beats the interior-point iterate.
void polish(const Program& prob, Solution& sol) {
    const int n = prob.n_vars();
    const int me = prob.n_eq();
    const int mi = prob.n_in();

    const Eigen::VectorXd ipm_slack = prob.h - prob.g * sol.x;
    std::vector<std::vector<bool>> guesses;
    {
        std::vector<bool> by_ratio(mi, false), by_slack(mi, false);
        for (int i = 0; i < mi; ++i) {
            by_ratio[i] = sol.z(i) > ipm_slack(i);
            by_slack[i] = ipm_slack(i) < 1e-7 * (1.0 + std::abs(prob.h(i)));
        }
        guesses.push_back(by_ratio);
        if (by_slack != by_ratio) guesses.push_back(by_slack);
    }

    bool improved = false;
    for (std::vector<bool>& active : guesses) {
        for (int attempt = 0; attempt < 6; ++attempt) {
            std::vector<int> rows;
            for (int i = 0; i < mi; ++i)
                if (active[i]) rows.push_back(i);
            const int ma = static_cast<int>(rows.size());
            const int dim = n + me + ma;
            Eigen::MatrixXd k = Eigen::MatrixXd::Zero(dim, dim);
            Eigen::VectorXd rhs(dim);
            k.topLeftCorner(n, n).diagonal() = quad_diag(prob);
            rhs.head(n) = -prob.c;
            if (me) {
                k.block(n, 0, me, n) = prob.a;
                k.block(0, n, n, me) = prob.a.transpose();
                rhs.segment(n, me) = prob.b;
            }
            for (int r = 0; r < ma; ++r) {
                k.row(n + me + r).head(n) = prob.g.row(rows[r]);
                k.col(n + me + r).head(n) = prob.g.row(rows[r]).transpose();
                rhs(n + me + r) = prob.h(rows[r]);
            }

            Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(k);
            const Eigen::VectorXd sol_vec = cod.solve(rhs);

            Eigen::VectorXd x = sol_vec.head(n);
            Eigen::VectorXd y = me ? sol_vec.segment(n, me).eval() : Eigen::VectorXd();
            Eigen::VectorXd z_raw = Eigen::VectorXd::Zero(mi);
            for (int r = 0; r < ma; ++r) z_raw(rows[r]) = sol_vec(n + me + r);

            const Eigen::VectorXd z = z_raw.cwiseMax(0.0);
            const KktResiduals kkt = kkt_residuals(prob, x, y, z);
            if (kkt.worst() < std::max(sol.kkt.worst(), 1e-12)) {
                sol.x = x;
                sol.y = y;
                sol.z = z;
                sol.kkt = kkt;
                sol.objective = prob.objective(sol.x);
                sol.polished = true;
                improved = true;
            }
            if (improved && kkt.worst() < 1e-10) return;

            // Refine the guess: drop negative duals, add violated rows.
            bool changed = false;
            for (int r = 0; r < ma; ++r) {
                if (z_raw(rows[r]) < -1e-9) {
                    active[rows[r]] = false;
                    changed = true;
                }
            }
            const Eigen::VectorXd slack = prob.h - prob.g * x;
            for (int i = 0; i < mi; ++i) {
                if (!active[i] && slack(i) < -1e-9) {
                    active[i] = true;
                    changed = true;
                }
            }
            if (!changed) {
                // Stalled on a bad residual: a weakly active row may be
                // over-constraining the system; retry without the smallest
                // dual.
                if (kkt.worst() > std::max(sol.kkt.worst(), 1e-9) && ma > 0) {
                    int weakest = rows[0];
                    for (int r = 1; r < ma; ++r)
                        if (z_raw(rows[r]) < z_raw(weakest)) weakest = rows[r];
                    active[weakest] = false;
                    changed = true;
                }
            }
            if (!changed) break;
        }
    }
}

Solution run_ipm(const Program& prob, const SolverOptions& opts) {
    const int n = prob.n_vars();
    const int me = prob.n_eq();
    const int mi = prob.n_in();
    const Eigen::VectorXd q = quad_diag(prob);

    Solution sol;
    sol.x = Eigen::VectorXd::Zero(n);
    sol.y = Eigen::VectorXd::Zero(me);
    sol.z = Eigen::VectorXd::Zero(mi);

    // Equality-only programs reduce to one saddle-point solve.
    if (mi == 0) {
        Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + me, n + me);
        k.topLeftCorner(n, n).diagonal() = q.array() + kRegularization;
        if (me) {
            k.block(n, 0, me, n) = prob.a;
            k.block(0, n, n, me) = prob.a.transpose();
        }
        Eigen::VectorXd rhs(n + me);
        rhs.head(n) = -prob.c;
        if (me) rhs.segment(n, me) = prob.b;
        Eigen::VectorXd s = Eigen::PartialPivLU<Eigen::MatrixXd>(k).solve(rhs);
        sol.x = s.head(n);
        if (me) sol.y = s.segment(n, me);
        sol.kkt = kkt_residuals(prob, sol.x, sol.y, sol.z);
        sol.objective = prob.objective(sol.x);
        sol.status = sol.kkt.worst() < 1e-6 ? SolveStatus::Optimal : SolveStatus::NumericalFailure;
        return sol;
    }

    IpmState st;
    // Starting point: least-norm equality solution, safely interior slacks.
    st.x = Eigen::VectorXd::Zero(n);
    if (me) {
        Eigen::MatrixXd aat = prob.a * prob.a.transpose();
        aat.diagonal().array() += 1e-10;
        st.x = prob.a.transpose() * Eigen::LLT<Eigen::MatrixXd>(aat).solve(prob.b);
    }
    Eigen::VectorXd slack = prob.h - prob.g * st.x;
    const double shift = std::max(0.0, 1.0 - slack.minCoeff());
    st.w = slack.array() + shift;
    st.w = st.w.cwiseMax(1.0);
    st.z = Eigen::VectorXd::Ones(mi);
    st.y = Eigen::VectorXd::Zero(me);

    const double b_scale = 1.0 + std::max(inf_norm(prob.b), inf_norm(prob.h));
    const double c_scale = 1.0 + inf_norm(prob.c);

    double best_worst = std::numeric_limits<double>::infinity();
    IpmState best = st;
    sol.status = SolveStatus::MaxIterations;

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        const Eigen::VectorXd r_stat =
            q.cwiseProduct(st.x) + prob.c + (me ? (prob.a.transpose() * st.y).eval()
                                                : Eigen::VectorXd::Zero(n)) +
            prob.g.transpose() * st.z;
        const Eigen::VectorXd r_eq = me ? (prob.a * st.x - prob.b).eval() : Eigen::VectorXd();
        const Eigen::VectorXd r_in = prob.g * st.x + st.w - prob.h;
        const double mu = st.w.dot(st.z) / mi;

        const double rel_stat = inf_norm(r_stat) / c_scale;
        const double rel_eq = me ? inf_norm(r_eq) / b_scale : 0.0;
        const double rel_in = inf_norm(r_in) / b_scale;
        const double obj = prob.objective(st.x);
        // Mean and worst-case complementarity both have to come down, or a
        // single uncentered pair can leave a bound visibly unresolved.
        const double comp_max = st.w.cwiseProduct(st.z).maxCoeff();
        const double rel_gap =
            std::max(mu, 0.1 * comp_max) / (1.0 + std::abs(obj));

        const double worst = std::max({rel_stat, rel_eq, rel_in, rel_gap});
        if (worst < best_worst) {
            best_worst = worst;
            best = st;
        }
        if (rel_stat <= opts.tolerance && rel_eq <= opts.tolerance && rel_in <= opts.tolerance &&
            rel_gap <= opts.tolerance) {
            sol.status = SolveStatus::Optimal;
            sol.iterations = iter;
            break;
        }
        if (!std::isfinite(worst) || inf_norm(st.x) > 1e14) {
            sol.status = SolveStatus::NumericalFailure;
            break;
        }

        // Normal-equations style reduction of the Newton system.
        const Eigen::VectorXd d = st.z.cwiseQuotient(st.w); // W^{-1} Z
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + me, n + me);
        kkt.topLeftCorner(n, n) = prob.g.transpose() * d.asDiagonal() * prob.g;
        kkt.topLeftCorner(n, n).diagonal() += q;
        kkt.topLeftCorner(n, n).diagonal().array() += kRegularization;
        if (me) {
            kkt.block(n, 0, me, n) = prob.a;
            kkt.block(0, n, n, me) = prob.a.transpose();
            kkt.bottomRightCorner(me, me).diagonal().array() -= kRegularization;
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt);

        auto newton_step = [&](const Eigen::VectorXd& r_comp, IpmState& delta) {
            // r_comp approximates W Z 1 target; dw = -(r_comp + W dz)/Z.
            Eigen::VectorXd rhs(n + me);
            rhs.head(n) = -r_stat - prob.g.transpose() *
                                        (d.cwiseProduct(r_in) - r_comp.cwiseQuotient(st.w));
            if (me) rhs.segment(n, me) = -r_eq;
            const Eigen::VectorXd step = lu.solve(rhs);
            delta.x = step.head(n);
            delta.y = me ? step.segment(n, me).eval() : Eigen::VectorXd();
            delta.z = d.cwiseProduct(prob.g * delta.x + r_in) - r_comp.cwiseQuotient(st.w);
            delta.w = -(r_comp + st.w.cwiseProduct(delta.z)).cwiseQuotient(st.z);
        };

        // Predictor.
        IpmState aff;
        newton_step(st.w.cwiseProduct(st.z), aff);
        const double alpha_p_aff = max_step(st.w, aff.w);
        const double alpha_d_aff = max_step(st.z, aff.z);
        const double mu_aff = (st.w + alpha_p_aff * aff.w).dot(st.z + alpha_d_aff * aff.z) / mi;
        const double sigma = std::pow(std::clamp(mu_aff / mu, 0.0, 1.0), 3);

        // Corrector.
        IpmState dir;
        const Eigen::VectorXd r_comp = st.w.cwiseProduct(st.z) +
                                       aff.w.cwiseProduct(aff.z) -
                                       Eigen::VectorXd::Constant(mi, sigma * mu);
        newton_step(r_comp, dir);

        const double alpha_p = std::min(1.0, kStepScale * max_step(st.w, dir.w));
        const double alpha_d = std::min(1.0, kStepScale * max_step(st.z, dir.z));

        st.x += alpha_p * dir.x;
        st.w += alpha_p * dir.w;
        if (me) st.y += alpha_d * dir.y;
        st.z += alpha_d * dir.z;
        sol.iterations = iter + 1;
    }

    const IpmState& take = sol.status == SolveStatus::Optimal ? st : best;
    sol.x = take.x;
    sol.y = take.y;
    sol.z = take.z.cwiseMax(0.0);
    sol.kkt = kkt_residuals(prob, sol.x, sol.y, sol.z);
    sol.objective = prob.objective(sol.x);
    return sol;
}

/// Elastic feasibility program: minimize total violation over all rows.
Program elastic_program(const Program& prob) {
    const int n = prob.n_vars();
    const int me = prob.n_eq();
    const int mi = prob.n_in();
    // Variables [x, p+, p-, t] with Ax + p+ - p- = b, Gx - t <= h, t >= 0.
    Program e;
    const int nv = n + 2 * me + mi;
    e.c = Eigen::VectorXd::Zero(nv);
    e.c.segment(n, 2 * me).setOnes();
    e.c.tail(mi).setOnes();
    e.a = Eigen::MatrixXd::Zero(me, nv);
    if (me) {
        e.a.leftCols(n) = prob.a;
        e.a.block(0, n, me, me) = Eigen::MatrixXd::Identity(me, me);
        e.a.block(0, n + me, me, me) = -Eigen::MatrixXd::Identity(me, me);
    }
    e.b = prob.b;
    e.g = Eigen::MatrixXd::Zero(mi + 2 * me + mi, nv);
    e.h = Eigen::VectorXd::Zero(mi + 2 * me + mi);
    if (mi) {
        e.g.topLeftCorner(mi, n) = prob.g;
        e.g.block(0, n + 2 * me, mi, mi) = -Eigen::MatrixXd::Identity(mi, mi);
        e.h.head(mi) = prob.h;
    }
    // Nonnegativity of the elastic variables.
    e.g.block(mi, n, 2 * me + mi, 2 * me + mi) =
        -Eigen::MatrixXd::Identity(2 * me + mi, 2 * me + mi);
    return e;
}

void diagnose_infeasibility(const Program& prob, Solution& sol) {
    const Program e = elastic_program(prob);
    SolverOptions opts;
    opts.polish = false;
    Solution es = run_ipm(e, opts);
    if (es.status != SolveStatus::Optimal) return;
    const int n = prob.n_vars();
    const int me = prob.n_eq();
    const int mi = prob.n_in();
    const double tol = 1e-7;
    if (es.objective <= tol * (1.0 + me + mi)) return; // feasible after all
    sol.status = SolveStatus::Infeasible;
    for (int i = 0; i < me; ++i) {
        const double v = es.x(n + i) + es.x(n + me + i);
        if (v > tol) {
            const std::string name = i < static_cast<int>(prob.eq_names.size())
                                         ? prob.eq_names[i]
                                         : "eq[" + std::to_string(i) + "]";
            sol.infeasible_rows.emplace_back(name, v);
        }
    }
    for (int i = 0; i < mi; ++i) {
        const double v = es.x(n + 2 * me + i);
        if (v > tol) {
            const std::string name = i < static_cast<int>(prob.in_names.size())
                                         ? prob.in_names[i]
                                         : "ineq[" + std::to_string(i) + "]";
            sol.infeasible_rows.emplace_back(name, v);
        }
    }
    std::sort(sol.infeasible_rows.begin(), sol.infeasible_rows.end(),
              [](const auto& a, const auto& b) { return a.second > b.second; });
}

} // namespace

Solution solve(const Program& prob, const SolverOptions& opts) {
    // Normalize the objective scale; the interior point and the polish both
    // run on the scaled problem, and duals scale back linearly.
    double scale = 1.0;
    if (prob.c.size()) scale = std::max(scale, inf_norm(prob.c));
    if (prob.q.size()) scale = std::max(scale, prob.q.cwiseAbs().maxCoeff());

    Program work = prob;
    if (scale > 1.0) {
        work.c /= scale;
        if (work.q.size()) work.q /= scale;
    }
    Solution sol = run_ipm(work, opts);
    if (sol.status == SolveStatus::Optimal && opts.polish) polish(work, sol);
    if (scale > 1.0) {
        sol.y *= scale;
        sol.z *= scale;
        sol.objective = prob.objective(sol.x);
    }
    sol.kkt = kkt_residuals(prob, sol.x, sol.y, sol.z);

    if (sol.status != SolveStatus::Optimal) diagnose_infeasibility(prob, sol);
    return sol;
}

std::optional<double> minimal_row_relaxation(const Program& prob,
                                             const std::vector<bool>& relax_mask) {
    const int n = prob.n_vars();
    const int mi = prob.n_in();
    Program r;
    r.c = Eigen::VectorXd::Zero(n + 1);
    r.c(n) = 1.0;
    r.a = Eigen::MatrixXd::Zero(prob.n_eq(), n + 1);
    if (prob.n_eq()) r.a.leftCols(n) = prob.a;
    r.b = prob.b;
    r.g = Eigen::MatrixXd::Zero(mi + 1, n + 1);
    r.g.topLeftCorner(mi, n) = prob.g;
    for (int i = 0; i < mi; ++i)
        if (relax_mask[i]) r.g(i, n) = -1.0;
    r.g(mi, n) = -1.0; // t >= 0
    r.h = Eigen::VectorXd::Zero(mi + 1);
    r.h.head(mi) = prob.h;

    Solution sol = solve(r, {});
    if (sol.status != SolveStatus::Optimal) return std::nullopt;
    return std::max(0.0, sol.x(n));
}

} // namespace seamsim::qp

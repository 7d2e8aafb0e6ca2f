#include "omcool/lm.hpp"

#include <cmath>
#include <stdexcept>

namespace omcool::lsq {

namespace {

void numeric_jacobian(const ResidualFn& residuals, const std::vector<double>& p,
                      const Eigen::VectorXd& r0, Eigen::MatrixXd& J) {
    const std::size_t n = p.size();
    const auto m = r0.size();
    J.resize(m, static_cast<Eigen::Index>(n));
    Eigen::VectorXd r_plus(m), r_minus(m);
    std::vector<double> probe = p;
    for (std::size_t j = 0; j < n; ++j) {
        const double h = 1e-6 * std::max(std::abs(p[j]), 1e-8);
        probe[j] = p[j] + h;
        residuals(probe, r_plus);
        probe[j] = p[j] - h;
        residuals(probe, r_minus);
        probe[j] = p[j];
        J.col(static_cast<Eigen::Index>(j)) = (r_plus - r_minus) / (2.0 * h);
    }
}

} // namespace

Result minimize(const ResidualFn& residuals, const JacobianFn& jacobian,
                std::size_t residual_count, std::vector<double> init,
                const std::vector<bool>& free_mask, const Options& opts) {
    const std::size_t n = init.size();
    if (free_mask.size() != n)
        throw std::invalid_argument("lsq::minimize: mask size mismatch");

    std::vector<std::size_t> free_idx;
    for (std::size_t i = 0; i < n; ++i)
        if (free_mask[i]) free_idx.push_back(i);
    const auto k = static_cast<Eigen::Index>(free_idx.size());
    const auto m = static_cast<Eigen::Index>(residual_count);
    if (k == 0) throw std::invalid_argument("lsq::minimize: no free parameters");

    Result res;
    res.params = std::move(init);

    Eigen::VectorXd r(m);
    Eigen::MatrixXd J_full;
    auto eval_jacobian = [&](const std::vector<double>& p, const Eigen::VectorXd& r_at) {
        if (jacobian)
            jacobian(p, J_full);
        else
            numeric_jacobian(residuals, p, r_at, J_full);
    };

    residuals(res.params, r);
    double cost = 0.5 * r.squaredNorm();
    eval_jacobian(res.params, r);

    Eigen::MatrixXd J(m, k);
    auto gather = [&] {
        for (Eigen::Index j = 0; j < k; ++j)
            J.col(j) = J_full.col(static_cast<Eigen::Index>(free_idx[static_cast<std::size_t>(j)]));
    };
    gather();

    // Scale-free first-order criterion: the angle between each Jacobian
    // column and the residual, max over free parameters.
    auto gradient_measure = [&](const Eigen::VectorXd& g_vec) {
        const double r_norm = r.norm();
        if (r_norm < 1e-300) return 0.0;
        double worst = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            const double col_norm = J.col(j).norm();
            if (col_norm < 1e-300) continue;
            worst = std::max(worst, std::abs(g_vec(j)) / (col_norm * r_norm));
        }
        return worst;
    };

    double lambda = opts.lambda_init;
    bool converged = false;
    int iter = 0;
    for (; iter < opts.max_iterations; ++iter) {
        const Eigen::VectorXd g = J.transpose() * r;
        if (gradient_measure(g) <= opts.grad_tol) {
            converged = true;
            break;
        }
        const Eigen::MatrixXd jtj = J.transpose() * J;
        const double diag_floor = 1e-12 * std::max(jtj.diagonal().maxCoeff(), 1e-300);

        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd damped = jtj;
            for (Eigen::Index i = 0; i < k; ++i)
                damped(i, i) += lambda * std::max(jtj(i, i), diag_floor);
            const Eigen::VectorXd step = damped.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda *= 10.0;
                if (lambda > 1e14) break;
                continue;
            }

            std::vector<double> trial = res.params;
            double p_norm = 0.0;
            for (Eigen::Index j = 0; j < k; ++j) {
                trial[free_idx[static_cast<std::size_t>(j)]] += step(j);
                p_norm += res.params[free_idx[static_cast<std::size_t>(j)]] *
                          res.params[free_idx[static_cast<std::size_t>(j)]];
            }
            Eigen::VectorXd r_trial(m);
            residuals(trial, r_trial);
            const double cost_trial = 0.5 * r_trial.squaredNorm();

            if (cost_trial < cost) {
                const bool small_step =
                    step.norm() <= opts.step_tol * (std::sqrt(p_norm) + opts.step_tol);
                res.params = std::move(trial);
                r = std::move(r_trial);
                cost = cost_trial;
                lambda = std::max(lambda / 3.0, 1e-14);
                accepted = true;
                if (small_step) converged = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e14) break; // stalled; report the cap as non-convergence
            }
        }
        if (!accepted) break;
        if (converged) break;
        eval_jacobian(res.params, r);
        gather();
    }

    res.cost = cost;
    res.iterations = iter;
    res.converged = converged;

    // Covariance from the local quadratic model, scaled by residual variance.
    eval_jacobian(res.params, r);
    gather();
    const Eigen::MatrixXd jtj = J.transpose() * J;
    const double dof = static_cast<double>(m) - static_cast<double>(k);
    const double s2 = dof > 0.0 ? r.squaredNorm() / dof : 0.0;
    Eigen::MatrixXd cov = jtj.ldlt().solve(Eigen::MatrixXd::Identity(k, k)) * s2;
    res.covariance = cov;
    res.sigmas.assign(n, 0.0);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double var = cov(j, j);
        res.sigmas[free_idx[static_cast<std::size_t>(j)]] = var > 0.0 ? std::sqrt(var) : 0.0;
    }
    return res;
}

} // namespace omcool::lsq

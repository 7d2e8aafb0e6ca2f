// lm.hpp — damped Gauss–Newton minimizer (Levenberg-style adaptive damping)
// for small dense nonlinear least-squares problems.
//
// Contract: monotone cost decrease per accepted step; the damping vanishes
// near the optimum so local convergence is the quadratic Gauss–Newton rate
// for small-residual problems. Parameters can be frozen with a mask.

#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace omcool::lsq {

struct Options {
    double grad_tol = 1e-8;  // on ‖Jᵀr‖∞ relative to the cost scale
    double step_tol = 1e-10; // on ‖δp‖ relative to ‖p‖
    int max_iterations = 200;
    double lambda_init = 1e-3;
};

struct Result {
    std::vector<double> params;
    Eigen::MatrixXd covariance; // s²(JᵀJ)⁻¹ over free parameters
    std::vector<double> sigmas; // per-parameter (0 for frozen parameters)
    double cost = 0.0;          // ½‖r‖² at the solution
    int iterations = 0;
    bool converged = false;
};

// residuals(p, r): fills r (fixed size m). jacobian(p, J): fills m×n J for the
// full parameter vector; pass nullptr to use central finite differences.
using ResidualFn = std::function<void(const std::vector<double>&, Eigen::VectorXd&)>;
using JacobianFn = std::function<void(const std::vector<double>&, Eigen::MatrixXd&)>;

Result minimize(const ResidualFn& residuals, const JacobianFn& jacobian,
                std::size_t residual_count, std::vector<double> init,
                const std::vector<bool>& free_mask, const Options& opts = {});

} // namespace omcool::lsq

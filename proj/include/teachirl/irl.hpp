#pragma once

#include <span>

#include "teachirl/mdp.hpp"

namespace teachirl {

/// eta_n = eta / (1 + n * decay); decay = 0 gives a constant step.
struct StepSchedule {
    double eta = 0.1;
    double decay = 0.0;

    double operator()(std::size_t n) const { return eta / (1.0 + static_cast<double>(n) * decay); }
};

struct MceOptions {
    std::size_t iters = 100;
    StepSchedule step;
    double beta = 1.0;
    /// Weight of the averaged gradient over older trajectories (0 disables).
    double old_weight = 0.0;
    /// How many of the most recent older trajectories the mix-in averages over.
    std::size_t old_window = 0;
    Tolerances tol;
};

/// The teacher's current belief about the learner: weights and their MCE policy.
struct IrlEstimate {
    Vector theta_hat;
    TabularPolicy pi_hat;
    double beta = 1.0;

    static IrlEstimate from_weights(const Mdp& mdp, const FeatureMap& phi, Vector theta, double beta,
                                    const Tolerances& tol = {}) {
        auto solution = soft_value_iteration(mdp, theta, phi, beta, tol);
        return {std::move(theta), std::move(solution.policy), beta};
    }

    /// Zero weights, i.e. the uniform MCE policy.
    static IrlEstimate initial(const Mdp& mdp, const FeatureMap& phi, double beta, const Tolerances& tol = {}) {
        return from_weights(mdp, phi, Vector::Zero(static_cast<Eigen::Index>(phi.dim())), beta, tol);
    }
};

namespace detail {

/// (1/|Xi|) sum_xi (mu(xi) - mu(pi, s0^xi)) given the policy's feature-count matrix.
inline Vector moment_gap(std::span<const Trajectory> trajectories, const Matrix& policy_counts,
                         const FeatureMap& phi, double gamma) {
    Vector grad = Vector::Zero(static_cast<Eigen::Index>(phi.dim()));
    if (trajectories.empty()) return grad;
    for (const auto& xi : trajectories) {
        grad += trajectory_feature_counts(xi, phi, gamma);
        grad -= policy_counts.row(static_cast<Eigen::Index>(xi.start())).transpose();
    }
    return grad / static_cast<double>(trajectories.size());
}

inline void check_finite(const Vector& theta) {
    if (!theta.allFinite()) throw NumericalError("MCE gradient ascent diverged (non-finite weights)");
}

} // namespace detail

/// MCE-IRL log-likelihood gradient for weights `theta`.
inline Vector mce_gradient(std::span<const Trajectory> trajectories, const RewardWeights& theta, const Mdp& mdp,
                           const FeatureMap& phi, double beta, const Tolerances& tol = {}) {
    for (const auto& xi : trajectories)
        if (xi.empty()) throw InvalidArgument("mce_gradient: empty trajectory");
    const auto solution = soft_value_iteration(mdp, theta, phi, beta, tol);
    const Matrix counts = policy_feature_counts(mdp, solution.policy, phi, tol);
    return detail::moment_gap(trajectories, counts, phi, mdp.gamma());
}

/// Plain MCE-IRL: gradient ascent on the whole trajectory set with equal weights.
inline IrlEstimate batch_mce_irl(std::span<const Trajectory> trajectories, const RewardWeights& theta_init,
                                 const Mdp& mdp, const FeatureMap& phi, const MceOptions& options = {}) {
    if (options.iters == 0) throw InvalidArgument("batch_mce_irl: iters must be at least 1");
    if (trajectories.empty()) throw InvalidArgument("batch_mce_irl: no trajectories");
    IrlEstimate estimate = IrlEstimate::from_weights(mdp, phi, theta_init, options.beta, options.tol);
    for (std::size_t n = 1; n <= options.iters; ++n) {
        const Matrix counts = policy_feature_counts(mdp, estimate.pi_hat, phi, options.tol);
        estimate.theta_hat += options.step(n - 1) * detail::moment_gap(trajectories, counts, phi, mdp.gamma());
        detail::check_finite(estimate.theta_hat);
        estimate.pi_hat = soft_value_iteration(mdp, estimate.theta_hat, phi, options.beta, options.tol).policy;
    }
    return estimate;
}

/**
 * Interactive MCE: warm-start at the previous estimate and ascend using only
 * the newest trajectory. When `options.old_weight > 0`, the averaged gradient
 * over the last `old_window` entries of `older` is mixed in with that weight.
 */
inline IrlEstimate interactive_mce(const Trajectory& xi_new, const IrlEstimate& prev, const Mdp& mdp,
                                   const FeatureMap& phi, const MceOptions& options = {},
                                   std::span<const Trajectory> older = {}) {
    if (options.iters == 0) throw InvalidArgument("interactive_mce: iters must be at least 1");
    if (xi_new.empty()) throw InvalidArgument("interactive_mce: empty trajectory");
    const Vector target = trajectory_feature_counts(xi_new, phi, mdp.gamma());
    const std::size_t window = std::min(options.old_window, older.size());
    const auto recent = older.subspan(older.size() - window, window);
    const bool mix_old = options.old_weight > 0.0 && !recent.empty();

    IrlEstimate estimate = prev;
    estimate.beta = options.beta;
    if (prev.beta != options.beta || estimate.pi_hat.n_states() != mdp.n_states())
        estimate = IrlEstimate::from_weights(mdp, phi, prev.theta_hat, options.beta, options.tol);
    const auto s0 = static_cast<Eigen::Index>(xi_new.start());
    for (std::size_t n = 1; n <= options.iters; ++n) {
        const Matrix counts = policy_feature_counts(mdp, estimate.pi_hat, phi, options.tol);
        Vector grad = target - counts.row(s0).transpose();
        if (mix_old) grad += options.old_weight * detail::moment_gap(recent, counts, phi, mdp.gamma());
        estimate.theta_hat += options.step(n - 1) * grad;
        detail::check_finite(estimate.theta_hat);
        estimate.pi_hat = soft_value_iteration(mdp, estimate.theta_hat, phi, options.beta, options.tol).policy;
    }
    return estimate;
}

} // namespace teachirl

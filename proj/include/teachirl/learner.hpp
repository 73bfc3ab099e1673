#pragma once

#include <cmath>

#include "teachirl/mdp.hpp"

namespace teachirl {

struct LearnerConfig {
    double eta = 0.34;
    double radius = 100.0;
    double init_range = 10.0;
    std::size_t steps_per_demo = 1;
};

/// Rescales onto the L2 ball of the given radius when the norm exceeds it.
inline Vector project_to_ball(const Vector& theta, double radius) {
    const double norm = theta.norm();
    if (norm <= radius) return theta;
    return theta * (radius / norm);
}

/**
 * Cross-entropy behavioral-cloning learner with a linear softmax policy.
 *
 * Scores are H(s,a) = theta . phi_ce(s,a) where phi_ce(s,a) = E[phi(S') | s,a]
 * is the expected successor feature vector. Each demonstration triggers one
 * projected gradient-ascent step on the demonstration log-likelihood.
 */
class CrossEntBcLearner {
public:
    CrossEntBcLearner(const Mdp& mdp, const FeatureMap& phi, Vector theta, LearnerConfig config = {})
        : theta_(std::move(theta)), config_(config), n_states_(mdp.n_states()), n_actions_(mdp.n_actions()),
          phi_ce_(mdp.transition() * phi.phi) {
        if (static_cast<std::size_t>(theta_.size()) != phi.dim())
            throw InvalidArgument("learner weights do not match the feature dimension");
        if (!(config_.eta > 0.0) || !(config_.radius > 0.0) || config_.steps_per_demo == 0)
            throw InvalidArgument("invalid learner configuration");
    }

    /// Each weight drawn uniformly from (-init_range, init_range).
    static CrossEntBcLearner init(const Mdp& mdp, const FeatureMap& phi, Rng& rng, LearnerConfig config = {}) {
        Vector theta(static_cast<Eigen::Index>(phi.dim()));
        for (Eigen::Index i = 0; i < theta.size(); ++i)
            theta[i] = rng.uniform_open(-config.init_range, config.init_range);
        return CrossEntBcLearner(mdp, phi, project_to_ball(theta, config.radius), config);
    }

    const Vector& theta() const { return theta_; }
    const LearnerConfig& config() const { return config_; }
    const Matrix& successor_features() const { return phi_ce_; }

    auto phi_ce(StateId s, ActionId a) const {
        return phi_ce_.row(static_cast<Eigen::Index>(s * n_actions_ + a));
    }

    double score(StateId s, ActionId a) const { return phi_ce(s, a).dot(theta_); }

    /// Softmax action distribution at one state.
    Vector action_probs(StateId s) const {
        Vector h(static_cast<Eigen::Index>(n_actions_));
        for (std::size_t a = 0; a < n_actions_; ++a) h[static_cast<Eigen::Index>(a)] = score(s, a);
        h.array() -= h.maxCoeff();
        h = h.array().exp();
        return h / h.sum();
    }

    TabularPolicy policy() const {
        Matrix probs(static_cast<Eigen::Index>(n_states_), static_cast<Eigen::Index>(n_actions_));
        for (std::size_t s = 0; s < n_states_; ++s) probs.row(static_cast<Eigen::Index>(s)) = action_probs(s).transpose();
        return {std::move(probs)};
    }

    /// log prod_t pi(a_t | s_t).
    double log_likelihood(const Trajectory& demo) const {
        double total = 0.0;
        for (const auto& step : demo.steps) total += std::log(action_probs(step.state)[static_cast<Eigen::Index>(step.action)]);
        return total;
    }

    /// sum_t (phi_ce(s_t,a_t) - E_{a ~ pi(.|s_t)} phi_ce(s_t,a)).
    Vector gradient(const Trajectory& demo) const {
        Vector grad = Vector::Zero(theta_.size());
        for (const auto& step : demo.steps) {
            check_step(step);
            const Vector probs = action_probs(step.state);
            grad += phi_ce(step.state, step.action).transpose();
            for (std::size_t a = 0; a < n_actions_; ++a)
                grad -= probs[static_cast<Eigen::Index>(a)] * phi_ce(step.state, a).transpose();
        }
        return grad;
    }

    void update(const Trajectory& demo) {
        for (std::size_t k = 0; k < config_.steps_per_demo; ++k)
            theta_ = project_to_ball(theta_ + config_.eta * gradient(demo), config_.radius);
    }

    /// Executes the learner's policy for `horizon` steps from an initial state.
    Trajectory rollout(const Mdp& mdp, StateId start, std::size_t horizon, Rng& rng) const {
        if (!mdp.is_initial(start)) throw InvalidArgument("learner rollout must start at an initial state");
        Trajectory xi;
        xi.steps.reserve(horizon);
        StateId s = start;
        for (std::size_t t = 0; t < horizon; ++t) {
            const Vector probs = action_probs(s);
            const ActionId a = rng.categorical(n_actions_, [&](std::size_t i) { return probs[static_cast<Eigen::Index>(i)]; });
            xi.steps.push_back({s, a});
            s = mdp.sample_next(s, a, rng);
        }
        return xi;
    }

private:
    void check_step(const Step& step) const {
        if (step.state >= n_states_ || step.action >= n_actions_)
            throw InvalidArgument("demonstration step out of range");
    }

    Vector theta_;
    LearnerConfig config_;
    std::size_t n_states_;
    std::size_t n_actions_;
    Matrix phi_ce_;
};

} // namespace teachirl

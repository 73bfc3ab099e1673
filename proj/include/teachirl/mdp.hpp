#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "teachirl/errors.hpp"
#include "teachirl/random.hpp"

namespace teachirl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using StateId = std::size_t;
using ActionId = std::size_t;

/// Feature weights theta; reward(s) = theta . phi(s).
using RewardWeights = Vector;

/// Convergence controls shared by all iterative solvers.
struct Tolerances {
    double soft_value = 1e-8;  ///< soft value iteration residual
    double evaluation = 1e-10; ///< policy / feature-count evaluation residual
    std::size_t max_sweeps = 10000;
};

/// Relative tolerance used when comparing Q-values for argmax ties.
inline constexpr double kTieTolerance = 1e-10;

/// Per-state feature vectors, one row per state.
struct FeatureMap {
    Matrix phi;

    std::size_t dim() const { return static_cast<std::size_t>(phi.cols()); }
    std::size_t n_states() const { return static_cast<std::size_t>(phi.rows()); }
    auto row(StateId s) const { return phi.row(static_cast<Eigen::Index>(s)); }
};

/// Stochastic stationary policy, pi(a|s) stored row-per-state.
struct TabularPolicy {
    Matrix probs;

    static TabularPolicy uniform(std::size_t n_states, std::size_t n_actions) {
        return {Matrix::Constant(static_cast<Eigen::Index>(n_states),
                                 static_cast<Eigen::Index>(n_actions),
                                 1.0 / static_cast<double>(n_actions))};
    }

    static TabularPolicy deterministic(std::span<const ActionId> actions, std::size_t n_actions) {
        Matrix p = Matrix::Zero(static_cast<Eigen::Index>(actions.size()),
                                static_cast<Eigen::Index>(n_actions));
        for (std::size_t s = 0; s < actions.size(); ++s) {
            if (actions[s] >= n_actions) throw InvalidArgument("deterministic policy: action out of range");
            p(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(actions[s])) = 1.0;
        }
        return {std::move(p)};
    }

    std::size_t n_states() const { return static_cast<std::size_t>(probs.rows()); }
    std::size_t n_actions() const { return static_cast<std::size_t>(probs.cols()); }
    double operator()(StateId s, ActionId a) const {
        return probs(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
    }

    /// Throws InvalidArgument unless every row is a distribution.
    void validate(double tol = 1e-9) const {
        for (Eigen::Index s = 0; s < probs.rows(); ++s) {
            double sum = 0.0;
            for (Eigen::Index a = 0; a < probs.cols(); ++a) {
                const double p = probs(s, a);
                if (!(p >= 0.0 && p <= 1.0 + tol))
                    throw InvalidArgument("policy entry outside [0,1] at state " + std::to_string(s));
                sum += p;
            }
            if (std::abs(sum - 1.0) > tol)
                throw InvalidArgument("policy row does not sum to 1 at state " + std::to_string(s));
        }
    }
};

struct Step {
    StateId state;
    ActionId action;

    friend bool operator==(const Step&, const Step&) = default;
};

/// Fixed-horizon sequence of state-action pairs.
struct Trajectory {
    std::vector<Step> steps;

    std::size_t size() const { return steps.size(); }
    bool empty() const { return steps.empty(); }
    StateId start() const { return steps.front().state; }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/**
 * Tabular MDP with a sparse transition kernel.
 *
 * Transitions are stored as an (S*A) x S row-major sparse matrix whose row
 * s*A + a holds T(.|s,a). Terminal states are absorbing; every evaluator pins
 * their value to R(s)/(1-gamma) and gives them no entropy bonus.
 */
class Mdp {
public:
    struct Transition {
        StateId from;
        ActionId action;
        StateId to;
        double prob;
    };

    Mdp(std::size_t n_states, std::size_t n_actions, std::span<const Transition> transitions,
        Vector p0, double gamma, std::vector<bool> terminal, bool require_reachable = true)
        : n_states_(n_states), n_actions_(n_actions), p0_(std::move(p0)), gamma_(gamma),
          terminal_(std::move(terminal)) {
        if (n_states == 0 || n_actions == 0) throw InvalidArgument("Mdp: empty state or action set");
        if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("Mdp: gamma must lie in (0,1]");
        if (static_cast<std::size_t>(p0_.size()) != n_states || terminal_.size() != n_states)
            throw InvalidArgument("Mdp: p0/terminal size mismatch");

        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(transitions.size());
        for (const auto& t : transitions) {
            if (t.from >= n_states || t.to >= n_states || t.action >= n_actions)
                throw InvalidArgument("Mdp: transition index out of range");
            if (!(t.prob >= 0.0 && t.prob <= 1.0)) throw InvalidArgument("Mdp: transition probability outside [0,1]");
            if (t.prob == 0.0) continue;
            triplets.emplace_back(static_cast<int>(t.from * n_actions + t.action), static_cast<int>(t.to), t.prob);
        }
        transition_.resize(static_cast<Eigen::Index>(n_states * n_actions), static_cast<Eigen::Index>(n_states));
        transition_.setFromTriplets(triplets.begin(), triplets.end());
        transition_.makeCompressed();
        validate();
        if (require_reachable) {
            const auto unreachable = unreachable_states();
            if (!unreachable.empty())
                throw InvalidArgument("Mdp: state " + std::to_string(unreachable.front()) + " is unreachable");
        }
    }

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    double gamma() const { return gamma_; }
    const Vector& p0() const { return p0_; }
    bool is_terminal(StateId s) const { return terminal_[s]; }
    const std::vector<bool>& terminal() const { return terminal_; }
    const SparseRowMatrix& transition() const { return transition_; }

    std::size_t row(StateId s, ActionId a) const { return s * n_actions_ + a; }

    std::vector<StateId> initial_states() const {
        std::vector<StateId> out;
        for (std::size_t s = 0; s < n_states_; ++s)
            if (p0_[static_cast<Eigen::Index>(s)] > 0.0) out.push_back(s);
        return out;
    }

    bool is_initial(StateId s) const { return s < n_states_ && p0_[static_cast<Eigen::Index>(s)] > 0.0; }

    /// Calls fn(next_state, probability) for each successor of (s,a).
    template <class Fn>
    void for_each_successor(StateId s, ActionId a, Fn&& fn) const {
        for (SparseRowMatrix::InnerIterator it(transition_, static_cast<Eigen::Index>(row(s, a))); it; ++it)
            fn(static_cast<StateId>(it.col()), it.value());
    }

    double transition_prob(StateId s, ActionId a, StateId next) const {
        return transition_.coeff(static_cast<Eigen::Index>(row(s, a)), static_cast<Eigen::Index>(next));
    }

    /// E[v(S') | s, a] for every pair, as an S x A matrix.
    Matrix expected_next(const Vector& v) const {
        const Vector flat = transition_ * v;
        return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            flat.data(), static_cast<Eigen::Index>(n_states_), static_cast<Eigen::Index>(n_actions_));
    }

    /// S x S kernel of the Markov chain induced by `pi`, with terminal rows
    /// left empty so evaluators can pin terminal values directly.
    SparseRowMatrix policy_kernel(const TabularPolicy& pi) const {
        check_policy_shape(pi);
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(static_cast<std::size_t>(transition_.nonZeros()));
        for (std::size_t s = 0; s < n_states_; ++s) {
            if (terminal_[s]) continue;
            for (std::size_t a = 0; a < n_actions_; ++a) {
                const double pa = pi(s, a);
                if (pa == 0.0) continue;
                for_each_successor(s, a, [&](StateId next, double p) {
                    triplets.emplace_back(static_cast<int>(s), static_cast<int>(next), pa * p);
                });
            }
        }
        SparseRowMatrix kernel(static_cast<Eigen::Index>(n_states_), static_cast<Eigen::Index>(n_states_));
        kernel.setFromTriplets(triplets.begin(), triplets.end());
        kernel.makeCompressed();
        return kernel;
    }

    StateId sample_next(StateId s, ActionId a, Rng& rng) const {
        const auto r = static_cast<Eigen::Index>(row(s, a));
        const double target = rng.uniform();
        double cumulative = 0.0;
        StateId last = s;
        for (SparseRowMatrix::InnerIterator it(transition_, r); it; ++it) {
            last = static_cast<StateId>(it.col());
            cumulative += it.value();
            if (target < cumulative) return last;
        }
        return last;
    }

    StateId sample_initial(Rng& rng) const {
        return rng.categorical(n_states_, [&](std::size_t s) { return p0_[static_cast<Eigen::Index>(s)]; });
    }

    void check_policy_shape(const TabularPolicy& pi) const {
        if (pi.n_states() != n_states_ || pi.n_actions() != n_actions_)
            throw InvalidArgument("policy shape does not match the MDP");
    }

    /// States not reachable from the support of p0 (breadth-first search).
    std::vector<StateId> unreachable_states() const {
        std::vector<bool> seen(n_states_, false);
        std::queue<StateId> frontier;
        for (StateId s : initial_states()) {
            seen[s] = true;
            frontier.push(s);
        }
        while (!frontier.empty()) {
            const StateId s = frontier.front();
            frontier.pop();
            for (std::size_t a = 0; a < n_actions_; ++a)
                for_each_successor(s, a, [&](StateId next, double) {
                    if (!seen[next]) {
                        seen[next] = true;
                        frontier.push(next);
                    }
                });
        }
        std::vector<StateId> out;
        for (std::size_t s = 0; s < n_states_; ++s)
            if (!seen[s]) out.push_back(s);
        return out;
    }

private:
    void validate() const {
        for (std::size_t s = 0; s < n_states_; ++s) {
            for (std::size_t a = 0; a < n_actions_; ++a) {
                double sum = 0.0;
                for_each_successor(s, a, [&](StateId next, double p) {
                    sum += p;
                    if (terminal_[s] && next != s && p > 0.0)
                        throw InvalidArgument("Mdp: terminal state " + std::to_string(s) + " must self-loop");
                });
                if (std::abs(sum - 1.0) > 1e-12)
                    throw InvalidArgument("Mdp: T(.|s,a) does not sum to 1 at s=" + std::to_string(s) +
                                          ", a=" + std::to_string(a));
            }
        }
        double p0_sum = 0.0;
        for (std::size_t s = 0; s < n_states_; ++s) {
            const double p = p0_[static_cast<Eigen::Index>(s)];
            if (!(p >= 0.0)) throw InvalidArgument("Mdp: negative initial probability");
            if (p > 0.0 && terminal_[s]) throw InvalidArgument("Mdp: initial mass on a terminal state");
            p0_sum += p;
        }
        if (std::abs(p0_sum - 1.0) > 1e-12) throw InvalidArgument("Mdp: p0 does not sum to 1");
    }

    std::size_t n_states_;
    std::size_t n_actions_;
    SparseRowMatrix transition_;
    Vector p0_;
    double gamma_;
    std::vector<bool> terminal_;
};

/// Soft (entropy-regularized) state and action values.
struct SoftValues {
    Vector v_soft;
    Matrix q_soft;
    double beta;
};

struct SoftSolution {
    SoftValues values;
    TabularPolicy policy;
};

struct OptimalSolution {
    TabularPolicy policy;
    std::vector<ActionId> actions;
    Vector values;
};

namespace detail {

inline double terminal_value(double reward, double gamma) {
    if (reward == 0.0) return 0.0;
    return reward / (1.0 - gamma);
}

/// Solves X = rhs + gamma * K X by repeated backups. Terminal rows of K are
/// empty, and terminal rows of the result are replaced with `pinned`.
template <class Dense>
Dense evaluate_linear(const Mdp& mdp, const SparseRowMatrix& kernel, const Dense& rhs, const Dense& pinned,
                      double tol, std::size_t max_sweeps, const char* what) {
    Dense x = Dense::Zero(rhs.rows(), rhs.cols());
    const double gamma = mdp.gamma();
    double residual = std::numeric_limits<double>::infinity();
    for (std::size_t sweep = 1; sweep <= max_sweeps; ++sweep) {
        Dense next = rhs + gamma * (kernel * x);
        for (std::size_t s = 0; s < mdp.n_states(); ++s)
            if (mdp.is_terminal(s)) next.row(static_cast<Eigen::Index>(s)) = pinned.row(static_cast<Eigen::Index>(s));
        residual = (next - x).cwiseAbs().maxCoeff();
        x = std::move(next);
        if (!std::isfinite(residual)) throw NumericalError(std::string(what) + ": non-finite values");
        if (residual <= tol) return x;
    }
    throw ConvergenceError(std::string(what) + " did not converge", max_sweeps, residual);
}

/// (1/beta) log sum_a exp(beta q_a), computed in shifted form.
template <class Row>
double soft_max(const Row& q, double beta) {
    const double m = q.maxCoeff();
    double sum = 0.0;
    for (Eigen::Index a = 0; a < q.size(); ++a) sum += std::exp(beta * (q[a] - m));
    return m + std::log(sum) / beta;
}

} // namespace detail

/// Per-state reward theta . phi(s).
inline Vector reward_vector(const RewardWeights& theta, const FeatureMap& phi) {
    if (static_cast<std::size_t>(theta.size()) != phi.dim())
        throw InvalidArgument("reward_vector: weight dimension " + std::to_string(theta.size()) +
                              " does not match feature dimension " + std::to_string(phi.dim()));
    return phi.phi * theta;
}

inline void check_reward(const Mdp& mdp, const Vector& reward) {
    if (static_cast<std::size_t>(reward.size()) != mdp.n_states())
        throw InvalidArgument("reward vector size does not match the number of states");
}

/// V^pi via iterated Bellman backups.
inline Vector policy_evaluation(const Mdp& mdp, const Vector& reward, const TabularPolicy& pi,
                                const Tolerances& tol = {}) {
    check_reward(mdp, reward);
    pi.validate();
    Vector pinned = Vector::Zero(reward.size());
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
        if (mdp.is_terminal(s)) pinned[static_cast<Eigen::Index>(s)] = detail::terminal_value(reward[static_cast<Eigen::Index>(s)], mdp.gamma());
    return detail::evaluate_linear<Vector>(mdp, mdp.policy_kernel(pi), reward, pinned, tol.evaluation,
                                           tol.max_sweeps, "policy_evaluation");
}

inline double expected_policy_value(const Vector& values, const Vector& p0) {
    if (values.size() != p0.size()) throw InvalidArgument("expected_policy_value: size mismatch");
    return p0.dot(values);
}

/// Q(s,a) = R(s) + gamma E[V(S')].
inline Matrix q_from_v(const Mdp& mdp, const Vector& reward, const Vector& values) {
    check_reward(mdp, reward);
    if (static_cast<std::size_t>(values.size()) != mdp.n_states())
        throw InvalidArgument("q_from_v: value vector size mismatch");
    Matrix q = mdp.gamma() * mdp.expected_next(values);
    q.colwise() += reward;
    return q;
}

/// Lowest index among actions whose value is within tolerance of the maximum.
template <class Row>
ActionId argmax_lowest(const Row& q) {
    const double best = q.maxCoeff();
    const double slack = kTieTolerance * std::max(1.0, std::abs(best));
    for (Eigen::Index a = 0; a < q.size(); ++a)
        if (q[a] >= best - slack) return static_cast<ActionId>(a);
    return 0;
}

/// Policy iteration; returns a deterministic greedy policy with lowest-index ties.
inline OptimalSolution optimal_policy(const Mdp& mdp, const Vector& reward, const Tolerances& tol = {}) {
    check_reward(mdp, reward);
    Tolerances inner = tol;
    // tighten the evaluation so the value error (not just the sweep delta) meets the tolerance
    inner.evaluation = tol.evaluation * std::max(1e-3, 1.0 - mdp.gamma());
    std::vector<ActionId> actions(mdp.n_states(), 0);
    for (std::size_t round = 0; round < tol.max_sweeps; ++round) {
        const auto pi = TabularPolicy::deterministic(actions, mdp.n_actions());
        Vector values = policy_evaluation(mdp, reward, pi, inner);
        const Matrix q = q_from_v(mdp, reward, values);
        bool stable = true;
        for (std::size_t s = 0; s < mdp.n_states(); ++s) {
            const ActionId best = argmax_lowest(q.row(static_cast<Eigen::Index>(s)));
            if (best != actions[s]) {
                actions[s] = best;
                stable = false;
            }
        }
        if (stable) return {pi, actions, std::move(values)};
    }
    throw ConvergenceError("policy iteration did not stabilize", tol.max_sweeps, 0.0);
}

/// Soft values and the MCE policy pi(a|s) = exp(beta Q_soft(s,a) - beta V_soft(s)).
inline SoftSolution soft_value_iteration_from_reward(const Mdp& mdp, const Vector& reward, double beta,
                                                     const Tolerances& tol = {}) {
    check_reward(mdp, reward);
    if (!(beta > 0.0)) throw InvalidArgument("soft_value_iteration: beta must be positive");
    const auto n = static_cast<Eigen::Index>(mdp.n_states());
    Vector pinned = Vector::Zero(n);
    for (Eigen::Index s = 0; s < n; ++s)
        if (mdp.is_terminal(static_cast<StateId>(s))) pinned[s] = detail::terminal_value(reward[s], mdp.gamma());

    Vector v = pinned;
    Matrix q;
    double residual = std::numeric_limits<double>::infinity();
    std::size_t sweep = 0;
    while (true) {
        if (sweep++ >= tol.max_sweeps) throw ConvergenceError("soft_value_iteration did not converge", tol.max_sweeps, residual);
        q = q_from_v(mdp, reward, v);
        Vector next = pinned;
        for (Eigen::Index s = 0; s < n; ++s)
            if (!mdp.is_terminal(static_cast<StateId>(s))) next[s] = detail::soft_max(q.row(s), beta);
        residual = (next - v).cwiseAbs().maxCoeff();
        v = std::move(next);
        if (!std::isfinite(residual)) throw NumericalError("soft_value_iteration: non-finite values");
        if (residual <= tol.soft_value) break;
    }
    q = q_from_v(mdp, reward, v);
    for (Eigen::Index s = 0; s < n; ++s)
        if (!mdp.is_terminal(static_cast<StateId>(s))) v[s] = detail::soft_max(q.row(s), beta);

    Matrix probs(n, static_cast<Eigen::Index>(mdp.n_actions()));
    for (Eigen::Index s = 0; s < n; ++s) {
        // terminal rows: softmax of Q without the pinned value, i.e. uniform for equal Q
        const double vs = mdp.is_terminal(static_cast<StateId>(s)) ? detail::soft_max(q.row(s), beta) : v[s];
        double sum = 0.0;
        for (Eigen::Index a = 0; a < probs.cols(); ++a) {
            probs(s, a) = std::exp(beta * (q(s, a) - vs));
            sum += probs(s, a);
        }
        probs.row(s) /= sum;
    }
    return {SoftValues{std::move(v), std::move(q), beta}, TabularPolicy{std::move(probs)}};
}

inline SoftSolution soft_value_iteration(const Mdp& mdp, const RewardWeights& theta, const FeatureMap& phi,
                                         double beta, const Tolerances& tol = {}) {
    return soft_value_iteration_from_reward(mdp, reward_vector(theta, phi), beta, tol);
}

/// Per-state entropy bonus H(pi(.|s)) / beta, zero on terminal states (0 log 0 = 0).
inline Vector entropy_bonus(const Mdp& mdp, const TabularPolicy& pi, double beta) {
    if (!(beta > 0.0)) throw InvalidArgument("entropy_bonus: beta must be positive");
    mdp.check_policy_shape(pi);
    Vector h = Vector::Zero(static_cast<Eigen::Index>(mdp.n_states()));
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
        if (mdp.is_terminal(s)) continue;
        double entropy = 0.0;
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
            const double p = pi(s, a);
            if (p > 0.0) entropy -= p * std::log(p);
        }
        h[static_cast<Eigen::Index>(s)] = entropy / beta;
    }
    return h;
}

/// Entropy-regularized evaluation of an arbitrary policy:
/// V(s) = R(s) + H(pi(.|s))/beta + gamma E_pi[V(S')].
inline Vector soft_policy_evaluation(const Mdp& mdp, const Vector& reward, const TabularPolicy& pi, double beta,
                                     const Tolerances& tol = {}) {
    check_reward(mdp, reward);
    return policy_evaluation(mdp, reward + entropy_bonus(mdp, pi, beta), pi, tol);
}

/// mu(xi) = sum_t gamma^t phi(s_t).
inline Vector trajectory_feature_counts(const Trajectory& xi, const FeatureMap& phi, double gamma) {
    if (xi.empty()) throw InvalidArgument("trajectory_feature_counts: empty trajectory");
    Vector mu = Vector::Zero(static_cast<Eigen::Index>(phi.dim()));
    double discount = 1.0;
    for (const auto& step : xi.steps) {
        mu += discount * phi.row(step.state).transpose();
        discount *= gamma;
    }
    return mu;
}

/// Expected discounted feature counts mu(pi, s), one row per state.
inline Matrix policy_feature_counts(const Mdp& mdp, const TabularPolicy& pi, const FeatureMap& phi,
                                    const Tolerances& tol = {}) {
    if (phi.n_states() != mdp.n_states()) throw InvalidArgument("policy_feature_counts: feature rows mismatch");
    pi.validate();
    const Matrix pinned = Matrix::Zero(phi.phi.rows(), phi.phi.cols());
    return detail::evaluate_linear<Matrix>(mdp, mdp.policy_kernel(pi), phi.phi, pinned, tol.evaluation,
                                           tol.max_sweeps, "policy_feature_counts");
}

/// V*_theta(s) - V^{pi_eval}_theta(s); non-negative.
inline double evd_hard(const Mdp& mdp, const RewardWeights& theta, const FeatureMap& phi,
                       const TabularPolicy& pi_eval, StateId s, const Tolerances& tol = {}) {
    const Vector reward = reward_vector(theta, phi);
    const auto best = optimal_policy(mdp, reward, tol);
    const Vector evaluated = policy_evaluation(mdp, reward, pi_eval, tol);
    return best.values[static_cast<Eigen::Index>(s)] - evaluated[static_cast<Eigen::Index>(s)];
}

/// Soft optimal value minus the entropy-regularized value of pi_eval.
inline double evd_soft(const Mdp& mdp, const RewardWeights& theta, const FeatureMap& phi,
                       const TabularPolicy& pi_eval, StateId s, double beta, const Tolerances& tol = {}) {
    const Vector reward = reward_vector(theta, phi);
    const auto soft = soft_value_iteration_from_reward(mdp, reward, beta, tol);
    const Vector evaluated = soft_policy_evaluation(mdp, reward, pi_eval, beta, tol);
    return soft.values.v_soft[static_cast<Eigen::Index>(s)] - evaluated[static_cast<Eigen::Index>(s)];
}

/// Samples `horizon` steps of `pi` from `start`.
inline Trajectory rollout(const Mdp& mdp, const TabularPolicy& pi, StateId start, std::size_t horizon, Rng& rng) {
    mdp.check_policy_shape(pi);
    Trajectory xi;
    xi.steps.reserve(horizon);
    StateId s = start;
    for (std::size_t t = 0; t < horizon; ++t) {
        const ActionId a = rng.categorical(mdp.n_actions(), [&](std::size_t i) { return pi(s, i); });
        xi.steps.push_back({s, a});
        s = mdp.sample_next(s, a, rng);
    }
    return xi;
}

} // namespace teachirl

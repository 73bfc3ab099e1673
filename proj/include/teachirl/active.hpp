#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "teachirl/mdp.hpp"
#include "teachirl/parallel.hpp"

namespace teachirl {

enum class DecayKind { none, last_n, exponential };
enum class LikelihoodKind { mce, softmax };
enum class EvdKind { soft, hard };

/// How observations are weighted, which learner model scores them, and which
/// value difference the VaR is taken over.
struct PosteriorMode {
    DecayKind decay = DecayKind::exponential;
    std::size_t last_n = 1;
    double lambda = 0.4;
    LikelihoodKind likelihood = LikelihoodKind::mce;
    double beta = 1.0;       ///< MCE entropy factor (mce likelihood, soft EVD)
    double confidence = 1.0; ///< softmax confidence c (softmax likelihood)
    EvdKind evd = EvdKind::soft;

    /// Exponential decay, MCE likelihood, soft EVD.
    static PosteriorMode interactive(double beta, double lambda) {
        return {DecayKind::exponential, 1, lambda, LikelihoodKind::mce, beta, beta, EvdKind::soft};
    }

    /// No decay, softmax likelihood over optimal Q-values, hard EVD.
    static PosteriorMode unmodified(double confidence) {
        return {DecayKind::none, 1, 1.0, LikelihoodKind::softmax, confidence, confidence, EvdKind::hard};
    }

    bool needs_soft_values() const { return likelihood == LikelihoodKind::mce || evd == EvdKind::soft; }
    bool needs_optimal_values() const { return likelihood == LikelihoodKind::softmax || evd == EvdKind::hard; }

    void validate() const {
        if (decay == DecayKind::exponential && !(lambda > 0.0 && lambda <= 1.0))
            throw InvalidArgument("posterior decay lambda must lie in (0,1]");
        if (decay == DecayKind::last_n && last_n == 0) throw InvalidArgument("last_n window must be at least 1");
        if (!(beta > 0.0) || !(confidence > 0.0)) throw InvalidArgument("beta and confidence must be positive");
    }
};

/// Rows drawn uniformly on the L1 sphere of radius r: i.i.d. Exp(1)
/// magnitudes with independent random signs, rescaled to L1 norm r.
inline Matrix sample_l1_sphere(std::size_t n, double radius, std::size_t d, Rng& rng) {
    if (n == 0 || d == 0 || !(radius > 0.0)) throw InvalidArgument("sample_l1_sphere: invalid arguments");
    Matrix thetas(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < thetas.rows(); ++j) {
        double l1 = 0.0;
        for (Eigen::Index i = 0; i < thetas.cols(); ++i) {
            const double magnitude = rng.exponential();
            thetas(j, i) = rng.bernoulli(0.5) ? magnitude : -magnitude;
            l1 += magnitude;
        }
        thetas.row(j) *= radius / l1;
    }
    return thetas;
}

namespace detail {

/// Log-likelihood of xi under the policy induced by the per-state values of
/// one weight vector: MCE policy from soft values, or the softmax of optimal
/// Q-values. Q is rebuilt with one backup at each visited state.
inline double loglik_from_values(const Trajectory& xi, const RewardWeights& theta, const Eigen::Ref<const Vector>& values,
                                 const PosteriorMode& mode, const Mdp& mdp, const FeatureMap& phi) {
    const double scale = mode.likelihood == LikelihoodKind::mce ? mode.beta : mode.confidence;
    Vector q(static_cast<Eigen::Index>(mdp.n_actions()));
    double total = 0.0;
    for (const auto& step : xi.steps) {
        const double r = phi.row(step.state).dot(theta);
        for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
            double next = 0.0;
            mdp.for_each_successor(step.state, a, [&](StateId sp, double p) { next += p * values[static_cast<Eigen::Index>(sp)]; });
            q[static_cast<Eigen::Index>(a)] = r + mdp.gamma() * next;
        }
        total += scale * (q[static_cast<Eigen::Index>(step.action)] - soft_max(q, scale));
    }
    return total;
}

} // namespace detail

/// log p(xi | theta) under the mode's learner model, solved from scratch.
inline double trajectory_loglik(const Trajectory& xi, const RewardWeights& theta, const PosteriorMode& mode,
                                const Mdp& mdp, const FeatureMap& phi, const Tolerances& tol = {}) {
    const Vector reward = reward_vector(theta, phi);
    const Vector values = mode.likelihood == LikelihoodKind::mce
                              ? soft_value_iteration_from_reward(mdp, reward, mode.beta, tol).values.v_soft
                              : optimal_policy(mdp, reward, tol).values;
    return detail::loglik_from_values(xi, theta, values, mode, mdp, phi);
}

/// Weighted empirical alpha-quantile: the smallest sample value v with
/// sum_{j: values_j <= v} w_j >= alpha.
inline double weighted_var(std::span<const double> values, std::span<const double> weights, double alpha) {
    if (values.empty()) throw InvalidArgument("weighted_var: empty input");
    if (values.size() != weights.size()) throw InvalidArgument("weighted_var: size mismatch");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    double cumulative = 0.0;
    for (std::size_t idx : order) {
        cumulative += weights[idx];
        if (cumulative >= alpha - 1e-12) return values[idx];
    }
    return values[order.back()];
}

/// exp(log_acc - logsumexp(log_acc)), computed with a max shift.
inline Vector posterior_weights(const Vector& log_acc) {
    for (Eigen::Index j = 0; j < log_acc.size(); ++j)
        if (std::isnan(log_acc[j]) || log_acc[j] == std::numeric_limits<double>::infinity())
            throw NumericalError("posterior accumulators contain NaN or +inf");
    const double m = log_acc.maxCoeff();
    if (m == -std::numeric_limits<double>::infinity()) throw NumericalError("posterior: every sample has zero likelihood");
    // scalar exp: the vectorized one maps -inf to a denormal instead of zero
    Vector w = (log_acc.array() - m).unaryExpr([](double x) { return std::exp(x); });
    return w / w.sum();
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/**
 * Sampled reward weights with decayed log-likelihood accumulators.
 *
 * The samples are fixed for the life of the set. `prepare` solves each sample
 * once (soft values and/or optimal values, depending on the mode) and caches
 * the per-state values; likelihoods and EVDs are then cheap lookups.
 */
class WeightSampleSet {
public:
    WeightSampleSet(Matrix thetas, PosteriorMode mode) : thetas_(std::move(thetas)), mode_(mode) {
        mode_.validate();
        if (thetas_.rows() == 0) throw InvalidArgument("WeightSampleSet: no samples");
        log_acc_ = Vector::Zero(thetas_.rows());
        if (mode_.decay == DecayKind::last_n) ring_ = Matrix::Zero(thetas_.rows(), static_cast<Eigen::Index>(mode_.last_n));
    }

    static WeightSampleSet sample(std::size_t n, double radius, std::size_t d, Rng& rng, PosteriorMode mode) {
        return WeightSampleSet(sample_l1_sphere(n, radius, d, rng), mode);
    }

    std::size_t size() const { return static_cast<std::size_t>(thetas_.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(thetas_.cols()); }
    const Matrix& thetas() const { return thetas_; }
    RewardWeights theta(std::size_t j) const { return thetas_.row(static_cast<Eigen::Index>(j)).transpose(); }
    const Vector& log_acc() const { return log_acc_; }
    const PosteriorMode& mode() const { return mode_; }
    std::size_t observed() const { return observed_; }
    bool prepared() const { return prepared_; }
    const RowMatrix& soft_values() const { return soft_values_; }
    const RowMatrix& optimal_values() const { return optimal_values_; }

    void prepare(const Mdp& mdp, const FeatureMap& phi, const Tolerances& tol = {}, std::size_t workers = 1) {
        if (phi.dim() != dim()) throw InvalidArgument("WeightSampleSet: feature dimension mismatch");
        const auto n = thetas_.rows();
        const auto s = static_cast<Eigen::Index>(mdp.n_states());
        if (mode_.needs_soft_values()) soft_values_.resize(n, s);
        if (mode_.needs_optimal_values()) optimal_values_.resize(n, s);
        parallel_for(size(), workers, [&](std::size_t j) {
            const auto row = static_cast<Eigen::Index>(j);
            const Vector reward = reward_vector(theta(j), phi);
            if (mode_.needs_soft_values())
                soft_values_.row(row) = soft_value_iteration_from_reward(mdp, reward, mode_.beta, tol).values.v_soft.transpose();
            if (mode_.needs_optimal_values())
                optimal_values_.row(row) = optimal_policy(mdp, reward, tol).values.transpose();
        });
        prepared_ = true;
    }

    /// Cached log p(xi | theta_j).
    double loglik(std::size_t j, const Trajectory& xi, const Mdp& mdp, const FeatureMap& phi) const {
        require_prepared();
        const auto row = static_cast<Eigen::Index>(j);
        const RowMatrix& values = mode_.likelihood == LikelihoodKind::mce ? soft_values_ : optimal_values_;
        return detail::loglik_from_values(xi, theta(j), values.row(row).transpose(), mode_, mdp, phi);
    }

    /// Folds one new observation into every accumulator.
    void update(const Trajectory& xi, const Mdp& mdp, const FeatureMap& phi) {
        require_prepared();
        const std::size_t slot = mode_.decay == DecayKind::last_n ? observed_ % mode_.last_n : 0;
        for (std::size_t j = 0; j < size(); ++j) {
            const auto row = static_cast<Eigen::Index>(j);
            const double ll = loglik(j, xi, mdp, phi);
            switch (mode_.decay) {
            case DecayKind::none: log_acc_[row] += ll; break;
            case DecayKind::exponential: log_acc_[row] = mode_.lambda * log_acc_[row] + ll; break;
            case DecayKind::last_n:
                ring_(row, static_cast<Eigen::Index>(slot)) = ll;
                log_acc_[row] = ring_.row(row).sum();
                break;
            }
        }
        ++observed_;
    }

    /// Posterior probabilities over the samples.
    Vector weights() const { return posterior_weights(log_acc_); }

private:
    void require_prepared() const {
        if (!prepared_) throw InvalidArgument("WeightSampleSet used before prepare()");
    }

    Matrix thetas_;
    PosteriorMode mode_;
    Vector log_acc_;
    Matrix ring_;
    std::size_t observed_ = 0;
    bool prepared_ = false;
    RowMatrix soft_values_;
    RowMatrix optimal_values_;
};

struct QuerySelection {
    StateId state;
    std::vector<StateId> candidates;
    std::vector<double> value_at_risk; ///< one per candidate
};

/// Per-sample EVD of pi_hat at every initial state, as a (samples x candidates) matrix.
/// The evaluated side uses linearity in theta: V^pi_theta(s) = theta . mu(pi, s),
/// plus the policy's discounted entropy bonus for soft EVD.
inline Matrix evd_matrix(const WeightSampleSet& set, const TabularPolicy& pi_hat, const Mdp& mdp,
                         const FeatureMap& phi, std::span<const StateId> candidates, const Tolerances& tol = {}) {
    if (!set.prepared()) throw InvalidArgument("evd_matrix: sample set not prepared");
    const PosteriorMode& mode = set.mode();
    const Matrix counts = policy_feature_counts(mdp, pi_hat, phi, tol);
    Vector entropy_value;
    if (mode.evd == EvdKind::soft) entropy_value = policy_evaluation(mdp, entropy_bonus(mdp, pi_hat, mode.beta), pi_hat, tol);
    const RowMatrix& best = mode.evd == EvdKind::soft ? set.soft_values() : set.optimal_values();

    Matrix candidate_counts(static_cast<Eigen::Index>(phi.dim()), static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t c = 0; c < candidates.size(); ++c)
        candidate_counts.col(static_cast<Eigen::Index>(c)) = counts.row(static_cast<Eigen::Index>(candidates[c])).transpose();
    Matrix evd = -(set.thetas() * candidate_counts);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto s = static_cast<Eigen::Index>(candidates[c]);
        const auto col = static_cast<Eigen::Index>(c);
        evd.col(col) += best.col(s);
        if (mode.evd == EvdKind::soft) evd.col(col).array() -= entropy_value[s];
    }
    return evd;
}

/// The initial state whose EVD of pi_hat has the largest value-at-risk;
/// ties go to the lowest state index.
inline QuerySelection select_query_state(const WeightSampleSet& set, const TabularPolicy& pi_hat, const Mdp& mdp,
                                         const FeatureMap& phi, double alpha, const Tolerances& tol = {}) {
    QuerySelection out;
    out.candidates = mdp.initial_states();
    const Matrix evd = evd_matrix(set, pi_hat, mdp, phi, out.candidates, tol);
    const Vector w = set.weights();
    std::vector<double> column(set.size());
    double best = -std::numeric_limits<double>::infinity();
    out.state = out.candidates.front();
    for (std::size_t c = 0; c < out.candidates.size(); ++c) {
        for (std::size_t j = 0; j < set.size(); ++j) column[j] = evd(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
        const double var = weighted_var(column, std::span<const double>(w.data(), static_cast<std::size_t>(w.size())), alpha);
        out.value_at_risk.push_back(var);
        if (c == 0 || var > best + kTieTolerance * std::max(1.0, std::abs(best))) {
            best = var;
            out.state = out.candidates[c];
        }
    }
    return out;
}

/**
 * Query-state selection for iteration i = history.size() + 1. The first query
 * is a uniformly random initial state; afterwards every trajectory not yet
 * folded into the posterior is added before the VaR argmax against pi_hat.
 */
inline StateId interactive_var(std::span<const Trajectory> history, const TabularPolicy& prev_pi_hat,
                               WeightSampleSet& set, const Mdp& mdp, const FeatureMap& phi, double alpha, Rng& rng,
                               const Tolerances& tol = {}) {
    if (history.empty()) {
        const auto initial = mdp.initial_states();
        return initial[rng.uniform_index(initial.size())];
    }
    if (set.observed() > history.size()) throw InvalidArgument("interactive_var: history shorter than the posterior");
    for (std::size_t k = set.observed(); k < history.size(); ++k) set.update(history[k], mdp, phi);
    return select_query_state(set, prev_pi_hat, mdp, phi, alpha, tol).state;
}

} // namespace teachirl

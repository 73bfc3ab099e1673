#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "teachirl/active.hpp"
#include "teachirl/car_env.hpp"
#include "teachirl/irl.hpp"
#include "teachirl/learner.hpp"
#include "teachirl/mdp.hpp"

namespace teachirl {

inline constexpr double kInfiniteScore = std::numeric_limits<double>::infinity();

/// log Psi(xi) = -sum_t log pi(a_t|s_t); +inf when some step has zero probability.
inline double difficulty_score(const Trajectory& xi, const TabularPolicy& pi) {
    double score = 0.0;
    for (const auto& step : xi.steps) {
        const double p = pi(step.state, step.action);
        if (!(p > 0.0)) return kInfiniteScore;
        score -= std::log(p);
    }
    return score;
}

/// Constant pool of candidate demonstrations with cached teacher difficulty.
struct DemoPool {
    std::vector<Trajectory> candidates;
    std::vector<std::size_t> origin;   ///< index of the originating initial state
    std::vector<double> teacher_score; ///< log Psi^T per candidate

    std::size_t size() const { return candidates.size(); }
    bool empty() const { return candidates.empty(); }

    static DemoPool from_candidates(std::vector<Trajectory> candidates, std::vector<std::size_t> origin,
                                    const TabularPolicy& pi_teacher) {
        DemoPool pool{std::move(candidates), std::move(origin), {}};
        pool.teacher_score.reserve(pool.candidates.size());
        for (const auto& xi : pool.candidates) pool.teacher_score.push_back(difficulty_score(xi, pi_teacher));
        return pool;
    }
};

/// Rolls out `per_start` teacher trajectories from every initial state.
inline DemoPool build_pool(const Mdp& mdp, const TabularPolicy& pi_teacher, std::size_t horizon,
                           std::size_t per_start, Rng& rng) {
    if (per_start == 0) throw InvalidArgument("build_pool: per_road must be at least 1");
    std::vector<Trajectory> candidates;
    std::vector<std::size_t> origin;
    const auto starts = mdp.initial_states();
    for (std::size_t k = 0; k < starts.size(); ++k)
        for (std::size_t n = 0; n < per_start; ++n) {
            candidates.push_back(rollout(mdp, pi_teacher, starts[k], horizon, rng));
            origin.push_back(k);
        }
    return DemoPool::from_candidates(std::move(candidates), std::move(origin), pi_teacher);
}

inline DemoPool build_pool(const car::CarEnv& env, const TabularPolicy& pi_teacher, std::size_t per_road, Rng& rng) {
    return build_pool(env.mdp, pi_teacher, env.horizon(), per_road, rng);
}

/**
 * Difficulty-score-ratio selection: argmax over the pool of
 * log Psi^L(xi) - log Psi^T(xi). Candidates the teacher cannot produce are
 * skipped; a candidate the learner model deems impossible wins outright.
 * Ties go to the lowest pool index.
 */
inline std::size_t dsr_select(const DemoPool& pool, const TabularPolicy& pi_hat_learner) {
    std::optional<std::size_t> best;
    double best_ratio = -kInfiniteScore;
    for (std::size_t k = 0; k < pool.size(); ++k) {
        if (std::isinf(pool.teacher_score[k])) continue;
        const double learner_score = difficulty_score(pool.candidates[k], pi_hat_learner);
        if (std::isinf(learner_score)) return k;
        const double ratio = learner_score - pool.teacher_score[k];
        if (!best || ratio > best_ratio + kTieTolerance * std::max(1.0, std::abs(best_ratio))) {
            best = k;
            best_ratio = ratio;
        }
    }
    if (!best) throw InvalidArgument("dsr_select: no teacher-feasible candidate in the pool");
    return *best;
}

/// Same selection with teacher scores recomputed from `pi_teacher`.
inline std::size_t dsr_select(const DemoPool& pool, const TabularPolicy& pi_hat_learner, const TabularPolicy& pi_teacher) {
    DemoPool rescored = DemoPool::from_candidates(pool.candidates, pool.origin, pi_teacher);
    return dsr_select(rescored, pi_hat_learner);
}

/// Uniformly random initial state, then a rollout of the (greedy) optimal policy.
inline Trajectory teacher_demo_agnostic(const Mdp& mdp, const TabularPolicy& pi_opt, std::size_t horizon, Rng& rng) {
    const auto starts = mdp.initial_states();
    return rollout(mdp, pi_opt, starts[rng.uniform_index(starts.size())], horizon, rng);
}

// ---------------------------------------------------------------------------
// Teacher variants

enum class Variant { agn, rnd, noe, var, cur };
inline constexpr std::array<Variant, 5> kAllVariants{Variant::agn, Variant::rnd, Variant::noe, Variant::var, Variant::cur};

enum class QueryModule { none, random, active_var, interactive_var };
enum class IrlModule { none, interactive_mce, batch_mce, exact };
enum class DemoModule { agnostic, dsr };

struct VariantModules {
    QueryModule query;
    IrlModule irl;
    DemoModule demo;
};

inline VariantModules modules_of(Variant v) {
    switch (v) {
    case Variant::agn: return {QueryModule::none, IrlModule::none, DemoModule::agnostic};
    case Variant::rnd: return {QueryModule::random, IrlModule::interactive_mce, DemoModule::dsr};
    case Variant::noe: return {QueryModule::active_var, IrlModule::batch_mce, DemoModule::dsr};
    case Variant::var: return {QueryModule::interactive_var, IrlModule::interactive_mce, DemoModule::dsr};
    case Variant::cur: return {QueryModule::none, IrlModule::exact, DemoModule::dsr};
    }
    throw InvalidArgument("unknown teacher variant");
}

inline std::string_view variant_name(Variant v) {
    switch (v) {
    case Variant::agn: return "Agn";
    case Variant::rnd: return "Rnd";
    case Variant::noe: return "NoE";
    case Variant::var: return "Var";
    case Variant::cur: return "Cur";
    }
    return "?";
}

inline std::optional<Variant> variant_from_name(std::string_view name) {
    for (Variant v : kAllVariants)
        if (variant_name(v) == name) return v;
    return std::nullopt;
}

struct TeachingConfig {
    double beta = 1.0;
    double alpha = 0.95;
    double lambda = 0.4;
    double softmax_confidence = 1.0;
    std::size_t n_weight_samples = 5000;
    double sphere_radius = 24.0;
    MceOptions mce;
    std::size_t pool_per_road = 10;
    std::size_t max_iters = 120;
    std::vector<double> eps{2.0, 1.0, 0.5};
    bool stop_on_goal = true;
    Tolerances tol;
};

/// Everything a session needs that is shared by all variants of one seed.
struct TeachingContext {
    const Mdp* mdp = nullptr;
    const FeatureMap* phi = nullptr;
    std::size_t horizon = 0;
    RewardWeights true_theta;
    Vector true_reward;
    OptimalSolution optimal;
    double optimal_value = 0.0;   ///< Vpol of the optimal policy under the true reward
    TabularPolicy teacher_policy; ///< MCE policy under the true reward
    DemoPool pool;
    Matrix weight_samples;        ///< L1-sphere samples shared by the VaR teachers

    /// Vpol^pi under the true reward.
    double policy_value(const TabularPolicy& pi) const {
        return expected_policy_value(policy_evaluation(*mdp, true_reward, pi), mdp->p0());
    }
};

inline TeachingContext make_context(const Mdp& mdp, const FeatureMap& phi, std::size_t horizon,
                                    const RewardWeights& true_theta, const TeachingConfig& config, Rng& pool_rng,
                                    Rng& sample_rng) {
    TeachingContext ctx;
    ctx.mdp = &mdp;
    ctx.phi = &phi;
    ctx.horizon = horizon;
    ctx.true_theta = true_theta;
    ctx.true_reward = reward_vector(true_theta, phi);
    ctx.optimal = optimal_policy(mdp, ctx.true_reward, config.tol);
    ctx.optimal_value = expected_policy_value(ctx.optimal.values, mdp.p0());
    ctx.teacher_policy = soft_value_iteration_from_reward(mdp, ctx.true_reward, config.beta, config.tol).policy;
    ctx.pool = build_pool(mdp, ctx.teacher_policy, horizon, config.pool_per_road, pool_rng);
    ctx.weight_samples = sample_l1_sphere(config.n_weight_samples, config.sphere_radius, phi.dim(), sample_rng);
    return ctx;
}

inline TeachingContext make_context(const car::CarEnv& env, const TeachingConfig& config, Rng& pool_rng, Rng& sample_rng) {
    return make_context(env.mdp, env.phi, env.horizon(), car::true_weights(), config, pool_rng, sample_rng);
}

struct IterationRecord {
    std::size_t iteration = 0;
    std::optional<StateId> query_state;
    Trajectory learner_trajectory;
    std::optional<Vector> theta_hat;
    std::optional<std::size_t> demo_pool_index;
    Trajectory demo;
    Vector learner_theta; ///< after the update
    double learner_loss = 0.0;
    double teacher_estimate_loss = 0.0;
};

struct SessionRecord {
    Variant variant = Variant::agn;
    std::size_t seed_index = 0;
    std::uint64_t session_seed = 0;
    Vector initial_learner_theta;
    double initial_learner_loss = 0.0;
    std::vector<double> eps;
    std::vector<std::optional<std::size_t>> first_crossing; ///< per eps, 1-based iteration
    std::vector<IterationRecord> iterations;
    bool failed = false;
    std::string error;
};

/**
 * Loss of the teacher's inferred policy with respect to the learner policy it
 * is meant to track: |Vpol^{pi_learner} - Vpol^{pi_hat}| under the true reward.
 * The absolute value keeps an estimate that overshoots the learner from
 * scoring better than one that tracks it.
 */
inline double teacher_estimate_loss(const TeachingContext& ctx, const TabularPolicy& pi_learner,
                                    const TabularPolicy& pi_hat) {
    return std::abs(ctx.policy_value(pi_learner) - ctx.policy_value(pi_hat));
}

/**
 * Runs one teaching session. Each iteration: pick a query state, receive the
 * learner's trajectory, update the teacher's estimate, pick a demonstration,
 * and let the learner learn from it. The learner loss is measured by an
 * evaluator outside the teacher after every update.
 */
inline SessionRecord run_session(const TeachingContext& ctx, CrossEntBcLearner learner, Variant variant,
                                 const TeachingConfig& config, std::uint64_t session_seed, std::size_t seed_index = 0) {
    const Mdp& mdp = *ctx.mdp;
    const FeatureMap& phi = *ctx.phi;
    const VariantModules modules = modules_of(variant);
    Rng rng(session_seed);

    SessionRecord record;
    record.variant = variant;
    record.seed_index = seed_index;
    record.session_seed = session_seed;
    record.eps = config.eps;
    record.first_crossing.assign(config.eps.size(), std::nullopt);
    record.initial_learner_theta = learner.theta();
    record.initial_learner_loss = ctx.optimal_value - ctx.policy_value(learner.policy());

    MceOptions mce = config.mce;
    mce.beta = config.beta;
    mce.tol = config.tol;
    IrlEstimate estimate = IrlEstimate::initial(mdp, phi, config.beta, config.tol);

    std::optional<WeightSampleSet> samples;
    if (modules.query == QueryModule::interactive_var)
        samples.emplace(ctx.weight_samples, PosteriorMode::interactive(config.beta, config.lambda));
    else if (modules.query == QueryModule::active_var)
        samples.emplace(ctx.weight_samples, PosteriorMode::unmodified(config.softmax_confidence));
    if (samples) samples->prepare(mdp, phi, config.tol);

    const auto starts = mdp.initial_states();
    std::vector<Trajectory> history;

    for (std::size_t i = 1; i <= config.max_iters; ++i) {
        IterationRecord it;
        it.iteration = i;

        switch (modules.query) {
        case QueryModule::none: break;
        case QueryModule::random: it.query_state = starts[rng.uniform_index(starts.size())]; break;
        case QueryModule::active_var:
        case QueryModule::interactive_var:
            it.query_state = interactive_var(history, estimate.pi_hat, *samples, mdp, phi, config.alpha, rng, config.tol);
            break;
        }

        const TabularPolicy learner_policy = learner.policy();
        if (it.query_state) {
            it.learner_trajectory = learner.rollout(mdp, *it.query_state, ctx.horizon, rng);
            history.push_back(it.learner_trajectory);
        }

        switch (modules.irl) {
        case IrlModule::none: break;
        case IrlModule::interactive_mce:
            estimate = interactive_mce(history.back(), estimate, mdp, phi, mce,
                                       std::span<const Trajectory>(history).first(history.size() - 1));
            break;
        case IrlModule::batch_mce: estimate = batch_mce_irl(history, estimate.theta_hat, mdp, phi, mce); break;
        case IrlModule::exact: estimate.pi_hat = learner_policy; break;
        }
        const bool estimates = modules.irl == IrlModule::interactive_mce || modules.irl == IrlModule::batch_mce;
        if (estimates) it.theta_hat = estimate.theta_hat;
        // Agn's estimate stays at the uniform prior; its loss is still reported for the curves
        it.teacher_estimate_loss = modules.irl == IrlModule::exact
                                       ? 0.0
                                       : teacher_estimate_loss(ctx, learner_policy, estimate.pi_hat);

        if (modules.demo == DemoModule::dsr) {
            it.demo_pool_index = dsr_select(ctx.pool, estimate.pi_hat);
            it.demo = ctx.pool.candidates[*it.demo_pool_index];
        } else {
            it.demo = teacher_demo_agnostic(mdp, ctx.optimal.policy, ctx.horizon, rng);
        }

        learner.update(it.demo);
        it.learner_theta = learner.theta();
        it.learner_loss = ctx.optimal_value - ctx.policy_value(learner.policy());
        if (!std::isfinite(it.learner_loss) || !std::isfinite(it.teacher_estimate_loss))
            throw NumericalError("non-finite loss in teaching session");

        bool all_crossed = true;
        for (std::size_t k = 0; k < config.eps.size(); ++k) {
            if (!record.first_crossing[k] && it.learner_loss < config.eps[k]) record.first_crossing[k] = i;
            all_crossed = all_crossed && record.first_crossing[k].has_value();
        }
        record.iterations.push_back(std::move(it));
        if (config.stop_on_goal && all_crossed) break;
    }
    return record;
}

} // namespace teachirl

#pragma once

// Small MDP builders and independent oracles shared by the unit tests.

#include <cmath>
#include <limits>
#include <vector>

#include "teachirl/teachirl.hpp"

namespace testing_support {

using namespace teachirl;

/// Mean and standard error of a sample.
struct Estimate {
    double mean = 0.0;
    double se = 0.0;
};

inline Estimate estimate(const std::vector<double>& xs) {
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double var = ss / static_cast<double>(xs.size() - 1);
    return {mean, std::sqrt(var / static_cast<double>(xs.size()))};
}

/// One-hot feature map: state s gets e_{s mod d}, the last state (terminal) zero.
inline FeatureMap one_hot_features(std::size_t n_states, std::size_t d, bool last_is_terminal) {
    Matrix phi = Matrix::Zero(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(d));
    const std::size_t n = last_is_terminal ? n_states - 1 : n_states;
    for (std::size_t s = 0; s < n; ++s) phi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s % d)) = 1.0;
    return {phi};
}

inline Matrix random_features(std::size_t n_states, std::size_t d, Rng& rng, bool last_is_terminal) {
    Matrix phi(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(d));
    for (Eigen::Index s = 0; s < phi.rows(); ++s)
        for (Eigen::Index k = 0; k < phi.cols(); ++k) phi(s, k) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    if (last_is_terminal) phi.row(phi.rows() - 1).setZero();
    return phi;
}

/// Dense random MDP, no terminal, p0 uniform; every state reachable.
inline Mdp random_mdp(std::size_t n_states, std::size_t n_actions, Rng& rng, double gamma = 0.9) {
    std::vector<Mdp::Transition> ts;
    for (std::size_t s = 0; s < n_states; ++s)
        for (std::size_t a = 0; a < n_actions; ++a) {
            std::vector<double> w(n_states);
            double total = 0.0;
            for (auto& x : w) {
                x = rng.bernoulli(0.5) ? rng.uniform() : 0.0;
                total += x;
            }
            if (total == 0.0) {
                w[rng.uniform_index(n_states)] = 1.0;
                total = 1.0;
            }
            // renormalize so rows sum to one exactly up to rounding
            double acc = 0.0;
            std::size_t last = 0;
            for (std::size_t k = 0; k < n_states; ++k)
                if (w[k] > 0.0) last = k;
            for (std::size_t k = 0; k < n_states; ++k) {
                if (w[k] == 0.0) continue;
                const double p = k == last ? 1.0 - acc : w[k] / total;
                acc += p;
                ts.push_back({s, a, k, p});
            }
        }
    Vector p0 = Vector::Constant(static_cast<Eigen::Index>(n_states), 1.0 / static_cast<double>(n_states));
    return Mdp(n_states, n_actions, ts, p0, gamma, std::vector<bool>(n_states, false));
}

/// Layered MDP: `layers` layers of `width` states; each action moves
/// deterministically (or, if stochastic, over two random states) to the next
/// layer; the last layer goes to a single terminal state. p0 uniform on layer 0.
inline Mdp layered_mdp(std::size_t layers, std::size_t width, std::size_t n_actions, Rng& rng, double gamma,
                       bool stochastic = false) {
    const std::size_t n_states = layers * width + 1;
    const StateId terminal = n_states - 1;
    std::vector<Mdp::Transition> ts;
    for (std::size_t l = 0; l < layers; ++l)
        for (std::size_t w = 0; w < width; ++w) {
            const StateId s = l * width + w;
            for (std::size_t a = 0; a < n_actions; ++a) {
                if (l + 1 == layers) {
                    ts.push_back({s, a, terminal, 1.0});
                    continue;
                }
                // keep every next-layer state reachable: action 0 from state w goes to w
                const StateId first = (l + 1) * width + (a == 0 ? w : rng.uniform_index(width));
                if (stochastic && a != 0) {
                    StateId second = (l + 1) * width + rng.uniform_index(width);
                    if (second == first) {
                        ts.push_back({s, a, first, 1.0});
                    } else {
                        const double p = 0.2 + 0.6 * rng.uniform();
                        ts.push_back({s, a, first, p});
                        ts.push_back({s, a, second, 1.0 - p});
                    }
                } else {
                    ts.push_back({s, a, first, 1.0});
                }
            }
        }
    for (std::size_t a = 0; a < n_actions; ++a) ts.push_back({terminal, a, terminal, 1.0});
    Vector p0 = Vector::Zero(static_cast<Eigen::Index>(n_states));
    for (std::size_t w = 0; w < width; ++w) p0[static_cast<Eigen::Index>(w)] = 1.0 / static_cast<double>(width);
    std::vector<bool> terminal_flags(n_states, false);
    terminal_flags[terminal] = true;
    return Mdp(n_states, n_actions, ts, p0, gamma, terminal_flags);
}

/// s0 -> s1 -> s2 -> terminal (index 3) under every action.
inline Mdp chain3(double gamma = 0.99) {
    std::vector<Mdp::Transition> ts;
    for (std::size_t a = 0; a < 2; ++a) {
        ts.push_back({0, a, 1, 1.0});
        ts.push_back({1, a, a == 0 ? 2u : 1u, 1.0});
        ts.push_back({2, a, 3, 1.0});
        ts.push_back({3, a, 3, 1.0});
    }
    Vector p0 = Vector::Zero(4);
    p0[0] = 1.0;
    return Mdp(4, 2, ts, p0, gamma, {false, false, false, true});
}

/// Random stochastic policy with strictly positive entries.
inline TabularPolicy random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng) {
    Matrix p(static_cast<Eigen::Index>(n_states), static_cast<Eigen::Index>(n_actions));
    for (Eigen::Index s = 0; s < p.rows(); ++s) {
        for (Eigen::Index a = 0; a < p.cols(); ++a) p(s, a) = 0.05 + rng.uniform();
        p.row(s) /= p.row(s).sum();
    }
    return {p};
}

inline Vector random_vector(std::size_t d, Rng& rng, double scale = 1.0) {
    Vector v(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * (2.0 * rng.uniform() - 1.0);
    return v;
}

/// Naive dense evaluation of a policy: plain fixed-point sweeps, no pinning
/// other than the terminal rows' natural self-loop.
inline Vector naive_evaluation(const Mdp& mdp, const Vector& reward, const TabularPolicy& pi, std::size_t sweeps) {
    const std::size_t n = mdp.n_states();
    Vector v = Vector::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t it = 0; it < sweeps; ++it) {
        Vector next(static_cast<Eigen::Index>(n));
        for (std::size_t s = 0; s < n; ++s) {
            double acc = reward[static_cast<Eigen::Index>(s)];
            for (std::size_t a = 0; a < mdp.n_actions(); ++a)
                for (std::size_t s2 = 0; s2 < n; ++s2)
                    acc += mdp.gamma() * pi(s, a) * mdp.transition_prob(s, a, s2) * v[static_cast<Eigen::Index>(s2)];
            next[static_cast<Eigen::Index>(s)] = acc;
        }
        v = next;
    }
    return v;
}

/// Naive soft value iteration without shifts or pinning; terminal states carry
/// zero reward so their natural fixed point under the plain backup would pick up
/// ln(A)/(beta(1-gamma)); they are held at zero to match the library's convention.
inline Vector naive_soft_values(const Mdp& mdp, const Vector& reward, double beta, std::size_t sweeps) {
    const std::size_t n = mdp.n_states();
    Vector v = Vector::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t it = 0; it < sweeps; ++it) {
        Vector next = Vector::Zero(static_cast<Eigen::Index>(n));
        for (std::size_t s = 0; s < n; ++s) {
            if (mdp.is_terminal(s)) continue;
            double z = 0.0;
            for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
                double q = reward[static_cast<Eigen::Index>(s)];
                for (std::size_t s2 = 0; s2 < n; ++s2)
                    q += mdp.gamma() * mdp.transition_prob(s, a, s2) * v[static_cast<Eigen::Index>(s2)];
                z += std::exp(beta * q);
            }
            next[static_cast<Eigen::Index>(s)] = std::log(z) / beta;
        }
        v = next;
    }
    return v;
}

/// Every deterministic policy's values; returns the element-wise maximum.
inline Vector brute_force_optimal_values(const Mdp& mdp, const Vector& reward) {
    const std::size_t n = mdp.n_states();
    const std::size_t nA = mdp.n_actions();
    std::size_t total = 1;
    for (std::size_t s = 0; s < n; ++s) total *= nA;
    Vector best = Vector::Constant(static_cast<Eigen::Index>(n), -std::numeric_limits<double>::infinity());
    std::vector<ActionId> actions(n, 0);
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (std::size_t s = 0; s < n; ++s) {
            actions[s] = c % nA;
            c /= nA;
        }
        // direct linear solve, independent of the iterative evaluator
        Matrix a = Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t s2 = 0; s2 < n; ++s2)
                a(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s2)) -=
                    mdp.gamma() * mdp.transition_prob(s, actions[s], s2);
        const Vector v = a.fullPivLu().solve(reward);
        best = best.cwiseMax(v);
    }
    return best;
}

/// Policy value by solving (I - gamma P_pi) V = R directly.
inline Vector direct_evaluation(const Mdp& mdp, const Vector& reward, const TabularPolicy& pi) {
    const auto n = static_cast<Eigen::Index>(mdp.n_states());
    Matrix a = Matrix::Identity(n, n);
    for (std::size_t s = 0; s < mdp.n_states(); ++s)
        for (std::size_t act = 0; act < mdp.n_actions(); ++act)
            for (std::size_t s2 = 0; s2 < mdp.n_states(); ++s2)
                a(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s2)) -=
                    mdp.gamma() * pi(s, act) * mdp.transition_prob(s, act, s2);
    return a.fullPivLu().solve(reward);
}

/// Monte-Carlo discounted return of `pi` from `start` over `horizon` steps.
inline double rollout_return(const Mdp& mdp, const Vector& reward, const TabularPolicy& pi, StateId start,
                             std::size_t horizon, Rng& rng) {
    const Trajectory xi = rollout(mdp, pi, start, horizon, rng);
    double g = 0.0, discount = 1.0;
    for (const auto& step : xi.steps) {
        g += discount * reward[static_cast<Eigen::Index>(step.state)];
        discount *= mdp.gamma();
    }
    return g;
}

} // namespace testing_support

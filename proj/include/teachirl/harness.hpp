#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "teachirl/car_env.hpp"
#include "teachirl/car_env_json.hpp"
#include "teachirl/parallel.hpp"
#include "teachirl/teaching.hpp"

namespace teachirl {

// ---------------------------------------------------------------------------
// Configuration

/// Flat experiment configuration. Every key is optional in the JSON file.
struct ExperimentConfig {
    std::uint64_t master_seed = 1;
    std::size_t n_seeds = 16;
    std::vector<Variant> variants{kAllVariants.begin(), kAllVariants.end()};
    std::size_t roads_per_type = 5;
    car::Densities densities = car::Densities::defaults();
    double gamma = car::kGamma;
    // the teacher pool policy must sit well inside the smallest threshold; at 1 its own loss is 1.35
    double beta = 10.0;
    double lambda = 0.4;
    double alpha = 0.95;
    std::optional<double> softmax_confidence; ///< defaults to beta
    std::size_t n_weight_samples = 5000;
    double sphere_radius = 24.0;
    std::size_t mce_iters = 100;
    double mce_step = 0.1;
    double mce_step_decay = 0.0;
    double mce_old_weight = 0.0;
    std::size_t mce_old_window = 0;
    double learner_eta = 0.34;
    double learner_radius = 100.0;
    double learner_init_range = 10.0;
    std::size_t learner_steps_per_demo = 1;
    std::size_t pool_per_road = 10;
    std::size_t max_iters = 120;
    std::vector<double> eps{2.0, 1.0, 0.5};
    bool stop_on_goal = true;
    std::size_t workers = 0; ///< 0 = hardware concurrency; never affects results

    /// Where each value came from: "reference" (fixed by the reference setup), "decision", "quick" or "override".
    std::map<std::string, std::string> provenance = default_provenance();

    static std::map<std::string, std::string> default_provenance() {
        return {{"master_seed", "decision"},     {"n_seeds", "reference"},
                {"variants", "reference"},           {"roads_per_type", "reference"},
                {"densities", "decision"},       {"gamma", "reference"},
                {"beta", "decision"},            {"lambda", "reference"},
                {"alpha", "reference"},              {"softmax_confidence", "decision"},
                {"n_weight_samples", "reference"},   {"sphere_radius", "reference"},
                {"mce_iters", "reference"},          {"mce_step", "decision"},
                {"mce_step_decay", "decision"},  {"mce_old_weight", "decision"},
                {"mce_old_window", "decision"},  {"learner_eta", "reference"},
                {"learner_radius", "reference"},     {"learner_init_range", "reference"},
                {"learner_steps_per_demo", "decision"}, {"pool_per_road", "reference"},
                {"max_iters", "decision"},       {"eps", "reference"},
                {"stop_on_goal", "decision"},    {"workers", "decision"}};
    }

    /// CI-scale profile: 8 roads, 500 weight samples, 4 seeds, 60 iterations.
    void apply_quick_profile() {
        roads_per_type = 1;
        n_weight_samples = 500;
        n_seeds = 4;
        max_iters = 60;
        for (const char* key : {"roads_per_type", "n_weight_samples", "n_seeds", "max_iters"}) provenance[key] = "quick";
    }

    double resolved_confidence() const { return softmax_confidence.value_or(beta); }

    void validate() const {
        auto positive = [](double x, const char* name) {
            if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(std::string(name) + " must be positive");
        };
        auto at_least_one = [](std::size_t x, const char* name) {
            if (x == 0) throw ConfigError(std::string(name) + " must be at least 1");
        };
        at_least_one(n_seeds, "n_seeds");
        at_least_one(roads_per_type, "roads_per_type");
        at_least_one(n_weight_samples, "n_weight_samples");
        at_least_one(mce_iters, "mce_iters");
        at_least_one(learner_steps_per_demo, "learner_steps_per_demo");
        at_least_one(pool_per_road, "pool_per_road");
        at_least_one(max_iters, "max_iters");
        if (variants.empty()) throw ConfigError("variants must not be empty");
        if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0,1)");
        positive(beta, "beta");
        if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in (0,1]");
        if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in (0,1]");
        positive(resolved_confidence(), "softmax_confidence");
        positive(sphere_radius, "sphere_radius");
        positive(mce_step, "mce_step");
        if (mce_step_decay < 0.0) throw ConfigError("mce_step_decay must be non-negative");
        if (mce_old_weight < 0.0) throw ConfigError("mce_old_weight must be non-negative");
        positive(learner_eta, "learner_eta");
        positive(learner_radius, "learner_radius");
        positive(learner_init_range, "learner_init_range");
        if (eps.empty()) throw ConfigError("eps must not be empty");
        for (double e : eps) positive(e, "eps entries");
        try {
            densities.validate();
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
    }

    TeachingConfig teaching() const {
        TeachingConfig t;
        t.beta = beta;
        t.alpha = alpha;
        t.lambda = lambda;
        t.softmax_confidence = resolved_confidence();
        t.n_weight_samples = n_weight_samples;
        t.sphere_radius = sphere_radius;
        t.mce.iters = mce_iters;
        t.mce.step = {mce_step, mce_step_decay};
        t.mce.beta = beta;
        t.mce.old_weight = mce_old_weight;
        t.mce.old_window = mce_old_window;
        t.pool_per_road = pool_per_road;
        t.max_iters = max_iters;
        t.eps = eps;
        t.stop_on_goal = stop_on_goal;
        return t;
    }

    LearnerConfig learner() const {
        return {learner_eta, learner_radius, learner_init_range, learner_steps_per_demo};
    }
};

inline nlohmann::json variants_to_json(const std::vector<Variant>& variants) {
    auto out = nlohmann::json::array();
    for (Variant v : variants) out.push_back(variant_name(v));
    return out;
}

inline std::vector<Variant> parse_variants(const std::vector<std::string>& names) {
    std::vector<Variant> out;
    for (const auto& n : names) {
        const auto v = variant_from_name(n);
        if (!v) throw ConfigError("unknown teacher variant '" + n + "' (expected Agn, Rnd, NoE, Var, Cur)");
        if (std::find(out.begin(), out.end(), *v) == out.end()) out.push_back(*v);
    }
    return out;
}

inline nlohmann::json config_values_to_json(const ExperimentConfig& c) {
    nlohmann::json j;
    j["master_seed"] = c.master_seed;
    j["n_seeds"] = c.n_seeds;
    j["variants"] = variants_to_json(c.variants);
    j["roads_per_type"] = c.roads_per_type;
    j["densities"] = car::densities_to_json(c.densities);
    j["gamma"] = c.gamma;
    j["beta"] = c.beta;
    j["lambda"] = c.lambda;
    j["alpha"] = c.alpha;
    j["softmax_confidence"] = c.resolved_confidence();
    j["n_weight_samples"] = c.n_weight_samples;
    j["sphere_radius"] = c.sphere_radius;
    j["mce_iters"] = c.mce_iters;
    j["mce_step"] = c.mce_step;
    j["mce_step_decay"] = c.mce_step_decay;
    j["mce_old_weight"] = c.mce_old_weight;
    j["mce_old_window"] = c.mce_old_window;
    j["learner_eta"] = c.learner_eta;
    j["learner_radius"] = c.learner_radius;
    j["learner_init_range"] = c.learner_init_range;
    j["learner_steps_per_demo"] = c.learner_steps_per_demo;
    j["pool_per_road"] = c.pool_per_road;
    j["max_iters"] = c.max_iters;
    j["eps"] = c.eps;
    j["stop_on_goal"] = c.stop_on_goal;
    j["workers"] = c.workers;
    return j;
}

/// Resolved configuration plus per-key provenance, as written to config.json.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    nlohmann::json prov = nlohmann::json::object();
    for (const auto& [k, v] : c.provenance) prov[k] = v;
    return {{"config", config_values_to_json(c)}, {"provenance", std::move(prov)}};
}

/// Applies the keys present in `j` on top of `c`. Accepts either a flat
/// object or the {"config": {...}} document written by emit_outputs.
inline void apply_config_json(ExperimentConfig& c, const nlohmann::json& doc) {
    const nlohmann::json& j = doc.contains("config") && doc.at("config").is_object() ? doc.at("config") : doc;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "master_seed") c.master_seed = value.get<std::uint64_t>();
            else if (key == "n_seeds") c.n_seeds = value.get<std::size_t>();
            else if (key == "variants") c.variants = parse_variants(value.get<std::vector<std::string>>());
            else if (key == "roads_per_type") c.roads_per_type = value.get<std::size_t>();
            else if (key == "densities") c.densities = car::densities_from_json(value);
            else if (key == "gamma") c.gamma = value.get<double>();
            else if (key == "beta") c.beta = value.get<double>();
            else if (key == "lambda") c.lambda = value.get<double>();
            else if (key == "alpha") c.alpha = value.get<double>();
            else if (key == "softmax_confidence") {
                if (value.is_null()) c.softmax_confidence.reset();
                else c.softmax_confidence = value.get<double>();
            } else if (key == "n_weight_samples") c.n_weight_samples = value.get<std::size_t>();
            else if (key == "sphere_radius") c.sphere_radius = value.get<double>();
            else if (key == "mce_iters") c.mce_iters = value.get<std::size_t>();
            else if (key == "mce_step") c.mce_step = value.get<double>();
            else if (key == "mce_step_decay") c.mce_step_decay = value.get<double>();
            else if (key == "mce_old_weight") c.mce_old_weight = value.get<double>();
            else if (key == "mce_old_window") c.mce_old_window = value.get<std::size_t>();
            else if (key == "learner_eta") c.learner_eta = value.get<double>();
            else if (key == "learner_radius") c.learner_radius = value.get<double>();
            else if (key == "learner_init_range") c.learner_init_range = value.get<double>();
            else if (key == "learner_steps_per_demo") c.learner_steps_per_demo = value.get<std::size_t>();
            else if (key == "pool_per_road") c.pool_per_road = value.get<std::size_t>();
            else if (key == "max_iters") c.max_iters = value.get<std::size_t>();
            else if (key == "eps") c.eps = value.get<std::vector<double>>();
            else if (key == "stop_on_goal") c.stop_on_goal = value.get<bool>();
            else if (key == "workers") c.workers = value.get<std::size_t>();
            else throw ConfigError("unknown config key '" + key + "'");
            if (doc.contains("provenance") && doc.at("provenance").contains(key))
                c.provenance[key] = doc.at("provenance").at(key).get<std::string>();
            else
                c.provenance[key] = "override";
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
    }
    apply_config_json(base, j);
    return base;
}

// ---------------------------------------------------------------------------
// Running

/// Child-stream component ids within one seed.
enum class Stream : std::uint64_t { env = 0, learner = 1, pool = 2, samples = 3, session = 4 };

inline std::uint64_t stream_seed(std::uint64_t master, std::size_t seed_index, Stream stream, std::size_t sub = 0) {
    return Rng::derive_seed(master, seed_index * 16 + static_cast<std::uint64_t>(stream) + sub);
}

struct CurvePoint {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
};

struct VariantCurves {
    Variant variant;
    std::vector<CurvePoint> learner_loss;
    std::vector<CurvePoint> teacher_loss;
};

struct ThresholdRow {
    Variant variant;
    double eps;
    double mean_iters;
    double stderr_;
    std::size_t n_censored;
    std::size_t n_sessions;
};

struct RunSummary {
    std::vector<VariantCurves> curves;
    std::vector<ThresholdRow> thresholds;
    std::size_t n_failed = 0;
};

struct ExperimentResult {
    RunSummary summary;
    std::vector<SessionRecord> records; ///< sorted by (variant, seed)
};

inline std::size_t variant_rank(Variant v) {
    return static_cast<std::size_t>(std::find(kAllVariants.begin(), kAllVariants.end(), v) - kAllVariants.begin());
}

inline void sort_records(std::vector<SessionRecord>& records) {
    std::stable_sort(records.begin(), records.end(), [](const SessionRecord& a, const SessionRecord& b) {
        if (a.variant != b.variant) return variant_rank(a.variant) < variant_rank(b.variant);
        return a.seed_index < b.seed_index;
    });
}

namespace detail {

inline CurvePoint mean_and_stderr(const std::vector<double>& xs) {
    CurvePoint p;
    p.n = xs.size();
    if (xs.empty()) return p;
    double sum = 0.0;
    for (double x : xs) sum += x;
    p.mean = sum / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - p.mean) * (x - p.mean);
        p.stderr_ = std::sqrt(ss / static_cast<double>(xs.size() - 1)) / std::sqrt(static_cast<double>(xs.size()));
    }
    return p;
}

inline std::vector<Variant> variants_in(const std::vector<SessionRecord>& records) {
    std::vector<Variant> out;
    for (const auto& r : records)
        if (std::find(out.begin(), out.end(), r.variant) == out.end()) out.push_back(r.variant);
    std::sort(out.begin(), out.end(), [](Variant a, Variant b) { return variant_rank(a) < variant_rank(b); });
    return out;
}

} // namespace detail

/// First 1-based iteration with learner loss below eps, if any.
inline std::optional<std::size_t> first_crossing(const SessionRecord& r, double eps) {
    for (const auto& it : r.iterations)
        if (it.learner_loss < eps) return it.iteration;
    return std::nullopt;
}

/// Mean first-crossing iteration per variant and threshold; sessions that
/// never cross count as max_iters and are reported as censored.
inline std::vector<ThresholdRow> summarize_thresholds(const std::vector<SessionRecord>& records,
                                                      const std::vector<double>& eps, std::size_t max_iters) {
    std::vector<ThresholdRow> rows;
    for (Variant v : detail::variants_in(records)) {
        for (double e : eps) {
            std::vector<double> iters;
            std::size_t censored = 0;
            for (const auto& r : records) {
                if (r.variant != v || r.failed) continue;
                const auto crossing = first_crossing(r, e);
                if (!crossing) ++censored;
                iters.push_back(static_cast<double>(crossing.value_or(max_iters)));
            }
            const auto stats = detail::mean_and_stderr(iters);
            rows.push_back({v, e, stats.mean, stats.stderr_, censored, iters.size()});
        }
    }
    return rows;
}

inline std::vector<VariantCurves> summarize_curves(const std::vector<SessionRecord>& records, std::size_t max_iters) {
    std::vector<VariantCurves> out;
    for (Variant v : detail::variants_in(records)) {
        VariantCurves curves{v, {}, {}};
        for (std::size_t i = 1; i <= max_iters; ++i) {
            std::vector<double> learner, teacher;
            for (const auto& r : records) {
                if (r.variant != v || r.failed || r.iterations.size() < i) continue;
                learner.push_back(r.iterations[i - 1].learner_loss);
                teacher.push_back(r.iterations[i - 1].teacher_estimate_loss);
            }
            if (learner.empty()) break;
            curves.learner_loss.push_back(detail::mean_and_stderr(learner));
            curves.teacher_loss.push_back(detail::mean_and_stderr(teacher));
        }
        out.push_back(std::move(curves));
    }
    return out;
}

inline RunSummary summarize(const std::vector<SessionRecord>& records, const std::vector<double>& eps,
                            std::size_t max_iters) {
    RunSummary s;
    s.curves = summarize_curves(records, max_iters);
    s.thresholds = summarize_thresholds(records, eps, max_iters);
    for (const auto& r : records) s.n_failed += r.failed ? 1 : 0;
    return s;
}

using ProgressFn = std::function<void(const SessionRecord&)>;

/**
 * Runs every variant on every seed. Within a seed all variants share the
 * environment, the learner's initial weights, the demonstration pool and the
 * weight samples. A failing session is recorded as failed; others continue.
 */
inline ExperimentResult run_experiments(const ExperimentConfig& config, const ProgressFn& progress = {}) {
    config.validate();
    const TeachingConfig teaching = config.teaching();
    const std::size_t workers = config.workers == 0 ? default_workers() : config.workers;

    struct SeedSetup {
        car::CarEnv env;
        CrossEntBcLearner learner;
        TeachingContext ctx;
    };
    std::vector<std::optional<SeedSetup>> setups(config.n_seeds);
    std::vector<std::string> setup_errors(config.n_seeds);
    parallel_for(config.n_seeds, workers, [&](std::size_t k) {
        try {
            auto env = car::build_env(stream_seed(config.master_seed, k, Stream::env), config.roads_per_type,
                                      config.densities, config.gamma);
            Rng learner_rng(stream_seed(config.master_seed, k, Stream::learner));
            auto learner = CrossEntBcLearner::init(env.mdp, env.phi, learner_rng, config.learner());
            setups[k].emplace(SeedSetup{std::move(env), std::move(learner), TeachingContext{}});
            Rng pool_rng(stream_seed(config.master_seed, k, Stream::pool));
            Rng sample_rng(stream_seed(config.master_seed, k, Stream::samples));
            setups[k]->ctx = make_context(setups[k]->env, teaching, pool_rng, sample_rng);
        } catch (const std::exception& e) {
            setups[k].reset();
            setup_errors[k] = e.what();
        }
    });

    const std::size_t n_tasks = config.n_seeds * config.variants.size();
    std::vector<SessionRecord> records(n_tasks);
    std::mutex progress_mutex;
    parallel_for(n_tasks, workers, [&](std::size_t task) {
        const std::size_t k = task / config.variants.size();
        const Variant v = config.variants[task % config.variants.size()];
        const std::uint64_t session_seed = stream_seed(config.master_seed, k, Stream::session, variant_rank(v));
        SessionRecord& rec = records[task];
        if (!setups[k]) {
            rec.variant = v;
            rec.seed_index = k;
            rec.session_seed = session_seed;
            rec.failed = true;
            rec.error = "seed setup failed: " + setup_errors[k];
        } else {
            try {
                rec = run_session(setups[k]->ctx, setups[k]->learner, v, teaching, session_seed, k);
            } catch (const std::exception& e) {
                rec = SessionRecord{};
                rec.variant = v;
                rec.seed_index = k;
                rec.session_seed = session_seed;
                rec.failed = true;
                rec.error = e.what();
            }
        }
        if (progress) {
            std::lock_guard lock(progress_mutex);
            progress(rec);
        }
    });

    sort_records(records);
    ExperimentResult result;
    result.summary = summarize(records, config.eps, config.max_iters);
    result.records = std::move(records);
    return result;
}

// ---------------------------------------------------------------------------
// Output

/// Fixed 9-significant-digit formatting for byte-stable files.
inline std::string format_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

inline nlohmann::json trajectory_to_json(const Trajectory& xi) {
    auto out = nlohmann::json::array();
    for (const auto& s : xi.steps) out.push_back({s.state, s.action});
    return out;
}

inline nlohmann::json vector_to_json(const Vector& v) {
    auto out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

/// Session header object followed by one object per iteration.
inline std::vector<nlohmann::json> session_to_jsonl(const SessionRecord& r) {
    std::vector<nlohmann::json> lines;
    nlohmann::json crossings = nlohmann::json::array();
    for (const auto& c : r.first_crossing) crossings.push_back(c ? nlohmann::json(*c) : nlohmann::json(nullptr));
    lines.push_back({{"type", "session"},
                     {"variant", variant_name(r.variant)},
                     {"seed", r.seed_index},
                     {"session_seed", r.session_seed},
                     {"failed", r.failed},
                     {"error", r.error},
                     {"eps", r.eps},
                     {"first_crossing", std::move(crossings)},
                     {"initial_learner_theta", vector_to_json(r.initial_learner_theta)},
                     {"initial_learner_loss", r.initial_learner_loss},
                     {"n_iterations", r.iterations.size()}});
    for (const auto& it : r.iterations) {
        lines.push_back({{"type", "iteration"},
                         {"variant", variant_name(r.variant)},
                         {"seed", r.seed_index},
                         {"iteration", it.iteration},
                         {"query_state", it.query_state ? nlohmann::json(*it.query_state) : nlohmann::json(nullptr)},
                         {"learner_trajectory", trajectory_to_json(it.learner_trajectory)},
                         {"theta_hat", it.theta_hat ? vector_to_json(*it.theta_hat) : nlohmann::json(nullptr)},
                         {"demo_pool_index", it.demo_pool_index ? nlohmann::json(*it.demo_pool_index) : nlohmann::json(nullptr)},
                         {"demo", trajectory_to_json(it.demo)},
                         {"learner_theta", vector_to_json(it.learner_theta)},
                         {"learner_loss", it.learner_loss},
                         {"teacher_estimate_loss", it.teacher_estimate_loss}});
    }
    return lines;
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    return out;
}

inline void finish_output(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

} // namespace detail

inline void write_losses_csv(const std::vector<SessionRecord>& records, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    out << "variant,seed,iteration,learner_loss,teacher_estimate_loss,query_state,demo_pool_index\n";
    for (const auto& r : records) {
        if (r.failed) continue;
        for (const auto& it : r.iterations) {
            out << variant_name(r.variant) << ',' << r.seed_index << ',' << it.iteration << ','
                << format_number(it.learner_loss) << ',' << format_number(it.teacher_estimate_loss) << ','
                << (it.query_state ? static_cast<long long>(*it.query_state) : -1LL) << ','
                << (it.demo_pool_index ? static_cast<long long>(*it.demo_pool_index) : -1LL) << '\n';
        }
    }
    detail::finish_output(out, path);
}

inline void write_summary_csv(const std::vector<ThresholdRow>& rows, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    out << "variant,eps,mean_iters,stderr,n_censored\n";
    for (const auto& row : rows)
        out << variant_name(row.variant) << ',' << format_number(row.eps) << ',' << format_number(row.mean_iters) << ','
            << format_number(row.stderr_) << ',' << row.n_censored << '\n';
    detail::finish_output(out, path);
}

inline void write_curves_csv(const std::vector<VariantCurves>& curves, const std::filesystem::path& path) {
    auto out = detail::open_output(path);
    out << "variant,iteration,n,learner_loss_mean,learner_loss_stderr,teacher_loss_mean,teacher_loss_stderr\n";
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.learner_loss.size(); ++i)
            out << variant_name(c.variant) << ',' << i + 1 << ',' << c.learner_loss[i].n << ','
                << format_number(c.learner_loss[i].mean) << ',' << format_number(c.learner_loss[i].stderr_) << ','
                << format_number(c.teacher_loss[i].mean) << ',' << format_number(c.teacher_loss[i].stderr_) << '\n';
    detail::finish_output(out, path);
}

/// Writes losses.csv, summary.csv, curves.csv, config.json and sessions.jsonl into out_dir.
inline void emit_outputs(const ExperimentResult& result, const ExperimentConfig& config,
                         const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create '" + out_dir.string() + "': " + ec.message());

    write_losses_csv(result.records, out_dir / "losses.csv");
    write_summary_csv(result.summary.thresholds, out_dir / "summary.csv");
    write_curves_csv(result.summary.curves, out_dir / "curves.csv");

    const auto config_path = out_dir / "config.json";
    auto config_out = detail::open_output(config_path);
    config_out << config_to_json(config).dump(2) << '\n';
    detail::finish_output(config_out, config_path);

    const auto sessions_path = out_dir / "sessions.jsonl";
    auto sessions_out = detail::open_output(sessions_path);
    for (const auto& r : result.records)
        for (const auto& line : session_to_jsonl(r)) sessions_out << line.dump() << '\n';
    detail::finish_output(sessions_out, sessions_path);
}

/// Rebuilds per-session loss sequences from losses.csv.
inline std::vector<SessionRecord> read_losses_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("'" + path.string() + "' is empty");
    std::vector<SessionRecord> records;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> index;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 7)
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 7 columns");
        const auto variant = variant_from_name(fields[0]);
        if (!variant) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": unknown variant");
        IterationRecord it;
        try {
            it.iteration = std::stoul(fields[2]);
            it.learner_loss = std::stod(fields[3]);
            it.teacher_estimate_loss = std::stod(fields[4]);
            const long long q = std::stoll(fields[5]);
            const long long d = std::stoll(fields[6]);
            if (q >= 0) it.query_state = static_cast<StateId>(q);
            if (d >= 0) it.demo_pool_index = static_cast<std::size_t>(d);
        } catch (const std::exception&) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed number");
        }
        const std::size_t seed = std::stoul(fields[1]);
        const auto key = std::make_pair(variant_rank(*variant), seed);
        auto found = index.find(key);
        if (found == index.end()) {
            found = index.emplace(key, records.size()).first;
            SessionRecord r;
            r.variant = *variant;
            r.seed_index = seed;
            records.push_back(std::move(r));
        }
        records[found->second].iterations.push_back(std::move(it));
    }
    sort_records(records);
    return records;
}

} // namespace teachirl

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "support.hpp"

using namespace teachirl;
namespace fs = std::filesystem;

namespace {

/// A run small enough for unit tests: 8 roads, few samples and iterations.
ExperimentConfig tiny_config(std::size_t seeds = 2) {
    ExperimentConfig c;
    c.apply_quick_profile();
    c.n_seeds = seeds;
    c.n_weight_samples = 40;
    c.mce_iters = 5;
    c.max_iters = 6;
    c.workers = 1;
    return c;
}

SessionRecord session_with_losses(Variant v, std::size_t seed, const std::vector<double>& losses) {
    SessionRecord r;
    r.variant = v;
    r.seed_index = seed;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        IterationRecord it;
        it.iteration = i + 1;
        it.learner_loss = losses[i];
        it.teacher_estimate_loss = 0.5 * losses[i];
        r.iterations.push_back(it);
    }
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const fs::path& p) {
    const std::string s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

class TempDir {
public:
    explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / name) { fs::remove_all(path_); }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

} // namespace

TEST(Config, DefaultsCarProvenance) {
    const ExperimentConfig c;
    EXPECT_EQ(c.n_seeds, 16u);
    EXPECT_EQ(c.n_weight_samples, 5000u);
    EXPECT_EQ(c.sphere_radius, 24.0);
    EXPECT_EQ(c.eps, (std::vector<double>{2.0, 1.0, 0.5}));
    EXPECT_EQ(c.variants.size(), 5u);
    const auto j = config_to_json(c);
    for (const auto& [key, value] : j.at("config").items()) EXPECT_TRUE(j.at("provenance").contains(key)) << key;
    EXPECT_EQ(j.at("provenance").at("n_weight_samples"), "reference");
    EXPECT_EQ(j.at("provenance").at("beta"), "decision");
    EXPECT_NO_THROW(c.validate());
}

TEST(Config, QuickProfile) {
    ExperimentConfig c;
    c.apply_quick_profile();
    EXPECT_EQ(c.roads_per_type, 1u);
    EXPECT_EQ(c.n_weight_samples, 500u);
    EXPECT_EQ(c.n_seeds, 4u);
    EXPECT_EQ(c.max_iters, 60u);
    EXPECT_EQ(c.provenance.at("max_iters"), "quick");
}

TEST(Config, JsonRoundTripAndOverrides) {
    ExperimentConfig c;
    c.beta = 2.5;
    c.variants = {Variant::cur, Variant::agn};
    c.eps = {3.0, 0.25};
    ExperimentConfig back;
    apply_config_json(back, config_to_json(c));
    EXPECT_EQ(config_values_to_json(back), config_values_to_json(c));

    ExperimentConfig flat;
    apply_config_json(flat, nlohmann::json{{"lambda", 0.7}, {"workers", 3}});
    EXPECT_EQ(flat.lambda, 0.7);
    EXPECT_EQ(flat.provenance.at("lambda"), "override");
    EXPECT_EQ(flat.provenance.at("alpha"), "reference");
}

TEST(Config, Errors) {
    ExperimentConfig c;
    EXPECT_THROW(apply_config_json(c, nlohmann::json{{"betta", 1.0}}), ConfigError);
    EXPECT_THROW(apply_config_json(c, nlohmann::json{{"beta", "high"}}), ConfigError);
    EXPECT_THROW(apply_config_json(c, nlohmann::json{{"variants", {"Agn", "Best"}}}), ConfigError);
    EXPECT_THROW(apply_config_json(c, nlohmann::json::array()), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);

    ExperimentConfig bad;
    bad.lambda = 0.0;
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = ExperimentConfig{};
    bad.eps = {};
    EXPECT_THROW(bad.validate(), ConfigError);
    bad = ExperimentConfig{};
    bad.n_seeds = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Thresholds, DirectScanExample) {
    const std::vector<SessionRecord> records{session_with_losses(Variant::var, 0, {3.0, 1.5, 0.4})};
    EXPECT_EQ(first_crossing(records[0], 2.0), std::optional<std::size_t>(2));
    EXPECT_EQ(first_crossing(records[0], 1.0), std::optional<std::size_t>(3));
    EXPECT_EQ(first_crossing(records[0], 0.5), std::optional<std::size_t>(3));
    const auto rows = summarize_thresholds(records, {2.0, 1.0, 0.5}, 120);
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[0].mean_iters, 2.0);
    EXPECT_EQ(rows[1].mean_iters, 3.0);
    EXPECT_EQ(rows[2].mean_iters, 3.0);
}

TEST(Thresholds, CensoredSessionsCountAsMaxIters) {
    const std::vector<SessionRecord> records{session_with_losses(Variant::agn, 0, {3.0, 1.5, 0.4}),
                                             session_with_losses(Variant::agn, 1, {3.0, 2.5, 2.1})};
    const auto rows = summarize_thresholds(records, {2.0, 0.5}, 10);
    EXPECT_EQ(rows[0].mean_iters, 6.0);
    EXPECT_EQ(rows[0].n_censored, 1u);
    EXPECT_EQ(rows[1].mean_iters, 6.5);
    // sample standard deviation over sqrt(n)
    EXPECT_NEAR(rows[0].stderr_, std::sqrt(32.0) / std::sqrt(2.0), 1e-12);
    EXPECT_EQ(rows[0].n_sessions, 2u);
}

TEST(Thresholds, FailedSessionsAreExcluded) {
    auto failed = session_with_losses(Variant::cur, 1, {0.1});
    failed.failed = true;
    const std::vector<SessionRecord> records{session_with_losses(Variant::cur, 0, {3.0, 0.1}), failed};
    const auto s = summarize(records, {1.0}, 10);
    EXPECT_EQ(s.n_failed, 1u);
    EXPECT_EQ(s.thresholds[0].mean_iters, 2.0);
    EXPECT_EQ(s.thresholds[0].n_sessions, 1u);
}

TEST(Curves, PerIterationMeansWithoutCarryForward) {
    const std::vector<SessionRecord> records{session_with_losses(Variant::rnd, 0, {4.0, 2.0, 1.0}),
                                             session_with_losses(Variant::rnd, 1, {2.0})};
    const auto curves = summarize_curves(records, 10);
    ASSERT_EQ(curves.size(), 1u);
    ASSERT_EQ(curves[0].learner_loss.size(), 3u);
    EXPECT_EQ(curves[0].learner_loss[0].mean, 3.0);
    EXPECT_EQ(curves[0].learner_loss[0].n, 2u);
    EXPECT_EQ(curves[0].learner_loss[1].mean, 2.0);
    EXPECT_EQ(curves[0].learner_loss[1].n, 1u);
    EXPECT_EQ(curves[0].teacher_loss[0].mean, 1.5);
}

TEST(Aggregation, PermutationInvariantOverSeeds) {
    std::vector<SessionRecord> records;
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (Variant v : kAllVariants)
        for (std::size_t seed = 0; seed < 6; ++seed) {
            std::vector<double> losses(8);
            for (auto& x : losses) x = u(gen);
            records.push_back(session_with_losses(v, seed, losses));
        }
    const auto a = summarize(records, {2.0, 1.0}, 8);
    std::shuffle(records.begin(), records.end(), gen);
    sort_records(records);
    const auto b = summarize(records, {2.0, 1.0}, 8);
    ASSERT_EQ(a.thresholds.size(), b.thresholds.size());
    for (std::size_t k = 0; k < a.thresholds.size(); ++k) {
        EXPECT_EQ(a.thresholds[k].variant, b.thresholds[k].variant);
        EXPECT_NEAR(a.thresholds[k].mean_iters, b.thresholds[k].mean_iters, 1e-12);
    }
    for (std::size_t v = 0; v < a.curves.size(); ++v)
        for (std::size_t i = 0; i < a.curves[v].learner_loss.size(); ++i)
            EXPECT_NEAR(a.curves[v].learner_loss[i].mean, b.curves[v].learner_loss[i].mean, 1e-12);
}

TEST(Seeding, StreamsAreDistinct) {
    std::set<std::uint64_t> seen;
    for (std::size_t k = 0; k < 16; ++k)
        for (Stream s : {Stream::env, Stream::learner, Stream::pool, Stream::samples})
            EXPECT_TRUE(seen.insert(stream_seed(1, k, s)).second);
    for (std::size_t k = 0; k < 16; ++k)
        for (std::size_t v = 0; v < 5; ++v) EXPECT_TRUE(seen.insert(stream_seed(1, k, Stream::session, v)).second);
    EXPECT_NE(stream_seed(1, 0, Stream::env), stream_seed(2, 0, Stream::env));
}

TEST(RunExperiments, SessionCountAndSharedInitialisation) {
    ExperimentConfig c = tiny_config(16);
    c.max_iters = 2;
    c.mce_iters = 2;
    const auto result = run_experiments(c);
    ASSERT_EQ(result.records.size(), 80u);
    EXPECT_EQ(result.summary.n_failed, 0u);
    for (const auto& r : result.records) {
        const auto& first = result.records[r.seed_index]; // Agn sessions come first, one per seed
        EXPECT_EQ(first.variant, Variant::agn);
        EXPECT_EQ(r.initial_learner_theta, first.initial_learner_theta);
        EXPECT_EQ(r.initial_learner_loss, first.initial_learner_loss);
    }
    EXPECT_NE(result.records[0].initial_learner_theta, result.records[1].initial_learner_theta);
}

TEST(RunExperiments, WorkerCountDoesNotChangeResults) {
    ExperimentConfig one = tiny_config(3), three = tiny_config(3);
    three.workers = 3;
    TempDir a("teachirl_workers_a"), b("teachirl_workers_b");
    emit_outputs(run_experiments(one), one, a.path());
    emit_outputs(run_experiments(three), one, b.path());
    for (const char* f : {"losses.csv", "summary.csv", "curves.csv", "sessions.jsonl"})
        EXPECT_EQ(slurp(a.path() / f), slurp(b.path() / f)) << f;
}

TEST(Outputs, RowCountsAndByteStableReemit) {
    const ExperimentConfig c = tiny_config(2);
    const auto result = run_experiments(c);
    TempDir a("teachirl_emit_a"), b("teachirl_emit_b");
    emit_outputs(result, c, a.path());
    emit_outputs(result, c, b.path());
    for (const char* f : {"losses.csv", "summary.csv", "curves.csv", "config.json", "sessions.jsonl"})
        EXPECT_EQ(slurp(a.path() / f), slurp(b.path() / f)) << f;

    std::size_t total = 0;
    for (const auto& r : result.records) total += r.iterations.size();
    EXPECT_EQ(line_count(a.path() / "losses.csv"), total + 1);
    EXPECT_EQ(line_count(a.path() / "summary.csv"), c.variants.size() * c.eps.size() + 1);
    EXPECT_EQ(line_count(a.path() / "sessions.jsonl"), total + result.records.size());
    EXPECT_TRUE(slurp(a.path() / "losses.csv")
                    .starts_with("variant,seed,iteration,learner_loss,teacher_estimate_loss,query_state,demo_pool_index\n"
                                 "Agn,0,1,"));

    ExperimentConfig reread;
    reread = load_config((a.path() / "config.json").string());
    EXPECT_EQ(config_values_to_json(reread), config_values_to_json(c));
}

TEST(Outputs, LossesParseBackToTheSameCurves) {
    const ExperimentConfig c = tiny_config(2);
    const auto result = run_experiments(c);
    TempDir dir("teachirl_parse_back");
    emit_outputs(result, c, dir.path());
    const auto back = read_losses_csv(dir.path() / "losses.csv");
    ASSERT_EQ(back.size(), result.records.size());
    // every value survives at the emitted precision
    for (std::size_t k = 0; k < back.size(); ++k) {
        ASSERT_EQ(back[k].iterations.size(), result.records[k].iterations.size());
        for (std::size_t i = 0; i < back[k].iterations.size(); ++i) {
            const auto& x = back[k].iterations[i];
            const auto& y = result.records[k].iterations[i];
            EXPECT_EQ(format_number(x.learner_loss), format_number(y.learner_loss));
            EXPECT_EQ(format_number(x.teacher_estimate_loss), format_number(y.teacher_estimate_loss));
            EXPECT_EQ(x.query_state, y.query_state);
            EXPECT_EQ(x.demo_pool_index, y.demo_pool_index);
        }
    }
    // so the curves agree up to that precision (means of rounded values may move the last digit)
    const auto curves = summarize_curves(back, c.max_iters);
    ASSERT_EQ(curves.size(), result.summary.curves.size());
    for (std::size_t v = 0; v < curves.size(); ++v) {
        ASSERT_EQ(curves[v].learner_loss.size(), result.summary.curves[v].learner_loss.size());
        for (std::size_t i = 0; i < curves[v].learner_loss.size(); ++i) {
            const double a = curves[v].learner_loss[i].mean, b = result.summary.curves[v].learner_loss[i].mean;
            EXPECT_LE(std::abs(a - b), 1e-8 * std::max(1.0, std::abs(b)));
            const double ta = curves[v].teacher_loss[i].mean, tb = result.summary.curves[v].teacher_loss[i].mean;
            EXPECT_LE(std::abs(ta - tb), 1e-8 * std::max(1.0, std::abs(tb)));
        }
    }
}

TEST(Outputs, UnwritableDirectoryIsReported) {
    const ExperimentConfig c = tiny_config(1);
    ExperimentResult empty;
    EXPECT_THROW(emit_outputs(empty, c, "/proc/teachirl_cannot_write_here"), std::runtime_error);
}

TEST(Formatting, NineSignificantDigits) {
    EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333");
    EXPECT_EQ(format_number(2.0), "2");
    EXPECT_EQ(format_number(123456789.123), "123456789");
}

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "teachirl/mdp.hpp"

namespace teachirl::car {

inline constexpr std::size_t kRows = 10;
inline constexpr std::size_t kLanes = 2;
inline constexpr std::size_t kCellsPerRoad = kRows * kLanes;
inline constexpr std::size_t kHorizon = kRows;
inline constexpr std::size_t kRoadTypes = 8;
inline constexpr std::size_t kFeatureDim = 8;
inline constexpr double kGamma = 0.99;

enum Lane : std::size_t { kLeft = 0, kRight = 1 };
enum Action : ActionId { kActionLeft = 0, kActionRight = 1, kActionStay = 2 };
inline constexpr std::size_t kActions = 3;

enum class Object : std::uint8_t { stone = 0, grass, car, pedestrian, hov, police };
inline constexpr std::size_t kObjectKinds = 6;
inline constexpr std::array<std::string_view, kObjectKinds> kObjectNames{"stone", "grass", "car",
                                                                          "pedestrian", "hov", "police"};

/// Canonical feature order: the six object indicators, then car-in-front, ped-in-front.
inline constexpr std::array<std::string_view, kFeatureDim> kFeatureNames{
    "stone", "grass", "car", "pedestrian", "hov", "police", "car_in_front", "ped_in_front"};
enum Feature : std::size_t {
    kStone = 0, kGrass, kCar, kPedestrian, kHov, kPolice, kCarInFront, kPedInFront
};

inline std::optional<Object> object_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kObjectKinds; ++i)
        if (kObjectNames[i] == name) return static_cast<Object>(i);
    return std::nullopt;
}

/// Bitmask of objects in one cell.
class Cell {
public:
    bool has(Object o) const { return (bits_ >> static_cast<unsigned>(o)) & 1u; }
    void set(Object o) { bits_ = static_cast<std::uint8_t>(bits_ | (1u << static_cast<unsigned>(o))); }
    void clear() { bits_ = 0; }
    bool empty() const { return bits_ == 0; }
    std::uint8_t bits() const { return bits_; }

    friend bool operator==(const Cell&, const Cell&) = default;

private:
    std::uint8_t bits_ = 0;
};

struct RoadSpec {
    std::size_t road_type = 0; ///< 0..7 for T0..T7
    std::array<std::array<Cell, kLanes>, kRows> cells{};

    const Cell& at(std::size_t row, std::size_t lane) const { return cells[row][lane]; }
    Cell& at(std::size_t row, std::size_t lane) { return cells[row][lane]; }

    friend bool operator==(const RoadSpec&, const RoadSpec&) = default;
};

inline std::string road_type_name(std::size_t type) { return "T" + std::to_string(type); }

inline std::optional<std::size_t> road_type_from_name(std::string_view name) {
    if (name.size() == 2 && name[0] == 'T' && name[1] >= '0' && name[1] < '0' + static_cast<int>(kRoadTypes))
        return static_cast<std::size_t>(name[1] - '0');
    return std::nullopt;
}

enum class LaneScope { any, left, right };

/// Independent Bernoulli placement of one object kind per eligible cell.
struct PlacementRule {
    Object object;
    double probability;
    LaneScope lanes;

    friend bool operator==(const PlacementRule&, const PlacementRule&) = default;
};

struct Densities {
    std::array<std::vector<PlacementRule>, kRoadTypes> rules;

    static Densities defaults() {
        using enum Object;
        Densities d;
        d.rules[0] = {{car, 0.1, LaneScope::any}};
        d.rules[1] = {{car, 0.3, LaneScope::any}};
        d.rules[2] = {{stone, 0.5, LaneScope::right}};
        d.rules[3] = {{car, 0.15, LaneScope::any}, {stone, 0.15, LaneScope::any}};
        d.rules[4] = {{grass, 0.5, LaneScope::right}};
        d.rules[5] = {{car, 0.15, LaneScope::any}, {grass, 0.15, LaneScope::any}};
        d.rules[6] = {{grass, 0.5, LaneScope::right}, {pedestrian, 0.1, LaneScope::any}};
        d.rules[7] = {{hov, 1.0, LaneScope::right}, {police, 0.2, LaneScope::any}};
        return d;
    }

    void validate() const {
        for (const auto& type_rules : rules)
            for (const auto& r : type_rules)
                if (!(r.probability >= 0.0 && r.probability <= 1.0))
                    throw InvalidArgument("density probability outside [0,1]");
    }

    friend bool operator==(const Densities&, const Densities&) = default;
};

inline bool lane_in_scope(std::size_t lane, LaneScope scope) {
    switch (scope) {
    case LaneScope::any: return true;
    case LaneScope::left: return lane == kLeft;
    case LaneScope::right: return lane == kRight;
    }
    return false;
}

/// Populates a road of the given type; the start cell (row 0, left lane) is cleared.
inline RoadSpec generate_road(std::size_t road_type, Rng& rng, const Densities& densities = Densities::defaults()) {
    if (road_type >= kRoadTypes) throw InvalidArgument("generate_road: road type out of range");
    RoadSpec road;
    road.road_type = road_type;
    for (std::size_t row = 0; row < kRows; ++row)
        for (std::size_t lane = 0; lane < kLanes; ++lane)
            for (const auto& rule : densities.rules[road_type]) {
                if (!lane_in_scope(lane, rule.lanes)) continue;
                if (rng.bernoulli(rule.probability)) road.at(row, lane).set(rule.object);
            }
    road.at(0, kLeft).clear();
    return road;
}

/// The assembled driving environment: one MDP over all roads plus a shared terminal state.
struct CarEnv {
    Mdp mdp;
    FeatureMap phi;
    std::vector<RoadSpec> roads;
    std::uint64_t seed = 0;
    Densities densities;

    std::size_t n_roads() const { return roads.size(); }
    std::size_t horizon() const { return kHorizon; }
    StateId terminal_state() const { return roads.size() * kCellsPerRoad; }

    static StateId state_id(std::size_t road, std::size_t row, std::size_t lane) {
        return road * kCellsPerRoad + row * kLanes + lane;
    }
    static std::size_t road_of(StateId s) { return s / kCellsPerRoad; }
    static std::size_t row_of(StateId s) { return (s % kCellsPerRoad) / kLanes; }
    static std::size_t lane_of(StateId s) { return s % kLanes; }
    StateId initial_state(std::size_t road) const { return state_id(road, 0, kLeft); }
};

/// True reward weights in canonical feature order.
inline RewardWeights true_weights() {
    RewardWeights theta(kFeatureDim);
    theta << -1.0, -0.5, -5.0, -10.0, 1.0, 0.0, -2.0, -5.0;
    return theta;
}

/// Builds the MDP and features for an explicit list of roads.
inline CarEnv assemble_env(std::vector<RoadSpec> roads, std::uint64_t seed, Densities densities,
                           double gamma = kGamma) {
    if (roads.empty()) throw InvalidArgument("car env needs at least one road");
    const std::size_t n_roads = roads.size();
    const std::size_t n_states = n_roads * kCellsPerRoad + 1;
    const StateId terminal = n_roads * kCellsPerRoad;

    std::vector<Mdp::Transition> transitions;
    transitions.reserve(n_states * kActions * 2);
    Matrix phi = Matrix::Zero(static_cast<Eigen::Index>(n_states), kFeatureDim);
    Vector p0 = Vector::Zero(static_cast<Eigen::Index>(n_states));
    std::vector<bool> is_terminal(n_states, false);
    is_terminal[terminal] = true;

    for (std::size_t r = 0; r < n_roads; ++r) {
        const auto& road = roads[r];
        p0[static_cast<Eigen::Index>(CarEnv::state_id(r, 0, kLeft))] = 1.0 / static_cast<double>(n_roads);
        for (std::size_t row = 0; row < kRows; ++row) {
            for (std::size_t lane = 0; lane < kLanes; ++lane) {
                const StateId s = CarEnv::state_id(r, row, lane);
                const auto srow = static_cast<Eigen::Index>(s);
                const Cell& cell = road.at(row, lane);
                for (std::size_t k = 0; k < kObjectKinds; ++k)
                    if (cell.has(static_cast<Object>(k))) phi(srow, static_cast<Eigen::Index>(k)) = 1.0;
                if (row + 1 < kRows) {
                    const Cell& ahead = road.at(row + 1, lane);
                    if (ahead.has(Object::car)) phi(srow, kCarInFront) = 1.0;
                    if (ahead.has(Object::pedestrian)) phi(srow, kPedInFront) = 1.0;
                }

                auto add = [&](ActionId a, std::size_t next_lane, double p) {
                    const StateId next = row + 1 < kRows ? CarEnv::state_id(r, row + 1, next_lane) : terminal;
                    transitions.push_back({s, a, next, p});
                };
                // moving toward the lane you are already in lands on a random lane
                if (lane == kRight) {
                    add(kActionLeft, kLeft, 1.0);
                    add(kActionRight, kLeft, 0.5);
                    add(kActionRight, kRight, 0.5);
                } else {
                    add(kActionLeft, kLeft, 0.5);
                    add(kActionLeft, kRight, 0.5);
                    add(kActionRight, kRight, 1.0);
                }
                add(kActionStay, lane, 1.0);
            }
        }
    }
    for (ActionId a = 0; a < kActions; ++a) transitions.push_back({terminal, a, terminal, 1.0});

    // (row 0, right lane) cells are never entered since episodes start on the left
    Mdp mdp(n_states, kActions, transitions, std::move(p0), gamma, std::move(is_terminal),
            /*require_reachable=*/false);
    return CarEnv{std::move(mdp), FeatureMap{std::move(phi)}, std::move(roads), seed, std::move(densities)};
}

/// Generates `roads_per_type` roads of each of the eight types, type-major.
inline CarEnv build_env(std::uint64_t seed, std::size_t roads_per_type = 5,
                        const Densities& densities = Densities::defaults(), double gamma = kGamma) {
    if (roads_per_type == 0) throw InvalidArgument("build_env: roads_per_type must be at least 1");
    densities.validate();
    Rng rng(seed);
    std::vector<RoadSpec> roads;
    roads.reserve(kRoadTypes * roads_per_type);
    for (std::size_t type = 0; type < kRoadTypes; ++type)
        for (std::size_t k = 0; k < roads_per_type; ++k) roads.push_back(generate_road(type, rng, densities));
    return assemble_env(std::move(roads), seed, densities, gamma);
}

} // namespace teachirl::car

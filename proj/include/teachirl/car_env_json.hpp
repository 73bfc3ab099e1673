#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "teachirl/car_env.hpp"

namespace teachirl::car {

inline constexpr std::string_view kEnvFormat = "teachirl.car_env/1";

inline std::string_view lane_scope_name(LaneScope scope) {
    switch (scope) {
    case LaneScope::any: return "any";
    case LaneScope::left: return "left";
    case LaneScope::right: return "right";
    }
    return "any";
}

inline LaneScope lane_scope_from_name(const std::string& name) {
    if (name == "any") return LaneScope::any;
    if (name == "left") return LaneScope::left;
    if (name == "right") return LaneScope::right;
    throw InvalidArgument("unknown lane scope '" + name + "'");
}

inline nlohmann::json densities_to_json(const Densities& d) {
    nlohmann::json out = nlohmann::json::object();
    for (std::size_t t = 0; t < kRoadTypes; ++t) {
        auto rules = nlohmann::json::array();
        for (const auto& r : d.rules[t])
            rules.push_back({{"object", kObjectNames[static_cast<std::size_t>(r.object)]},
                             {"probability", r.probability},
                             {"lanes", lane_scope_name(r.lanes)}});
        out[road_type_name(t)] = std::move(rules);
    }
    return out;
}

/// Road types missing from `j` keep their default rules.
inline Densities densities_from_json(const nlohmann::json& j) {
    Densities d = Densities::defaults();
    if (!j.is_object()) throw InvalidArgument("densities must be an object keyed by road type");
    for (const auto& [key, rules] : j.items()) {
        const auto type = road_type_from_name(key);
        if (!type) throw InvalidArgument("unknown road type '" + key + "' in densities");
        d.rules[*type].clear();
        for (const auto& r : rules) {
            const auto obj = object_from_name(r.at("object").get<std::string>());
            if (!obj) throw InvalidArgument("unknown object in densities: " + r.at("object").dump());
            d.rules[*type].push_back({*obj, r.at("probability").get<double>(),
                                      lane_scope_from_name(r.value("lanes", std::string("any")))});
        }
    }
    d.validate();
    return d;
}

inline nlohmann::json env_to_json(const CarEnv& env) {
    auto roads = nlohmann::json::array();
    for (const auto& road : env.roads) {
        auto rows = nlohmann::json::array();
        for (std::size_t row = 0; row < kRows; ++row) {
            auto lanes = nlohmann::json::array();
            for (std::size_t lane = 0; lane < kLanes; ++lane) {
                auto objects = nlohmann::json::array();
                for (std::size_t k = 0; k < kObjectKinds; ++k)
                    if (road.at(row, lane).has(static_cast<Object>(k))) objects.push_back(kObjectNames[k]);
                lanes.push_back(std::move(objects));
            }
            rows.push_back(std::move(lanes));
        }
        roads.push_back({{"type", road_type_name(road.road_type)}, {"cells", std::move(rows)}});
    }
    return {{"format", kEnvFormat},
            {"seed", env.seed},
            {"gamma", env.mdp.gamma()},
            {"densities", densities_to_json(env.densities)},
            {"roads", std::move(roads)}};
}

namespace detail {

inline CarEnv env_from_json_unchecked(const nlohmann::json& j) {
    if (j.value("format", std::string(kEnvFormat)) != kEnvFormat)
        throw InvalidArgument("unsupported environment format " + j.at("format").dump());
    std::vector<RoadSpec> roads;
    for (const auto& jr : j.at("roads")) {
        RoadSpec road;
        const auto type = road_type_from_name(jr.at("type").get<std::string>());
        if (!type) throw InvalidArgument("unknown road type " + jr.at("type").dump());
        road.road_type = *type;
        const auto& rows = jr.at("cells");
        if (rows.size() != kRows) throw InvalidArgument("road must have exactly 10 rows");
        for (std::size_t row = 0; row < kRows; ++row) {
            if (rows[row].size() != kLanes) throw InvalidArgument("road row must have exactly 2 lanes");
            for (std::size_t lane = 0; lane < kLanes; ++lane)
                for (const auto& name : rows[row][lane]) {
                    const auto obj = object_from_name(name.get<std::string>());
                    if (!obj) throw InvalidArgument("unknown object " + name.dump());
                    road.at(row, lane).set(*obj);
                }
        }
        roads.push_back(road);
    }
    const Densities densities = j.contains("densities") ? densities_from_json(j.at("densities")) : Densities::defaults();
    return assemble_env(std::move(roads), j.value("seed", std::uint64_t{0}), densities, j.value("gamma", kGamma));
}

} // namespace detail

inline CarEnv env_from_json(const nlohmann::json& j) {
    try {
        return detail::env_from_json_unchecked(j);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed environment document: ") + e.what());
    }
}

inline void save_env(const CarEnv& env, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << env_to_json(env).dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline CarEnv load_env(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    try {
        return env_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw InvalidArgument("'" + path + "' is not valid JSON: " + e.what());
    }
}

} // namespace teachirl::car

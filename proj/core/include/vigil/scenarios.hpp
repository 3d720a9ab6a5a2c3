#pragma once

#include <string>

#include "vigil/model.hpp"

namespace vigil {

/// Options for the congestion-game scenario generator.
struct CongestionConfig {
    int lookahead = 3;
    int horizon = 30;
    double alpha = 0.04;
    std::string map_path;  // empty: use the bundled map data file
};

/// Sets a config field by name; throws ConfigError on an unknown key or an
/// unparsable value.  Keys: k | lookahead, horizon, alpha, map.
void apply_option(CongestionConfig& cfg, const std::string& key, const std::string& value);

/// Builds the dynamic congestion-game scenario: a 44-node ego chain crossed
/// with a patrol-zone obstacle walk (plus a one-step activation marker for
/// the second obstacle), ten proximity sensors with a 0.15 false-negative
/// rate, a reach-the-target-before-the-goal failure DFA, and hold/switch/idle
/// query costs.
Scenario build_congestion_scenario(const CongestionConfig& cfg = {});

/// Small verification fixtures ("f1", "f1-two-sensor"): a two-state chain
/// with an absorbing failure, one perfect sensor and one pure-noise sensor.
/// Throws ConfigError on an unknown name.
Scenario build_fixture(const std::string& name);

/// Path of the bundled congestion map data file.
std::string default_map_path();

}  // namespace vigil

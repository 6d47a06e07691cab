#pragma once

// Internal config <-> JSON bridges shared by the core sources.

#include <string>

#include <json.hpp>

#include "relab/dataset.hpp"
#include "relab/net.hpp"
#include "relab/relabel.hpp"
#include "relab/siamese.hpp"
#include "relab/synth.hpp"

namespace relab::detail {

nlohmann::json net_config_to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json contrastive_config_to_json(const ContrastiveConfig& cfg);
ContrastiveConfig contrastive_config_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json relabel_config_to_json(const RelabelConfig& cfg);
RelabelConfig relabel_config_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const nlohmann::json& j, const std::string& where);

nlohmann::json generator_config_to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_config_from_json(const nlohmann::json& j, const std::string& where);

}  // namespace relab::detail

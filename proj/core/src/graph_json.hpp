#pragma once

#include <json.hpp>

#include "trustbench/graph.hpp"

namespace trustbench::detail {

nlohmann::json graph_to_json(const ModelGraph& graph);
ModelGraph graph_from_json(const nlohmann::json& j);

} // namespace trustbench::detail

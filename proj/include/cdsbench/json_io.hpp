#pragma once

#include "cdsbench/analyzers.hpp"
#include "cdsbench/backends.hpp"

#include <json.hpp>

namespace cdsbench {

nlohmann::json provider_to_json(const ProviderDescriptor& desc);
ProviderDescriptor provider_from_json(const nlohmann::json& j);

nlohmann::json backend_to_json(const BackendDescriptor& desc);
BackendDescriptor backend_from_json(const nlohmann::json& j);

}  // namespace cdsbench

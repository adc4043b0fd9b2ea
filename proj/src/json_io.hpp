#pragma once

// nlohmann::json conversions shared by the file formats and the sidecar wire
// protocol.

#include <string>
#include <vector>

#include "json.hpp"
#include "privstream/detection.hpp"

namespace privstream::detail {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

BoundingBox bbox_from_json(const json& j);
ordered_json bbox_to_json(const BoundingBox& b);

Detection detection_from_json(const json& j);
ordered_json detection_to_json(const Detection& d);

std::vector<Detection> detections_from_json(const json& arr);
ordered_json detections_to_json(const std::vector<Detection>& ds);

}  // namespace privstream::detail

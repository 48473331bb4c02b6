#pragma once

#include <string>
#include <vector>

#include "paintdet/codec.hpp"

namespace paintdet {

// Scored, classed boxes for one image; the unit of evaluation.
struct DetectionSet {
    int image_id = 0;
    std::vector<BBox> detections;
};

// JSON array of {"image_id", "detections":[{"class","cx","cy","w","h","score"}]}.
std::string detections_json(const std::vector<DetectionSet>& sets);
void write_detections(const std::string& path, const std::vector<DetectionSet>& sets);
std::vector<DetectionSet> read_detections(const std::string& path);

}  // namespace paintdet

#include "paintdet/detections.hpp"

#include <fstream>

#include "json.hpp"
#include "paintdet/errors.hpp"

namespace paintdet {

static nlohmann::json to_json(const std::vector<DetectionSet>& sets) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : sets) {
        nlohmann::json dets = nlohmann::json::array();
        for (const auto& b : s.detections)
            dets.push_back({{"class", b.class_id},
                            {"cx", b.cx},
                            {"cy", b.cy},
                            {"w", b.w},
                            {"h", b.h},
                            {"score", b.score}});
        arr.push_back({{"image_id", s.image_id}, {"detections", dets}});
    }
    return arr;
}

std::string detections_json(const std::vector<DetectionSet>& sets) {
    return to_json(sets).dump(2);
}

void write_detections(const std::string& path, const std::vector<DetectionSet>& sets) {
    std::ofstream f(path);
    if (!f) throw DataError("write_detections: cannot open " + path);
    f << detections_json(sets) << "\n";
}

std::vector<DetectionSet> read_detections(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("read_detections: cannot open " + path);
    nlohmann::json arr;
    try {
        f >> arr;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("read_detections: bad JSON in " + path + ": " + e.what());
    }
    std::vector<DetectionSet> out;
    try {
        for (const auto& s : arr) {
            DetectionSet d;
            d.image_id = s.at("image_id");
            for (const auto& j : s.at("detections")) {
                BBox b;
                b.class_id = j.at("class");
                b.cx = j.at("cx");
                b.cy = j.at("cy");
                b.w = j.at("w");
                b.h = j.at("h");
                b.score = j.at("score");
                d.detections.push_back(b);
            }
            out.push_back(std::move(d));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("read_detections: bad record in " + path + ": " + e.what());
    }
    return out;
}

}  // namespace paintdet

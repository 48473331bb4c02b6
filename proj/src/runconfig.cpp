#include "paintdet/runconfig.hpp"

#include <fstream>
#include <set>

#include "json.hpp"
#include "paintdet/errors.hpp"

namespace paintdet {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& section,
                    const std::set<std::string>& known) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("config: unknown key \"" + (section.empty() ? "" : section + ".") +
                              it.key() + "\"");
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    reject_unknown(j, "",
                   {"data", "codec", "diffusion", "model", "train", "postproc", "eval", "seed"});

    RunConfig c;
    get_if(j, "seed", c.seed);

    if (j.contains("data")) {
        const json& d = j.at("data");
        reject_unknown(d, "data",
                       {"image_size", "min_objects", "max_objects", "max_pairwise_iou",
                        "min_size_px", "max_size_px", "size_multiple"});
        get_if(d, "image_size", c.data.image_size);
        get_if(d, "min_objects", c.data.min_objects);
        get_if(d, "max_objects", c.data.max_objects);
        get_if(d, "max_pairwise_iou", c.data.max_pairwise_iou);
        get_if(d, "min_size_px", c.data.min_size_px);
        get_if(d, "max_size_px", c.data.max_size_px);
        get_if(d, "size_multiple", c.data.size_multiple);
    }
    if (j.contains("codec")) {
        const json& d = j.at("codec");
        reject_unknown(d, "codec", {"num_classes", "shrink_ratio", "dot_radius_px"});
        get_if(d, "num_classes", c.num_classes);
        get_if(d, "shrink_ratio", c.style.shrink_ratio);
        get_if(d, "dot_radius_px", c.style.dot_radius_px);
    }
    if (j.contains("diffusion")) {
        const json& d = j.at("diffusion");
        reject_unknown(d, "diffusion", {"T", "S", "eta", "multires_strength"});
        get_if(d, "T", c.diffusion_T);
        get_if(d, "S", c.ddim_steps);
        get_if(d, "eta", c.ddim_eta);
        get_if(d, "multires_strength", c.train.multires_strength);
    }
    if (j.contains("model")) {
        const json& d = j.at("model");
        reject_unknown(d, "model", {"base_width", "channel_mult", "res_blocks", "embed_dim"});
        get_if(d, "base_width", c.model.base_width);
        get_if(d, "channel_mult", c.model.channel_mult);
        get_if(d, "res_blocks", c.model.res_blocks);
        get_if(d, "embed_dim", c.model.embed_dim);
    }
    if (j.contains("train")) {
        const json& d = j.at("train");
        reject_unknown(d, "train",
                       {"lr", "batch_size", "steps", "flip_prob", "prompt_y_prob", "lambda1",
                        "lambda2"});
        get_if(d, "lr", c.train.lr);
        get_if(d, "batch_size", c.train.batch_size);
        get_if(d, "steps", c.train.steps);
        get_if(d, "flip_prob", c.train.flip_prob);
        get_if(d, "prompt_y_prob", c.train.prompt_y_prob);
        get_if(d, "lambda1", c.train.lambda1);
        get_if(d, "lambda2", c.train.lambda2);
    }
    if (j.contains("postproc")) {
        const json& d = j.at("postproc");
        reject_unknown(d, "postproc",
                       {"eps", "min_pts", "red_guard_dist", "assign_dist", "score_floor",
                        "min_bbox_area_px", "verify_center_dot", "nms", "nms_iou"});
        get_if(d, "eps", c.postproc.eps);
        get_if(d, "min_pts", c.postproc.min_pts);
        get_if(d, "red_guard_dist", c.postproc.red_guard_dist);
        get_if(d, "assign_dist", c.postproc.assign_dist);
        get_if(d, "score_floor", c.postproc.score_floor);
        get_if(d, "min_bbox_area_px", c.postproc.min_bbox_area_px);
        get_if(d, "verify_center_dot", c.postproc.verify_center_dot);
        get_if(d, "nms", c.postproc.nms);
        get_if(d, "nms_iou", c.postproc.nms_iou);
    }
    if (j.contains("eval")) {
        reject_unknown(j.at("eval"), "eval", {});  // the IoU sweep is fixed COCO-style
    }

    c.data.num_classes = c.num_classes;
    c.data.seed = c.seed;
    c.train.seed = c.seed + 1;
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

}  // namespace paintdet

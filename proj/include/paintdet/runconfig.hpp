#pragma once

#include <cstdint>
#include <string>

#include "paintdet/codec.hpp"
#include "paintdet/data.hpp"
#include "paintdet/diffusion.hpp"
#include "paintdet/postproc.hpp"
#include "paintdet/train.hpp"
#include "paintdet/unet.hpp"

namespace paintdet {

// One JSON document that drives every subcommand. Every section has full
// defaults so an empty config file (or none) is a valid run; unknown keys
// are rejected by name.
struct RunConfig {
    SceneSpec data;
    int num_classes = 5;  // codec.num_classes (K)
    AnnotationStyle style;
    int diffusion_T = 1000;
    int ddim_steps = 50;
    float ddim_eta = 0.0f;
    UNetConfig model;
    TrainConfig train;
    PostprocConfig postproc;
    uint64_t seed = 0;

    Palette palette() const { return make_palette(num_classes); }
    NoiseSchedule schedule() const { return make_schedule(diffusion_T); }
    DdimPlan ddim_plan() const { return make_ddim_plan(diffusion_T, ddim_steps, ddim_eta); }
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

}  // namespace paintdet

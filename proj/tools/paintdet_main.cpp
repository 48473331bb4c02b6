#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "paintdet/checkpoint.hpp"
#include "paintdet/data.hpp"
#include "paintdet/detections.hpp"
#include "paintdet/errors.hpp"
#include "paintdet/metrics.hpp"
#include "paintdet/postproc.hpp"
#include "paintdet/runconfig.hpp"
#include "paintdet/train.hpp"

namespace fs = std::filesystem;
using namespace paintdet;

namespace {

RunConfig config_from(const std::string& path) {
    return path.empty() ? RunConfig{} : load_run_config(path);
}

// run an indexed loop in parallel, surfacing the first exception after the
// region ends (exceptions must not unwind out of an OpenMP region)
template <typename Fn>
void parallel_for_items(size_t n, Fn&& fn) {
    std::exception_ptr first;
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < n; ++i) {
        try {
            fn(i);
        } catch (...) {
#pragma omp critical
            if (!first) first = std::current_exception();
        }
    }
    if (first) std::rethrow_exception(first);
}

std::vector<DetectionSet> gts_of(const Dataset& ds) {
    std::vector<DetectionSet> out;
    for (const auto& item : ds.items) out.push_back({item.id, item.boxes});
    return out;
}

ImageDims dims_of(const Dataset& ds) {
    ImageDims dims;
    for (const auto& item : ds.items) dims[item.id] = {item.width, item.height};
    return dims;
}

RenderVariant parse_variant(const std::string& v) {
    if (v == "a") return RenderVariant::WhiteFullBoxes;
    if (v == "b") return RenderVariant::FullBoxes;
    if (v == "c") return RenderVariant::Shrunk;
    if (v == "d") return RenderVariant::ShrunkDots;
    throw ConfigError("render: unknown variant \"" + v + "\" (expected a|b|c|d)");
}

int cmd_gen_data(const std::string& config, const std::string& out, int count) {
    RunConfig cfg = config_from(config);
    generate_dataset(cfg.data, count, out);
    std::printf("wrote %d images to %s\n", count, out.c_str());
    return 0;
}

int cmd_render(const std::string& config, const std::string& dataset, const std::string& out,
               const std::string& variant) {
    RunConfig cfg = config_from(config);
    const Dataset ds = read_dataset(dataset);
    const Palette pal = cfg.palette();
    const RenderVariant rv = parse_variant(variant);
    fs::create_directories(out);
    parallel_for_items(ds.items.size(), [&](size_t i) {
        const Image x = load_image(ds, ds.items[i]);
        const Image y = render_annotation(x, ds.items[i].boxes, cfg.style, pal, rv);
        write_ppm(y, out + "/" + ds.items[i].file);
    });
    std::printf("rendered %zu annotation images to %s\n", ds.items.size(), out.c_str());
    return 0;
}

int cmd_train(const std::string& config, const std::string& dataset, const std::string& out,
              int steps_override, const std::string& log_path) {
    RunConfig cfg = config_from(config);
    if (steps_override > 0) cfg.train.steps = steps_override;
    const Dataset ds = read_dataset(dataset);
    const NoiseSchedule sched = cfg.schedule();
    PixelLatentCodec codec;

    UNet model(cfg.model);
    Rng init_rng(cfg.seed);
    model.init(init_rng);
    std::printf("training %zu params for %d steps on %zu images\n", model.param_count(),
                cfg.train.steps, ds.items.size());

    std::ofstream log(log_path.empty() ? out + ".log.jsonl" : log_path);
    int64_t shown = 0;
    run_training(model, ds, cfg.palette(), cfg.style, sched, cfg.train, codec, &log,
                 [&shown](int64_t step, double loss) {
                     if (step - shown >= 500) {
                         std::fprintf(stderr, "step %lld loss %.4f\n", (long long)step, loss);
                         shown = step;
                     }
                 });
    save_checkpoint(out, model);
    std::printf("checkpoint written to %s\n", out.c_str());
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& dataset, const std::string& out,
              const std::string& config, uint64_t seed, int limit, const std::string& prompt) {
    RunConfig cfg = config_from(config);
    const Dataset ds = read_dataset(dataset);
    auto model = load_checkpoint(ckpt);
    const NoiseSchedule sched = cfg.schedule();
    const DdimPlan plan = cfg.ddim_plan();
    PixelLatentCodec codec;
    const TaskPrompt p = prompt == "x" ? TaskPrompt::ReconstructX : TaskPrompt::GenerateY;
    fs::create_directories(out);

    const size_t n =
        limit > 0 ? std::min<size_t>(size_t(limit), ds.items.size()) : ds.items.size();
    for (size_t i = 0; i < n; ++i) {
        const Image x = load_image(ds, ds.items[i]);
        Rng rng = Rng(seed).fork(uint64_t(ds.items[i].id));
        const Image y = generate_annotation(x, *model, plan, sched, codec, rng, p);
        write_ppm(y, out + "/" + ds.items[i].file);
        std::fprintf(stderr, "generated %zu/%zu\r", i + 1, n);
    }
    std::fprintf(stderr, "\n");
    std::printf("wrote %zu generated images to %s\n", n, out.c_str());
    return 0;
}

int cmd_detect(const std::string& config, const std::string& dataset, const std::string& gen,
               const std::string& out, bool nms) {
    RunConfig cfg = config_from(config);
    if (nms) cfg.postproc.nms = true;
    const Dataset ds = read_dataset(dataset);
    const Palette pal = cfg.palette();
    const FeatureExtractor fx;

    std::vector<DetectionSet> results(ds.items.size());
    parallel_for_items(ds.items.size(), [&](size_t i) {
        const Image x = load_image(ds, ds.items[i]);
        const Image y = read_ppm(gen + "/" + ds.items[i].file);
        if (y.width != x.width || y.height != x.height)
            throw DataError("detect: generated image size mismatch for " + ds.items[i].file);
        results[i] = detect(ds.items[i].id, x, y, fx, pal, cfg.style, cfg.postproc);
    });
    write_detections(out, results);
    size_t total = 0;
    for (const auto& r : results) total += r.detections.size();
    std::printf("wrote %zu detections for %zu images to %s\n", total, results.size(),
                out.c_str());
    return 0;
}

int cmd_eval(const std::string& dataset, const std::string& results, bool table) {
    const Dataset ds = read_dataset(dataset);
    const auto dets = read_detections(results);
    const MetricsReport r = coco_metrics(dets, gts_of(ds), dims_of(ds));
    std::printf("%s\n", metrics_json(r).c_str());
    if (table) std::printf("%s\n", metrics_table_row(r).c_str());
    return 0;
}

int cmd_roundtrip(const std::string& config, const std::string& dataset, double shrink,
                  const std::string& out) {
    RunConfig cfg = config_from(config);
    if (shrink > 0) cfg.style.shrink_ratio = float(shrink);
    const Dataset ds = read_dataset(dataset);
    const Palette pal = cfg.palette();
    const FeatureExtractor fx;

    std::vector<DetectionSet> results(ds.items.size());
    parallel_for_items(ds.items.size(), [&](size_t i) {
        const Image x = load_image(ds, ds.items[i]);
        const Image y = render_annotation(x, ds.items[i].boxes, cfg.style, pal);
        results[i] = detect(ds.items[i].id, x, y, fx, pal, cfg.style, cfg.postproc);
    });
    if (!out.empty()) write_detections(out, results);

    const auto gts = gts_of(ds);
    const MetricsReport r = coco_metrics(results, gts, dims_of(ds));
    const double ap90 = average_precision(results, gts, 0.90);
    const int confusions = count_class_confusions(results, gts);
    std::printf("shrink_ratio %.4f\n", cfg.style.shrink_ratio);
    std::printf("AP50 %.3f\n", r.ap50);
    std::printf("AP90 %.3f\n", ap90);
    std::printf("class_confusions %d\n", confusions);
    std::printf("%s\n", metrics_table_row(r).c_str());
    std::printf("%s\n", metrics_json(r).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"generation-based object detection: paint, learn, decode"};
    app.require_subcommand(1);

    std::string config, dataset, out, ckpt, gen, results, variant = "d", log_path, prompt = "y";
    int count = 100, steps = 0, limit = 0;
    uint64_t seed = 0;
    bool nms = false, table = false;
    double shrink = 0.0;

    auto* g = app.add_subcommand("gen-data", "generate a synthetic shapes dataset");
    g->add_option("--config", config, "run config JSON");
    g->add_option("--out", out, "output dataset directory")->required();
    g->add_option("--count", count, "number of images");

    auto* r = app.add_subcommand("render", "render clean annotation images (codec only)");
    r->add_option("--config", config, "run config JSON");
    r->add_option("--dataset", dataset, "dataset directory")->required();
    r->add_option("--out", out, "output directory")->required();
    r->add_option("--variant", variant, "target variant: a|b|c|d (default d)");

    auto* t = app.add_subcommand("train", "train the denoiser");
    t->add_option("--config", config, "run config JSON");
    t->add_option("--dataset", dataset, "dataset directory")->required();
    t->add_option("--out", ckpt, "output checkpoint path")->required();
    t->add_option("--steps", steps, "override train.steps");
    t->add_option("--log", log_path, "JSONL log path (default: <ckpt>.log.jsonl)");

    auto* i = app.add_subcommand("infer", "generate annotation images with a checkpoint");
    i->add_option("--ckpt", ckpt, "checkpoint path")->required();
    i->add_option("--dataset", dataset, "dataset directory")->required();
    i->add_option("--out", out, "output directory")->required();
    i->add_option("--config", config, "run config JSON");
    i->add_option("--seed", seed, "sampling seed");
    i->add_option("--limit", limit, "only the first N images");
    i->add_option("--prompt", prompt, "task prompt: y (annotation) or x (reconstruction)");

    auto* d = app.add_subcommand("detect", "decode generated images into detections");
    d->add_option("--config", config, "run config JSON");
    d->add_option("--dataset", dataset, "dataset directory")->required();
    d->add_option("--gen", gen, "directory of generated images")->required();
    d->add_option("--out", results, "output detections JSON")->required();
    d->add_flag("--nms", nms, "greedy IoU-0.5 suppression per class");

    auto* e = app.add_subcommand("eval", "score detections against the dataset");
    e->add_option("--dataset", dataset, "dataset directory")->required();
    e->add_option("--results", results, "detections JSON")->required();
    e->add_flag("--table", table, "also print a table-style row");

    auto* rt = app.add_subcommand("roundtrip", "render + detect + eval without a model");
    rt->add_option("--config", config, "run config JSON");
    rt->add_option("--dataset", dataset, "dataset directory")->required();
    rt->add_option("--shrink", shrink, "override codec shrink ratio");
    rt->add_option("--out", results, "also write detections JSON");

    try {
        app.parse(argc, argv);
        if (g->parsed()) return cmd_gen_data(config, out, count);
        if (r->parsed()) return cmd_render(config, dataset, out, variant);
        if (t->parsed()) return cmd_train(config, dataset, ckpt, steps, log_path);
        if (i->parsed()) return cmd_infer(ckpt, dataset, out, config, seed, limit, prompt);
        if (d->parsed()) return cmd_detect(config, dataset, gen, results, nms);
        if (e->parsed()) return cmd_eval(dataset, results, table);
        if (rt->parsed()) return cmd_roundtrip(config, dataset, shrink, results);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 1;  // usage errors map to exit 1
    } catch (const ConfigError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 1;
    } catch (const DataError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    } catch (const NumericError& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 3;
    }
    return 0;
}

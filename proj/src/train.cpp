#include "paintdet/train.hpp"

#include <chrono>
#include <cmath>

#include "paintdet/errors.hpp"

namespace paintdet {

void TrainConfig::validate() const {
    if (!(lr > 0.0f)) throw ConfigError("TrainConfig: lr must be > 0");
    if (batch_size != 1) throw ConfigError("TrainConfig: batch_size is fixed at 1");
    if (steps < 1) throw ConfigError("TrainConfig: steps must be >= 1");
    for (float p : {flip_prob, prompt_y_prob})
        if (p < 0.0f || p > 1.0f) throw ConfigError("TrainConfig: probabilities must be in [0,1]");
    if (multires_strength < 0.0f || multires_strength >= 1.0f)
        throw ConfigError("TrainConfig: multires_strength must be in [0,1)");
    if (lambda1 < 0.0f || lambda2 < 0.0f) throw ConfigError("TrainConfig: lambdas must be >= 0");
}

Image hflip(const Image& img) {
    Image out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) out.set(img.width - 1 - x, y, img.rgb(x, y));
    return out;
}

double psnr(const Image& a, const Image& b) {
    double mse = 0.0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = double(a.pixels[i]) - double(b.pixels[i]);
        mse += d * d;
    }
    mse /= double(a.pixels.size());
    if (mse <= 0.0) return 99.0;
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

Trainer::Trainer(UNet& model, const NoiseSchedule& sched, const TrainConfig& cfg,
                 const LatentCodec& codec)
    : model_(model), sched_(sched), cfg_(cfg), codec_(codec), rng_(cfg.seed) {
    cfg_.validate();
    adam_.lr = cfg_.lr;
}

double Trainer::train_step(const TrainSample& sample) {
    if (sample.x.width != sample.y.width || sample.x.height != sample.y.height)
        throw ConfigError("train_step: x and y dimensions differ");

    const bool flip = rng_.bernoulli(cfg_.flip_prob);
    const Image& x = flip ? hflip(sample.x) : sample.x;
    const Image& y = flip ? hflip(sample.y) : sample.y;

    const Tensor z_x = codec_.encode(x);
    const TaskPrompt p =
        rng_.bernoulli(cfg_.prompt_y_prob) ? TaskPrompt::GenerateY : TaskPrompt::ReconstructX;
    const Tensor z_m = p == TaskPrompt::GenerateY ? codec_.encode(y) : z_x;

    const int t = rng_.uniform_int(1, sched_.T);
    last_t_ = t;
    last_prompt_ = p;

    const Tensor eps = multires_noise(z_m.shape, cfg_.multires_strength, rng_);
    const Tensor z_t = forward_diffuse(z_m, t, eps, sched_);
    const Tensor v_true = v_target(z_m, eps, t, sched_);

    Tensor v_pred = model_.forward(z_t, z_x, t, p);
    const Tensor z0_pred = predict_z0_from_v(z_t, v_pred, t, sched_);

    TotalLossGrads g =
        total_loss_grads(v_pred, v_true, z0_pred, z_m, t, cfg_.lambda1, cfg_.lambda2);
    if (!std::isfinite(g.loss))
        throw NumericError("train_step: non-finite loss at step " + std::to_string(step_) +
                           " (t = " + std::to_string(t) + ")");

    // chain the gradient-loss term through z0_hat = sqrt(ab) z_t - sqrt(1-ab) v
    const float b = std::sqrt(1.0f - sched_.alpha_bar(t));
    if (cfg_.lambda2 > 0.0f)
        for (size_t i = 0; i < g.d_v_pred.numel(); ++i) g.d_v_pred[i] -= b * g.d_z0_pred[i];

    model_.zero_grads();
    model_.backward(g.d_v_pred);
    for (Param* prm : model_.params()) adam_step(*prm, adam_);
    ++step_;
    return g.loss;
}

Image generate_annotation(const Image& x, const DenoiseFn& model, int latent_channels,
                          const DdimPlan& plan, const NoiseSchedule& sched,
                          const LatentCodec& codec, Rng& rng, TaskPrompt p) {
    const Tensor z_x = codec.encode(x);
    Tensor z({1, latent_channels, x.height, x.width});
    z.fill_gaussian(rng);

    const auto& taus = plan.taus;
    for (int i = int(taus.size()) - 1; i >= 0; --i) {
        const int tau = taus[size_t(i)];
        const int tau_prev = i > 0 ? taus[size_t(i - 1)] : 0;
        const Tensor v = model(z, z_x, tau, p);
        z = ddim_step(z, v, tau, tau_prev, plan, sched, rng);
    }
    return codec.decode(z);
}

Image generate_annotation(const Image& x, UNet& model, const DdimPlan& plan,
                          const NoiseSchedule& sched, const LatentCodec& codec, Rng& rng,
                          TaskPrompt p) {
    return generate_annotation(
        x,
        [&model](const Tensor& z, const Tensor& zx, int t, TaskPrompt pr) {
            return model.forward(z, zx, t, pr);
        },
        model.config().out_channels, plan, sched, codec, rng, p);
}

std::vector<double> run_training(UNet& model, const Dataset& ds, const Palette& palette,
                                 const AnnotationStyle& style, const NoiseSchedule& sched,
                                 const TrainConfig& cfg, const LatentCodec& codec,
                                 std::ostream* log,
                                 const std::function<void(int64_t, double)>& progress) {
    if (ds.items.empty()) throw DataError("run_training: empty dataset");

    // pre-render the annotation targets once
    std::vector<TrainSample> samples(ds.items.size());
    std::exception_ptr first;
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < ds.items.size(); ++i) {
        try {
            samples[i].x = load_image(ds, ds.items[i]);
            samples[i].y = render_annotation(samples[i].x, ds.items[i].boxes, style, palette);
        } catch (...) {
#pragma omp critical
            if (!first) first = std::current_exception();
        }
    }
    if (first) std::rethrow_exception(first);

    Trainer trainer(model, sched, cfg, codec);
    Rng pick_rng(cfg.seed ^ 0x5eedb0a7d5eedb0aull);
    std::vector<double> losses;
    losses.reserve(size_t(cfg.steps));
    for (int s = 0; s < cfg.steps; ++s) {
        const int idx = pick_rng.uniform_int(0, int(samples.size()) - 1);
        const auto t0 = std::chrono::steady_clock::now();
        const double loss = trainer.train_step(samples[size_t(idx)]);
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        losses.push_back(loss);
        if (log)
            (*log) << "{\"step\":" << trainer.steps_done() << ",\"t\":" << trainer.last_t()
                   << ",\"prompt\":\"" << prompt_name(trainer.last_prompt())
                   << "\",\"loss\":" << loss << ",\"wall_ms\":" << ms << "}\n";
        if (progress) progress(trainer.steps_done(), loss);
    }
    return losses;
}

}  // namespace paintdet

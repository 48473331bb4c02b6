#include "paintdet/unet.hpp"

#include <cmath>

#include "paintdet/errors.hpp"

namespace paintdet {

void UNetConfig::validate() const {
    if (out_channels < 1 || in_channels <= out_channels)
        throw ConfigError("UNetConfig: need in_channels > out_channels >= 1");
    if (base_width < groups || channel_mult.empty() || res_blocks < 1)
        throw ConfigError("UNetConfig: invalid width/mult/res_blocks");
    for (int m : channel_mult)
        if ((base_width * m) % groups != 0)
            throw ConfigError("UNetConfig: width " + std::to_string(base_width * m) +
                              " not divisible by " + std::to_string(groups) + " groups");
    if (embed_dim < 2 || embed_dim % 2 != 0)
        throw ConfigError("UNetConfig: embed_dim must be even and >= 2");
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const int N = a.shape[0], H = a.shape[2], W = a.shape[3];
    if (b.shape[0] != N || b.shape[2] != H || b.shape[3] != W)
        throw ConfigError("concat_channels: spatial mismatch " + a.shape_str() + " vs " +
                          b.shape_str());
    const int Ca = a.shape[1], Cb = b.shape[1];
    Tensor out({N, Ca + Cb, H, W});
    const size_t plane = size_t(H) * W;
    for (int n = 0; n < N; ++n) {
        std::copy(a.data.begin() + size_t(n) * Ca * plane,
                  a.data.begin() + size_t(n + 1) * Ca * plane,
                  out.data.begin() + size_t(n) * (Ca + Cb) * plane);
        std::copy(b.data.begin() + size_t(n) * Cb * plane,
                  b.data.begin() + size_t(n + 1) * Cb * plane,
                  out.data.begin() + (size_t(n) * (Ca + Cb) + Ca) * plane);
    }
    return out;
}

void split_channels(const Tensor& d, int first_ch, Tensor& da, Tensor& db) {
    const int N = d.shape[0], C = d.shape[1], H = d.shape[2], W = d.shape[3];
    const int Cb = C - first_ch;
    da = Tensor({N, first_ch, H, W});
    db = Tensor({N, Cb, H, W});
    const size_t plane = size_t(H) * W;
    for (int n = 0; n < N; ++n) {
        std::copy(d.data.begin() + size_t(n) * C * plane,
                  d.data.begin() + size_t(n) * C * plane + size_t(first_ch) * plane,
                  da.data.begin() + size_t(n) * first_ch * plane);
        std::copy(d.data.begin() + (size_t(n) * C + first_ch) * plane,
                  d.data.begin() + size_t(n + 1) * C * plane,
                  db.data.begin() + size_t(n) * Cb * plane);
    }
}

ResBlock::ResBlock(const std::string& name, int in_ch, int out_ch, int embed_dim, int groups)
    : gn1_(name + ".gn1", in_ch, std::min(groups, in_ch)),
      gn2_(name + ".gn2", out_ch, std::min(groups, out_ch)),
      conv1_(name + ".conv1", in_ch, out_ch, 3, 1, 1),
      conv2_(name + ".conv2", out_ch, out_ch, 3, 1, 1),
      emb_proj_(name + ".emb", embed_dim, out_ch),
      has_skip_(in_ch != out_ch) {
    if (has_skip_) skip_ = Conv2d(name + ".skip", in_ch, out_ch, 1, 1, 0);
}

void ResBlock::init(Rng& rng) {
    conv1_.init_gaussian(rng, 0.02f);
    conv2_.init_gaussian(rng, 0.02f);
    emb_proj_.init_gaussian(rng, 0.02f);
    if (has_skip_) skip_.init_gaussian(rng, 0.02f);
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& emb) {
    cached_x_ = x;
    Tensor h = conv1_.forward(act1_.forward(gn1_.forward(x)));
    const Tensor bias = emb_proj_.forward(act_emb_.forward(emb));
    const int C = h.shape[1];
    const size_t plane = size_t(h.shape[2]) * h.shape[3];
    for (int c = 0; c < C; ++c) {
        float* p = h.data.data() + size_t(c) * plane;
        const float bv = bias[size_t(c)];
#pragma omp simd
        for (size_t i = 0; i < plane; ++i) p[i] += bv;
    }
    Tensor out = conv2_.forward(act2_.forward(gn2_.forward(h)));
    const Tensor sk = has_skip_ ? skip_.forward(x) : x;
    for (size_t i = 0; i < out.numel(); ++i) out[i] += sk[i];
    return out;
}

Tensor ResBlock::backward(const Tensor& dy, Tensor& demb) {
    Tensor dh = gn2_.backward(act2_.backward(conv2_.backward(dy)));

    // embedding bias: reduce over spatial positions per channel
    const int C = dh.shape[1];
    const size_t plane = size_t(dh.shape[2]) * dh.shape[3];
    Tensor dbias({C});
    for (int c = 0; c < C; ++c) {
        const float* p = dh.data.data() + size_t(c) * plane;
        float s = 0.0f;
#pragma omp simd reduction(+ : s)
        for (size_t i = 0; i < plane; ++i) s += p[i];
        dbias[size_t(c)] = s;
    }
    const Tensor de = act_emb_.backward(emb_proj_.backward(dbias));
    for (size_t i = 0; i < demb.numel(); ++i) demb[i] += de[i];

    Tensor dx = gn1_.backward(act1_.backward(conv1_.backward(dh)));
    if (has_skip_) {
        const Tensor ds = skip_.backward(dy);
        for (size_t i = 0; i < dx.numel(); ++i) dx[i] += ds[i];
    } else {
        for (size_t i = 0; i < dx.numel(); ++i) dx[i] += dy[i];
    }
    return dx;
}

void ResBlock::collect(std::vector<Param*>& out) {
    out.push_back(&gn1_.gamma);
    out.push_back(&gn1_.beta);
    out.push_back(&conv1_.w);
    out.push_back(&conv1_.b);
    out.push_back(&emb_proj_.w);
    out.push_back(&emb_proj_.b);
    out.push_back(&gn2_.gamma);
    out.push_back(&gn2_.beta);
    out.push_back(&conv2_.w);
    out.push_back(&conv2_.b);
    if (has_skip_) {
        out.push_back(&skip_.w);
        out.push_back(&skip_.b);
    }
}

UNet::UNet(const UNetConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int L = cfg_.levels();
    for (int m : cfg_.channel_mult) widths_.push_back(cfg_.base_width * m);

    stem_ = Conv2d("stem", cfg_.in_channels, cfg_.base_width, 3, 1, 1);

    int cur = cfg_.base_width;
    down_blocks_.resize(size_t(L));
    for (int i = 0; i < L; ++i) {
        for (int j = 0; j < cfg_.res_blocks; ++j) {
            down_blocks_[size_t(i)].emplace_back(
                "down" + std::to_string(i) + "." + std::to_string(j), cur, widths_[size_t(i)],
                cfg_.embed_dim, cfg_.groups);
            cur = widths_[size_t(i)];
        }
        if (i < L - 1)
            down_convs_.emplace_back("downsample" + std::to_string(i), cur, cur, 3, 2, 1);
    }
    mid_ = ResBlock("mid", cur, cur, cfg_.embed_dim, cfg_.groups);

    up_blocks_.resize(size_t(L));
    for (int i = L - 1; i >= 0; --i) {
        // decoder head at level i carries widths_[i] channels (mid output at
        // the bottom, the upsample conv output elsewhere); concat doubles it
        int in_ch = 2 * widths_[size_t(i)];
        for (int j = 0; j < cfg_.res_blocks; ++j) {
            up_blocks_[size_t(i)].emplace_back(
                "up" + std::to_string(i) + "." + std::to_string(j), in_ch, widths_[size_t(i)],
                cfg_.embed_dim, cfg_.groups);
            in_ch = widths_[size_t(i)];
        }
    }
    up_convs_.reserve(size_t(L - 1));
    for (int i = 0; i < L - 1; ++i)
        up_convs_.emplace_back("upsample" + std::to_string(i), widths_[size_t(i + 1)],
                               widths_[size_t(i)], 3, 1, 1);

    out_gn_ = GroupNorm("out.gn", widths_[0], std::min(cfg_.groups, widths_[0]));
    out_act_ = SiLU();
    out_conv_ = Conv2d("out.conv", widths_[0], cfg_.out_channels, 3, 1, 1);

    t_mlp1_ = Linear("temb.l1", cfg_.embed_dim, cfg_.embed_dim);
    t_mlp2_ = Linear("temb.l2", cfg_.embed_dim, cfg_.embed_dim);
    p_mlp1_ = Linear("pemb.l1", cfg_.embed_dim, cfg_.embed_dim);
    p_mlp2_ = Linear("pemb.l2", cfg_.embed_dim, cfg_.embed_dim);
}

void UNet::init(Rng& rng) {
    stem_.init_gaussian(rng, 0.02f);
    for (auto& level : down_blocks_)
        for (auto& b : level) b.init(rng);
    for (auto& c : down_convs_) c.init_gaussian(rng, 0.02f);
    mid_.init(rng);
    for (auto& level : up_blocks_)
        for (auto& b : level) b.init(rng);
    for (auto& c : up_convs_) c.init_gaussian(rng, 0.02f);
    t_mlp1_.init_gaussian(rng, 0.02f);
    t_mlp2_.init_gaussian(rng, 0.02f);
    p_mlp1_.init_gaussian(rng, 0.02f);
    p_mlp2_.init_gaussian(rng, 0.02f);
    // zero-init the final conv so the initial v prediction is zero
    out_conv_.w.value.fill(0.0f);
    out_conv_.b.value.fill(0.0f);
}

Tensor UNet::embedding(int t, TaskPrompt p) {
    const Tensor te = t_mlp2_.forward(t_act_.forward(t_mlp1_.forward(
        sinusoidal_embedding(float(t), cfg_.embed_dim))));
    const Tensor pe = p_mlp2_.forward(p_act_.forward(p_mlp1_.forward(
        sinusoidal_embedding(float(int(p)), cfg_.embed_dim))));
    Tensor e(te.shape);
    for (size_t i = 0; i < e.numel(); ++i) e[i] = te[i] + pe[i];
    return e;
}

Tensor UNet::forward(const Tensor& z_noisy, const Tensor& z_cond, int t, TaskPrompt p) {
    if (z_noisy.shape.size() != 4 || z_cond.shape.size() != 4 ||
        z_noisy.shape[2] != z_cond.shape[2] || z_noisy.shape[3] != z_cond.shape[3])
        throw ConfigError("UNet::forward: misaligned inputs " + z_noisy.shape_str() + " vs " +
                          z_cond.shape_str());
    if (z_noisy.shape[1] != cfg_.out_channels ||
        z_cond.shape[1] != cfg_.in_channels - cfg_.out_channels)
        throw ConfigError("UNet::forward: channel counts do not match config");
    const int div = 1 << (cfg_.levels() - 1);
    if (z_noisy.shape[2] % div != 0 || z_noisy.shape[3] % div != 0)
        throw ConfigError("UNet::forward: spatial size must be divisible by " +
                          std::to_string(div));

    emb_ = embedding(t, p);
    const int L = cfg_.levels();

    Tensor h = stem_.forward(concat_channels(z_cond, z_noisy));
    std::vector<Tensor> skips(static_cast<size_t>(L));
    for (int i = 0; i < L; ++i) {
        for (auto& b : down_blocks_[size_t(i)]) h = b.forward(h, emb_);
        skips[size_t(i)] = h;
        if (i < L - 1) h = down_convs_[size_t(i)].forward(h);
    }
    h = mid_.forward(h, emb_);

    concat_first_ch_.assign(size_t(L), 0);
    for (int i = L - 1; i >= 0; --i) {
        concat_first_ch_[size_t(i)] = h.shape[1];
        h = concat_channels(h, skips[size_t(i)]);
        for (auto& b : up_blocks_[size_t(i)]) h = b.forward(h, emb_);
        if (i > 0) h = up_convs_[size_t(i - 1)].forward(upsample2x(h));
    }
    return out_conv_.forward(out_act_.forward(out_gn_.forward(h)));
}

void UNet::backward(const Tensor& d_out) {
    const int L = cfg_.levels();
    Tensor demb(emb_.shape);

    Tensor g = out_gn_.backward(out_act_.backward(out_conv_.backward(d_out)));

    std::vector<Tensor> skip_grads(static_cast<size_t>(L));
    for (int i = 0; i < L; ++i) {
        if (i > 0) g = upsample2x_backward(up_convs_[size_t(i - 1)].backward(g));
        for (auto it = up_blocks_[size_t(i)].rbegin(); it != up_blocks_[size_t(i)].rend(); ++it)
            g = it->backward(g, demb);
        Tensor gh;
        split_channels(g, concat_first_ch_[size_t(i)], gh, skip_grads[size_t(i)]);
        g = std::move(gh);
    }

    g = mid_.backward(g, demb);
    for (int i = L - 1; i >= 0; --i) {
        if (i < L - 1) g = down_convs_[size_t(i)].backward(g);
        for (size_t k = 0; k < skip_grads[size_t(i)].numel(); ++k)
            g[k] += skip_grads[size_t(i)][k];
        for (auto it = down_blocks_[size_t(i)].rbegin(); it != down_blocks_[size_t(i)].rend();
             ++it)
            g = it->backward(g, demb);
    }
    stem_.backward(g);

    t_mlp1_.backward(t_act_.backward(t_mlp2_.backward(demb)));
    p_mlp1_.backward(p_act_.backward(p_mlp2_.backward(demb)));
}

std::vector<Param*> UNet::params() {
    std::vector<Param*> out;
    out.push_back(&stem_.w);
    out.push_back(&stem_.b);
    for (auto& level : down_blocks_)
        for (auto& b : level) b.collect(out);
    for (auto& c : down_convs_) {
        out.push_back(&c.w);
        out.push_back(&c.b);
    }
    mid_.collect(out);
    for (auto& level : up_blocks_)
        for (auto& b : level) b.collect(out);
    for (auto& c : up_convs_) {
        out.push_back(&c.w);
        out.push_back(&c.b);
    }
    out.push_back(&out_gn_.gamma);
    out.push_back(&out_gn_.beta);
    out.push_back(&out_conv_.w);
    out.push_back(&out_conv_.b);
    out.push_back(&t_mlp1_.w);
    out.push_back(&t_mlp1_.b);
    out.push_back(&t_mlp2_.w);
    out.push_back(&t_mlp2_.b);
    out.push_back(&p_mlp1_.w);
    out.push_back(&p_mlp1_.b);
    out.push_back(&p_mlp2_.w);
    out.push_back(&p_mlp2_.b);
    return out;
}

size_t UNet::param_count() {
    size_t n = 0;
    for (Param* p : params()) n += p->value.numel();
    return n;
}

void UNet::zero_grads() {
    for (Param* p : params()) p->zero_grad();
}

}  // namespace paintdet

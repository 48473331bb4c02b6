// Compares the OpenMP kernels against the serial reference implementations.

#include <chrono>
#include <cstdio>
#include <string>

#include "paintdet/nn.hpp"
#include "paintdet/postproc.hpp"
#include "paintdet/rng.hpp"
#include "reference/reference.hpp"

using namespace paintdet;

namespace {

template <typename Fn>
double time_ms(Fn&& fn, int iters) {
    fn();  // warmup
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < iters; ++i) fn();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
               .count() /
           iters;
}

void bench_conv(int C, int O, int HW, int iters) {
    Rng rng(1);
    Tensor in({1, C, HW, HW});
    in.fill_gaussian(rng);
    Tensor w({O, C, 3, 3});
    w.fill_gaussian(rng, 0.1f);
    Tensor b({O});

    Tensor out;
    const double fast = time_ms([&] { out = conv2d(in, w, b, 1, 1); }, iters);
    const double ref = time_ms([&] { out = reference::conv2d_serial(in, w, b, 1, 1); },
                               std::max(1, iters / 8));
    const double gflop = 2.0 * out.numel() * C * 9 / 1e9;
    std::printf("conv2d %3dx%-3d @%3d^2 | omp %8.3f ms (%5.1f GF/s) | serial %8.3f ms | x%.1f\n",
                C, O, HW, fast, gflop / (fast / 1e3), ref, ref / fast);

    Tensor din, dw(w.shape), db(b.shape);
    const double bwd =
        time_ms([&] { conv2d_backward(in, w, 1, 1, out, din, dw, db); }, iters);
    std::printf("  backward              | omp %8.3f ms (%5.1f GF/s)\n", bwd,
                2.0 * gflop / (bwd / 1e3));
}

void bench_dbscan(int n_points, int iters) {
    Rng rng(7);
    std::vector<PixelCoord> pts;
    for (int b = 0; b < 6; ++b) {
        const int cx = rng.uniform_int(10, 110), cy = rng.uniform_int(10, 110);
        for (int i = 0; i < n_points / 6; ++i)
            pts.push_back({cx + int(std::lround(rng.gaussian() * 4)),
                           cy + int(std::lround(rng.gaussian() * 4))});
    }
    const double fast = time_ms([&] { dbscan(pts, 3.0, 8); }, iters);
    const double ref = time_ms([&] { reference::dbscan_serial(pts, 3.0, 8); },
                               std::max(1, iters / 8));
    std::printf("dbscan %5zu pts        | grid %7.3f ms | serial %8.3f ms | x%.1f\n",
                pts.size(), fast, ref, ref / fast);
}

}  // namespace

int main(int argc, char** argv) {
    const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
    const int iters = quick ? 5 : 30;
    std::printf("== conv kernels (3x3, stride 1, pad 1) ==\n");
    bench_conv(16, 16, 64, iters);
    bench_conv(32, 32, 32, iters);
    bench_conv(64, 64, 16, iters);
    std::printf("== clustering ==\n");
    bench_dbscan(600, iters);
    bench_dbscan(3000, std::max(1, iters / 5));
    return 0;
}

#include "scatterflow/grad.hpp"
#include "scatterflow/rng.hpp"

#include <benchmark/benchmark.h>

using sf::grad::Array;

namespace {

struct Problem {
    int bs, ci, co, h, w;
    Array x, wgt, b, out;
};

Problem make_problem(int bs, int c, int hw) {
    Problem p{bs, c, c, hw, hw, Array(bs * c * hw * hw), Array(c * c * 9), Array(c),
              Array(bs * c * hw * hw)};
    sf::NormalRng rng(9);
    for (int i = 0; i < p.x.size(); ++i) p.x[i] = rng.normal();
    for (int i = 0; i < p.wgt.size(); ++i) p.wgt[i] = 0.1 * rng.normal();
    for (int i = 0; i < p.b.size(); ++i) p.b[i] = 0.1 * rng.normal();
    return p;
}

void bm_conv_serial(benchmark::State& state) {
    Problem p = make_problem(static_cast<int>(state.range(0)), 32, 16);
    for (auto _ : state) {
        sf::grad::conv2d_forward_serial(p.x, p.wgt, p.b, p.bs, p.ci, p.co, p.h, p.w, p.out);
        benchmark::DoNotOptimize(p.out.data());
    }
}

void bm_conv_omp(benchmark::State& state) {
    Problem p = make_problem(static_cast<int>(state.range(0)), 32, 16);
    for (auto _ : state) {
        sf::grad::conv2d_forward_omp(p.x, p.wgt, p.b, p.bs, p.ci, p.co, p.h, p.w, p.out);
        benchmark::DoNotOptimize(p.out.data());
    }
}

}  // namespace

BENCHMARK(bm_conv_serial)->Arg(1)->Arg(8)->Arg(64);
BENCHMARK(bm_conv_omp)->Arg(1)->Arg(8)->Arg(64);

BENCHMARK_MAIN();

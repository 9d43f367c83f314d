#include "dfdgcn/dft.hpp"
#include "dfdgcn/model.hpp"
#include "dfdgcn/train.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

using namespace dfdgcn;

namespace {

Tensor uniform(Shape shape, std::mt19937_64 &rng) {
	std::uniform_real_distribution<double> dist(-1.0, 1.0);
	Tensor t(std::move(shape));
	for (auto &v : t.data())
		v = dist(rng);
	return t;
}

Tensor stochastic(std::size_t n, std::mt19937_64 &rng) {
	std::uniform_real_distribution<double> dist(0.05, 1.0);
	Tensor a({n, n});
	for (std::size_t i = 0; i < n; ++i) {
		double s = 0.0;
		for (std::size_t j = 0; j < n; ++j)
			s += a.at(i, j) = dist(rng);
		for (std::size_t j = 0; j < n; ++j)
			a.at(i, j) /= s;
	}
	return a;
}

void BM_DftReal(benchmark::State &state) {
	std::mt19937_64 rng(1);
	std::vector<double> x(static_cast<std::size_t>(state.range(0)));
	for (auto &v : x)
		v = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
	for (auto _ : state)
		benchmark::DoNotOptimize(dft_real(x));
}
BENCHMARK(BM_DftReal)->Arg(12)->Arg(288);

void BM_GraphConvolution(benchmark::State &state) {
	const auto n = static_cast<std::size_t>(state.range(0));
	const std::size_t c = 32, t = 12, k_hops = 2;
	std::mt19937_64 rng(2);
	const Tensor x = uniform({c, n, t}, rng);
	const Tensor a = stochastic(n, rng), b = stochastic(n, rng);
	std::vector<Tensor> weights;
	for (std::size_t i = 0; i < 2 * (k_hops + 1); ++i)
		weights.push_back(uniform({c, c}, rng));
	const Tensor bias = uniform({c}, rng);
	for (auto _ : state) {
		Tape tape;
		GraphSet graphs;
		graphs.active = GraphMode::parse("D+SA");
		graphs.a_adt = tape.constant(a);
		graphs.a_dyn = tape.constant(b);
		DiffusionWeights w;
		for (std::size_t k = 0; k <= k_hops; ++k) {
			w.hops[static_cast<std::size_t>(Branch::Adaptive)].push_back(tape.constant(weights[k]));
			w.hops[static_cast<std::size_t>(Branch::Dynamic)].push_back(tape.constant(weights[k_hops + 1 + k]));
		}
		w.bias = tape.constant(bias);
		benchmark::DoNotOptimize(tape.value(graph_convolution(tape, tape.constant(x), graphs, w, k_hops)));
	}
}
BENCHMARK(BM_GraphConvolution)->Arg(20)->Arg(170)->Unit(benchmark::kMicrosecond);

void BM_ForwardBackward(benchmark::State &state) {
	const auto n = static_cast<std::size_t>(state.range(0));
	ModelConfig mc;
	mc.n_nodes = n;
	mc.graph_mode = GraphMode::parse("D+SA");
	const DfdgcnModel model(mc);
	std::mt19937_64 rng(3);
	const Tensor window = uniform({n, 1, 12}, rng);
	Tensor target = uniform({n, 12}, rng);
	for (auto &v : target.data())
		v += 2.0;
	for (auto _ : state) {
		Tape tape;
		const auto bound = model.params().bind(tape);
		Var pred = model.forward(tape, bound, window, 100, 2);
		tape.backward(ad::masked_abs_sum(tape, pred, target, 1.0));
		benchmark::DoNotOptimize(tape.grad(bound.front()));
	}
}
BENCHMARK(BM_ForwardBackward)->Arg(20)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();

#include <benchmark/benchmark.h>

#include <vector>

#include "five/dataset.hpp"
#include "five/evaluate.hpp"
#include "five/kernels.hpp"
#include "five/model.hpp"
#include "five/rng.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  five::Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1);
  const auto b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      five::kernels::parallel::matmul(a, b, c, n, n, n);
    else
      five::kernels::serial::matmul(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
  state.counters["threads"] = five::kernels::max_threads();
}

template <bool Parallel>
void BM_MatmulNT(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 3);
  const auto b = random_values(n * n, 4);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      five::kernels::parallel::matmul_nt(a, b, c, n, n, n);
    else
      five::kernels::serial::matmul_nt(a, b, c, n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

struct BagFixture {
  five::InMemoryDataset data;
  five::FiveModel model;
};

BagFixture& bag_fixture() {
  static BagFixture f = [] {
    five::DatasetOptions opt;
    opt.bags_per_class = 32;
    opt.split_counts = std::array<std::size_t, 3>{16, 0, 16};
    auto data = five::make_dataset(five::coarse_spec(), opt);
    five::FiveModel model(five::desk_preset(), data.vocabulary);
    model.init(0);
    return BagFixture{std::move(data), std::move(model)};
  }();
  return f;
}

template <bool Parallel>
void BM_BagFeatures(benchmark::State& state) {
  auto& f = bag_fixture();
  for (auto _ : state) {
    auto v = five::bag_features(f.model, f.data.test, Parallel);
    benchmark::DoNotOptimize(v.data().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * f.data.test.size()));
}

}  // namespace

BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_MatmulNT<false>)->Name("matmul_nt/serial")->Arg(256);
BENCHMARK(BM_MatmulNT<true>)->Name("matmul_nt/parallel")->Arg(256);
BENCHMARK(BM_BagFeatures<false>)->Name("bag_features/serial");
BENCHMARK(BM_BagFeatures<true>)->Name("bag_features/parallel");

BENCHMARK_MAIN();

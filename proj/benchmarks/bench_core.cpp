#include <benchmark/benchmark.h>

#include "moma/gradcheck.hpp"
#include "moma/ops.hpp"
#include "moma/trainer.hpp"

using namespace moma;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng,
                     bool requires_grad = false) {
  std::vector<double> values(rows * cols);
  for (double& v : values) v = rng.gaussian();
  return Tensor::from_values({rows, cols}, std::move(values), requires_grad);
}

RunConfig bench_config() {
  RunConfig config;
  config.regime = TaskKind::same;
  config.input_dim = 16;
  config.source_classes = 4;
  config.target_classes = 4;
  config.target_train = 64;
  config.embed_dim = 32;
  config.proj_dim = 16;
  config.heads = 4;
  config.encoder_hidden = {32};
  config.queue_size = 256;
  config.batch_size = 16;
  config.epochs = 1;
  config.seed = 1;
  return config;
}

void BM_MatmulForward(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1, "bench-matmul");
  Tensor a = random_matrix(n, n, rng);
  Tensor b = random_matrix(n, n, rng);
  for (auto _ : state) {
    Tape tape;
    Tensor c = matmul(tape, a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MatmulForward)->RangeMultiplier(2)->Range(16, 128)->Complexity();

void BM_MatmulBackward(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(2, "bench-matmul-bw");
  Tensor a = random_matrix(n, n, rng, true);
  Tensor b = random_matrix(n, n, rng, true);
  for (auto _ : state) {
    a.clear_grad();
    b.clear_grad();
    Tape tape;
    Tensor loss = sum_all(tape, matmul(tape, a, b));
    tape.backward(loss);
    benchmark::DoNotOptimize(a.grad().data());
  }
}
BENCHMARK(BM_MatmulBackward)->RangeMultiplier(2)->Range(16, 64);

void BM_AttentionForward(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  ModelConfig mc;
  mc.input_dim = 16;
  mc.embed_dim = 32;
  mc.proj_dim = 32;
  mc.heads = 4;
  mc.num_classes = 4;
  Rng rng(3, "bench-att");
  ModelStack stack = ModelStack::build(mc, rng);
  Tensor z = random_matrix(batch, 32, rng);
  for (auto _ : state) {
    Tape tape;
    Tensor out = stack.attend(tape, z);
    benchmark::DoNotOptimize(out.values().data());
  }
}
BENCHMARK(BM_AttentionForward)->RangeMultiplier(2)->Range(8, 64);

void BM_InfoNce(benchmark::State& state) {
  const std::size_t fill = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 32;
  Rng rng(4, "bench-nce");
  NegativeQueue queue(fill, dim, false);
  queue.enqueue_dequeue(random_matrix(fill, dim, rng));
  Tensor zs = random_matrix(16, dim, rng, true);
  Tensor zt = random_matrix(16, dim, rng);
  for (auto _ : state) {
    Tape tape;
    Tensor loss = info_nce(tape, zs, zt, queue, 0.07);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_InfoNce)->RangeMultiplier(4)->Range(64, 1024);

void BM_TrainStep(benchmark::State& state) {
  RunConfig config = bench_config();
  GeneratedTask task = generate(config.task_spec());
  Checkpoint teacher =
      stack_checkpoint(pretrain_teacher(config, task.source).stack, config);
  DistillRun run = make_distill_run(config, teacher);
  const auto batch_list =
      batches(task.target.train, config.batch_size, config.seed, false);
  std::size_t i = 0;
  for (auto _ : state) {
    const Batch& batch = batch_list[i++ % batch_list.size()];
    benchmark::DoNotOptimize(
        distill_train_step(run, batch.x, batch.labels).total);
  }
}
BENCHMARK(BM_TrainStep);

void BM_GradCheckSeed(benchmark::State& state) {
  RunConfig config;
  config.input_dim = 5;
  config.source_classes = 3;
  config.target_classes = 3;
  config.target_train = 8;
  config.embed_dim = 6;
  config.proj_dim = 8;
  config.proj_hidden = 6;
  config.heads = 4;
  config.encoder_hidden = {6};
  config.queue_size = 16;
  config.batch_size = 4;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(gradcheck(config, seed++).all_pass);
  }
}
BENCHMARK(BM_GradCheckSeed);

}  // namespace

BENCHMARK_MAIN();

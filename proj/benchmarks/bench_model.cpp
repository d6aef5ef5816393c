#include <benchmark/benchmark.h>

#include <coattendwg/train.hpp>

using namespace coattendwg;

namespace {

struct Fixture {
  ModelConfig cfg;
  ModelParams params;
  Tensor text, img;
  std::vector<int> labels;

  explicit Fixture(int batch, int embed_dim = 8) {
    cfg = ModelConfig::tiny();
    cfg.embed_dim = embed_dim;
    cfg.seed = 1;
    params = ModelParams::init(cfg);
    Rng rng(2);
    text = Tensor::zeros({batch, cfg.text_dim});
    img = Tensor::zeros({batch, cfg.img_dim});
    for (double& v : text.data()) v = rng.normal();
    for (double& v : img.data()) v = rng.normal();
    for (int i = 0; i < batch; ++i) {
      labels.push_back(static_cast<int>(rng.bounded(
          static_cast<std::uint64_t>(cfg.num_classes))));
    }
  }
};

void BM_ForwardTiny(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    Tape tape;
    ForwardResult res = forward_full(tape, f.params, f.cfg, f.text, f.img);
    benchmark::DoNotOptimize(res.logits.data().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardTiny)->Arg(2)->Arg(16)->Arg(64);

void BM_TrainStepTiny(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  auto named = f.params.named_parameters();
  AdamW opt(named);
  for (auto _ : state) {
    Tape tape;
    ForwardResult res = forward_full(tape, f.params, f.cfg, f.text, f.img);
    Tensor loss = cross_entropy(tape, res.logits, f.labels);
    tape.backward(loss);
    opt.step(named, 1e-4, 0.01);
    benchmark::DoNotOptimize(loss.value());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStepTiny)->Arg(2)->Arg(16)->Arg(64);

void BM_Mha(benchmark::State& state) {
  const int len = static_cast<int>(state.range(0));
  Rng rng(3);
  MhaParams p = MhaParams::init(32, 4, rng);
  Tensor x = Tensor::zeros({4, len, 32});
  for (double& v : x.data()) v = rng.normal();
  for (auto _ : state) {
    Tape tape;
    MhaResult res = mha(tape, p, x, x, x);
    benchmark::DoNotOptimize(res.out.data().data());
  }
}
BENCHMARK(BM_Mha)->Arg(1)->Arg(8)->Arg(32);

void BM_BackwardTiny(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    Tape tape;
    ForwardResult res = forward_full(tape, f.params, f.cfg, f.text, f.img);
    Tensor loss = cross_entropy(tape, res.logits, f.labels);
    tape.backward(loss);
    benchmark::DoNotOptimize(f.params.classifier.weight.grad().data());
  }
}
BENCHMARK(BM_BackwardTiny)->Arg(2)->Arg(64);

}  // namespace

BENCHMARK_MAIN();

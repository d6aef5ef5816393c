#include <doctest.h>

#include <cmath>
#include <coattendwg/gradcheck.hpp>
#include <coattendwg/model.hpp>
#include <thread>

#include "oracle.hpp"

using namespace coattendwg;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

oracle::Vec values(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace

TEST_CASE("forward_full shape contract and validation") {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.seed = 42;
  ModelParams params = ModelParams::init(cfg);

  Rng rng(1);
  Tensor text = random_tensor({2, cfg.text_dim}, rng);
  Tensor img = random_tensor({2, cfg.img_dim}, rng);
  Tape tape;
  ForwardResult res = forward_full(tape, params, cfg, text, img);
  CHECK(res.logits.shape() == std::vector<int>({2, 3}));
  CHECK(res.logits.all_finite());

  CHECK_THROWS_AS(forward_full(tape, params, cfg, img, img),
                  std::invalid_argument);

  ModelConfig bad = cfg;
  bad.fusion_heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  ModelConfig bad2 = cfg;
  bad2.seq_len = 2;
  CHECK_THROWS_AS(bad2.validate(), std::invalid_argument);
}

TEST_CASE("forward_full is deterministic for a fixed seed") {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.seed = 7;
  Rng rng(2);
  Tensor text = random_tensor({2, cfg.text_dim}, rng);
  Tensor img = random_tensor({2, cfg.img_dim}, rng);

  ModelParams a = ModelParams::init(cfg);
  ModelParams b = ModelParams::init(cfg);
  Tape ta, tb;
  ForwardResult ra = forward_full(ta, a, cfg, text, img);
  ForwardResult rb = forward_full(tb, b, cfg, text, img);
  for (std::size_t i = 0; i < ra.logits.numel(); ++i) {
    CHECK(ra.logits.data()[i] == rb.logits.data()[i]);
  }

  // Training mode with dropout is reproducible given the same rng seed.
  ModelConfig drop_cfg = cfg;
  drop_cfg.dropout = 0.2;
  Rng d1(99), d2(99);
  Tape td1, td2;
  ForwardResult rd1 = forward_full(td1, a, drop_cfg, text, img, true, &d1);
  ForwardResult rd2 = forward_full(td2, a, drop_cfg, text, img, true, &d2);
  for (std::size_t i = 0; i < rd1.logits.numel(); ++i) {
    CHECK(rd1.logits.data()[i] == rd2.logits.data()[i]);
  }
}

TEST_CASE("forward_full matches the straight-line oracle") {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.seed = 11;
  ModelParams params = ModelParams::init(cfg);
  Rng rng(3);
  Tensor text = random_tensor({2, cfg.text_dim}, rng);
  Tensor img = random_tensor({2, cfg.img_dim}, rng);

  Tape tape;
  ForwardResult res = forward_full(tape, params, cfg, text, img);
  oracle::FullRef ref = oracle::forward(params, cfg, values(text), values(img), 2);

  REQUIRE(res.logits.numel() == ref.logits.size());
  for (std::size_t i = 0; i < ref.logits.size(); ++i) {
    CHECK(std::abs(res.logits.data()[i] - ref.logits[i]) < 1e-10);
  }
  // Key intermediates line up too.
  for (std::size_t i = 0; i < ref.text_gated.size(); ++i) {
    CHECK(std::abs(res.trace.gated.text_gated.data()[i] - ref.text_gated[i]) < 1e-10);
  }
  for (std::size_t i = 0; i < ref.weighted_sum.size(); ++i) {
    CHECK(std::abs(res.trace.fusion.weighted_sum.data()[i] - ref.weighted_sum[i]) < 1e-10);
  }
  for (std::size_t i = 0; i < ref.text_final.size(); ++i) {
    CHECK(std::abs(res.trace.dual.text_final.data()[i] - ref.text_final[i]) < 1e-10);
  }
}

TEST_CASE("default-constructed ablation flags are a bitwise no-op") {
  ModelConfig plain = ModelConfig::tiny();
  plain.seed = 5;
  ModelConfig flagged = plain;
  flagged.ablation = AblationFlags{};  // explicitly all-off

  Rng rng(4);
  Tensor text = random_tensor({2, plain.text_dim}, rng);
  Tensor img = random_tensor({2, plain.img_dim}, rng);

  ModelParams pa = ModelParams::init(plain);
  ModelParams pb = ModelParams::init(flagged);
  Tape ta, tb;
  ForwardResult ra = forward_full(ta, pa, plain, text, img);
  ForwardResult rb = forward_full(tb, pb, flagged, text, img);
  for (std::size_t i = 0; i < ra.logits.numel(); ++i) {
    CHECK(ra.logits.data()[i] == rb.logits.data()[i]);
  }
}

TEST_CASE("every ablation variant runs end to end and differentiates") {
  Rng rng(6);
  ModelConfig base = ModelConfig::tiny();
  base.seed = 9;
  Tensor text = random_tensor({2, base.text_dim}, rng);
  Tensor img = random_tensor({2, base.img_dim}, rng);

  for (const auto& [name, flags] : ablation_grid()) {
    const std::string& variant = name;
    CAPTURE(variant);
    ModelConfig cfg = base;
    cfg.ablation = flags;
    ModelParams params = ModelParams::init(cfg);
    Tape tape;
    ForwardResult res = forward_full(tape, params, cfg, text, img);
    CHECK(res.logits.all_finite());
    Tensor loss = tape.sum(tape.mul(res.logits, res.logits));
    tape.backward(loss);
    CHECK(params.classifier.weight.has_grad());
  }

  CHECK_THROWS_AS(parse_ablation("no_zz"), std::invalid_argument);
  CHECK(parse_ablation("no_ef,two_heads").no_expert_fusion);
  CHECK(format_ablation(parse_ablation("no_ca,no_ff")) == "no_ca,no_ff");
}

TEST_CASE("no_ef replaces fusion with concat+linear") {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.seed = 13;
  cfg.ablation.no_expert_fusion = true;
  ModelParams params = ModelParams::init(cfg);
  Rng rng(7);
  Tensor text = random_tensor({2, cfg.text_dim}, rng);
  Tensor img = random_tensor({2, cfg.img_dim}, rng);

  Tape tape;
  ForwardResult res = forward_full(tape, params, cfg, text, img);

  // Reconstruct by hand: embedding = W_f [text_final; img_final] + b_f.
  oracle::Vec concat(2 * 2 * static_cast<std::size_t>(cfg.embed_dim));
  const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      concat[b * 2 * d + j] = res.trace.dual.text_final.data()[b * d + j];
      concat[b * 2 * d + d + j] = res.trace.dual.img_final.data()[b * d + j];
    }
  }
  oracle::Vec embedding = oracle::linear(params.fusion.fusion, concat, 2);
  oracle::Vec logits = oracle::linear(params.classifier, embedding, 2);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    CHECK(std::abs(res.logits.data()[i] - logits[i]) < 1e-10);
  }
  // The uniform placeholder gate trace still sums to one.
  for (std::size_t b = 0; b < 2; ++b) {
    double total = 0.0;
    for (int e = 0; e < cfg.experts; ++e) {
      total += res.trace.fusion.gate_weights.data()[b * cfg.experts + e];
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("two_heads halves the refinement head count") {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.refine_heads = 4;
  CHECK(cfg.effective_refine_heads() == 4);
  cfg.ablation.two_heads = true;
  CHECK(cfg.effective_refine_heads() == 2);
  ModelParams params = ModelParams::init(cfg);
  CHECK(params.fusion.refine.heads == 2);
}

TEST_CASE("named_parameters is stable and clone detaches storage") {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.seed = 21;
  ModelParams params = ModelParams::init(cfg);
  auto named = params.named_parameters();
  CHECK(named.size() > 40);
  CHECK(named.front().name == "projection.text.weight");
  CHECK(named.back().name == "classifier.bias");

  std::size_t scalars = 0;
  for (const auto& p : named) scalars += p.tensor.numel();
  CHECK(scalars > 3000);

  ModelParams copy = params.clone();
  auto named_copy = copy.named_parameters();
  REQUIRE(named_copy.size() == named.size());
  for (std::size_t i = 0; i < named.size(); ++i) {
    CHECK(named[i].tensor.id() != named_copy[i].tensor.id());
    CHECK(named[i].tensor.data()[0] == named_copy[i].tensor.data()[0]);
  }
  named_copy[0].tensor.data()[0] += 1.0;
  CHECK(named[0].tensor.data()[0] != named_copy[0].tensor.data()[0]);
}

TEST_CASE("concurrent read-only forwards match the serial result") {
  ModelConfig cfg = ModelConfig::tiny();
  cfg.seed = 17;
  ModelParams params = ModelParams::init(cfg);
  Rng rng(9);
  Tensor text = random_tensor({4, cfg.text_dim}, rng);
  Tensor img = random_tensor({4, cfg.img_dim}, rng);

  Tape serial_tape;
  Tensor serial = forward_full(serial_tape, params, cfg, text, img).logits;

  std::vector<Tensor> results(4);
  std::vector<std::thread> workers;
  for (int t = 0; t < 4; ++t) {
    workers.emplace_back([&, t]() {
      Tape tape;  // one tape per thread
      results[static_cast<std::size_t>(t)] =
          forward_full(tape, params, cfg, text, img).logits;
    });
  }
  for (auto& w : workers) w.join();
  for (const Tensor& r : results) {
    REQUIRE(r.numel() == serial.numel());
    for (std::size_t i = 0; i < r.numel(); ++i) {
      CHECK(r.data()[i] == serial.data()[i]);
    }
  }
}

TEST_CASE("full model gradcheck on a reduced configuration") {
  // Keep this quick: depth 1, dim 4. The acceptance suite runs the full tiny
  // configuration.
  ModelConfig cfg = ModelConfig::tiny();
  cfg.embed_dim = 4;
  cfg.text_dim = 3;
  cfg.img_dim = 5;
  cfg.mf_depth = 1;
  cfg.num_classes = 2;
  cfg.seed = 31;
  ModelParams params = ModelParams::init(cfg);

  Rng rng(8);
  Tensor text = random_tensor({2, cfg.text_dim}, rng);
  Tensor img = random_tensor({2, cfg.img_dim}, rng);
  Tensor probe = random_tensor({2, cfg.num_classes}, rng);

  auto named = params.named_parameters();
  auto report = gradcheck(named, [&](Tape& tape) {
    ForwardResult res = forward_full(tape, params, cfg, text, img);
    Tensor weighted = tape.mul(res.logits, probe);
    return tape.sum(tape.add(weighted, tape.mul(weighted, weighted)));
  });
  CHECK(report.max_rel_err < 1e-4);
}

#include "coattendwg/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace coattendwg {

Tensor apply_activation(Tape& tape, Activation act, const Tensor& x) {
  switch (act) {
    case Activation::Relu:
      return tape.relu(x);
    case Activation::Gelu:
      return tape.gelu(x);
  }
  throw std::invalid_argument("unknown activation");
}

namespace {

Tensor uniform_tensor(std::vector<int> shape, double bound, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

LinearParams LinearParams::init(int out, int in, Rng& rng) {
  const double s = std::sqrt(1.0 / static_cast<double>(in));
  LinearParams p;
  p.weight = uniform_tensor({out, in}, s, rng);
  p.bias = Tensor::zeros({out});
  return p;
}

Tensor linear(Tape& tape, const LinearParams& params, const Tensor& x) {
  const int in = params.in_dim();
  if (x.dim(x.ndim() - 1) != in) {
    throw std::invalid_argument("linear: input dim " +
                                shape_str(x.shape()) + " does not match weight " +
                                shape_str(params.weight.shape()));
  }
  const int rows = static_cast<int>(x.numel()) / in;
  Tensor flat = tape.reshape(x, {rows, in});
  Tensor wt = tape.transpose(params.weight, 0, 1);
  Tensor y = tape.add_bias(tape.matmul(flat, wt), params.bias);
  std::vector<int> out_shape = x.shape();
  out_shape.back() = params.out_dim();
  return tape.reshape(y, std::move(out_shape));
}

MhaParams MhaParams::init(int dim, int heads, Rng& rng, bool use_bias) {
  if (heads <= 0 || dim % heads != 0) {
    throw std::invalid_argument("mha: dim " + std::to_string(dim) +
                                " not divisible by heads " +
                                std::to_string(heads));
  }
  const double s = std::sqrt(1.0 / static_cast<double>(dim));
  MhaParams p;
  p.heads = heads;
  p.w_q = uniform_tensor({dim, dim}, s, rng);
  p.w_k = uniform_tensor({dim, dim}, s, rng);
  p.w_v = uniform_tensor({dim, dim}, s, rng);
  p.w_o = uniform_tensor({dim, dim}, s, rng);
  p.use_bias = use_bias;
  if (use_bias) {
    p.b_q = Tensor::zeros({dim});
    p.b_k = Tensor::zeros({dim});
    p.b_v = Tensor::zeros({dim});
    p.b_o = Tensor::zeros({dim});
  }
  return p;
}

namespace {

Tensor project(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
               bool use_bias) {
  const int d = w.dim(0);
  const int rows = static_cast<int>(x.numel()) / d;
  Tensor flat = tape.reshape(x, {rows, d});
  Tensor y = tape.matmul(flat, tape.transpose(w, 0, 1));
  if (use_bias) y = tape.add_bias(y, b);
  return tape.reshape(y, x.shape());
}

// [B, L, D] -> [B, h, L, D/h]
Tensor split_heads(Tape& tape, const Tensor& x, int heads) {
  const int b = x.dim(0), l = x.dim(1), d = x.dim(2);
  Tensor r = tape.reshape(x, {b, l, heads, d / heads});
  return tape.transpose(r, 1, 2);
}

}  // namespace

MhaResult mha(Tape& tape, const MhaParams& params, const Tensor& q,
              const Tensor& k, const Tensor& v) {
  const int d = params.dim();
  if (q.ndim() != 3 || k.ndim() != 3 || v.ndim() != 3) {
    throw std::invalid_argument("mha: inputs must be [B,L,D]");
  }
  if (q.dim(2) != d || k.dim(2) != d || v.dim(2) != d ||
      q.dim(0) != k.dim(0) || q.dim(0) != v.dim(0) || k.dim(1) != v.dim(1)) {
    throw std::invalid_argument("mha: inconsistent shapes q=" +
                                shape_str(q.shape()) + " k=" +
                                shape_str(k.shape()) + " v=" +
                                shape_str(v.shape()));
  }
  if (d % params.heads != 0) {
    throw std::invalid_argument("mha: dim " + std::to_string(d) +
                                " not divisible by heads " +
                                std::to_string(params.heads));
  }
  if (k.dim(1) == 0) {
    throw std::invalid_argument("mha: empty key set");
  }
  const int batch = q.dim(0), lq = q.dim(1), heads = params.heads;
  const int dh = d / heads;

  Tensor qh = split_heads(tape, project(tape, q, params.w_q, params.b_q, params.use_bias), heads);
  Tensor kh = split_heads(tape, project(tape, k, params.w_k, params.b_k, params.use_bias), heads);
  Tensor vh = split_heads(tape, project(tape, v, params.w_v, params.b_v, params.use_bias), heads);

  Tensor scores = tape.scale(tape.bmm(qh, kh, /*transpose_b=*/true),
                             1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor attn = tape.softmax(scores, 3);
  Tensor ctx = tape.bmm(attn, vh);                       // [B,h,Lq,dh]
  Tensor merged = tape.reshape(tape.transpose(ctx, 1, 2), {batch, lq, d});
  Tensor out = project(tape, merged, params.w_o, params.b_o, params.use_bias);
  return {out, attn};
}

Tensor dropout(Tape& tape, const DropoutConfig& cfg, const Tensor& x, Rng& rng) {
  if (cfg.p < 0.0 || cfg.p >= 1.0) {
    throw std::invalid_argument("dropout: p must be in [0,1), got " +
                                std::to_string(cfg.p));
  }
  if (!cfg.training || cfg.p == 0.0) return x;

  const double keep = 1.0 - cfg.p;
  Tensor out = Tensor::zeros(x.shape());
  auto mask = std::make_shared<std::vector<double>>(x.numel(), 0.0);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (rng.uniform() >= cfg.p) {
      (*mask)[i] = 1.0 / keep;
      out.data()[i] = x.data()[i] * (*mask)[i];
    }
  }
  tape.record({x}, out, [x, out, mask]() {
    for (std::size_t i = 0; i < out.numel(); ++i) {
      x.grad()[i] += out.grad()[i] * (*mask)[i];
    }
  });
  return out;
}

MambaFormerLayerParams MambaFormerLayerParams::init(int dim, int kernel,
                                                    int heads, Rng& rng) {
  if (kernel % 2 == 0) {
    throw std::invalid_argument("mambaformer: kernel size must be odd, got " +
                                std::to_string(kernel));
  }
  MambaFormerLayerParams p;
  const double s = std::sqrt(1.0 / static_cast<double>(kernel * dim));
  p.conv_kernel = uniform_tensor({kernel, dim, dim}, s, rng);
  p.conv_bias = Tensor::zeros({dim});
  p.self_attn = MhaParams::init(dim, heads, rng);
  p.ln1_gamma = Tensor::full({dim}, 1.0);
  p.ln1_beta = Tensor::zeros({dim});
  p.ln2_gamma = Tensor::full({dim}, 1.0);
  p.ln2_beta = Tensor::zeros({dim});
  return p;
}

Tensor mambaformer_encode(Tape& tape,
                          std::span<const MambaFormerLayerParams> layers,
                          const Tensor& x, const DropoutConfig& drop,
                          Rng& rng) {
  Tensor h = x;
  for (const MambaFormerLayerParams& layer : layers) {
    Tensor n1 = tape.layer_norm(h, layer.ln1_gamma, layer.ln1_beta, kLayerNormEps);
    Tensor c = apply_activation(
        tape, layer.activation,
        tape.conv1d_same(n1, layer.conv_kernel, layer.conv_bias));
    Tensor u = tape.add(h, dropout(tape, drop, c, rng));
    Tensor n2 = tape.layer_norm(u, layer.ln2_gamma, layer.ln2_beta, kLayerNormEps);
    Tensor a = mha(tape, layer.self_attn, n2, n2, n2).out;
    h = tape.add(u, dropout(tape, drop, a, rng));
  }
  return h;
}

}  // namespace coattendwg

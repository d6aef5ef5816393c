#include "oracle.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

namespace {

Vec values(const coattendwg::Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

}  // namespace

Vec matmul(const Vec& a, std::size_t m, std::size_t k, const Vec& b,
           std::size_t n) {
  Vec c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc += a[i * k + p] * b[p * n + j];
      }
      c[i * n + j] = acc;
    }
  }
  return c;
}

Vec linear(const coattendwg::LinearParams& p, const Vec& x, std::size_t rows) {
  const std::size_t in = static_cast<std::size_t>(p.in_dim());
  const std::size_t out = static_cast<std::size_t>(p.out_dim());
  const Vec w = values(p.weight);
  const Vec bias = values(p.bias);
  Vec y(rows * out, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias[o];
      for (std::size_t i = 0; i < in; ++i) {
        acc += x[r * in + i] * w[o * in + i];
      }
      y[r * out + o] = acc;
    }
  }
  return y;
}

void softmax_rows(Vec& x, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = x[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[r * cols + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      x[r * cols + j] = std::exp(x[r * cols + j] - mx);
      denom += x[r * cols + j];
    }
    for (std::size_t j = 0; j < cols; ++j) x[r * cols + j] /= denom;
  }
}

Vec sigmoid(Vec x) {
  for (double& v : x) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return x;
}

Vec relu(Vec x) {
  for (double& v : x) v = v > 0.0 ? v : 0.0;
  return x;
}

Vec layer_norm(const Vec& x, std::size_t rows, std::size_t d, const Vec& gamma,
               const Vec& beta, double eps) {
  Vec y(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x[r * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x[r * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double istd = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      y[r * d + j] = (x[r * d + j] - mu) * istd * gamma[j] + beta[j];
    }
  }
  return y;
}

Vec conv1d_same(const Vec& x, std::size_t batch, std::size_t len,
                std::size_t d, const Vec& kernel, std::size_t k,
                const Vec& bias) {
  Vec y(x.size(), 0.0);
  const int half = static_cast<int>(k - 1) / 2;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t o = 0; o < d; ++o) {
        double acc = bias[o];
        for (std::size_t tap = 0; tap < k; ++tap) {
          const int s = static_cast<int>(t) + static_cast<int>(tap) - half;
          if (s < 0 || s >= static_cast<int>(len)) continue;
          for (std::size_t c = 0; c < d; ++c) {
            acc += x[(b * len + static_cast<std::size_t>(s)) * d + c] *
                   kernel[(tap * d + c) * d + o];
          }
        }
        y[(b * len + t) * d + o] = acc;
      }
    }
  }
  return y;
}

MhaRef mha(const coattendwg::MhaParams& p, const Vec& q, const Vec& k,
           const Vec& v, std::size_t batch, std::size_t lq, std::size_t lk) {
  const std::size_t d = static_cast<std::size_t>(p.dim());
  const std::size_t heads = static_cast<std::size_t>(p.heads);
  const std::size_t dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  auto project = [&](const Vec& x, std::size_t rows, const coattendwg::Tensor& w,
                     const coattendwg::Tensor& b) {
    const Vec wv = values(w);
    Vec y(rows * d, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < d; ++o) {
        double acc = p.use_bias ? b.data()[o] : 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          acc += x[r * d + i] * wv[o * d + i];
        }
        y[r * d + o] = acc;
      }
    }
    return y;
  };

  const Vec qp = project(q, batch * lq, p.w_q, p.b_q);
  const Vec kp = project(k, batch * lk, p.w_k, p.b_k);
  const Vec vp = project(v, batch * lk, p.w_v, p.b_v);

  MhaRef ref;
  ref.attn.assign(batch * heads * lq * lk, 0.0);
  Vec merged(batch * lq * d, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < heads; ++h) {
      // scores and row softmax
      for (std::size_t i = 0; i < lq; ++i) {
        Vec row(lk, 0.0);
        for (std::size_t j = 0; j < lk; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < dh; ++c) {
            acc += qp[(b * lq + i) * d + h * dh + c] *
                   kp[(b * lk + j) * d + h * dh + c];
          }
          row[j] = acc * scale;
        }
        softmax_rows(row, 1, lk);
        for (std::size_t j = 0; j < lk; ++j) {
          ref.attn[((b * heads + h) * lq + i) * lk + j] = row[j];
        }
        for (std::size_t c = 0; c < dh; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < lk; ++j) {
            acc += row[j] * vp[(b * lk + j) * d + h * dh + c];
          }
          merged[(b * lq + i) * d + h * dh + c] = acc;
        }
      }
    }
  }
  ref.out = project(merged, batch * lq, p.w_o, p.b_o);
  return ref;
}

Vec mambaformer(const std::vector<coattendwg::MambaFormerLayerParams>& layers,
                Vec x, std::size_t batch, std::size_t len, std::size_t d) {
  using coattendwg::kLayerNormEps;
  for (const auto& layer : layers) {
    const Vec n1 = layer_norm(x, batch * len, d, values(layer.ln1_gamma),
                              values(layer.ln1_beta), kLayerNormEps);
    Vec c = conv1d_same(n1, batch, len, d, values(layer.conv_kernel),
                        static_cast<std::size_t>(layer.conv_kernel.dim(0)),
                        values(layer.conv_bias));
    c = relu(std::move(c));
    Vec u(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) u[i] = x[i] + c[i];
    const Vec n2 = layer_norm(u, batch * len, d, values(layer.ln2_gamma),
                              values(layer.ln2_beta), kLayerNormEps);
    const MhaRef a = mha(layer.self_attn, n2, n2, n2, batch, len, len);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = u[i] + a.out[i];
  }
  return x;
}

FullRef forward(const coattendwg::ModelParams& params,
                const coattendwg::ModelConfig& cfg, const Vec& text_feat,
                const Vec& img_feat, std::size_t batch) {
  using coattendwg::kLayerNormEps;
  const std::size_t d = static_cast<std::size_t>(cfg.embed_dim);
  const std::size_t experts = static_cast<std::size_t>(cfg.experts);
  FullRef r;

  // Projection into the shared space; sequence length is 1 so [B,1,D] and
  // [B,D] share a layout.
  r.text_seq = linear(params.projection.text_proj, text_feat, batch);
  r.img_seq = linear(params.projection.img_proj, img_feat, batch);

  // Bidirectional co-attention.
  const MhaRef t2i = mha(params.coattention.text_to_img, r.text_seq, r.img_seq,
                         r.img_seq, batch, 1, 1);
  const MhaRef i2t = mha(params.coattention.img_to_text, r.img_seq, r.text_seq,
                         r.text_seq, batch, 1, 1);
  r.text_attended = t2i.out;
  r.img_attended = i2t.out;

  // Dimension-wise gates.
  r.text_gate = sigmoid(linear(params.coattention.text_gate, r.text_attended, batch));
  r.img_gate = sigmoid(linear(params.coattention.img_gate, r.img_attended, batch));
  r.text_gated.resize(batch * d);
  r.img_gated.resize(batch * d);
  for (std::size_t i = 0; i < batch * d; ++i) {
    r.text_gated[i] = r.text_gate[i] * r.text_attended[i];
    r.img_gated[i] = r.img_gate[i] * r.img_attended[i];
  }

  // Dual-path refinement: the text path consumes the gated image feature.
  Vec text_enc = mambaformer(params.dual_path.text_path, r.img_gated, batch, 1, d);
  Vec img_enc = mambaformer(params.dual_path.img_path, r.text_gated, batch, 1, d);
  r.text_refined.resize(batch * d);
  r.img_refined.resize(batch * d);
  for (std::size_t i = 0; i < batch * d; ++i) {
    r.text_refined[i] = text_enc[i] + r.text_seq[i];
    r.img_refined[i] = img_enc[i] + r.img_seq[i];
  }

  // Cross-attention, queried by the original projections.
  r.text_cross = mha(params.dual_path.text_xattn, r.text_seq, r.img_seq,
                     r.img_seq, batch, 1, 1).out;
  r.img_cross = mha(params.dual_path.img_xattn, r.img_seq, r.text_seq,
                    r.text_seq, batch, 1, 1).out;
  r.text_final.resize(batch * d);
  r.img_final.resize(batch * d);
  for (std::size_t i = 0; i < batch * d; ++i) {
    r.text_final[i] = r.text_refined[i] + r.text_cross[i];
    r.img_final[i] = r.img_refined[i] + r.img_cross[i];
  }

  // Expert fusion.
  r.concat.resize(batch * 2 * d);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < d; ++j) {
      r.concat[b * 2 * d + j] = r.text_final[b * d + j];
      r.concat[b * 2 * d + d + j] = r.img_final[b * d + j];
    }
  }
  r.fused = relu(linear(params.fusion.fusion, r.concat, batch));
  r.gate_weights = linear(params.fusion.gate, r.concat, batch);
  softmax_rows(r.gate_weights, batch, experts);

  std::vector<Vec> expert_vals;
  if (experts == 2) {
    expert_vals = {r.text_final, r.img_final};
  } else {
    for (std::size_t e = 0; e < experts; ++e) {
      expert_vals.push_back(linear(params.fusion.expert_proj[e], r.concat, batch));
    }
  }
  r.weighted_sum.assign(batch * d, 0.0);
  for (std::size_t e = 0; e < experts; ++e) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < d; ++j) {
        r.weighted_sum[b * d + j] +=
            r.gate_weights[b * experts + e] * expert_vals[e][b * d + j];
      }
    }
  }

  r.refined = mha(params.fusion.refine, r.weighted_sum, r.weighted_sum,
                  r.weighted_sum, batch, 1, 1).out;

  Vec summed(batch * d);
  for (std::size_t i = 0; i < batch * d; ++i) {
    summed[i] = r.fused[i] + r.weighted_sum[i] + r.refined[i];
  }
  r.embedding = layer_norm(summed, batch, d, values(params.fusion.ln_gamma),
                           values(params.fusion.ln_beta), kLayerNormEps);
  r.logits = linear(params.classifier, r.embedding, batch);
  return r;
}

}  // namespace oracle

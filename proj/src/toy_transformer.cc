// Copyright 2026 The redcb Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "redcb/toy_transformer.h"

#include <cmath>
#include <string>

#include "redcb/errors.h"
#include "redcb/random.h"

namespace redcb {

namespace {

Matrix RandomMatrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = rng.Normal() * scale;
  }
  return m;
}

// out[j] = sum_i x[i] * w(i, j)
void MatVec(std::span<const double> x, const Matrix& w, std::span<double> out) {
  for (std::size_t j = 0; j < w.dim(); ++j) out[j] = 0.0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double xi = x[i];
    auto wr = w.row(i);
    for (std::size_t j = 0; j < w.dim(); ++j) out[j] += xi * wr[j];
  }
}

void RmsNorm(std::span<const double> x, std::span<double> out) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + 1e-6);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * inv;
}

constexpr double kPositionScale = 0.1;

}  // namespace

ToyTransformerOracle::ToyTransformerOracle(ToyTransformerConfig config)
    : config_(std::move(config)) {
  const std::size_t d = config_.dim;
  if (d == 0 || config_.heads == 0 || d % config_.heads != 0) {
    throw InvalidInput("toy transformer dim must be a positive multiple of heads");
  }
  if (config_.vocab < 2 || config_.pad_id < 0 ||
      static_cast<std::size_t>(config_.pad_id) >= config_.vocab) {
    throw InvalidInput("toy transformer vocabulary too small for its pad id");
  }
  for (TokenId a : config_.article_ids) {
    if (a < 0 || static_cast<std::size_t>(a) >= config_.vocab) {
      throw InvalidInput("article id outside the vocabulary");
    }
  }
  for (PromptKind p : {PromptKind::kDescribeSingleToken, PromptKind::kDescribeRegion,
                       PromptKind::kDescribeImage}) {
    for (TokenId id : PromptIds(p)) {
      if (static_cast<std::size_t>(id) >= config_.vocab) {
        throw InvalidInput("vocabulary too small for the prompt ids");
      }
    }
  }

  Rng rng(config_.seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  embedding_ = RandomMatrix(rng, config_.vocab, d, scale);
  newline_.resize(d);
  for (double& v : newline_) v = rng.Normal() * scale;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    Layer layer;
    layer.wq = RandomMatrix(rng, d, d, scale);
    layer.wk = RandomMatrix(rng, d, d, scale);
    layer.wv = RandomMatrix(rng, d, d, scale);
    layer.wo = RandomMatrix(rng, d, d, scale);
    layer.w1 = RandomMatrix(rng, d, config_.mlp_hidden, scale);
    layer.w2 = RandomMatrix(rng, config_.mlp_hidden, d,
                            1.0 / std::sqrt(static_cast<double>(config_.mlp_hidden)));
    layers_.push_back(std::move(layer));
  }
  auto pad_row = embedding_.row(static_cast<std::size_t>(config_.pad_id));
  pad_.assign(pad_row.begin(), pad_row.end());

  caps_.repeat_for_single_input = config_.repeat_for_single_input;
  caps_.uses_image_newline = config_.uses_image_newline;
  caps_.article_ids = config_.article_ids;
  caps_.vocab_size = config_.vocab;
  caps_.embed_dim = d;
}

std::string ToyTransformerOracle::model_id() const {
  return "toy-transformer-seed" + std::to_string(config_.seed);
}

std::vector<TokenId> ToyTransformerOracle::PromptIds(PromptKind prompt) {
  switch (prompt) {
    case PromptKind::kDescribeSingleToken:
      return {10, 11, 12};
    case PromptKind::kDescribeRegion:
      return {10, 13, 14};
    case PromptKind::kDescribeImage:
      return {10, 15, 16, 17};
  }
  return {};
}

OracleResponse ToyTransformerOracle::Forward(const VisualInput& input, PromptKind prompt,
                                             std::span<const TokenId> generated) const {
  const std::size_t d = config_.dim;
  const std::size_t heads = config_.heads;
  const std::size_t dh = d / heads;

  Matrix x;
  std::vector<std::size_t> visual_positions;
  std::size_t next_newline = 0;
  for (std::size_t i = 0; i < input.tokens.rows(); ++i) {
    visual_positions.push_back(x.rows());
    x.AppendRow(input.tokens.row(i));
    if (config_.uses_image_newline && next_newline < input.newline_after.size() &&
        input.newline_after[next_newline] == i) {
      x.AppendRow(newline_);
      ++next_newline;
    }
  }
  for (TokenId id : PromptIds(prompt)) x.AppendRow(embedding_.row(static_cast<std::size_t>(id)));
  for (TokenId id : generated) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab) {
      throw InvalidInput("generated token outside the vocabulary");
    }
    x.AppendRow(embedding_.row(static_cast<std::size_t>(id)));
  }

  const std::size_t n = x.rows();
  for (std::size_t p = 0; p < n; ++p) {
    auto r = x.row(p);
    for (std::size_t j = 0; j < d; j += 2) {
      const double freq = std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(d));
      r[j] += kPositionScale * std::sin(static_cast<double>(p) * freq);
      if (j + 1 < d) r[j + 1] += kPositionScale * std::cos(static_cast<double>(p) * freq);
    }
  }

  AttentionRecord record;
  Matrix h(n, d), q(n, d), k(n, d), v(n, d);
  std::vector<double> concat(d), proj(d), hidden(config_.mlp_hidden), scores(n);
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  for (const Layer& layer : layers_) {
    for (std::size_t p = 0; p < n; ++p) {
      RmsNorm(x.row(p), h.row(p));
      MatVec(h.row(p), layer.wq, q.row(p));
      MatVec(h.row(p), layer.wk, k.row(p));
      MatVec(h.row(p), layer.wv, v.row(p));
    }
    std::vector<std::vector<double>> layer_attention(heads);
    std::vector<double> layer_mass(heads);
    Matrix attn_out(n, d);
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t hd = 0; hd < heads; ++hd) {
        const std::size_t off = hd * dh;
        double max = -INFINITY;
        for (std::size_t j = 0; j <= p; ++j) {
          double s = 0.0;
          for (std::size_t t = 0; t < dh; ++t) s += q(p, off + t) * k(j, off + t);
          scores[j] = s * inv_sqrt_dh;
          max = std::max(max, scores[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j <= p; ++j) {
          scores[j] = std::exp(scores[j] - max);
          sum += scores[j];
        }
        for (std::size_t j = 0; j <= p; ++j) {
          scores[j] /= sum;
          for (std::size_t t = 0; t < dh; ++t) attn_out(p, off + t) += scores[j] * v(j, off + t);
        }
        if (p + 1 == n) {
          auto& row = layer_attention[hd];
          for (std::size_t vp : visual_positions) row.push_back(scores[vp]);
          for (std::size_t j = 0; j <= p; ++j) layer_mass[hd] += scores[j];
        }
      }
    }
    record.scores.push_back(std::move(layer_attention));
    record.row_mass.push_back(std::move(layer_mass));
    for (std::size_t p = 0; p < n; ++p) {
      MatVec(attn_out.row(p), layer.wo, proj);
      auto xr = x.row(p);
      for (std::size_t j = 0; j < d; ++j) xr[j] += proj[j];
      RmsNorm(xr, h.row(p));
      MatVec(h.row(p), layer.w1, hidden);
      for (double& a : hidden) a = std::max(0.0, a);
      MatVec(hidden, layer.w2, proj);
      for (std::size_t j = 0; j < d; ++j) xr[j] += proj[j];
    }
  }

  std::vector<double> last(d);
  RmsNorm(x.row(n - 1), last);
  OracleResponse out;
  for (std::size_t t = 0; t < config_.vocab; ++t) {
    out.logits.ids.push_back(static_cast<TokenId>(t));
    out.logits.logits.push_back(Dot(embedding_.row(t), last));
  }
  out.attention = std::move(record);
  return out;
}

}  // namespace redcb

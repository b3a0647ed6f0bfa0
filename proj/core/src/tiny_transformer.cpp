#include "ddp/error.hpp"
#include "ddp/models.hpp"
#include "nn_ops.hpp"
#include "spec_util.hpp"

namespace ddp {

struct TinyTransformerModel::Cache {
  struct Layer {
    Eigen::MatrixXd attn_norm;
    Eigen::VectorXd attn_inv_rms;
    std::vector<detail::HeadCache> heads;
    std::vector<Eigen::MatrixXd> head_out;
    Eigen::MatrixXd mlp_norm;
    Eigen::VectorXd mlp_inv_rms;
    Eigen::MatrixXd up, gate, act;
  };
  std::vector<Layer> layers;
  Eigen::MatrixXd final_norm;
  Eigen::VectorXd final_inv_rms;
};

namespace {

struct Offsets {
  std::vector<std::size_t> attn;
  std::vector<std::size_t> mlp;
};

Offsets mask_offsets(const std::vector<TransformerLayer>& layers) {
  Offsets o;
  std::size_t k = 0;
  for (const auto& l : layers) {
    o.attn.push_back(k);
    k += l.heads.size();
  }
  for (const auto& l : layers) {
    o.mlp.push_back(k);
    k += static_cast<std::size_t>(l.mlp.wu.cols());
  }
  return o;
}

}  // namespace

TinyTransformerModel::TinyTransformerModel(Eigen::MatrixXd token_embedding,
                                           Eigen::MatrixXd position_embedding,
                                           std::vector<TransformerLayer> layers,
                                           Eigen::MatrixXd unembedding, std::uint64_t seed)
    : token_embedding_(std::move(token_embedding)),
      position_embedding_(std::move(position_embedding)),
      layers_(std::move(layers)),
      unembedding_(std::move(unembedding)),
      seed_(seed) {
  const auto d = token_embedding_.cols();
  if (d == 0 || position_embedding_.cols() != d || unembedding_.rows() != d ||
      unembedding_.cols() != token_embedding_.rows()) {
    throw ValidationError("tiny-transformer: embedding shapes are inconsistent");
  }
  if (layers_.empty()) throw ValidationError("tiny-transformer: needs at least one layer");
  for (const auto& l : layers_) {
    for (const auto& h : l.heads) {
      if (h.wq.rows() != d || h.wk.rows() != d || h.wv.rows() != d || h.wo.cols() != d) {
        throw ValidationError("tiny-transformer: head shapes do not match model width");
      }
    }
    if (l.mlp.wu.rows() != d || l.mlp.wg.rows() != d || l.mlp.wd.cols() != d ||
        l.mlp.wd.rows() != l.mlp.wu.cols() || l.mlp.wg.cols() != l.mlp.wu.cols()) {
      throw ValidationError("tiny-transformer: MLP shapes do not match model width");
    }
  }
  const Offsets off = mask_offsets(layers_);
  std::vector<ComponentGroup> groups;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].heads.empty()) continue;
    groups.push_back(detail::single_group("attn", "layer" + std::to_string(l),
                                          layers_[l].heads.size(), off.attn[l])
                         .front());
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto c = static_cast<std::size_t>(layers_[l].mlp.wu.cols());
    if (c == 0) continue;
    groups.push_back(
        detail::single_group("mlp", "layer" + std::to_string(l), c, off.mlp[l]).front());
  }
  set_component_map(std::move(groups));
}

std::unique_ptr<ComponentModel> TinyTransformerModel::clone() const {
  return std::make_unique<TinyTransformerModel>(*this);
}

void TinyTransformerModel::check_batch_impl(const Batch& batch) const {
  if (batch.tokens.empty()) throw ValidationError("batch: token model needs token sequences");
  for (const auto& seq : batch.tokens) {
    if (seq.size() > max_seq_len()) throw ValidationError("batch: sequence longer than context");
    for (int t : seq) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab_size()) {
        throw ValidationError("batch: token id " + std::to_string(t) + " out of vocabulary");
      }
    }
  }
}

Eigen::MatrixXd TinyTransformerModel::run_sequence(std::span<const int> tokens,
                                                   std::span<const double> m, Cache* cache) const {
  const auto len = static_cast<Eigen::Index>(tokens.size());
  Eigen::MatrixXd h(len, token_embedding_.cols());
  for (Eigen::Index i = 0; i < len; ++i) {
    h.row(i) = token_embedding_.row(tokens[static_cast<std::size_t>(i)]) +
               position_embedding_.row(i);
  }
  const Offsets off = mask_offsets(layers_);
  if (cache != nullptr) cache->layers.resize(layers_.size());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    Cache::Layer local;
    Cache::Layer& c = cache != nullptr ? cache->layers[l] : local;

    c.attn_norm = detail::rms_norm(h, &c.attn_inv_rms);
    c.heads.resize(layer.heads.size());
    c.head_out.resize(layer.heads.size());
    for (std::size_t hd = 0; hd < layer.heads.size(); ++hd) {
      c.head_out[hd] = detail::attention_head_forward(layer.heads[hd], c.attn_norm, &c.heads[hd]);
      h += m[off.attn[l] + hd] * c.head_out[hd];
    }

    c.mlp_norm = detail::rms_norm(h, &c.mlp_inv_rms);
    c.up = c.mlp_norm * layer.mlp.wu;
    c.gate = c.mlp_norm * layer.mlp.wg;
    c.act = c.up.unaryExpr([](double v) { return detail::gelu(v); }).cwiseProduct(c.gate);
    const auto width = layer.mlp.wu.cols();
    const Eigen::Map<const Eigen::VectorXd> mk(m.data() + off.mlp[l], width);
    h += c.act * mk.asDiagonal() * layer.mlp.wd;
  }
  Eigen::MatrixXd final_local;
  Eigen::VectorXd inv_local;
  Eigen::MatrixXd& fnorm = cache != nullptr ? cache->final_norm : final_local;
  Eigen::VectorXd& finv = cache != nullptr ? cache->final_inv_rms : inv_local;
  fnorm = detail::rms_norm(h, &finv);
  return fnorm * unembedding_;
}

Eigen::MatrixXd TinyTransformerModel::sequence_logits(std::span<const int> tokens,
                                                      std::span<const double> m) const {
  if (m.size() != num_components()) throw ValidationError("sequence_logits: mask size mismatch");
  if (tokens.empty() || tokens.size() > max_seq_len()) {
    throw ValidationError("sequence_logits: bad sequence length");
  }
  return run_sequence(tokens, m, nullptr);
}

Eigen::MatrixXd TinyTransformerModel::forward_impl(const Batch& batch,
                                                   std::span<const double> m) const {
  Eigen::Index rows = 0;
  for (const auto& seq : batch.tokens) rows += static_cast<Eigen::Index>(seq.size()) - 1;
  Eigen::MatrixXd out(rows, static_cast<Eigen::Index>(vocab_size()));
  Eigen::Index row = 0;
  for (const auto& seq : batch.tokens) {
    const Eigen::MatrixXd logits = run_sequence(seq, m, nullptr);
    const auto n = logits.rows() - 1;
    out.middleRows(row, n) = logits.topRows(n);
    row += n;
  }
  return out;
}

void TinyTransformerModel::backprop_sequence(const Cache& cache, std::span<const double> m,
                                             const Eigen::MatrixXd& dlogits,
                                             std::vector<double>& dm) const {
  const Offsets off = mask_offsets(layers_);
  Eigen::MatrixXd dh = detail::rms_norm_backward(cache.final_norm, cache.final_inv_rms,
                                                 dlogits * unembedding_.transpose());
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& layer = layers_[li];
    const auto& c = cache.layers[li];

    const auto width = layer.mlp.wu.cols();
    const Eigen::MatrixXd dmasked = dh * layer.mlp.wd.transpose();
    for (Eigen::Index j = 0; j < width; ++j) {
      dm[off.mlp[li] + static_cast<std::size_t>(j)] += c.act.col(j).dot(dmasked.col(j));
    }
    const Eigen::Map<const Eigen::VectorXd> mk(m.data() + off.mlp[li], width);
    const Eigen::MatrixXd dact = dmasked * mk.asDiagonal();
    const Eigen::MatrixXd gelu_up = c.up.unaryExpr([](double v) { return detail::gelu(v); });
    const Eigen::MatrixXd dgelu = c.up.unaryExpr([](double v) { return detail::gelu_grad(v); });
    const Eigen::MatrixXd dup = dact.cwiseProduct(c.gate).cwiseProduct(dgelu);
    const Eigen::MatrixXd dgate = dact.cwiseProduct(gelu_up);
    const Eigen::MatrixXd dnorm2 = dup * layer.mlp.wu.transpose() + dgate * layer.mlp.wg.transpose();
    dh += detail::rms_norm_backward(c.mlp_norm, c.mlp_inv_rms, dnorm2);

    Eigen::MatrixXd dnorm1 = Eigen::MatrixXd::Zero(dh.rows(), dh.cols());
    for (std::size_t hd = 0; hd < layer.heads.size(); ++hd) {
      const double mh = m[off.attn[li] + hd];
      dm[off.attn[li] + hd] += c.head_out[hd].cwiseProduct(dh).sum();
      dnorm1 += detail::attention_head_backward(layer.heads[hd], c.heads[hd], mh * dh);
    }
    dh += detail::rms_norm_backward(c.attn_norm, c.attn_inv_rms, dnorm1);
  }
}

std::vector<double> TinyTransformerModel::mask_vjp(const Batch& batch, std::span<const double> m,
                                                   const Eigen::MatrixXd& dloss_dout) const {
  std::vector<double> dm(num_components(), 0.0);
  Eigen::Index row = 0;
  for (const auto& seq : batch.tokens) {
    Cache cache;
    run_sequence(seq, m, &cache);
    const auto len = static_cast<Eigen::Index>(seq.size());
    Eigen::MatrixXd dlogits = Eigen::MatrixXd::Zero(len, static_cast<Eigen::Index>(vocab_size()));
    dlogits.topRows(len - 1) = dloss_dout.middleRows(row, len - 1);
    row += len - 1;
    backprop_sequence(cache, m, dlogits, dm);
  }
  return dm;
}

std::unique_ptr<ComponentModel> TinyTransformerModel::fold_impl(std::span<const double> m) const {
  const Offsets off = mask_offsets(layers_);
  std::vector<TransformerLayer> layers;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    TransformerLayer out;
    for (std::size_t h : detail::kept_indices(m, off.attn[l], layers_[l].heads.size())) {
      AttentionHead head = layers_[l].heads[h - off.attn[l]];
      head.wo *= m[h];
      out.heads.push_back(std::move(head));
    }
    out.mlp = detail::select_channels(layers_[l].mlp, m, off.mlp[l]);
    layers.push_back(std::move(out));
  }
  return std::make_unique<TinyTransformerModel>(token_embedding_, position_embedding_,
                                                std::move(layers), unembedding_, seed_);
}

ModelSpec TinyTransformerModel::spec() const {
  ModelSpec s;
  s.kind = kind();
  s.seed = seed_;
  s.dims["layers"] = static_cast<std::int64_t>(layers_.size());
  s.dims["vocab"] = static_cast<std::int64_t>(vocab_size());
  s.dims["seq_len"] = static_cast<std::int64_t>(max_seq_len());
  s.dims["model_dim"] = static_cast<std::int64_t>(model_dim());
  s.tensors["tok_emb"] = Tensor::from_matrix(token_embedding_);
  s.tensors["pos_emb"] = Tensor::from_matrix(position_embedding_);
  s.tensors["unembed"] = Tensor::from_matrix(unembedding_);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    s.dims[p + "heads"] = static_cast<std::int64_t>(layers_[l].heads.size());
    s.dims[p + "channels"] = layers_[l].mlp.wu.cols();
    for (std::size_t h = 0; h < layers_[l].heads.size(); ++h) {
      const std::string hp = p + "head" + std::to_string(h) + ".";
      s.tensors[hp + "wq"] = Tensor::from_matrix(layers_[l].heads[h].wq);
      s.tensors[hp + "wk"] = Tensor::from_matrix(layers_[l].heads[h].wk);
      s.tensors[hp + "wv"] = Tensor::from_matrix(layers_[l].heads[h].wv);
      s.tensors[hp + "wo"] = Tensor::from_matrix(layers_[l].heads[h].wo);
    }
    s.tensors[p + "mlp.wu"] = Tensor::from_matrix(layers_[l].mlp.wu);
    s.tensors[p + "mlp.wg"] = Tensor::from_matrix(layers_[l].mlp.wg);
    s.tensors[p + "mlp.wd"] = Tensor::from_matrix(layers_[l].mlp.wd);
  }
  return s;
}

std::unique_ptr<TinyTransformerModel> TinyTransformerModel::from_spec(const ModelSpec& spec) {
  detail::require_kind(spec, ModelKind::kTinyTransformer);
  const auto n = detail::dim_at(spec, "layers");
  std::vector<TransformerLayer> layers;
  for (std::int64_t l = 0; l < n; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    TransformerLayer layer;
    const auto heads = detail::dim_at(spec, p + "heads");
    for (std::int64_t h = 0; h < heads; ++h) {
      const std::string hp = p + "head" + std::to_string(h) + ".";
      layer.heads.push_back({detail::matrix_at(spec, hp + "wq"), detail::matrix_at(spec, hp + "wk"),
                             detail::matrix_at(spec, hp + "wv"), detail::matrix_at(spec, hp + "wo")});
    }
    layer.mlp = {detail::matrix_at(spec, p + "mlp.wu"), detail::matrix_at(spec, p + "mlp.wg"),
                 detail::matrix_at(spec, p + "mlp.wd")};
    layers.push_back(std::move(layer));
  }
  return std::make_unique<TinyTransformerModel>(
      detail::matrix_at(spec, "tok_emb"), detail::matrix_at(spec, "pos_emb"), std::move(layers),
      detail::matrix_at(spec, "unembed"), spec.seed);
}

}  // namespace ddp

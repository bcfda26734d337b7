#include "mtpv/train/backbone_trainer.hpp"

#include <cmath>

#include "mtpv/error.hpp"
#include "mtpv/nn/ops.hpp"
#include "mtpv/train/mtp_trainer.hpp"

namespace mtpv::train {

using nn::Matrix;

BackboneTrainer::BackboneTrainer(model::Backbone& backbone, const TrainConfig& cfg)
    : backbone_(backbone), cfg_(cfg), optimizer_(cfg) {
  cfg_.validate();
  grads_ = model::BackboneWeights::zeros(backbone_.config());
}

std::vector<ParamRef> BackboneTrainer::parameter_refs() {
  std::vector<Matrix*> gptrs;
  grads_.for_each([&](const std::string&, Matrix& g, bool) { gptrs.push_back(&g); });
  std::vector<ParamRef> refs;
  std::size_t i = 0;
  backbone_.mutable_weights().for_each([&](const std::string& name, Matrix& w, bool decay) {
    refs.push_back(ParamRef{name, &w, gptrs[i++], decay, false});
  });
  return refs;
}

double BackboneTrainer::loss_and_gradients(std::span<const model::TokenSequence> batch,
                                           model::BackboneWeights& grads) const {
  const auto& cfg = backbone_.config();
  const auto& w = backbone_.weights();
  const model::BlockShape shape = backbone_.block_shape();
  const int pad = cfg.pad_id();

  std::vector<model::TokenSequence> seqs;
  std::size_t scored = 0;
  for (const auto& s : batch) {
    model::TokenSequence t(s.begin(), s.begin() + std::min(s.size(), cfg_.max_train_len));
    if (t.size() < 2) continue;
    backbone_.check_tokens(t);
    for (std::size_t i = 1; i < t.size(); ++i) scored += t[i] != pad;
    seqs.push_back(std::move(t));
  }
  if (scored == 0) return 0.0;
  const double scale = 1.0 / static_cast<double>(scored);
  const Matrix lm_t = nn::transpose(w.lm_head);

  double loss = 0.0;
  for (const auto& t : seqs) {
    const std::size_t len = t.size();
    Matrix x(len, cfg.dim);
    for (std::size_t i = 0; i < len; ++i) {
      const auto src = w.embedding.row(static_cast<std::size_t>(t[i]));
      std::copy(src.begin(), src.end(), x.row(i).begin());
    }
    std::vector<model::BlockTape> tapes(cfg.n_layers);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      model::LayerCache cache(len, cfg.dim);
      x = model::decoder_forward(shape, w.layers[l], x, cache, &tapes[l]);
    }
    std::vector<double> inv_rms;
    const Matrix h = model::rms_norm_rows(x, w.final_norm, shape.norm_epsilon, &inv_rms);
    const Matrix logits = nn::matmul(h, w.lm_head);
    Matrix dlogits(len, cfg.vocab_size);
    for (std::size_t i = 0; i + 1 < len; ++i) {
      if (t[i + 1] == pad) continue;
      loss += scale * cross_entropy_row(logits.row(i), t[i + 1], scale, dlogits.row(i));
    }
    nn::matmul_tn_accumulate(h, dlogits, grads.lm_head);
    Matrix dx = model::rms_norm_rows_backward(nn::matmul(dlogits, lm_t), x, w.final_norm, inv_rms,
                                              grads.final_norm);
    for (std::size_t l = cfg.n_layers; l-- > 0;)
      dx = model::decoder_backward(shape, w.layers[l], dx, tapes[l], grads.layers[l]);
    for (std::size_t i = 0; i < len; ++i) {
      auto dst = grads.embedding.row(static_cast<std::size_t>(t[i]));
      const auto src = dx.row(i);
      for (std::size_t j = 0; j < cfg.dim; ++j) dst[j] += src[j];
    }
  }
  return loss;
}

double BackboneTrainer::batch_loss(std::span<const model::TokenSequence> batch) const {
  model::BackboneWeights scratch = model::BackboneWeights::zeros(backbone_.config());
  return loss_and_gradients(batch, scratch);
}

BackboneTrainer::StepResult BackboneTrainer::train_step(
    std::span<const model::TokenSequence> batch, std::size_t batch_id) {
  if (refs_.empty()) refs_ = parameter_refs();
  zero_grads(refs_);
  StepResult r;
  r.step = step_;
  r.loss = loss_and_gradients(batch, grads_);
  if (!std::isfinite(r.loss)) throw NonFiniteLossError(step_, batch_id, "backbone pretraining");
  if (cfg_.grad_clip) clip_grad_norm(refs_, *cfg_.grad_clip);
  r.lr = lr_schedule(step_, cfg_);
  optimizer_.step(refs_, r.lr);
  ++step_;
  return r;
}

void BackboneTrainer::finalize() {
  backbone_.mutable_weights().for_each(
      [](const std::string&, Matrix& m, bool) { nn::round_to_storage(m); });
}

}  // namespace mtpv::train

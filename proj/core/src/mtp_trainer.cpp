#include "mtpv/train/mtp_trainer.hpp"

#include <cmath>
#include <limits>

#include "mtpv/error.hpp"
#include "mtpv/nn/ops.hpp"

namespace mtpv::train {

using nn::Matrix;

TargetSequence TargetSequence::from_tokens(const TokenSequence& tokens, int pad_id) {
  TargetSequence t;
  t.tokens = tokens;
  t.mask.resize(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) t.mask[i] = tokens[i] != pad_id ? 1 : 0;
  return t;
}

double cross_entropy_row(std::span<const double> logits, int target, double scale,
                         std::span<double> dlogits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  if (!dlogits.empty()) {
    for (std::size_t j = 0; j < logits.size(); ++j) dlogits[j] = scale * std::exp(logits[j] - lse);
    dlogits[static_cast<std::size_t>(target)] -= scale;
  }
  return lse - logits[static_cast<std::size_t>(target)];
}

namespace {

std::size_t min_length(std::size_t n_modules, int offset_base) {
  return n_modules + static_cast<std::size_t>(std::max(offset_base, 0)) + 1;
}

// Target index scored by module k (1-based) at position t, or -1.
long target_index(std::size_t t, std::size_t k, int offset_base, const TargetSequence& targets) {
  const long idx = static_cast<long>(t + k) + offset_base;
  if (idx < 0 || idx >= static_cast<long>(targets.tokens.size())) return -1;
  if (!targets.mask[static_cast<std::size_t>(idx)]) return -1;
  return idx;
}

}  // namespace

MtpLoss mtp_loss(const mtp::MtpCascade& cascade, const model::HiddenStates& h0,
                 const TargetSequence& targets, int offset_base) {
  if (h0.level != 0) throw ContractError("mtp_loss expects level-0 hidden states");
  if (targets.tokens.size() != h0.values.rows() || targets.mask.size() != targets.tokens.size())
    throw ShapeError("mtp_loss: targets do not align with hidden states");
  const std::size_t n = cascade.n_modules();
  MtpLoss out;
  out.per_module.assign(n, 0.0);
  out.scored.assign(n, 0);
  model::HiddenStates h = h0;
  for (std::size_t k = 1; k <= n; ++k) {
    h = cascade.mtp_forward(k, h);
    const Matrix logits = cascade.draft_logits(h);
    double sum = 0.0;
    for (std::size_t t = 0; t < logits.rows(); ++t) {
      const long idx = target_index(t, k, offset_base, targets);
      if (idx < 0) continue;
      sum += cross_entropy_row(logits.row(t), targets.tokens[static_cast<std::size_t>(idx)]);
      ++out.scored[k - 1];
    }
    if (out.scored[k - 1] > 0) out.per_module[k - 1] = sum / static_cast<double>(out.scored[k - 1]);
    out.total += out.per_module[k - 1];
  }
  return out;
}

MtpTrainer::MtpTrainer(mtp::MtpCascade& cascade, const TrainConfig& cfg)
    : cascade_(cascade), cfg_(cfg), optimizer_(cfg) {
  cfg_.validate();
  const model::BlockShape shape = cascade_.block_shape();
  grads_.assign(cascade_.n_modules(), mtp::MtpModuleWeights::zeros(shape));
  frozen_grads_ = model::BackboneWeights::zeros(cascade_.backbone().config());
}

std::vector<ParamRef> MtpTrainer::parameter_refs() {
  std::vector<ParamRef> refs;
  auto& modules = cascade_.mutable_modules();
  for (std::size_t k = 0; k < modules.size(); ++k) {
    std::vector<Matrix*> gptrs;
    grads_[k].for_each([&](const std::string&, Matrix& g, bool) { gptrs.push_back(&g); });
    std::size_t i = 0;
    const std::string prefix = "mtp." + std::to_string(k + 1) + ".";
    modules[k].for_each([&](const std::string& name, Matrix& w, bool decay) {
      refs.push_back(ParamRef{prefix + name, &w, gptrs[i++], decay, false});
    });
  }
  // The backbone is const by construction; frozen refs expose it for
  // inspection only and never reach the optimizer's update path.
  auto& bw = const_cast<model::BackboneWeights&>(cascade_.backbone().weights());
  std::vector<Matrix*> fptrs;
  frozen_grads_.for_each([&](const std::string&, Matrix& g, bool) { fptrs.push_back(&g); });
  std::size_t i = 0;
  bw.for_each([&](const std::string& name, Matrix& w, bool decay) {
    refs.push_back(ParamRef{name, &w, fptrs[i++], decay, true});
  });
  return refs;
}

MtpLoss MtpTrainer::loss_and_gradients(std::span<const TokenSequence> batch,
                                       std::vector<mtp::MtpModuleWeights>& grads) const {
  return loss_and_gradients(batch, {}, grads);
}

MtpLoss MtpTrainer::loss_and_gradients(std::span<const TokenSequence> batch,
                                       std::span<const nn::Matrix* const> h0,
                                       std::vector<mtp::MtpModuleWeights>& grads) const {
  if (!h0.empty() && h0.size() != batch.size())
    throw ShapeError("loss_and_gradients: one h0 matrix per sequence required");
  const std::size_t n = cascade_.n_modules();
  const model::Backbone& backbone = cascade_.backbone();
  const model::BlockShape shape = cascade_.block_shape();
  const Matrix& lm = backbone.lm_head_weight();
  const int pad = backbone.config().pad_id();
  const int off = cfg_.offset_base;

  struct Prepared {
    TargetSequence targets;
    Matrix h0;
  };
  std::vector<Prepared> prepared;
  prepared.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& seq = batch[b];
    TokenSequence s(seq.begin(), seq.begin() + static_cast<long>(std::min(seq.size(), cfg_.max_train_len)));
    if (s.size() < min_length(n, off)) {
      ++skipped_;
      continue;
    }
    Prepared p;
    p.targets = TargetSequence::from_tokens(s, pad);
    if (h0.empty()) {
      p.h0 = backbone.forward_full(s).hidden;
    } else {
      if (h0[b]->rows() != s.size()) throw ShapeError("loss_and_gradients: h0 length mismatch");
      p.h0 = *h0[b];
    }
    prepared.push_back(std::move(p));
  }

  MtpLoss out;
  out.per_module.assign(n, 0.0);
  out.scored.assign(n, 0);
  for (const auto& p : prepared)
    for (std::size_t k = 1; k <= n; ++k)
      for (std::size_t t = 0; t < p.h0.rows(); ++t)
        if (target_index(t, k, off, p.targets) >= 0) ++out.scored[k - 1];

  const Matrix lm_t = nn::transpose(lm);
  for (const auto& p : prepared) {
    const std::size_t len = p.h0.rows();
    std::vector<Matrix> inputs(n + 1);
    std::vector<model::BlockTape> tapes(n);
    std::vector<Matrix> dh_loss(n);
    inputs[0] = p.h0;
    for (std::size_t k = 1; k <= n; ++k) {
      const auto& mod = cascade_.modules()[k - 1];
      const Matrix x = nn::matmul(inputs[k - 1], mod.projector);
      model::LayerCache cache(len, shape.dim);
      inputs[k] = model::decoder_forward(shape, mod.block, x, cache, &tapes[k - 1]);
      const Matrix logits = nn::matmul(inputs[k], lm);
      Matrix dlogits(len, logits.cols());
      const double scale = out.scored[k - 1] ? 1.0 / static_cast<double>(out.scored[k - 1]) : 0.0;
      double sum = 0.0;
      for (std::size_t t = 0; t < len; ++t) {
        const long idx = target_index(t, k, off, p.targets);
        if (idx < 0) continue;
        sum += cross_entropy_row(logits.row(t), p.targets.tokens[static_cast<std::size_t>(idx)],
                                 scale, dlogits.row(t));
      }
      out.per_module[k - 1] += sum * scale;
      dh_loss[k - 1] = nn::matmul(dlogits, lm_t);
    }
    Matrix carry;
    for (std::size_t k = n; k >= 1; --k) {
      const auto& mod = cascade_.modules()[k - 1];
      Matrix dh = dh_loss[k - 1];
      if (!carry.empty()) nn::add_inplace(dh, carry);
      const Matrix dx = model::decoder_backward(shape, mod.block, dh, tapes[k - 1], grads[k - 1].block);
      nn::matmul_tn_accumulate(inputs[k - 1], dx, grads[k - 1].projector);
      if (k > 1) carry = nn::matmul(dx, nn::transpose(mod.projector));
    }
  }
  for (double v : out.per_module) out.total += v;
  return out;
}

MtpLoss MtpTrainer::batch_loss(std::span<const TokenSequence> batch) const {
  std::vector<mtp::MtpModuleWeights> scratch(cascade_.n_modules(),
                                             mtp::MtpModuleWeights::zeros(cascade_.block_shape()));
  const std::size_t skipped = skipped_;
  MtpLoss l = loss_and_gradients(batch, scratch);
  skipped_ = skipped;
  return l;
}

MtpTrainer::StepResult MtpTrainer::train_step(std::span<const TokenSequence> batch,
                                              std::size_t batch_id) {
  return train_step(batch, {}, batch_id);
}

MtpTrainer::StepResult MtpTrainer::train_step(std::span<const TokenSequence> batch,
                                              std::span<const nn::Matrix* const> h0,
                                              std::size_t batch_id) {
  if (refs_.empty()) refs_ = parameter_refs();
  zero_grads(refs_);
  StepResult r;
  r.step = step_;
  r.loss = loss_and_gradients(batch, h0, grads_);
  if (!std::isfinite(r.loss.total)) {
    std::string detail = "per-module losses:";
    for (double v : r.loss.per_module) detail += " " + std::to_string(v);
    throw NonFiniteLossError(step_, batch_id, detail);
  }
  if (cfg_.grad_clip) clip_grad_norm(refs_, *cfg_.grad_clip);
  r.lr = lr_schedule(step_, cfg_);
  optimizer_.step(refs_, r.lr);
  ++step_;
  return r;
}

}  // namespace mtpv::train

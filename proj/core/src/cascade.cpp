#include "mtpv/mtp/cascade.hpp"

#include "mtpv/error.hpp"
#include "mtpv/nn/ops.hpp"
#include "mtpv/nn/rng.hpp"

namespace mtpv::mtp {

using nn::Matrix;

MtpModuleWeights MtpModuleWeights::zeros(const model::BlockShape& shape) {
  MtpModuleWeights w;
  w.projector = Matrix(shape.dim, shape.dim);
  w.block = model::BlockWeights::zeros(shape);
  return w;
}

void CascadeState::truncate(std::size_t new_len) {
  if (new_len > len)
    throw ParameterError("cascade truncate: new length " + std::to_string(new_len) +
                         " exceeds current length " + std::to_string(len));
  len = new_len;
  for (auto& c : caches) c.len = new_len;
}

MtpCascade::MtpCascade(std::shared_ptr<const model::Backbone> backbone,
                       std::vector<MtpModuleWeights> modules)
    : backbone_(std::move(backbone)), modules_(std::move(modules)) {
  if (!backbone_) throw ContractError("mtp cascade needs a backbone");
  if (modules_.empty()) throw ConfigError("mtp cascade needs at least one module");
  const std::size_t d = backbone_->config().dim;
  for (const auto& m : modules_)
    if (m.projector.rows() != d || m.projector.cols() != d || m.block.wq.rows() != d)
      throw ShapeError("mtp module weights do not match backbone dim");
}

MtpCascade MtpCascade::random(std::shared_ptr<const model::Backbone> backbone, std::uint64_t seed) {
  if (!backbone) throw ContractError("mtp cascade needs a backbone");
  const auto& cfg = backbone->config();
  nn::RngStream rng(seed, 0x3a7f);
  const model::BlockShape shape = backbone->block_shape();
  std::vector<MtpModuleWeights> modules;
  for (std::size_t k = 0; k < cfg.n_mtp_modules; ++k) {
    MtpModuleWeights w;
    w.projector = Matrix::identity(cfg.dim);
    w.block = model::BlockWeights::random(shape, 1, rng);
    modules.push_back(std::move(w));
  }
  return MtpCascade(std::move(backbone), std::move(modules));
}

Matrix MtpCascade::module_rows(std::size_t index, const Matrix& input, model::LayerCache& cache,
                               model::BlockTape* tape) const {
  const MtpModuleWeights& w = modules_[index];
  Matrix projected = nn::matmul(input, w.projector);
  return model::decoder_forward(block_shape(), w.block, projected, cache, tape);
}

HiddenStates MtpCascade::mtp_forward(std::size_t k, const HiddenStates& prev) const {
  if (k < 1 || k > modules_.size())
    throw ContractError("mtp_forward: module index " + std::to_string(k) + " out of range");
  if (prev.level != k - 1)
    throw ContractError("mtp_forward: module " + std::to_string(k) + " expects level " +
                        std::to_string(k - 1) + " input, got level " + std::to_string(prev.level));
  model::LayerCache cache(prev.values.rows(), backbone_->config().dim);
  return HiddenStates{k, module_rows(k - 1, prev.values, cache)};
}

Matrix MtpCascade::draft_logits(const HiddenStates& h) const { return backbone_->lm_head(h.values); }

CascadeState MtpCascade::make_state() const {
  const auto& cfg = backbone_->config();
  CascadeState s;
  s.caches.assign(modules_.size(), model::LayerCache(cfg.max_seq_len, cfg.dim));
  return s;
}

void MtpCascade::advance(CascadeState& state, const Matrix& backbone_hidden) const {
  if (backbone_hidden.rows() == 0) return;
  if (state.caches.size() != modules_.size()) throw ContractError("cascade state has wrong depth");
  Matrix h = backbone_hidden;
  for (std::size_t k = 0; k < modules_.size(); ++k) h = module_rows(k, h, state.caches[k]);
  state.len += backbone_hidden.rows();
}

std::vector<Draft> MtpCascade::speculate(std::span<const double> backbone_hidden_last,
                                         std::size_t position, CascadeState& state) const {
  if (state.len != position)
    throw ContractError("speculate: cascade covers " + std::to_string(state.len) +
                        " positions, hidden state is for position " + std::to_string(position));
  Matrix h(1, backbone_hidden_last.size(),
           std::vector<double>(backbone_hidden_last.begin(), backbone_hidden_last.end()));
  return advance_and_speculate(state, h);
}

std::vector<Draft> MtpCascade::advance_and_speculate(CascadeState& state,
                                                     const Matrix& backbone_hidden) const {
  if (backbone_hidden.rows() == 0) throw ContractError("speculate: no hidden rows");
  if (state.caches.size() != modules_.size()) throw ContractError("cascade state has wrong depth");
  const std::size_t last = backbone_hidden.rows() - 1;
  Matrix h = backbone_hidden;
  std::vector<Draft> drafts;
  drafts.reserve(modules_.size());
  for (std::size_t k = 0; k < modules_.size(); ++k) {
    h = module_rows(k, h, state.caches[k]);
    Draft d;
    d.level = k + 1;
    auto row = h.row(last);
    d.hidden.assign(row.begin(), row.end());
    d.logits = backbone_->lm_head(d.hidden);
    drafts.push_back(std::move(d));
  }
  state.len += backbone_hidden.rows();
  return drafts;
}

std::uint64_t MtpCascade::content_hash() const {
  std::uint64_t h = model::kFnvOffset;
  for_each_param([&](const std::string&, const Matrix& m, bool) { h = model::fnv1a_update(h, m); });
  return h;
}

model::CheckpointFile MtpCascade::to_checkpoint() const {
  model::CheckpointFile file;
  file.header = backbone_->config().to_header();
  for_each_param([&](const std::string& name, const Matrix& m, bool) { file.add(name, m); });
  return file;
}

MtpCascade MtpCascade::from_checkpoint(const model::CheckpointFile& file,
                                       std::shared_ptr<const model::Backbone> backbone) {
  if (!backbone) throw ContractError("mtp cascade needs a backbone");
  if (file.header != backbone->config().to_header())
    throw FormatError("mtp checkpoint header does not match the backbone configuration");
  const model::BlockShape shape = backbone->block_shape();
  std::vector<MtpModuleWeights> modules(backbone->config().n_mtp_modules,
                                        MtpModuleWeights::zeros(shape));
  MtpCascade cascade(std::move(backbone), std::move(modules));
  cascade.for_each_param([&](const std::string& name, Matrix& m, bool) { file.read_into(name, m); });
  return cascade;
}

void MtpCascade::save(const std::filesystem::path& path) const {
  model::save_checkpoint(path, to_checkpoint());
}

MtpCascade MtpCascade::load(const std::filesystem::path& path,
                            std::shared_ptr<const model::Backbone> backbone) {
  return from_checkpoint(model::load_checkpoint(path), std::move(backbone));
}

}  // namespace mtpv::mtp

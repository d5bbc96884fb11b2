#include "encoder.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "common.hpp"

namespace mproto {

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

int Vocabulary::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write vocabulary file: " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open vocabulary file: " + path);
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
    // The two reserved entries may or may not be present in the file.
    if (line_no == 1 && line == "<pad>") continue;
    if (line_no <= 2 && line == "<unk>") continue;
    if (line.empty()) throw io_error(path + ": empty vocabulary line " + std::to_string(line_no));
    vocab.add(line);
  }
  return vocab;
}

void FeatureStore::put(std::uint32_t sentence, std::uint32_t position,
                       const Eigen::VectorXd& value) {
  if (dim_ == 0) dim_ = static_cast<int>(value.size());
  if (value.size() != dim_) throw contract_error("feature store: inconsistent vector size");
  values_[key(sentence, position)] = value;
}

bool FeatureStore::contains(std::uint32_t sentence, std::uint32_t position) const {
  return values_.count(key(sentence, position)) > 0;
}

const Eigen::VectorXd& FeatureStore::at(std::uint32_t sentence, std::uint32_t position) const {
  auto it = values_.find(key(sentence, position));
  if (it == values_.end())
    throw input_error("feature store has no vector for sentence " + std::to_string(sentence) +
                      ", token " + std::to_string(position));
  return it->second;
}

namespace {
constexpr char kStoreMagic[8] = {'M', 'P', 'F', 'E', 'A', 'T', '1', '\0'};
}

void FeatureStore::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write feature store: " + path);
  out.write(kStoreMagic, sizeof(kStoreMagic));
  std::uint32_t dim = static_cast<std::uint32_t>(dim_);
  std::uint64_t count = values_.size();
  out.write(reinterpret_cast<const char*>(&dim), sizeof(dim));
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  // Sorted keys so the file bytes are reproducible.
  std::vector<std::uint64_t> keys;
  keys.reserve(values_.size());
  for (const auto& [k, _] : values_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  for (std::uint64_t k : keys) {
    out.write(reinterpret_cast<const char*>(&k), sizeof(k));
    const Eigen::VectorXd& v = values_.at(k);
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(v.size())));
  }
}

FeatureStore FeatureStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open feature store: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kStoreMagic, sizeof(magic)) != 0)
    throw io_error(path + ": not a feature store file");
  std::uint32_t dim = 0;
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&dim), sizeof(dim));
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  FeatureStore store(static_cast<int>(dim));
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t k = 0;
    in.read(reinterpret_cast<char*>(&k), sizeof(k));
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * dim));
    if (!in) throw io_error(path + ": truncated feature store");
    store.values_[k] = v;
  }
  return store;
}

namespace {

Eigen::MatrixXd uniform_init(Eigen::Index rows, Eigen::Index cols, double scale,
                             std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

}  // namespace

MlpEncoder::MlpEncoder(int vocab_size, int embed_dim, int hidden_dim, int feature_dim,
                       std::uint64_t seed)
    : vocab_size_(vocab_size),
      embed_dim_(embed_dim),
      hidden_dim_(hidden_dim),
      feature_dim_(feature_dim) {
  if (vocab_size < 2 || embed_dim < 1 || feature_dim < 1 || hidden_dim < 0)
    throw input_error("mlp encoder: invalid dimensions");
  std::mt19937_64 rng(seed);
  params_.push_back({"embedding", uniform_init(vocab_size, embed_dim,
                                               1.0 / std::sqrt(static_cast<double>(embed_dim)), rng)});
  const int pre_out = hidden_dim_ > 0 ? hidden_dim_ : embed_dim_;
  if (hidden_dim_ > 0) {
    params_.push_back({"w1", uniform_init(hidden_dim_, embed_dim_,
                                          1.0 / std::sqrt(static_cast<double>(embed_dim_)), rng)});
    params_.push_back({"b1", Eigen::MatrixXd::Zero(hidden_dim_, 1)});
  }
  params_.push_back({"w2", uniform_init(feature_dim_, pre_out,
                                        1.0 / std::sqrt(static_cast<double>(pre_out)), rng)});
  params_.push_back({"b2", Eigen::MatrixXd::Zero(feature_dim_, 1)});
}

Eigen::MatrixXd MlpEncoder::forward(const Batch& batch) const {
  const auto& emb = params_[0].value;
  const bool deep = hidden_dim_ > 0;
  const auto& w2 = params_[deep ? 3 : 1].value;
  const auto& b2 = params_[deep ? 4 : 2].value;

  Eigen::MatrixXd out(static_cast<Eigen::Index>(batch.size()), feature_dim_);
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const int id = batch.tokens[t].token_id;
    if (id < 0 || id >= vocab_size_)
      throw input_error("token id " + std::to_string(id) + " outside vocabulary of size " +
                        std::to_string(vocab_size_));
    Eigen::VectorXd x = emb.row(id).transpose();
    if (deep) {
      const auto& w1 = params_[1].value;
      const auto& b1 = params_[2].value;
      x = (w1 * x + b1.col(0)).array().tanh().matrix();
    }
    out.row(static_cast<Eigen::Index>(t)) = (w2 * x + b2.col(0)).transpose();
  }
  return out;
}

std::vector<Tensor> MlpEncoder::gradients(const Batch& batch,
                                          const Eigen::MatrixXd& feature_grads) const {
  if (feature_grads.rows() != static_cast<Eigen::Index>(batch.size()) ||
      feature_grads.cols() != feature_dim_)
    throw contract_error("mlp encoder: feature gradient shape mismatch");

  std::vector<Tensor> grads;
  for (const auto& p : params_)
    grads.push_back({p.name, Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols())});

  const auto& emb = params_[0].value;
  const bool deep = hidden_dim_ > 0;
  const auto& w2 = params_[deep ? 3 : 1].value;
  auto& g_emb = grads[0].value;
  auto& g_w2 = grads[deep ? 3 : 1].value;
  auto& g_b2 = grads[deep ? 4 : 2].value;

  for (std::size_t t = 0; t < batch.size(); ++t) {
    const int id = batch.tokens[t].token_id;
    if (id < 0 || id >= vocab_size_)
      throw input_error("token id " + std::to_string(id) + " outside vocabulary of size " +
                        std::to_string(vocab_size_));
    const Eigen::VectorXd e = emb.row(id).transpose();
    const Eigen::VectorXd gf = feature_grads.row(static_cast<Eigen::Index>(t)).transpose();

    if (deep) {
      const auto& w1 = params_[1].value;
      const auto& b1 = params_[2].value;
      const Eigen::VectorXd h = (w1 * e + b1.col(0)).array().tanh().matrix();
      g_w2 += gf * h.transpose();
      g_b2.col(0) += gf;
      const Eigen::VectorXd gz =
          ((w2.transpose() * gf).array() * (1.0 - h.array().square())).matrix();
      grads[1].value += gz * e.transpose();
      grads[2].value.col(0) += gz;
      g_emb.row(id) += (w1.transpose() * gz).transpose();
    } else {
      g_w2 += gf * e.transpose();
      g_b2.col(0) += gf;
      g_emb.row(id) += (w2.transpose() * gf).transpose();
    }
  }
  return grads;
}

PrecomputedEncoder::PrecomputedEncoder(std::shared_ptr<const FeatureStore> store,
                                       int vocab_size, bool token_offsets, bool linear_head)
    : store_(std::move(store)),
      vocab_size_(vocab_size),
      token_offsets_(token_offsets),
      linear_head_(linear_head) {
  if (!store_) throw input_error("precomputed encoder: feature store is required");
  if (store_->dim() < 1) throw input_error("precomputed encoder: feature store is empty");
  if (token_offsets_ && vocab_size_ < 2)
    throw input_error("precomputed encoder: token offsets need a vocabulary");
  const int d = store_->dim();
  if (token_offsets_)
    params_.push_back({"token_offsets", Eigen::MatrixXd::Zero(vocab_size_, d)});
  if (linear_head_) {
    params_.push_back({"head_w", Eigen::MatrixXd::Identity(d, d)});
    params_.push_back({"head_b", Eigen::MatrixXd::Zero(d, 1)});
  }
}

void PrecomputedEncoder::set_store(std::shared_ptr<const FeatureStore> store) {
  if (!store) throw input_error("precomputed encoder: feature store is required");
  if (store->dim() != store_->dim())
    throw input_error("precomputed encoder: replacement store has dimension " +
                      std::to_string(store->dim()) + ", expected " +
                      std::to_string(store_->dim()));
  store_ = std::move(store);
}

Eigen::MatrixXd PrecomputedEncoder::base_features(const Batch& batch) const {
  const int d = store_->dim();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(batch.size()), d);
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto& ref = batch.tokens[t];
    out.row(static_cast<Eigen::Index>(t)) = store_->at(ref.sentence, ref.position).transpose();
    if (token_offsets_) {
      if (ref.token_id < 0 || ref.token_id >= vocab_size_)
        throw input_error("token id " + std::to_string(ref.token_id) +
                          " outside vocabulary of size " + std::to_string(vocab_size_));
      out.row(static_cast<Eigen::Index>(t)) += params_[0].value.row(ref.token_id);
    }
  }
  return out;
}

Eigen::MatrixXd PrecomputedEncoder::forward(const Batch& batch) const {
  Eigen::MatrixXd x = base_features(batch);
  if (linear_head_) {
    const auto& w = params_[token_offsets_ ? 1 : 0].value;
    const auto& b = params_[token_offsets_ ? 2 : 1].value;
    x = (x * w.transpose()).rowwise() + b.col(0).transpose();
  }
  return x;
}

std::vector<Tensor> PrecomputedEncoder::gradients(const Batch& batch,
                                                  const Eigen::MatrixXd& feature_grads) const {
  if (feature_grads.rows() != static_cast<Eigen::Index>(batch.size()) ||
      feature_grads.cols() != store_->dim())
    throw contract_error("precomputed encoder: feature gradient shape mismatch");

  std::vector<Tensor> grads;
  for (const auto& p : params_)
    grads.push_back({p.name, Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols())});

  Eigen::MatrixXd gx = feature_grads;
  if (linear_head_) {
    const std::size_t wi = token_offsets_ ? 1 : 0;
    const auto& w = params_[wi].value;
    Eigen::MatrixXd x = base_features(batch);
    grads[wi].value = feature_grads.transpose() * x;
    grads[wi + 1].value.col(0) = feature_grads.colwise().sum().transpose();
    gx = feature_grads * w;
  }
  if (token_offsets_) {
    for (std::size_t t = 0; t < batch.size(); ++t)
      grads[0].value.row(batch.tokens[t].token_id) += gx.row(static_cast<Eigen::Index>(t));
  }
  return grads;
}

}  // namespace mproto

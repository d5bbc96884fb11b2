#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace mproto {

// Token string <-> dense id. Ids 0 and 1 are reserved for padding and the
// unknown token.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocabulary();

  int add(const std::string& token);            // returns existing id if present
  int id_of(const std::string& token) const;    // kUnk when absent
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::string& path) const;     // one token per line
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Externally produced feature vectors keyed by (sentence index, token
// position). Binary file layout is documented in the README.
class FeatureStore {
 public:
  FeatureStore() = default;
  explicit FeatureStore(int dim) : dim_(dim) {}

  int dim() const { return dim_; }
  std::size_t size() const { return values_.size(); }
  void put(std::uint32_t sentence, std::uint32_t position, const Eigen::VectorXd& value);
  bool contains(std::uint32_t sentence, std::uint32_t position) const;
  // input_error naming (sentence, position) when missing.
  const Eigen::VectorXd& at(std::uint32_t sentence, std::uint32_t position) const;

  void save(const std::string& path) const;
  static FeatureStore load(const std::string& path);

 private:
  static std::uint64_t key(std::uint32_t s, std::uint32_t p) {
    return (static_cast<std::uint64_t>(s) << 32) | p;
  }
  int dim_ = 0;
  std::unordered_map<std::uint64_t, Eigen::VectorXd> values_;
};

// One token occurrence inside a batch.
struct TokenRef {
  std::uint32_t sentence = 0;
  std::uint32_t position = 0;
  int token_id = 0;
};

struct Batch {
  std::vector<TokenRef> tokens;
  std::vector<int> distant;  // class indices, aligned with tokens
  std::vector<int> gold;     // empty when unavailable
  std::size_t size() const { return tokens.size(); }
};

// Named parameter tensor. Gradients are aligned with parameters() order.
struct Tensor {
  std::string name;
  Eigen::MatrixXd value;
};

// Feature producer contract: forward maps a batch to an n x D feature
// matrix; backward turns a gradient on those features into gradients for
// every parameter tensor (exact adjoint, finite-difference checked in the
// tests). Forward is deterministic given parameters and input.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual int feature_dim() const = 0;
  virtual Eigen::MatrixXd forward(const Batch& batch) const = 0;
  virtual std::vector<Tensor> gradients(const Batch& batch,
                                        const Eigen::MatrixXd& feature_grads) const = 0;
  virtual std::vector<Tensor>& parameters() = 0;
  virtual const std::vector<Tensor>& parameters() const = 0;
};

// Embedding lookup followed by a perceptron, applied per token (no context
// mixing). hidden_dim > 0 gives embed -> tanh(W1 x + b1) -> W2 h + b2;
// hidden_dim == 0 degenerates to a single linear layer embed -> W2 x + b2.
class MlpEncoder : public Encoder {
 public:
  MlpEncoder(int vocab_size, int embed_dim, int hidden_dim, int feature_dim,
             std::uint64_t seed);

  int feature_dim() const override { return feature_dim_; }
  Eigen::MatrixXd forward(const Batch& batch) const override;
  std::vector<Tensor> gradients(const Batch& batch,
                                const Eigen::MatrixXd& feature_grads) const override;
  std::vector<Tensor>& parameters() override { return params_; }
  const std::vector<Tensor>& parameters() const override { return params_; }

  int vocab_size() const { return vocab_size_; }
  int embed_dim() const { return embed_dim_; }
  int hidden_dim() const { return hidden_dim_; }

 private:
  int vocab_size_, embed_dim_, hidden_dim_, feature_dim_;
  std::vector<Tensor> params_;  // embedding, [w1, b1,] w2, b2
};

// Serves stored vectors, optionally adjusted by a trainable per-token
// offset embedding and passed through a trainable linear head. With both
// options off, forward returns the stored vectors verbatim.
class PrecomputedEncoder : public Encoder {
 public:
  PrecomputedEncoder(std::shared_ptr<const FeatureStore> store, int vocab_size,
                     bool token_offsets, bool linear_head);

  int feature_dim() const override { return store_->dim(); }
  Eigen::MatrixXd forward(const Batch& batch) const override;
  std::vector<Tensor> gradients(const Batch& batch,
                                const Eigen::MatrixXd& feature_grads) const override;
  std::vector<Tensor>& parameters() override { return params_; }
  const std::vector<Tensor>& parameters() const override { return params_; }

  bool has_token_offsets() const { return token_offsets_; }
  bool has_linear_head() const { return linear_head_; }
  int vocab_size() const { return vocab_size_; }
  void set_store(std::shared_ptr<const FeatureStore> store);

 private:
  Eigen::MatrixXd base_features(const Batch& batch) const;
  std::shared_ptr<const FeatureStore> store_;
  int vocab_size_;
  bool token_offsets_, linear_head_;
  std::vector<Tensor> params_;  // [offsets,] [head_w, head_b]
};

}  // namespace mproto

#pragma once

#include "kcfplm/nn.hpp"

#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kcf::text {

using ad::Var;

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";

// Token table, one token per line; the line number is the id.
class Vocabulary {
 public:
  static Vocabulary read(std::istream& in);
  static Vocabulary read_file(const std::string& path);
  // Special tokens first, then words by descending count and lexicographic
  // order; words seen fewer than min_count times are dropped.
  static Vocabulary build(std::span<const std::string> texts, int min_count = 1, std::size_t max_size = 50000);
  void write(std::ostream& out) const;

  std::optional<int> find(std::string_view token) const;
  int id(std::string_view token) const;  // unknown -> [UNK]
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }
  int unk_id() const { return unk_; }
  std::optional<int> cls_id() const { return find(kClsToken); }
  std::optional<int> sep_id() const { return find(kSepToken); }

 private:
  void push(std::string token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int unk_ = 0;
};

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<int> encode(std::string_view text) const = 0;
};

// Lowercased words, each looked up whole.
class WordTokenizer : public Tokenizer {
 public:
  explicit WordTokenizer(const Vocabulary& vocab) : vocab_(&vocab) {}
  std::vector<int> encode(std::string_view text) const override;

 private:
  const Vocabulary* vocab_;
};

// Lowercasing whitespace/punctuation split followed by greedy longest-match
// subword lookup with "##" continuation pieces.
class WordPieceTokenizer : public Tokenizer {
 public:
  explicit WordPieceTokenizer(const Vocabulary& vocab, std::size_t max_word_chars = 100)
      : vocab_(&vocab), max_word_chars_(max_word_chars) {}
  std::vector<int> encode(std::string_view text) const override;

 private:
  const Vocabulary* vocab_;
  std::size_t max_word_chars_;
};

std::vector<std::string> basic_split(std::string_view text);

enum class TokenizerKind { word, wordpiece };
std::unique_ptr<Tokenizer> make_tokenizer(TokenizerKind kind, const Vocabulary& vocab);

// Maps token ids of one document to a single 1 x width() summary row.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual Var encode(std::span<const int> ids, const nn::RunContext& ctx) const = 0;
  virtual int width() const = 0;
  // Longest id sequence encode() accepts.
  virtual int max_tokens() const = 0;
};

struct CompactOptions {
  int vocab_size = 0;
  int width = 64;
  int layers = 2;
  int heads = 4;
  int ff_width = 256;
  int max_positions = 512;
  double init_stddev = 0.02;
};

// Small trainable transformer: token + learned position embeddings, pre-norm
// stack, mean over token states.
class CompactEncoder : public TextEncoder {
 public:
  CompactEncoder(nn::ParameterSet& params, const std::string& name, const CompactOptions& opts, std::mt19937_64& rng);
  Var encode(std::span<const int> ids, const nn::RunContext& ctx) const override;
  int width() const override { return opts_.width; }
  int max_tokens() const override { return opts_.max_positions; }

 private:
  CompactOptions opts_;
  Var tokens_;
  Var positions_;
  nn::TransformerStack stack_;
};

struct BertOptions {
  int vocab_size = 30522;
  int width = 768;
  int layers = 12;
  int heads = 12;
  int ff_width = 3072;
  int max_positions = 512;
  int type_vocab = 2;
  double ln_eps = 1e-12;
  int cls_id = 101;
  int sep_id = 102;
};

// Post-norm GELU encoder with token-type embeddings. Wraps the content ids in
// [CLS] ... [SEP] and returns the top-layer [CLS] state. Parameters are meant
// to be filled from a converted checkpoint.
class BertEncoder : public TextEncoder {
 public:
  BertEncoder(nn::ParameterSet& params, const std::string& name, const BertOptions& opts, std::mt19937_64& rng);
  Var encode(std::span<const int> ids, const nn::RunContext& ctx) const override;
  int width() const override { return opts_.width; }
  int max_tokens() const override { return opts_.max_positions - 2; }

 private:
  BertOptions opts_;
  Var words_;
  Var positions_;
  Var types_;
  nn::LayerNorm embed_norm_;
  nn::TransformerStack stack_;
};

// One side's document encoder plus the MLP into the shared model width.
class SideEncoder {
 public:
  SideEncoder() = default;
  SideEncoder(nn::ParameterSet& params, const std::string& name, std::unique_ptr<TextEncoder> encoder,
              int model_width, std::mt19937_64& rng);

  // Empty documents map to MLP(0).
  Var encode(std::span<const int> ids, const nn::RunContext& ctx) const;
  Var encode_batch(std::span<const std::span<const int>> docs, const nn::RunContext& ctx) const;
  // The two halves of encode(): encoder summary (zeros when empty), then MLP.
  Var summarize(std::span<const int> ids, const nn::RunContext& ctx) const;
  Var project(const Var& summary) const { return project_.forward(summary); }
  const TextEncoder& encoder() const { return *encoder_; }
  // Parameter name prefix of the encoder proper (excludes the projection).
  const std::string& encoder_prefix() const { return encoder_prefix_; }

 private:
  std::shared_ptr<TextEncoder> encoder_;
  nn::Mlp2 project_;
  std::string encoder_prefix_;
};

// Elementwise sum of projected KG and text rows.
Var enhance(const Var& text_rep, const Var& kg_rep);
// User half first.
Var make_query(const Var& user, const Var& item);

}  // namespace kcf::text

#include "kcfplm/textenc.hpp"

#include "kcfplm/aspects.hpp"
#include "kcfplm/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>

namespace kcf::text {

void Vocabulary::push(std::string token) {
  const int id = static_cast<int>(tokens_.size());
  if (!index_.emplace(token, id).second) fail(ErrorKind::input, "duplicate vocabulary token: " + token);
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::read(std::istream& in) {
  Vocabulary v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    v.push(line);
  }
  const auto unk = v.find(kUnkToken);
  if (!unk) fail(ErrorKind::input, std::string("vocabulary has no ") + kUnkToken + " entry");
  v.unk_ = *unk;
  return v;
}

Vocabulary Vocabulary::read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::input, "cannot open vocabulary file: " + path);
  return read(in);
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, int min_count, std::size_t max_size) {
  std::map<std::string, int> counts;
  for (const auto& t : texts)
    for (auto& w : aspects::word_tokens(t)) ++counts[w];
  std::vector<std::pair<std::string, int>> words(counts.begin(), counts.end());
  std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const char* s : {kPadToken, kUnkToken, kClsToken, kSepToken}) v.push(s);
  v.unk_ = 1;
  for (auto& [w, c] : words) {
    if (c < min_count || static_cast<std::size_t>(v.size()) >= max_size) break;
    v.push(w);
  }
  return v;
}

void Vocabulary::write(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id(std::string_view token) const { return find(token).value_or(unk_); }

std::vector<int> WordTokenizer::encode(std::string_view text) const {
  std::vector<int> out;
  for (const auto& w : aspects::word_tokens(text)) out.push_back(vocab_->id(w));
  return out;
}

namespace {

bool is_punct(unsigned char c) {
  return (c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) || (c >= 123 && c <= 126);
}

}  // namespace

std::vector<std::string> basic_split(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c) || c == 0) {
      flush();
    } else if (c < 128 && std::iscntrl(c)) {
      continue;
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(c < 128 ? std::tolower(c) : c));
    }
  }
  flush();
  return out;
}

std::vector<int> WordPieceTokenizer::encode(std::string_view text) const {
  std::vector<int> out;
  for (const auto& word : basic_split(text)) {
    if (word.size() > max_word_chars_) {
      out.push_back(vocab_->unk_id());
      continue;
    }
    std::vector<int> pieces;
    std::size_t start = 0;
    bool bad = false;
    while (start < word.size()) {
      std::size_t end = word.size();
      std::optional<int> hit;
      while (end > start) {
        std::string piece = word.substr(start, end - start);
        if (start > 0) piece = "##" + piece;
        hit = vocab_->find(piece);
        if (hit) break;
        --end;
      }
      if (!hit) {
        bad = true;
        break;
      }
      pieces.push_back(*hit);
      start = end;
    }
    if (bad)
      out.push_back(vocab_->unk_id());
    else
      out.insert(out.end(), pieces.begin(), pieces.end());
  }
  return out;
}

namespace {

std::vector<int> iota_ids(std::size_t n) {
  std::vector<int> out(n);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

void check_ids(std::span<const int> ids, int vocab, int max_tokens) {
  require(static_cast<int>(ids.size()) <= max_tokens,
          "document of " + std::to_string(ids.size()) + " tokens exceeds encoder limit " + std::to_string(max_tokens));
  for (int id : ids) require(id >= 0 && id < vocab, "token id " + std::to_string(id) + " outside vocabulary");
}

}  // namespace

CompactEncoder::CompactEncoder(nn::ParameterSet& params, const std::string& name, const CompactOptions& opts,
                               std::mt19937_64& rng)
    : opts_(opts) {
  require(opts.vocab_size > 0, "compact encoder needs a vocabulary");
  tokens_ = params.add(name + ".token_embedding", nn::normal_matrix(opts.vocab_size, opts.width, opts.init_stddev, rng));
  positions_ =
      params.add(name + ".position_embedding", nn::normal_matrix(opts.max_positions, opts.width, opts.init_stddev, rng));
  nn::TransformerOptions t;
  t.width = opts.width;
  t.heads = opts.heads;
  t.ff_width = opts.ff_width;
  t.pre_norm = true;
  t.activation = nn::Activation::gelu;
  stack_ = nn::TransformerStack(params, name + ".stack", opts.layers, t, rng);
}

Var CompactEncoder::encode(std::span<const int> ids, const nn::RunContext& ctx) const {
  require(!ids.empty(), "compact encoder: empty input");
  check_ids(ids, opts_.vocab_size, opts_.max_positions);
  const auto pos = iota_ids(ids.size());
  Var x = ad::gather_rows(tokens_, ids) + ad::gather_rows(positions_, pos);
  return ad::mean_rows(stack_.forward(ctx.drop(x), ctx));
}

BertEncoder::BertEncoder(nn::ParameterSet& params, const std::string& name, const BertOptions& opts,
                         std::mt19937_64& rng)
    : opts_(opts) {
  words_ = params.add(name + ".word_embeddings", nn::normal_matrix(opts.vocab_size, opts.width, 0.02, rng));
  positions_ = params.add(name + ".position_embeddings", nn::normal_matrix(opts.max_positions, opts.width, 0.02, rng));
  types_ = params.add(name + ".token_type_embeddings", nn::normal_matrix(opts.type_vocab, opts.width, 0.02, rng));
  embed_norm_ = nn::LayerNorm(params, name + ".embed_norm", opts.width, opts.ln_eps);
  nn::TransformerOptions t;
  t.width = opts.width;
  t.heads = opts.heads;
  t.ff_width = opts.ff_width;
  t.pre_norm = false;
  t.activation = nn::Activation::gelu;
  t.ln_eps = opts.ln_eps;
  stack_ = nn::TransformerStack(params, name + ".stack", opts.layers, t, rng);
}

Var BertEncoder::encode(std::span<const int> ids, const nn::RunContext& ctx) const {
  check_ids(ids, opts_.vocab_size, max_tokens());
  std::vector<int> wrapped;
  wrapped.reserve(ids.size() + 2);
  wrapped.push_back(opts_.cls_id);
  wrapped.insert(wrapped.end(), ids.begin(), ids.end());
  wrapped.push_back(opts_.sep_id);
  const auto pos = iota_ids(wrapped.size());
  const std::vector<int> type(wrapped.size(), 0);
  Var x = ad::gather_rows(words_, wrapped) + ad::gather_rows(positions_, pos) + ad::gather_rows(types_, type);
  x = ctx.drop(embed_norm_.forward(x));
  return ad::slice_rows(stack_.forward(x, ctx), 0, 1);
}

SideEncoder::SideEncoder(nn::ParameterSet& params, const std::string& name, std::unique_ptr<TextEncoder> encoder,
                         int model_width, std::mt19937_64& rng)
    : encoder_(std::move(encoder)), encoder_prefix_(name + ".encoder") {
  project_ = nn::Mlp2(params, name + ".project", encoder_->width(), model_width, model_width, rng);
}

Var SideEncoder::encode(std::span<const int> ids, const nn::RunContext& ctx) const {
  if (ids.empty()) return project_.forward(ad::zeros(1, encoder_->width()));
  return project_.forward(encoder_->encode(ids, ctx));
}

Var SideEncoder::summarize(std::span<const int> ids, const nn::RunContext& ctx) const {
  return ids.empty() ? ad::zeros(1, encoder_->width()) : encoder_->encode(ids, ctx);
}

Var SideEncoder::encode_batch(std::span<const std::span<const int>> docs, const nn::RunContext& ctx) const {
  std::vector<Var> pooled;
  pooled.reserve(docs.size());
  for (auto d : docs) pooled.push_back(d.empty() ? ad::zeros(1, encoder_->width()) : encoder_->encode(d, ctx));
  return project_.forward(ad::concat_rows(pooled));
}

Var enhance(const Var& text_rep, const Var& kg_rep) {
  require(text_rep.rows() == kg_rep.rows() && text_rep.cols() == kg_rep.cols(),
          "enhance: text and graph representations differ in shape");
  return text_rep + kg_rep;
}

Var make_query(const Var& user, const Var& item) {
  require(user.rows() == item.rows(), "make_query: row count mismatch");
  return ad::concat_cols(user, item);
}

std::unique_ptr<Tokenizer> make_tokenizer(TokenizerKind kind, const Vocabulary& vocab) {
  if (kind == TokenizerKind::wordpiece) return std::make_unique<WordPieceTokenizer>(vocab);
  return std::make_unique<WordTokenizer>(vocab);
}

}  // namespace kcf::text

#include "del/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace del {

namespace {

uint64_t sub_seed(uint64_t seed, uint64_t k) {
  uint64_t z = seed + k * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void append(std::vector<Param>& dst, std::vector<Param> src) {
  for (auto& p : src) dst.push_back(std::move(p));
}

}  // namespace

void ModelConfig::validate() const {
  if (architecture != "flat" && architecture != "hierarchical")
    throw std::invalid_argument("architecture must be flat or hierarchical: " +
                                architecture);
  if (encoder != "lstm" && encoder != "utrs")
    throw std::invalid_argument("encoder must be lstm or utrs: " + encoder);
  if (hidden_size < 1) throw std::invalid_argument("hidden_size must be >= 1");
  if (embed_dim < 1) throw std::invalid_argument("embed_dim must be >= 1");
  if (mlp_hidden < 1) throw std::invalid_argument("mlp_hidden must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw std::invalid_argument("dropout must lie in [0, 1)");
  if (encoder == "utrs") {
    if (hops < 1) throw std::invalid_argument("hops must be >= 1");
    if (n_heads < 1) throw std::invalid_argument("n_heads must be >= 1");
    if (ffn_filters < 1)
      throw std::invalid_argument("ffn_filters must be >= 1");
    if (hidden_size % n_heads != 0)
      throw std::invalid_argument("hidden_size must be divisible by n_heads");
    if (bidirectional)
      throw std::invalid_argument("bidirectional applies to the lstm encoder");
  }
}

std::string model_config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["architecture"] = cfg.architecture;
  j["encoder"] = cfg.encoder;
  j["hidden_size"] = cfg.hidden_size;
  j["embed_dim"] = cfg.embed_dim;
  j["dropout"] = cfg.dropout;
  j["n_heads"] = cfg.n_heads;
  j["hops"] = cfg.hops;
  j["ffn_filters"] = cfg.ffn_filters;
  j["mlp_hidden"] = cfg.mlp_hidden;
  j["embed_source"] = cfg.embed_source;
  j["freeze_embeddings"] = cfg.freeze_embeddings;
  j["bidirectional"] = cfg.bidirectional;
  j["seed"] = cfg.seed;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad model config json: ") +
                                e.what());
  }
  if (!j.is_object())
    throw std::invalid_argument("model config must be a json object");
  static const std::set<std::string> known = {
      "architecture", "encoder",      "hidden_size",       "embed_dim",
      "dropout",      "n_heads",      "hops",              "ffn_filters",
      "mlp_hidden",   "embed_source", "freeze_embeddings", "bidirectional",
      "seed"};
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      throw std::invalid_argument("unknown model config key: " + item.key());
  ModelConfig cfg;
  try {
    if (j.contains("architecture")) cfg.architecture = j["architecture"];
    if (j.contains("encoder")) cfg.encoder = j["encoder"];
    if (j.contains("hidden_size")) cfg.hidden_size = j["hidden_size"];
    if (j.contains("embed_dim")) cfg.embed_dim = j["embed_dim"];
    if (j.contains("dropout")) cfg.dropout = j["dropout"];
    if (j.contains("n_heads")) cfg.n_heads = j["n_heads"];
    if (j.contains("hops")) cfg.hops = j["hops"];
    if (j.contains("ffn_filters")) cfg.ffn_filters = j["ffn_filters"];
    if (j.contains("mlp_hidden")) cfg.mlp_hidden = j["mlp_hidden"];
    if (j.contains("embed_source")) cfg.embed_source = j["embed_source"];
    if (j.contains("freeze_embeddings"))
      cfg.freeze_embeddings = j["freeze_embeddings"];
    if (j.contains("bidirectional")) cfg.bidirectional = j["bidirectional"];
    if (j.contains("seed")) cfg.seed = j["seed"];
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad model config value: ") +
                                e.what());
  }
  cfg.validate();
  return cfg;
}

// ---- encoders ---------------------------------------------------------

namespace {

class LstmEncoder : public SeqEncoder {
 public:
  LstmEncoder(int in_dim, int hidden, Rng& rng) : cell_(in_dim, hidden, rng) {}

  Tensor forward(const Tensor& x, const Mask& mask) override {
    return cell_.forward(x, mask);
  }
  Tensor backward(const Tensor& dh) override {
    return cell_.backward(dh, {}, {});
  }
  int out_dim() const override { return cell_.hidden; }
  Tensor final_state(const Tensor& h) const override {
    Tensor f({cell_.hidden});
    auto last = h.row(h.dim(0) - 1);
    std::copy(last.begin(), last.end(), f.data());
    return f;
  }
  void add_final_grad(Tensor& dh, const Tensor& dfinal) const override {
    auto last = dh.row(dh.dim(0) - 1);
    for (int j = 0; j < cell_.hidden; ++j) last[j] += dfinal(j);
  }
  std::vector<Param> params(const std::string& prefix) override {
    return cell_.params(prefix);
  }
  void clear_cache() override { cell_.clear_cache(); }

 private:
  Lstm cell_;
};

class BiLstmEncoder : public SeqEncoder {
 public:
  BiLstmEncoder(int in_dim, int hidden, Rng& rng)
      : cell_(in_dim, hidden, rng) {}

  Tensor forward(const Tensor& x, const Mask& mask) override {
    return cell_.forward(x, mask);
  }
  Tensor backward(const Tensor& dh) override { return cell_.backward(dh); }
  int out_dim() const override { return 2 * cell_.hidden; }
  Tensor final_state(const Tensor& h) const override {
    int hd = cell_.hidden;
    Tensor f({2 * hd});
    auto last = h.row(h.dim(0) - 1);
    auto first = h.row(0);
    for (int j = 0; j < hd; ++j) {
      f(j) = last[j];
      f(hd + j) = first[hd + j];
    }
    return f;
  }
  void add_final_grad(Tensor& dh, const Tensor& dfinal) const override {
    int hd = cell_.hidden;
    auto last = dh.row(dh.dim(0) - 1);
    auto first = dh.row(0);
    for (int j = 0; j < hd; ++j) {
      last[j] += dfinal(j);
      first[hd + j] += dfinal(hd + j);
    }
  }
  std::vector<Param> params(const std::string& prefix) override {
    return cell_.params(prefix);
  }
  void clear_cache() override { cell_.clear_cache(); }

 private:
  BiLstm cell_;
};

class UtrsEncoder : public SeqEncoder {
 public:
  UtrsEncoder(int in_dim, const ModelConfig& cfg, Rng& rng)
      : proj_(in_dim, cfg.hidden_size, rng),
        block_(cfg.hidden_size, cfg.n_heads, cfg.ffn_filters, cfg.hops, rng) {}

  Tensor forward(const Tensor& x, const Mask& mask) override {
    return block_.forward(proj_.forward(x), mask);
  }
  Tensor backward(const Tensor& dh) override {
    return proj_.backward(block_.backward(dh));
  }
  int out_dim() const override { return block_.model_dim; }
  Tensor final_state(const Tensor& h) const override {
    Tensor f({block_.model_dim});
    auto last = h.row(h.dim(0) - 1);
    std::copy(last.begin(), last.end(), f.data());
    return f;
  }
  void add_final_grad(Tensor& dh, const Tensor& dfinal) const override {
    auto last = dh.row(dh.dim(0) - 1);
    for (int j = 0; j < block_.model_dim; ++j) last[j] += dfinal(j);
  }
  std::vector<Param> params(const std::string& prefix) override {
    std::vector<Param> out = proj_.params(prefix + ".proj");
    append(out, block_.params(prefix + ".block"));
    return out;
  }
  void clear_cache() override {
    proj_.clear_cache();
    block_.clear_cache();
  }

 private:
  Linear proj_;
  UtrsBlock block_;
};

const ModelConfig& validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}

Embedding build_embedding(const ModelConfig& cfg, const Vocabulary& vocab) {
  Embedding e = [&] {
    if (!cfg.embed_source.empty())
      return Embedding(
          load_word_vectors(cfg.embed_source, vocab, cfg.embed_dim, cfg.seed));
    Rng rng(sub_seed(cfg.seed, 1));
    return Embedding(vocab.size(), cfg.embed_dim, rng);
  }();
  e.frozen = cfg.freeze_embeddings;
  return e;
}

std::unique_ptr<SeqEncoder> build_encoder(const ModelConfig& cfg, int in_dim,
                                          uint64_t stream) {
  Rng rng(sub_seed(cfg.seed, stream));
  return make_encoder(cfg, in_dim, rng);
}

AttnPool build_pool(int dim, const ModelConfig& cfg, uint64_t stream) {
  Rng rng(sub_seed(cfg.seed, stream));
  return AttnPool(dim, rng);
}

MlpHead build_head(int in_dim, const ModelConfig& cfg, uint64_t stream) {
  Rng rng(sub_seed(cfg.seed, stream));
  return MlpHead(in_dim, cfg.mlp_hidden, kNumLabels, rng);
}

Tensor as_row(const Tensor& v) { return Tensor({1, v.dim(0)}, v.values()); }

Tensor apply_drop_mask(const Tensor& dy, const Tensor& mask) {
  Tensor out = dy;
  for (size_t i = 0; i < out.values().size(); ++i)
    out.data()[i] *= mask.values()[i];
  return out;
}

}  // namespace

std::unique_ptr<SeqEncoder> make_encoder(const ModelConfig& cfg, int in_dim,
                                         Rng& rng) {
  if (cfg.encoder == "lstm") {
    if (cfg.bidirectional)
      return std::make_unique<BiLstmEncoder>(in_dim, cfg.hidden_size, rng);
    return std::make_unique<LstmEncoder>(in_dim, cfg.hidden_size, rng);
  }
  return std::make_unique<UtrsEncoder>(in_dim, cfg, rng);
}

// ---- flat model ---------------------------------------------------------

FlatModel::FlatModel(const ModelConfig& cfg, const Vocabulary& vocab)
    : cfg_(validated(cfg)),
      vocab_(vocab),
      embed_(build_embedding(cfg, vocab)),
      enc_(build_encoder(cfg, cfg.embed_dim, 2)),
      pool_(build_pool(enc_->out_dim(), cfg, 3)),
      head_(build_head(enc_->out_dim(), cfg, 4)),
      dropout_rng_(sub_seed(cfg.seed, 1000)) {}

Tensor FlatModel::forward(const Dialogue& d, bool training) {
  std::vector<int> ids = flatten_dialogue(d, vocab_);
  bool any_token = false;
  for (int id : ids)
    if (id != Vocabulary::kSep) any_token = true;
  if (!any_token) ids = {Vocabulary::kUnk};
  return forward_ids(ids, training);
}

Tensor FlatModel::forward_ids(const std::vector<int>& ids, bool training) {
  if (ids.empty()) throw std::invalid_argument("forward_ids: empty sequence");
  Mask mask(ids.size(), 1);
  for (size_t t = 0; t < ids.size(); ++t)
    mask[t] = ids[t] != Vocabulary::kPad ? 1 : 0;
  Tensor x = embed_.forward(ids);
  Tensor h = enc_->forward(x, mask);
  Tensor s = pool_.forward(h, mask);
  Tensor drop_mask;
  Tensor dropped =
      dropout(as_row(s), cfg_.dropout, dropout_rng_, training, &drop_mask);
  drop_masks_.push_back(std::move(drop_mask));
  Tensor logits = head_.forward(dropped);
  return Tensor({kNumLabels}, logits.values());
}

void FlatModel::backward(const Tensor& dlogits) {
  if (dlogits.ndim() != 1 || dlogits.dim(0) != kNumLabels)
    throw std::invalid_argument("backward: dlogits must be [4]");
  if (drop_masks_.empty())
    throw std::logic_error("backward without matching forward");
  Tensor ddrop = head_.backward(as_row(dlogits));
  Tensor ds2 = apply_drop_mask(ddrop, drop_masks_.back());
  drop_masks_.pop_back();
  Tensor ds({ds2.dim(1)}, ds2.values());
  Tensor dh = pool_.backward(ds);
  Tensor dx = enc_->backward(dh);
  embed_.backward(dx);
}

std::vector<Param> FlatModel::parameters() {
  std::vector<Param> ps;
  append(ps, embed_.params("embed"));
  append(ps, enc_->params("enc"));
  append(ps, pool_.params("pool"));
  append(ps, head_.params("head"));
  return ps;
}

std::vector<Param> FlatModel::state_tensors() {
  std::vector<Param> ps;
  if (embed_.frozen) ps.push_back({"embed.table", &embed_.table, &embed_.dtable});
  append(ps, parameters());
  return ps;
}

void FlatModel::clear_cache() {
  embed_.clear_cache();
  enc_->clear_cache();
  pool_.clear_cache();
  head_.clear_cache();
  drop_masks_.clear();
}

// ---- hierarchical model ---------------------------------------------------

HierModel::HierModel(const ModelConfig& cfg, const Vocabulary& vocab)
    : cfg_(validated(cfg)),
      vocab_(vocab),
      embed_(build_embedding(cfg, vocab)),
      word_enc_(build_encoder(cfg, cfg.embed_dim, 2)),
      word_pool_(build_pool(word_enc_->out_dim(), cfg, 3)),
      turn_enc_(build_encoder(cfg, word_enc_->out_dim(), 4)),
      head_(build_head(turn_enc_->out_dim(), cfg, 5)),
      dropout_rng_(sub_seed(cfg.seed, 1000)) {}

Tensor HierModel::forward(const Dialogue& d, bool training) {
  std::array<std::vector<int>, 3> turns;
  for (int k = 0; k < 3; ++k) {
    turns[k] = turn_ids(d.turns[k], vocab_);
    if (turns[k].empty()) turns[k] = {Vocabulary::kUnk};
  }
  return forward_ids(turns, training);
}

Tensor HierModel::forward_ids(const std::array<std::vector<int>, 3>& turns,
                              bool training) {
  int wout = word_enc_->out_dim();
  Tensor u({3, wout});
  for (int k = 0; k < 3; ++k) {
    const auto& ids = turns[k];
    if (ids.empty())
      throw std::invalid_argument("forward_ids: empty turn sequence");
    Mask mask(ids.size(), 1);
    for (size_t t = 0; t < ids.size(); ++t)
      mask[t] = ids[t] != Vocabulary::kPad ? 1 : 0;
    Tensor x = embed_.forward(ids);
    Tensor h = word_enc_->forward(x, mask);
    Tensor s = word_pool_.forward(h, mask);
    auto row = u.row(k);
    std::copy(s.values().begin(), s.values().end(), row.begin());
    turn_vectors_[k] = s;
  }
  Tensor ht = turn_enc_->forward(u, ones_mask(3));
  Tensor f = turn_enc_->final_state(ht);
  Tensor drop_mask;
  Tensor dropped =
      dropout(as_row(f), cfg_.dropout, dropout_rng_, training, &drop_mask);
  drop_masks_.push_back(std::move(drop_mask));
  Tensor logits = head_.forward(dropped);
  return Tensor({kNumLabels}, logits.values());
}

void HierModel::backward(const Tensor& dlogits) {
  if (dlogits.ndim() != 1 || dlogits.dim(0) != kNumLabels)
    throw std::invalid_argument("backward: dlogits must be [4]");
  if (drop_masks_.empty())
    throw std::logic_error("backward without matching forward");
  Tensor ddrop = head_.backward(as_row(dlogits));
  Tensor df2 = apply_drop_mask(ddrop, drop_masks_.back());
  drop_masks_.pop_back();
  Tensor df({df2.dim(1)}, df2.values());
  Tensor dht({3, turn_enc_->out_dim()});
  turn_enc_->add_final_grad(dht, df);
  Tensor du = turn_enc_->backward(dht);
  int wout = word_enc_->out_dim();
  for (int k = 2; k >= 0; --k) {
    Tensor ds({wout});
    auto row = du.row(k);
    std::copy(row.begin(), row.end(), ds.data());
    Tensor dh = word_pool_.backward(ds);
    Tensor dx = word_enc_->backward(dh);
    embed_.backward(dx);
  }
}

std::vector<Param> HierModel::parameters() {
  std::vector<Param> ps;
  append(ps, embed_.params("embed"));
  append(ps, word_enc_->params("word_enc"));
  append(ps, word_pool_.params("word_pool"));
  append(ps, turn_enc_->params("turn_enc"));
  append(ps, head_.params("head"));
  return ps;
}

std::vector<Param> HierModel::state_tensors() {
  std::vector<Param> ps;
  if (embed_.frozen) ps.push_back({"embed.table", &embed_.table, &embed_.dtable});
  append(ps, parameters());
  return ps;
}

void HierModel::clear_cache() {
  embed_.clear_cache();
  word_enc_->clear_cache();
  word_pool_.clear_cache();
  turn_enc_->clear_cache();
  head_.clear_cache();
  drop_masks_.clear();
}

std::unique_ptr<Classifier> make_classifier(const ModelConfig& cfg,
                                            const Vocabulary& vocab) {
  cfg.validate();
  if (cfg.architecture == "flat")
    return std::make_unique<FlatModel>(cfg, vocab);
  return std::make_unique<HierModel>(cfg, vocab);
}

// ---- checkpoints ----------------------------------------------------------

namespace {

void write_f32_le(std::ostream& out, double v) {
  float f = static_cast<float>(v);
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  char b[4] = {static_cast<char>(bits & 0xff),
               static_cast<char>((bits >> 8) & 0xff),
               static_cast<char>((bits >> 16) & 0xff),
               static_cast<char>((bits >> 24) & 0xff)};
  out.write(b, 4);
}

double read_f32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  uint32_t bits = static_cast<uint32_t>(b[0]) |
                  (static_cast<uint32_t>(b[1]) << 8) |
                  (static_cast<uint32_t>(b[2]) << 16) |
                  (static_cast<uint32_t>(b[3]) << 24);
  float f;
  std::memcpy(&f, &bits, 4);
  return static_cast<double>(f);
}

}  // namespace

void save_checkpoint(const std::string& path, Classifier& model) {
  std::vector<Param> tensors = model.state_tensors();
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out << "delckpt 1\n";
  out << model_config_to_json(model.config()) << "\n";
  const auto& tokens = model.vocabulary().tokens();
  out << "vocab " << tokens.size() << "\n";
  for (const auto& t : tokens) out << t << "\n";
  out << "tensors " << tensors.size() << "\n";
  for (const auto& p : tensors) {
    out << p.name << " " << p.value->ndim();
    for (int i = 0; i < p.value->ndim(); ++i) out << " " << p.value->dim(i);
    out << " float32\n";
  }
  out << "payload\n";
  for (const auto& p : tensors)
    for (double v : p.value->values()) write_f32_le(out, v);
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

std::unique_ptr<Classifier> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  auto fail = [&](const std::string& why) {
    throw std::runtime_error("bad checkpoint " + path + ": " + why);
  };
  std::string line;
  if (!std::getline(in, line) || line != "delckpt 1") fail("unknown format");
  if (!std::getline(in, line)) fail("missing config");
  ModelConfig cfg = model_config_from_json(line);
  // Payload weights make the file self-contained; the original word-vector
  // file is not consulted again.
  cfg.embed_source.clear();

  if (!std::getline(in, line)) fail("missing vocab header");
  std::istringstream vh(line);
  std::string tag;
  long n_tokens = -1;
  vh >> tag >> n_tokens;
  if (tag != "vocab" || n_tokens < 3) fail("bad vocab header");
  Vocabulary vocab;
  for (long i = 0; i < n_tokens; ++i) {
    if (!std::getline(in, line)) fail("truncated vocab");
    if (i < 3) {
      if (line != vocab.token(static_cast<int>(i)))
        fail("reserved token mismatch: " + line);
    } else {
      vocab.add(line);
    }
  }

  if (!std::getline(in, line)) fail("missing tensor header");
  std::istringstream th(line);
  long n_tensors = -1;
  th >> tag >> n_tensors;
  if (tag != "tensors" || n_tensors < 0) fail("bad tensor header");
  struct Entry {
    std::string name;
    std::vector<int> shape;
  };
  std::vector<Entry> entries;
  for (long i = 0; i < n_tensors; ++i) {
    if (!std::getline(in, line)) fail("truncated manifest");
    std::istringstream es(line);
    Entry e;
    int ndim = -1;
    es >> e.name >> ndim;
    if (ndim < 1) fail("bad tensor entry: " + line);
    e.shape.resize(static_cast<size_t>(ndim));
    for (int d = 0; d < ndim; ++d) {
      es >> e.shape[static_cast<size_t>(d)];
      if (e.shape[static_cast<size_t>(d)] < 1)
        fail("bad tensor shape: " + line);
    }
    std::string dtype;
    es >> dtype;
    if (dtype != "float32") fail("unsupported dtype: " + dtype);
    entries.push_back(std::move(e));
  }
  if (!std::getline(in, line) || line != "payload") fail("missing payload");

  std::unique_ptr<Classifier> model = make_classifier(cfg, vocab);
  std::vector<Param> tensors = model->state_tensors();
  std::unordered_map<std::string, Tensor*> by_name;
  for (const auto& p : tensors) by_name[p.name] = p.value;
  if (entries.size() != tensors.size()) fail("tensor count mismatch");
  for (const auto& e : entries) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) fail("unexpected tensor: " + e.name);
    Tensor* t = it->second;
    if (t->shape() != e.shape) fail("shape mismatch for " + e.name);
    for (double& v : t->values()) v = read_f32_le(in);
    if (!in) fail("truncated payload");
  }
  return model;
}

// ---- feature-based logistic regression ------------------------------------

Tensor lr_forward(const LogregModel& model, std::span<const double> x) {
  int d = model.w.dim(0);
  if (static_cast<int>(x.size()) != d)
    throw std::invalid_argument("lr_forward: feature dimension mismatch");
  Tensor logits({kNumLabels});
  for (int c = 0; c < kNumLabels; ++c) logits(c) = model.b(c);
  for (int j = 0; j < d; ++j) {
    double xv = x[j];
    if (xv == 0.0) continue;
    for (int c = 0; c < kNumLabels; ++c) logits(c) += xv * model.w(j, c);
  }
  return logits;
}

namespace {

double lr_objective(const FeatureMatrix& f, const std::vector<Label>& y,
                    const Tensor& w, const Tensor& b, double l2, Tensor* gw,
                    Tensor* gb) {
  int n = f.rows();
  int d = f.dim();
  if (gw) {
    *gw = Tensor({d, kNumLabels});
    *gb = Tensor({kNumLabels});
  }
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    auto x = f.values.row(i);
    double logits[kNumLabels];
    for (int c = 0; c < kNumLabels; ++c) logits[c] = b(c);
    for (int j = 0; j < d; ++j) {
      double xv = x[j];
      if (xv == 0.0) continue;
      for (int c = 0; c < kNumLabels; ++c) logits[c] += xv * w(j, c);
    }
    double mx = logits[0];
    for (int c = 1; c < kNumLabels; ++c) mx = std::max(mx, logits[c]);
    double z = 0.0, p[kNumLabels];
    for (int c = 0; c < kNumLabels; ++c) {
      p[c] = std::exp(logits[c] - mx);
      z += p[c];
    }
    int gold = static_cast<int>(y[static_cast<size_t>(i)]);
    loss += -(logits[gold] - mx - std::log(z));
    if (gw) {
      for (int c = 0; c < kNumLabels; ++c) {
        double g = (p[c] / z - (c == gold ? 1.0 : 0.0)) / n;
        (*gb)(c) += g;
        for (int j = 0; j < d; ++j)
          if (x[j] != 0.0) (*gw)(j, c) += x[j] * g;
      }
    }
  }
  loss /= n;
  double reg = 0.0;
  for (double v : w.values()) reg += v * v;
  loss += 0.5 * l2 * reg;
  if (gw)
    for (size_t i = 0; i < w.values().size(); ++i)
      gw->data()[i] += l2 * w.values()[i];
  return loss;
}

double grad_norm2(const Tensor& gw, const Tensor& gb) {
  double s = 0.0;
  for (double v : gw.values()) s += v * v;
  for (double v : gb.values()) s += v * v;
  return s;
}

}  // namespace

double lr_loss_grad(const LogregModel& model, const FeatureMatrix& features,
                    const std::vector<Label>& labels, double l2,
                    LogregModel* grad) {
  if (features.rows() != static_cast<int>(labels.size()))
    throw std::invalid_argument("lr_loss_grad: feature/label size mismatch");
  Tensor gw, gb;
  double loss = lr_objective(features, labels, model.w, model.b, l2,
                             grad ? &gw : nullptr, grad ? &gb : nullptr);
  if (grad) {
    grad->w = std::move(gw);
    grad->b = std::move(gb);
  }
  return loss;
}

LogregModel lr_train(const FeatureMatrix& features,
                     const std::vector<Label>& labels, double l2, int epochs,
                     LogregReport* report, double tol) {
  if (features.rows() == 0)
    throw std::invalid_argument("lr_train: empty feature matrix");
  if (features.rows() != static_cast<int>(labels.size()))
    throw std::invalid_argument("lr_train: feature/label count mismatch");
  if (l2 < 0.0) throw std::invalid_argument("lr_train: negative l2");
  if (epochs < 1) throw std::invalid_argument("lr_train: epochs must be >= 1");

  LogregModel m{Tensor({features.dim(), kNumLabels}), Tensor({kNumLabels})};
  if (report) *report = LogregReport{};
  double step = 1.0;
  for (int e = 0; e < epochs; ++e) {
    Tensor gw, gb;
    double loss = lr_objective(features, labels, m.w, m.b, l2, &gw, &gb);
    double gn2 = grad_norm2(gw, gb);
    if (report) {
      report->losses.push_back(loss);
      report->epochs_run = e + 1;
    }
    if (std::sqrt(gn2) < tol) break;
    // Backtracking line search with the Armijo condition.
    double t = step * 2.0;
    bool moved = false;
    while (t > 1e-14) {
      Tensor wt = m.w, bt = m.b;
      for (size_t i = 0; i < wt.values().size(); ++i)
        wt.data()[i] -= t * gw.values()[i];
      for (size_t i = 0; i < bt.values().size(); ++i)
        bt.data()[i] -= t * gb.values()[i];
      double trial = lr_objective(features, labels, wt, bt, l2, nullptr,
                                  nullptr);
      if (trial <= loss - 1e-4 * t * gn2) {
        m.w = std::move(wt);
        m.b = std::move(bt);
        step = t;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;  // numerically converged
  }
  if (report) {
    Tensor gw, gb;
    lr_objective(features, labels, m.w, m.b, l2, &gw, &gb);
    report->grad_norm = std::sqrt(grad_norm2(gw, gb));
  }
  return m;
}

std::vector<Label> lr_predict(const LogregModel& model,
                              const FeatureMatrix& features) {
  std::vector<Label> out;
  out.reserve(static_cast<size_t>(features.rows()));
  for (int i = 0; i < features.rows(); ++i) {
    Tensor logits = lr_forward(model, features.values.row(i));
    int best = 0;
    for (int c = 1; c < kNumLabels; ++c)
      if (logits(c) > logits(best)) best = c;
    out.push_back(static_cast<Label>(best));
  }
  return out;
}

}  // namespace del

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "del/gradcheck.hpp"
#include "del/rng.hpp"
#include "del/tensor.hpp"

namespace del {

using Mask = std::vector<uint8_t>;  // 1 = real position, 0 = <pad>

Mask ones_mask(int n);

// Glorot-uniform fill: limit sqrt(6 / (fan_in + fan_out)).
void glorot_init(Tensor& w, int fan_in, int fan_out, Rng& rng);

void zero_params(const std::vector<Param>& params);   // zeroes grads
long param_count(const std::vector<Param>& params);   // total coordinates

// Every layer below follows the same protocol: forward() pushes an
// activation cache, backward() pops the most recent one (LIFO), so a layer
// instance may run several forwards (shared weights across turns or hops)
// as long as the backwards come in reverse order. Parameter gradients
// accumulate until zeroed.

// ---- linear -------------------------------------------------------------

// y = x W + b with W [in x out].
struct Linear {
  Tensor w, b, dw, db;

  Linear() = default;
  Linear(int in, int out, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  std::vector<Param> params(const std::string& prefix);
  void clear_cache() { cache_.clear(); }

 private:
  std::vector<Tensor> cache_;
};

struct Relu {
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  void clear_cache() { cache_.clear(); }

 private:
  std::vector<Tensor> cache_;
};

// ---- embedding ----------------------------------------------------------

// Row gather over a [vocab x dim] table. The <pad> row is all zero and
// receives no updates as long as pad ids never occur in training input.
struct Embedding {
  Tensor table, dtable;
  bool frozen = false;

  Embedding() = default;
  Embedding(int vocab_size, int dim, Rng& rng);  // uniform(-0.05, 0.05), pad row zero
  explicit Embedding(Tensor table_in);

  int dim() const { return table.dim(1); }
  Tensor forward(const std::vector<int>& ids);
  void backward(const Tensor& dx);
  std::vector<Param> params(const std::string& prefix);
  void clear_cache() { cache_.clear(); }

 private:
  std::vector<std::vector<int>> cache_;
};

// ---- lstm ---------------------------------------------------------------

// Single-direction LSTM. Gate order follows the usual i, f, o, g naming:
// sigmoid input/forget/output gates, tanh candidate. Masked steps copy
// h and c through unchanged. Forget bias starts at 1.
struct Lstm {
  // input weights [d x h], recurrent weights [h x h], biases [h]
  Tensor w_i, w_f, w_o, w_g;
  Tensor u_i, u_f, u_o, u_g;
  Tensor b_i, b_f, b_o, b_g;
  Tensor dw_i, dw_f, dw_o, dw_g;
  Tensor du_i, du_f, du_o, du_g;
  Tensor db_i, db_f, db_o, db_g;
  int input_dim = 0, hidden = 0;

  Lstm() = default;
  Lstm(int input_dim, int hidden, Rng& rng);

  // Returns H [T x h]; masked rows hold the carried-through state, so the
  // last row is always the final hidden state.
  Tensor forward(const Tensor& x, const Mask& mask);
  // dh_seq may be empty (treated as zero); dh_last / dc_last add gradient
  // on the final h / c. Returns dX.
  Tensor backward(const Tensor& dh_seq, const std::vector<double>& dh_last,
                  const std::vector<double>& dc_last);
  std::vector<double> last_c() const;  // final cell state, most recent forward
  std::vector<Param> params(const std::string& prefix);
  void clear_cache() { cache_.clear(); }

 private:
  struct Cache {
    Tensor x;
    Mask mask;
    Tensor gi, gf, go, gg;  // gate activations per step [T x h]
    Tensor c, tc, h;        // cell, tanh(cell), hidden [T x h]
  };
  std::vector<Cache> cache_;
};

// Forward and reversed Lstm with concatenated outputs [T x 2h]. The final
// state is [forward h_T | backward h_T], i.e. row T-1's first half and
// row 0's second half.
struct BiLstm {
  Lstm fwd, bwd;
  int hidden = 0;

  BiLstm() = default;
  BiLstm(int input_dim, int hidden, Rng& rng);

  Tensor forward(const Tensor& x, const Mask& mask);
  Tensor backward(const Tensor& dh_seq);
  std::vector<Param> params(const std::string& prefix);
  void clear_cache();
};

// ---- attention ----------------------------------------------------------

// Additive word-level attention: e_t = v . tanh(W h_t), alpha = softmax
// over unmasked positions, s = sum alpha_t h_t. Throws when every position
// is masked.
struct AttnPool {
  Tensor w, v, dw, dv;  // w [h x h], v [h]
  int hidden = 0;

  AttnPool() = default;
  AttnPool(int hidden, Rng& rng);

  Tensor forward(const Tensor& h_seq, const Mask& mask);  // -> [h]
  Tensor backward(const Tensor& ds);                      // -> dH [T x h]
  std::vector<double> last_weights() const;  // alpha of the last forward
  std::vector<Param> params(const std::string& prefix);
  void clear_cache() { cache_.clear(); }

 private:
  struct Cache {
    Tensor h_seq, u;
    Mask mask;
    std::vector<double> alpha;
  };
  std::vector<Cache> cache_;
};

// Scaled dot-product multi-head self-attention with output projection.
// Masked key positions receive zero attention weight. model_dim must be
// divisible by n_heads.
struct Mha {
  Linear wq, wk, wv, wo;
  int model_dim = 0, n_heads = 0;

  Mha() = default;
  Mha(int model_dim, int n_heads, Rng& rng);

  Tensor forward(const Tensor& x, const Mask& mask);
  Tensor backward(const Tensor& dy);
  std::vector<Param> params(const std::string& prefix);
  void clear_cache();

 private:
  struct Cache {
    Tensor q, k, v, attn, concat;  // attn is [n_heads x T x T]
    Mask mask;
  };
  std::vector<Cache> cache_;
};

// Per-row layer normalization with learned gain/bias.
struct LayerNorm {
  Tensor gamma, beta, dgamma, dbeta;
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(int dim);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  std::vector<Param> params(const std::string& prefix);
  void clear_cache() { cache_.clear(); }

 private:
  struct Cache {
    Tensor xhat;
    std::vector<double> inv_std;
  };
  std::vector<Cache> cache_;
};

// Position-wise feed-forward, inner width `filters` (the kernel-size-1
// convolution block).
struct Ffn {
  Linear in, out;
  Relu relu;

  Ffn() = default;
  Ffn(int dim, int filters, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);
  std::vector<Param> params(const std::string& prefix);
  void clear_cache();
};

// Universal-transformer block: the same attention + feed-forward weights
// applied for `hops` rounds, post-norm residuals, sinusoidal position and
// hop encodings added at the start of every hop. Parameter count is
// independent of the hop count.
struct UtrsBlock {
  Mha mha;
  Ffn ffn;
  LayerNorm ln_attn, ln_ffn;
  int model_dim = 0, hops = 1;

  UtrsBlock() = default;
  UtrsBlock(int model_dim, int n_heads, int filters, int hops, Rng& rng);

  Tensor forward(const Tensor& x, const Mask& mask);
  Tensor backward(const Tensor& dy);
  std::vector<Param> params(const std::string& prefix);
  void clear_cache();
};

// Sinusoidal encoding row for one index (shared by position and hop
// encodings).
void add_sinusoidal_row(double* row, int dim, int index);

// ---- classifier head ------------------------------------------------------

// One hidden relu layer then a linear map to the class logits.
struct MlpHead {
  Linear hidden, out;
  Relu relu;

  MlpHead() = default;
  MlpHead(int in_dim, int hidden_dim, int out_dim, Rng& rng);

  Tensor forward(const Tensor& x);   // [1 x in] -> [1 x out]
  Tensor backward(const Tensor& dy);
  std::vector<Param> params(const std::string& prefix);
  void clear_cache();
};

}  // namespace del

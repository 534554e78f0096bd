#include "del/layers.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

namespace del {

Mask ones_mask(int n) { return Mask(static_cast<size_t>(n), 1); }

void glorot_init(Tensor& w, int fan_in, int fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  double* p = w.data();
  for (int i = 0; i < w.size(); ++i) p[i] = rng.uniform(-limit, limit);
}

void zero_params(const std::vector<Param>& params) {
  for (const Param& p : params) p.grad->fill(0.0);
}

long param_count(const std::vector<Param>& params) {
  long n = 0;
  for (const Param& p : params) n += p.value->size();
  return n;
}

// ---- linear -------------------------------------------------------------

Linear::Linear(int in, int out, Rng& rng)
    : w({in, out}), b({out}), dw({in, out}), db({out}) {
  glorot_init(w, in, out, rng);
}

Tensor Linear::forward(const Tensor& x) {
  if (x.ndim() != 2 || x.dim(1) != w.dim(0))
    throw std::invalid_argument("linear: input width does not match " +
                                std::to_string(w.dim(0)));
  Tensor y = matmul(x, w);
  for (int t = 0; t < y.dim(0); ++t) {
    double* row = y.row(t).data();
    for (int j = 0; j < y.dim(1); ++j) row[j] += b(j);
  }
  cache_.push_back(x);
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  if (cache_.empty()) throw std::logic_error("linear: backward without forward");
  Tensor x = std::move(cache_.back());
  cache_.pop_back();
  matmul_tn_accum(x, dy, dw);
  for (int t = 0; t < dy.dim(0); ++t) {
    const double* row = dy.row(t).data();
    for (int j = 0; j < dy.dim(1); ++j) db(j) += row[j];
  }
  return matmul_nt(dy, w);
}

std::vector<Param> Linear::params(const std::string& prefix) {
  return {{prefix + ".w", &w, &dw}, {prefix + ".b", &b, &db}};
}

Tensor Relu::forward(const Tensor& x) {
  Tensor y = elementwise(x, Activation::relu);
  cache_.push_back(y);
  return y;
}

Tensor Relu::backward(const Tensor& dy) {
  if (cache_.empty()) throw std::logic_error("relu: backward without forward");
  Tensor y = std::move(cache_.back());
  cache_.pop_back();
  Tensor dx(dy.shape());
  for (int i = 0; i < dy.size(); ++i)
    dx.data()[i] =
        dy.data()[i] * activate_grad_from_output(y.data()[i], Activation::relu);
  return dx;
}

// ---- embedding ----------------------------------------------------------

Embedding::Embedding(int vocab_size, int dim, Rng& rng)
    : table({vocab_size, dim}), dtable({vocab_size, dim}) {
  double* p = table.data();
  for (int i = 0; i < table.size(); ++i) p[i] = rng.uniform(-0.05, 0.05);
  for (int j = 0; j < dim; ++j) table(0, j) = 0.0;  // <pad>
}

Embedding::Embedding(Tensor table_in)
    : table(std::move(table_in)), dtable(table.shape()) {}

Tensor Embedding::forward(const std::vector<int>& ids) {
  if (ids.empty()) throw std::invalid_argument("embedding: empty id sequence");
  Tensor x({static_cast<int>(ids.size()), dim()});
  for (size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || ids[t] >= table.dim(0))
      throw std::out_of_range("embedding: id " + std::to_string(ids[t]) +
                              " outside vocabulary of " +
                              std::to_string(table.dim(0)));
    const double* src = table.row(ids[t]).data();
    double* dst = x.row(static_cast<int>(t)).data();
    for (int j = 0; j < dim(); ++j) dst[j] = src[j];
  }
  cache_.push_back(ids);
  return x;
}

void Embedding::backward(const Tensor& dx) {
  if (cache_.empty())
    throw std::logic_error("embedding: backward without forward");
  std::vector<int> ids = std::move(cache_.back());
  cache_.pop_back();
  if (frozen) return;
  for (size_t t = 0; t < ids.size(); ++t) {
    const double* src = dx.row(static_cast<int>(t)).data();
    double* dst = dtable.row(ids[t]).data();
    for (int j = 0; j < dim(); ++j) dst[j] += src[j];
  }
}

std::vector<Param> Embedding::params(const std::string& prefix) {
  if (frozen) return {};
  return {{prefix + ".table", &table, &dtable}};
}

// ---- lstm ---------------------------------------------------------------

Lstm::Lstm(int input_dim_, int hidden_, Rng& rng)
    : w_i({input_dim_, hidden_}), w_f({input_dim_, hidden_}),
      w_o({input_dim_, hidden_}), w_g({input_dim_, hidden_}),
      u_i({hidden_, hidden_}), u_f({hidden_, hidden_}),
      u_o({hidden_, hidden_}), u_g({hidden_, hidden_}),
      b_i({hidden_}), b_f({hidden_}), b_o({hidden_}), b_g({hidden_}),
      dw_i({input_dim_, hidden_}), dw_f({input_dim_, hidden_}),
      dw_o({input_dim_, hidden_}), dw_g({input_dim_, hidden_}),
      du_i({hidden_, hidden_}), du_f({hidden_, hidden_}),
      du_o({hidden_, hidden_}), du_g({hidden_, hidden_}),
      db_i({hidden_}), db_f({hidden_}), db_o({hidden_}), db_g({hidden_}),
      input_dim(input_dim_), hidden(hidden_) {
  for (Tensor* w : {&w_i, &w_f, &w_o, &w_g})
    glorot_init(*w, input_dim, hidden, rng);
  for (Tensor* u : {&u_i, &u_f, &u_o, &u_g})
    glorot_init(*u, hidden, hidden, rng);
  b_f.fill(1.0);
}

Tensor Lstm::forward(const Tensor& x, const Mask& mask) {
  if (x.ndim() != 2 || x.dim(1) != input_dim)
    throw std::invalid_argument("lstm: bad input shape");
  int t_len = x.dim(0);
  if (static_cast<int>(mask.size()) != t_len)
    throw std::invalid_argument("lstm: mask length != sequence length");
  int h = hidden;

  Cache cc;
  cc.x = x;
  cc.mask = mask;
  for (Tensor* g : {&cc.gi, &cc.gf, &cc.go, &cc.gg, &cc.c, &cc.tc, &cc.h})
    *g = Tensor({t_len, h});

  // batched input projections, one matmul per gate
  Tensor pi = matmul(x, w_i), pf = matmul(x, w_f);
  Tensor po = matmul(x, w_o), pg = matmul(x, w_g);

  std::vector<double> pre_i(h), pre_f(h), pre_o(h), pre_g(h);
  std::vector<double> h_prev(h, 0.0), c_prev(h, 0.0);
  for (int t = 0; t < t_len; ++t) {
    double* hr = cc.h.row(t).data();
    double* cr = cc.c.row(t).data();
    if (!mask[t]) {
      for (int j = 0; j < h; ++j) {
        hr[j] = h_prev[j];
        cr[j] = c_prev[j];
      }
      continue;
    }
    for (int j = 0; j < h; ++j) {
      pre_i[j] = pi(t, j) + b_i(j);
      pre_f[j] = pf(t, j) + b_f(j);
      pre_o[j] = po(t, j) + b_o(j);
      pre_g[j] = pg(t, j) + b_g(j);
    }
    for (int p = 0; p < h; ++p) {
      double hp = h_prev[p];
      if (hp == 0.0) continue;
      const double* ui = u_i.row(p).data();
      const double* uf = u_f.row(p).data();
      const double* uo = u_o.row(p).data();
      const double* ug = u_g.row(p).data();
      for (int j = 0; j < h; ++j) {
        pre_i[j] += hp * ui[j];
        pre_f[j] += hp * uf[j];
        pre_o[j] += hp * uo[j];
        pre_g[j] += hp * ug[j];
      }
    }
    double* gi = cc.gi.row(t).data();
    double* gf = cc.gf.row(t).data();
    double* go = cc.go.row(t).data();
    double* gg = cc.gg.row(t).data();
    double* tc = cc.tc.row(t).data();
    for (int j = 0; j < h; ++j) {
      gi[j] = 1.0 / (1.0 + std::exp(-pre_i[j]));
      gf[j] = 1.0 / (1.0 + std::exp(-pre_f[j]));
      go[j] = 1.0 / (1.0 + std::exp(-pre_o[j]));
      gg[j] = std::tanh(pre_g[j]);
      cr[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
      tc[j] = std::tanh(cr[j]);
      hr[j] = go[j] * tc[j];
    }
    for (int j = 0; j < h; ++j) {
      h_prev[j] = hr[j];
      c_prev[j] = cr[j];
    }
  }
  Tensor out = cc.h;
  cache_.push_back(std::move(cc));
  return out;
}

std::vector<double> Lstm::last_c() const {
  if (cache_.empty()) throw std::logic_error("lstm: no pending forward");
  const Cache& cc = cache_.back();
  auto row = cc.c.row(cc.c.dim(0) - 1);
  return std::vector<double>(row.begin(), row.end());
}

Tensor Lstm::backward(const Tensor& dh_seq, const std::vector<double>& dh_last,
                      const std::vector<double>& dc_last) {
  if (cache_.empty()) throw std::logic_error("lstm: backward without forward");
  Cache cc = std::move(cache_.back());
  cache_.pop_back();
  int t_len = cc.x.dim(0);
  int h = hidden;
  if (!dh_seq.empty() && (dh_seq.dim(0) != t_len || dh_seq.dim(1) != h))
    throw std::invalid_argument("lstm: bad dh_seq shape");

  Tensor dpi({t_len, h}), dpf({t_len, h}), dpo({t_len, h}), dpg({t_len, h});
  std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0);
  if (!dh_last.empty()) dh_next.assign(dh_last.begin(), dh_last.end());
  if (!dc_last.empty()) dc_next.assign(dc_last.begin(), dc_last.end());

  std::vector<double> dh(h), dc(h), di(h), df(h), do_(h), dg(h);
  for (int t = t_len - 1; t >= 0; --t) {
    for (int j = 0; j < h; ++j)
      dh[j] = dh_next[j] + (dh_seq.empty() ? 0.0 : dh_seq(t, j));
    if (!cc.mask[t]) {
      dh_next = dh;  // state copied through, gradient passes unchanged
      continue;
    }
    const double* gi = cc.gi.row(t).data();
    const double* gf = cc.gf.row(t).data();
    const double* go = cc.go.row(t).data();
    const double* gg = cc.gg.row(t).data();
    const double* tc = cc.tc.row(t).data();
    // rows carry copies through masked steps, so t-1 is the previous state
    const double* c_prev = t > 0 ? cc.c.row(t - 1).data() : nullptr;
    const double* h_prev = t > 0 ? cc.h.row(t - 1).data() : nullptr;
    for (int j = 0; j < h; ++j) {
      dc[j] = dc_next[j] + dh[j] * go[j] * (1.0 - tc[j] * tc[j]);
      do_[j] = dh[j] * tc[j] * go[j] * (1.0 - go[j]);
      di[j] = dc[j] * gg[j] * gi[j] * (1.0 - gi[j]);
      df[j] = dc[j] * (c_prev ? c_prev[j] : 0.0) * gf[j] * (1.0 - gf[j]);
      dg[j] = dc[j] * gi[j] * (1.0 - gg[j] * gg[j]);
      dc_next[j] = dc[j] * gf[j];
    }
    for (int j = 0; j < h; ++j) {
      dpi(t, j) = di[j];
      dpf(t, j) = df[j];
      dpo(t, j) = do_[j];
      dpg(t, j) = dg[j];
      db_i(j) += di[j];
      db_f(j) += df[j];
      db_o(j) += do_[j];
      db_g(j) += dg[j];
    }
    for (int p = 0; p < h; ++p) {
      const double* ui = u_i.row(p).data();
      const double* uf = u_f.row(p).data();
      const double* uo = u_o.row(p).data();
      const double* ug = u_g.row(p).data();
      double s = 0.0;
      for (int j = 0; j < h; ++j)
        s += di[j] * ui[j] + df[j] * uf[j] + do_[j] * uo[j] + dg[j] * ug[j];
      dh_next[p] = s;
    }
    if (h_prev) {
      for (int p = 0; p < h; ++p) {
        double hp = h_prev[p];
        if (hp == 0.0) continue;
        double* dui = du_i.row(p).data();
        double* duf = du_f.row(p).data();
        double* duo = du_o.row(p).data();
        double* dug = du_g.row(p).data();
        for (int j = 0; j < h; ++j) {
          dui[j] += hp * di[j];
          duf[j] += hp * df[j];
          duo[j] += hp * do_[j];
          dug[j] += hp * dg[j];
        }
      }
    }
  }
  matmul_tn_accum(cc.x, dpi, dw_i);
  matmul_tn_accum(cc.x, dpf, dw_f);
  matmul_tn_accum(cc.x, dpo, dw_o);
  matmul_tn_accum(cc.x, dpg, dw_g);
  Tensor dx = matmul_nt(dpi, w_i);
  matmul_nt_accum(dpf, w_f, dx);
  matmul_nt_accum(dpo, w_o, dx);
  matmul_nt_accum(dpg, w_g, dx);
  return dx;
}

std::vector<Param> Lstm::params(const std::string& prefix) {
  return {{prefix + ".w_i", &w_i, &dw_i}, {prefix + ".w_f", &w_f, &dw_f},
          {prefix + ".w_o", &w_o, &dw_o}, {prefix + ".w_g", &w_g, &dw_g},
          {prefix + ".u_i", &u_i, &du_i}, {prefix + ".u_f", &u_f, &du_f},
          {prefix + ".u_o", &u_o, &du_o}, {prefix + ".u_g", &u_g, &du_g},
          {prefix + ".b_i", &b_i, &db_i}, {prefix + ".b_f", &b_f, &db_f},
          {prefix + ".b_o", &b_o, &db_o}, {prefix + ".b_g", &b_g, &db_g}};
}

// ---- bilstm ---------------------------------------------------------------

namespace {

Tensor reverse_rows(const Tensor& x) {
  Tensor y(x.shape());
  int t_len = x.dim(0), w = x.dim(1);
  for (int t = 0; t < t_len; ++t) {
    const double* src = x.row(t).data();
    double* dst = y.row(t_len - 1 - t).data();
    for (int j = 0; j < w; ++j) dst[j] = src[j];
  }
  return y;
}

}  // namespace

BiLstm::BiLstm(int input_dim, int hidden_, Rng& rng)
    : fwd(input_dim, hidden_, rng), bwd(input_dim, hidden_, rng),
      hidden(hidden_) {}

Tensor BiLstm::forward(const Tensor& x, const Mask& mask) {
  Tensor hf = fwd.forward(x, mask);
  Mask rmask(mask.rbegin(), mask.rend());
  Tensor hb = reverse_rows(bwd.forward(reverse_rows(x), rmask));
  int t_len = x.dim(0);
  Tensor out({t_len, 2 * hidden});
  for (int t = 0; t < t_len; ++t) {
    double* dst = out.row(t).data();
    const double* f = hf.row(t).data();
    const double* b = hb.row(t).data();
    for (int j = 0; j < hidden; ++j) dst[j] = f[j];
    for (int j = 0; j < hidden; ++j) dst[hidden + j] = b[j];
  }
  return out;
}

Tensor BiLstm::backward(const Tensor& dh_seq) {
  int t_len = dh_seq.dim(0);
  Tensor df({t_len, hidden}), db({t_len, hidden});
  for (int t = 0; t < t_len; ++t) {
    const double* src = dh_seq.row(t).data();
    double* f = df.row(t).data();
    double* b = db.row(t).data();
    for (int j = 0; j < hidden; ++j) f[j] = src[j];
    for (int j = 0; j < hidden; ++j) b[j] = src[hidden + j];
  }
  // reverse order of the forwards
  Tensor dx = reverse_rows(bwd.backward(reverse_rows(db), {}, {}));
  Tensor dxf = fwd.backward(df, {}, {});
  for (int i = 0; i < dx.size(); ++i) dx.data()[i] += dxf.data()[i];
  return dx;
}

std::vector<Param> BiLstm::params(const std::string& prefix) {
  std::vector<Param> out = fwd.params(prefix + ".fwd");
  std::vector<Param> rest = bwd.params(prefix + ".bwd");
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

void BiLstm::clear_cache() {
  fwd.clear_cache();
  bwd.clear_cache();
}

// ---- attention pool -------------------------------------------------------

AttnPool::AttnPool(int hidden_, Rng& rng)
    : w({hidden_, hidden_}), v({hidden_}), dw({hidden_, hidden_}),
      dv({hidden_}), hidden(hidden_) {
  glorot_init(w, hidden, hidden, rng);
  glorot_init(v, hidden, 1, rng);
}

Tensor AttnPool::forward(const Tensor& h_seq, const Mask& mask) {
  if (h_seq.ndim() != 2 || h_seq.dim(1) != hidden)
    throw std::invalid_argument("attn_pool: bad input shape");
  int t_len = h_seq.dim(0);
  if (static_cast<int>(mask.size()) != t_len)
    throw std::invalid_argument("attn_pool: mask length != sequence length");

  Cache cc;
  cc.h_seq = h_seq;
  cc.mask = mask;
  cc.u = matmul(h_seq, w);
  for (int i = 0; i < cc.u.size(); ++i)
    cc.u.data()[i] = std::tanh(cc.u.data()[i]);

  std::vector<double> e(t_len, 0.0);
  double max_e = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < t_len; ++t) {
    if (!mask[t]) continue;
    const double* ur = cc.u.row(t).data();
    double s = 0.0;
    for (int j = 0; j < hidden; ++j) s += ur[j] * v(j);
    e[t] = s;
    max_e = std::max(max_e, s);
  }
  if (max_e == -std::numeric_limits<double>::infinity())
    throw std::invalid_argument("attn_pool: every position is masked");

  cc.alpha.assign(t_len, 0.0);
  double z = 0.0;
  for (int t = 0; t < t_len; ++t) {
    if (!mask[t]) continue;
    cc.alpha[t] = std::exp(e[t] - max_e);
    z += cc.alpha[t];
  }
  for (int t = 0; t < t_len; ++t) cc.alpha[t] /= z;

  Tensor s({hidden});
  for (int t = 0; t < t_len; ++t) {
    if (cc.alpha[t] == 0.0) continue;
    const double* hr = h_seq.row(t).data();
    for (int j = 0; j < hidden; ++j) s(j) += cc.alpha[t] * hr[j];
  }
  cache_.push_back(std::move(cc));
  return s;
}

std::vector<double> AttnPool::last_weights() const {
  if (cache_.empty()) throw std::logic_error("attn_pool: no pending forward");
  return cache_.back().alpha;
}

Tensor AttnPool::backward(const Tensor& ds) {
  if (cache_.empty())
    throw std::logic_error("attn_pool: backward without forward");
  Cache cc = std::move(cache_.back());
  cache_.pop_back();
  int t_len = cc.h_seq.dim(0);

  Tensor dh({t_len, hidden});
  std::vector<double> dalpha(t_len, 0.0);
  for (int t = 0; t < t_len; ++t) {
    if (!cc.mask[t]) continue;
    const double* hr = cc.h_seq.row(t).data();
    double* dhr = dh.row(t).data();
    double s = 0.0;
    for (int j = 0; j < hidden; ++j) {
      s += hr[j] * ds(j);
      dhr[j] = cc.alpha[t] * ds(j);
    }
    dalpha[t] = s;
  }
  double mix = 0.0;
  for (int t = 0; t < t_len; ++t) mix += cc.alpha[t] * dalpha[t];

  Tensor dz({t_len, hidden});
  for (int t = 0; t < t_len; ++t) {
    if (!cc.mask[t]) continue;
    double de = cc.alpha[t] * (dalpha[t] - mix);
    const double* ur = cc.u.row(t).data();
    double* dzr = dz.row(t).data();
    for (int j = 0; j < hidden; ++j) {
      dv(j) += de * ur[j];
      dzr[j] = de * v(j) * (1.0 - ur[j] * ur[j]);
    }
  }
  matmul_tn_accum(cc.h_seq, dz, dw);
  matmul_nt_accum(dz, w, dh);
  return dh;
}

std::vector<Param> AttnPool::params(const std::string& prefix) {
  return {{prefix + ".w", &w, &dw}, {prefix + ".v", &v, &dv}};
}

// ---- multi-head attention ---------------------------------------------------

Mha::Mha(int model_dim_, int n_heads_, Rng& rng)
    : wq(model_dim_, model_dim_, rng), wk(model_dim_, model_dim_, rng),
      wv(model_dim_, model_dim_, rng), wo(model_dim_, model_dim_, rng),
      model_dim(model_dim_), n_heads(n_heads_) {
  if (n_heads_ < 1 || model_dim_ % n_heads_ != 0)
    throw std::invalid_argument("mha: model_dim " + std::to_string(model_dim_) +
                                " not divisible into " +
                                std::to_string(n_heads_) + " heads");
}

Tensor Mha::forward(const Tensor& x, const Mask& mask) {
  if (x.ndim() != 2 || x.dim(1) != model_dim)
    throw std::invalid_argument("mha: bad input shape");
  int t_len = x.dim(0);
  if (static_cast<int>(mask.size()) != t_len)
    throw std::invalid_argument("mha: mask length != sequence length");
  bool any = false;
  for (uint8_t m : mask) any = any || m != 0;
  if (!any) throw std::invalid_argument("mha: every position is masked");

  int dh = model_dim / n_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Cache cc;
  cc.mask = mask;
  cc.q = wq.forward(x);
  cc.k = wk.forward(x);
  cc.v = wv.forward(x);
  cc.attn = Tensor({n_heads, t_len, t_len});
  cc.concat = Tensor({t_len, model_dim});

  std::vector<double> scores(t_len);
  for (int head = 0; head < n_heads; ++head) {
    int c0 = head * dh;
    for (int t = 0; t < t_len; ++t) {
      const double* qr = cc.q.row(t).data() + c0;
      double max_s = -std::numeric_limits<double>::infinity();
      for (int s = 0; s < t_len; ++s) {
        if (!mask[s]) continue;
        const double* kr = cc.k.row(s).data() + c0;
        double dot = 0.0;
        for (int e = 0; e < dh; ++e) dot += qr[e] * kr[e];
        scores[s] = dot * scale;
        max_s = std::max(max_s, scores[s]);
      }
      double z = 0.0;
      for (int s = 0; s < t_len; ++s) {
        double a = mask[s] ? std::exp(scores[s] - max_s) : 0.0;
        cc.attn(head, t, s) = a;
        z += a;
      }
      double* out = cc.concat.row(t).data() + c0;
      for (int s = 0; s < t_len; ++s) {
        double a = cc.attn(head, t, s) / z;
        cc.attn(head, t, s) = a;
        if (a == 0.0) continue;
        const double* vr = cc.v.row(s).data() + c0;
        for (int e = 0; e < dh; ++e) out[e] += a * vr[e];
      }
    }
  }
  Tensor y = wo.forward(cc.concat);
  cache_.push_back(std::move(cc));
  return y;
}

Tensor Mha::backward(const Tensor& dy) {
  if (cache_.empty()) throw std::logic_error("mha: backward without forward");
  Cache cc = std::move(cache_.back());
  cache_.pop_back();
  int t_len = cc.q.dim(0);
  int dh = model_dim / n_heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor dconcat = wo.backward(dy);
  Tensor dq({t_len, model_dim}), dk({t_len, model_dim}), dv({t_len, model_dim});

  std::vector<double> da(t_len), dscore(t_len);
  for (int head = 0; head < n_heads; ++head) {
    int c0 = head * dh;
    for (int t = 0; t < t_len; ++t) {
      const double* dor = dconcat.row(t).data() + c0;
      double mix = 0.0;
      for (int s = 0; s < t_len; ++s) {
        double a = cc.attn(head, t, s);
        if (a == 0.0) {
          da[s] = 0.0;
          continue;
        }
        const double* vr = cc.v.row(s).data() + c0;
        double dot = 0.0;
        for (int e = 0; e < dh; ++e) dot += dor[e] * vr[e];
        da[s] = dot;
        mix += a * dot;
        double* dvr = dv.row(s).data() + c0;
        for (int e = 0; e < dh; ++e) dvr[e] += a * dor[e];
      }
      double* dqr = dq.row(t).data() + c0;
      const double* qr = cc.q.row(t).data() + c0;
      for (int s = 0; s < t_len; ++s) {
        double a = cc.attn(head, t, s);
        if (a == 0.0) continue;
        double g = a * (da[s] - mix) * scale;
        const double* kr = cc.k.row(s).data() + c0;
        double* dkr = dk.row(s).data() + c0;
        for (int e = 0; e < dh; ++e) {
          dqr[e] += g * kr[e];
          dkr[e] += g * qr[e];
        }
      }
    }
  }
  // pop the projection caches in reverse order of the forwards
  Tensor dx = wv.backward(dv);
  Tensor dxk = wk.backward(dk);
  Tensor dxq = wq.backward(dq);
  for (int i = 0; i < dx.size(); ++i)
    dx.data()[i] += dxk.data()[i] + dxq.data()[i];
  return dx;
}

std::vector<Param> Mha::params(const std::string& prefix) {
  std::vector<Param> out;
  for (auto [layer, name] :
       std::initializer_list<std::pair<Linear*, const char*>>{
           {&wq, ".wq"}, {&wk, ".wk"}, {&wv, ".wv"}, {&wo, ".wo"}}) {
    auto p = layer->params(prefix + name);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

void Mha::clear_cache() {
  cache_.clear();
  wq.clear_cache();
  wk.clear_cache();
  wv.clear_cache();
  wo.clear_cache();
}

// ---- layer norm -----------------------------------------------------------

LayerNorm::LayerNorm(int dim)
    : gamma({dim}), beta({dim}), dgamma({dim}), dbeta({dim}) {
  gamma.fill(1.0);
}

Tensor LayerNorm::forward(const Tensor& x) {
  if (x.ndim() != 2 || x.dim(1) != gamma.dim(0))
    throw std::invalid_argument("layer_norm: bad input shape");
  int t_len = x.dim(0), d = x.dim(1);
  Cache cc;
  cc.xhat = Tensor({t_len, d});
  cc.inv_std.resize(t_len);
  Tensor y({t_len, d});
  for (int t = 0; t < t_len; ++t) {
    const double* xr = x.row(t).data();
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += xr[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= d;
    double inv = 1.0 / std::sqrt(var + eps);
    cc.inv_std[t] = inv;
    double* xh = cc.xhat.row(t).data();
    double* yr = y.row(t).data();
    for (int j = 0; j < d; ++j) {
      xh[j] = (xr[j] - mean) * inv;
      yr[j] = gamma(j) * xh[j] + beta(j);
    }
  }
  cache_.push_back(std::move(cc));
  return y;
}

Tensor LayerNorm::backward(const Tensor& dy) {
  if (cache_.empty())
    throw std::logic_error("layer_norm: backward without forward");
  Cache cc = std::move(cache_.back());
  cache_.pop_back();
  int t_len = dy.dim(0), d = dy.dim(1);
  Tensor dx({t_len, d});
  for (int t = 0; t < t_len; ++t) {
    const double* dyr = dy.row(t).data();
    const double* xh = cc.xhat.row(t).data();
    double m1 = 0.0, m2 = 0.0;
    for (int j = 0; j < d; ++j) {
      double dxh = dyr[j] * gamma(j);
      m1 += dxh;
      m2 += dxh * xh[j];
      dgamma(j) += dyr[j] * xh[j];
      dbeta(j) += dyr[j];
    }
    m1 /= d;
    m2 /= d;
    double* dxr = dx.row(t).data();
    for (int j = 0; j < d; ++j)
      dxr[j] = cc.inv_std[t] * (dyr[j] * gamma(j) - m1 - xh[j] * m2);
  }
  return dx;
}

std::vector<Param> LayerNorm::params(const std::string& prefix) {
  return {{prefix + ".gamma", &gamma, &dgamma},
          {prefix + ".beta", &beta, &dbeta}};
}

// ---- feed-forward -----------------------------------------------------------

Ffn::Ffn(int dim, int filters, Rng& rng)
    : in(dim, filters, rng), out(filters, dim, rng) {}

Tensor Ffn::forward(const Tensor& x) {
  return out.forward(relu.forward(in.forward(x)));
}

Tensor Ffn::backward(const Tensor& dy) {
  return in.backward(relu.backward(out.backward(dy)));
}

std::vector<Param> Ffn::params(const std::string& prefix) {
  std::vector<Param> p = in.params(prefix + ".in");
  std::vector<Param> q = out.params(prefix + ".out");
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

void Ffn::clear_cache() {
  in.clear_cache();
  out.clear_cache();
  relu.clear_cache();
}

// ---- universal transformer block ---------------------------------------------

void add_sinusoidal_row(double* row, int dim, int index) {
  for (int i = 0; 2 * i < dim; ++i) {
    double angle = index / std::pow(10000.0, (2.0 * i) / dim);
    row[2 * i] += std::sin(angle);
    if (2 * i + 1 < dim) row[2 * i + 1] += std::cos(angle);
  }
}

UtrsBlock::UtrsBlock(int model_dim_, int n_heads, int filters, int hops_,
                     Rng& rng)
    : mha(model_dim_, n_heads, rng), ffn(model_dim_, filters, rng),
      ln_attn(model_dim_), ln_ffn(model_dim_), model_dim(model_dim_),
      hops(hops_) {
  if (hops_ < 1)
    throw std::invalid_argument("utrs: hops must be >= 1, got " +
                                std::to_string(hops_));
}

Tensor UtrsBlock::forward(const Tensor& x, const Mask& mask) {
  if (x.ndim() != 2 || x.dim(1) != model_dim)
    throw std::invalid_argument("utrs: bad input shape");
  int t_len = x.dim(0);
  Tensor cur = x;
  for (int hop = 1; hop <= hops; ++hop) {
    for (int t = 0; t < t_len; ++t) {
      double* row = cur.row(t).data();
      add_sinusoidal_row(row, model_dim, t);    // position
      add_sinusoidal_row(row, model_dim, hop);  // hop, 1-based
    }
    Tensor attn = mha.forward(cur, mask);
    for (int i = 0; i < cur.size(); ++i) attn.data()[i] += cur.data()[i];
    cur = ln_attn.forward(attn);
    Tensor f = ffn.forward(cur);
    for (int i = 0; i < cur.size(); ++i) f.data()[i] += cur.data()[i];
    cur = ln_ffn.forward(f);
  }
  return cur;
}

Tensor UtrsBlock::backward(const Tensor& dy) {
  Tensor d = dy;
  for (int hop = hops; hop >= 1; --hop) {
    Tensor d2 = ln_ffn.backward(d);
    Tensor dmid = ffn.backward(d2);
    for (int i = 0; i < dmid.size(); ++i) dmid.data()[i] += d2.data()[i];
    Tensor d1 = ln_attn.backward(dmid);
    d = mha.backward(d1);
    for (int i = 0; i < d.size(); ++i) d.data()[i] += d1.data()[i];
  }
  return d;  // the added encodings are constants
}

std::vector<Param> UtrsBlock::params(const std::string& prefix) {
  std::vector<Param> out = mha.params(prefix + ".mha");
  for (auto& p : ffn.params(prefix + ".ffn")) out.push_back(p);
  for (auto& p : ln_attn.params(prefix + ".ln_attn")) out.push_back(p);
  for (auto& p : ln_ffn.params(prefix + ".ln_ffn")) out.push_back(p);
  return out;
}

void UtrsBlock::clear_cache() {
  mha.clear_cache();
  ffn.clear_cache();
  ln_attn.clear_cache();
  ln_ffn.clear_cache();
}

// ---- classifier head ----------------------------------------------------------

MlpHead::MlpHead(int in_dim, int hidden_dim, int out_dim, Rng& rng)
    : hidden(in_dim, hidden_dim, rng), out(hidden_dim, out_dim, rng) {}

Tensor MlpHead::forward(const Tensor& x) {
  return out.forward(relu.forward(hidden.forward(x)));
}

Tensor MlpHead::backward(const Tensor& dy) {
  return hidden.backward(relu.backward(out.backward(dy)));
}

std::vector<Param> MlpHead::params(const std::string& prefix) {
  std::vector<Param> p = hidden.params(prefix + ".hidden");
  std::vector<Param> q = out.params(prefix + ".out");
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

void MlpHead::clear_cache() {
  hidden.clear_cache();
  out.clear_cache();
  relu.clear_cache();
}

}  // namespace del

#include "omniloco/netcore.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "omniloco/kernels.hpp"

namespace omniloco::netcore {

// ---------------------------------------------------------------------------
// ParameterStore
// ---------------------------------------------------------------------------

Tensor& ParameterStore::add(const std::string& name,
                            std::vector<std::size_t> shape) {
  OL_REQUIRE(!has(name), "ParameterStore::add: duplicate entry " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, Tensor(std::move(shape)));
  return entries_.back().second;
}

std::size_t ParameterStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  OL_REQUIRE(it != index_.end(), "ParameterStore: no entry " + name);
  return it->second;
}

Tensor& ParameterStore::get(const std::string& name) {
  return entries_[index_of(name)].second;
}

const Tensor& ParameterStore::get(const std::string& name) const {
  return entries_[index_of(name)].second;
}

bool ParameterStore::has(const std::string& name) const {
  return index_.count(name) != 0;
}

std::size_t ParameterStore::total_params() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

namespace {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  OL_REQUIRE(!is.fail(), "ParameterStore: truncated stream");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& is) {
  const auto n = take<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  OL_REQUIRE(!is.fail(), "ParameterStore: truncated string");
  return s;
}

constexpr char kMagic[4] = {'O', 'L', 'N', 'C'};

}  // namespace

void ParameterStore::write(std::ostream& os) const {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, 1);  // version
  put<std::uint64_t>(os, init_seed);
  put_string(os, arch_tag);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, t] : entries_) {
    put_string(os, name);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(Real)));
  }
}

ParameterStore ParameterStore::read(std::istream& is,
                                    const std::string& expected_tag) {
  char magic[4];
  is.read(magic, 4);
  OL_REQUIRE(!is.fail() && std::memcmp(magic, kMagic, 4) == 0,
             "ParameterStore: bad magic");
  const auto version = take<std::uint32_t>(is);
  OL_REQUIRE(version == 1, "ParameterStore: unsupported version");
  ParameterStore p;
  p.init_seed = take<std::uint64_t>(is);
  p.arch_tag = take_string(is);
  OL_REQUIRE(expected_tag.empty() || p.arch_tag == expected_tag,
             "ParameterStore: architecture tag '" + p.arch_tag +
                 "' does not match expected '" + expected_tag + "'");
  const auto n = take<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::string name = take_string(is);
    const auto rank = take<std::uint32_t>(is);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(take<std::uint64_t>(is));
    Tensor& t = p.add(name, shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(Real)));
    OL_REQUIRE(!is.fail(), "ParameterStore: truncated tensor " + name);
  }
  return p;
}

void ParameterStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  OL_REQUIRE(os.good(), "ParameterStore::save: cannot open " + path);
  write(os);
  OL_REQUIRE(os.good(), "ParameterStore::save: write failed for " + path);
}

ParameterStore ParameterStore::load(const std::string& path,
                                    const std::string& expected_tag) {
  std::ifstream is(path, std::ios::binary);
  OL_REQUIRE(is.good(), "ParameterStore::load: cannot open " + path);
  return read(is, expected_tag);
}

// ---------------------------------------------------------------------------
// GradStore / Adam
// ---------------------------------------------------------------------------

GradStore::GradStore(const ParameterStore& p) {
  grads_.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    grads_.emplace_back(p.tensor(i).shape);
}

void GradStore::zero() {
  for (auto& g : grads_) g.fill(0);
}

void GradStore::scale(Real s) {
  for (auto& g : grads_)
    for (Real& v : g.data) v *= s;
}

void GradStore::add(const GradStore& o) {
  for (std::size_t i = 0; i < grads_.size(); ++i)
    for (std::size_t j = 0; j < grads_[i].numel(); ++j)
      grads_[i](j) += o.grads_[i](j);
}

Real clip_grad_norm(GradStore& g, const std::vector<std::size_t>& entries,
                    Real max_norm) {
  Real sq = 0;
  for (std::size_t i : entries)
    for (Real v : g.of(i).data) sq += v * v;
  const Real norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const Real s = max_norm / norm;
    for (std::size_t i : entries)
      for (Real& v : g.of(i).data) v *= s;
  }
  return norm;
}

Adam::Adam(const ParameterStore& p, std::vector<std::size_t> trainable)
    : trainable_(std::move(trainable)) {
  m_.reserve(trainable_.size());
  v_.reserve(trainable_.size());
  for (std::size_t i : trainable_) {
    m_.emplace_back(p.tensor(i).shape);
    v_.emplace_back(p.tensor(i).shape);
  }
}

void Adam::step(ParameterStore& p, const GradStore& g, const AdamConfig& cfg) {
  ++t_;
  const Real bc1 = 1.0 - std::pow(cfg.beta1, static_cast<Real>(t_));
  const Real bc2 = 1.0 - std::pow(cfg.beta2, static_cast<Real>(t_));
  for (std::size_t k = 0; k < trainable_.size(); ++k) {
    Tensor& w = p.tensor(trainable_[k]);
    const Tensor& gr = g.of(trainable_[k]);
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t j = 0; j < w.numel(); ++j) {
      m(j) = cfg.beta1 * m(j) + (1 - cfg.beta1) * gr(j);
      v(j) = cfg.beta2 * v(j) + (1 - cfg.beta2) * gr(j) * gr(j);
      const Real mh = m(j) / bc1;
      const Real vh = v(j) / bc2;
      w(j) -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

void Adam::write(std::ostream& os) const {
  put<std::uint64_t>(os, static_cast<std::uint64_t>(t_));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(trainable_.size()));
  for (std::size_t k = 0; k < trainable_.size(); ++k) {
    put<std::uint64_t>(os, static_cast<std::uint64_t>(trainable_[k]));
    os.write(reinterpret_cast<const char*>(m_[k].data.data()),
             static_cast<std::streamsize>(m_[k].numel() * sizeof(Real)));
    os.write(reinterpret_cast<const char*>(v_[k].data.data()),
             static_cast<std::streamsize>(v_[k].numel() * sizeof(Real)));
  }
}

void Adam::read(std::istream& is, const ParameterStore& p) {
  t_ = static_cast<long>(take<std::uint64_t>(is));
  const auto n = take<std::uint32_t>(is);
  OL_REQUIRE(n == trainable_.size(), "Adam::read: trainable set mismatch");
  for (std::size_t k = 0; k < trainable_.size(); ++k) {
    const auto idx = static_cast<std::size_t>(take<std::uint64_t>(is));
    OL_REQUIRE(idx == trainable_[k], "Adam::read: entry order mismatch");
    is.read(reinterpret_cast<char*>(m_[k].data.data()),
            static_cast<std::streamsize>(m_[k].numel() * sizeof(Real)));
    is.read(reinterpret_cast<char*>(v_[k].data.data()),
            static_cast<std::streamsize>(v_[k].numel() * sizeof(Real)));
    OL_REQUIRE(!is.fail(), "Adam::read: truncated state");
  }
  (void)p;
}

std::vector<std::size_t> entries_matching(
    const ParameterStore& p,
    const std::function<bool(const std::string&)>& pred) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (pred(p.name(i))) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Initialisers
// ---------------------------------------------------------------------------

void init_dense(Tensor& W, Tensor& b, Rng& rng, Real gain) {
  // fan_in = receptive field size; works for dense (rank 2) and conv (rank 4)
  const Real fan_in = static_cast<Real>(W.numel() / W.dim(0));
  const Real fan_out = static_cast<Real>(W.dim(0));
  const Real lim = gain * std::sqrt(6.0 / (fan_in + fan_out));
  for (Real& v : W.data) v = rng.uniform(-lim, lim);
  b.fill(0);
}

void init_lstm(Tensor& w_ih, Tensor& w_hh, Tensor& b, Rng& rng) {
  const int H = static_cast<int>(w_hh.dim(1));
  auto xavier = [&](Tensor& W) {
    const Real lim =
        std::sqrt(6.0 / static_cast<Real>(W.dim(0) + W.dim(1)));
    for (Real& v : W.data) v = rng.uniform(-lim, lim);
  };
  xavier(w_ih);
  xavier(w_hh);
  b.fill(0);
  for (int j = H; j < 2 * H; ++j) b(j) = 1.0;  // forget-gate bias
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

void act_forward(Act act, Tensor& y) {
  switch (act) {
    case Act::Linear:
      return;
    case Act::Relu:
      for (Real& v : y.data)
        if (v < 0) v = 0;
      return;
    case Act::Tanh:
      for (Real& v : y.data) v = std::tanh(v);
      return;
  }
}

namespace {

// Converts upstream grad dY into pre-activation grad in place, given the
// post-activation output Y.
void act_backward_inplace(Act act, const Tensor& Y, Tensor& dY) {
  switch (act) {
    case Act::Linear:
      return;
    case Act::Relu:
      for (std::size_t i = 0; i < dY.numel(); ++i)
        if (Y(i) <= 0) dY(i) = 0;
      return;
    case Act::Tanh:
      for (std::size_t i = 0; i < dY.numel(); ++i)
        dY(i) *= 1.0 - Y(i) * Y(i);
      return;
  }
}

}  // namespace

void dense_forward(const Tensor& W, const Tensor& b, const Tensor& X,
                   Tensor& Y, Act act) {
  const std::size_t T = X.dim(0), in = X.dim(1), out = W.dim(0);
  OL_REQUIRE(W.dim(1) == in, "dense_forward: shape mismatch");
  if (Y.shape != std::vector<std::size_t>{T, out}) Y = Tensor({T, out});
  kernels::matmul_nt(X.ptr(), W.ptr(), Y.ptr(), T, in, out);
  for (std::size_t t = 0; t < T; ++t) {
    Real* y = Y.row(t);
    for (std::size_t o = 0; o < out; ++o) y[o] += b(o);
  }
  act_forward(act, Y);
}

void dense_backward(const Tensor& W, const Tensor& X, const Tensor& Y,
                    Tensor& dY, Tensor& dW, Tensor& db, Tensor* dX, Act act,
                    bool accumulate_dx) {
  const std::size_t T = X.dim(0), in = X.dim(1), out = W.dim(0);
  act_backward_inplace(act, Y, dY);
  kernels::matmul_tn_acc(dY.ptr(), X.ptr(), dW.ptr(), T, out, in);
  for (std::size_t t = 0; t < T; ++t) {
    const Real* dy = dY.row(t);
    for (std::size_t o = 0; o < out; ++o) db(o) += dy[o];
  }
  if (dX) {
    if (!accumulate_dx && dX->shape != std::vector<std::size_t>{T, in})
      *dX = Tensor({T, in});
    if (accumulate_dx) {
      Tensor tmp({T, in});
      kernels::matmul_nn(dY.ptr(), W.ptr(), tmp.ptr(), T, out, in);
      for (std::size_t i = 0; i < tmp.numel(); ++i) (*dX)(i) += tmp(i);
    } else {
      kernels::matmul_nn(dY.ptr(), W.ptr(), dX->ptr(), T, out, in);
    }
  }
}

void dense_step(const Tensor& W, const Tensor& b, const Real* x, Real* y,
                Act act) {
  const std::size_t out = W.dim(0), in = W.dim(1);
  kernels::gemv(W.ptr(), x, y, out, in);
  for (std::size_t o = 0; o < out; ++o) {
    y[o] += b(o);
    if (act == Act::Relu && y[o] < 0) y[o] = 0;
    if (act == Act::Tanh) y[o] = std::tanh(y[o]);
  }
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

namespace {
inline Real sigmoid(Real x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

void lstm_forward(const LstmView& p, const Tensor& X, const Tensor& h0,
                  const Tensor& c0, LstmCache& cache) {
  const int T = static_cast<int>(X.dim(0));
  const int in = p.in();
  const int H = p.hidden();
  OL_REQUIRE(static_cast<int>(X.dim(1)) == in, "lstm_forward: input width");
  cache.T = T;
  cache.H = H;
  cache.gates = Tensor({static_cast<std::size_t>(T), 4 * static_cast<std::size_t>(H)});
  cache.c = Tensor({static_cast<std::size_t>(T), static_cast<std::size_t>(H)});
  cache.tanh_c = cache.c;
  cache.h = cache.c;
  cache.h0 = h0;
  cache.c0 = c0;

  // batched input projection, then the sequential recurrence
  kernels::matmul_nt(X.ptr(), p.w_ih->ptr(), cache.gates.ptr(), T, in, 4 * H);
  for (int t = 0; t < T; ++t) {
    Real* g = cache.gates.row(t);
    const Real* h_prev = t == 0 ? h0.ptr() : cache.h.row(t - 1);
    const Real* c_prev = t == 0 ? c0.ptr() : cache.c.row(t - 1);
    kernels::gemv(p.w_hh->ptr(), h_prev, g, 4 * H, H, /*accumulate=*/true);
    const Real* b = p.b->ptr();
    for (int j = 0; j < 4 * H; ++j) g[j] += b[j];
    Real* c = cache.c.row(t);
    Real* tc = cache.tanh_c.row(t);
    Real* h = cache.h.row(t);
    for (int j = 0; j < H; ++j) {
      const Real i_g = sigmoid(g[j]);
      const Real f_g = sigmoid(g[H + j]);
      const Real g_g = std::tanh(g[2 * H + j]);
      const Real o_g = sigmoid(g[3 * H + j]);
      g[j] = i_g;
      g[H + j] = f_g;
      g[2 * H + j] = g_g;
      g[3 * H + j] = o_g;
      c[j] = f_g * c_prev[j] + i_g * g_g;
      tc[j] = std::tanh(c[j]);
      h[j] = o_g * tc[j];
    }
  }
}

void lstm_backward(const LstmView& p, const Tensor& X, const LstmCache& cache,
                   Tensor& dH, const LstmGradView& g, Tensor* dX,
                   bool accumulate_dx) {
  const int T = cache.T, H = cache.H;
  const int in = p.in();
  Tensor dgates({static_cast<std::size_t>(T), 4 * static_cast<std::size_t>(H)});
  std::vector<Real> dh_next(H, 0), dc_next(H, 0);

  for (int t = T - 1; t >= 0; --t) {
    const Real* gt = cache.gates.row(t);
    const Real* c_prev = t == 0 ? cache.c0.ptr() : cache.c.row(t - 1);
    const Real* tc = cache.tanh_c.row(t);
    Real* dg = dgates.row(t);
    const Real* dh_up = dH.row(t);
    for (int j = 0; j < H; ++j) {
      const Real i_g = gt[j], f_g = gt[H + j], g_g = gt[2 * H + j],
                 o_g = gt[3 * H + j];
      const Real dh = dh_up[j] + dh_next[j];
      const Real dov = dh * tc[j];
      Real dc = dh * o_g * (1 - tc[j] * tc[j]) + dc_next[j];
      const Real div = dc * g_g;
      const Real dfv = dc * c_prev[j];
      const Real dgv = dc * i_g;
      dc_next[j] = dc * f_g;
      dg[j] = div * i_g * (1 - i_g);
      dg[H + j] = dfv * f_g * (1 - f_g);
      dg[2 * H + j] = dgv * (1 - g_g * g_g);
      dg[3 * H + j] = dov * o_g * (1 - o_g);
    }
    // dh_next = dgates_t * W_hh
    kernels::matmul_nn(dg, p.w_hh->ptr(), dh_next.data(), 1, 4 * H, H);
  }

  // parameter gradients, batched
  kernels::matmul_tn_acc(dgates.ptr(), X.ptr(), g.w_ih->ptr(), T, 4 * H, in);
  Tensor h_prev({static_cast<std::size_t>(T), static_cast<std::size_t>(H)});
  for (int t = 0; t < T; ++t) {
    const Real* src = t == 0 ? cache.h0.ptr() : cache.h.row(t - 1);
    std::copy(src, src + H, h_prev.row(t));
  }
  kernels::matmul_tn_acc(dgates.ptr(), h_prev.ptr(), g.w_hh->ptr(), T, 4 * H,
                         H);
  for (int t = 0; t < T; ++t) {
    const Real* dg = dgates.row(t);
    for (int j = 0; j < 4 * H; ++j) (*g.b)(j) += dg[j];
  }
  if (dX) {
    if (accumulate_dx) {
      Tensor tmp({static_cast<std::size_t>(T), static_cast<std::size_t>(in)});
      kernels::matmul_nn(dgates.ptr(), p.w_ih->ptr(), tmp.ptr(), T, 4 * H, in);
      for (std::size_t i = 0; i < tmp.numel(); ++i) (*dX)(i) += tmp(i);
    } else {
      if (dX->shape != std::vector<std::size_t>{static_cast<std::size_t>(T),
                                                static_cast<std::size_t>(in)})
        *dX = Tensor({static_cast<std::size_t>(T), static_cast<std::size_t>(in)});
      kernels::matmul_nn(dgates.ptr(), p.w_ih->ptr(), dX->ptr(), T, 4 * H, in);
    }
  }
}

void lstm_step(const LstmView& p, const Real* x, Real* h, Real* c,
               Real* gates) {
  const int H = p.hidden();
  const int in = p.in();
  kernels::gemv(p.w_ih->ptr(), x, gates, 4 * H, in);
  kernels::gemv(p.w_hh->ptr(), h, gates, 4 * H, H, /*accumulate=*/true);
  const Real* b = p.b->ptr();
  for (int j = 0; j < 4 * H; ++j) gates[j] += b[j];
  for (int j = 0; j < H; ++j) {
    const Real i_g = sigmoid(gates[j]);
    const Real f_g = sigmoid(gates[H + j]);
    const Real g_g = std::tanh(gates[2 * H + j]);
    const Real o_g = sigmoid(gates[3 * H + j]);
    c[j] = f_g * c[j] + i_g * g_g;
    h[j] = o_g * std::tanh(c[j]);
  }
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

void conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& b,
                    Tensor& out, int stride, int pad) {
  const int IC = static_cast<int>(in.dim(0));
  const int IH = static_cast<int>(in.dim(1));
  const int IW = static_cast<int>(in.dim(2));
  const int OC = static_cast<int>(w.dim(0));
  OL_REQUIRE(static_cast<int>(w.dim(1)) == IC, "conv2d: channel mismatch");
  const int KH = static_cast<int>(w.dim(2));
  const int KW = static_cast<int>(w.dim(3));
  const int OH = (IH + 2 * pad - KH) / stride + 1;
  const int OW = (IW + 2 * pad - KW) / stride + 1;
  const std::vector<std::size_t> oshape = {static_cast<std::size_t>(OC),
                                           static_cast<std::size_t>(OH),
                                           static_cast<std::size_t>(OW)};
  if (out.shape != oshape) out = Tensor(oshape);
  for (int oc = 0; oc < OC; ++oc)
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow) {
        Real s = b(oc);
        for (int ic = 0; ic < IC; ++ic)
          for (int kh = 0; kh < KH; ++kh) {
            const int ih = oh * stride + kh - pad;
            if (ih < 0 || ih >= IH) continue;
            for (int kw = 0; kw < KW; ++kw) {
              const int iw = ow * stride + kw - pad;
              if (iw < 0 || iw >= IW) continue;
              s += in(ic, ih, iw) * w(oc, ic, kh, kw);
            }
          }
        out(oc, oh, ow) = s;
      }
}

void conv2d_backward(const Tensor& in, const Tensor& w, const Tensor& dOut,
                     Tensor& dW, Tensor& dB, Tensor* dIn, int stride,
                     int pad) {
  const int IC = static_cast<int>(in.dim(0));
  const int IH = static_cast<int>(in.dim(1));
  const int IW = static_cast<int>(in.dim(2));
  const int OC = static_cast<int>(w.dim(0));
  const int KH = static_cast<int>(w.dim(2));
  const int KW = static_cast<int>(w.dim(3));
  const int OH = static_cast<int>(dOut.dim(1));
  const int OW = static_cast<int>(dOut.dim(2));
  for (int oc = 0; oc < OC; ++oc)
    for (int oh = 0; oh < OH; ++oh)
      for (int ow = 0; ow < OW; ++ow) {
        const Real d = dOut(oc, oh, ow);
        dB(oc) += d;
        for (int ic = 0; ic < IC; ++ic)
          for (int kh = 0; kh < KH; ++kh) {
            const int ih = oh * stride + kh - pad;
            if (ih < 0 || ih >= IH) continue;
            for (int kw = 0; kw < KW; ++kw) {
              const int iw = ow * stride + kw - pad;
              if (iw < 0 || iw >= IW) continue;
              dW(oc, ic, kh, kw) += d * in(ic, ih, iw);
              if (dIn) (*dIn)(ic, ih, iw) += d * w(oc, ic, kh, kw);
            }
          }
      }
}

// ---------------------------------------------------------------------------
// Gaussian head helpers
// ---------------------------------------------------------------------------

Real gaussian_logp(const Real* a, const Real* mean, const Real* log_std,
                   int n) {
  Real lp = -0.5 * n * std::log(kTwoPi);
  for (int i = 0; i < n; ++i) {
    const Real s = std::exp(log_std[i]);
    const Real z = (a[i] - mean[i]) / s;
    lp += -0.5 * z * z - log_std[i];
  }
  return lp;
}

void gaussian_logp_backward(const Real* a, const Real* mean,
                            const Real* log_std, int n, Real coef,
                            Real* d_mean, Real* d_log_std) {
  for (int i = 0; i < n; ++i) {
    const Real s = std::exp(log_std[i]);
    const Real z = (a[i] - mean[i]) / s;
    d_mean[i] += coef * z / s;
    d_log_std[i] += coef * (z * z - 1.0);
  }
}

Real gaussian_entropy(const Real* log_std, int n) {
  Real h = 0.5 * n * (1.0 + std::log(kTwoPi));
  for (int i = 0; i < n; ++i) h += log_std[i];
  return h;
}

Real gaussian_kl(const Real* mean_p, const Real* log_std_p, const Real* mean_q,
                 const Real* log_std_q, int n) {
  Real kl = 0;
  for (int i = 0; i < n; ++i) {
    const Real vp = std::exp(2 * log_std_p[i]);
    const Real vq = std::exp(2 * log_std_q[i]);
    const Real dm = mean_p[i] - mean_q[i];
    kl += log_std_q[i] - log_std_p[i] + (vp + dm * dm) / (2 * vq) - 0.5;
  }
  return kl;
}

void gaussian_kl_backward_q(const Real* mean_p, const Real* log_std_p,
                            const Real* mean_q, const Real* log_std_q, int n,
                            Real coef, Real* d_mean_q, Real* d_log_std_q) {
  for (int i = 0; i < n; ++i) {
    const Real vp = std::exp(2 * log_std_p[i]);
    const Real vq = std::exp(2 * log_std_q[i]);
    const Real dm = mean_p[i] - mean_q[i];
    d_mean_q[i] += coef * (mean_q[i] - mean_p[i]) / vq;
    d_log_std_q[i] += coef * (1.0 - (vp + dm * dm) / vq);
  }
}

}  // namespace omniloco::netcore

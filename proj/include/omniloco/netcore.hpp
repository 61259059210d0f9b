#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "omniloco/rng.hpp"
#include "omniloco/tensor.hpp"

namespace omniloco::netcore {

// ---------------------------------------------------------------------------
// Parameter storage: ordered named tensors with a binary on-disk format
// (magic, version, architecture tag, init seed, then the tensor table).
// ---------------------------------------------------------------------------
class ParameterStore {
 public:
  std::string arch_tag;
  std::uint64_t init_seed = 0;

  Tensor& add(const std::string& name, std::vector<std::size_t> shape);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;
  bool has(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].first; }
  Tensor& tensor(std::size_t i) { return entries_[i].second; }
  const Tensor& tensor(std::size_t i) const { return entries_[i].second; }

  std::size_t total_params() const;

  void save(const std::string& path) const;
  static ParameterStore load(const std::string& path,
                             const std::string& expected_tag = "");

  void write(std::ostream& os) const;
  static ParameterStore read(std::istream& is,
                             const std::string& expected_tag = "");

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Gradient buffers aligned index-for-index with a ParameterStore.
class GradStore {
 public:
  explicit GradStore(const ParameterStore& p);
  void zero();
  Tensor& of(std::size_t i) { return grads_[i]; }
  const Tensor& of(std::size_t i) const { return grads_[i]; }
  std::size_t size() const { return grads_.size(); }
  void scale(Real s);
  void add(const GradStore& o);

 private:
  std::vector<Tensor> grads_;
};

// Global L2 norm over the listed entries, then clip-in-place; returns the
// pre-clip norm.
Real clip_grad_norm(GradStore& g, const std::vector<std::size_t>& entries,
                    Real max_norm);

struct AdamConfig {
  Real lr = 3e-4;
  Real beta1 = 0.9, beta2 = 0.999;
  Real eps = 1e-8;
};

// Adam over a fixed subset of store entries (frozen tensors simply aren't
// listed).
class Adam {
 public:
  Adam(const ParameterStore& p, std::vector<std::size_t> trainable);
  void step(ParameterStore& p, const GradStore& g, const AdamConfig& cfg);
  const std::vector<std::size_t>& trainable() const { return trainable_; }
  long step_count() const { return t_; }

  void write(std::ostream& os) const;
  void read(std::istream& is, const ParameterStore& p);

 private:
  std::vector<std::size_t> trainable_;
  std::vector<Tensor> m_, v_;
  long t_ = 0;
};

std::vector<std::size_t> entries_matching(
    const ParameterStore& p,
    const std::function<bool(const std::string&)>& pred);

// ---------------------------------------------------------------------------
// Initialisers
// ---------------------------------------------------------------------------
void init_dense(Tensor& W, Tensor& b, Rng& rng, Real gain = 1.0);
void init_lstm(Tensor& w_ih, Tensor& w_hh, Tensor& b, Rng& rng);

// ---------------------------------------------------------------------------
// Layers.  All batched variants treat the leading dimension as time/batch.
// Backward passes accumulate into the given gradient tensors; dX outputs are
// overwritten unless stated otherwise.
// ---------------------------------------------------------------------------
enum class Act { Linear, Relu, Tanh };

void act_forward(Act act, Tensor& y);

// Y[T,out] = act(X[T,in] * W^T + b), W stored [out,in].
void dense_forward(const Tensor& W, const Tensor& b, const Tensor& X,
                   Tensor& Y, Act act);
// dY is consumed (turned into pre-activation grads in place).
void dense_backward(const Tensor& W, const Tensor& X, const Tensor& Y,
                    Tensor& dY, Tensor& dW, Tensor& db, Tensor* dX, Act act,
                    bool accumulate_dx = false);

// Single-row convenience used by step-wise inference.
void dense_step(const Tensor& W, const Tensor& b, const Real* x, Real* y,
                Act act);

// --- LSTM ---
// Gate order [i f g o]; w_ih [4H,in], w_hh [4H,H], b [4H].
struct LstmView {
  const Tensor* w_ih;
  const Tensor* w_hh;
  const Tensor* b;
  int in() const { return static_cast<int>(w_ih->dim(1)); }
  int hidden() const { return static_cast<int>(w_hh->dim(1)); }
};

struct LstmGradView {
  Tensor* w_ih;
  Tensor* w_hh;
  Tensor* b;
};

struct LstmCache {
  int T = 0, H = 0;
  Tensor gates;   // [T,4H] post-nonlinearity
  Tensor c;       // [T,H]
  Tensor tanh_c;  // [T,H]
  Tensor h;       // [T,H]
  Tensor h0, c0;  // [H]
};

void lstm_forward(const LstmView& p, const Tensor& X, const Tensor& h0,
                  const Tensor& c0, LstmCache& cache);
// dH: upstream gradient on every h_t, consumed.  dX may be null.
void lstm_backward(const LstmView& p, const Tensor& X, const LstmCache& cache,
                   Tensor& dH, const LstmGradView& g, Tensor* dX,
                   bool accumulate_dx = false);

// In-place hidden-state step for rollouts; gates scratch is caller-provided
// ([4H]) to avoid per-tick allocation.
void lstm_step(const LstmView& p, const Real* x, Real* h, Real* c,
               Real* gates_scratch);

// --- Convolutions (single image, CHW layout) ---
// w [OC,IC,kh,kw]; pad is symmetric zero padding.
void conv2d_forward(const Tensor& in, const Tensor& w, const Tensor& b,
                    Tensor& out, int stride, int pad);
void conv2d_backward(const Tensor& in, const Tensor& w, const Tensor& dOut,
                     Tensor& dW, Tensor& dB, Tensor* dIn, int stride, int pad);

// ---------------------------------------------------------------------------
// Gaussian policy head helpers (diagonal, state-independent log std).
// ---------------------------------------------------------------------------
Real gaussian_logp(const Real* a, const Real* mean, const Real* log_std,
                   int n);
// d logp / d mean and d logp / d log_std, accumulated.
void gaussian_logp_backward(const Real* a, const Real* mean,
                            const Real* log_std, int n, Real coef,
                            Real* d_mean, Real* d_log_std);
Real gaussian_entropy(const Real* log_std, int n);
// KL(p || q) for diagonal Gaussians.
Real gaussian_kl(const Real* mean_p, const Real* log_std_p, const Real* mean_q,
                 const Real* log_std_q, int n);
// Gradients of KL w.r.t. q's mean and log std, accumulated with `coef`.
void gaussian_kl_backward_q(const Real* mean_p, const Real* log_std_p,
                            const Real* mean_q, const Real* log_std_q, int n,
                            Real coef, Real* d_mean_q, Real* d_log_std_q);

}  // namespace omniloco::netcore

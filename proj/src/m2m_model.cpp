#include "s2a/m2m_model.h"

#include <cmath>
#include <limits>

#include "s2a/error.h"

namespace s2a {

void M2MConfig::validate() const {
  if (n_layers < 0 || d_model <= 0 || n_heads <= 0 || d_ff <= 0 || n_performers <= 0 || max_seq_len <= 0) {
    throw DataError("model config: sizes must be positive");
  }
  if (d_model % n_heads != 0) throw DataError("model config: d_model must be divisible by n_heads");
  if (embed_dim() <= 0) throw DataError("model config: embedding width must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw DataError("model config: dropout must lie in [0, 1)");
}

M2MConfig M2MConfig::full_scale() {
  M2MConfig c;
  c.n_layers = 6;
  c.d_model = 384;
  c.n_heads = 6;
  c.d_ff = 1536;
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

template <typename T>
M2MParams<T> M2MParams<T>::zeros_like() const {
  M2MParams<T> z = *this;
  z.set_zero();
  return z;
}

template <typename T>
void M2MParams<T>::set_zero() {
  visit([](const std::string&, Mat<T>& m) { m.setZero(); });
}

template <typename T>
std::size_t M2MParams<T>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Mat<T>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <typename T>
bool M2MParams<T>::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const Mat<T>& m) { ok = ok && m.allFinite(); });
  return ok;
}

namespace {

template <typename T>
Mat<T> uniform_matrix(Rng& rng, int rows, int cols, double bound) {
  Mat<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
  return m;
}

template <typename T>
Mat<T> xavier(Rng& rng, int fan_in, int fan_out) {
  return uniform_matrix<T>(rng, fan_in, fan_out, std::sqrt(6.0 / (fan_in + fan_out)));
}

template <typename T>
M2MParams<T> init_params(const M2MConfig& c) {
  Rng rng(c.seed);
  const int de = c.embed_dim();
  M2MParams<T> p;
  for (int f = 0; f < kNumFeatures; ++f) {
    p.embed[f] = uniform_matrix<T>(rng, c.vocab.size(static_cast<Feature>(f)), de, std::sqrt(3.0));
  }
  p.w_in = xavier<T>(rng, kNumFeatures * de, c.d_model);
  p.b_in = Mat<T>::Zero(1, c.d_model);
  for (int l = 0; l < c.n_layers; ++l) {
    LayerParams<T> L;
    L.wq = xavier<T>(rng, c.d_model, c.d_model);
    L.wk = xavier<T>(rng, c.d_model, c.d_model);
    L.wv = xavier<T>(rng, c.d_model, c.d_model);
    L.wo = xavier<T>(rng, c.d_model, c.d_model);
    L.bq = L.bk = L.bv = L.bo = Mat<T>::Zero(1, c.d_model);
    L.ln1_g = L.ln2_g = Mat<T>::Ones(1, c.d_model);
    L.ln1_b = L.ln2_b = Mat<T>::Zero(1, c.d_model);
    L.w1 = xavier<T>(rng, c.d_model, c.d_ff);
    L.b1 = Mat<T>::Zero(1, c.d_ff);
    L.w2 = xavier<T>(rng, c.d_ff, c.d_model);
    L.b2 = Mat<T>::Zero(1, c.d_model);
    p.layers.push_back(std::move(L));
  }
  p.performer = uniform_matrix<T>(rng, c.n_performers, c.d_model, 0.1);
  for (int h = 0; h < kNumHeads; ++h) {
    const int v = c.vocab.size(kHeadFeatures[h]);
    p.head_w[h] = xavier<T>(rng, c.d_model, v);
    p.head_b[h] = Mat<T>::Zero(1, v);
  }
  return p;
}

template <typename T>
Mat<T> sinusoidal_positions(int length, int d_model) {
  Mat<T> pe(length, d_model);
  for (int pos = 0; pos < length; ++pos) {
    for (int i = 0; i < d_model; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / d_model);
      pe(pos, i) = static_cast<T>(i % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq));
    }
  }
  return pe;
}

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

template <typename T>
void add_row(Mat<T>& x, const Mat<T>& bias) {
  x.rowwise() += bias.row(0);
}

template <typename T>
Mat<T> column_sums(const Mat<T>& x) {
  return x.colwise().sum();
}

// y = g * xhat + b; stores xhat and 1/sigma per row.
template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>& g, const Mat<T>& b, Mat<T>& xhat, Mat<T>& inv_std) {
  const Eigen::Index n = x.cols();
  xhat.resize(x.rows(), n);
  inv_std.resize(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mean = x.row(r).mean();
    const auto centered = (x.row(r).array() - mean).matrix();
    const T var = centered.squaredNorm() / static_cast<T>(n);
    const T is = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    inv_std(r, 0) = is;
    xhat.row(r) = centered * is;
  }
  Mat<T> y = xhat.array().rowwise() * g.row(0).array();
  add_row(y, b);
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& xhat, const Mat<T>& inv_std, const Mat<T>& g, Mat<T>& dg,
                           Mat<T>& db) {
  dg += (dy.array() * xhat.array()).colwise().sum().matrix();
  db += column_sums(dy);
  const Mat<T> dxhat = dy.array().rowwise() * g.row(0).array();
  const T n = static_cast<T>(dy.cols());
  Mat<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const T mean_d = dxhat.row(r).sum() / n;
    const T mean_dx = dxhat.row(r).dot(xhat.row(r)) / n;
    dx.row(r) = ((dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx) * inv_std(r, 0)).matrix();
  }
  return dx;
}

template <typename T>
T gelu(T x) {
  const T u = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(u));
}

template <typename T>
T gelu_grad(T x) {
  const T u = static_cast<T>(kGeluC) * (x + static_cast<T>(kGeluA) * x * x * x);
  const T t = std::tanh(u);
  const T du = static_cast<T>(kGeluC) * (T(1) + T(3) * static_cast<T>(kGeluA) * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

template <typename T>
Mat<T> dropout_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols, double rate) {
  Mat<T> m(rows, cols);
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < rate ? T(0) : keep;
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model

template <typename T>
M2MModelT<T>::M2MModelT(const M2MConfig& config) : M2MModelT(config, init_params<T>(config)) {}

template <typename T>
M2MModelT<T>::M2MModelT(const M2MConfig& config, M2MParams<T> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  positional_ = sinusoidal_positions<T>(config_.max_seq_len, config_.d_model);
}

template <typename T>
void M2MModelT<T>::check_input(const TokenSegment& seg) const {
  if (seg.tuples.size() != seg.pad_mask.size()) throw DataError("segment: tuples and pad mask differ in length");
  if (seg.tuples.empty()) throw DataError("segment is empty");
  if (static_cast<int>(seg.tuples.size()) > config_.max_seq_len) throw DataError("segment longer than max_seq_len");
  if (seg.performer_id < 0 || seg.performer_id >= config_.n_performers) {
    throw DataError("performer id " + std::to_string(seg.performer_id) + " out of range");
  }
  for (std::size_t i = 0; i < seg.tuples.size(); ++i) {
    for (int f = 0; f < kNumFeatures; ++f) {
      const int tok = seg.tuples[i][static_cast<Feature>(f)];
      if (tok < 0 || tok >= config_.vocab.size(static_cast<Feature>(f))) {
        throw DataError(std::string(feature_name(static_cast<Feature>(f))) + " token " + std::to_string(tok) +
                        " at position " + std::to_string(i) + " outside the vocabulary");
      }
    }
  }
}

template <typename T>
OutputDistributions<T> M2MModelT<T>::forward(const TokenSegment& segment) const {
  ForwardCache<T> cache;
  return forward(segment, cache, nullptr);
}

template <typename T>
OutputDistributions<T> M2MModelT<T>::forward(const TokenSegment& seg, ForwardCache<T>& cache, Rng* rng) const {
  check_input(seg);
  const auto& p = params_;
  const int len = static_cast<int>(seg.tuples.size());
  const int dm = config_.d_model;
  const int de = config_.embed_dim();
  const int nh = config_.n_heads;
  const int dh = dm / nh;
  const bool drop = rng != nullptr && config_.dropout > 0.0;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  constexpr T kNegInf = -std::numeric_limits<T>::infinity();

  cache.tokens = seg.tuples;
  cache.pad_mask = seg.pad_mask;
  cache.performer_id = seg.performer_id;
  cache.layers.assign(p.layers.size(), {});

  cache.x_cat.resize(len, kNumFeatures * de);
  for (int r = 0; r < len; ++r) {
    for (int f = 0; f < kNumFeatures; ++f) {
      cache.x_cat.block(r, f * de, 1, de) = p.embed[f].row(seg.tuples[r][static_cast<Feature>(f)]);
    }
  }
  Mat<T> x = cache.x_cat * p.w_in;
  add_row(x, p.b_in);
  x += positional_.topRows(len);
  cache.in_drop.resize(0, 0);
  if (drop) {
    cache.in_drop = dropout_mask<T>(*rng, len, dm, config_.dropout);
    x.array() *= cache.in_drop.array();
  }

  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& L = p.layers[l];
    auto& c = cache.layers[l];
    c.x = x;
    c.q.noalias() = x * L.wq;
    add_row(c.q, L.bq);
    c.k.noalias() = x * L.wk;
    add_row(c.k, L.bk);
    c.v.noalias() = x * L.wv;
    add_row(c.v, L.bv);
    c.o.resize(len, dm);
    c.attn.assign(static_cast<std::size_t>(nh), Mat<T>());
    for (int h = 0; h < nh; ++h) {
      Mat<T> s = (c.q.middleCols(h * dh, dh) * c.k.middleCols(h * dh, dh).transpose()) * scale;
      for (int j = 0; j < len; ++j) {
        if (seg.pad_mask[static_cast<std::size_t>(j)]) s.col(j).setConstant(kNegInf);
      }
      for (int r = 0; r < len; ++r) {
        const T mx = s.row(r).maxCoeff();
        if (mx == kNegInf) {
          s.row(r).setZero();  // no valid key at all
          continue;
        }
        s.row(r) = (s.row(r).array() - mx).exp().matrix();
        s.row(r) /= s.row(r).sum();
      }
      c.o.middleCols(h * dh, dh).noalias() = s * c.v.middleCols(h * dh, dh);
      c.attn[static_cast<std::size_t>(h)] = std::move(s);
    }
    Mat<T> att = c.o * L.wo;
    add_row(att, L.bo);
    c.att_drop.resize(0, 0);
    if (drop) {
      c.att_drop = dropout_mask<T>(*rng, len, dm, config_.dropout);
      att.array() *= c.att_drop.array();
    }
    c.h = layer_norm<T>(x + att, L.ln1_g, L.ln1_b, c.xhat1, c.inv_std1);

    c.f1.noalias() = c.h * L.w1;
    add_row(c.f1, L.b1);
    c.g = c.f1.unaryExpr([](T v) { return gelu(v); });
    Mat<T> f2 = c.g * L.w2;
    add_row(f2, L.b2);
    c.ffn_drop.resize(0, 0);
    if (drop) {
      c.ffn_drop = dropout_mask<T>(*rng, len, dm, config_.dropout);
      f2.array() *= c.ffn_drop.array();
    }
    x = layer_norm<T>(c.h + f2, L.ln2_g, L.ln2_b, c.xhat2, c.inv_std2);
  }

  for (int r = 0; r < len; ++r) {
    if (!seg.pad_mask[static_cast<std::size_t>(r)]) x.row(r) += p.performer.row(seg.performer_id);
  }
  cache.final_hidden = x;

  OutputDistributions<T> out;
  for (int h = 0; h < kNumHeads; ++h) {
    out.logits[h].noalias() = x * p.head_w[h];
    add_row(out.logits[h], p.head_b[h]);
  }
  return out;
}

template <typename T>
void M2MModelT<T>::backward(const ForwardCache<T>& cache, const std::array<const Mat<T>*, kNumHeads>& dlogits,
                            M2MParams<T>& g) const {
  const auto& p = params_;
  const int len = static_cast<int>(cache.tokens.size());
  const int dm = config_.d_model;
  const int de = config_.embed_dim();
  const int nh = config_.n_heads;
  const int dh = dm / nh;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  Mat<T> dx = Mat<T>::Zero(len, dm);
  bool any = false;
  for (int h = 0; h < kNumHeads; ++h) {
    if (dlogits[h] == nullptr) continue;
    any = true;
    const Mat<T>& dl = *dlogits[h];
    g.head_w[h].noalias() += cache.final_hidden.transpose() * dl;
    g.head_b[h] += column_sums(dl);
    dx.noalias() += dl * p.head_w[h].transpose();
  }
  if (!any) return;

  for (int r = 0; r < len; ++r) {
    if (!cache.pad_mask[static_cast<std::size_t>(r)]) g.performer.row(cache.performer_id) += dx.row(r);
  }

  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const auto& L = p.layers[li];
    auto& G = g.layers[li];
    const auto& c = cache.layers[li];

    // x_out = LN2(h + f2)
    Mat<T> dr2 = layer_norm_backward<T>(dx, c.xhat2, c.inv_std2, L.ln2_g, G.ln2_g, G.ln2_b);
    Mat<T> dh_ = dr2;
    Mat<T> df2 = dr2;
    if (c.ffn_drop.size() > 0) df2.array() *= c.ffn_drop.array();
    G.w2.noalias() += c.g.transpose() * df2;
    G.b2 += column_sums(df2);
    Mat<T> df1 = df2 * L.w2.transpose();
    df1.array() *= c.f1.unaryExpr([](T v) { return gelu_grad(v); }).array();
    G.w1.noalias() += c.h.transpose() * df1;
    G.b1 += column_sums(df1);
    dh_.noalias() += df1 * L.w1.transpose();

    // h = LN1(x + att)
    Mat<T> dr1 = layer_norm_backward<T>(dh_, c.xhat1, c.inv_std1, L.ln1_g, G.ln1_g, G.ln1_b);
    dx = dr1;
    Mat<T> datt = dr1;
    if (c.att_drop.size() > 0) datt.array() *= c.att_drop.array();
    G.wo.noalias() += c.o.transpose() * datt;
    G.bo += column_sums(datt);
    const Mat<T> d_o = datt * L.wo.transpose();

    Mat<T> dq(len, dm), dk(len, dm), dv(len, dm);
    for (int h = 0; h < nh; ++h) {
      const Mat<T>& a = c.attn[static_cast<std::size_t>(h)];
      const auto doh = d_o.middleCols(h * dh, dh);
      Mat<T> da = doh * c.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh).noalias() = a.transpose() * doh;
      const Eigen::Matrix<T, Eigen::Dynamic, 1> rowdot = (da.array() * a.array()).rowwise().sum();
      Mat<T> ds = a.array() * (da.array().colwise() - rowdot.array());
      ds *= scale;
      dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
    }
    G.wq.noalias() += c.x.transpose() * dq;
    G.bq += column_sums(dq);
    G.wk.noalias() += c.x.transpose() * dk;
    G.bk += column_sums(dk);
    G.wv.noalias() += c.x.transpose() * dv;
    G.bv += column_sums(dv);
    dx.noalias() += dq * L.wq.transpose();
    dx.noalias() += dk * L.wk.transpose();
    dx.noalias() += dv * L.wv.transpose();
  }

  if (cache.in_drop.size() > 0) dx.array() *= cache.in_drop.array();
  g.w_in.noalias() += cache.x_cat.transpose() * dx;
  g.b_in += column_sums(dx);
  const Mat<T> dcat = dx * p.w_in.transpose();
  for (int r = 0; r < len; ++r) {
    for (int f = 0; f < kNumFeatures; ++f) {
      g.embed[f].row(cache.tokens[static_cast<std::size_t>(r)][static_cast<Feature>(f)]) += dcat.block(r, f * de, 1, de);
    }
  }
}

template struct M2MParams<float>;
template struct M2MParams<double>;
template class M2MModelT<float>;
template class M2MModelT<double>;

}  // namespace s2a

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace scorelab {

// one affine map A_j (rows x cols, compressed rows) and its shift b_j
struct Layer {
  int rows = 0, cols = 0;
  std::vector<int> row_ptr{0};
  std::vector<int> col;
  std::vector<double> val;
  std::vector<double> b;

  std::size_t nnz() const { return val.size(); }

  static Layer zeros(int r, int c) {
    Layer l;
    l.rows = r;
    l.cols = c;
    l.row_ptr.assign(r + 1, 0);
    l.b.assign(r, 0.0);
    return l;
  }

  struct Builder;

  static Layer from_dense(int r, int c, const std::vector<double>& A, const std::vector<double>& b);

  std::vector<double> dense() const {
    std::vector<double> A(std::size_t(rows) * cols, 0.0);
    for (int i = 0; i < rows; ++i)
      for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p) A[std::size_t(i) * cols + col[p]] = val[p];
    return A;
  }

  double at(int i, int j) const {
    for (int p = row_ptr[i]; p < row_ptr[i + 1]; ++p)
      if (col[p] == j) return val[p];
    return 0.0;
  }
};

// rows are appended in order; entries must come with increasing columns
struct Layer::Builder {
  Layer l;
  Builder(int cols) { l.cols = cols; }
  void add(int c, double v) {
    if (v == 0.0) return;
    l.col.push_back(c);
    l.val.push_back(v);
  }
  void end_row(double shift) {
    l.b.push_back(shift);
    l.row_ptr.push_back(int(l.val.size()));
    ++l.rows;
  }
  Layer done() { return std::move(l); }
};

inline Layer Layer::from_dense(int r, int c, const std::vector<double>& A, const std::vector<double>& b) {
  if (int(A.size()) != r * c || int(b.size()) != r) throw std::invalid_argument("layer: dense size mismatch");
  Builder bl(c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) bl.add(j, A[i * c + j]);
    bl.end_row(b[i]);
  }
  return bl.done();
}

struct NetStats {
  int L = 0;
  std::vector<int> W;  // W[0] = in_dim, W[j] = rows(A_j)
  long long S = 0;
  double B = 0.0;
  int W_max() const { return W.empty() ? 0 : *std::max_element(W.begin(), W.end()); }
  bool operator==(const NetStats&) const = default;
};

// x -> -b_L + A_L ReLU_{b_{L-1}} A_{L-1} ... ReLU_{b_1} A_1 x,  ReLU_b(v) = max(v - b, 0)
class ReluNet {
 public:
  ReluNet() = default;
  ReluNet(int in_dim, std::vector<Layer> layers) : in_dim_(in_dim), layers_(std::move(layers)) {
    check_chain();
    stats_ = recount();
  }

  int in_dim() const { return in_dim_; }
  int out_dim() const { return layers_.empty() ? in_dim_ : layers_.back().rows; }
  int depth() const { return int(layers_.size()); }
  const std::vector<Layer>& layers() const { return layers_; }
  const NetStats& stats() const { return stats_; }

  NetStats recount() const {
    NetStats s;
    s.L = int(layers_.size());
    s.W.push_back(in_dim_);
    for (const auto& l : layers_) {
      s.W.push_back(l.rows);
      for (double v : l.val)
        if (v != 0.0) ++s.S, s.B = std::max(s.B, std::abs(v));
      for (double v : l.b)
        if (v != 0.0) ++s.S, s.B = std::max(s.B, std::abs(v));
    }
    return s;
  }

  std::vector<double> evaluate(const std::vector<double>& x) const {
    if (int(x.size()) != in_dim_) throw std::invalid_argument("evaluate: dimension mismatch");
    std::vector<double> cur = x, nxt;
    for (std::size_t j = 0; j < layers_.size(); ++j) {
      const Layer& l = layers_[j];
      nxt.assign(l.rows, 0.0);
      for (int i = 0; i < l.rows; ++i) {
        double s = 0.0;
        for (int p = l.row_ptr[i]; p < l.row_ptr[i + 1]; ++p) s += l.val[p] * cur[l.col[p]];
        nxt[i] = s;
      }
      const bool last = j + 1 == layers_.size();
      for (int i = 0; i < l.rows; ++i) nxt[i] = last ? nxt[i] - l.b[i] : std::max(nxt[i] - l.b[i], 0.0);
      cur.swap(nxt);
    }
    return cur;
  }

  // column-major batch: X is in_dim x n (X[k + in_dim*i]); same arithmetic order as evaluate
  std::vector<double> evaluate_batch(const std::vector<double>& X, std::size_t n) const {
    if (X.size() != n * std::size_t(in_dim_)) throw std::invalid_argument("evaluate_batch: size mismatch");
    constexpr std::size_t BS = 16;
    std::vector<double> out(n * out_dim());
    std::vector<double> cur, nxt;
    for (std::size_t s0 = 0; s0 < n; s0 += BS) {
      const std::size_t nb = std::min(BS, n - s0);
      // layout inside a block: unit-major (value of unit u for sample k at u*BS + k)
      cur.assign(std::size_t(in_dim_) * BS, 0.0);
      for (std::size_t k = 0; k < nb; ++k)
        for (int u = 0; u < in_dim_; ++u) cur[u * BS + k] = X[(s0 + k) * in_dim_ + u];
      for (std::size_t j = 0; j < layers_.size(); ++j) {
        const Layer& l = layers_[j];
        nxt.assign(std::size_t(l.rows) * BS, 0.0);
        const bool last = j + 1 == layers_.size();
        for (int i = 0; i < l.rows; ++i) {
          double acc[BS] = {};
          for (int p = l.row_ptr[i]; p < l.row_ptr[i + 1]; ++p) {
            const double a = l.val[p];
            const double* src = cur.data() + std::size_t(l.col[p]) * BS;
            for (std::size_t k = 0; k < BS; ++k) acc[k] += a * src[k];
          }
          double* dst = nxt.data() + std::size_t(i) * BS;
          const double bi = l.b[i];
          if (last)
            for (std::size_t k = 0; k < BS; ++k) dst[k] = acc[k] - bi;
          else
            for (std::size_t k = 0; k < BS; ++k) dst[k] = std::max(acc[k] - bi, 0.0);
        }
        cur.swap(nxt);
      }
      const int od = out_dim();
      for (std::size_t k = 0; k < nb; ++k)
        for (int u = 0; u < od; ++u) out[(s0 + k) * od + u] = cur[u * BS + k];
    }
    return out;
  }

 private:
  void check_chain() const {
    int c = in_dim_;
    for (std::size_t j = 0; j < layers_.size(); ++j) {
      const auto& l = layers_[j];
      if (l.cols != c) throw std::invalid_argument("relu net: layer " + std::to_string(j) + " does not chain");
      if (int(l.b.size()) != l.rows || int(l.row_ptr.size()) != l.rows + 1)
        throw std::invalid_argument("relu net: malformed layer " + std::to_string(j));
      c = l.rows;
    }
  }

  int in_dim_ = 0;
  std::vector<Layer> layers_;
  NetStats stats_;
};

inline std::vector<double> evaluate(const ReluNet& net, const std::vector<double>& x) { return net.evaluate(x); }

namespace detail {

// last layer of a net split into interleaved positive/negative parts: rows (z_i, -z_i) with ReLU
inline Layer split_rows(const Layer& l) {
  Layer::Builder bl(l.cols);
  for (int i = 0; i < l.rows; ++i) {
    for (int p = l.row_ptr[i]; p < l.row_ptr[i + 1]; ++p) bl.add(l.col[p], l.val[p]);
    bl.end_row(l.b[i]);
    for (int p = l.row_ptr[i]; p < l.row_ptr[i + 1]; ++p) bl.add(l.col[p], -l.val[p]);
    bl.end_row(-l.b[i]);
  }
  return bl.done();
}

// matrix acting on interleaved (z+, z-) pairs: columns (2k, 2k+1) = (A[:,k], -A[:,k])
inline Layer merge_cols(const Layer& l) {
  Layer::Builder bl(2 * l.cols);
  for (int i = 0; i < l.rows; ++i) {
    for (int p = l.row_ptr[i]; p < l.row_ptr[i + 1]; ++p) {
      bl.add(2 * l.col[p], l.val[p]);
      bl.add(2 * l.col[p] + 1, -l.val[p]);
    }
    bl.end_row(l.b[i]);
  }
  return bl.done();
}

inline Layer identity_layer(int n) {
  Layer::Builder bl(n);
  for (int i = 0; i < n; ++i) {
    bl.add(i, 1.0);
    bl.end_row(0.0);
  }
  return bl.done();
}

// block-diagonal stack; when shared, blocks share the input columns instead
inline Layer stack(const std::vector<const Layer*>& ls, bool shared) {
  int cols = 0;
  if (shared)
    cols = ls.front()->cols;
  else
    for (auto* l : ls) cols += l->cols;
  Layer::Builder bl(cols);
  int off = 0;
  for (auto* l : ls) {
    for (int i = 0; i < l->rows; ++i) {
      for (int p = l->row_ptr[i]; p < l->row_ptr[i + 1]; ++p) bl.add(l->col[p] + off, l->val[p]);
      bl.end_row(l->b[i]);
    }
    if (!shared) off += l->cols;
  }
  return bl.done();
}

// layers of `net` padded to `depth` with the positive/negative-part passthrough gadget
inline std::vector<Layer> padded_layers(const ReluNet& net, int depth) {
  std::vector<Layer> ls = net.layers();
  const int L = int(ls.size());
  if (L >= depth) return ls;
  const int o = ls.back().rows;
  ls.back() = split_rows(ls.back());
  for (int j = L; j < depth - 1; ++j) ls.push_back(identity_layer(2 * o));
  Layer id = identity_layer(o);
  ls.push_back(merge_cols(id));
  return ls;
}

}  // namespace detail

// outer o inner with a positive/negative-part bridge: depth L1 + L2
inline ReluNet concat(const ReluNet& outer, const ReluNet& inner) {
  if (inner.out_dim() != outer.in_dim()) throw std::invalid_argument("concat: dimension mismatch");
  if (inner.depth() == 0) return outer;
  if (outer.depth() == 0) return inner;
  std::vector<Layer> ls(inner.layers().begin(), inner.layers().end() - 1);
  ls.push_back(detail::split_rows(inner.layers().back()));
  ls.push_back(detail::merge_cols(outer.layers().front()));
  ls.insert(ls.end(), outer.layers().begin() + 1, outer.layers().end());
  return ReluNet(inner.in_dim(), std::move(ls));
}

inline ReluNet parallel(const std::vector<ReluNet>& nets, bool shared_input) {
  if (nets.empty()) throw std::invalid_argument("parallel: empty list");
  if (nets.size() == 1) return nets.front();
  int depth = 0, in = 0;
  for (const auto& n : nets) {
    if (n.depth() == 0) throw std::invalid_argument("parallel: member without layers");
    depth = std::max(depth, n.depth());
    if (shared_input && n.in_dim() != nets.front().in_dim())
      throw std::invalid_argument("parallel: shared input with different in_dims");
    in += n.in_dim();
  }
  if (shared_input) in = nets.front().in_dim();
  std::vector<std::vector<Layer>> padded;
  for (const auto& n : nets) padded.push_back(detail::padded_layers(n, depth));
  std::vector<Layer> ls;
  for (int j = 0; j < depth; ++j) {
    std::vector<const Layer*> col;
    for (const auto& p : padded) col.push_back(&p[j]);
    ls.push_back(detail::stack(col, shared_input && j == 0));
  }
  return ReluNet(in, std::move(ls));
}

// M * net(x) + c, fused into the final affine layer; M is rows x out_dim row-major
inline ReluNet linear_post(const ReluNet& net, const std::vector<double>& M, int rows, const std::vector<double>& c) {
  const int od = net.out_dim();
  if (int(M.size()) != rows * od || int(c.size()) != rows) throw std::invalid_argument("linear_post: dimension mismatch");
  if (net.depth() == 0) throw std::invalid_argument("linear_post: empty net");
  std::vector<Layer> ls = net.layers();
  const Layer& last = ls.back();
  Layer::Builder bl(last.cols);
  std::vector<double> acc(last.cols);
  std::vector<char> used(last.cols);
  for (int i = 0; i < rows; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    std::fill(used.begin(), used.end(), 0);
    double shift = 0.0;
    for (int r = 0; r < od; ++r) {
      const double m = M[std::size_t(i) * od + r];
      if (m == 0.0) continue;
      for (int p = last.row_ptr[r]; p < last.row_ptr[r + 1]; ++p) acc[last.col[p]] += m * last.val[p], used[last.col[p]] = 1;
      shift += m * last.b[r];
    }
    for (int k = 0; k < last.cols; ++k)
      if (used[k]) bl.add(k, acc[k]);
    bl.end_row(shift - c[i]);
  }
  ls.back() = bl.done();
  return ReluNet(net.in_dim(), std::move(ls));
}

// net(M x + c), fused into the first affine layer; M is net.in_dim x cols row-major
inline ReluNet affine_pre(const ReluNet& net, const std::vector<double>& M, int cols, const std::vector<double>& c) {
  const int id = net.in_dim();
  if (int(M.size()) != id * cols || int(c.size()) != id) throw std::invalid_argument("affine_pre: dimension mismatch");
  std::vector<Layer> ls = net.layers();
  const Layer& first = ls.front();
  Layer::Builder bl(cols);
  std::vector<double> acc(cols);
  for (int i = 0; i < first.rows; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    double shift = first.b[i];
    for (int p = first.row_ptr[i]; p < first.row_ptr[i + 1]; ++p) {
      const int r = first.col[p];
      for (int k = 0; k < cols; ++k) acc[k] += first.val[p] * M[std::size_t(r) * cols + k];
      shift -= first.val[p] * c[r];
    }
    for (int k = 0; k < cols; ++k) bl.add(k, acc[k]);
    bl.end_row(shift);
  }
  ls.front() = bl.done();
  return ReluNet(cols, std::move(ls));
}

// coordinates `idx` of an n-dimensional input
inline ReluNet select_net(int n, const std::vector<int>& idx) {
  Layer::Builder bl(n);
  for (int i : idx) {
    bl.add(i, 1.0);
    bl.end_row(0.0);
  }
  return ReluNet(n, {bl.done()});
}

inline ReluNet identity_net(int n) { return select_net(n, [&] {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}()); }

// ---- text format ----

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_net(std::ostream& os, const ReluNet& net) {
  os << "relunet 1\n";
  os << "in_dim " << net.in_dim() << "\nout_dim " << net.out_dim() << "\nlayers " << net.depth() << "\n";
  for (int j = 0; j < net.depth(); ++j) {
    const Layer& l = net.layers()[j];
    const bool dense = std::size_t(l.rows) * l.cols <= 65536;
    os << "layer " << j << " rows " << l.rows << " cols " << l.cols << " storage " << (dense ? "dense" : "sparse")
       << "\n";
    if (dense) {
      os << "A";
      for (double v : l.dense()) os << ' ' << format_double(v);
    } else {
      os << "A_sparse " << l.nnz();
      for (int i = 0; i < l.rows; ++i)
        for (int p = l.row_ptr[i]; p < l.row_ptr[i + 1]; ++p) os << ' ' << i << ' ' << l.col[p] << ' ' << format_double(l.val[p]);
    }
    os << "\nb";
    for (double v : l.b) os << ' ' << format_double(v);
    os << "\n";
  }
  const auto& s = net.stats();
  os << "stats L " << s.L << " S " << s.S << " B " << format_double(s.B) << "\nW";
  for (int w : s.W) os << ' ' << w;
  os << "\nend\n";
}

inline std::string serialize(const ReluNet& net) {
  std::ostringstream os;
  write_net(os, net);
  return os.str();
}

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// sequential "key values..." line reader reporting line numbers and missing fields
class LineReader {
 public:
  explicit LineReader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  std::istringstream expect(const std::string& key) {
    std::string line;
    while (true) {
      if (!std::getline(is_, line)) fail("missing field '" + key + "' (unexpected end of input)");
      ++lineno_;
      if (!line.empty() && line[0] != '#') break;
    }
    std::istringstream ss(line);
    std::string k;
    ss >> k;
    if (k != key) fail("expected field '" + key + "' but found '" + k + "'");
    return ss;
  }

  template <class T>
  T read(std::istringstream& ss, const std::string& field) {
    T v;
    if (!(ss >> v)) fail("missing or malformed value for '" + field + "'");
    return v;
  }

  double read_double(std::istringstream& ss, const std::string& field) {
    std::string tok;
    if (!(ss >> tok)) fail("missing or malformed value for '" + field + "'");
    try {
      std::size_t pos = 0;
      double v = std::stod(tok, &pos);
      if (pos != tok.size()) throw std::invalid_argument(tok);
      return v;
    } catch (...) {
      // stod rejects subnormal/inf spellings on some libcs; fall back to strtod
      char* end = nullptr;
      double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') fail("malformed number '" + tok + "' in '" + field + "'");
      return v;
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(what_ + ": line " + std::to_string(lineno_) + ": " + msg);
  }

 private:
  std::istream& is_;
  std::string what_;
  int lineno_ = 0;
};

inline ReluNet read_net(std::istream& is) {
  LineReader r(is, "relunet");
  {
    auto ss = r.expect("relunet");
    if (r.read<int>(ss, "relunet") != 1) r.fail("unsupported format version");
  }
  auto s1 = r.expect("in_dim");
  const int in_dim = r.read<int>(s1, "in_dim");
  auto s2 = r.expect("out_dim");
  const int out_dim = r.read<int>(s2, "out_dim");
  auto s3 = r.expect("layers");
  const int L = r.read<int>(s3, "layers");
  std::vector<Layer> ls;
  for (int j = 0; j < L; ++j) {
    const std::string tag = "layers[" + std::to_string(j) + "]";
    auto sh = r.expect("layer");
    std::string k;
    r.read<int>(sh, tag);
    sh >> k;
    const int rows = r.read<int>(sh, tag + ".rows");
    sh >> k;
    const int cols = r.read<int>(sh, tag + ".cols");
    sh >> k;
    const std::string storage = r.read<std::string>(sh, tag + ".storage");
    std::vector<double> A;
    Layer l;
    if (storage == "dense") {
      auto sa = r.expect("A");
      A.resize(std::size_t(rows) * cols);
      for (auto& v : A) v = r.read_double(sa, tag + ".A");
      l = Layer::from_dense(rows, cols, A, std::vector<double>(rows, 0.0));
    } else {
      auto sa = r.expect("A_sparse");
      const std::size_t nnz = r.read<std::size_t>(sa, tag + ".A_sparse");
      Layer::Builder bl(cols);
      int row = 0;
      for (std::size_t p = 0; p < nnz; ++p) {
        int i = r.read<int>(sa, tag + ".A_sparse");
        int c = r.read<int>(sa, tag + ".A_sparse");
        double v = r.read_double(sa, tag + ".A_sparse");
        while (row < i) bl.end_row(0.0), ++row;
        bl.add(c, v);
      }
      while (row < rows) bl.end_row(0.0), ++row;
      l = bl.done();
    }
    auto sb = r.expect("b");
    for (int i = 0; i < rows; ++i) l.b[i] = r.read_double(sb, tag + ".b");
    ls.push_back(std::move(l));
  }
  auto st = r.expect("stats");
  std::string k;
  st >> k;
  NetStats s;
  s.L = r.read<int>(st, "stats.L");
  st >> k;
  s.S = r.read<long long>(st, "stats.S");
  st >> k;
  s.B = r.read_double(st, "stats.B");
  auto sw = r.expect("W");
  for (int j = 0; j <= L; ++j) s.W.push_back(r.read<int>(sw, "stats.W"));
  r.expect("end");
  ReluNet net(in_dim, std::move(ls));
  if (net.out_dim() != out_dim) r.fail("out_dim does not match the last layer");
  if (!(net.stats() == s)) r.fail("stored stats disagree with the recount");
  return net;
}

inline ReluNet deserialize(const std::string& text) {
  std::istringstream is(text);
  return read_net(is);
}

inline void save_net(const std::string& path, const ReluNet& net) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_net(os, net);
}

inline ReluNet load_net(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_net(is);
}

}  // namespace scorelab

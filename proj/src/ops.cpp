#include <algorithm>
#include <cmath>

#include "five/error.hpp"
#include "five/kernels.hpp"
#include "five/tape.hpp"

namespace five::ops {
namespace {

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw StateError("operation on an unbound Var");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape) throw StateError("operands recorded on different tapes");
  return tape_of(a);
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
}

void require_matrix(const char* op, Var a) {
  if (a.value().rank() > 2)
    throw ShapeError(std::string(op) + ": expected a matrix, got " + to_string(a.shape()));
}

// Expands a per-column mask to one flag per element of an RxC matrix.
std::vector<bool> expand_mask(const char* op, const Mask& mask, std::size_t rows,
                              std::size_t cols) {
  if (mask.size() == rows * cols) return mask;
  if (mask.size() != cols)
    throw ShapeError(std::string(op) + ": mask of length " + std::to_string(mask.size()) +
                     " does not fit " + std::to_string(rows) + "x" + std::to_string(cols));
  std::vector<bool> full(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) full[r * cols + c] = mask[c];
  return full;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_matrix("matmul", a);
  require_matrix("matmul", b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: inner dimensions of " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " disagree");
  std::vector<double> out(m * n);
  kernels::matmul(a.value().data(), b.value().data(), out, m, k, n);
  return t.record(Tensor({m, n}, std::move(out)), {a.id, b.id},
                  [ia = a.id, ib = b.id, m, k, n](Tape& tp, const Tensor& g) {
                    const Tensor& av = tp.value(Var{&tp, ia});
                    const Tensor& bv = tp.value(Var{&tp, ib});
                    if (tp.requires_grad(Var{&tp, ia})) {
                      std::vector<double> da(m * k);
                      kernels::matmul_nt(g.data(), bv.data(), da, m, n, k);
                      tp.accumulate(ia, da);
                    }
                    if (tp.requires_grad(Var{&tp, ib})) {
                      std::vector<double> db(k * n);
                      kernels::matmul_tn(av.data(), g.data(), db, k, m, n);
                      tp.accumulate(ib, db);
                    }
                  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  require_matrix("transpose", a);
  return t.record(a.value().transposed(), {a.id}, [ia = a.id](Tape& tp, const Tensor& g) {
    tp.accumulate(ia, g.transposed());
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("add", a, b);
  std::vector<double> out(a.value().values());
  auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return t.record(Tensor(a.shape(), std::move(out)), {a.id, b.id},
                  [ia = a.id, ib = b.id](Tape& tp, const Tensor& g) {
                    tp.accumulate(ia, g);
                    tp.accumulate(ib, g);
                  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("sub", a, b);
  std::vector<double> out(a.value().values());
  auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return t.record(Tensor(a.shape(), std::move(out)), {a.id, b.id},
                  [ia = a.id, ib = b.id](Tape& tp, const Tensor& g) {
                    tp.accumulate(ia, g);
                    std::vector<double> neg(g.values());
                    for (double& x : neg) x = -x;
                    tp.accumulate(ib, neg);
                  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape("mul", a, b);
  std::vector<double> out(a.value().values());
  auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.record(Tensor(a.shape(), std::move(out)), {a.id, b.id},
                  [ia = a.id, ib = b.id](Tape& tp, const Tensor& g) {
                    auto av = tp.value(Var{&tp, ia}).data();
                    auto bv2 = tp.value(Var{&tp, ib}).data();
                    std::vector<double> da(g.size()), db(g.size());
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      da[i] = g[i] * bv2[i];
                      db[i] = g[i] * av[i];
                    }
                    tp.accumulate(ia, da);
                    tp.accumulate(ib, db);
                  });
}

Var scale(Var a, double factor) {
  Tape& t = tape_of(a);
  std::vector<double> out(a.value().values());
  for (double& x : out) x *= factor;
  return t.record(Tensor(a.shape(), std::move(out)), {a.id},
                  [ia = a.id, factor](Tape& tp, const Tensor& g) {
                    std::vector<double> da(g.values());
                    for (double& x : da) x *= factor;
                    tp.accumulate(ia, da);
                  });
}

Var divide_by_scalar(Var a, Var s) {
  Tape& t = tape_of(a, s);
  const double sv = s.value().item();
  if (sv == 0.0) throw DegenerateError("divide_by_scalar: division by zero");
  std::vector<double> out(a.value().values());
  for (double& x : out) x /= sv;
  return t.record(Tensor(a.shape(), std::move(out)), {a.id, s.id},
                  [ia = a.id, is = s.id](Tape& tp, const Tensor& g) {
                    const double sval = tp.value(Var{&tp, is}).item();
                    auto av = tp.value(Var{&tp, ia}).data();
                    std::vector<double> da(g.size());
                    double ds = 0.0;
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      da[i] = g[i] / sval;
                      ds -= g[i] * av[i];
                    }
                    tp.accumulate(ia, da);
                    std::vector<double> dsv{ds / (sval * sval)};
                    tp.accumulate(is, dsv);
                  });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  require_matrix("add_row", a);
  const std::size_t r = a.rows(), c = a.cols();
  if (row.value().size() != c)
    throw ShapeError("add_row: row of shape " + to_string(row.shape()) + " does not fit " +
                     to_string(a.shape()));
  std::vector<double> out(a.value().values());
  auto rv = row.value().data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += rv[j];
  return t.record(Tensor(a.shape(), std::move(out)), {a.id, row.id},
                  [ia = a.id, irow = row.id, r, c](Tape& tp, const Tensor& g) {
                    tp.accumulate(ia, g);
                    std::vector<double> drow(c, 0.0);
                    for (std::size_t i = 0; i < r; ++i)
                      for (std::size_t j = 0; j < c; ++j) drow[j] += g[i * c + j];
                    tp.accumulate(irow, drow);
                  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  std::vector<double> out(a.value().values());
  for (double& x : out) x = std::exp(x);
  Tensor result(a.shape(), out);
  return t.record(std::move(result), {a.id},
                  [ia = a.id, y = std::move(out)](Tape& tp, const Tensor& g) {
                    std::vector<double> da(g.size());
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] = g[i] * y[i];
                    tp.accumulate(ia, da);
                  });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  std::vector<double> out(a.value().values());
  for (double& x : out) x = std::tanh(x);
  return t.record(Tensor(a.shape(), std::move(out)), {a.id},
                  [ia = a.id](Tape& tp, const Tensor& g) {
                    auto x = tp.value(Var{&tp, ia}).data();
                    std::vector<double> da(g.size());
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      const double y = std::tanh(x[i]);
                      da[i] = g[i] * (1.0 - y * y);
                    }
                    tp.accumulate(ia, da);
                  });
}

Var clamp_min(Var a, double floor) {
  Tape& t = tape_of(a);
  std::vector<double> out(a.value().values());
  for (double& x : out) x = std::max(x, floor);
  return t.record(Tensor(a.shape(), std::move(out)), {a.id},
                  [ia = a.id, floor](Tape& tp, const Tensor& g) {
                    auto x = tp.value(Var{&tp, ia}).data();
                    std::vector<double> da(g.size());
                    for (std::size_t i = 0; i < g.size(); ++i) da[i] = x[i] > floor ? g[i] : 0.0;
                    tp.accumulate(ia, da);
                  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return t.record(Tensor::scalar(s), {a.id}, [ia = a.id](Tape& tp, const Tensor& g) {
    const auto& av = tp.value(Var{&tp, ia});
    tp.accumulate(ia, std::vector<double>(av.size(), g.item()));
  });
}

Var mean_rows(Var x) {
  return masked_mean_rows(x, Mask(x.rows(), true));
}

Var masked_mean_rows(Var x, const Mask& mask) {
  Tape& t = tape_of(x);
  require_matrix("masked_mean_rows", x);
  const std::size_t l = x.rows(), d = x.cols();
  if (mask.size() != l)
    throw ShapeError("masked_mean_rows: mask of length " + std::to_string(mask.size()) +
                     " for " + std::to_string(l) + " rows");
  const std::size_t valid = count_valid(mask);
  if (valid == 0) throw DegenerateError("masked_mean_rows: no valid rows");
  std::vector<double> out(d, 0.0);
  const Tensor& xv = x.value();
  for (std::size_t r = 0; r < l; ++r) {
    if (!mask[r]) continue;
    for (std::size_t j = 0; j < d; ++j) out[j] += xv.at(r, j);
  }
  const double denom = static_cast<double>(valid);
  for (double& v : out) v /= denom;
  return t.record(Tensor({1, d}, std::move(out)), {x.id},
                  [ix = x.id, mask, l, d, denom](Tape& tp, const Tensor& g) {
                    std::vector<double> dx(l * d, 0.0);
                    for (std::size_t r = 0; r < l; ++r) {
                      if (!mask[r]) continue;
                      for (std::size_t j = 0; j < d; ++j) dx[r * d + j] = g[j] / denom;
                    }
                    tp.accumulate(ix, dx);
                  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Tape& t = tape_of(parts.front());
  const std::size_t d = parts.front().cols();
  std::vector<double> out;
  std::vector<std::size_t> ids, offsets;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    tape_of(p, parts.front());
    require_matrix("concat_rows", p);
    if (p.cols() != d)
      throw ShapeError("concat_rows: column counts " + std::to_string(d) + " and " +
                       std::to_string(p.cols()) + " differ");
    ids.push_back(p.id);
    offsets.push_back(out.size());
    out.insert(out.end(), p.value().data().begin(), p.value().data().end());
    rows += p.rows();
  }
  return t.record(Tensor({rows, d}, std::move(out)), ids,
                  [ids, offsets](Tape& tp, const Tensor& g) {
                    for (std::size_t i = 0; i < ids.size(); ++i) {
                      std::size_t n = tp.value(Var{&tp, ids[i]}).size();
                      tp.accumulate(ids[i], g.data().subspan(offsets[i], n));
                    }
                  });
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_matrix("concat_cols", a);
  require_matrix("concat_cols", b);
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
  if (b.rows() != r)
    throw ShapeError("concat_cols: row counts of " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
  std::vector<double> out(r * (ca + cb));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = a.value().at(i, j);
    for (std::size_t j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = b.value().at(i, j);
  }
  return t.record(Tensor({r, ca + cb}, std::move(out)), {a.id, b.id},
                  [ia = a.id, ib = b.id, r, ca, cb](Tape& tp, const Tensor& g) {
                    std::vector<double> da(r * ca), db(r * cb);
                    for (std::size_t i = 0; i < r; ++i) {
                      for (std::size_t j = 0; j < ca; ++j) da[i * ca + j] = g[i * (ca + cb) + j];
                      for (std::size_t j = 0; j < cb; ++j)
                        db[i * cb + j] = g[i * (ca + cb) + ca + j];
                    }
                    tp.accumulate(ia, da);
                    tp.accumulate(ib, db);
                  });
}

Var gather_rows(Var x, std::span<const std::size_t> indices) {
  Tape& t = tape_of(x);
  require_matrix("gather_rows", x);
  const std::size_t l = x.rows(), d = x.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out;
  out.reserve(idx.size() * d);
  for (std::size_t i : idx) {
    if (i >= l)
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of " +
                       std::to_string(l) + " rows");
    auto row = x.value().row_span(i);
    out.insert(out.end(), row.begin(), row.end());
  }
  return t.record(Tensor({idx.size(), d}, std::move(out)), {x.id},
                  [ix = x.id, idx, l, d](Tape& tp, const Tensor& g) {
                    std::vector<double> dx(l * d, 0.0);
                    for (std::size_t k = 0; k < idx.size(); ++k)
                      for (std::size_t j = 0; j < d; ++j) dx[idx[k] * d + j] += g[k * d + j];
                    tp.accumulate(ix, dx);
                  });
}

Var embedding_mean(Var table, const std::vector<std::vector<std::size_t>>& ids) {
  Tape& t = tape_of(table);
  require_matrix("embedding_mean", table);
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<double> out(ids.size() * d, 0.0);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r].empty()) throw DegenerateError("embedding_mean: empty token list");
    for (std::size_t id : ids[r]) {
      if (id >= v)
        throw ShapeError("embedding_mean: token id " + std::to_string(id) + " out of " +
                         std::to_string(v));
      auto row = table.value().row_span(id);
      for (std::size_t j = 0; j < d; ++j) out[r * d + j] += row[j];
    }
    const double n = static_cast<double>(ids[r].size());
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= n;
  }
  return t.record(Tensor({ids.size(), d}, std::move(out)), {table.id},
                  [it = table.id, ids, v, d](Tape& tp, const Tensor& g) {
                    std::vector<double> dt(v * d, 0.0);
                    for (std::size_t r = 0; r < ids.size(); ++r) {
                      const double n = static_cast<double>(ids[r].size());
                      for (std::size_t id : ids[r])
                        for (std::size_t j = 0; j < d; ++j) dt[id * d + j] += g[r * d + j] / n;
                    }
                    tp.accumulate(it, dt);
                  });
}

Var l2_normalize_rows(Var x) {
  Tape& t = tape_of(x);
  require_matrix("l2_normalize_rows", x);
  const std::size_t r = x.rows(), c = x.cols();
  std::vector<double> out(x.value().values());
  std::vector<double> norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += out[i * c + j] * out[i * c + j];
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0)
      throw DegenerateError("l2_normalize_rows: row " + std::to_string(i) + " has zero norm");
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= norms[i];
  }
  Tensor y({r, c}, out);
  return t.record(std::move(y), {x.id},
                  [ix = x.id, out = std::move(out), norms, r, c](Tape& tp, const Tensor& g) {
                    std::vector<double> dx(r * c);
                    for (std::size_t i = 0; i < r; ++i) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < c; ++j) dot += out[i * c + j] * g[i * c + j];
                      for (std::size_t j = 0; j < c; ++j)
                        dx[i * c + j] = (g[i * c + j] - out[i * c + j] * dot) / norms[i];
                    }
                    tp.accumulate(ix, dx);
                  });
}

Var masked_softmax(Var logits, const Mask& mask) {
  Tape& t = tape_of(logits);
  require_matrix("masked_softmax", logits);
  const std::size_t r = logits.rows(), c = logits.cols();
  std::vector<bool> full = expand_mask("masked_softmax", mask, r, c);
  const Tensor& x = logits.value();
  std::vector<double> out(r * c, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    bool any = false;
    double mx = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!full[i * c + j]) continue;
      mx = any ? std::max(mx, x.at(i, j)) : x.at(i, j);
      any = true;
    }
    if (!any)
      throw DegenerateError("masked_softmax: row " + std::to_string(i) + " is fully masked");
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!full[i * c + j]) continue;
      out[i * c + j] = std::exp(x.at(i, j) - mx);
      s += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= s;
  }
  Tensor y({r, c}, out);
  return t.record(std::move(y), {logits.id},
                  [ix = logits.id, out = std::move(out), r, c](Tape& tp, const Tensor& g) {
                    std::vector<double> dx(r * c);
                    for (std::size_t i = 0; i < r; ++i) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * out[i * c + j];
                      for (std::size_t j = 0; j < c; ++j)
                        dx[i * c + j] = out[i * c + j] * (g[i * c + j] - dot);
                    }
                    tp.accumulate(ix, dx);
                  });
}

Var softmax_rows(Var logits) { return masked_softmax(logits, Mask(logits.cols(), true)); }

Var attention(Var q, Var k, Var v, const Mask& key_mask) {
  require_matrix("attention", q);
  require_matrix("attention", k);
  require_matrix("attention", v);
  if (q.cols() != k.cols())
    throw ShapeError("attention: query " + to_string(q.shape()) + " and key " +
                     to_string(k.shape()) + " widths differ");
  if (k.rows() != v.rows())
    throw ShapeError("attention: key " + to_string(k.shape()) + " and value " +
                     to_string(v.shape()) + " counts differ");
  if (key_mask.size() != k.rows())
    throw ShapeError("attention: key mask of length " + std::to_string(key_mask.size()) +
                     " for " + std::to_string(k.rows()) + " keys");
  if (count_valid(key_mask) == 0) throw DegenerateError("attention: all keys are masked");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Var scores = scale(matmul(q, transpose(k)), inv_sqrt_d);
  Var weights = masked_softmax(scores, key_mask);
  return matmul(weights, v);
}

Var soft_cross_entropy(Var logits, const Tensor& targets) {
  Tape& t = tape_of(logits);
  require_matrix("soft_cross_entropy", logits);
  const std::size_t n = logits.rows(), c = logits.cols();
  if (targets.rows() != n || targets.cols() != c || targets.size() != n * c)
    throw ShapeError("soft_cross_entropy: targets " + to_string(targets.shape()) +
                     " for logits " + to_string(logits.shape()));
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (targets.at(i, j) < 0.0)
        throw ValidationError("soft_cross_entropy: negative target in row " + std::to_string(i));
      s += targets.at(i, j);
    }
    if (std::abs(s - 1.0) > 1e-9)
      throw ValidationError("soft_cross_entropy: target row " + std::to_string(i) +
                            " sums to " + std::to_string(s));
  }
  const Tensor& x = logits.value();
  std::vector<double> probs(n * c);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(x.at(i, j) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(x.at(i, j) - lse);
      const double y = targets.at(i, j);
      if (y != 0.0) loss -= y * (x.at(i, j) - lse);
    }
  }
  loss /= static_cast<double>(n);
  return t.record(Tensor::scalar(loss), {logits.id},
                  [ix = logits.id, probs = std::move(probs), targets, n, c](Tape& tp,
                                                                             const Tensor& g) {
                    const double scale_factor = g.item() / static_cast<double>(n);
                    std::vector<double> dx(n * c);
                    for (std::size_t i = 0; i < n; ++i) {
                      double row_mass = 0.0;
                      for (std::size_t j = 0; j < c; ++j) row_mass += targets.at(i, j);
                      for (std::size_t j = 0; j < c; ++j)
                        dx[i * c + j] =
                            scale_factor * (probs[i * c + j] * row_mass - targets.at(i, j));
                    }
                    tp.accumulate(ix, dx);
                  });
}

}  // namespace five::ops

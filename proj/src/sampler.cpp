#include "five/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "five/error.hpp"

namespace five {
namespace {
std::atomic<std::uint64_t> g_invocations{0};
}  // namespace

void SampleConfig::validate() const {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ValidationError("sample ratio must be in (0, 1]");
  if (maxn < 1) throw ValidationError("sample maxn must be at least 1");
}

std::size_t sample_count(std::size_t p, const SampleConfig& cfg) {
  cfg.validate();
  if (p < 1) throw ValidationError("sample_count: bag has no instances");
  const double product = static_cast<double>(p) * cfg.ratio;
  const double nearest = std::round(product);
  const double floored =
      std::abs(product - nearest) <= 1e-9 * std::max(1.0, product) ? nearest : std::floor(product);
  const auto count = static_cast<std::size_t>(floored);
  return std::max<std::size_t>(1, std::min(count, cfg.maxn));
}

std::vector<std::size_t> chunked_sample(std::size_t p, std::size_t s_n, Rng& rng) {
  if (s_n < 1 || s_n > p)
    throw ValidationError("chunked_sample: need 1 <= s_n <= p, got s_n=" + std::to_string(s_n) +
                          " p=" + std::to_string(p));
  std::vector<std::size_t> out(s_n);
  for (std::size_t k = 0; k < s_n; ++k) {
    const std::size_t lo = k * p / s_n;
    const std::size_t hi = (k + 1) * p / s_n;
    out[k] = lo + rng.uniform_index(hi - lo);
  }
  return out;
}

SampledBag sample_bag(const std::string& bag_id, std::size_t p, const SampleConfig& cfg,
                      std::uint64_t epoch) {
  g_invocations.fetch_add(1, std::memory_order_relaxed);
  Rng rng = Rng::substream(cfg.seed, epoch, hash_string(bag_id));
  return SampledBag{bag_id, chunked_sample(p, sample_count(p, cfg), rng)};
}

std::uint64_t sampler_invocations() { return g_invocations.load(); }
void reset_sampler_invocations() { g_invocations.store(0); }

Tensor select_rows(const Tensor& x, const std::vector<std::size_t>& indices) {
  const std::size_t d = x.cols();
  std::vector<double> out;
  out.reserve(indices.size() * d);
  for (std::size_t i : indices) {
    if (i >= x.rows()) throw ShapeError("select_rows: index " + std::to_string(i) + " out of range");
    auto r = x.row_span(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor::matrix(indices.size(), d, std::move(out));
}

Tensor PaddedBatch::bag(std::size_t b) const {
  if (b >= batch) throw ShapeError("PaddedBatch::bag: index out of range");
  auto all = data.data();
  auto first = all.begin() + static_cast<std::ptrdiff_t>(b * length * dim);
  return Tensor::matrix(length, dim, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(length * dim)));
}

PaddedBatch pad_batch(const std::vector<Tensor>& bags, double pad_value) {
  if (bags.empty()) throw ValidationError("pad_batch: no bags");
  PaddedBatch out;
  out.batch = bags.size();
  out.dim = bags.front().cols();
  for (const Tensor& b : bags) {
    if (b.rank() != 2) throw ShapeError("pad_batch: bag of shape " + to_string(b.shape()) + " is not a matrix");
    if (b.cols() != out.dim)
      throw ShapeError("pad_batch: mixed feature dimensions " + std::to_string(out.dim) + " and " +
                       std::to_string(b.cols()));
    out.length = std::max(out.length, b.rows());
  }
  std::vector<double> data(out.batch * out.length * out.dim, pad_value);
  for (std::size_t i = 0; i < out.batch; ++i) {
    const Tensor& b = bags[i];
    std::copy(b.data().begin(), b.data().end(), data.begin() + static_cast<std::ptrdiff_t>(i * out.length * out.dim));
    Mask m(out.length, false);
    std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(b.rows()), true);
    out.masks.push_back(std::move(m));
  }
  out.data = Tensor({out.batch, out.length, out.dim}, std::move(data));
  return out;
}

}  // namespace five

// Copyright 2026 The attnfilter Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "attn/em.hpp"
#include "attn/error.hpp"
#include "attn/random.hpp"

namespace attn {
namespace {

constexpr int kRestarts = 5;
constexpr int kMaxIters = 1000;
constexpr double kVarianceFloor = 1e-6;
constexpr double kClipLo = 1e-6;
constexpr double kClipHi = 1.0 - 1e-6;

struct Gmm {
  std::vector<double> weight, mean, var;
  double loglik = -std::numeric_limits<double>::infinity();
};

double log_normal_pdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
}

// k-means++ style seeding from the data.
Gmm seed_components(std::span<const double> x, int k_count, Rng& rng) {
  const std::size_t n = x.size();
  Gmm g;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var = std::max(var / n, kVarianceFloor);

  std::vector<double> centers;
  centers.push_back(x[rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)]);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k_count) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double c : centers) best = std::min(best, (x[i] - c) * (x[i] - c));
      d2[i] = best;
      total += best;
    }
    if (!(total > 0.0)) {
      centers.push_back(centers.back());
      continue;
    }
    double r = rng.uniform() * total;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      r -= d2[i];
      if (r < 0.0) {
        pick = i;
        break;
      }
    }
    centers.push_back(x[pick]);
  }
  for (double c : centers) {
    g.weight.push_back(1.0 / k_count);
    g.mean.push_back(c);
    g.var.push_back(var);
  }
  return g;
}

void run_em(std::span<const double> x, Gmm& g) {
  const std::size_t n = x.size();
  const std::size_t k_count = g.weight.size();
  std::vector<double> resp(n * k_count);
  std::vector<double> terms(k_count);
  double previous = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < kMaxIters; ++iter) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < k_count; ++k) {
        terms[k] = std::log(g.weight[k]) + log_normal_pdf(x[i], g.mean[k], g.var[k]);
      }
      const double z = log_sum_exp(terms);
      ll += z;
      for (std::size_t k = 0; k < k_count; ++k) resp[i * k_count + k] = std::exp(terms[k] - z);
    }
    g.loglik = ll;
    if (std::abs(ll - previous) <= 1e-10 * std::max(1.0, std::abs(ll))) break;
    previous = ll;

    for (std::size_t k = 0; k < k_count; ++k) {
      double nk = 0.0, sx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        nk += resp[i * k_count + k];
        sx += resp[i * k_count + k] * x[i];
      }
      if (!(nk > 0.0)) {
        g.weight[k] = 0.0;
        continue;
      }
      const double mk = sx / nk;
      double sv = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - mk;
        sv += resp[i * k_count + k] * d * d;
      }
      g.weight[k] = nk / static_cast<double>(n);
      g.mean[k] = mk;
      g.var[k] = std::max(sv / nk, kVarianceFloor);
    }
    if (std::any_of(g.weight.begin(), g.weight.end(), [](double w) { return w == 0.0; })) {
      g.loglik = -std::numeric_limits<double>::infinity();
      return;
    }
  }
}

}  // namespace

MixtureFit fit_logistic_normal_mixture(std::span<const double> eta_hats, int components,
                                       std::uint64_t seed) {
  if (components < 1) throw DomainError("fit_logistic_normal_mixture: need K >= 1");
  if (eta_hats.empty()) throw ValidationError("fit_logistic_normal_mixture: no samples");
  MixtureFit out;
  std::vector<double> x;
  x.reserve(eta_hats.size());
  for (double eta : eta_hats) {
    const double clipped = std::clamp(eta, kClipLo, kClipHi);
    if (clipped != eta) ++out.clipped_inputs;
    x.push_back(std::log(clipped / (1.0 - clipped)));
  }

  Gmm best;
  for (int r = 0; r < kRestarts; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    Gmm g = seed_components(x, components, rng);
    run_em(x, g);
    if (g.loglik > best.loglik) best = std::move(g);
  }
  if (best.weight.empty()) {
    throw DegenerateError("fit_logistic_normal_mixture: every restart lost a component");
  }

  const double m = static_cast<double>(x.size());
  std::vector<std::size_t> order(best.weight.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return best.mean[a] < best.mean[b]; });
  double rest = 1.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto k = order[i];
    if (best.weight[k] < 1.0 / (10.0 * m)) {
      throw DegenerateError("fit_logistic_normal_mixture: component weight " +
                            std::to_string(best.weight[k]) + " below 1/(10 m)");
    }
    const double w = i + 1 == order.size() ? rest : best.weight[k];
    rest -= w;
    out.mixture.components.push_back({w, best.mean[k], std::sqrt(best.var[k])});
  }
  out.loglik = best.loglik;
  return out;
}

}  // namespace attn

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

#include "attn/posterior.hpp"

#include <algorithm>

namespace attn {

double PosteriorSummary::tail_prob(double eta_star) const {
  if (kind == Kind::PointMasses) {
    double p = 0.0;
    for (std::size_t k = 0; k < support.size(); ++k) {
      if (support[k] >= eta_star) p += masses[k];
    }
    return std::min(p, 1.0);
  }

  const auto nodes = grid->nodes();
  const std::size_t n = nodes.size();
  if (eta_star <= 0.0) return std::min(total_mass(), 1.0);
  if (eta_star > 1.0) return 0.0;
  const double h = grid->spacing();
  auto cell = static_cast<std::size_t>(eta_star / h);
  cell = std::min(cell, n - 2);
  double p = 0.0;
  // Partial cell [eta_star, nodes[cell + 1]] under linear interpolation.
  {
    const double x0 = nodes[cell];
    const double x1 = nodes[cell + 1];
    const double t = std::clamp((eta_star - x0) / (x1 - x0), 0.0, 1.0);
    const double f_star = density[cell] + t * (density[cell + 1] - density[cell]);
    p += 0.5 * (f_star + density[cell + 1]) * (x1 - eta_star);
  }
  for (std::size_t k = cell + 1; k + 1 < n; ++k) {
    p += 0.5 * (density[k] + density[k + 1]) * (nodes[k + 1] - nodes[k]);
  }
  return std::clamp(p, 0.0, 1.0);
}

double PosteriorSummary::total_mass() const {
  if (kind == Kind::PointMasses) {
    double s = 0.0;
    for (double m : masses) s += m;
    return s;
  }
  const auto w = grid->weights();
  double s = 0.0;
  for (std::size_t k = 0; k < density.size(); ++k) s += w[k] * density[k];
  return s;
}

std::pair<std::vector<double>, std::vector<double>> PosteriorSummary::point_masses()
    const {
  if (kind == Kind::PointMasses) return {support, masses};
  const auto nodes = grid->nodes();
  const auto w = grid->weights();
  std::vector<double> m(density.size());
  for (std::size_t k = 0; k < density.size(); ++k) m[k] = w[k] * density[k];
  return {std::vector<double>(nodes.begin(), nodes.end()), std::move(m)};
}

}  // namespace attn

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

#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attn/special.hpp"

namespace attn {

// Posterior of one user's attentiveness. Either a set of point masses
// (two-point prior) or a normalized density on a quadrature grid.
struct PosteriorSummary {
  enum class Kind { PointMasses, GridDensity };

  std::string user_id;
  Kind kind = Kind::PointMasses;
  double map_eta = 0.0;
  double mean_eta = 0.0;
  // Grid posteriors only; NaN for point masses.
  double expected_log_eta = 0.0;
  double expected_log_1m_eta = 0.0;

  // PointMasses: support points and their probabilities.
  std::vector<double> support;
  std::vector<double> masses;
  // GridDensity: density at grid nodes, normalized under the trapezoid rule.
  std::optional<QuadratureGrid> grid;
  std::vector<double> density;

  // Requested (eta_star, P(eta >= eta_star)) pairs.
  std::vector<std::pair<double, double>> tail_probs;

  // P(eta >= eta_star). Step function for point masses; for grid densities
  // the exact integral of the piecewise-linear interpolant over [eta_star, 1].
  double tail_prob(double eta_star) const;

  // Total probability under the summary's own measure (1 up to rounding).
  double total_mass() const;

  // Support points and probability masses under the summary's measure.
  // For grid densities the masses are trapezoid weight times density.
  std::pair<std::vector<double>, std::vector<double>> point_masses() const;
};

}  // namespace attn

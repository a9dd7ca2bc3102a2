/*
 * Copyright 2026 The IDSF Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>

#include "idsf/autodiff.hpp"

namespace idsf {

struct AdamOptions {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(const ad::ParameterSet<T>& params, AdamOptions opts) : opts_(opts) {
    for (const auto& name : params.names()) {
      const auto& p = params.at(name);
      first_.add(name, Tensor<T>(p.rows(), p.cols()));
      second_.add(name, Tensor<T>(p.rows(), p.cols()));
    }
  }

  const AdamOptions& options() const { return opts_; }
  std::size_t steps() const { return steps_; }
  const ad::ParameterSet<T>& first_moments() const { return first_; }
  const ad::ParameterSet<T>& second_moments() const { return second_; }

  void step(ad::ParameterSet<T>& params, const ad::GradientTable<T>& grads) {
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(opts_.beta1, t);
    const double c2 = 1.0 - std::pow(opts_.beta2, t);
    const T b1 = static_cast<T>(opts_.beta1), b2 = static_cast<T>(opts_.beta2);
    for (const auto& name : params.names()) {
      if (!grads.contains(name)) continue;
      auto& p = params.at(name);
      const auto& g = grads.at(name);
      auto& m = first_.at(name);
      auto& v = second_.at(name);
      if (!(g.shape() == p.shape())) throw DimensionError("gradient shape mismatch for " + name);
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = b1 * m[k] + (T(1) - b1) * g[k];
        v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
        const double m_hat = static_cast<double>(m[k]) / c1;
        const double v_hat = static_cast<double>(v[k]) / c2;
        p[k] -= static_cast<T>(opts_.learning_rate * m_hat / (std::sqrt(v_hat) + opts_.epsilon));
      }
    }
  }

 private:
  AdamOptions opts_;
  ad::ParameterSet<T> first_, second_;
  std::size_t steps_ = 0;
};

}  // namespace idsf

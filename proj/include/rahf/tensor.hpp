// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rahf {

/// Dense row-major float32 array. Shape dims are all positive.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, float fill = 0.0f);
  Tensor(std::vector<int> shape, std::vector<float> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape), 0.0f); }
  static Tensor ones(std::vector<int> shape) { return Tensor(std::move(shape), 1.0f); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  /// Rows/cols as a 2-D view: leading dims collapse into rows.
  int rows() const;
  int cols() const;

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  Tensor reshaped(std::vector<int> shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

std::size_t shape_numel(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

/// Counter-based seeding on top of mt19937_64. `split` derives an independent
/// child stream from a key, so per-sample streams can be keyed by
/// (seed, epoch, index) regardless of call order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  Rng split(std::uint64_t key) const;
  Rng split(std::initializer_list<std::uint64_t> keys) const;

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

  double uniform(double lo = 0.0, double hi = 1.0);
  int uniform_int(int lo, int hi);  // inclusive
  double normal(double mean = 0.0, double stddev = 1.0);
  /// Normal resampled until |z| <= 2 stddev.
  double truncated_normal(double stddev);
  bool bernoulli(double p);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace rahf

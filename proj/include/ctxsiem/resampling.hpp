#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ctxsiem/context.hpp"
#include "ctxsiem/event.hpp"

namespace ctxsiem {

struct MixedSample {
  Eigen::VectorXd numeric;
  std::vector<int> categorical;
  ClassLabel label = ClassLabel::Normal;
  bool synthetic = false;
};

/// Population used for the median-of-standard-deviations mismatch penalty.
enum class DispersionPopulation { MinorityOnly, FullTraining };

struct SmoteConfig {
  int k_neighbors = 5;
  std::size_t target_count = 0;
  std::uint64_t seed = 0;
};

/// Median over numeric columns of the population standard deviation.
double median_numeric_std(std::span<const MixedSample> samples);

/// Squared mixed distance: squared Euclidean over numerics plus m^2 per
/// categorical mismatch.
double mixed_distance(const MixedSample& a, const MixedSample& b, double m);

/// Indices of the k nearest other samples, ordered by (distance, index).
std::vector<std::vector<int>> nearest_neighbours(std::span<const MixedSample> samples, int k, double m);

/// SMOTE-NC over one class. Returns the originals followed by synthetics, up
/// to target_count. `m` defaults to median_numeric_std of `samples`.
/// Throws InputError when the class has <= k_neighbors members.
std::vector<MixedSample> smote_nc(std::span<const MixedSample> samples, const SmoteConfig& cfg,
                                  std::mt19937_64& rng, std::optional<double> m = std::nullopt);
std::vector<MixedSample> smote_nc(std::span<const MixedSample> samples, const SmoteConfig& cfg);

/// Uniform subset without replacement, original order preserved.
template <typename T>
std::vector<T> undersample(std::span<const T> samples, std::size_t target, std::mt19937_64& rng);

std::vector<std::size_t> undersample_indices(std::size_t n, std::size_t target, std::mt19937_64& rng);

struct SplitFractions {
  double train = 0.64;
  double validation = 0.16;
  double test = 0.20;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Per-class shuffled partition. For a class of size n the test share is
/// round(test * n), validation round(validation * n), the rest is training.
SplitIndices stratified_split(std::span<const ClassLabel> labels, const SplitFractions& f,
                              std::uint64_t seed);
/// Throws InputError if an event carries no label.
SplitIndices stratified_split(std::span<const SecurityEvent> events, const SplitFractions& f,
                              std::uint64_t seed);

struct LabelledVector {
  EnrichedVector x;
  ClassLabel y = ClassLabel::Normal;
  bool synthetic = false;
};

struct BalanceConfig {
  std::map<ClassLabel, std::size_t> targets;  // empty = NORMAL 5000, attacks 1250
  int k_neighbors = 5;
  std::uint64_t seed = 0;
  DispersionPopulation population = DispersionPopulation::MinorityOnly;
  bool require_all_classes = true;

  std::size_t target_for(ClassLabel l) const;
};

/// Two-sided balancing: classes above target are undersampled, classes below
/// are grown with SMOTE-NC. Output is grouped by class in label order.
std::vector<LabelledVector> balance_training(std::span<const LabelledVector> train,
                                             const BalanceConfig& cfg);

// --- template implementation ---

template <typename T>
std::vector<T> undersample(std::span<const T> samples, std::size_t target, std::mt19937_64& rng) {
  std::vector<T> out;
  out.reserve(target);
  for (std::size_t i : undersample_indices(samples.size(), target, rng)) out.push_back(samples[i]);
  return out;
}

}  // namespace ctxsiem

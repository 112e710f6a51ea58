#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tesr/dataset.hpp"
#include "tesr/tensor.hpp"

namespace tesr::sim {

using Rng = std::mt19937_64;

/// A regression function of one covariate row (x1 is element 0).
using RegressionFn = std::function<double(std::span<const double>)>;

/// Seeds an independent stream for (seed, stream tag, index).
inline Rng make_stream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(index)};
  return Rng(seq);
}

// ---------------------------------------------------------------------------
// Component functions

enum class ComponentFamily { ex1, s1 };

namespace ex1 {
inline double f1(double u) { return (u - 0.9) * (u - 0.9); }
inline double f2(double u, double v) { return -u * v * (u - 0.5) * (u - 0.5); }
inline double f3(double u, double v) { return std::sin(-0.2 * std::numbers::pi * u * v) + 1.0; }
inline double f4(double u, double v) { return u * (std::abs(v) + 1.0) * (std::abs(v) + 1.0); }
inline double f5(double u) { return std::sin(0.5 * std::numbers::pi * u) + 1.0; }
inline double f6(double u) {
  const double s = std::sin(std::numbers::pi * u);
  return 2.0 * s / (2.0 - s);
}
}  // namespace ex1

namespace s1 {
inline double f1(double u) { return u; }
inline double f2(double u) { return 2.0 * u + 1.0; }
inline double f3(double u) { return 2.0 * u - 1.0; }
inline double f4(double u) { return 0.1 * std::sin(std::numbers::pi * u) + 0.2 * std::cos(std::numbers::pi * u); }
inline double f5(double u) {
  const double s = std::sin(std::numbers::pi * u);
  return s / (2.0 - s);
}
inline double f6(double u) { return u * (std::abs(u) + 1.0) * (std::abs(u) + 1.0); }
}  // namespace s1

inline int component_arity(ComponentFamily family, int index) {
  require(index >= 1 && index <= 6, "eval_component: index must be in 1..6");
  if (family == ComponentFamily::s1) return 1;
  return (index >= 2 && index <= 4) ? 2 : 1;
}

inline double eval_component(ComponentFamily family, int index, std::span<const double> args) {
  const int arity = component_arity(family, index);
  require(static_cast<int>(args.size()) == arity, "eval_component: f" + std::to_string(index) + " takes " +
                                                      std::to_string(arity) + " argument(s), got " +
                                                      std::to_string(args.size()));
  if (family == ComponentFamily::ex1) {
    switch (index) {
      case 1: return ex1::f1(args[0]);
      case 2: return ex1::f2(args[0], args[1]);
      case 3: return ex1::f3(args[0], args[1]);
      case 4: return ex1::f4(args[0], args[1]);
      case 5: return ex1::f5(args[0]);
      default: return ex1::f6(args[0]);
    }
  }
  switch (index) {
    case 1: return s1::f1(args[0]);
    case 2: return s1::f2(args[0]);
    case 3: return s1::f3(args[0]);
    case 4: return s1::f4(args[0]);
    case 5: return s1::f5(args[0]);
    default: return s1::f6(args[0]);
  }
}

// ---------------------------------------------------------------------------
// Covariate laws

struct CovariateLaw {
  enum class Kind { ar_gaussian, std_gaussian, uniform01 };
  Kind kind = Kind::std_gaussian;
  double rho = 0.2;  // Sigma_ij = rho^|i-j| for ar_gaussian

  static CovariateLaw ar_gaussian(double rho) { return {Kind::ar_gaussian, rho}; }
  static CovariateLaw std_gaussian() { return {Kind::std_gaussian, 0.0}; }
  static CovariateLaw uniform01() { return {Kind::uniform01, 0.0}; }

  std::string name() const {
    switch (kind) {
      case Kind::ar_gaussian: return "ar_gaussian(" + std::to_string(rho) + ")";
      case Kind::std_gaussian: return "std_gaussian";
      default: return "uniform01";
    }
  }

  Tensor2D covariance(Index d) const {
    Tensor2D s = Tensor2D::Identity(d, d);
    if (kind == Kind::ar_gaussian)
      for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) s(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
    else if (kind == Kind::uniform01)
      s /= 12.0;
    return s;
  }

  /// n draws in R^d. Correlated Gaussians use the lower Cholesky factor of
  /// Sigma, x = L z.
  Tensor2D sample(Index n, Index d, Rng& rng) const {
    Tensor2D x(n, d);
    if (kind == Kind::uniform01) {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (Index i = 0; i < x.size(); ++i) x.data()[i] = unif(rng);
      return x;
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    if (kind == Kind::ar_gaussian) {
      const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(covariance(d)).matrixL();
      x = (x * chol.transpose()).eval();
    }
    return x;
  }
};

// ---------------------------------------------------------------------------
// Monte Carlo functionals

namespace detail {
template <typename Fn>
void for_each_mc_row(const CovariateLaw& law, Index d, Index n_mc, std::uint64_t seed, Fn&& fn) {
  Rng rng = make_stream(seed, 0x4d43, 0);
  constexpr Index kChunk = 10000;
  for (Index done = 0; done < n_mc; done += kChunk) {
    const Index rows = std::min(kChunk, n_mc - done);
    const Tensor2D x = law.sample(rows, d, rng);
    for (Index i = 0; i < rows; ++i) fn(std::span<const double>(x.data() + i * d, static_cast<std::size_t>(d)));
  }
}
}  // namespace detail

/// Monte Carlo estimate of E g(X) for X ~ law on R^d.
inline double mc_center(const RegressionFn& g, const CovariateLaw& law, Index d, Index n_mc, std::uint64_t seed) {
  require(n_mc >= 100000, "mc_center: need at least 1e5 Monte Carlo draws");
  double total = 0.0;
  detail::for_each_mc_row(law, d, n_mc, seed, [&](std::span<const double> x) { total += g(x); });
  return total / static_cast<double>(n_mc);
}

/// Integral of |g1 - g2| under the covariate law.
inline double fn_l1_distance(const RegressionFn& g1, const RegressionFn& g2, const CovariateLaw& law, Index d,
                             Index n_mc, std::uint64_t seed) {
  require(n_mc >= 1, "fn_l1_distance: need at least one draw");
  double total = 0.0;
  detail::for_each_mc_row(law, d, n_mc, seed, [&](std::span<const double> x) { total += std::abs(g1(x) - g2(x)); });
  return total / static_cast<double>(n_mc);
}

/// 1 - Pearson correlation of g1(X) and g2(X); lies in [0, 2].
inline double fn_cosine_distance(const RegressionFn& g1, const RegressionFn& g2, const CovariateLaw& law, Index d,
                                 Index n_mc, std::uint64_t seed) {
  require(n_mc >= 2, "fn_cosine_distance: need at least two draws");
  double s1 = 0, s2 = 0, s11 = 0, s22 = 0, s12 = 0;
  detail::for_each_mc_row(law, d, n_mc, seed, [&](std::span<const double> x) {
    const double a = g1(x);
    const double b = g2(x);
    s1 += a;
    s2 += b;
    s11 += a * a;
    s22 += b * b;
    s12 += a * b;
  });
  const double n = static_cast<double>(n_mc);
  const double cov = s12 / n - (s1 / n) * (s2 / n);
  const double v1 = s11 / n - (s1 / n) * (s1 / n);
  const double v2 = s22 / n - (s2 / n) * (s2 / n);
  require(v1 > 0 && v2 > 0, "fn_cosine_distance: a function is constant under the covariate law");
  return 1.0 - cov / std::sqrt(v1 * v2);
}

// ---------------------------------------------------------------------------
// Studies

inline constexpr Index kCenteringDraws = 1000000;
inline constexpr std::uint64_t kCenteringSeed = 20240607;
inline constexpr Index kDefaultTestSize = 10000;
inline constexpr double kNoiseSd = 0.5;

/// Centering constant E g0(X), computed once per key and cached for the life
/// of the process. `d_used` is the number of leading covariates g0 reads.
inline double cached_center(const std::string& key, const RegressionFn& g0, const CovariateLaw& law, Index d_used) {
  static std::mutex mu;
  static std::map<std::string, double> cache;
  std::lock_guard<std::mutex> lock(mu);
  const auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const double c = mc_center(g0, law, d_used, kCenteringDraws, kCenteringSeed);
  cache.emplace(key, c);
  return c;
}

struct StudyMetadata {
  std::string example;
  CovariateLaw law;
  std::vector<RegressionFn> source_fns;  // noiseless regression functions
  std::vector<RegressionFn> target_fns;  // centered logits (classification) or means (regression)
  std::vector<double> centering;         // E g0 per target (0 for regression targets)
  std::vector<std::pair<double, double>> departure;  // (gamma_1, gamma_2) per source, Example 3 only
};

struct GeneratedStudy {
  std::vector<DomainDataset> sources;
  std::vector<DomainDataset> targets;
  std::vector<DomainDataset> tests;  // one independent test set per target
  StudyMetadata meta;
};

inline DomainDataset make_regression_domain(const RegressionFn& g, const CovariateLaw& law, Index n, Index d,
                                            int domain_id, Rng& rng, double noise_sd = kNoiseSd) {
  DomainDataset ds;
  ds.x = law.sample(n, d, rng);
  ds.y.resize(n, 1);
  std::normal_distribution<double> noise(0.0, noise_sd);
  for (Index i = 0; i < n; ++i)
    ds.y(i, 0) = g(std::span<const double>(ds.x.data() + i * d, static_cast<std::size_t>(d))) + noise(rng);
  ds.domain_id = domain_id;
  ds.task = TaskKind::regression;
  return ds;
}

inline double logistic(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

/// Binary labels with P(Y = 1 | x) = logistic(g(x)).
inline DomainDataset make_logistic_domain(const RegressionFn& g, const CovariateLaw& law, Index n, Index d,
                                          int domain_id, Rng& rng) {
  DomainDataset ds;
  ds.x = law.sample(n, d, rng);
  ds.y.resize(n, 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    const double p = logistic(g(std::span<const double>(ds.x.data() + i * d, static_cast<std::size_t>(d))));
    ds.y(i, 0) = unif(rng) < p ? 1.0 : 0.0;
  }
  ds.domain_id = domain_id;
  ds.task = TaskKind::classification;
  ds.num_classes = 2;
  return ds;
}

namespace detail {
enum StreamTag : std::uint64_t { kSource = 1, kTarget = 2, kTest = 3 };

inline void add_sources(GeneratedStudy& study, const std::vector<int>& ids, Index n_s, Index d, std::uint64_t seed,
                        double noise_sd = kNoiseSd) {
  for (std::size_t k = 0; k < ids.size(); ++k) {
    Rng rng = make_stream(seed, kSource, static_cast<std::uint64_t>(ids[k]));
    study.sources.push_back(
        make_regression_domain(study.meta.source_fns[k], study.meta.law, n_s, d, ids[k], rng, noise_sd));
  }
}

inline void add_logistic_target(GeneratedStudy& study, int t, Index n_0, Index n_test, Index d, std::uint64_t seed) {
  const RegressionFn& g = study.meta.target_fns[static_cast<std::size_t>(t)];
  Rng rng = make_stream(seed, kTarget, static_cast<std::uint64_t>(t));
  study.targets.push_back(make_logistic_domain(g, study.meta.law, n_0, d, 0, rng));
  Rng test_rng = make_stream(seed, kTest, static_cast<std::uint64_t>(t));
  study.tests.push_back(make_logistic_domain(g, study.meta.law, n_test, d, 0, test_rng));
}

inline RegressionFn centered(RegressionFn g0, double c) {
  return [g0 = std::move(g0), c](std::span<const double> x) { return g0(x) - c; };
}
}  // namespace detail

/// Target logit shared by Examples 1-3 before centering:
///   2 f1(x_a) + f2(x_{a+1}, x_{a+2}) + f3(x_{a+2}, x_{a+3}) + f4(x_{a+3}, x_{a+4})
/// with `a` the 0-based offset of the first covariate.
inline RegressionFn ex1_target_logit(std::size_t a) {
  return [a](std::span<const double> x) {
    return 2.0 * ex1::f1(x[a]) + ex1::f2(x[a + 1], x[a + 2]) + ex1::f3(x[a + 2], x[a + 3]) +
           ex1::f4(x[a + 3], x[a + 4]);
  };
}

/// Four regression sources and one logistic target on AR(0.2) Gaussian
/// covariates; x5 only matters for the target, x6 and x7 only for sources.
inline GeneratedStudy gen_example1(Index n_s, Index n_0, Index d, std::uint64_t seed,
                                   Index n_test = kDefaultTestSize) {
  require(d >= 7, "gen_example1: d must be at least 7, got " + std::to_string(d));
  using namespace ex1;
  GeneratedStudy study;
  study.meta.example = "1";
  study.meta.law = CovariateLaw::ar_gaussian(0.2);
  auto& f = study.meta.source_fns;
  f.push_back([](std::span<const double> x) { return 3 * f1(x[0]) + f2(x[1], x[2]) + f3(x[2], x[3]) + f5(x[5]); });
  f.push_back(
      [](std::span<const double> x) { return 3 * f1(x[0]) + f2(x[1], x[2]) + f3(x[2], x[3]) + 2 * f5(x[5]); });
  f.push_back(
      [](std::span<const double> x) { return 2 * f1(x[0]) + 1.5 * f2(x[1], x[2]) + f3(x[2], x[3]) + f6(x[6]); });
  f.push_back(
      [](std::span<const double> x) { return 2 * f1(x[0]) + 1.5 * f2(x[1], x[2]) + f3(x[2], x[3]) + 2 * f6(x[6]); });
  const RegressionFn g0 = ex1_target_logit(0);
  const double c = cached_center("ex1/ar0.2", g0, study.meta.law, 5);
  study.meta.centering = {c};
  study.meta.target_fns = {detail::centered(g0, c)};
  detail::add_sources(study, {1, 2, 3, 4}, n_s, d, seed);
  detail::add_logistic_target(study, 0, n_0, n_test, d, seed);
  return study;
}

/// Four sources and two independent logistic targets on disjoint covariates
/// (x1..x5 and x8..x12); covariates and source errors are standard Gaussian.
inline GeneratedStudy gen_example2(Index n_s, Index n_0, Index d, std::uint64_t seed,
                                   Index n_test = kDefaultTestSize) {
  require(d >= 13, "gen_example2: d must be at least 13, got " + std::to_string(d));
  using namespace ex1;
  GeneratedStudy study;
  study.meta.example = "2";
  study.meta.law = CovariateLaw::std_gaussian();
  auto& f = study.meta.source_fns;
  f.push_back(
      [](std::span<const double> x) { return f1(x[0]) + 2 * f2(x[8], x[9]) + 2 * f3(x[9], x[10]) + f5(x[5]); });
  f.push_back(
      [](std::span<const double> x) { return f1(x[0]) + 2 * f2(x[8], x[9]) + 2 * f3(x[9], x[10]) + 2 * f5(x[5]); });
  f.push_back(
      [](std::span<const double> x) { return f1(x[7]) + 2 * f2(x[1], x[2]) + 2 * f3(x[2], x[3]) + 2 * f5(x[12]); });
  f.push_back(
      [](std::span<const double> x) { return f1(x[7]) + 2 * f2(x[1], x[2]) + 2 * f3(x[2], x[3]) + 2 * f5(x[12]); });
  // Both logits have the same law under i.i.d. covariates, so one centering
  // constant serves both.
  const RegressionFn g01 = ex1_target_logit(0);
  const RegressionFn g02 = ex1_target_logit(7);
  const double c = cached_center("ex1-logit/std_gaussian", g01, study.meta.law, 5);
  study.meta.centering = {c, c};
  study.meta.target_fns = {detail::centered(g01, c), detail::centered(g02, c)};
  detail::add_sources(study, {1, 2, 3, 4}, n_s, d, seed, 1.0);  // standard Gaussian errors here
  detail::add_logistic_target(study, 0, n_0, n_test, d, seed);
  detail::add_logistic_target(study, 1, n_0, n_test, d, seed);
  return study;
}

enum class Departure { l1, cosine };

inline const char* to_string(Departure dep) { return dep == Departure::l1 ? "l1" : "cosine"; }

/// (gamma_1, gamma_2) of source s in Example 3. Sources 7 and 8 carry no
/// shared signal under either departure type.
inline std::pair<double, double> departure_coefficients(Departure dep, int s) {
  require(s >= 1 && s <= 8, "departure_coefficients: source index must be in 1..8");
  if (s >= 7) return {0.0, 0.0};
  if (dep == Departure::l1) return {1.0 + 0.5 * s, 1.0 + 0.5 * s};
  const double a = s * std::numbers::pi / 3.0;
  return {std::cos(a) - std::sin(a), std::cos(a) + std::sin(a)};
}

inline RegressionFn example3_source_fn(Departure dep, int s) {
  const auto [g1, g2] = departure_coefficients(dep, s);
  return [g1 = g1, g2 = g2](std::span<const double> x) {
    return 2.0 * g1 * ex1::f1(x[0]) + g2 * (ex1::f2(x[1], x[2]) + ex1::f3(x[2], x[3])) + 2.0 * ex1::f5(x[5]);
  };
}

/// Sources with controlled departure from the Example-1-style target.
/// `sources_used` picks from 1..8; each source's data depend only on (seed, s)
/// so different subsets share the same draws.
inline GeneratedStudy gen_example3(Departure dep, const std::vector<int>& sources_used, Index n_s, Index n_0, Index d,
                                   std::uint64_t seed, Index n_test = kDefaultTestSize) {
  require(d >= 6, "gen_example3: d must be at least 6, got " + std::to_string(d));
  require(!sources_used.empty(), "gen_example3: need at least one source");
  GeneratedStudy study;
  study.meta.example = "3";
  study.meta.law = CovariateLaw::std_gaussian();
  for (int s : sources_used) {
    study.meta.departure.push_back(departure_coefficients(dep, s));
    study.meta.source_fns.push_back(example3_source_fn(dep, s));
  }
  const RegressionFn g0 = ex1_target_logit(0);
  const double c = cached_center("ex1-logit/std_gaussian", g0, study.meta.law, 5);
  study.meta.centering = {c};
  study.meta.target_fns = {detail::centered(g0, c)};
  detail::add_sources(study, sources_used, n_s, d, seed);
  detail::add_logistic_target(study, 0, n_0, n_test, d, seed);
  return study;
}

/// Regression-to-regression study on uniform covariates.
inline GeneratedStudy gen_exampleS1(Index n_s, Index n_0, Index d, std::uint64_t seed,
                                    Index n_test = kDefaultTestSize) {
  require(d >= 6, "gen_exampleS1: d must be at least 6, got " + std::to_string(d));
  using namespace s1;
  GeneratedStudy study;
  study.meta.example = "s1";
  study.meta.law = CovariateLaw::uniform01();
  auto& f = study.meta.source_fns;
  f.push_back([](std::span<const double> x) { return 2 * f1(x[0]) + f2(x[1]) * f3(x[2]) + f4(x[3]); });
  f.push_back([](std::span<const double> x) { return 2 * f1(x[0]) + f2(x[1]) * f3(x[2]) + 2 * f4(x[3]); });
  f.push_back([](std::span<const double> x) { return 2 * f1(x[0]) + 1.5 * f2(x[1]) * f3(x[2]) + f5(x[4]); });
  f.push_back([](std::span<const double> x) { return 2 * f1(x[0]) + 1.5 * f2(x[1]) * f3(x[2]) + 2 * f5(x[4]); });
  const RegressionFn target = [](std::span<const double> x) {
    return 3 * f1(x[0]) + 1.5 * f2(x[1]) * f3(x[2]) + f6(x[5]);
  };
  study.meta.centering = {0.0};
  study.meta.target_fns = {target};
  detail::add_sources(study, {1, 2, 3, 4}, n_s, d, seed);
  Rng rng = make_stream(seed, detail::kTarget, 0);
  study.targets.push_back(make_regression_domain(target, study.meta.law, n_0, d, 0, rng));
  Rng test_rng = make_stream(seed, detail::kTest, 0);
  study.tests.push_back(make_regression_domain(target, study.meta.law, n_test, d, 0, test_rng));
  return study;
}

}  // namespace tesr::sim

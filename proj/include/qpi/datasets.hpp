#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "qpi/rng.hpp"
#include "qpi/tensor.hpp"

namespace qpi {

enum class ToyGenerator { two_spirals, gaussian_blobs, rings };

inline const char* toy_generator_name(ToyGenerator g) {
  switch (g) {
    case ToyGenerator::two_spirals: return "two-spirals";
    case ToyGenerator::gaussian_blobs: return "gaussian-blobs";
    case ToyGenerator::rings: return "rings";
  }
  throw std::invalid_argument("dataset: unknown generator");
}

inline ToyGenerator toy_generator_from_name(const std::string& s) {
  if (s == "two-spirals") return ToyGenerator::two_spirals;
  if (s == "gaussian-blobs") return ToyGenerator::gaussian_blobs;
  if (s == "rings") return ToyGenerator::rings;
  throw std::invalid_argument("dataset: unknown generator '" + s + "'");
}

struct ToyDataset {
  ToyGenerator generator = ToyGenerator::two_spirals;
  std::size_t n_train = 256;
  std::size_t n_test = 256;
  double noise = 0.0;
  u64 seed = 1;
};

struct LabeledSet {
  Tensor x;            // {n, 2}
  std::vector<int> y;  // {n}, labels in {0, 1}
};

// Two-spirals geometry: class c traces r = 2t, theta = 3*pi*t + c*pi for
// t in [0.25, 1]. The offset keeps the arms apart near the origin.
inline std::pair<double, double> spiral_point(int cls, double t) {
  double r = 2.0 * t;
  double theta = 3.0 * 3.141592653589793238462643383279502884 * t + (cls == 0 ? 0.0 : 3.141592653589793238462643383279502884);
  return {r * std::cos(theta), r * std::sin(theta)};
}

inline double spiral_param(std::size_t grid_index, std::size_t grid_size) {
  return 0.25 + 0.75 * (static_cast<double>(grid_index) + 0.5) / static_cast<double>(grid_size);
}

inline std::pair<double, double> ring_point(int cls, double phi) {
  double r = cls == 0 ? 1.0 : 2.0;
  return {r * std::cos(phi), r * std::sin(phi)};
}

namespace detail {

// Walk a parameter grid and hand slots alternately to train and test while
// both still have quota; the leftover tail goes to whichever set is short.
// With equal quotas this is strict even/odd interleaving, and train/test are
// disjoint by construction at any noise level.
inline std::vector<bool> interleave_grid(std::size_t n_train, std::size_t n_test) {
  std::vector<bool> to_train;
  to_train.reserve(n_train + n_test);
  std::size_t a = n_train, b = n_test;
  bool turn = true;
  while (a + b > 0) {
    bool pick_train = (turn && a > 0) || b == 0;
    to_train.push_back(pick_train);
    if (pick_train) --a; else --b;
    turn = !turn;
  }
  return to_train;
}

}  // namespace detail

// Deterministic two-class toy sets. Samples alternate class 0, 1, 0, 1, ...
// so every prefix is balanced; |#class0 - #class1| <= 1 overall.
inline std::pair<LabeledSet, LabeledSet> make_dataset(const ToyDataset& spec) {
  std::size_t train_c0 = (spec.n_train + 1) / 2, train_c1 = spec.n_train / 2;
  std::size_t test_c0 = (spec.n_test + 1) / 2, test_c1 = spec.n_test / 2;
  if (train_c1 < 2 || test_c1 < 2)
    throw std::invalid_argument("dataset: need at least 2 train and test points per class");
  if (spec.noise < 0.0) throw std::invalid_argument("dataset: negative noise level");

  LabeledSet train, test;
  train.x = Tensor({spec.n_train, 2});
  train.y.assign(spec.n_train, 0);
  test.x = Tensor({spec.n_test, 2});
  test.y.assign(spec.n_test, 0);

  Rng rng(spec.seed);
  std::size_t train_at = 0, test_at = 0;
  auto emit = [&](bool into_train, int cls, double px, double py) {
    LabeledSet& s = into_train ? train : test;
    std::size_t& at = into_train ? train_at : test_at;
    s.x.data[2 * at] = px;
    s.x.data[2 * at + 1] = py;
    s.y[at] = cls;
    ++at;
  };

  if (spec.generator == ToyGenerator::gaussian_blobs) {
    // Centers (-1.5,-1.5) and (+1.5,+1.5); noise is the isotropic sigma.
    // Train is drawn before test from one stream, so the sets are distinct
    // draws rather than grid-split.
    auto blob = [&](bool into_train, int cls) {
      double cx = cls == 0 ? -1.5 : 1.5;
      emit(into_train, cls, cx + spec.noise * rng.normal(), cx + spec.noise * rng.normal());
    };
    for (std::size_t i = 0; i < spec.n_train; ++i) blob(true, static_cast<int>(i % 2));
    for (std::size_t i = 0; i < spec.n_test; ++i) blob(false, static_cast<int>(i % 2));
    return {std::move(train), std::move(test)};
  }

  // Grid generators: one parameter grid per class, interleaved between train
  // and test.
  for (int cls = 0; cls < 2; ++cls) {
    std::size_t want_train = cls == 0 ? train_c0 : train_c1;
    std::size_t want_test = cls == 0 ? test_c0 : test_c1;
    std::size_t grid = want_train + want_test;
    std::vector<bool> to_train = detail::interleave_grid(want_train, want_test);
    for (std::size_t g = 0; g < grid; ++g) {
      double px, py;
      if (spec.generator == ToyGenerator::two_spirals) {
        auto [sx, sy] = spiral_point(cls, spiral_param(g, grid));
        px = sx;
        py = sy;
      } else {
        double phi = 2.0 * 3.141592653589793238462643383279502884 *
                     (static_cast<double>(g) + 0.5) / static_cast<double>(grid);
        auto [sx, sy] = ring_point(cls, phi);
        px = sx;
        py = sy;
      }
      px += spec.noise * rng.normal();
      py += spec.noise * rng.normal();
      emit(to_train[g], cls, px, py);
    }
  }

  // The per-class grids were emitted class 0 fully, then class 1; reorder to
  // the alternating layout. Stable round-robin merge by class.
  auto alternate = [](LabeledSet& s) {
    std::vector<std::size_t> order;
    order.reserve(s.y.size());
    std::vector<std::size_t> byc[2];
    for (std::size_t i = 0; i < s.y.size(); ++i) byc[s.y[i]].push_back(i);
    std::size_t i0 = 0, i1 = 0;
    while (i0 < byc[0].size() || i1 < byc[1].size()) {
      if (i0 < byc[0].size()) order.push_back(byc[0][i0++]);
      if (i1 < byc[1].size()) order.push_back(byc[1][i1++]);
    }
    LabeledSet re;
    re.x = Tensor({s.y.size(), 2});
    re.y.assign(s.y.size(), 0);
    for (std::size_t k = 0; k < order.size(); ++k) {
      re.x.data[2 * k] = s.x.data[2 * order[k]];
      re.x.data[2 * k + 1] = s.x.data[2 * order[k] + 1];
      re.y[k] = s.y[order[k]];
    }
    s = std::move(re);
  };
  alternate(train);
  alternate(test);
  return {std::move(train), std::move(test)};
}

}  // namespace qpi

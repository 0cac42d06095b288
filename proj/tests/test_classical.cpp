#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "tfem/classical.hpp"

using namespace tfem;

TEST(Lloyd, OneDimensionalFixedPoint) {
  Mat x = Mat::from_rows({{-10, -9, 9, 10}});
  LloydTrace tr = lloyd(x, Mat::from_rows({{-9.5, 9.5}}), 5);
  EXPECT_EQ(tr.assignments[1], (Labels{0, 0, 1, 1}));
  EXPECT_DOUBLE_EQ(tr.centroids[1](0, 0), -9.5);
  EXPECT_DOUBLE_EQ(tr.centroids[1](0, 1), 9.5);
  EXPECT_TRUE(tr.converged);
  EXPECT_EQ(tr.iterations_run, 1);
  EXPECT_EQ(tr.assignments.size(), static_cast<std::size_t>(tr.iterations_run + 1));
}

TEST(Lloyd, NoiselessTrueMeans) {
  GmmInstance inst = generate_instance(3, 4, 20, 3.0, 0.0, 0.2, 2);
  LloydTrace tr = lloyd(inst.x, inst.means, 3);
  EXPECT_EQ(misclass(inst.z, tr.assignments.back()), 0.0);
}

TEST(Lloyd, CentroidsAreMeans) {
  GmmInstance inst = generate_instance(3, 3, 30, 2.0, 1.0, 0.2, 5);
  LloydTrace tr = lloyd(inst.x, kmeanspp(inst.x, 3, 1), 10);
  for (std::size_t t = 1; t < tr.centroids.size(); ++t) {
    const Labels& z = tr.assignments[t - 1];
    for (int l = 0; l < 3; ++l) {
      Vec s(3, 0.0);
      int n = 0;
      for (std::size_t j = 0; j < inst.n(); ++j)
        if (z[j] == l) {
          ++n;
          for (int r = 0; r < 3; ++r) s[r] += inst.x(r, j);
        }
      if (n == 0) continue;
      for (int r = 0; r < 3; ++r) EXPECT_NEAR(tr.centroids[t](r, l), s[r] / n, 1e-10);
    }
  }
}

TEST(Lloyd, WellSeparatedRecoversLabels) {
  int perfect = 0;
  for (int s = 0; s < 100; ++s) {
    GmmInstance inst = generate_instance(4, 5, 50, 10.0, 1.0, 0.25, 1000 + s);
    SpectralInit init = spectral_init(inst.x, 4, s);
    LloydTrace tr = lloyd(inst.x, init.centroids, 20);
    perfect += misclass(inst.z, tr.assignments.back()) == 0.0;
  }
  EXPECT_GE(perfect, 99);
}

TEST(Lloyd, ObjectiveNonIncreasingAndReachesFixedPoint) {
  for (int s = 0; s < 100; ++s) {
    GmmInstance inst = generate_instance(3, 4, 25, 1.5, 1.0, 0.2, s);
    LloydTrace tr = lloyd(inst.x, kmeanspp(inst.x, 3, s), 100);
    for (std::size_t t = 1; t < tr.assignments.size(); ++t)
      EXPECT_LE(kmeans_objective(inst.x, tr.centroids[t], tr.assignments[t]),
                kmeans_objective(inst.x, tr.centroids[t - 1], tr.assignments[t - 1]) + 1e-9);
    EXPECT_TRUE(tr.converged);
  }
}

TEST(Lloyd, EmptyClusterIsReseeded) {
  Mat x = Mat::from_rows({{0, 0.1, 0.2, 10}});
  LloydTrace tr = lloyd(x, Mat::from_rows({{0.1, 100, 200}}), 3);
  std::set<int> used(tr.assignments.back().begin(), tr.assignments.back().end());
  EXPECT_GE(used.size(), 2u);
  EXPECT_TRUE(tr.centroids.back().all_finite());
}

TEST(KmeansPP, KEqualsNIsPermutation) {
  Mat x = Mat::from_rows({{1, 2, 3, 4}, {0, 0, 1, 1}});
  Mat c = kmeanspp(x, 4, 3);
  std::vector<std::pair<double, double>> a, b;
  for (int j = 0; j < 4; ++j) {
    a.push_back({x(0, j), x(1, j)});
    b.push_back({c(0, j), c(1, j)});
  }
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(KmeansPP, OneCenterIsADataColumn) {
  Mat x = Mat::from_rows({{1, 2, 3}, {4, 5, 6}});
  Mat c = kmeanspp(x, 1, 9);
  bool found = false;
  for (int j = 0; j < 3; ++j) found = found || (c(0, 0) == x(0, j) && c(1, 0) == x(1, j));
  EXPECT_TRUE(found);
}

TEST(KmeansPP, PointMassesGetOneCenterEach) {
  GmmInstance inst = generate_instance(3, 2, 15, 4.0, 0.0, 0.2, 6);
  for (std::uint64_t s = 0; s < 20; ++s) {
    Mat c = kmeanspp(inst.x, 3, s);
    std::set<std::pair<double, double>> centers;
    for (int j = 0; j < 3; ++j) centers.insert({c(0, j), c(1, j)});
    EXPECT_EQ(centers.size(), 3u);
  }
  EXPECT_THROW(kmeanspp(inst.x, 100, 1), Error);
}

TEST(SpectralInit, OrthogonalClustersPreserveDistances) {
  // Cluster means along orthogonal axes, data inside their span: projection is an isometry on the data.
  Mat x(3, 6);
  const double pts[6][2] = {{5, 0}, {5.1, 0}, {0, 5}, {0, 5.2}, {4.9, 0.1}, {0.1, 4.8}};
  for (int j = 0; j < 6; ++j) {
    x(0, j) = pts[j][0];
    x(1, j) = pts[j][1];
  }
  SpectralInit init = spectral_init(x, 2, 1);
  EXPECT_EQ(init.labels[0], init.labels[1]);
  EXPECT_EQ(init.labels[2], init.labels[3]);
  EXPECT_NE(init.labels[0], init.labels[2]);
}

TEST(SpectralInit, RankDeficientIsDegenerate) {
  Mat x = Mat::from_rows({{1, 2, 3, 4}, {0, 0, 0, 0}, {0, 0, 0, 0}});
  try {
    spectral_init(x, 2, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::degenerate);
  }
}

TEST(SpectralInit, KEqualsDMatchesUnprojectedLloyd) {
  GmmInstance inst = generate_instance(3, 3, 20, 4.0, 1.0, 0.2, 31);
  SpectralInit init = spectral_init(inst.x, 3, 2);
  LloydTrace tr = lloyd(inst.x, init.centroids, 50);
  EXPECT_EQ(misclass(init.labels, tr.assignments.back()), 0.0);
}

TEST(SpectralInit, WellSeparatedInitIsAccurate) {
  int good = 0;
  for (int s = 0; s < 100; ++s) {
    GmmInstance inst = generate_instance(4, 5, 50, 10.0, 1.0, 0.25, 500 + s);
    good += misclass(inst.z, spectral_init(inst.x, 4, s).labels) <= 0.10;
  }
  EXPECT_GE(good, 95);
}

TEST(Deflation, Diagonal) {
  Deflation df = topk_deflation(Mat::from_rows({{4, 0, 0}, {0, 2, 0}, {0, 0, 1}}), 2, 60, 3);
  EXPECT_GE(std::abs(df.vectors[0][0]), 1.0 - 1e-9);
  EXPECT_GE(std::abs(df.vectors[1][1]), 1.0 - 1e-9);
  EXPECT_FALSE(df.conditioning_warning);
}

TEST(Deflation, NoGapWarns) {
  Deflation df = topk_deflation(Mat::identity(3), 1, 10, 1);
  EXPECT_TRUE(df.conditioning_warning);
}

TEST(Deflation, EigenvaluesMatchJacobi) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    Mat x = gapped_spd_factor(8, 3, s);
    Mat a = matmul(x, transpose(x));
    Eigh e = jacobi_eigh(a);
    Deflation df = topk_deflation(a, 3, 300, s);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(df.values[i], e.values[i], 1e-6);
  }
}

TEST(GappedSpd, SpectrumHasRequestedGaps) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Mat x = gapped_spd_factor(8, 3, s);
    Eigh e = jacobi_eigh(matmul(x, transpose(x)));
    for (int i = 0; i < 3; ++i) EXPECT_GE(e.values[i] - e.values[i + 1], 1.0 - 1e-9);
    EXPECT_LE(e.values[3], 1.0);
  }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bss/separators.hpp"
#include "bss/source_model.hpp"
#include "test_util.hpp"

using namespace bss;
using test::make_rng;

namespace {

struct MnmfFixture {
  SourceModel model;
  SpatialCovariances cov;
  std::vector<CMat> slabs;
  std::vector<Mat> lambda;
  XhatCache cache;
};

SourceModel random_model(std::mt19937_64& rng, int sources, int freq_bins,
                         int bases, int frames) {
  SourceModel m;
  m.sources = sources;
  m.freq_bins = freq_bins;
  m.bases = bases;
  m.frames = frames;
  for (int n = 0; n < sources; ++n) {
    m.W.push_back(test::random_matrix(rng, freq_bins, bases, 0.2, 1.5));
    m.H.push_back(test::random_matrix(rng, bases, frames, 0.2, 1.5));
  }
  return m;
}

MnmfFixture random_mnmf_fixture(std::uint64_t seed, int sources = 2,
                                int freq_bins = 4, int bases = 2,
                                int frames = 5, int channels = 2) {
  auto rng = make_rng(seed);
  MnmfFixture f;
  f.model = random_model(rng, sources, freq_bins, bases, frames);
  f.cov.sources = sources;
  f.cov.freq_bins = freq_bins;
  f.cov.channels = channels;
  f.cov.G.assign(sources, std::vector<CMat>(freq_bins));
  for (int n = 0; n < sources; ++n) {
    for (int i = 0; i < freq_bins; ++i) {
      f.cov.G[n][i] = test::random_hpd(rng, channels, 0.3);
    }
  }
  for (int i = 0; i < freq_bins; ++i) {
    f.slabs.push_back(test::random_complex(rng, channels, frames));
  }
  f.lambda = power_spectrogram(f.model);
  f.cache.refresh(f.slabs, f.lambda, f.cov);
  return f;
}

// Fully independent trace tables built with plain loops and Eigen's LU
// inverse (the cache uses an eigendecomposition).
void naive_taus(const MnmfFixture& f, int n, Mat& tau1, Mat& tau2) {
  const int freq_bins = static_cast<int>(f.slabs.size());
  const int frames = static_cast<int>(f.slabs.front().cols());
  const int channels = static_cast<int>(f.slabs.front().rows());
  tau1.resize(freq_bins, frames);
  tau2.resize(freq_bins, frames);
  for (int i = 0; i < freq_bins; ++i) {
    for (int j = 0; j < frames; ++j) {
      CMat xhat = CMat::Zero(channels, channels);
      for (int nn = 0; nn < f.cov.sources; ++nn) {
        xhat += f.lambda[nn](i, j) * f.cov.G[nn][i];
      }
      const CMat inv = xhat.inverse();
      const CVec x = f.slabs[i].col(j);
      const CMat xmat = x * x.adjoint();
      tau1(i, j) = std::real((inv * xmat * inv * f.cov.G[n][i]).trace());
      tau2(i, j) = std::real((inv * f.cov.G[n][i]).trace());
    }
  }
}

// M = 1 fixture whose mixture power equals the model power exactly, making
// every MU ratio one.
MnmfFixture consistent_scalar_fixture(std::uint64_t seed, int sources = 2) {
  auto rng = make_rng(seed);
  MnmfFixture f;
  const int freq_bins = 4, bases = 2, frames = 5;
  f.model = random_model(rng, sources, freq_bins, bases, frames);
  f.cov.sources = sources;
  f.cov.freq_bins = freq_bins;
  f.cov.channels = 1;
  f.cov.G.assign(sources,
                 std::vector<CMat>(freq_bins, CMat::Identity(1, 1)));
  f.lambda = power_spectrogram(f.model);
  for (int i = 0; i < freq_bins; ++i) {
    CMat slab(1, frames);
    for (int j = 0; j < frames; ++j) {
      double total = 0.0;
      for (int n = 0; n < sources; ++n) total += f.lambda[n](i, j);
      slab(0, j) = std::sqrt(total);
    }
    f.slabs.push_back(slab);
  }
  f.cache.refresh(f.slabs, f.lambda, f.cov);
  return f;
}

double naive_mnmf_objective(const MnmfFixture& f, double gamma, double eta) {
  const int freq_bins = static_cast<int>(f.slabs.size());
  const int frames = static_cast<int>(f.slabs.front().cols());
  const int channels = static_cast<int>(f.slabs.front().rows());
  double obj = 0.0;
  for (int i = 0; i < freq_bins; ++i) {
    for (int j = 0; j < frames; ++j) {
      CMat xhat = CMat::Zero(channels, channels);
      for (int n = 0; n < f.cov.sources; ++n) {
        xhat += f.lambda[n](i, j) * f.cov.G[n][i];
      }
      const CVec x = f.slabs[i].col(j);
      obj -= std::real(x.dot(xhat.inverse() * x));
      obj -= std::log(std::abs(xhat.determinant()));
    }
  }
  for (const Mat& w : f.model.W) obj -= gamma * minvol_penalty(w, eta);
  return obj;
}

}  // namespace

TEST_CASE("power_spectrogram basics and oracle") {
  SourceModel m;
  m.sources = 1;
  m.freq_bins = 3;
  m.bases = 3;
  m.frames = 2;
  m.W = {Mat::Ones(3, 3)};
  m.H = {Mat::Ones(3, 2)};
  CHECK((power_spectrogram(m)[0].array() == 3.0).all());

  m.H = {Mat::Zero(3, 2)};
  CHECK((power_spectrogram(m)[0].array() == kEpsFloor).all());

  auto rng = make_rng(1);
  const Mat w = test::random_matrix(rng, 6, 3);
  const Mat h = test::random_matrix(rng, 3, 4);
  const Mat lam = power_spectrogram_one(w, h);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 4; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += w(i, k) * h(k, j);
      CHECK(lam(i, j) == doctest::Approx(s).epsilon(1e-12));
    }
  }
}

TEST_CASE("minvol_penalty closed forms and eta monotonicity") {
  Mat ortho = Mat::Zero(5, 3);
  ortho(0, 0) = ortho(1, 1) = ortho(2, 2) = 1.0;
  CHECK(minvol_penalty(ortho, 0.0) == doctest::Approx(0.0));

  const Mat zero = Mat::Zero(7, 10);
  CHECK(minvol_penalty(zero, 0.5) ==
        doctest::Approx(10.0 * std::log(0.5)).epsilon(1e-12));

  auto rng = make_rng(2);
  const Mat w = test::random_matrix(rng, 8, 4);
  Mat gram = w.transpose() * w + 0.3 * Mat::Identity(4, 4);
  Eigen::SelfAdjointEigenSolver<Mat> es(gram);
  CHECK(minvol_penalty(w, 0.3) ==
        doctest::Approx(es.eigenvalues().array().log().sum()).epsilon(1e-10));

  CHECK(minvol_penalty(w, 0.1) <= minvol_penalty(w, 0.2));
  CHECK(minvol_penalty(w, 0.2) <= minvol_penalty(w, 0.7));
}

TEST_CASE("compute_V closed forms and multiply-back") {
  const Mat zero = Mat::Zero(6, 3);
  CHECK((compute_V(zero, 0.5) - 2.0 * Mat::Identity(3, 3)).norm() < 1e-12);

  Mat ortho = Mat::Zero(5, 2);
  ortho(0, 0) = ortho(1, 1) = 1.0;
  CHECK((compute_V(ortho, 1.0) - 0.5 * Mat::Identity(2, 2)).norm() < 1e-12);

  auto rng = make_rng(3);
  const Mat w = test::random_matrix(rng, 9, 4);
  const Mat v = compute_V(w, 0.4);
  const Mat gram = w.transpose() * w + 0.4 * Mat::Identity(4, 4);
  CHECK((v * gram - Mat::Identity(4, 4)).norm() < 1e-10);
}

TEST_CASE("split_pos_neg is an exact nonnegative split") {
  Mat vp, vm;
  split_pos_neg(Mat::Identity(3, 3), vp, vm);
  CHECK((vp - Mat::Identity(3, 3)).norm() == 0.0);
  CHECK(vm.norm() == 0.0);

  split_pos_neg(-Mat::Identity(3, 3), vp, vm);
  CHECK(vp.norm() == 0.0);
  CHECK((vm - Mat::Identity(3, 3)).norm() == 0.0);

  auto rng = make_rng(4);
  const Mat v = test::random_matrix(rng, 4, 4, -1.0, 1.0);
  split_pos_neg(v, vp, vm);
  CHECK((vp - vm - v).norm() == 0.0);
  CHECK(vp.minCoeff() >= 0.0);
  CHECK(vm.minCoeff() >= 0.0);
}

TEST_CASE("omega_diagonal closed forms and oracle") {
  const Vec w = Vec::Constant(3, 0.7);
  CHECK((omega_diagonal(w, Mat::Identity(3, 3), Mat::Zero(3, 3)) -
         Vec::Constant(3, 2.0))
            .norm() < 1e-12);

  // Unit row sums with a uniform vector: every entry 2.
  Mat s(2, 2);
  s << 0.3, 0.7, 0.6, 0.4;
  CHECK((omega_diagonal(Vec::Constant(2, 1.3), s, Mat::Zero(2, 2)) -
         Vec::Constant(2, 2.0))
            .norm() < 1e-12);

  auto rng = make_rng(5);
  const Mat v = test::random_matrix(rng, 4, 4, -1.0, 1.0);
  Mat vp, vm;
  split_pos_neg(v, vp, vm);
  const Vec wr = test::random_matrix(rng, 4, 1, 0.1, 2.0).col(0);
  const Vec omega = omega_diagonal(wr, vp, vm);
  for (int k = 0; k < 4; ++k) {
    double acc = 0.0;
    for (int l = 0; l < 4; ++l) acc += (vp(k, l) + vm(k, l)) * wr(l);
    CHECK(omega(k) == doctest::Approx(2.0 * acc / wr(k)).epsilon(1e-12));
  }
}

TEST_CASE("mnmf H update: fixed point when model matches data") {
  MnmfFixture f = consistent_scalar_fixture(10);
  const Mat h_before = f.model.H[0];
  update_H_mnmf(f.model, f.cache, 0);
  CHECK((f.model.H[0] - h_before).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("mnmf H update reduces to scalar IS-NMF for M=1 single source") {
  auto rng = make_rng(11);
  MnmfFixture f;
  const int freq_bins = 5, bases = 2, frames = 6;
  f.model = random_model(rng, 1, freq_bins, bases, frames);
  f.cov.sources = 1;
  f.cov.freq_bins = freq_bins;
  f.cov.channels = 1;
  f.cov.G.assign(1, std::vector<CMat>(freq_bins, CMat::Identity(1, 1)));
  for (int i = 0; i < freq_bins; ++i) {
    f.slabs.push_back(test::random_complex(rng, 1, frames));
  }
  f.lambda = power_spectrogram(f.model);
  f.cache.refresh(f.slabs, f.lambda, f.cov);

  SourceModel expected = f.model;
  const Mat& w = f.model.W[0];
  const Mat& lam = f.lambda[0];
  for (int k = 0; k < bases; ++k) {
    for (int j = 0; j < frames; ++j) {
      double num = 0.0, den = 0.0;
      for (int i = 0; i < freq_bins; ++i) {
        const double p = std::norm(f.slabs[i](0, j));
        num += w(i, k) * p / (lam(i, j) * lam(i, j));
        den += w(i, k) / lam(i, j);
      }
      expected.H[0](k, j) *= std::sqrt(num / den);
    }
  }
  update_H_mnmf(f.model, f.cache, 0);
  CHECK((f.model.H[0] - expected.H[0]).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("mnmf H and W updates match the naive-loop oracle") {
  MnmfFixture f = random_mnmf_fixture(12);
  Mat tau1, tau2;

  SUBCASE("H update, both sources") {
    for (int n = 0; n < 2; ++n) {
      naive_taus(f, n, tau1, tau2);
      Mat expected = f.model.H[n];
      for (int k = 0; k < f.model.bases; ++k) {
        for (int j = 0; j < f.model.frames; ++j) {
          double num = 0.0, den = 0.0;
          for (int i = 0; i < f.model.freq_bins; ++i) {
            num += f.model.W[n](i, k) * tau1(i, j);
            den += f.model.W[n](i, k) * tau2(i, j);
          }
          expected(k, j) *= std::sqrt(num / den);
        }
      }
      update_H_mnmf(f.model, f.cache, n);
      CHECK((f.model.H[n] - expected).cwiseAbs().maxCoeff() <
            1e-10 * expected.maxCoeff());
    }
  }

  SUBCASE("scalar helper equals the batch entries") {
    const double h01 = update_h_m_mnmf_scalar(f.model, f.cache, 0, 0, 1);
    const double h12 = update_h_m_mnmf_scalar(f.model, f.cache, 1, 1, 2);
    update_H_mnmf(f.model, f.cache, 0);
    update_H_mnmf(f.model, f.cache, 1);
    CHECK(f.model.H[0](0, 1) == doctest::Approx(h01).epsilon(1e-12));
    CHECK(f.model.H[1](1, 2) == doctest::Approx(h12).epsilon(1e-12));
  }

  SUBCASE("W update") {
    naive_taus(f, 1, tau1, tau2);
    Mat expected = f.model.W[1];
    for (int i = 0; i < f.model.freq_bins; ++i) {
      for (int k = 0; k < f.model.bases; ++k) {
        double num = 0.0, den = 0.0;
        for (int j = 0; j < f.model.frames; ++j) {
          num += f.model.H[1](k, j) * tau1(i, j);
          den += f.model.H[1](k, j) * tau2(i, j);
        }
        expected(i, k) *= std::sqrt(num / den);
      }
    }
    update_W_baseline_mnmf(f.model, f.cache, 1);
    CHECK((f.model.W[1] - expected).cwiseAbs().maxCoeff() <
          1e-10 * expected.maxCoeff());
  }
}

TEST_CASE("m-MNMF W update: gamma 0 fixed point and baseline equality") {
  MnmfFixture f = consistent_scalar_fixture(13);
  SourceModel via_m = f.model;
  update_W_m_mnmf(via_m, f.cache, 0.0, 0.5, 0);
  CHECK((via_m.W[0] - f.model.W[0]).cwiseAbs().maxCoeff() < 1e-8);

  MnmfFixture g = random_mnmf_fixture(14);
  SourceModel a = g.model, b = g.model;
  update_W_m_mnmf(a, g.cache, 0.0, 0.5, 0);
  update_W_baseline_mnmf(b, g.cache, 0);
  CHECK((a.W[0] - b.W[0]).cwiseAbs().maxCoeff() == 0.0);  // same arithmetic
}

TEST_CASE("m-MNMF sweeps do not decrease the bound objective") {
  for (std::uint64_t seed : {21, 22, 23}) {
    MnmfFixture f = random_mnmf_fixture(seed, 2, 5, 2, 6, 2);
    const double gamma = 0.5, eta = 0.5;
    double obj = naive_mnmf_objective(f, gamma, eta);

    for (int n = 0; n < 2; ++n) update_H_mnmf(f.model, f.cache, n);
    f.lambda = power_spectrogram(f.model);
    f.cache.refresh(f.slabs, f.lambda, f.cov);
    double after_h = naive_mnmf_objective(f, gamma, eta);
    CHECK(after_h >= obj - 1e-6 * std::abs(obj));

    for (int n = 0; n < 2; ++n) {
      update_W_m_mnmf(f.model, f.cache, gamma, eta, n);
    }
    f.lambda = power_spectrogram(f.model);
    f.cache.refresh(f.slabs, f.lambda, f.cov);
    double after_w = naive_mnmf_objective(f, gamma, eta);
    CHECK(after_w >= after_h - 1e-6 * std::abs(after_h));
  }
}

TEST_CASE("ilrma H/W updates: fixed point when model matches demixed power") {
  auto rng = make_rng(30);
  SourceModel m = random_model(rng, 1, 5, 3, 6);
  const Mat p = power_spectrogram_one(m.W[0], m.H[0]);

  SourceModel h_test = m;
  update_H_baseline_ilrma(h_test, p, 0);
  CHECK((h_test.H[0] - m.H[0]).cwiseAbs().maxCoeff() < 1e-10);

  SourceModel hm_test = m;
  update_H_m_ilrma(hm_test, p, 0);
  CHECK((hm_test.H[0] - m.H[0]).cwiseAbs().maxCoeff() < 1e-10);

  SourceModel w_test = m;
  update_W_baseline_ilrma(w_test, p, 0);
  CHECK((w_test.W[0] - m.W[0]).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("m-ILRMA H update equals the baseline rule (independent paths)") {
  auto rng = make_rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    SourceModel m = random_model(rng, 1, 6, 3, 7);
    const Mat p = test::random_matrix(rng, 6, 7, 0.05, 2.0);
    SourceModel a = m, b = m;
    update_H_m_ilrma(a, p, 0);
    update_H_baseline_ilrma(b, p, 0);
    CHECK((a.H[0] - b.H[0]).cwiseAbs().maxCoeff() <
          1e-12 * b.H[0].maxCoeff());
  }
}

TEST_CASE("ilrma W/H naive-loop oracles") {
  auto rng = make_rng(32);
  SourceModel m = random_model(rng, 1, 5, 2, 6);
  const Mat p = test::random_matrix(rng, 5, 6, 0.05, 2.0);
  const Mat lam = power_spectrogram_one(m.W[0], m.H[0]);

  Mat expected_w = m.W[0];
  for (int i = 0; i < 5; ++i) {
    for (int k = 0; k < 2; ++k) {
      double num = 0.0, den = 0.0;
      for (int j = 0; j < 6; ++j) {
        num += p(i, j) * m.H[0](k, j) / (lam(i, j) * lam(i, j));
        den += m.H[0](k, j) / lam(i, j);
      }
      expected_w(i, k) *= std::sqrt(num / den);
    }
  }
  SourceModel w_test = m;
  update_W_baseline_ilrma(w_test, p, 0);
  CHECK((w_test.W[0] - expected_w).cwiseAbs().maxCoeff() < 1e-10);

  Mat expected_h = m.H[0];
  for (int k = 0; k < 2; ++k) {
    for (int j = 0; j < 6; ++j) {
      double num = 0.0, den = 0.0;
      for (int i = 0; i < 5; ++i) {
        num += p(i, j) * m.W[0](i, k) / (lam(i, j) * lam(i, j));
        den += m.W[0](i, k) / lam(i, j);
      }
      expected_h(k, j) *= std::sqrt(num / den);
    }
  }
  SourceModel h_test = m;
  update_H_baseline_ilrma(h_test, p, 0);
  CHECK((h_test.H[0] - expected_h).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("ilrma K=1 closed-form W update") {
  auto rng = make_rng(33);
  SourceModel m = random_model(rng, 1, 4, 1, 5);
  const Mat p = test::random_matrix(rng, 4, 5, 0.05, 2.0);
  const Mat lam = power_spectrogram_one(m.W[0], m.H[0]);
  Mat expected = m.W[0];
  for (int i = 0; i < 4; ++i) {
    double num = 0.0, den = 0.0;
    for (int j = 0; j < 5; ++j) {
      num += p(i, j) * m.H[0](0, j) / (lam(i, j) * lam(i, j));
      den += m.H[0](0, j) / lam(i, j);
    }
    expected(i, 0) *= std::sqrt(num / den);
  }
  update_W_baseline_ilrma(m, p, 0);
  CHECK((m.W[0] - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("m-ILRMA W update: gamma 0 equals baseline bitwise") {
  auto rng = make_rng(34);
  SourceModel m = random_model(rng, 1, 6, 3, 7);
  const Mat p = test::random_matrix(rng, 6, 7, 0.05, 2.0);
  SourceModel a = m, b = m;
  update_W_m_ilrma(a, p, 0.0, 0.5, 0);
  update_W_baseline_ilrma(b, p, 0);
  CHECK((a.W[0] - b.W[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("m-ILRMA W update: scalar case matches the symbolic cubic") {
  auto rng = make_rng(35);
  for (int rep = 0; rep < 20; ++rep) {
    SourceModel m = random_model(rng, 1, 1, 1, 4);
    const Mat p = test::random_matrix(rng, 1, 4, 0.05, 2.0);
    const double gamma = 0.8, eta = 0.5;
    const double w_hat = m.W[0](0, 0);

    // Hand-built coefficients for I = K = 1.
    double lam_num = 0.0, lam_den = 0.0;
    for (int j = 0; j < 4; ++j) {
      const double lam = std::max(w_hat * m.H[0](0, j), kEpsFloor);
      lam_num += p(0, j) * m.H[0](0, j) / (lam * lam);
      lam_den += m.H[0](0, j) / lam;
    }
    const double v = 1.0 / (w_hat * w_hat + eta);
    const double a = 2.0 * gamma * v;  // omega = 2 v
    const double b = lam_den + 2.0 * gamma * v * w_hat - a * w_hat;
    const double d = -w_hat * w_hat * lam_num;

    double best = 0.0;
    for (const cplx& root : test::durand_kerner_cubic(a, b, 0.0, d)) {
      if (std::abs(root.imag()) < 1e-8 && root.real() > best) {
        best = root.real();
      }
    }
    update_W_m_ilrma(m, p, gamma, eta, 0);
    CHECK(m.W[0](0, 0) == doctest::Approx(best).epsilon(1e-8));
  }
}

TEST_CASE("m-ILRMA W sweep does not decrease its objective") {
  auto rng = make_rng(36);
  for (int rep = 0; rep < 3; ++rep) {
    SourceModel m = random_model(rng, 1, 8, 3, 9);
    const Mat p = test::random_matrix(rng, 8, 9, 0.05, 2.0);
    const double gamma = 0.7, eta = 0.5;
    auto objective = [&](const SourceModel& model) {
      const Mat lam = power_spectrogram_one(model.W[0], model.H[0]);
      double obj = -((p.array() / lam.array()) + lam.array().log()).sum();
      return obj - gamma * minvol_penalty(model.W[0], eta);
    };
    const double before = objective(m);
    update_W_m_ilrma(m, p, gamma, eta, 0);
    const double after = objective(m);
    CHECK(after >= before - 1e-6 * std::abs(before));
  }
}

TEST_CASE("gamma_step basics") {
  CHECK(gamma_step(0.3, 5.0, 5.0) == doctest::Approx(0.3));
  CHECK(gamma_step(0.3, 5.0, 1e-14) == doctest::Approx(0.3));  // held
  CHECK(gamma_step(0.5, -3.0, 1.0) == doctest::Approx(1e-6));  // clamp low
  CHECK(gamma_step(500.0, 10.0, 1.0) == doctest::Approx(1e3));  // clamp high
}

TEST_CASE("update_gamma matches a naive evaluation") {
  MnmfFixture f = random_mnmf_fixture(40);
  const double eta = 0.5;

  double numerator = 0.0;
  const int channels = 2;
  for (int i = 0; i < f.model.freq_bins; ++i) {
    for (int j = 0; j < f.model.frames; ++j) {
      CMat xhat = CMat::Zero(channels, channels);
      for (int n = 0; n < 2; ++n) xhat += f.lambda[n](i, j) * f.cov.G[n][i];
      const CVec x = f.slabs[i].col(j);
      numerator += std::real(x.dot(xhat.inverse() * x)) +
                   std::log(std::abs(xhat.determinant()));
    }
  }
  double denominator = 0.0;
  for (const Mat& w : f.model.W) denominator += minvol_penalty(w, eta);

  const double expected =
      std::clamp(0.37 * numerator / denominator, 1e-6, 1e3);
  CHECK(update_gamma(0.37, f.cache, f.model.W, eta) ==
        doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("snpa selects one-hot columns in the separable case") {
  Mat x = Mat::Zero(4, 6);
  x(0, 1) = 3.0;                    // one-hot columns
  x(1, 3) = 2.0;
  x(2, 5) = 5.0;
  x.col(0) = 0.5 * x.col(1) + 0.5 * x.col(3);  // interior points
  x.col(2) = 0.2 * x.col(1) + 0.7 * x.col(5);
  x.col(4) = 0.9 * x.col(3);
  const Mat w = snpa_initialize(x, 3);
  // Each selected column is one of the one-hot columns (any order).
  for (int k = 0; k < 3; ++k) {
    int nonzeros = 0;
    for (int i = 0; i < 4; ++i) {
      if (w(i, k) > 1e-12) ++nonzeros;
    }
    CHECK(nonzeros == 1);
  }
  Vec totals = w.rowwise().sum();
  CHECK(totals(0) == doctest::Approx(3.0));
  CHECK(totals(1) == doctest::Approx(2.0));
  CHECK(totals(2) == doctest::Approx(5.0));
}

TEST_CASE("snpa never selects duplicate columns twice") {
  Mat x(3, 4);
  x.col(0) << 1.0, 0.0, 0.0;
  x.col(1) << 1.0, 0.0, 0.0;  // duplicate of column 0
  x.col(2) << 0.0, 2.0, 0.0;
  x.col(3) << 0.0, 0.0, 1.5;
  const Mat w = snpa_initialize(x, 3);
  // All three distinct directions present.
  CHECK(w.col(0).maxCoeff() > 0.0);
  Mat gram = w.transpose() * w;
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      CHECK(std::abs(gram(a, b)) < 1e-10);  // distinct one-hots stay orthogonal
    }
  }
}

TEST_CASE("snpa recovers the support of a separable factorization") {
  auto rng = make_rng(41);
  const int freq_bins = 12, bases = 3, frames = 20;
  Mat w_true = test::random_matrix(rng, freq_bins, bases, 0.1, 1.0);
  Mat h(bases, frames);
  // First `bases` columns are scaled unit vectors: X contains W's columns.
  h.setZero();
  for (int k = 0; k < bases; ++k) h(k, k) = 1.0;
  for (int j = bases; j < frames; ++j) {
    Vec theta = test::random_matrix(rng, bases, 1, 0.0, 1.0).col(0);
    theta /= theta.sum() + 0.5;  // interior of the simplex
    h.col(j) = theta;
  }
  const Mat x = w_true * h;
  const Mat w = snpa_initialize(x, bases);
  // Selected columns match the true basis up to permutation.
  for (int k = 0; k < bases; ++k) {
    double best = 1e9;
    for (int k2 = 0; k2 < bases; ++k2) {
      best = std::min(best, (w.col(k) - w_true.col(k2)).norm());
    }
    CHECK(best < 1e-8);
  }
}

TEST_CASE("snpa error paths") {
  CHECK_THROWS_AS((void)snpa_initialize(Mat::Zero(3, 5), 2),
                  RankDeficientData);
  Mat rank1(3, 5);
  for (int j = 0; j < 5; ++j) rank1.col(j) = Vec::Constant(3, 1.0 + j);
  CHECK_THROWS_AS((void)snpa_initialize(rank1, 3), RankDeficientData);
  CHECK_THROWS_AS((void)snpa_initialize(Mat::Ones(2, 2), 3),
                  DimensionMismatch);
}

TEST_CASE("updates keep iterates strictly positive") {
  MnmfFixture f = random_mnmf_fixture(50);
  for (int n = 0; n < 2; ++n) {
    update_H_mnmf(f.model, f.cache, n);
    update_W_m_mnmf(f.model, f.cache, 0.8, 0.5, n);
    CHECK(f.model.H[n].minCoeff() >= kEpsFloor);
    CHECK(f.model.W[n].minCoeff() >= kEpsFloor);
  }
}

TEST_CASE("scale compensation leaves the power spectrogram unchanged") {
  auto rng = make_rng(51);
  SourceModel m = random_model(rng, 1, 5, 3, 6);
  const Mat before = power_spectrogram_one(m.W[0], m.H[0]);
  const double c = 2.0;  // power of two: exact in floating point
  const Mat after = power_spectrogram_one(c * m.W[0], m.H[0] / c);
  CHECK((before - after).cwiseAbs().maxCoeff() == 0.0);
}

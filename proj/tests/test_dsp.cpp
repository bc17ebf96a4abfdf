/* Copyright 2026 The PatchKWS Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "kws/common.hpp"
#include "kws/dsp.hpp"
#include "oracles.hpp"

using namespace kws;

TEST_CASE("stft frame count and trivial inputs") {
  Waveform w;
  w.samples.assign(16000, 0.0f);
  const auto power = stft_power(w);
  CHECK(power.rows() == 257);
  CHECK(power.cols() == 98);  // floor((16000-480)/160)+1
  CHECK(power.maxCoeff() == 0.0);

  w.samples.assign(400, 0.0f);
  CHECK_THROWS_AS(stft_power(w), DataError);
}

TEST_CASE("pure 1 kHz sine concentrates at bin 32 and matches the DFT oracle") {
  const Waveform w = fixtures::sine(1000.0, 1.0);
  const auto power = stft_power(w);
  const auto ref = oracle::stft_power_full(w);
  REQUIRE(static_cast<std::size_t>(power.cols()) == ref.size());

  // Energy concentration: bin index round(1000*512/16000) = 32.
  for (int t = 0; t < power.cols(); t += 13) {
    Eigen::Index argmax = 0;
    power.col(t).maxCoeff(&argmax);
    CHECK(argmax == 32);
  }

  // Max deviation below 1e-4 of the frame energy.
  for (Eigen::Index t = 0; t < power.cols(); ++t) {
    double frame_energy = 0;
    for (int k = 0; k < 257; ++k)
      frame_energy += ref[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
    double worst = 0;
    for (int k = 0; k < 257; ++k)
      worst = std::max(worst,
                       std::abs(power(k, t) -
                                ref[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]));
    CHECK(worst < 1e-4 * frame_energy);
  }
}

TEST_CASE("white noise stft matches the DFT oracle") {
  Rng rng(3);
  Waveform w = fixtures::noise_clip(0.2, 0.5f, rng);
  const auto power = stft_power(w);
  const auto ref = oracle::stft_power_full(w);
  for (Eigen::Index t = 0; t < power.cols(); ++t) {
    double frame_energy = 0, worst = 0;
    for (int k = 0; k < 257; ++k) {
      frame_energy += ref[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)];
      worst = std::max(worst,
                       std::abs(power(k, t) -
                                ref[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]));
    }
    CHECK(worst < 1e-4 * frame_energy);
  }
}

TEST_CASE("parseval-style sanity: half-spectrum power bounded by N * frame energy") {
  Rng rng(11);
  const Waveform w = fixtures::noise_clip(0.1, 0.8f, rng);
  const auto power = stft_power(w);
  const auto win = hann_window(480);
  for (Eigen::Index t = 0; t < power.cols(); ++t) {
    double windowed_energy = 0;
    for (int i = 0; i < 480; ++i) {
      const double v = w.samples[static_cast<std::size_t>(t * 160 + i)] *
                       win[static_cast<std::size_t>(i)];
      windowed_energy += v * v;
    }
    const double total = power.col(t).sum();
    CHECK(std::isfinite(total));
    CHECK(total <= 512.0 * windowed_energy + 1e-9);
  }
}

TEST_CASE("mel scale and filterbank construction") {
  CHECK(mel_from_hz(700.0) == doctest::Approx(781.17).epsilon(1e-4));
  CHECK(hz_from_mel(mel_from_hz(1234.5)) == doctest::Approx(1234.5));

  const auto fb = mel_filterbank();
  CHECK(fb.rows() == 40);
  CHECK(fb.cols() == 257);
  CHECK(fb.minCoeff() >= 0.0);
  for (int m = 0; m < 40; ++m) CHECK(fb.row(m).sum() > 0.0);

  // Row support is contiguous.
  for (int m = 0; m < 40; ++m) {
    int first = -1, last = -1;
    for (int k = 0; k < 257; ++k)
      if (fb(m, k) > 0) {
        if (first < 0) first = k;
        last = k;
      }
    for (int k = first; k <= last; ++k) CHECK(fb(m, k) > 0.0);
  }

  // Center frequencies are monotone increasing: peak bin per row ascends.
  Eigen::Index prev = -1;
  for (int m = 0; m < 40; ++m) {
    Eigen::Index arg = 0;
    fb.row(m).maxCoeff(&arg);
    CHECK(arg >= prev);
    prev = arg;
  }

  // Too many filters for the FFT resolution gives an empty filter.
  FrontendParams tight;
  tight.n_mels = 300;
  CHECK_THROWS_AS(mel_filterbank(tight), ConfigError);
  FrontendParams bad_band;
  bad_band.fmin = 9000.0;
  CHECK_THROWS_AS(mel_filterbank(bad_band), ConfigError);
}

TEST_CASE("dct-II matrix is orthonormal") {
  const auto d = dct2_matrix(40);
  const Eigen::MatrixXd eye = d * d.transpose();
  CHECK((eye - Eigen::MatrixXd::Identity(40, 40)).cwiseAbs().maxCoeff() < 1e-6);

  // Against the direct-summation oracle on a random vector.
  Rng rng(5);
  std::vector<double> x(40);
  for (auto& v : x) v = rng.normal();
  const auto ref = oracle::dct2(x);
  Eigen::VectorXd xv = Eigen::Map<Eigen::VectorXd>(x.data(), 40);
  const Eigen::VectorXd y = d * xv;
  for (int i = 0; i < 40; ++i)
    CHECK(y(i) == doctest::Approx(ref[static_cast<std::size_t>(i)]).epsilon(1e-10));
}

TEST_CASE("mfcc shape, determinism, and full-pipeline oracle") {
  const Waveform sine = fixtures::sine(1000.0, 1.0);
  const FeatureMap a = mfcc(sine);
  CHECK(a.shape() == Shape{1, 1, 40, 98});

  const FeatureMap b = mfcc(sine);
  for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);

  Rng rng(17);
  for (const Waveform& w : {sine, fixtures::noise_clip(1.0, 0.5f, rng)}) {
    const FeatureMap fm = mfcc(w);
    const auto ref = oracle::mfcc(w);
    REQUIRE(static_cast<std::size_t>(fm.dim(3)) == ref.size());
    double worst = 0;
    for (std::int64_t t = 0; t < fm.dim(3); ++t)
      for (int k = 0; k < 40; ++k)
        worst = std::max(worst,
                         std::abs(static_cast<double>(fm.at4(0, 0, k, t)) -
                                  ref[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)]));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("white noise puts the bulk of cepstral energy into coefficient 0") {
  Rng rng(23);
  const Waveform w = fixtures::noise_clip(1.0, 0.5f, rng);
  const FeatureMap fm = mfcc(w);
  double c0 = 0, rest = 0;
  for (std::int64_t t = 0; t < fm.dim(3); ++t) {
    c0 += static_cast<double>(fm.at4(0, 0, 0, t)) * fm.at4(0, 0, 0, t);
    for (int k = 1; k < 40; ++k)
      rest += static_cast<double>(fm.at4(0, 0, k, t)) * fm.at4(0, 0, k, t);
  }
  CHECK(c0 > rest);
}

TEST_CASE("hop-aligned time shift moves mfcc columns by one frame exactly") {
  const Waveform w = fixtures::sine(600.0, 0.5);
  Waveform shifted;
  shifted.samples.assign(w.samples.size(), 0.0f);
  for (std::size_t i = 160; i < w.samples.size(); ++i)
    shifted.samples[i] = w.samples[i - 160];

  const FeatureMap a = mfcc(w);
  const FeatureMap b = mfcc(shifted);
  REQUIRE(a.dim(3) == b.dim(3));
  for (std::int64_t t = 1; t < b.dim(3); ++t)
    for (int k = 0; k < 40; ++k)
      CHECK(b.at4(0, 0, k, t) == a.at4(0, 0, k, t - 1));
}

TEST_CASE("mean spectrogram") {
  SUBCASE("single map is the identity") {
    FeatureMap m(Shape{1, 1, 3, 4});
    for (std::int64_t i = 0; i < m.numel(); ++i) m[i] = static_cast<float>(i);
    const auto mean = mean_spectrogram({m});
    for (std::int64_t h = 0; h < 3; ++h)
      for (std::int64_t w = 0; w < 4; ++w)
        CHECK(mean(h, w) == m.at4(0, 0, h, w));
  }

  SUBCASE("two maps average elementwise") {
    FeatureMap a(Shape{1, 1, 2, 2}), b(Shape{1, 1, 2, 2});
    for (std::int64_t i = 0; i < 4; ++i) {
      a[i] = static_cast<float>(i);
      b[i] = static_cast<float>(10 - i);
    }
    const auto mean = mean_spectrogram({a, b});
    for (std::int64_t h = 0; h < 2; ++h)
      for (std::int64_t w = 0; w < 2; ++w)
        CHECK(mean(h, w) == doctest::Approx((a.at4(0, 0, h, w) + b.at4(0, 0, h, w)) / 2));
  }

  SUBCASE("ten random maps equal the naive accumulation oracle exactly") {
    Rng rng(31);
    std::vector<FeatureMap> maps;
    for (int i = 0; i < 10; ++i) {
      FeatureMap m(Shape{1, 1, 5, 7});
      for (std::int64_t j = 0; j < m.numel(); ++j)
        m[j] = static_cast<float>(rng.normal());
      maps.push_back(std::move(m));
    }
    const auto mean = mean_spectrogram(maps);
    for (std::int64_t h = 0; h < 5; ++h)
      for (std::int64_t w = 0; w < 7; ++w) {
        double acc = 0;
        for (const auto& m : maps) acc += static_cast<double>(m.at4(0, 0, h, w));
        CHECK(mean(h, w) == static_cast<float>(acc / 10.0));
      }
  }

  SUBCASE("shorter maps are right-padded with their own minimum") {
    FeatureMap a(Shape{1, 1, 2, 3}), b(Shape{1, 1, 2, 1});
    for (std::int64_t i = 0; i < 6; ++i) a[i] = 1.0f;
    b[0] = 4.0f;
    b[1] = 2.0f;  // min of b
    const auto mean = mean_spectrogram({a, b});
    CHECK(mean.cols() == 3);
    CHECK(mean(0, 0) == doctest::Approx((1.0 + 4.0) / 2));
    CHECK(mean(0, 1) == doctest::Approx((1.0 + 2.0) / 2));  // padded with min
    CHECK(mean(1, 2) == doctest::Approx((1.0 + 2.0) / 2));
  }

  SUBCASE("empty list fails") {
    CHECK_THROWS_AS(mean_spectrogram({}), DataError);
  }
}

TEST_CASE("feature cache round-trips and validates parameters") {
  const std::string dir = fixtures::fresh_dir("featcache");
  const FeatureMap fm = mfcc(fixtures::sine(500.0, 0.2));
  FrontendParams p;
  write_feature_cache(dir + "/ex0", fm, p);
  const FeatureMap back = read_feature_cache(dir + "/ex0", p);
  REQUIRE(back.shape() == fm.shape());
  for (std::int64_t i = 0; i < fm.numel(); ++i) CHECK(back[i] == fm[i]);

  FrontendParams other;
  other.n_mels = 20;
  CHECK_THROWS_AS(read_feature_cache(dir + "/ex0", other), DataError);
}

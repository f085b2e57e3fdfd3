#include <cmath>
#include <random>

#include "avgzsl/losses.hpp"
#include "doctest.h"

using namespace avgzsl;
using losses::LossConfig;
using losses::LossReport;
using losses::Tuple;
using losses::TuplePair;
using model::ArchitectureSpec;
using model::ModelParams;
using tensor::Vec;

namespace {

ArchitectureSpec small_arch() {
  ArchitectureSpec arch;
  arch.dim_audio_in = 10;
  arch.dim_video_in = 9;
  arch.dim_text_in = 7;
  arch.embed_dim = 5;
  arch.hidden_audio = 8;
  arch.hidden_video = 6;
  arch.hidden_decoder = 6;
  return arch;
}

Vec random_vec(std::size_t n, std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> normal(0.0, sigma);
  Vec v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

TuplePair random_pair(const ArchitectureSpec& arch, std::mt19937_64& rng) {
  TuplePair pair;
  pair.p.class_id = 0;
  pair.p.audio = random_vec(arch.dim_audio_in, rng);
  pair.p.video = random_vec(arch.dim_video_in, rng);
  pair.p.text = random_vec(arch.dim_text_in, rng);
  pair.q.class_id = 1;
  pair.q.audio = random_vec(arch.dim_audio_in, rng);
  pair.q.video = random_vec(arch.dim_video_in, rng);
  pair.q.text = random_vec(arch.dim_text_in, rng);
  return pair;
}

double oracle_mse(const Vec& u, const Vec& v) {
  double acc = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) acc += (u[i] - v[i]) * (u[i] - v[i]);
  return acc / static_cast<double>(u.size());
}

}  // namespace

TEST_CASE("mse_distance examples and properties") {
  CHECK(losses::mse_distance({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(losses::mse_distance({0, 0}, {2, 0}) == 2.0);
  CHECK_THROWS_AS(losses::mse_distance({1, 2}, {1, 2, 3}), tensor::DimensionError);

  std::mt19937_64 rng(3);
  for (int iter = 0; iter < 1000; ++iter) {
    const Vec u = random_vec(6, rng), v = random_vec(6, rng);
    CHECK(losses::mse_distance(u, v) == losses::mse_distance(v, u));
    CHECK(losses::mse_distance(u, u) == 0.0);
    CHECK(losses::mse_distance(u, v) >= 0.0);
    CHECK(losses::mse_distance(u, v) == doctest::Approx(oracle_mse(u, v)).epsilon(1e-14));
  }
}

TEST_CASE("triplet_hinge examples") {
  CHECK(losses::triplet_hinge(0.2, 1.5, 1.0) == 0.0);
  CHECK(losses::triplet_hinge(0.7, 0.7, 1.0) == 1.0);
  CHECK(losses::triplet_hinge(0.9, 0.4, 1.0) == 1.5);
}

TEST_CASE("triplet_hinge clamp boundary and monotonicity") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> uni(0.0, 3.0);
  for (int iter = 0; iter < 1000; ++iter) {
    const double d_pos = uni(rng), d_neg = uni(rng), margin = uni(rng);
    const double h = losses::triplet_hinge(d_pos, d_neg, margin);
    CHECK(h >= 0.0);
    // zero exactly when the negative is at least margin further than the positive
    CHECK((h == 0.0) == (d_neg >= d_pos + margin));
    // nondecreasing in d_pos, nonincreasing in d_neg
    CHECK(losses::triplet_hinge(d_pos + 0.5, d_neg, margin) >= h);
    CHECK(losses::triplet_hinge(d_pos, d_neg + 0.5, margin) <= h);
  }
}

TEST_CASE("loss_rec with zero parameters") {
  const ArchitectureSpec arch = small_arch();
  const ModelParams params = model::make_params(arch);
  std::mt19937_64 rng(8);
  TuplePair pair = random_pair(arch, rng);

  SUBCASE("zero text features give zero reconstruction loss") {
    pair.p.text = Vec(arch.dim_text_in, 0.0);
    CHECK(losses::loss_rec(pair, params) == 0.0);
  }
  SUBCASE("equals 3x the squared-mean of the text features") {
    double m = 0.0;
    for (const double v : pair.p.text) m += v * v;
    m /= static_cast<double>(pair.p.text.size());
    CHECK(losses::loss_rec(pair, params) == doctest::Approx(3.0 * m).epsilon(1e-14));
  }
}

TEST_CASE("collapsed decoder pays the full margin in cross-text terms") {
  const ArchitectureSpec arch = small_arch();
  const ModelParams params = model::make_params(arch);  // all zero: decoder constant
  std::mt19937_64 rng(12);
  const TuplePair pair = random_pair(arch, rng);
  CHECK(losses::loss_cta(pair, params, 1.0) == 1.0);
  CHECK(losses::loss_ctv(pair, params, 1.0) == 1.0);
}

TEST_CASE("identical p and q embeddings pay the margin in every triplet term") {
  const ArchitectureSpec arch = small_arch();
  const ModelParams params = model::init_params(arch, 2);
  std::mt19937_64 rng(2);
  TuplePair pair = random_pair(arch, rng);
  pair.q.audio = pair.p.audio;
  pair.q.video = pair.p.video;
  pair.q.text = pair.p.text;
  const double margin = 0.75;
  CHECK(losses::loss_ta(pair, params, margin) == margin);
  CHECK(losses::loss_at(pair, params, margin) == margin);
  CHECK(losses::loss_tv(pair, params, margin) == margin);
  CHECK(losses::loss_vt(pair, params, margin) == margin);

  LossConfig config;
  config.margin = margin;
  CHECK(losses::loss_ct(pair, params, config) == doctest::Approx(4 * margin).epsilon(1e-14));
}

TEST_CASE("triplet terms vanish when the negative is far") {
  // identity-sized nets so embeddings equal inputs
  ArchitectureSpec arch;
  arch.dim_audio_in = arch.dim_video_in = arch.dim_text_in = 2;
  arch.embed_dim = 2;
  arch.hidden_audio = arch.hidden_video = arch.hidden_decoder = 2;
  ModelParams params = model::make_params(arch);
  params.f_a1.weight = tensor::DenseMatrix::identity(2);
  params.f_a2.weight = tensor::DenseMatrix::identity(2);
  params.f_t.weight = tensor::DenseMatrix::identity(2);

  TuplePair pair;
  pair.p.class_id = 0;
  pair.q.class_id = 1;
  pair.p.audio = pair.p.text = {0.5, 0.5};  // a_p = t_p
  pair.p.video = {0.5, 0.5};
  pair.q.audio = {5.0, 5.0};  // far negative: d(a_q, t_p) > margin
  pair.q.video = {5.0, 5.0};
  pair.q.text = {5.0, 5.0};
  CHECK(losses::loss_ta(pair, params, 1.0) == 0.0);
}

TEST_CASE("per-term losses equal independent oracle compositions") {
  const ArchitectureSpec arch = small_arch();
  std::mt19937_64 rng(77);
  for (int iter = 0; iter < 50; ++iter) {
    const ModelParams params = model::init_params(arch, 500 + iter);
    const TuplePair pair = random_pair(arch, rng);
    const double margin = 0.6;

    const Vec a_p = model::embed_audio(params, pair.p.audio);
    const Vec a_q = model::embed_audio(params, pair.q.audio);
    const Vec v_p = model::embed_video(params, pair.p.video);
    const Vec v_q = model::embed_video(params, pair.q.video);
    const Vec t_p = model::embed_text(params, pair.p.text);
    const Vec t_q = model::embed_text(params, pair.q.text);
    const Vec dec_t = model::decode(params, t_p);
    const Vec dec_a = model::decode(params, a_p);
    const Vec dec_aq = model::decode(params, a_q);
    const Vec dec_v = model::decode(params, v_p);
    const Vec dec_vq = model::decode(params, v_q);

    CHECK(losses::loss_rec(pair, params) ==
          doctest::Approx(oracle_mse(dec_t, pair.p.text) + oracle_mse(dec_a, pair.p.text) +
                          oracle_mse(dec_v, pair.p.text))
              .epsilon(1e-14));
    CHECK(losses::loss_cta(pair, params, margin) ==
          losses::triplet_hinge(losses::mse_distance(dec_t, dec_a),
                                losses::mse_distance(dec_t, dec_aq), margin));
    CHECK(losses::loss_ctv(pair, params, margin) ==
          losses::triplet_hinge(losses::mse_distance(dec_t, dec_v),
                                losses::mse_distance(dec_t, dec_vq), margin));
    CHECK(losses::loss_ta(pair, params, margin) ==
          losses::triplet_hinge(losses::mse_distance(a_p, t_p), losses::mse_distance(a_q, t_p),
                                margin));
    CHECK(losses::loss_at(pair, params, margin) ==
          losses::triplet_hinge(losses::mse_distance(t_p, a_p), losses::mse_distance(t_q, a_p),
                                margin));
    CHECK(losses::loss_tv(pair, params, margin) ==
          losses::triplet_hinge(losses::mse_distance(v_p, t_p), losses::mse_distance(v_q, t_p),
                                margin));
    CHECK(losses::loss_vt(pair, params, margin) ==
          losses::triplet_hinge(losses::mse_distance(t_p, v_p), losses::mse_distance(t_q, v_p),
                                margin));
  }
}

TEST_CASE("swapping p and q turns L_TA into the swapped pair's term") {
  const ArchitectureSpec arch = small_arch();
  std::mt19937_64 rng(13);
  for (int iter = 0; iter < 100; ++iter) {
    const ModelParams params = model::init_params(arch, 900 + iter);
    const TuplePair pair = random_pair(arch, rng);
    TuplePair swapped;
    swapped.p = pair.q;
    swapped.q = pair.p;
    // direct recomputation with the roles exchanged
    const Vec a_p = model::embed_audio(params, swapped.p.audio);
    const Vec a_q = model::embed_audio(params, swapped.q.audio);
    const Vec t_p = model::embed_text(params, swapped.p.text);
    CHECK(losses::loss_ta(swapped, params, 1.0) ==
          losses::triplet_hinge(losses::mse_distance(a_p, t_p), losses::mse_distance(a_q, t_p),
                                1.0));
  }
}

TEST_CASE("cmd and ct sum their enabled constituents") {
  const ArchitectureSpec arch = small_arch();
  const ModelParams params = model::init_params(arch, 88);
  std::mt19937_64 rng(88);
  const TuplePair pair = random_pair(arch, rng);
  LossConfig all;
  all.margin = 0.5;

  SUBCASE("all toggles off gives zero") {
    LossConfig off = all;
    off.use_rec = off.use_cta = off.use_ctv = false;
    off.use_ta = off.use_at = off.use_tv = off.use_vt = false;
    CHECK(losses::loss_cmd(pair, params, off) == 0.0);
    CHECK(losses::loss_ct(pair, params, off) == 0.0);
  }
  SUBCASE("only use_rec equals loss_rec") {
    LossConfig only_rec = all;
    only_rec.use_cta = only_rec.use_ctv = false;
    CHECK(losses::loss_cmd(pair, params, only_rec) == losses::loss_rec(pair, params));
  }
  SUBCASE("all-on sums the oracle terms") {
    CHECK(losses::loss_cmd(pair, params, all) ==
          doctest::Approx(losses::loss_rec(pair, params) +
                          losses::loss_cta(pair, params, all.margin) +
                          losses::loss_ctv(pair, params, all.margin))
              .epsilon(1e-14));
    CHECK(losses::loss_ct(pair, params, all) ==
          doctest::Approx(losses::loss_tv(pair, params, all.margin) +
                          losses::loss_vt(pair, params, all.margin) +
                          losses::loss_ta(pair, params, all.margin) +
                          losses::loss_at(pair, params, all.margin))
              .epsilon(1e-14));
  }
}

TEST_CASE("total_loss examples and errors") {
  const ArchitectureSpec arch = small_arch();
  const ModelParams params = model::init_params(arch, 10);
  std::mt19937_64 rng(10);
  const LossConfig config;

  SUBCASE("single pair equals cmd + ct") {
    const TuplePair pair = random_pair(arch, rng);
    const auto [value, report] = losses::total_loss(std::span(&pair, 1), params, config);
    CHECK(value == doctest::Approx(losses::loss_cmd(pair, params, config) +
                                   losses::loss_ct(pair, params, config))
                       .epsilon(1e-14));
    CHECK(report.total == value);
  }
  SUBCASE("batch of identical pairs equals the single-pair value") {
    const TuplePair pair = random_pair(arch, rng);
    const std::vector<TuplePair> batch(5, pair);
    const double single = losses::total_loss(std::span(&pair, 1), params, config).first;
    CHECK(losses::total_loss(batch, params, config).first ==
          doctest::Approx(single).epsilon(1e-14));
  }
  SUBCASE("empty batch is rejected") {
    const std::vector<TuplePair> empty;
    CHECK_THROWS_AS(losses::total_loss(empty, params, config), losses::BatchError);
  }
  SUBCASE("pair with equal class ids is rejected") {
    TuplePair pair = random_pair(arch, rng);
    pair.q.class_id = pair.p.class_id;
    CHECK_THROWS_AS(losses::total_loss(std::span(&pair, 1), params, config),
                    losses::BatchError);
  }
}

TEST_CASE("total_loss equals the independent per-pair loop") {
  const ArchitectureSpec arch = small_arch();
  std::mt19937_64 rng(20);
  const LossConfig config;
  for (int iter = 0; iter < 20; ++iter) {
    const ModelParams params = model::init_params(arch, 700 + iter);
    std::vector<TuplePair> batch;
    for (int i = 0; i < 6; ++i) batch.push_back(random_pair(arch, rng));
    double oracle = 0.0;
    for (const TuplePair& pair : batch) {
      oracle += losses::loss_cmd(pair, params, config) + losses::loss_ct(pair, params, config);
    }
    oracle /= static_cast<double>(batch.size());
    CHECK(std::abs(losses::total_loss(batch, params, config).first - oracle) < 1e-12);
  }
}

TEST_CASE("LossReport sum identities hold exactly on 1000 random cases") {
  const ArchitectureSpec arch = small_arch();
  std::mt19937_64 rng(99);
  const ModelParams params = model::init_params(arch, 99);
  const LossConfig config;
  for (int iter = 0; iter < 1000; ++iter) {
    std::vector<TuplePair> batch;
    for (int i = 0; i < 2; ++i) batch.push_back(random_pair(arch, rng));
    const auto [value, r] = losses::total_loss(batch, params, config);
    CHECK(r.l_cmd == r.l_rec + r.l_cta + r.l_ctv);
    CHECK(r.l_ct == ((r.l_tv + r.l_vt) + r.l_ta) + r.l_at);
    CHECK(r.total == r.l_cmd + r.l_ct);
    CHECK(r.total == value);
    CHECK(r.l_rec >= 0.0);
    CHECK(r.l_cta >= 0.0);
    CHECK(r.l_ctv >= 0.0);
    CHECK(r.l_ta >= 0.0);
    CHECK(r.l_at >= 0.0);
    CHECK(r.l_tv >= 0.0);
    CHECK(r.l_vt >= 0.0);
  }
}

TEST_CASE("taped total_loss is bit-identical to the pure path") {
  const ArchitectureSpec arch = small_arch();
  std::mt19937_64 rng(21);
  const LossConfig config;
  for (int iter = 0; iter < 20; ++iter) {
    const ModelParams params = model::init_params(arch, 300 + iter);
    std::vector<TuplePair> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(random_pair(arch, rng));

    const auto [pure_value, pure_report] = losses::total_loss(batch, params, config);
    tensor::Tape tape;
    model::TapedModel taped(tape, params);
    LossReport taped_report;
    const tensor::VarId total = losses::total_loss_taped(taped, batch, config, &taped_report);
    CHECK(tape.scalar_value(total) == pure_value);
    CHECK(taped_report.total == pure_report.total);
    CHECK(taped_report.l_rec == pure_report.l_rec);
    CHECK(taped_report.l_ct == pure_report.l_ct);
  }
}

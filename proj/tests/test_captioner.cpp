#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "topiccap/captioner.hpp"
#include "topiccap/decode.hpp"
#include "topiccap/errors.hpp"
#include "topiccap/gradcheck.hpp"

using namespace topiccap;
using nn::ParameterSet;
using nn::Tape;
using nn::Var;

namespace {

captioner::ModelConfig tiny_config(captioner::AttentionKind att, bool use_sae,
                                   std::uint64_t seed = 3) {
  captioner::ModelConfig cfg;
  cfg.vocab_size = 12;
  cfg.feature_dim = 5;
  cfg.embed_dim = 6;
  cfg.hidden_dim = 8;
  cfg.n_topics = 4;
  cfg.soft_att_dim = 5;
  cfg.attention = att;
  cfg.use_sae = use_sae;
  cfg.sae_frozen = false;
  cfg.sae_hidden_dim = 7;
  cfg.init_seed = seed;
  return cfg;
}

Tensor random_features(int r, int d, Rng& rng) {
  Tensor t({r, d});
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

Tensor uniform_qt(int c) { return Tensor::full({c}, 1.0 / c); }

// Per-position CE recomputed from raw logit values.
double manual_ce(const Tensor& logits, int target) {
  double mx = logits[0];
  for (int k = 1; k < logits.rows(); ++k) mx = std::max(mx, logits[k]);
  double z = 0.0;
  for (int k = 0; k < logits.rows(); ++k) z += std::exp(logits[k] - mx);
  return mx + std::log(z) - logits[target];
}

}  // namespace

TEST_CASE("zero-initialized step gives uniform logits") {
  auto cfg = tiny_config(captioner::AttentionKind::kClta, false);
  cfg.vocab_size = 7;
  captioner::CaptionerModel model(cfg);
  for (auto& p : model.params) p.value.fill(0.0);
  Rng rng(5);
  Tape t;
  auto state = captioner::initial_state(t, model);
  Var v = t.constant(random_features(3, 5, rng));
  auto out = captioner::step(t, model, state, corpus::kBosId, v);
  const Tensor& logits = t.val(out.logits);
  for (int k = 1; k < 7; ++k) CHECK(logits[k] == doctest::Approx(logits[0]).epsilon(1e-12));
}

TEST_CASE("attention weights depend on the decoder state") {
  auto cfg = tiny_config(captioner::AttentionKind::kClta, false);
  captioner::CaptionerModel model(cfg);
  Rng rng(7);
  Tape t;
  Var v = t.constant(random_features(4, 5, rng));
  auto state = captioner::initial_state(t, model);
  auto s1 = captioner::step(t, model, state, corpus::kBosId, v);
  auto s2 = captioner::step(t, model, state, corpus::kBosId, v);
  double diff = 0.0;
  for (int i = 0; i < 4; ++i) {
    diff = std::max(diff, std::abs(t.val(s1.att.alpha)[i] - t.val(s2.att.alpha)[i]));
  }
  CHECK(diff > 1e-9);
}

TEST_CASE("step rejects invalid token ids") {
  auto cfg = tiny_config(captioner::AttentionKind::kClta, false);
  captioner::CaptionerModel model(cfg);
  Rng rng(9);
  Tape t;
  Var v = t.constant(random_features(3, 5, rng));
  auto state = captioner::initial_state(t, model);
  CHECK_THROWS_AS(captioner::step(t, model, state, 99, v), ShapeError);
}

TEST_CASE("caption loss with uniform logits is ln K") {
  auto cfg = tiny_config(captioner::AttentionKind::kClta, false);
  cfg.vocab_size = 7;
  captioner::CaptionerModel model(cfg);
  for (auto& p : model.params) p.value.fill(0.0);
  Rng rng(11);
  Tape t;
  auto un = captioner::caption_loss(t, model, random_features(3, 5, rng), {4, 5, 6});
  CHECK(t.val(un.loss).item() == doctest::Approx(std::log(7.0)).epsilon(1e-9));
}

TEST_CASE("doubling a caption only adds loss at the new positions") {
  auto cfg = tiny_config(captioner::AttentionKind::kClta, false);
  captioner::CaptionerModel model(cfg);
  Rng rng(13);
  Tensor v = random_features(3, 5, rng);
  const std::vector<int> once = {4, 5};
  const std::vector<int> twice = {4, 5, 4, 5};

  Tape t;
  auto u1 = captioner::caption_loss(t, model, v, once);
  auto u2 = captioner::caption_loss(t, model, v, twice);

  // Teacher-forced prefixes agree, so the first |once| logit vectors match.
  for (std::size_t s = 0; s < once.size(); ++s) {
    const Tensor& a = t.val(u1.logits[s]);
    const Tensor& b = t.val(u2.logits[s]);
    for (int k = 0; k < cfg.vocab_size; ++k) CHECK(std::abs(a[k] - b[k]) < 1e-12);
  }

  // Mean loss reassembles from per-position CE values.
  std::vector<int> targets2 = twice;
  targets2.push_back(corpus::kEosId);
  double manual = 0.0;
  for (std::size_t s = 0; s < targets2.size(); ++s) {
    manual += manual_ce(t.val(u2.logits[s]), targets2[s]);
  }
  manual /= static_cast<double>(targets2.size());
  CHECK(std::abs(t.val(u2.loss).item() - manual) < 1e-12);
}

TEST_CASE("caption loss rejects an empty caption") {
  auto cfg = tiny_config(captioner::AttentionKind::kClta, false);
  captioner::CaptionerModel model(cfg);
  Rng rng(15);
  Tape t;
  CHECK_THROWS_AS(captioner::caption_loss(t, model, random_features(3, 5, rng), {}),
                  ShapeError);
}

TEST_CASE("total loss degenerates to caption loss at lambda 1, gamma 0") {
  auto cfg = tiny_config(captioner::AttentionKind::kClta, false);
  captioner::CaptionerModel model(cfg);
  Rng rng(17);
  Tensor v = random_features(3, 5, rng);
  captioner::TrainConfig tc;
  tc.gamma = 0.0;
  Tape t;
  auto bd = captioner::total_loss(t, model, v, {4, 5, 6}, nullptr, tc, 0);
  auto un = captioner::caption_loss(t, model, v, {4, 5, 6});
  CHECK(bd.lambda == 1.0);
  CHECK(std::abs(t.val(bd.total).item() - t.val(un.loss).item()) < 1e-12);
}

TEST_CASE("KL term vanishes when the prior equals the averaged posterior") {
  auto cfg = tiny_config(captioner::AttentionKind::kClta, false);
  captioner::CaptionerModel model(cfg);
  Rng rng(19);
  Tensor v = random_features(3, 5, rng);
  captioner::TrainConfig tc;
  tc.gamma = 0.1;

  Tensor observed_avg;
  {
    Tape t;
    auto un = captioner::caption_loss(t, model, v, {4, 5});
    observed_avg = t.val(un.acc.average(t));
  }
  Tape t;
  auto bd = captioner::total_loss(t, model, v, {4, 5}, &observed_avg, tc, 0);
  REQUIRE(bd.kl.valid());
  CHECK(std::abs(t.val(bd.kl).item()) < 1e-10);
}

TEST_CASE("total loss decomposes into its weighted parts") {
  Rng rng(21);
  for (int trial = 0; trial < 12; ++trial) {
    const bool use_sae = trial % 2 == 0;
    const auto att = trial % 3 == 0 ? captioner::AttentionKind::kSoft
                                    : captioner::AttentionKind::kClta;
    auto cfg = tiny_config(att, use_sae, 100 + trial);
    captioner::CaptionerModel model(cfg);
    captioner::TrainConfig tc;
    tc.gamma = (trial % 4 < 2) ? 0.1 : 0.0;
    const int epoch = static_cast<int>(rng.uniform_int(20));
    Tensor v = random_features(3, 5, rng);
    Tensor qt = uniform_qt(cfg.n_topics);

    Tape t;
    auto bd = captioner::total_loss(t, model, v, {4, 5, 6}, &qt, tc, epoch);
    double expected = bd.lambda * t.val(bd.l_lstm).item();
    if (bd.l_sae.valid()) expected += (1.0 - bd.lambda) * t.val(bd.l_sae).item();
    if (bd.kl.valid()) expected += tc.gamma * t.val(bd.kl).item();
    CHECK(std::abs(t.val(bd.total).item() - expected) < 1e-12);
  }
}

TEST_CASE("total loss demands a prior when the KL weight is positive") {
  auto cfg = tiny_config(captioner::AttentionKind::kClta, false);
  captioner::CaptionerModel model(cfg);
  Rng rng(23);
  captioner::TrainConfig tc;
  tc.gamma = 0.1;
  Tape t;
  CHECK_THROWS_AS(
      captioner::total_loss(t, model, random_features(3, 5, rng), {4}, nullptr, tc, 0),
      ConfigError);
}

TEST_CASE("lambda schedule follows the stated growth and cap") {
  captioner::TrainConfig tc;
  CHECK(captioner::lambda_at_epoch(tc, 0) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(captioner::lambda_at_epoch(tc, 4) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(captioner::lambda_at_epoch(tc, 5) == doctest::Approx(0.77).epsilon(1e-12));
  CHECK(captioner::lambda_at_epoch(tc, 10) == doctest::Approx(0.847).epsilon(1e-12));
  CHECK(captioner::lambda_at_epoch(tc, 15) == 0.9);  // capped
  CHECK(captioner::lambda_at_epoch(tc, 40) == 0.9);
}

TEST_CASE("gradient check through three steps and cross entropy") {
  auto cfg = tiny_config(captioner::AttentionKind::kClta, false, 29);
  cfg.vocab_size = 9;
  cfg.hidden_dim = 6;
  captioner::CaptionerModel model(cfg);
  Rng rng(31);
  Tensor v = random_features(3, 5, rng);
  auto report = nn::grad_check(
      model.params,
      [&](Tape& t) { return captioner::caption_loss(t, model, v, {4, 5, 6}).loss; },
      1e-5, 10);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("full objective passes the gradient check in all four modes") {
  Rng rng(37);
  Tensor v = random_features(3, 5, rng);
  Tensor qt({4}, {0.4, 0.3, 0.2, 0.1});
  captioner::TrainConfig tc;
  int mode = 0;
  for (auto att : {captioner::AttentionKind::kClta, captioner::AttentionKind::kSoft}) {
    for (bool use_sae : {false, true}) {
      CAPTURE(mode);
      auto cfg = tiny_config(att, use_sae, 200 + mode);
      cfg.vocab_size = 9;
      cfg.hidden_dim = 6;
      cfg.sae_hidden_dim = 5;
      captioner::CaptionerModel model(cfg);
      auto report = nn::grad_check(
          model.params,
          [&](Tape& t) {
            return captioner::total_loss(t, model, v, {4, 5, 6}, &qt, tc, 3).total;
          },
          1e-5, 8);
      CHECK_MESSAGE(report.max_rel_err < 1e-4, "mode ", mode, " worst ",
                    report.worst_param);
      ++mode;
    }
  }
}

TEST_CASE("baseline mode reproduces the two-segment input arity") {
  auto soft = tiny_config(captioner::AttentionKind::kSoft, false);
  captioner::CaptionerModel baseline(soft);
  CHECK(baseline.params.at("lstm.w").value.cols() ==
        soft.feature_dim + soft.embed_dim + soft.hidden_dim);
  CHECK_FALSE(baseline.params.contains("att.w_sc"));

  auto topic = tiny_config(captioner::AttentionKind::kClta, false);
  captioner::CaptionerModel with_topics(topic);
  CHECK(with_topics.params.at("lstm.w").value.cols() ==
        topic.feature_dim + topic.embed_dim + topic.n_topics + topic.hidden_dim);
}

namespace {

// Fixed per-position log-probability tables; the simplest stateful model a
// beam search can run on.
struct TableStepper {
  std::vector<std::vector<double>> tables;  // [position][token] log probs

  struct State {
    int pos = 0;
    std::vector<double> logprobs;
  };

  State start() { return {0, tables[0]}; }
  State advance(const State& s, int) {
    const int next = std::min(s.pos + 1, static_cast<int>(tables.size()) - 1);
    return {next, tables[next]};
  }
};

// All token sequences over `allowed` up to max_len, EOS-terminated or not,
// scored by length-normalized log-probability.
std::vector<int> exhaustive_best(const TableStepper& model, int eos,
                                 const std::vector<int>& allowed, int max_len) {
  std::vector<int> best_tokens;
  double best_score = -1e300;
  const int content_count = static_cast<int>(allowed.size());

  // Enumerate by radix over content tokens for every length.
  std::vector<int> content;
  for (int tok : allowed) {
    if (tok != eos) content.push_back(tok);
  }
  for (int len = 0; len <= max_len; ++len) {
    std::vector<int> idx(len, 0);
    while (true) {
      // Score the sequence, optionally EOS-terminated.
      double raw = 0.0;
      bool valid = true;
      for (int p = 0; p < len; ++p) {
        if (p >= static_cast<int>(model.tables.size())) {
          valid = false;
          break;
        }
        raw += model.tables[p][content[idx[p]]];
      }
      if (valid) {
        if (len < max_len && len < static_cast<int>(model.tables.size())) {
          const double with_eos = (raw + model.tables[len][eos]) / (len + 1);
          if (with_eos > best_score) {
            best_score = with_eos;
            best_tokens.clear();
            for (int p = 0; p < len; ++p) best_tokens.push_back(content[idx[p]]);
          }
        }
        if (len == max_len && len > 0) {
          const double partial = raw / len;
          if (partial > best_score) {
            best_score = partial;
            best_tokens.clear();
            for (int p = 0; p < len; ++p) best_tokens.push_back(content[idx[p]]);
          }
        }
      }
      // Next radix combination.
      int p = len - 1;
      while (p >= 0 && idx[p] + 1 == static_cast<int>(content.size())) {
        idx[p] = 0;
        --p;
      }
      if (p < 0) break;
      ++idx[p];
    }
    if (content.empty()) break;
  }
  (void)content_count;
  return best_tokens;
}

std::vector<std::vector<double>> log_normalized(std::vector<std::vector<double>> raw) {
  for (auto& row : raw) {
    double z = 0.0;
    for (double v : row) z += std::exp(v);
    for (double& v : row) v -= std::log(z);
  }
  return raw;
}

}  // namespace

TEST_CASE("beam search equals exhaustive enumeration on a table model") {
  // Tokens: 0 pad, 1 bos, 2 eos, 3 'a', 4 'b'. Three content tokens {eos,a,b}
  // form the decoding alphabet; sequences up to length 4.
  TableStepper model;
  model.tables = log_normalized({{-9.0, -9.0, -3.0, -0.5, -1.2},
                                 {-9.0, -9.0, -2.5, -1.0, -0.6},
                                 {-9.0, -9.0, -0.8, -1.5, -1.4},
                                 {-9.0, -9.0, -0.3, -2.0, -1.8},
                                 {-9.0, -9.0, -0.1, -2.2, -2.0}});
  const std::vector<int> allowed = {2, 3, 4};
  auto expected = exhaustive_best(model, 2, allowed, 4);
  auto got = captioner::beam_search_generic(model, 2, allowed, 2, 4);
  CHECK(got == expected);

  SUBCASE("single-step budget returns one token") {
    auto one = captioner::beam_search_generic(model, 2, {3, 4}, 2, 1);
    CHECK(one.size() == 1);
  }
}

TEST_CASE("beam width one equals greedy decoding on random models") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    auto cfg = tiny_config(trial % 2 == 0 ? captioner::AttentionKind::kClta
                                          : captioner::AttentionKind::kSoft,
                           false, 300 + trial);
    cfg.vocab_size = 10;
    captioner::CaptionerModel model(cfg);
    Tensor v = random_features(3, 5, rng);
    auto greedy = captioner::greedy_decode(model, v, 6);
    auto beam1 = captioner::beam_search(model, v, 1, 6);
    CHECK(greedy == beam1);
  }
}

TEST_CASE("decoding never emits pad or bos and respects max_len") {
  Rng rng(43);
  auto cfg = tiny_config(captioner::AttentionKind::kClta, false, 51);
  captioner::CaptionerModel model(cfg);
  Tensor v = random_features(3, 5, rng);
  auto tokens = captioner::beam_search(model, v, 3, 5);
  CHECK(tokens.size() <= 5);
  for (int tok : tokens) {
    CHECK(tok != corpus::kPadId);
    CHECK(tok != corpus::kBosId);
    CHECK(tok != corpus::kEosId);
  }
}

TEST_CASE("inference runs no SAE computation") {
  auto cfg = tiny_config(captioner::AttentionKind::kClta, true, 61);
  captioner::CaptionerModel model(cfg);
  Rng rng(47);
  Tensor v = random_features(3, 5, rng);
  sae::reset_decoder_eval_count();
  captioner::greedy_decode(model, v, 6);
  captioner::beam_search(model, v, 3, 6);
  CHECK(sae::decoder_eval_count() == 0);
}

namespace {

corpus::CaptionDataset toy_dataset(int n_images, int vocab_size, Rng& rng) {
  corpus::CaptionDataset ds;
  ds.split = "train";
  for (int i = 0; i < n_images; ++i) {
    corpus::DatasetItem item;
    item.image.image_id = "img" + std::to_string(i);
    item.image.features = random_features(3, 5, rng);
    corpus::Caption c;
    const int len = 2 + static_cast<int>(rng.uniform_int(3));
    for (int j = 0; j < len; ++j) {
      c.token_ids.push_back(4 + static_cast<int>(rng.uniform_int(vocab_size - 4)));
    }
    item.captions.push_back(c);
    ds.items.push_back(item);
  }
  return ds;
}

topics::QtCache uniform_cache(const corpus::CaptionDataset& ds, int c_topics) {
  topics::QtCache cache;
  for (const auto& item : ds.items) {
    cache.by_image[item.image.image_id] = {
        std::vector<double>(c_topics, 1.0 / c_topics)};
  }
  return cache;
}

}  // namespace

TEST_CASE("training is deterministic and logs the lambda schedule") {
  Rng rng(53);
  auto ds = toy_dataset(4, 12, rng);
  auto cache = uniform_cache(ds, 4);
  captioner::TrainConfig tc;
  tc.epochs = 7;
  tc.lambda_every = 2;
  tc.batch_size = 2;
  tc.eval_every = 0;
  tc.seed = 9;

  auto run = [&]() {
    auto cfg = tiny_config(captioner::AttentionKind::kClta, true, 71);
    captioner::CaptionerModel model(cfg);
    return captioner::train(model, ds, &cache, tc);
  };
  auto r1 = run();
  auto r2 = run();
  REQUIRE(r1.log.size() == 7);
  for (std::size_t e = 0; e < r1.log.size(); ++e) {
    CHECK(r1.log[e].total == r2.log[e].total);
    CHECK(r1.log[e].l_lstm == r2.log[e].l_lstm);
    CHECK(r1.log[e].lambda ==
          captioner::lambda_at_epoch(tc, static_cast<int>(e)));
  }
}

TEST_CASE("a tiny model memorizes a tiny dataset") {
  Rng rng(59);
  auto ds = toy_dataset(3, 10, rng);
  auto cfg = tiny_config(captioner::AttentionKind::kClta, false, 73);
  cfg.vocab_size = 10;
  cfg.hidden_dim = 24;
  cfg.embed_dim = 12;
  captioner::CaptionerModel model(cfg);
  captioner::TrainConfig tc;
  tc.gamma = 0.0;
  tc.epochs = 400;
  tc.lr = 5e-3;
  tc.batch_size = 3;
  tc.eval_every = 0;
  auto result = captioner::train(model, ds, nullptr, tc);
  CHECK(result.log.back().l_lstm < 0.1);
  // Greedy decode reproduces the single caption of at least 2 of 3 images.
  int hits = 0;
  for (const auto& item : ds.items) {
    if (captioner::greedy_decode(model, item.image.features, 8) ==
        item.captions[0].token_ids) {
      ++hits;
    }
  }
  CHECK(hits >= 2);
}

TEST_CASE("captioner checkpoints round trip through disk") {
  namespace fs = std::filesystem;
  const auto dir = fs::path("test_tmp") / "captioner";
  fs::create_directories(dir);
  auto cfg = tiny_config(captioner::AttentionKind::kClta, true, 83);
  captioner::CaptionerModel model(cfg);
  Rng rng(61);
  Tensor v = random_features(3, 5, rng);
  const auto before = captioner::greedy_decode(model, v, 6);
  captioner::save_captioner(model, (dir / "model").string(), 17);
  auto loaded = captioner::load_captioner((dir / "model").string());
  CHECK(loaded.cfg.use_sae == true);
  CHECK(loaded.cfg.vocab_size == cfg.vocab_size);
  CHECK(captioner::greedy_decode(loaded, v, 6) == before);
}

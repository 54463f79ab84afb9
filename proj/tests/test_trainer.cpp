#include <cmath>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "phe/trainer.hpp"

using namespace phe::trainer;
using phe::data::FeatureDataset;
using phe::data::SynthConfig;

namespace {

FeatureDataset two_class_dataset(std::uint64_t seed = 3) {
  SynthConfig cfg;
  cfg.known_classes = 2;
  cfg.novel_classes = 0;
  cfg.dim = 8;
  cfg.samples_per_class = 16;
  cfg.modes_per_class = 2;
  cfg.between_class_sigma = 1.0;
  cfg.within_class_sigma = 0.1;
  cfg.seed = seed;
  return phe::data::synth_generate(cfg);
}

TrainConfig small_train_config(const FeatureDataset& ds, std::size_t epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 8;
  cfg.ema_decay = 0.99;
  cfg.model.input_dim = ds.dim;
  cfg.model.feature_dim = 8;
  cfg.model.code_length = 6;
  cfg.model.num_known_classes = ds.num_known_classes();
  cfg.model.protos_per_class = 2;
  cfg.seed = 11;
  return cfg;
}

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

double eval_loss_p(const Checkpoint& ck, const FeatureDataset& ds) {
  // unmasked loss over the whole support split with the live weights
  const auto support = ds.support_indices();
  phe::diffcore::Tape tape;
  auto bound = phe::model::bind_params(tape, ck.live, false);
  std::vector<double> x;
  std::vector<int> labels;
  for (std::size_t i : support) {
    x.insert(x.end(), ds.rows[i].begin(), ds.rows[i].end());
    labels.push_back(ds.labels[i]);
  }
  auto xa = tape.constant({support.size(), ds.dim}, std::move(x));
  auto z = phe::model::encode(tape, xa, bound, ck.config.model);
  auto s = phe::model::proto_similarity(tape, z, bound.at("proto.P"), ck.config.model.epsilon);
  const phe::model::FrozenFC fc(ck.config.model);
  return phe::losses::loss_p(tape, s, labels, fc, std::vector<double>(support.size() * ck.config.model.num_prototypes(), 1.0))
      .scalar();
}

}  // namespace

TEST_CASE("adamw_step: reference behaviors") {
  AdamConstants k;
  SUBCASE("zero gradient, no decay: parameters unchanged") {
    std::vector<double> p = {1.0, -2.0}, g = {0, 0}, m = {0, 0}, v = {0, 0};
    adamw_step(p, g, m, v, 1, 0.1, 0.0, k);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -2.0);
  }
  SUBCASE("first step moves by ~lr against the gradient sign") {
    std::vector<double> p = {0.0, 0.0}, g = {0.3, -2.0}, m = {0, 0}, v = {0, 0};
    adamw_step(p, g, m, v, 1, 1e-3, 0.0, k);
    // bias-corrected mhat/sqrt(vhat) = g/|g| on the first step
    CHECK(p[0] == doctest::Approx(-1e-3).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(1e-3).epsilon(1e-4));
  }
  SUBCASE("decoupled decay shrinks multiplicatively under zero gradient") {
    std::vector<double> p = {2.0}, g = {0.0}, m = {0.0}, v = {0.0};
    adamw_step(p, g, m, v, 1, 0.1, 0.5, k);
    CHECK(p[0] == doctest::Approx(2.0 * (1.0 - 0.1 * 0.5)));
  }
}

TEST_CASE("ema_update: endpoint and interpolation behavior") {
  std::vector<double> shadow = {0.0}, live = {1.0};
  ema_update(shadow, live, 0.999);
  CHECK(shadow[0] == doctest::Approx(0.001));
  shadow = {5.0};
  ema_update(shadow, live, 0.0);
  CHECK(shadow[0] == 1.0);  // decay 0 copies live
  shadow = {5.0};
  ema_update(shadow, live, 1.0 - 1e-15);
  CHECK(shadow[0] == doctest::Approx(5.0));
}

TEST_CASE("train: zero epochs returns the initialization") {
  auto ds = two_class_dataset();
  auto cfg = small_train_config(ds, 0);
  auto ck = train(ds, cfg);
  phe::Rng init_rng = phe::Rng::substream(cfg.seed, "init");
  auto expect = phe::model::init_params(ck.config.model, init_rng);
  CHECK(ck.live == expect);
  CHECK(ck.ema == expect);
}

TEST_CASE("train: loss_p decreases on separable data") {
  auto ds = two_class_dataset();
  auto cfg = small_train_config(ds, 0);
  const double before = eval_loss_p(train(ds, cfg), ds);
  cfg.epochs = 50;  // 50 epochs x 2 batches = 100 steps
  const double after = eval_loss_p(train(ds, cfg), ds);
  CHECK(after < before);
}

TEST_CASE("train: fixed seed gives bit-identical checkpoints; d_max matches the GV bound") {
  auto ds = two_class_dataset();
  auto cfg = small_train_config(ds, 3);
  auto a = train(ds, cfg);
  auto b = train(ds, cfg);
  CHECK(a.live == b.live);
  CHECK(a.ema == b.ema);
  CHECK(a.d_max == phe::coding::gv_dmax(6, 2));
}

TEST_CASE("train: frozen classifier is bit-identical after training") {
  auto ds = two_class_dataset();
  auto cfg = small_train_config(ds, 3);
  auto ck = train(ds, cfg);
  const phe::model::FrozenFC before(cfg.model);
  const phe::model::FrozenFC after(ck.config.model);
  CHECK(before == after);
  for (const auto& t : ck.live.tensors) CHECK(t.name.find("fc") == std::string::npos);
}

TEST_CASE("train: empty support split raises") {
  FeatureDataset ds;
  ds.dim = 4;
  ds.rows = {{1, 2, 3, 4}};
  ds.labels = {0};
  ds.split = {phe::data::Split::query};
  ds.known_classes = {0};
  TrainConfig cfg;
  cfg.model.input_dim = 4;
  cfg.model.num_known_classes = 1;
  CHECK_THROWS_AS(train(ds, cfg), std::invalid_argument);
}

TEST_CASE("checkpoint: save/load/save round-trips bit-exactly") {
  auto ds = two_class_dataset();
  auto ck = train(ds, small_train_config(ds, 2));
  const auto p1 = std::filesystem::temp_directory_path() / "phe_ck_a.bin";
  const auto p2 = std::filesystem::temp_directory_path() / "phe_ck_b.bin";
  save_checkpoint(p1, ck);
  auto loaded = load_checkpoint(p1);
  CHECK(loaded.live == ck.live);
  CHECK(loaded.ema == ck.ema);
  CHECK(loaded.opt.m == ck.opt.m);
  CHECK(loaded.opt.v == ck.opt.v);
  CHECK(loaded.opt.step == ck.opt.step);
  CHECK(loaded.d_max == ck.d_max);
  CHECK(loaded.mask_rng_state == ck.mask_rng_state);
  save_checkpoint(p2, loaded);
  CHECK(read_bytes(p1) == read_bytes(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("checkpoint: bad magic is rejected") {
  const auto p = std::filesystem::temp_directory_path() / "phe_ck_bad.bin";
  {
    std::ofstream f(p, std::ios::binary);
    f << "NOTACKPT garbage";
  }
  CHECK_THROWS_AS(load_checkpoint(p), std::runtime_error);
  std::filesystem::remove(p);
}

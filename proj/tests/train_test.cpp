// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "molmix/error.hpp"
#include "molmix/run.hpp"
#include "molmix/synthdata.hpp"
#include "molmix/train.hpp"

namespace molmix {
namespace {

namespace fs = std::filesystem;
using run::Json;
using run::RunConfig;

fs::path fresh_dir(const std::string &name) {
  const auto dir = fs::temp_directory_path()
                   / ("molmix_train_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A toy mix on disk with a small, fast model.
RunConfig small_mix(const fs::path &dir, int epochs = 2, std::uint64_t seed = 3) {
  const auto path = synth::write_toy_mix(dir, seed, 40, epochs);
  auto text = slurp(path);
  text += "  max_nodes: 128\n  max_edges: 320\n  max_graphs: 16\n";
  return RunConfig::from_yaml(text, dir);
}

// ---- Adam ------------------------------------------------------------------------

TEST(Adam, MatchesScalarReference) {
  gnn::ParamStore store;
  store.add("x", 1, 2, nullptr);
  store[0].value.data = { 1.0, -2.0 };
  train::AdamConfig cfg;
  cfg.lr = 0.1;
  train::Adam adam(cfg, store);
  double m[2] = { 0, 0 }, v[2] = { 0, 0 }, x[2] = { 1.0, -2.0 };
  for (int t = 1; t <= 5; ++t) {
    const std::vector<double> g { 2.0 * x[0], 0.5 * x[1] + 1.0 };
    adam.step(store, std::vector<std::vector<double>> { g });
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1.0 - std::pow(0.9, t));
      const double vh = v[i] / (1.0 - std::pow(0.999, t));
      x[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    EXPECT_DOUBLE_EQ(store[0].value.data[0], x[0]);
    EXPECT_DOUBLE_EQ(store[0].value.data[1], x[1]);
  }
  EXPECT_EQ(adam.steps(), 5);
}

TEST(Adam, ConvergesOnQuadraticAndValidates) {
  gnn::ParamStore store;
  store.add("x", 1, 1, nullptr);
  store[0].value.data = { 3.0 };
  train::AdamConfig cfg;
  cfg.lr = 0.05;
  train::Adam adam(cfg, store);
  for (int i = 0; i < 2000; ++i) {
    const double x = store[0].value.data[0];
    adam.step(store, std::vector<std::vector<double>> { { 2.0 * (x - 1.0) } });
  }
  EXPECT_NEAR(store[0].value.data[0], 1.0, 1e-3);
  cfg.lr = -1.0;
  EXPECT_THROW(train::Adam(cfg, store), ConfigError);
  cfg = {};
  cfg.beta1 = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

// ---- Training on a prepared mix --------------------------------------------------

class MixTest: public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fresh_dir("mix"));
    cfg_ = new RunConfig(small_mix(*dir_));
    prepared_ = new run::Prepared(run::prepare(*cfg_));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete prepared_;
    delete cfg_;
    delete dir_;
  }

  static gnn::Model model() {
    return gnn::Model(run::resolve_model(*cfg_, prepared_->joint));
  }

  static inline fs::path *dir_ = nullptr;
  static inline RunConfig *cfg_ = nullptr;
  static inline run::Prepared *prepared_ = nullptr;
};

TEST_F(MixTest, TrainStepsReduceLossOnAFixedBatch) {
  auto m = model();
  const auto &ds = prepared_->joint;
  const auto mols = ds.molecules(data::SplitTag::kTrain);
  const std::vector<std::size_t> some(mols.begin(), mols.begin() + 8);
  const auto batch = data::make_batch(ds, some, data::SplitTag::kTrain,
                                      cfg_->train.data.cap);
  train::AdamConfig opt;
  opt.lr = 3e-3;
  train::Adam adam(opt, m.params());
  std::map<std::string, double> tl;
  const double first = train::train_step(m, adam, ds, batch, &tl);
  EXPECT_FALSE(tl.empty());
  double last = first;
  for (int i = 0; i < 60; ++i) {
    last = train::train_step(m, adam, ds, batch);
  }
  EXPECT_LT(last, 0.5 * first);
}

TEST_F(MixTest, NonFiniteLossAborts) {
  auto m = model();
  m.params()[0].value.data[0] = std::numeric_limits<double>::quiet_NaN();
  const auto &ds = prepared_->joint;
  const auto mols = ds.molecules(data::SplitTag::kTrain);
  const auto batch = data::make_batch(ds, std::vector<std::size_t> { mols[0] },
                                      data::SplitTag::kTrain, cfg_->train.data.cap);
  train::Adam adam({}, m.params());
  EXPECT_THROW(train::train_step(m, adam, ds, batch), NumericError);
}

TEST_F(MixTest, PredictionsDoNotDependOnPacking) {
  const auto m = model();
  const auto &ds = prepared_->joint;
  const auto a = train::predict(m, ds, data::SplitTag::kTrain, { 128, 320, 16 });
  const auto b = train::predict(m, ds, data::SplitTag::kTrain, { 40, 100, 2 });
  ASSERT_EQ(a.preds.size(), ds.tasks.size());
  for (std::size_t t = 0; t < ds.tasks.size(); ++t) {
    EXPECT_EQ(a.labels[t].data.size(), b.labels[t].data.size());
    ASSERT_EQ(a.preds[t].data.size(), b.preds[t].data.size());
    for (std::size_t i = 0; i < a.preds[t].data.size(); ++i) {
      EXPECT_NEAR(a.preds[t].data[i], b.preds[t].data[i], 1e-8);
    }
    for (std::size_t i = 0; i < a.labels[t].data.size(); ++i) {
      const double x = a.labels[t].data[i], y = b.labels[t].data[i];
      EXPECT_TRUE(x == y || (std::isnan(x) && std::isnan(y)));
    }
  }
}

TEST_F(MixTest, EvaluateCoversTasksOfTheSplitOnly) {
  const auto m = model();
  const auto &ds = prepared_->joint;
  const auto train_report = train::evaluate(m, ds, data::SplitTag::kTrain,
                                            cfg_->train.data.cap, 0);
  EXPECT_EQ(train_report.tasks.size(), 3u);
  const auto seen = train::evaluate(m, ds, data::SplitTag::kTestSeen,
                                    cfg_->train.data.cap, 0);
  ASSERT_EQ(seen.tasks.size(), 2u);  // auxiliary datasets only
  EXPECT_EQ(seen.tasks[0].task, "tox");
  EXPECT_EQ(seen.tasks[1].task, "expr");
}

TEST_F(MixTest, HeadMismatchIsAConfigError) {
  auto mc = run::resolve_model(*cfg_, prepared_->joint);
  mc.heads.pop_back();
  gnn::Model m(mc);
  EXPECT_THROW(train::evaluate(m, prepared_->joint, data::SplitTag::kTrain,
                               cfg_->train.data.cap, 0),
               ConfigError);
  mc = run::resolve_model(*cfg_, prepared_->joint);
  mc.heads[0].loss = LossKind::kBce;
  gnn::Model m2(mc);
  EXPECT_THROW(train::evaluate(m2, prepared_->joint, data::SplitTag::kTrain,
                               cfg_->train.data.cap, 0),
               ConfigError);
}

TEST_F(MixTest, FitIsDeterministic) {
  auto tc = cfg_->train;
  tc.epochs = 2;
  auto a = model();
  auto b = model();
  std::vector<double> seen;
  const auto ra = train::fit(a, prepared_->joint, tc,
                             [&](const train::EpochRecord &r, auto) { seen.push_back(r.loss); });
  const auto rb = train::fit(b, prepared_->joint, tc);
  ASSERT_EQ(ra.epochs.size(), 2u);
  EXPECT_EQ(seen.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(ra.epochs[e].loss, rb.epochs[e].loss);
  }
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_EQ(a.params()[i].value, b.params()[i].value);
  }
  EXPECT_EQ(mt::to_json(ra.reports), mt::to_json(rb.reports));
}

// ---- Configuration ---------------------------------------------------------------

const char *kMinimal = R"(
datasets:
  - {name: a, path: a.csv}
tasks:
  - {name: t, dataset: a, labels: [y]}
)";

TEST(RunConfig, DefaultsAndPresets) {
  const auto c = RunConfig::from_yaml(kMinimal, "/data");
  EXPECT_EQ(c.preset, "toymix");
  EXPECT_EQ(c.train.epochs, 300);
  EXPECT_EQ(c.model.hidden, 128);
  EXPECT_EQ(c.model.num_layers, 4);
  EXPECT_EQ(c.primary, "a");
  EXPECT_EQ(c.datasets[0].path, fs::path("/data/a.csv"));
  EXPECT_DOUBLE_EQ(c.train.optimizer.lr, 1e-3);
  EXPECT_EQ(RunConfig::from_yaml(std::string(kMinimal) + "preset: largemix\n").train.epochs,
            200);
  EXPECT_EQ(RunConfig::from_yaml(std::string(kMinimal) + "preset: ultralarge\n").train.epochs,
            50);
  EXPECT_EQ(RunConfig::from_yaml(std::string(kMinimal)
                                 + "preset: largemix\ntraining: {epochs: 7}\n")
                .train.epochs,
            7);
  EXPECT_THROW(RunConfig::from_yaml(std::string(kMinimal) + "preset: huge\n"), ConfigError);
}

TEST(RunConfig, UnknownKeysAreRejectedEverywhere) {
  for (const char *extra: { "colour: red\n", "model: {hiden: 3}\n", "training: {epoch: 3}\n",
                            "optimizer: {learning_rate: 1}\n", "splits: {ratio: 1}\n",
                            "featurization: {lapk: 3}\n",
                            "model: {lap_pe: {enable: false}}\n" }) {
    EXPECT_THROW(RunConfig::from_yaml(std::string(kMinimal) + extra), ConfigError) << extra;
  }
  EXPECT_THROW(RunConfig::from_yaml(R"(
datasets: [{name: a, path: a.csv, smiles: s}]
tasks: [{name: t, dataset: a, labels: [y]}]
)"),
               ConfigError);
  EXPECT_THROW(RunConfig::from_yaml(R"(
datasets: [{name: a, path: a.csv}]
tasks: [{name: t, dataset: a, labels: [y], lvl: node}]
)"),
               ConfigError);
}

TEST(RunConfig, SemanticValidation) {
  const std::vector<std::string> bad {
    "datasets: [{name: a, path: a.csv}]\ntasks: [{name: t, dataset: b, labels: [y]}]\n",
    "datasets: [{name: a, path: a.csv}]\ntasks: [{name: t, dataset: a, labels: [y]}, "
    "{name: t, dataset: a, labels: [z]}]\n",
    "datasets: [{name: a, path: a.csv}]\ntasks: [{name: t, dataset: a, labels: [y]}, "
    "{name: u, dataset: a, level: node, loss: bce, labels: [y]}]\n",
    "datasets: [{name: a, path: a.csv}, {name: a, path: b.csv}]\ntasks: [{name: t, "
    "dataset: a, labels: [y]}]\n",
    "datasets: [{name: a, path: a.csv}]\nprimary: b\ntasks: [{name: t, dataset: a, "
    "labels: [y]}]\n",
    "datasets: [{name: a, path: a.csv}]\ntasks: [{name: t, dataset: a, loss: hybrid, "
    "labels: [y]}]\n",
    "datasets: [{name: a, path: a.csv}]\ntasks: [{name: t, dataset: a, loss: mael, "
    "labels: [y]}]\n",
    "datasets: [{name: a, path: a.csv}]\ntasks: [{name: t, dataset: a, labels: [y]}]\n"
    "training: {epochs: 0}\n",
    "datasets: [{name: a, path: a.csv}]\ntasks: [{name: t, dataset: a, labels: [y]}]\n"
    "training: {sampling_weights: {b: 0.5}}\n",
    "datasets: [{name: a, path: a.csv}]\ntasks: [{name: t, dataset: a, labels: [y]}]\n"
    "model: {layers: abc}\n",
    "datasets: []\ntasks: [{name: t, dataset: a, labels: [y]}]\n",
    "datasets: [{name: a, path: a.csv}\n",
    "- just\n- a list\n",
  };
  for (const auto &text: bad) {
    EXPECT_THROW(RunConfig::from_yaml(text), ConfigError) << text;
  }
}

TEST(RunConfig, ResolvedJsonRoundTrips) {
  const auto c = RunConfig::from_yaml(std::string(kMinimal) + R"(
seed: 9
model: {type: gine, hidden: 40, lap_pe: {enabled: false}}
featurization: {rwse_steps: 4, lap_k: 3}
training: {sampling_weights: {a: 0.5}, eval_splits: [val, test]}
)",
                                      "/data");
  const Json j = c.to_json();
  EXPECT_EQ(j["featurization"]["rwse_steps"], Json({ 1, 2, 3, 4 }));
  const auto back = RunConfig::from_yaml(j.dump(2));
  EXPECT_EQ(back.to_json(), j);
}

TEST(RunConfig, LargeMixPresetParameterBudget) {
  auto c = RunConfig::from_yaml(std::string(kMinimal) + "preset: largemix\n");
  data::JointDataset ds;
  ds.tasks.resize(1);
  ds.tasks[0].spec = c.tasks[0];
  const gnn::Model m(run::resolve_model(c, ds));
  EXPECT_GT(m.num_params(), 4'000'000u);
  EXPECT_LT(m.num_params(), 6'000'000u);
}

// ---- Pipeline --------------------------------------------------------------------

TEST(Pipeline, IngestStatsAreStableAndEmptyDatasetsFail) {
  const auto dir = fresh_dir("ingest");
  const auto cfg = small_mix(dir);
  const auto s1 = run::ingest_stats(cfg, run::ingest(cfg));
  const auto s2 = run::ingest_stats(cfg, run::ingest(cfg));
  EXPECT_EQ(s1, s2);
  ASSERT_EQ(s1.size(), 3u);
  EXPECT_EQ(s1[0]["# mols"], 40);
  EXPECT_EQ(s1[0]["# G. labels"], 3);
  EXPECT_EQ(s1[1]["# G. labels"], 4);
  EXPECT_NEAR(s1[1]["% G. sparsity"].get<double>(), 25.0, 8.0);

  std::ofstream(dir / "qm.csv") << "smiles,gap,ring,size\n";
  EXPECT_THROW(run::ingest(cfg), DataError);
  fs::remove(dir / "qm.csv");
  EXPECT_THROW(run::ingest(cfg), DataError);
  fs::remove_all(dir);
}

TEST(Pipeline, SplitFilesAreReadBack) {
  const auto dir = fresh_dir("splits");
  auto cfg = small_mix(dir);
  const auto data = run::ingest(cfg);
  const auto splits = run::splits_for(cfg, data);
  run::write_splits(dir / "splits", splits);
  cfg.split_dir = dir / "splits";
  const auto back = run::splits_for(cfg, data);
  for (const auto &[name, s]: splits) {
    EXPECT_EQ(back.at(name).tags, s.tags);
  }
  fs::remove(dir / "splits" / "tox.json");
  EXPECT_THROW(run::splits_for(cfg, data), DataError);
  fs::remove_all(dir);
}

TEST(Pipeline, ManifestIsReproducibleAndTracksConfig) {
  const auto dir = fresh_dir("manifest");
  const auto cfg = small_mix(dir);
  const auto a = run::run_train(cfg, dir / "run_a");
  const auto b = run::run_train(cfg, dir / "run_b");
  EXPECT_EQ(a.digest, b.digest);
  EXPECT_EQ(a.digest, run::manifest_digest(a.manifest));
  Json ma = a.manifest, mb = b.manifest;
  ma.erase("runtime");
  mb.erase("runtime");
  EXPECT_EQ(ma, mb);
  for (const char *f: { "manifest.json", "metrics.csv", "metrics.json", "model.ckpt",
                        "splits/qm.json" }) {
    EXPECT_TRUE(fs::exists(dir / "run_a" / f)) << f;
  }
  EXPECT_EQ(Json::parse(slurp(dir / "run_a" / "manifest.json"))["digest"], a.digest);

  auto changed = cfg;
  changed.train.optimizer.lr = 2e-3;
  const auto c = run::run_train(changed, {});
  EXPECT_NE(c.digest, a.digest);
  EXPECT_EQ(c.manifest["config"]["optimizer"]["lr"], 2e-3);
  EXPECT_EQ(a.manifest["config"]["optimizer"]["lr"], 1e-3);
  EXPECT_EQ(a.manifest["parameters"], a.model->num_params());
  fs::remove_all(dir);
}

TEST(Pipeline, EvalReproducesFinalMetrics) {
  const auto dir = fresh_dir("eval");
  const auto cfg = small_mix(dir);
  const auto out = run::run_train(cfg, dir / "run");
  const auto r1 = run::run_eval(dir / "run" / "model.ckpt", data::SplitTag::kTest);
  const auto r2 = run::run_eval(dir / "run" / "model.ckpt", data::SplitTag::kTest);
  EXPECT_EQ(mt::to_json(std::span(&r1, 1)), mt::to_json(std::span(&r2, 1)));
  const mt::MetricReport *final_test = nullptr;
  for (const auto &r: out.result.reports) {
    if (r.split == "test") {
      final_test = &r;
    }
  }
  ASSERT_NE(final_test, nullptr);
  EXPECT_EQ(mt::to_json(std::span(final_test, 1)), mt::to_json(std::span(&r1, 1)));
  EXPECT_THROW(run::run_eval(dir / "missing.ckpt", data::SplitTag::kTest), DataError);
  fs::remove_all(dir);
}

TEST(Synth, OverfitDatasetSparsity) {
  const auto ds = synth::overfit_dataset(1, 128, 0.5);
  std::istringstream in(ds.csv);
  data::IngestReport rep;
  const auto t = data::ingest_csv(in, ds.schema, &rep);
  EXPECT_EQ(t.size(), 128u);
  EXPECT_TRUE(rep.skipped.empty());
  EXPECT_NEAR(t.graph_sparsity(), 0.5, 0.1);
  EXPECT_NEAR(t.node_sparsity(), 0.5, 0.05);
  EXPECT_EQ(synth::overfit_dataset(1, 128, 0.5).csv, ds.csv);
}

}  // namespace
}  // namespace molmix

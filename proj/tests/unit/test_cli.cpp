#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "episodica/episodic.hpp"
#include "episodica/eten.hpp"
#include "episodica/manifest.hpp"
#include "episodica/pipeline.hpp"
#include "support/tempdir.hpp"

using namespace episodica;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

// Runs the CLI with `args`; stdout is captured, stderr discarded.
CliResult cli(const std::string& args, const std::string& env = "") {
  test::TempDir tmp;
  const std::string cmd = env + " '" EPISODICA_CLI "' " + args + " > '" + (tmp / "out").string() + "' 2>/dev/null";
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(tmp / "out");
  std::ostringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

void write(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

nlohmann::json last_json(const std::string& out) {
  return nlohmann::json::parse(out.substr(out.find('{')));
}

}  // namespace

TEST(Cli, HelpAndUsage) {
  EXPECT_EQ(cli("--help").code, 0);
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("eval --n-way").code, 2);
}

TEST(Cli, ExitCodesByErrorCategory) {
  test::TempDir dir;
  write(dir / "bad.cfg", "temperature = -1\n");
  EXPECT_EQ(cli("pretrain --config '" + (dir / "bad.cfg").string() + "' --manifest x --out y").code, 2);
  EXPECT_EQ(cli("pretrain --manifest '" + (dir / "absent.csv").string() + "' --out y").code, 3);
  EXPECT_EQ(cli("eval --embeddings '" + (dir / "absent.eten").string() + "' --labels z").code, 3);
  // zero-norm features under attention
  eten::save(Tensor({10, 3}), dir / "zero.eten");
  std::vector<int> labels;
  for (int i = 0; i < 10; ++i) labels.push_back(i / 2);
  pipeline::save_labels(labels, dir / "zero.csv");
  EXPECT_EQ(cli("eval --embeddings '" + (dir / "zero.eten").string() + "' --labels '" + (dir / "zero.csv").string() +
                "' --n-query 1 --n-tasks 3")
                .code,
            4);
  EXPECT_EQ(cli("eval --embeddings a --labels b", "EPISODICA_SEED=abc").code, 2);
}

TEST(Cli, EndToEndMatchesInProcess) {
  test::TempDir dir;
  const std::string d = dir.path().string();
  ASSERT_EQ(cli("synth --out '" + d + "/data' --n-classes 6 --n-test-classes 3 --per-class 20 --image-size 16").code, 0);
  write(dir / "run.cfg",
        "epochs = 1\nbatch_size = 16\nimage_size = 16\n"
        "backbone = conv3x3 3 8 2; relu; global_avg_pool\nprojection_head = dense 8 8\n");
  ASSERT_EQ(cli("pretrain --config '" + d + "/run.cfg' --manifest '" + d + "/data/manifest.csv' --out '" + d + "/ckpt'").code, 0);
  ASSERT_EQ(cli("embed --checkpoint '" + d + "/ckpt' --manifest '" + d + "/data/manifest.csv' --embeddings '" + d +
                "/emb.eten' --labels '" + d + "/labels.csv'")
                .code,
            0);
  const CliResult eval = cli("eval --embeddings '" + d + "/emb.eten' --labels '" + d +
                       "/labels.csv' --n-way 3 --n-query 5 --n-tasks 50 --classifier 1nn --seed 4");
  ASSERT_EQ(eval.code, 0);
  const auto report = last_json(eval.out);

  // the same computation in process
  const auto ck = pipeline::load_checkpoint(dir / "ckpt");
  const auto split = data::load_split(data::DatasetManifest::load(dir / "data/manifest.csv"), data::Split::kTest);
  const Tensor emb = pipeline::embed_images(ck.encoder, ck.config.augment, split.images);
  EXPECT_EQ(emb, eten::load(dir / "emb.eten"));
  EXPECT_EQ(split.labels, pipeline::load_labels(dir / "labels.csv"));
  const auto want = episodic::run_protocol(episodic::FeaturePool(emb, split.labels), {3, 1, 5, 50},
                                           {episodic::Classifier::kNearest, 4});
  EXPECT_EQ(report["mean"].get<double>(), want.mean);
  EXPECT_EQ(report["ci95"].get<double>(), want.ci95_halfwidth);
  EXPECT_EQ(report["seed"].get<std::uint64_t>(), 4u);

  // seed precedence: EPISODICA_SEED applies unless --seed is given
  const std::string base = "eval --embeddings '" + d + "/emb.eten' --labels '" + d +
                           "/labels.csv' --n-way 3 --n-query 5 --n-tasks 50 --classifier 1nn";
  EXPECT_EQ(last_json(cli(base, "EPISODICA_SEED=4").out)["mean"].get<double>(), want.mean);
  EXPECT_EQ(last_json(cli(base + " --seed 9", "EPISODICA_SEED=4").out)["seed"].get<std::uint64_t>(), 9u);
}

TEST(Cli, PcaFitAndTransform) {
  test::TempDir dir;
  Rng rng(5);
  Tensor x({40, 6});
  for (float& v : x.data()) v = static_cast<float>(rng.normal());
  eten::save(x, dir / "x.eten");
  const std::string d = dir.path().string();
  ASSERT_EQ(cli("pca fit --input '" + d + "/x.eten' --k 3 --model '" + d + "/pca'").code, 0);
  ASSERT_EQ(cli("pca transform --model '" + d + "/pca' --input '" + d + "/x.eten' --output '" + d + "/y.eten'").code, 0);
  EXPECT_EQ(eten::load(dir / "y.eten").shape(), (Shape{40, 3}));
  EXPECT_EQ(cli("pca fit --input '" + d + "/x.eten' --k 7 --model '" + d + "/pca2'").code, 2);
}

TEST(Cli, AugmentPreviewWritesViews) {
  test::TempDir dir;
  const std::string d = dir.path().string();
  ASSERT_EQ(cli("synth --out '" + d + "/data' --n-classes 2 --n-test-classes 1 --per-class 1 --image-size 16").code, 0);
  const auto m = data::DatasetManifest::load(dir / "data/manifest.csv");
  const std::string img = (dir.path() / "data" / m.entries[0].path).string();
  write(dir / "p.cfg", "image_size = 16\n");
  ASSERT_EQ(cli("augment-preview --input '" + img + "' --out-dir '" + d + "/views' --count 3 --config '" + d + "/p.cfg'").code, 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "views/view_000.ppm"));
  EXPECT_TRUE(std::filesystem::exists(dir / "views/view_002.ppm"));
}

// Command-line front end: synth, pretrain, embed, eval, pca, augment-preview.
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "episodica/augment.hpp"
#include "episodica/config.hpp"
#include "episodica/episodic.hpp"
#include "episodica/error.hpp"
#include "episodica/eten.hpp"
#include "episodica/image.hpp"
#include "episodica/manifest.hpp"
#include "episodica/pca.hpp"
#include "episodica/pipeline.hpp"
#include "episodica/synthetic.hpp"

namespace fs = std::filesystem;
using namespace episodica;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("EPISODICA_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  std::uint64_t v = 0;
  const std::string s(raw);
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw ConfigError("EPISODICA_SEED='" + s + "' is not a nonnegative integer");
  return v;
}

// Precedence: config file, then EPISODICA_SEED, then an explicit --seed.
std::uint64_t resolve_seed(std::uint64_t base, const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (auto env = env_seed()) return *env;
  return base;
}

config::RunConfig load_run_config(const std::string& path) {
  return path.empty() ? config::RunConfig::defaults() : config::parse_config(read_file(path));
}

void print_config(const std::string& command, const std::string& body) {
  std::cerr << "# " << command << " resolved config\n" << body << std::flush;
}

void print_pairs(const std::string& command, const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::string body;
  for (const auto& [k, v] : pairs) body += k + " = " + v + "\n";
  print_config(command, body);
}

// --- synth ----------------------------------------------------------------------

struct SynthArgs {
  std::string out;
  data::SyntheticSpec spec;
  std::optional<std::uint64_t> seed;
};

void run_synth(SynthArgs a) {
  a.spec.seed = resolve_seed(a.spec.seed, a.seed);
  print_pairs("synth", {{"n_classes", std::to_string(a.spec.n_classes)},
                        {"n_test_classes", std::to_string(a.spec.n_test_classes)},
                        {"per_class", std::to_string(a.spec.per_class)},
                        {"image_size", std::to_string(a.spec.image_size)},
                        {"noise", std::to_string(a.spec.noise)},
                        {"seed", std::to_string(a.spec.seed)},
                        {"out", a.out}});
  const auto data = data::generate_synthetic(a.spec);
  data::write_dataset(data, a.out);
  std::cerr << "wrote " << data.images.size() << " images and " << (fs::path(a.out) / "manifest.csv").string() << "\n";
}

// --- pretrain -------------------------------------------------------------------

struct PretrainArgs {
  std::string config, manifest, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

void run_pretrain(const PretrainArgs& a) {
  config::RunConfig cfg = load_run_config(a.config);
  cfg.seed = resolve_seed(cfg.seed, a.seed);
  if (a.epochs) cfg.epochs = *a.epochs;
  cfg.validate();
  print_config("pretrain", config::serialize(cfg));
  const auto manifest = data::DatasetManifest::load(a.manifest);
  const auto train = data::load_split(manifest, data::Split::kTrain);
  std::cerr << "pretraining " << config::to_string(cfg.variant) << " on " << train.images.size() << " images\n";
  const auto ckpt = pipeline::pretrain(cfg, train.images, [](const pipeline::EpochLog& log) {
    std::cerr << "epoch " << log.epoch << " loss " << log.mean_loss << " steps " << log.steps << " lr " << log.lr
              << "\n";
  });
  pipeline::save_checkpoint(ckpt, a.out);
  std::cerr << "checkpoint written to " << a.out << "\n";
}

// --- embed ----------------------------------------------------------------------

struct EmbedArgs {
  std::string checkpoint, manifest, split = "test", embeddings, labels, stage = "backbone";
};

void run_embed(const EmbedArgs& a) {
  const auto ckpt = pipeline::load_checkpoint(a.checkpoint);
  const data::Split split = data::parse_split(a.split);
  model::Stage stage;
  if (a.stage == "backbone") stage = model::Stage::kBackbone;
  else if (a.stage == "projection") stage = model::Stage::kProjection;
  else throw ConfigError("unknown stage '" + a.stage + "' (expected backbone or projection)");
  print_config("embed", config::serialize(ckpt.config) + "split = " + a.split + "\nstage = " + a.stage + "\n");
  const auto manifest = data::DatasetManifest::load(a.manifest);
  const auto loaded = data::load_split(manifest, split);
  if (loaded.images.empty()) throw DataError("embed: split '" + a.split + "' is empty");
  const Tensor features = pipeline::embed_images(ckpt.encoder, ckpt.config.augment, loaded.images, stage);
  eten::save(features, a.embeddings);
  pipeline::save_labels(loaded.labels, a.labels);
  std::cerr << "embedded " << features.dim(0) << " images to " << features.dim(1) << " dims\n";
}

// --- eval -----------------------------------------------------------------------

struct EvalArgs {
  std::string embeddings, labels, config, classifier, report;
  std::optional<std::size_t> n_way, k_shot, n_query, n_tasks, workers;
  std::optional<std::uint64_t> seed;
  bool l2_normalize = false;
  bool per_task = false;
};

void run_eval(const EvalArgs& a) {
  config::RunConfig cfg = load_run_config(a.config);
  cfg.seed = resolve_seed(cfg.seed, a.seed);
  if (a.n_way) cfg.task.n_way = *a.n_way;
  if (a.k_shot) cfg.task.k_shot = *a.k_shot;
  if (a.n_query) cfg.task.n_query = *a.n_query;
  if (a.n_tasks) cfg.task.n_tasks = *a.n_tasks;
  if (a.workers) cfg.workers = *a.workers;
  if (!a.classifier.empty()) cfg.classifier = episodic::parse_classifier(a.classifier);
  if (a.l2_normalize) cfg.eval_l2_normalize = true;
  cfg.task.validate();
  if (cfg.workers == 0) throw ConfigError("workers must be positive");
  print_config("eval", config::serialize(cfg));

  Tensor features = eten::load(a.embeddings);
  std::vector<int> labels = pipeline::load_labels(a.labels);
  if (features.rank() != 2) throw DataError("eval: embeddings must be a matrix, got " + shape_to_string(features.shape()));
  if (features.dim(0) != labels.size())
    throw DataError("eval: " + std::to_string(features.dim(0)) + " embeddings but " + std::to_string(labels.size()) +
                    " labels");
  const episodic::FeaturePool pool(std::move(features), std::move(labels));
  const auto report =
      episodic::run_protocol(pool, cfg.task, {cfg.classifier, cfg.seed, cfg.eval_l2_normalize, cfg.workers});
  const std::string json = report.to_json(a.per_task).dump();
  std::cout << report.summary() << "\n" << json << "\n" << std::flush;
  if (!a.report.empty()) {
    std::ofstream out(a.report, std::ios::binary);
    out << json << "\n";
    if (!out) throw DataError("cannot write report " + a.report);
  }
}

// --- pca ------------------------------------------------------------------------

struct PcaFitArgs {
  std::string input, model_dir;
  std::size_t k = 0;
};

struct PcaTransformArgs {
  std::string model_dir;
  std::vector<std::string> inputs, outputs;
};

void run_pca_fit(const PcaFitArgs& a) {
  print_pairs("pca fit", {{"input", a.input}, {"k", std::to_string(a.k)}, {"model", a.model_dir}});
  const Tensor x = eten::load(a.input);
  if (x.rank() != 2) throw DataError("pca: input must be a matrix, got " + shape_to_string(x.shape()));
  const auto model = pca::pca_fit(x, a.k);
  pca::save_pca(model, a.model_dir);
  double kept = 0.0;
  for (float v : model.explained_variance.data()) kept += v;
  std::cerr << "kept " << kept / pca::total_variance(x) << " of the total variance with " << a.k << " components\n";
}

void run_pca_transform(const PcaTransformArgs& a) {
  if (a.inputs.size() != a.outputs.size())
    throw ConfigError("pca transform: " + std::to_string(a.inputs.size()) + " inputs but " +
                      std::to_string(a.outputs.size()) + " outputs");
  std::vector<std::pair<std::string, std::string>> pairs{{"model", a.model_dir}};
  for (std::size_t i = 0; i < a.inputs.size(); ++i) pairs.emplace_back("transform", a.inputs[i] + " -> " + a.outputs[i]);
  print_pairs("pca transform", pairs);
  const auto model = pca::load_pca(a.model_dir);
  for (std::size_t i = 0; i < a.inputs.size(); ++i) eten::save(pca::pca_transform(model, eten::load(a.inputs[i])), a.outputs[i]);
}

// --- augment-preview ------------------------------------------------------------

struct PreviewArgs {
  std::string input, out_dir, config;
  std::size_t count = 8;
  std::optional<std::uint64_t> seed;
};

void run_preview(const PreviewArgs& a) {
  config::RunConfig cfg = load_run_config(a.config);
  cfg.seed = resolve_seed(cfg.seed, a.seed);
  cfg.augment.rng_seed = cfg.seed;
  cfg.augment.validate();
  print_config("augment-preview", config::serialize(cfg) + "count = " + std::to_string(a.count) + "\n");
  const Image img = to_rgb(load_ppm_pgm(a.input));
  fs::create_directories(a.out_dir);
  for (std::size_t v = 0; v < a.count; ++v) {
    Rng rng = augment::view_rng(cfg.augment, 0, 0, 0, v);
    const Image view = augment::denormalize(augment::augment_view(img, cfg.augment, rng), cfg.augment.image_mean,
                                            cfg.augment.image_std);
    char name[32];
    std::snprintf(name, sizeof name, "view_%03zu.ppm", v);
    save_ppm_pgm(view, fs::path(a.out_dir) / name);
  }
  std::cerr << "wrote " << a.count << " views to " << a.out_dir << "\n";
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kConfig: return kExitConfig;
    case ErrorCategory::kData: return kExitData;
    case ErrorCategory::kNumeric: return kExitNumeric;
    case ErrorCategory::kContract: return kExitInternal;
  }
  return kExitInternal;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"episodica: label-free contrastive pre-training and few-shot episodic evaluation"};
  app.require_subcommand(1);
  app.footer("EPISODICA_SEED overrides the config seed (an explicit --seed wins).\n"
             "Exit codes: 0 success, 2 config error, 3 data error, 4 numeric error.\n\n" +
             config::help_text());

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic grating dataset with a manifest");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--n-classes", synth.spec.n_classes, "Number of classes")->capture_default_str();
  synth_cmd->add_option("--n-test-classes", synth.spec.n_test_classes, "Classes held out for the test split")
      ->capture_default_str();
  synth_cmd->add_option("--per-class", synth.spec.per_class, "Images per class")->capture_default_str();
  synth_cmd->add_option("--image-size", synth.spec.image_size, "Side length")->capture_default_str();
  synth_cmd->add_option("--noise", synth.spec.noise, "Gaussian pixel noise std")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "Seed");

  PretrainArgs pre;
  auto* pre_cmd = app.add_subcommand("pretrain", "Contrastive pre-training on the train split");
  pre_cmd->add_option("--config", pre.config, "Config file (key = value)");
  pre_cmd->add_option("--manifest", pre.manifest, "Dataset manifest CSV")->required();
  pre_cmd->add_option("--out", pre.out, "Checkpoint directory")->required();
  pre_cmd->add_option("--seed", pre.seed, "Seed");
  pre_cmd->add_option("--epochs", pre.epochs, "Override the configured epoch count");

  EmbedArgs emb;
  auto* emb_cmd = app.add_subcommand("embed", "Encode a split with a checkpoint");
  emb_cmd->add_option("--checkpoint", emb.checkpoint, "Checkpoint directory")->required();
  emb_cmd->add_option("--manifest", emb.manifest, "Dataset manifest CSV")->required();
  emb_cmd->add_option("--split", emb.split, "train | val | test")->capture_default_str();
  emb_cmd->add_option("--embeddings", emb.embeddings, "Output ETEN1 file")->required();
  emb_cmd->add_option("--labels", emb.labels, "Output label CSV")->required();
  emb_cmd->add_option("--stage", emb.stage, "backbone | projection")->capture_default_str();

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "Episodic N-way K-shot evaluation of embeddings");
  ev_cmd->add_option("--embeddings", ev.embeddings, "ETEN1 embeddings [n x d]")->required();
  ev_cmd->add_option("--labels", ev.labels, "Label CSV (index,class_id)")->required();
  ev_cmd->add_option("--config", ev.config, "Config file supplying defaults");
  ev_cmd->add_option("--n-way", ev.n_way, "Classes per task");
  ev_cmd->add_option("--k-shot", ev.k_shot, "Keys per class");
  ev_cmd->add_option("--n-query", ev.n_query, "Queries per class");
  ev_cmd->add_option("--n-tasks", ev.n_tasks, "Number of tasks");
  ev_cmd->add_option("--classifier", ev.classifier, "1nn | attn | 1nn-centroid | attn-centroid");
  ev_cmd->add_option("--seed", ev.seed, "Seed");
  ev_cmd->add_option("--workers", ev.workers, "Evaluation threads");
  ev_cmd->add_flag("--l2-normalize", ev.l2_normalize, "L2-normalize features first");
  ev_cmd->add_flag("--per-task", ev.per_task, "Include per-task accuracies in the JSON report");
  ev_cmd->add_option("--report", ev.report, "Also write the JSON report to this file");

  auto* pca_cmd = app.add_subcommand("pca", "Fit or apply a PCA reduction of embeddings");
  pca_cmd->require_subcommand(1);
  PcaFitArgs pfit;
  auto* pfit_cmd = pca_cmd->add_subcommand("fit", "Fit a PCA model");
  pfit_cmd->add_option("--input", pfit.input, "ETEN1 embeddings [n x d]")->required();
  pfit_cmd->add_option("--k", pfit.k, "Components to keep")->required();
  pfit_cmd->add_option("--model", pfit.model_dir, "Output model directory")->required();
  PcaTransformArgs ptr;
  auto* ptr_cmd = pca_cmd->add_subcommand("transform", "Project embeddings with a fitted model");
  ptr_cmd->add_option("--model", ptr.model_dir, "Model directory")->required();
  ptr_cmd->add_option("--input", ptr.inputs, "ETEN1 input (repeatable)")->required();
  ptr_cmd->add_option("--output", ptr.outputs, "ETEN1 output, one per input")->required();

  PreviewArgs prev;
  auto* prev_cmd = app.add_subcommand("augment-preview", "Write augmented views of one image");
  prev_cmd->add_option("--input", prev.input, "PPM or PGM image")->required();
  prev_cmd->add_option("--out-dir", prev.out_dir, "Output directory")->required();
  prev_cmd->add_option("--count", prev.count, "Number of views")->capture_default_str();
  prev_cmd->add_option("--config", prev.config, "Config file (augmentation keys)");
  prev_cmd->add_option("--seed", prev.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*synth_cmd) run_synth(synth);
    else if (*pre_cmd) run_pretrain(pre);
    else if (*emb_cmd) run_embed(emb);
    else if (*ev_cmd) run_eval(ev);
    else if (*pfit_cmd) run_pca_fit(pfit);
    else if (*ptr_cmd) run_pca_transform(ptr);
    else if (*prev_cmd) run_preview(prev);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return 0;
}

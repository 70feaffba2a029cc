#include "episodica/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "episodica/error.hpp"

namespace episodica::config {

std::string to_string(Variant v) { return v == Variant::kSimclr ? "simclr" : "moco"; }

Variant parse_variant(const std::string& text) {
  if (text == "simclr") return Variant::kSimclr;
  if (text == "moco") return Variant::kMoco;
  throw ConfigError("unknown variant '" + text + "' (expected simclr or moco)");
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double to_double(const std::string& s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw ConfigError("'" + s + "' is not a number");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw ConfigError("'" + s + "' is not a nonnegative integer");
  return v;
}

bool to_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError("'" + s + "' is not a boolean (true/false)");
}

std::vector<double> to_doubles(const std::string& s) {
  std::vector<double> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    const auto b = item.find_first_not_of(' '), e = item.find_last_not_of(' ');
    if (b == std::string::npos) throw ConfigError("empty entry in list '" + s + "'");
    out.push_back(to_double(item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

std::string fmt_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt_double(v[i]);
  return out;
}

struct Field {
  const char* key;
  const char* help;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
  using episodica::model::layers_to_string;
  using episodica::model::parse_layers;
  static const std::vector<Field> f = {
      {"variant", "simclr | moco", [](RunConfig& c, const std::string& v) { c.variant = parse_variant(v); },
       [](const RunConfig& c) { return to_string(c.variant); }},
      {"seed", "master seed (EPISODICA_SEED overrides)", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.seed); }},
      {"epochs", "pre-training epochs", [](RunConfig& c, const std::string& v) { c.epochs = to_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.epochs); }},
      {"batch_size", "images per minibatch", [](RunConfig& c, const std::string& v) { c.batch_size = to_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.batch_size); }},
      {"image_size", "augmented view side length",
       [](RunConfig& c, const std::string& v) { c.augment.image_size = to_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.augment.image_size); }},
      {"jitter_strength", "color jitter strength s",
       [](RunConfig& c, const std::string& v) { c.augment.jitter_strength = to_double(v); },
       [](const RunConfig& c) { return fmt_double(c.augment.jitter_strength); }},
      {"image_mean", "per-channel mean, comma separated",
       [](RunConfig& c, const std::string& v) { c.augment.image_mean = to_doubles(v); },
       [](const RunConfig& c) { return fmt_doubles(c.augment.image_mean); }},
      {"image_std", "per-channel std, comma separated",
       [](RunConfig& c, const std::string& v) { c.augment.image_std = to_doubles(v); },
       [](const RunConfig& c) { return fmt_doubles(c.augment.image_std); }},
      {"transform_pair", "crop+distort | crop+blur | distort+blur",
       [](RunConfig& c, const std::string& v) { c.augment.transform_pair = augment::parse_transform_pair(v); },
       [](const RunConfig& c) { return augment::to_string(c.augment.transform_pair); }},
      {"temperature", "loss temperature (default 0.5 simclr, 0.2 moco)",
       [](RunConfig& c, const std::string& v) { c.loss.temperature = to_double(v); },
       [](const RunConfig& c) { return fmt_double(c.loss.temperature); }},
      {"similarity", "cosine | dot (default cosine simclr, dot moco)",
       [](RunConfig& c, const std::string& v) { c.loss.similarity = contrastive::parse_similarity(v); },
       [](const RunConfig& c) { return contrastive::to_string(c.loss.similarity); }},
      {"queue_capacity", "moco negative queue size",
       [](RunConfig& c, const std::string& v) { c.queue_capacity = to_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.queue_capacity); }},
      {"key_momentum", "moco key-encoder momentum m",
       [](RunConfig& c, const std::string& v) { c.key_momentum = to_double(v); },
       [](const RunConfig& c) { return fmt_double(c.key_momentum); }},
      {"backbone", "layer list separated by ';'",
       [](RunConfig& c, const std::string& v) { c.backbone = parse_layers(v); },
       [](const RunConfig& c) { return layers_to_string(c.backbone); }},
      {"projection_head", "layer list or none",
       [](RunConfig& c, const std::string& v) { c.projection_head = parse_layers(v); },
       [](const RunConfig& c) { return layers_to_string(c.projection_head); }},
      {"lr", "learning rate", [](RunConfig& c, const std::string& v) { c.optim.lr = to_double(v); },
       [](const RunConfig& c) { return fmt_double(c.optim.lr); }},
      {"momentum", "SGD momentum", [](RunConfig& c, const std::string& v) { c.optim.momentum = to_double(v); },
       [](const RunConfig& c) { return fmt_double(c.optim.momentum); }},
      {"weight_decay", "L2 weight decay",
       [](RunConfig& c, const std::string& v) { c.optim.weight_decay = to_double(v); },
       [](const RunConfig& c) { return fmt_double(c.optim.weight_decay); }},
      {"nesterov", "true | false", [](RunConfig& c, const std::string& v) { c.optim.nesterov = to_bool(v); },
       [](const RunConfig& c) { return std::string(c.optim.nesterov ? "true" : "false"); }},
      {"lr_schedule", "constant | cosine",
       [](RunConfig& c, const std::string& v) {
         if (v == "constant") c.optim.schedule = LrSchedule::kConstant;
         else if (v == "cosine") c.optim.schedule = LrSchedule::kCosine;
         else throw ConfigError("unknown lr_schedule '" + v + "'");
       },
       [](const RunConfig& c) { return std::string(c.optim.schedule == LrSchedule::kConstant ? "constant" : "cosine"); }},
      {"n_way", "classes per task", [](RunConfig& c, const std::string& v) { c.task.n_way = to_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.task.n_way); }},
      {"k_shot", "keys per class", [](RunConfig& c, const std::string& v) { c.task.k_shot = to_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.task.k_shot); }},
      {"n_query", "queries per class", [](RunConfig& c, const std::string& v) { c.task.n_query = to_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.task.n_query); }},
      {"n_tasks", "evaluation tasks", [](RunConfig& c, const std::string& v) { c.task.n_tasks = to_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.task.n_tasks); }},
      {"classifier", "1nn | attn | 1nn-centroid | attn-centroid",
       [](RunConfig& c, const std::string& v) { c.classifier = episodic::parse_classifier(v); },
       [](const RunConfig& c) { return episodic::to_string(c.classifier); }},
      {"eval_l2_normalize", "L2-normalize features before evaluation",
       [](RunConfig& c, const std::string& v) { c.eval_l2_normalize = to_bool(v); },
       [](const RunConfig& c) { return std::string(c.eval_l2_normalize ? "true" : "false"); }},
      {"workers", "evaluation threads", [](RunConfig& c, const std::string& v) { c.workers = to_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.workers); }},
  };
  return f;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

RunConfig RunConfig::defaults(Variant variant) {
  RunConfig c;
  c.variant = variant;
  c.loss.temperature = variant == Variant::kSimclr ? contrastive::kSimclrTemperature : contrastive::kMocoTemperature;
  c.loss.similarity = variant == Variant::kSimclr ? contrastive::Similarity::kCosine : contrastive::Similarity::kDot;
  const std::size_t widths[] = {16, 32, 64};
  const model::EncoderArch a = model::conv_arch(3, c.augment.image_size, widths, 32);
  c.backbone = a.backbone;
  c.projection_head = a.head;
  // the moco dot product expects unit-norm queries and keys
  if (variant == Variant::kMoco) c.projection_head.push_back(model::LayerSpec::l2_normalize_output());
  return c;
}

model::EncoderArch RunConfig::arch() const {
  model::EncoderArch a;
  a.input = {3, augment.image_size, augment.image_size};
  a.backbone = backbone;
  a.head = projection_head;
  model::validate(a);
  return a;
}

void RunConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  augment.validate();
  loss.validate();
  if (queue_capacity == 0) throw ConfigError("queue_capacity must be positive");
  if (!(key_momentum >= 0.0 && key_momentum <= 1.0)) throw ConfigError("key_momentum must lie in [0, 1]");
  if (!(optim.lr > 0.0) || !(optim.momentum >= 0.0) || !(optim.weight_decay >= 0.0))
    throw ConfigError("lr must be positive; momentum and weight_decay nonnegative");
  task.validate();
  if (workers == 0) throw ConfigError("workers must be positive");
  (void)arch();
}

RunConfig parse_config(const std::string& text) {
  struct Line {
    std::size_t number;
    std::string key, value;
  };
  std::vector<Line> lines;
  std::istringstream is(text);
  std::string raw;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(is, raw)) {
    ++lineno;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    Line l{lineno, trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
    if (seen.count(l.key))
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + l.key + "' (first on line " +
                        std::to_string(seen[l.key]) + ")");
    seen[l.key] = lineno;
    lines.push_back(std::move(l));
  }
  // the variant decides the remaining defaults, so it is applied first
  Variant variant = Variant::kSimclr;
  for (const auto& l : lines)
    if (l.key == "variant") {
      try {
        variant = parse_variant(l.value);
      } catch (const ConfigError& e) {
        throw ConfigError("config line " + std::to_string(l.number) + ": " + e.what());
      }
    }
  RunConfig cfg = RunConfig::defaults(variant);
  for (const auto& l : lines) {
    const auto& fs = fields();
    auto it = std::find_if(fs.begin(), fs.end(), [&](const Field& f) { return l.key == f.key; });
    if (it == fs.end()) throw ConfigError("config line " + std::to_string(l.number) + ": unknown key '" + l.key + "'");
    try {
      it->set(cfg, l.value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(l.number) + " (" + l.key + "): " + e.what());
    }
  }
  return cfg;
}

std::string serialize(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

std::string help_text() {
  const RunConfig simclr = RunConfig::defaults(Variant::kSimclr);
  std::string out = "Config keys (key = value, '#' starts a comment):\n";
  for (const auto& f : fields()) out += "  " + std::string(f.key) + " = " + f.get(simclr) + "\n      " + f.help + "\n";
  return out;
}

}  // namespace episodica::config

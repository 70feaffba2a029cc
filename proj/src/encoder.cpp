#include "episodica/encoder.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "episodica/error.hpp"
#include "episodica/eten.hpp"
#include "episodica/rng.hpp"

namespace episodica::model {

namespace fs = std::filesystem;

std::string to_string(const LayerSpec& layer) {
  switch (layer.kind) {
    case LayerKind::kDense: return "dense " + std::to_string(layer.in) + " " + std::to_string(layer.out);
    case LayerKind::kConv3x3:
      return "conv3x3 " + std::to_string(layer.in) + " " + std::to_string(layer.out) + " " +
             std::to_string(layer.stride);
    case LayerKind::kRelu: return "relu";
    case LayerKind::kGlobalAvgPool: return "global_avg_pool";
    case LayerKind::kL2Normalize: return "l2_normalize_output";
  }
  return "?";
}

LayerSpec parse_layer(const std::string& text) {
  std::istringstream is(text);
  std::string name;
  is >> name;
  std::vector<long long> args;
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(tok, &used);
      if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
      args.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("layer '" + text + "': argument '" + tok + "' is not a positive integer");
    }
  }
  auto expect = [&](std::size_t n) {
    if (args.size() != n)
      throw ConfigError("layer '" + text + "': expected " + std::to_string(n) + " arguments");
  };
  auto u = [&](std::size_t i) { return static_cast<std::size_t>(args[i]); };
  if (name == "dense") {
    expect(2);
    return LayerSpec::dense(u(0), u(1));
  }
  if (name == "conv3x3") {
    expect(3);
    return LayerSpec::conv3x3(u(0), u(1), u(2));
  }
  expect(0);
  if (name == "relu") return LayerSpec::relu();
  if (name == "global_avg_pool") return LayerSpec::global_avg_pool();
  if (name == "l2_normalize_output") return LayerSpec::l2_normalize_output();
  throw ConfigError("unknown layer kind '" + name + "'");
}

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}
}  // namespace

std::vector<LayerSpec> parse_layers(const std::string& text, char sep) {
  std::vector<LayerSpec> out;
  const std::string t = trim(text);
  if (t.empty() || t == "none") return out;
  std::istringstream is(t);
  std::string item;
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty layer entry in '" + text + "'");
    out.push_back(parse_layer(item));
  }
  return out;
}

std::string layers_to_string(std::span<const LayerSpec> layers, const char* sep) {
  if (layers.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += sep;
    out += to_string(layers[i]);
  }
  return out;
}

Shape infer_output(const Shape& input, std::span<const LayerSpec> layers) {
  Shape s = input;
  if (s.empty() || (s.size() != 1 && s.size() != 3))
    throw ConfigError("arch: input shape must be {D} or {C,H,W}, got " + shape_to_string(s));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::string where = "arch layer " + std::to_string(i) + " (" + to_string(l) + "): ";
    switch (l.kind) {
      case LayerKind::kDense:
        if (s.size() != 1 || s[0] != l.in)
          throw ConfigError(where + "expects a " + std::to_string(l.in) + "-vector, receives " + shape_to_string(s));
        s = {l.out};
        break;
      case LayerKind::kConv3x3:
        if (s.size() != 3 || s[0] != l.in)
          throw ConfigError(where + "expects " + std::to_string(l.in) + " channels, receives " + shape_to_string(s));
        s = {l.out, (s[1] - 1) / l.stride + 1, (s[2] - 1) / l.stride + 1};
        break;
      case LayerKind::kGlobalAvgPool:
        if (s.size() != 3) throw ConfigError(where + "needs a feature map, receives " + shape_to_string(s));
        s = {s[0]};
        break;
      case LayerKind::kL2Normalize:
        if (s.size() != 1) throw ConfigError(where + "needs a vector, receives " + shape_to_string(s));
        break;
      case LayerKind::kRelu: break;
    }
  }
  return s;
}

void validate(const EncoderArch& arch) {
  const Shape emb = infer_output(arch.input, arch.backbone);
  if (emb.size() != 1) throw ConfigError("arch: backbone must end in a vector, got " + shape_to_string(emb));
  const Shape proj = infer_output(emb, arch.head);
  if (proj.size() != 1) throw ConfigError("arch: projection head must end in a vector");
}

EncoderArch conv_arch(std::size_t channels, std::size_t image_size, std::span<const std::size_t> widths,
                      std::size_t projection_dim) {
  EncoderArch a;
  a.input = {channels, image_size, image_size};
  std::size_t c = channels;
  for (std::size_t w : widths) {
    a.backbone.push_back(LayerSpec::conv3x3(c, w, 2));
    a.backbone.push_back(LayerSpec::relu());
    c = w;
  }
  a.backbone.push_back(LayerSpec::global_avg_pool());
  if (projection_dim > 0) {
    a.head = {LayerSpec::dense(c, c), LayerSpec::relu(), LayerSpec::dense(c, projection_dim)};
  }
  validate(a);
  return a;
}

std::size_t EncoderModel::embed_dim() const { return infer_output(arch.input, arch.backbone).at(0); }

std::size_t EncoderModel::projection_dim() const {
  return infer_output(infer_output(arch.input, arch.backbone), arch.head).at(0);
}

namespace {

std::string param_name(const char* section, std::size_t index, const char* what) {
  return std::string(section) + "." + std::to_string(index) + "." + what;
}

void init_section(const char* section, std::span<const LayerSpec> layers, ParamMap& params, Rng& rng) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    Shape wshape;
    std::size_t fan_in = 0;
    if (l.kind == LayerKind::kDense) {
      wshape = {l.in, l.out};
      fan_in = l.in;
    } else if (l.kind == LayerKind::kConv3x3) {
      wshape = {l.out, l.in, 3, 3};
      fan_in = l.in * 9;
    } else {
      continue;
    }
    Tensor w(wshape);
    const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (float& v : w.data()) v = static_cast<float>(std * rng.normal());
    params.emplace(param_name(section, i, "weight"), std::move(w));
    params.emplace(param_name(section, i, "bias"), Tensor({l.out}));
  }
}

ad::Var run_section(const char* section, std::span<const LayerSpec> layers, const BoundParams& params, ad::Var x) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerKind::kDense:
        x = ad::add_row_bias(ad::matmul(x, params.at(param_name(section, i, "weight"))),
                             params.at(param_name(section, i, "bias")));
        break;
      case LayerKind::kConv3x3:
        x = ad::conv3x3(x, params.at(param_name(section, i, "weight")), params.at(param_name(section, i, "bias")),
                        l.stride);
        break;
      case LayerKind::kRelu: x = ad::relu(x); break;
      case LayerKind::kGlobalAvgPool: x = ad::global_avg_pool(x); break;
      case LayerKind::kL2Normalize: x = ad::l2_normalize(x); break;
    }
  }
  return x;
}

}  // namespace

EncoderModel init_encoder(const EncoderArch& arch, std::uint64_t seed) {
  validate(arch);
  EncoderModel m;
  m.arch = arch;
  Rng rng({seed, 0x656e636fULL});
  init_section("backbone", arch.backbone, m.params, rng);
  init_section("head", arch.head, m.params, rng);
  return m;
}

BoundParams bind_params(ad::Tape& tape, const EncoderModel& model, bool trainable) {
  BoundParams out;
  for (const auto& [name, value] : model.params) out.emplace(name, trainable ? tape.leaf(value) : tape.constant(value));
  return out;
}

ad::Var forward(const EncoderModel& model, const BoundParams& params, ad::Var batch, Stage stage) {
  const Shape& s = batch.shape();
  if (s.size() != model.arch.input.size() + 1 || !std::equal(model.arch.input.begin(), model.arch.input.end(), s.begin() + 1))
    throw DimensionError("forward: batch shape " + shape_to_string(s) + " does not match encoder input " +
                         shape_to_string(model.arch.input));
  ad::Var x = run_section("backbone", model.arch.backbone, params, batch);
  if (stage == Stage::kProjection) x = run_section("head", model.arch.head, params, x);
  return x;
}

Tensor forward(const EncoderModel& model, const Tensor& batch, Stage stage, std::size_t chunk) {
  if (batch.rank() == 0) throw DimensionError("forward: batch must have a leading batch axis");
  const std::size_t n = batch.dim(0);
  Tensor out;
  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    ad::Tape tape;
    const BoundParams params = bind_params(tape, model, false);
    ad::Var x = tape.constant(begin == 0 && end == n ? batch : slice_rows(batch, begin, end));
    Tensor part = forward(model, params, x, stage).value();
    out = begin == 0 ? std::move(part) : concat_rows(out, part);
  }
  return out;
}

bool congruent(const ParamMap& a, const ParamMap& b) {
  if (a.size() != b.size()) return false;
  for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib)
    if (ia->first != ib->first || ia->second.shape() != ib->second.shape()) return false;
  return true;
}

std::string arch_manifest(const EncoderArch& arch) {
  std::ostringstream os;
  os << "input";
  for (auto d : arch.input) os << ' ' << d;
  os << "\n[backbone]\n";
  for (const auto& l : arch.backbone) os << to_string(l) << '\n';
  os << "[head]\n";
  for (const auto& l : arch.head) os << to_string(l) << '\n';
  return os.str();
}

EncoderArch parse_arch_manifest(const std::string& text) {
  EncoderArch arch;
  std::istringstream is(text);
  std::string line;
  enum { kNone, kBackbone, kHead } section = kNone;
  bool have_input = false;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    try {
      if (line == "[backbone]") {
        section = kBackbone;
      } else if (line == "[head]") {
        section = kHead;
      } else if (line.rfind("input", 0) == 0 && section == kNone) {
        std::istringstream ls(line.substr(5));
        std::size_t d;
        while (ls >> d) arch.input.push_back(d);
        have_input = true;
      } else if (section == kBackbone) {
        arch.backbone.push_back(parse_layer(line));
      } else if (section == kHead) {
        arch.head.push_back(parse_layer(line));
      } else {
        throw ConfigError("unexpected line '" + line + "'");
      }
    } catch (const ConfigError& e) {
      throw ConfigError("arch manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!have_input) throw ConfigError("arch manifest: missing input line");
  validate(arch);
  return arch;
}

void save_encoder(const EncoderModel& model, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream os(dir / "arch.txt", std::ios::trunc);
  if (!os) throw DataError("cannot write " + (dir / "arch.txt").string());
  os << arch_manifest(model.arch);
  os.close();
  for (const auto& [name, value] : model.params) eten::save(value, dir / (name + ".eten"));
}

EncoderModel load_encoder(const fs::path& dir) {
  std::ifstream is(dir / "arch.txt");
  if (!is) throw DataError("checkpoint " + dir.string() + " has no arch.txt");
  std::stringstream ss;
  ss << is.rdbuf();
  // initialize to learn the expected names and shapes, then overwrite
  EncoderModel m = init_encoder(parse_arch_manifest(ss.str()), 0);
  for (auto& [name, value] : m.params) {
    Tensor loaded = eten::load(dir / (name + ".eten"));
    if (loaded.shape() != value.shape())
      throw DataError("checkpoint parameter " + name + " has shape " + shape_to_string(loaded.shape()) + ", expected " +
                      shape_to_string(value.shape()));
    value = std::move(loaded);
  }
  return m;
}

}  // namespace episodica::model

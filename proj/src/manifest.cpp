#include "episodica/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "episodica/error.hpp"

namespace episodica::data {

namespace fs = std::filesystem;

std::string to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw DataError("unknown split '" + text + "' (expected train, val or test)");
}

DatasetManifest DatasetManifest::parse(const std::string& text, const fs::path& root) {
  DatasetManifest m;
  m.root = root;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "path,class_id,split") throw DataError("manifest: expected header 'path,class_id,split'");
      header = true;
      continue;
    }
    std::istringstream ls(line);
    std::string path, cls, split;
    if (!std::getline(ls, path, ',') || !std::getline(ls, cls, ',') || !std::getline(ls, split) || path.empty())
      throw DataError("manifest line " + std::to_string(lineno) + ": expected 3 fields");
    ManifestEntry e;
    e.path = path;
    try {
      std::size_t used = 0;
      e.class_id = std::stoi(cls, &used);
      if (used != cls.size()) throw std::invalid_argument(cls);
    } catch (const std::exception&) {
      throw DataError("manifest line " + std::to_string(lineno) + ": bad class id '" + cls + "'");
    }
    try {
      e.split = parse_split(split);
    } catch (const DataError& err) {
      throw DataError("manifest line " + std::to_string(lineno) + ": " + err.what());
    }
    m.entries.push_back(std::move(e));
  }
  if (!header) throw DataError("manifest: empty file");
  return m;
}

DatasetManifest DatasetManifest::load(const fs::path& csv) {
  std::ifstream is(csv);
  if (!is) throw DataError("cannot open manifest " + csv.string());
  std::stringstream ss;
  ss << is.rdbuf();
  DatasetManifest m = parse(ss.str(), csv.parent_path());
  m.validate();
  return m;
}

std::string DatasetManifest::to_csv() const {
  std::ostringstream os;
  os << "path,class_id,split\n";
  for (const auto& e : entries) os << e.path << ',' << e.class_id << ',' << to_string(e.split) << '\n';
  return os.str();
}

void DatasetManifest::save(const fs::path& csv) const {
  std::ofstream os(csv, std::ios::trunc);
  if (!os) throw DataError("cannot write manifest " + csv.string());
  os << to_csv();
}

void DatasetManifest::validate() const {
  std::set<int> train, test;
  for (const auto& e : entries) {
    if (e.split == Split::kTrain) train.insert(e.class_id);
    if (e.split == Split::kTest) test.insert(e.class_id);
    if (!fs::exists(root / e.path)) throw DataError("manifest references missing file " + (root / e.path).string());
  }
  for (int c : test)
    if (train.count(c))
      throw DataError("manifest: class " + std::to_string(c) + " appears in both the train and test splits");
}

std::vector<ManifestEntry> DatasetManifest::select(Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e);
  return out;
}

LoadedSplit load_split(const DatasetManifest& manifest, Split split) {
  LoadedSplit out;
  for (const auto& e : manifest.select(split)) {
    out.images.push_back(to_rgb(load_ppm_pgm(manifest.root / e.path)));
    out.labels.push_back(e.class_id);
  }
  if (out.images.empty()) throw DataError("manifest has no '" + to_string(split) + "' entries");
  return out;
}

}  // namespace episodica::data

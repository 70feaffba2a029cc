#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "episodica/image.hpp"

namespace episodica::data {

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split split);
Split parse_split(const std::string& text);

struct ManifestEntry {
  std::string path;  // relative to the manifest root
  int class_id = 0;
  Split split = Split::kTrain;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

// CSV with header "path,class_id,split"; paths are relative to the CSV's directory.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;

  /// Parses and validates. Throws DataError on malformed rows, missing files or
  /// class ids shared between the train and test splits.
  static DatasetManifest load(const std::filesystem::path& csv);
  static DatasetManifest parse(const std::string& text, const std::filesystem::path& root);
  std::string to_csv() const;
  void save(const std::filesystem::path& csv) const;

  /// Split disjointness and file existence.
  void validate() const;
  std::vector<ManifestEntry> select(Split split) const;
};

struct LoadedSplit {
  std::vector<Image> images;  // promoted to 3 channels
  std::vector<int> labels;
};

LoadedSplit load_split(const DatasetManifest& manifest, Split split);

}  // namespace episodica::data

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "missnet/density_gmm.hpp"

namespace missnet {

// Per-column affine transform already applied to the values:
// stored = (raw - shift) / scale.
struct NormInfo {
  bool applied = false;
  std::string scheme;  // "minmax01" | "zscore" | "fixed"
  std::vector<double> shift;
  std::vector<double> scale;
};

class DatasetWithMask {
 public:
  int n = 0;
  int d = 0;
  std::vector<double> values;        // n*d, row-major
  std::vector<std::uint8_t> mask;    // n*d, true = missing
  std::vector<int> labels;           // empty when unlabeled
  std::vector<std::string> label_names;  // class id -> original token
  NormInfo norm;

  bool has_labels() const { return !labels.empty(); }
  int n_classes() const { return static_cast<int>(label_names.size()); }

  double value(int i, int j) const { return values[static_cast<std::size_t>(i) * d + j]; }
  bool is_missing(int i, int j) const { return mask[static_cast<std::size_t>(i) * d + j] != 0; }

  MissingPoint row_point(int i) const;
  double missing_fraction() const;

  void validate() const;

  nlohmann::ordered_json to_json() const;
  static DatasetWithMask from_json(const nlohmann::json& j);
};

struct MaskPolicy {
  enum class Kind { AsIs, Mcar, Patch };
  Kind kind = Kind::AsIs;
  double p = 0.0;          // mcar
  int patch_h = 0;         // patch
  int patch_w = 0;
  int grid_h = 0;
  int grid_w = 0;
  std::uint64_t seed = 0;
};

struct CsvOptions {
  char delimiter = ',';
  std::vector<std::string> missing_tokens = {"?", "", "NA", "NaN"};
  std::optional<int> label_column;  // index after dropping columns; negative counts from end
  std::vector<int> drop_columns;    // raw column indices to ignore (ids etc.)
  bool has_header = false;
};

// Parses a delimited text file; cells matching a missing token get
// mask=true; the label column, when given, is integer-encoded by first
// appearance. Throws ParseError with row/column location.
DatasetWithMask load_csv(const std::string& path, const CsvOptions& opts = {});

// Masks cells on top of the existing mask. Never unmasks.
DatasetWithMask apply_mask(const DatasetWithMask& data, const MaskPolicy& policy);

// Per-column normalization computed over observed entries only.
// scheme: "minmax01" | "zscore".
DatasetWithMask normalize(const DatasetWithMask& data, const std::string& scheme);
// Inverts the stored transform.
DatasetWithMask denormalize(const DatasetWithMask& data);

struct FoldSplit {
  std::vector<int> train_idx;
  std::vector<int> test_idx;
};

// Each row appears in exactly one test fold. Stratified splits keep
// per-class counts within +-1 across folds.
std::vector<FoldSplit> kfold_split(const DatasetWithMask& data, int folds, bool stratified,
                                   std::uint64_t seed);

DatasetWithMask subset(const DatasetWithMask& data, std::span<const int> rows);

// IDX (big-endian) image/label readers; pixel values divided by 255 and the
// transform recorded in norm. labels_path may be empty.
DatasetWithMask load_idx(const std::string& images_path, const std::string& labels_path = "");

void save_dataset_json(const DatasetWithMask& data, const std::string& path);
DatasetWithMask load_dataset_json(const std::string& path);

}  // namespace missnet

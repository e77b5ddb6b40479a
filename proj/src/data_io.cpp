#include "missnet/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "missnet/common.hpp"

namespace missnet {

MissingPoint DatasetWithMask::row_point(int i) const {
  MissingPoint p;
  const auto off = static_cast<std::size_t>(i) * d;
  p.values.assign(values.begin() + off, values.begin() + off + d);
  p.mask.assign(mask.begin() + off, mask.begin() + off + d);
  return p;
}

double DatasetWithMask::missing_fraction() const {
  if (mask.empty()) return 0.0;
  std::size_t miss = 0;
  for (auto m : mask) miss += (m != 0);
  return static_cast<double>(miss) / static_cast<double>(mask.size());
}

void DatasetWithMask::validate() const {
  if (n < 0 || d < 0) throw std::invalid_argument("dataset: negative shape");
  const auto total = static_cast<std::size_t>(n) * d;
  if (values.size() != total || mask.size() != total)
    throw std::invalid_argument("dataset: shape mismatch between values and mask");
  if (!labels.empty() && static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("dataset: label count mismatch");
  for (std::size_t i = 0; i < total; ++i) {
    if (!mask[i] && !std::isfinite(values[i]))
      throw std::invalid_argument("dataset: non-finite observed value");
  }
  for (int lab : labels) {
    if (lab < 0 || lab >= n_classes()) throw std::invalid_argument("dataset: label out of range");
  }
  if (norm.applied) {
    for (double s : norm.scale) {
      if (!(s > 0.0)) throw std::invalid_argument("dataset: non-positive norm scale");
    }
  }
}

nlohmann::ordered_json DatasetWithMask::to_json() const {
  nlohmann::ordered_json j;
  j["n"] = n;
  j["d"] = d;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  nlohmann::ordered_json mrows = nlohmann::ordered_json::array();
  for (int i = 0; i < n; ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    nlohmann::ordered_json mrow = nlohmann::ordered_json::array();
    for (int c = 0; c < d; ++c) {
      // Placeholder for masked cells so the file has no reliance on them.
      row.push_back(is_missing(i, c) ? 0.0 : value(i, c));
      mrow.push_back(is_missing(i, c));
    }
    rows.push_back(std::move(row));
    mrows.push_back(std::move(mrow));
  }
  j["values"] = std::move(rows);
  j["mask"] = std::move(mrows);
  if (!labels.empty()) {
    j["labels"] = labels;
    j["label_names"] = label_names;
  }
  if (norm.applied) {
    j["norm"] = {{"scheme", norm.scheme}, {"shift", norm.shift}, {"scale", norm.scale}};
  }
  return j;
}

DatasetWithMask DatasetWithMask::from_json(const nlohmann::json& j) {
  DatasetWithMask out;
  out.n = j.at("n").get<int>();
  out.d = j.at("d").get<int>();
  out.values.reserve(static_cast<std::size_t>(out.n) * out.d);
  out.mask.reserve(static_cast<std::size_t>(out.n) * out.d);
  for (const auto& row : j.at("values")) {
    for (const auto& v : row) out.values.push_back(v.get<double>());
  }
  for (const auto& row : j.at("mask")) {
    for (const auto& v : row) out.mask.push_back(v.get<bool>() ? 1 : 0);
  }
  if (j.contains("labels")) {
    out.labels = j.at("labels").get<std::vector<int>>();
    out.label_names = j.at("label_names").get<std::vector<std::string>>();
  }
  if (j.contains("norm")) {
    out.norm.applied = true;
    out.norm.scheme = j.at("norm").at("scheme").get<std::string>();
    out.norm.shift = j.at("norm").at("shift").get<std::vector<double>>();
    out.norm.scale = j.at("norm").at("scale").get<std::vector<double>>();
  }
  out.validate();
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  cells.push_back(cur);
  return cells;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  auto e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

}  // namespace

DatasetWithMask load_csv(const std::string& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);

  std::vector<std::vector<std::string>> table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 && opts.has_header) continue;
    if (trim(line).empty()) continue;
    table.push_back(split_line(line, opts.delimiter));
  }
  if (table.empty()) throw ParseError("empty dataset: " + path);

  const std::size_t raw_cols = table[0].size();
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (table[r].size() != raw_cols)
      throw ParseError(path + ": ragged row " + std::to_string(r + 1) + " (" +
                       std::to_string(table[r].size()) + " cells, expected " +
                       std::to_string(raw_cols) + ")");
  }

  std::vector<bool> dropped(raw_cols, false);
  for (int c : opts.drop_columns) {
    const int idx = c < 0 ? static_cast<int>(raw_cols) + c : c;
    if (idx < 0 || idx >= static_cast<int>(raw_cols))
      throw ParseError(path + ": drop column " + std::to_string(c) + " out of range");
    dropped[static_cast<std::size_t>(idx)] = true;
  }
  std::vector<int> kept;
  for (std::size_t c = 0; c < raw_cols; ++c) {
    if (!dropped[c]) kept.push_back(static_cast<int>(c));
  }

  int label_kept_idx = -1;
  if (opts.label_column) {
    int lc = *opts.label_column;
    if (lc < 0) lc += static_cast<int>(kept.size());
    if (lc < 0 || lc >= static_cast<int>(kept.size()))
      throw ParseError(path + ": unknown label column " + std::to_string(*opts.label_column));
    label_kept_idx = lc;
  }

  DatasetWithMask out;
  out.n = static_cast<int>(table.size());
  out.d = static_cast<int>(kept.size()) - (label_kept_idx >= 0 ? 1 : 0);
  if (out.d <= 0) throw ParseError(path + ": no feature columns left");
  out.values.reserve(static_cast<std::size_t>(out.n) * out.d);
  out.mask.reserve(static_cast<std::size_t>(out.n) * out.d);

  auto is_missing_token = [&](const std::string& cell) {
    return std::find(opts.missing_tokens.begin(), opts.missing_tokens.end(), cell) !=
           opts.missing_tokens.end();
  };

  for (std::size_t r = 0; r < table.size(); ++r) {
    for (std::size_t kc = 0; kc < kept.size(); ++kc) {
      const std::string cell = trim(table[r][static_cast<std::size_t>(kept[kc])]);
      if (static_cast<int>(kc) == label_kept_idx) {
        if (is_missing_token(cell))
          throw ParseError(path + ": missing label at row " + std::to_string(r + 1));
        auto it = std::find(out.label_names.begin(), out.label_names.end(), cell);
        if (it == out.label_names.end()) {
          out.label_names.push_back(cell);
          out.labels.push_back(static_cast<int>(out.label_names.size()) - 1);
        } else {
          out.labels.push_back(static_cast<int>(it - out.label_names.begin()));
        }
        continue;
      }
      if (is_missing_token(cell)) {
        out.values.push_back(0.0);
        out.mask.push_back(1);
        continue;
      }
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0' || !std::isfinite(v))
        throw ParseError(path + ": non-numeric cell \"" + cell + "\" at row " +
                         std::to_string(r + 1) + ", column " + std::to_string(kept[kc] + 1));
      out.values.push_back(v);
      out.mask.push_back(0);
    }
  }
  out.validate();
  return out;
}

DatasetWithMask apply_mask(const DatasetWithMask& data, const MaskPolicy& policy) {
  DatasetWithMask out = data;
  switch (policy.kind) {
    case MaskPolicy::Kind::AsIs:
      return out;
    case MaskPolicy::Kind::Mcar: {
      if (policy.p < 0.0 || policy.p >= 1.0)
        throw std::invalid_argument("apply_mask: mcar p must be in [0, 1)");
      Rng rng(mix_seed(policy.seed, 0x6d636172ULL));  // "mcar"
      for (std::size_t i = 0; i < out.mask.size(); ++i) {
        if (!out.mask[i] && rng.bernoulli(policy.p)) out.mask[i] = 1;
      }
      return out;
    }
    case MaskPolicy::Kind::Patch: {
      if (policy.grid_h * policy.grid_w != data.d)
        throw std::invalid_argument("apply_mask: patch policy on non-grid data");
      if (policy.patch_h <= 0 || policy.patch_w <= 0 || policy.patch_h > policy.grid_h ||
          policy.patch_w > policy.grid_w)
        throw std::invalid_argument("apply_mask: patch does not fit the grid");
      Rng rng(mix_seed(policy.seed, 0x70617463ULL));  // "patc"
      for (int i = 0; i < out.n; ++i) {
        const int top = rng.uniform_int(policy.grid_h - policy.patch_h + 1);
        const int left = rng.uniform_int(policy.grid_w - policy.patch_w + 1);
        for (int r = 0; r < policy.patch_h; ++r) {
          for (int c = 0; c < policy.patch_w; ++c) {
            const int col = (top + r) * policy.grid_w + (left + c);
            out.mask[static_cast<std::size_t>(i) * out.d + col] = 1;
          }
        }
      }
      return out;
    }
  }
  throw std::invalid_argument("apply_mask: unknown policy");
}

DatasetWithMask normalize(const DatasetWithMask& data, const std::string& scheme) {
  if (scheme != "minmax01" && scheme != "zscore")
    throw std::invalid_argument("normalize: unknown scheme " + scheme);
  DatasetWithMask out = data;
  std::vector<double> shift(static_cast<std::size_t>(data.d), 0.0);
  std::vector<double> scale(static_cast<std::size_t>(data.d), 1.0);
  for (int c = 0; c < data.d; ++c) {
    // Statistics over observed entries only.
    double mn = std::numeric_limits<double>::infinity();
    double mx = -std::numeric_limits<double>::infinity();
    double sum = 0.0, sum2 = 0.0;
    std::size_t cnt = 0;
    for (int i = 0; i < data.n; ++i) {
      if (data.is_missing(i, c)) continue;
      const double v = data.value(i, c);
      mn = std::min(mn, v);
      mx = std::max(mx, v);
      sum += v;
      sum2 += v * v;
      ++cnt;
    }
    if (cnt == 0) continue;  // fully-missing column: identity transform
    if (scheme == "minmax01") {
      shift[c] = mn;
      scale[c] = (mx > mn) ? (mx - mn) : 1.0;
    } else {
      const double mean = sum / static_cast<double>(cnt);
      const double var = std::max(sum2 / static_cast<double>(cnt) - mean * mean, 0.0);
      shift[c] = mean;
      scale[c] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
  }
  for (int i = 0; i < out.n; ++i) {
    for (int c = 0; c < out.d; ++c) {
      if (out.is_missing(i, c)) continue;
      auto& v = out.values[static_cast<std::size_t>(i) * out.d + c];
      v = (v - shift[c]) / scale[c];
    }
  }
  if (out.norm.applied) {
    // Compose with the previously applied transform.
    for (int c = 0; c < out.d; ++c) {
      out.norm.shift[c] = out.norm.shift[c] + out.norm.scale[c] * shift[c];
      out.norm.scale[c] = out.norm.scale[c] * scale[c];
    }
    out.norm.scheme = out.norm.scheme + "+" + scheme;
  } else {
    out.norm.applied = true;
    out.norm.scheme = scheme;
    out.norm.shift = std::move(shift);
    out.norm.scale = std::move(scale);
  }
  return out;
}

DatasetWithMask denormalize(const DatasetWithMask& data) {
  if (!data.norm.applied) return data;
  DatasetWithMask out = data;
  for (int i = 0; i < out.n; ++i) {
    for (int c = 0; c < out.d; ++c) {
      if (out.is_missing(i, c)) continue;
      auto& v = out.values[static_cast<std::size_t>(i) * out.d + c];
      v = v * data.norm.scale[c] + data.norm.shift[c];
    }
  }
  out.norm = NormInfo{};
  return out;
}

std::vector<FoldSplit> kfold_split(const DatasetWithMask& data, int folds, bool stratified,
                                   std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("kfold_split: folds must be >= 2");
  if (folds > data.n) throw std::invalid_argument("kfold_split: folds exceed row count");

  std::vector<std::vector<int>> fold_members(static_cast<std::size_t>(folds));
  Rng rng(mix_seed(seed, 0x6b666f6cULL));

  if (stratified) {
    if (!data.has_labels()) throw std::invalid_argument("kfold_split: stratified needs labels");
    std::vector<std::vector<int>> per_class(static_cast<std::size_t>(data.n_classes()));
    for (int i = 0; i < data.n; ++i) per_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    for (int c = 0; c < data.n_classes(); ++c) {
      if (static_cast<int>(per_class[c].size()) < folds)
        throw std::invalid_argument("kfold_split: class " + std::to_string(c) +
                                    " has fewer rows than folds");
    }
    int next_fold = 0;
    for (auto& rows : per_class) {
      rng.shuffle(rows);
      for (int r : rows) {
        fold_members[static_cast<std::size_t>(next_fold)].push_back(r);
        next_fold = (next_fold + 1) % folds;
      }
    }
  } else {
    std::vector<int> order(static_cast<std::size_t>(data.n));
    for (int i = 0; i < data.n; ++i) order[static_cast<std::size_t>(i)] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < order.size(); ++i) {
      fold_members[i % static_cast<std::size_t>(folds)].push_back(order[i]);
    }
  }

  std::vector<FoldSplit> out(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) {
    auto& split = out[static_cast<std::size_t>(f)];
    split.test_idx = fold_members[static_cast<std::size_t>(f)];
    std::sort(split.test_idx.begin(), split.test_idx.end());
    for (int g = 0; g < folds; ++g) {
      if (g == f) continue;
      split.train_idx.insert(split.train_idx.end(), fold_members[static_cast<std::size_t>(g)].begin(),
                             fold_members[static_cast<std::size_t>(g)].end());
    }
    std::sort(split.train_idx.begin(), split.train_idx.end());
  }
  return out;
}

DatasetWithMask subset(const DatasetWithMask& data, std::span<const int> rows) {
  DatasetWithMask out;
  out.d = data.d;
  out.n = static_cast<int>(rows.size());
  out.norm = data.norm;
  out.label_names = data.label_names;
  out.values.reserve(static_cast<std::size_t>(out.n) * out.d);
  out.mask.reserve(static_cast<std::size_t>(out.n) * out.d);
  for (int r : rows) {
    const auto off = static_cast<std::size_t>(r) * data.d;
    out.values.insert(out.values.end(), data.values.begin() + off, data.values.begin() + off + data.d);
    out.mask.insert(out.mask.end(), data.mask.begin() + off, data.mask.begin() + off + data.d);
    if (data.has_labels()) out.labels.push_back(data.labels[static_cast<std::size_t>(r)]);
  }
  return out;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) throw ParseError(path + ": truncated IDX header");
  return (static_cast<std::uint32_t>(buf[0]) << 24) | (static_cast<std::uint32_t>(buf[1]) << 16) |
         (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
}

}  // namespace

DatasetWithMask load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream in(images_path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + images_path);
  const std::uint32_t magic = read_be32(in, images_path);
  if (magic != 0x00000803u) throw ParseError(images_path + ": bad IDX image magic");
  const std::uint32_t count = read_be32(in, images_path);
  const std::uint32_t rows = read_be32(in, images_path);
  const std::uint32_t cols = read_be32(in, images_path);

  DatasetWithMask out;
  out.n = static_cast<int>(count);
  out.d = static_cast<int>(rows * cols);
  const std::size_t total = static_cast<std::size_t>(out.n) * out.d;
  std::vector<unsigned char> raw(total);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(total)))
    throw ParseError(images_path + ": truncated IDX payload");
  out.values.resize(total);
  for (std::size_t i = 0; i < total; ++i) out.values[i] = static_cast<double>(raw[i]) / 255.0;
  out.mask.assign(total, 0);
  out.norm.applied = true;
  out.norm.scheme = "fixed";
  out.norm.shift.assign(static_cast<std::size_t>(out.d), 0.0);
  out.norm.scale.assign(static_cast<std::size_t>(out.d), 255.0);

  if (!labels_path.empty()) {
    std::ifstream lin(labels_path, std::ios::binary);
    if (!lin) throw ParseError("cannot open file: " + labels_path);
    const std::uint32_t lmagic = read_be32(lin, labels_path);
    if (lmagic != 0x00000801u) throw ParseError(labels_path + ": bad IDX label magic");
    const std::uint32_t lcount = read_be32(lin, labels_path);
    if (lcount != count) throw ParseError(labels_path + ": label count mismatch");
    std::vector<unsigned char> lraw(lcount);
    if (!lin.read(reinterpret_cast<char*>(lraw.data()), static_cast<std::streamsize>(lcount)))
      throw ParseError(labels_path + ": truncated IDX payload");
    int max_label = 0;
    for (auto v : lraw) max_label = std::max(max_label, static_cast<int>(v));
    for (int c = 0; c <= max_label; ++c) out.label_names.push_back(std::to_string(c));
    out.labels.reserve(lcount);
    for (auto v : lraw) out.labels.push_back(static_cast<int>(v));
  }
  out.validate();
  return out;
}

void save_dataset_json(const DatasetWithMask& data, const std::string& path) {
  std::ofstream outf(path);
  if (!outf) throw ParseError("cannot write file: " + path);
  outf << data.to_json().dump(2) << "\n";
}

DatasetWithMask load_dataset_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);
  nlohmann::json j;
  in >> j;
  return DatasetWithMask::from_json(j);
}

}  // namespace missnet

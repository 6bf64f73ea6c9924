#pragma once

#include "fixpool/core.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fixpool {

enum class SplitTag { train, val, test };

inline std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
  }
  return "train";
}

// Labeled feature vectors grouped into classes, every class holding exactly
// per_class examples of dimension dim. Immutable after construction.
class Dataset {
 public:
  Dataset(int n_classes, int per_class, int dim,
          std::vector<std::vector<Vector>> examples,
          SplitTag split_tag = SplitTag::train)
      : n_classes_(n_classes),
        per_class_(per_class),
        dim_(dim),
        examples_(std::move(examples)),
        split_tag_(split_tag) {
    validate();
  }

  int n_classes() const { return n_classes_; }
  int per_class() const { return per_class_; }
  int dim() const { return dim_; }
  SplitTag split_tag() const { return split_tag_; }

  const Vector& example(int cls, int idx) const { return examples_[cls][idx]; }
  const std::vector<Vector>& class_examples(int cls) const { return examples_[cls]; }

 private:
  void validate() const {
    if (n_classes_ <= 0 || per_class_ <= 0 || dim_ <= 0)
      throw DimensionError("Dataset: counts must be positive");
    if (static_cast<int>(examples_.size()) != n_classes_)
      throw DimensionError("Dataset: class count mismatch");
    for (const auto& cls : examples_) {
      if (static_cast<int>(cls.size()) != per_class_)
        throw DimensionError("Dataset: per-class count mismatch");
      for (const auto& x : cls)
        if (x.size() != dim_)
          throw DimensionError("Dataset: feature dimension mismatch");
    }
  }

  int n_classes_;
  int per_class_;
  int dim_;
  std::vector<std::vector<Vector>> examples_;
  SplitTag split_tag_;
};

// Synthetic stand-in for image benchmarks: class means drawn N(0, spread^2 I),
// examples N(mean, noise^2 I). Draw order is fixed (per class: mean first,
// then examples), so a seed pins the dataset bit-exactly.
inline Dataset generate_gaussian_dataset(int n_classes, int per_class, int dim,
                                         double class_spread, double within_noise,
                                         std::uint64_t seed,
                                         SplitTag split_tag = SplitTag::train) {
  if (n_classes <= 0 || per_class <= 0 || dim <= 0)
    throw DimensionError("generate_gaussian_dataset: counts must be positive");
  if (class_spread < 0 || within_noise < 0)
    throw DimensionError("generate_gaussian_dataset: scales must be nonnegative");

  auto engine = make_engine(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<Vector>> examples(n_classes);
  for (int c = 0; c < n_classes; ++c) {
    Vector mean(dim);
    for (int j = 0; j < dim; ++j) mean[j] = class_spread * unit(engine);
    examples[c].reserve(per_class);
    for (int i = 0; i < per_class; ++i) {
      Vector x(dim);
      for (int j = 0; j < dim; ++j) x[j] = mean[j] + within_noise * unit(engine);
      examples[c].push_back(std::move(x));
    }
  }
  return Dataset(n_classes, per_class, dim, std::move(examples), split_tag);
}

// CSV ingestion. First line: "n_classes,per_class,dim". Each following line:
// "class_id,f_0,...,f_{dim-1}". Rows must group to exactly per_class per class.
inline Dataset load_dataset_csv(const std::string& path,
                                SplitTag split_tag = SplitTag::train) {
  std::ifstream in(path);
  if (!in) throw IoError("load_dataset_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw IoError("load_dataset_csv: empty file " + path);

  auto parse_fields = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
  };

  auto header = parse_fields(line);
  if (header.size() != 3)
    throw IoError("load_dataset_csv: header must be n_classes,per_class,dim");
  int n_classes = 0, per_class = 0, dim = 0;
  try {
    n_classes = std::stoi(header[0]);
    per_class = std::stoi(header[1]);
    dim = std::stoi(header[2]);
  } catch (const std::exception&) {
    throw IoError("load_dataset_csv: non-numeric header in " + path);
  }
  if (n_classes <= 0 || per_class <= 0 || dim <= 0)
    throw IoError("load_dataset_csv: header counts must be positive");

  std::vector<std::vector<Vector>> examples(n_classes);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = parse_fields(line);
    if (static_cast<int>(fields.size()) != dim + 1)
      throw IoError("load_dataset_csv: line " + std::to_string(line_no) +
                    " has wrong field count");
    int cls = 0;
    try {
      cls = std::stoi(fields[0]);
    } catch (const std::exception&) {
      throw IoError("load_dataset_csv: bad class id at line " + std::to_string(line_no));
    }
    if (cls < 0 || cls >= n_classes)
      throw IoError("load_dataset_csv: class id out of range at line " +
                    std::to_string(line_no));
    Vector x(dim);
    for (int j = 0; j < dim; ++j) {
      try {
        x[j] = std::stod(fields[j + 1]);
      } catch (const std::exception&) {
        throw IoError("load_dataset_csv: bad feature at line " + std::to_string(line_no));
      }
    }
    examples[cls].push_back(std::move(x));
  }
  for (int c = 0; c < n_classes; ++c)
    if (static_cast<int>(examples[c].size()) != per_class)
      throw IoError("load_dataset_csv: class " + std::to_string(c) + " has " +
                    std::to_string(examples[c].size()) + " rows, expected " +
                    std::to_string(per_class));
  return Dataset(n_classes, per_class, dim, std::move(examples), split_tag);
}

inline void save_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_dataset_csv: cannot write " + path);
  out << ds.n_classes() << "," << ds.per_class() << "," << ds.dim() << "\n";
  char buf[64];
  for (int c = 0; c < ds.n_classes(); ++c) {
    for (int i = 0; i < ds.per_class(); ++i) {
      out << c;
      const Vector& x = ds.example(c, i);
      for (int j = 0; j < ds.dim(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", x[j]);
        out << "," << buf;
      }
      out << "\n";
    }
  }
}

}  // namespace fixpool

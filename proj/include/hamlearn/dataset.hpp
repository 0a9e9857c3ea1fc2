#pragma once

#include <string>
#include <vector>

#include "hamlearn/stream.hpp"
#include "hamlearn/tensor.hpp"

namespace hl {

/// Classification table: feature vectors with integer labels.
struct Dataset {
  std::vector<Tensor> features;
  std::vector<std::size_t> labels;
  std::size_t classes = 0;

  std::vector<std::pair<Tensor, Tensor>> one_hot_samples() const;
};

// Deterministic synthetic tasks; no files, no downloads.
Dataset make_iris_like(std::uint64_t seed = 7);     // 150 samples, 4 features, 3 classes
Dataset make_digits_like(std::uint64_t seed = 11);  // 100 samples, 16 features, 10 classes

/// Token sequences with a target attached to the last token only. Targets
/// have the same width as `hidden`, matching an identity-output state net.
std::vector<Sequence> make_synthetic_sequences(std::size_t count, std::size_t min_len,
                                               std::size_t max_len, std::size_t token_dim,
                                               std::size_t hidden, std::uint64_t seed);

/// CSV rows of features followed by an integer label; no header.
Dataset load_csv_dataset(const std::string& path);
void save_csv_dataset(const Dataset& data, const std::string& path);

/// JSON-lines sequence file: one object per line,
/// {"tokens": [[...], ...], "target": [...]} or {"targets": [[...]|null, ...]}.
std::vector<Sequence> load_jsonl_sequences(const std::string& path);

}  // namespace hl

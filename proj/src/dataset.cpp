#include "hamlearn/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace hl {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace

std::vector<std::pair<Tensor, Tensor>> Dataset::one_hot_samples() const {
  std::vector<std::pair<Tensor, Tensor>> out;
  out.reserve(features.size());
  for (std::size_t i = 0; i < features.size(); ++i)
    out.emplace_back(features[i], Tensor::one_hot(classes, labels[i]));
  return out;
}

Dataset make_iris_like(std::uint64_t seed) {
  // three petal/sepal-style clusters, 50 samples each
  static const double means[3][4] = {
      {5.0, 3.4, 1.5, 0.25},
      {5.9, 2.8, 4.3, 1.3},
      {6.6, 3.0, 5.5, 2.0},
  };
  static const double spread[4] = {0.35, 0.30, 0.30, 0.15};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  Dataset data;
  data.classes = 3;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 50; ++i) {
      std::vector<double> x(4);
      for (std::size_t j = 0; j < 4; ++j) x[j] = means[c][j] + spread[j] * noise(rng);
      data.features.push_back(Tensor::from_vector(std::move(x)));
      data.labels.push_back(c);
    }
  return data;
}

Dataset make_digits_like(std::uint64_t seed) {
  // ten blob prototypes on a 4x4 grid, 10 samples per class
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> proto(0.0, 1.0);
  std::uniform_real_distribution<double> noise(-0.25, 0.25);
  std::vector<std::vector<double>> prototypes(10, std::vector<double>(16));
  for (auto& p : prototypes)
    for (double& v : p) v = proto(rng);
  Dataset data;
  data.classes = 10;
  for (std::size_t c = 0; c < 10; ++c)
    for (std::size_t i = 0; i < 10; ++i) {
      std::vector<double> x(16);
      for (std::size_t j = 0; j < 16; ++j) x[j] = prototypes[c][j] + noise(rng);
      data.features.push_back(Tensor::from_vector(std::move(x)));
      data.labels.push_back(c);
    }
  return data;
}

std::vector<Sequence> make_synthetic_sequences(std::size_t count, std::size_t min_len,
                                               std::size_t max_len, std::size_t token_dim,
                                               std::size_t hidden, std::uint64_t seed) {
  require(min_len >= 1 && max_len >= min_len, "make_synthetic_sequences: bad length range");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len_dist(min_len, max_len);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  std::vector<Sequence> seqs;
  for (std::size_t s = 0; s < count; ++s) {
    Sequence seq;
    const std::size_t len = len_dist(rng);
    std::vector<double> running(hidden, 0.0);
    for (std::size_t k = 0; k < len; ++k) {
      std::vector<double> tok(token_dim);
      for (double& v : tok) v = val(rng);
      for (std::size_t j = 0; j < hidden; ++j) running[j] += tok[j % token_dim];
      seq.tokens.push_back(Tensor::from_vector(std::move(tok)));
      seq.targets.push_back(std::nullopt);
    }
    std::vector<double> target(hidden);
    for (std::size_t j = 0; j < hidden; ++j) target[j] = std::tanh(running[j]);
    seq.targets.back() = Tensor::from_vector(std::move(target));
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

Dataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "csv: cannot open " + path);
  Dataset data;
  std::size_t width = 0, max_label = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        cells.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error("csv: " + path + ":" + std::to_string(lineno) + ": bad number '" + cell +
                    "'");
      }
    }
    require(cells.size() >= 2, "csv: " + path + ":" + std::to_string(lineno) +
                                   ": need at least one feature and a label");
    const double label_raw = cells.back();
    cells.pop_back();
    require(label_raw >= 0 && label_raw == std::floor(label_raw),
            "csv: " + path + ":" + std::to_string(lineno) + ": label must be a nonnegative int");
    if (width == 0) width = cells.size();
    require(cells.size() == width,
            "csv: " + path + ":" + std::to_string(lineno) + ": inconsistent row width");
    data.features.push_back(Tensor::from_vector(std::move(cells)));
    data.labels.push_back(static_cast<std::size_t>(label_raw));
    max_label = std::max(max_label, data.labels.back());
  }
  require(!data.features.empty(), "csv: " + path + " is empty");
  data.classes = max_label + 1;
  return data;
}

void save_csv_dataset(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "csv: cannot write " + path);
  out.precision(17);
  for (std::size_t i = 0; i < data.features.size(); ++i) {
    const Tensor& x = data.features[i];
    for (std::size_t j = 0; j < x.size(); ++j) out << x(j) << ',';
    out << data.labels[i] << '\n';
  }
}

std::vector<Sequence> load_jsonl_sequences(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "jsonl: cannot open " + path);
  std::vector<Sequence> seqs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw Error("jsonl: " + path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    require(j.contains("tokens") && j["tokens"].is_array(),
            "jsonl: " + path + ":" + std::to_string(lineno) + ": missing 'tokens' array");
    Sequence seq;
    for (const auto& tok : j["tokens"]) {
      std::vector<double> v = tok.get<std::vector<double>>();
      seq.tokens.push_back(Tensor::from_vector(std::move(v)));
      seq.targets.push_back(std::nullopt);
    }
    require(!seq.tokens.empty(),
            "jsonl: " + path + ":" + std::to_string(lineno) + ": empty sequence");
    if (j.contains("target")) {
      std::vector<double> v = j["target"].get<std::vector<double>>();
      seq.targets.back() = Tensor::from_vector(std::move(v));
    } else if (j.contains("targets")) {
      const auto& ts = j["targets"];
      require(ts.size() == seq.tokens.size(),
              "jsonl: " + path + ":" + std::to_string(lineno) + ": targets length mismatch");
      for (std::size_t k = 0; k < ts.size(); ++k)
        if (!ts[k].is_null())
          seq.targets[k] = Tensor::from_vector(ts[k].get<std::vector<double>>());
    }
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

}  // namespace hl

#include "hamlearn/stream.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace hl {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

}  // namespace

StreamSource::StreamSource(std::vector<StreamItem> items) : items_(std::move(items)) {
  for (std::size_t i = 1; i < items_.size(); ++i)
    require(items_[i].timestamp > items_[i - 1].timestamp,
            "stream: timestamps must strictly increase");
}

StreamSource StreamSource::from_dataset(const std::vector<std::pair<Tensor, Tensor>>& samples,
                                        std::optional<std::uint64_t> shuffle_seed,
                                        double spacing, std::size_t epochs) {
  require(!samples.empty(), "from_dataset: empty dataset");
  require(spacing > 0.0, "from_dataset: spacing must be positive");
  std::vector<StreamItem> items;
  items.reserve(samples.size() * epochs);
  std::mt19937_64 rng(shuffle_seed.value_or(0));
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  double t = 0.0;
  for (std::size_t e = 0; e < epochs; ++e) {
    if (shuffle_seed.has_value()) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      items.push_back({samples[idx].first, samples[idx].second, true, t});
      t += spacing;
    }
  }
  return StreamSource(std::move(items));
}

StreamSource StreamSource::tokenize_sequences(const std::vector<Sequence>& seqs,
                                              double spacing) {
  require(spacing > 0.0, "tokenize_sequences: spacing must be positive");
  std::vector<StreamItem> items;
  double t = 0.0;
  for (const Sequence& seq : seqs) {
    require(!seq.tokens.empty(), "tokenize_sequences: empty sequence");
    require(seq.targets.empty() || seq.targets.size() == seq.tokens.size(),
            "tokenize_sequences: target list length mismatch");
    for (std::size_t k = 0; k < seq.tokens.size(); ++k) {
      StreamItem item;
      item.u = seq.tokens[k];
      if (!seq.targets.empty()) item.y_hat = seq.targets[k];
      item.delta = k + 1 == seq.tokens.size();
      item.timestamp = t;
      items.push_back(std::move(item));
      t += spacing;
    }
  }
  return StreamSource(std::move(items));
}

StreamSource StreamSource::reverse_replay(const Sequence& seq, double spacing) {
  const std::size_t n = seq.tokens.size();
  require(n >= 1, "reverse_replay: empty sequence");
  require(spacing > 0.0, "reverse_replay: spacing must be positive");
  require(seq.targets.empty() || seq.targets.size() == n,
          "reverse_replay: target list length mismatch");
  auto make = [&](std::size_t k, double t, bool last) {
    StreamItem item;
    item.u = seq.tokens[k];
    if (!seq.targets.empty()) item.y_hat = seq.targets[k];
    item.delta = last;
    item.timestamp = t;
    return item;
  };
  std::vector<StreamItem> items;
  items.reserve(2 * n - 1);
  double t = 0.0;
  for (std::size_t k = 0; k < n; ++k, t += spacing)
    items.push_back(make(k, t, n == 1 && k == 0));
  for (std::size_t j = 1; j < n; ++j, t += spacing)
    items.push_back(make(n - 1 - j, t, j == n - 1));
  return StreamSource(std::move(items));
}

StreamSource StreamSource::from_items(std::vector<StreamItem> items) {
  return StreamSource(std::move(items));
}

std::optional<StreamItem> StreamSource::next() {
  if (cursor_ >= items_.size()) return std::nullopt;
  return items_[cursor_++];
}

StreamSource StreamSource::drop_while_busy(double processing_duration) const {
  require(processing_duration >= 0.0, "drop_while_busy: duration must be nonnegative");
  std::vector<StreamItem> kept;
  double ready_at = -std::numeric_limits<double>::infinity();
  for (const StreamItem& item : items_) {
    if (item.timestamp >= ready_at) {
      kept.push_back(item);
      ready_at = item.timestamp + processing_duration;
    }
  }
  return StreamSource(std::move(kept));
}

double psi_map(double t, double t_last, double tau) {
  require(t > t_last, "psi_map: defined only for t > t_last");
  return 2.0 * t_last - 2.0 * tau - t;
}

}  // namespace hl

#include "lexmine/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lexmine/error.hpp"
#include "lexmine/kernels.hpp"
#include "lexmine/rng.hpp"

namespace lexmine::retrieval {

Strategy strategy_from_string(std::string_view s) {
  if (s == "rag") return Strategy::rag;
  if (s == "inverse_rag" || s == "inverse-rag") return Strategy::inverse_rag;
  if (s == "random") return Strategy::random;
  throw Error("unknown selection strategy " + std::string(s));
}

std::string_view to_string(Strategy s) noexcept {
  switch (s) {
    case Strategy::rag: return "rag";
    case Strategy::inverse_rag: return "inverse_rag";
    case Strategy::random: return "random";
  }
  return "?";
}

std::vector<std::string> ShotSelection::ids() const {
  std::vector<std::string> out;
  for (const auto& s : shots) out.push_back(s.item_id);
  return out;
}

nlohmann::json ShotSelection::to_json() const {
  nlohmann::json j;
  j["strategy"] = to_string(strategy);
  j["seed"] = seed;
  j["shots"] = nlohmann::json::array();
  for (const auto& s : shots) {
    j["shots"].push_back({{"item_id", s.item_id}, {"gold", gold_to_json(s.gold)}, {"similarity", s.similarity},
                          {"rank", s.rank}});
  }
  return j;
}

RetrievalIndex::RetrievalIndex(std::size_t dimension) : dim_(dimension) {
  if (dim_ == 0) throw Error("retrieval index: dimension must be positive");
}

void RetrievalIndex::add(std::string item_id, const Embedding& embedding, Gold gold) {
  if (embedding.dimension() != dim_) {
    throw Error("retrieval index: dimension mismatch (" + std::to_string(embedding.dimension()) + " vs " +
                std::to_string(dim_) + ")");
  }
  if (!seen_.insert(item_id).second) throw Error("retrieval index: duplicate item id " + item_id);
  const Embedding unit = embedding.normalized ? embedding : Embedding::unit(embedding.values);
  rows_.insert(rows_.end(), unit.values.begin(), unit.values.end());
  ids_.push_back(std::move(item_id));
  golds_.push_back(std::move(gold));
}

std::vector<double> RetrievalIndex::similarities(std::span<const float> query) const {
  if (query.size() != dim_) {
    throw Error("retrieval index: query dimension " + std::to_string(query.size()) + " vs index " +
                std::to_string(dim_));
  }
  const double norm = std::sqrt(kernels::squared_norm(query));
  if (!(norm > 0.0) || !std::isfinite(norm)) throw Error("retrieval index: query must be finite and non-zero");
  std::vector<double> out(size());
  kernels::batch_dot(query, rows_, out);
  for (auto& v : out) v /= norm;
  return out;
}

ShotSelection select_shots(const RetrievalIndex& index, std::span<const float> query, const SelectionConfig& config,
                           const std::unordered_set<std::string>* exclude) {
  ShotSelection sel;
  sel.strategy = config.strategy;
  sel.seed = config.seed;
  if (index.size() == 0) throw Error("select_shots: empty index");
  const auto sims = index.similarities(query);

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (!exclude || !exclude->count(index.id(i))) pool.push_back(i);
  }
  if (config.k > pool.size()) {
    throw Error("select_shots: k=" + std::to_string(config.k) + " exceeds pool size " + std::to_string(pool.size()));
  }
  if (config.k == 0) return sel;

  auto by_sim_asc = [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] < sims[b];
    return index.id(a) < index.id(b);
  };
  auto by_sim_desc = [&](std::size_t a, std::size_t b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return index.id(a) < index.id(b);
  };

  std::vector<std::size_t> chosen;  // rank order
  switch (config.strategy) {
    case Strategy::rag:
      std::partial_sort(pool.begin(), pool.begin() + config.k, pool.end(), by_sim_desc);
      chosen.assign(pool.begin(), pool.begin() + config.k);
      break;
    case Strategy::inverse_rag:
      std::partial_sort(pool.begin(), pool.begin() + config.k, pool.end(), by_sim_asc);
      chosen.assign(pool.begin(), pool.begin() + config.k);
      break;
    case Strategy::random: {
      Rng rng(derive_seed(config.seed, "select/random"));
      // partial Fisher-Yates
      for (std::size_t i = 0; i < config.k; ++i) {
        std::swap(pool[i], pool[i + rng.uniform_index(pool.size() - i)]);
      }
      chosen.assign(pool.begin(), pool.begin() + config.k);
      break;
    }
  }

  std::vector<std::size_t> rank(chosen.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::vector<std::size_t> order = rank;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return by_sim_asc(chosen[a], chosen[b]); });
  for (std::size_t r : order) {
    const std::size_t row = chosen[r];
    sel.shots.push_back(Shot{index.id(row), index.gold(row), sims[row], r});
  }
  return sel;
}

}  // namespace lexmine::retrieval

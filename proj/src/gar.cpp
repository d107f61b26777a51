#include "lexmine/gar.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

#include "lexmine/error.hpp"
#include "lexmine/kernels.hpp"
#include "lexmine/parallel.hpp"
#include "lexmine/rng.hpp"
#include "lexmine/text.hpp"

namespace lexmine::prompting {

Sampler sampler_from_string(std::string_view s) {
  if (s == "diversity") return Sampler::diversity;
  if (s == "uniform") return Sampler::uniform;
  throw Error("unknown GAR sampler " + std::string(s));
}

nlohmann::json RationaleShot::to_json() const {
  return {{"item_id", item_id},
          {"text", text},
          {"gold", gold_to_json(gold)},
          {"rationale", rationale},
          {"extracted", extracted ? gold_to_json(*extracted) : nlohmann::json(nullptr)},
          {"accepted", accepted}};
}

namespace {

double sq_distance(std::span<const float> a, std::span<const float> b) {
  return kernels::squared_norm(a) + kernels::squared_norm(b) - 2.0 * kernels::dot(a, b);
}

}  // namespace

std::vector<std::size_t> kmeans(std::span<const retrieval::Embedding> points, std::size_t k, std::uint64_t seed,
                                std::size_t iterations) {
  const std::size_t n = points.size();
  if (n == 0) return {};
  if (k == 0 || k > n) throw Error("kmeans: k must lie in [1, n]");
  const std::size_t dim = points[0].dimension();
  for (const auto& p : points) {
    if (p.dimension() != dim) throw Error("kmeans: mixed dimensions");
  }

  Rng rng(derive_seed(seed, "gar/kmeans"));
  std::vector<std::vector<float>> centers;
  centers.push_back(points[rng.uniform_index(n)].values);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], std::max(0.0, sq_distance(points[i].values, centers.back())));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double target = rng.uniform01() * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0 && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.uniform_index(n);
    }
    centers.push_back(points[pick].values);
  }

  std::vector<std::size_t> assign(n, 0);
  for (std::size_t it = 0; it <= iterations; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_distance(points[i].values, centers[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      changed = changed || assign[i] != best || it == 0;
      assign[i] = best;
    }
    if (!changed || it == iterations) break;
    std::vector<std::vector<double>> sum(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[assign[i]];
      for (std::size_t d = 0; d < dim; ++d) sum[assign[i]][d] += points[i].values[d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (!count[c]) continue;  // empty cluster keeps its centre
      for (std::size_t d = 0; d < dim; ++d) centers[c][d] = static_cast<float>(sum[c][d] / count[c]);
    }
  }

  // renumber by first appearance
  std::vector<std::size_t> relabel(k, k);
  std::size_t next = 0;
  for (auto& a : assign) {
    if (relabel[a] == k) relabel[a] = next++;
    a = relabel[a];
  }
  return assign;
}

std::vector<std::vector<std::size_t>> sampling_groups(std::size_t pool_size, const GarConfig& config,
                                                      std::span<const retrieval::Embedding> embeddings) {
  std::vector<std::size_t> all(pool_size);
  std::iota(all.begin(), all.end(), 0);
  if (config.sampler == Sampler::uniform) {
    Rng rng(derive_seed(config.seed, "gar/uniform"));
    rng.shuffle(all);
    return {all};
  }
  if (embeddings.size() != pool_size) throw Error("GAR diversity sampler needs one embedding per pool item");
  if (pool_size == 0) return {};
  const std::size_t k = std::min(std::max<std::size_t>(config.budget, 1), pool_size);
  const auto assign = kmeans(embeddings, k, config.seed, config.kmeans_iterations);
  const std::size_t groups = *std::max_element(assign.begin(), assign.end()) + 1;

  const std::size_t dim = embeddings[0].dimension();
  std::vector<std::vector<double>> centroid(groups, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> count(groups, 0);
  for (std::size_t i = 0; i < pool_size; ++i) {
    ++count[assign[i]];
    for (std::size_t d = 0; d < dim; ++d) centroid[assign[i]][d] += embeddings[i].values[d];
  }
  std::vector<double> dist(pool_size, 0.0);
  for (std::size_t i = 0; i < pool_size; ++i) {
    const auto& c = centroid[assign[i]];
    double s = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = embeddings[i].values[d] - c[d] / count[assign[i]];
      s += diff * diff;
    }
    dist[i] = s;
  }
  std::vector<std::vector<std::size_t>> out(groups);
  for (std::size_t i = 0; i < pool_size; ++i) out[assign[i]].push_back(i);
  for (auto& g : out) {
    std::sort(g.begin(), g.end(), [&](std::size_t a, std::size_t b) {
      if (dist[a] != dist[b]) return dist[a] < dist[b];
      return a < b;
    });
  }
  return out;
}

GarResult generate_rationales(std::span<const Item* const> pool, const PromptBuilder& builder,
                              const extraction::CategoryExtractor* extractor, const GarBackend& backend,
                              const GarConfig& config, std::span<const retrieval::Embedding> embeddings) {
  if (config.budget == 0) throw Error("GAR budget must be positive");
  if (config.budget > pool.size()) {
    throw Error("GAR budget " + std::to_string(config.budget) + " exceeds pool size " + std::to_string(pool.size()));
  }
  const auto groups = sampling_groups(pool.size(), config, embeddings);
  std::vector<std::size_t> cursor(groups.size(), 0);
  std::vector<std::size_t> accepted_in(groups.size(), 0);
  PromptOptions options;
  options.explanation = config.explanation;
  options.mode = extraction::Mode::cot;

  GarResult result;
  std::size_t accepted = 0;
  while (accepted < config.budget) {
    const std::size_t need = config.budget - accepted;
    std::vector<std::pair<std::size_t, std::size_t>> wave;  // (group, pool index)
    // one draw per group that has no accepted shot yet
    for (std::size_t g = 0; g < groups.size() && wave.size() < need; ++g) {
      if (!accepted_in[g] && cursor[g] < groups[g].size()) wave.emplace_back(g, groups[g][cursor[g]++]);
    }
    // then round-robin over whatever is left
    for (bool progress = true; progress && wave.size() < need;) {
      progress = false;
      for (std::size_t g = 0; g < groups.size() && wave.size() < need; ++g) {
        if (cursor[g] < groups[g].size()) {
          wave.emplace_back(g, groups[g][cursor[g]++]);
          progress = true;
        }
      }
    }
    if (wave.empty()) break;  // pool exhausted

    std::vector<RationaleShot> shots(wave.size());
    parallel_for(wave.size(), backend.concurrency, [&](std::size_t w) {
      const Item& item = *pool[wave[w].second];
      RationaleShot& s = shots[w];
      s.item_id = item.id;
      s.text = item.text;
      s.gold = item.gold;
      const auto bundle = builder.build(item, {}, options);
      try {
        s.rationale = backend.gateway.chat(make_request(bundle, backend.backend, backend.model, backend.max_tokens));
      } catch (const BackendError&) {
        return;  // counts as a rejected attempt
      }
      const auto outcome = decode_reply(s.rationale, bundle, builder.target(), extractor);
      if (!outcome.malformed) s.extracted = outcome.value;
      s.accepted = s.extracted && *s.extracted == s.gold;
    });
    for (std::size_t w = 0; w < wave.size() && accepted < config.budget; ++w) {
      if (shots[w].accepted) {
        ++accepted;
        ++accepted_in[wave[w].first];
        result.shots.push_back(shots[w]);
      }
      result.attempts.push_back(std::move(shots[w]));
    }
  }
  if (result.shots.empty()) throw Error("GAR produced no valid rationales");
  std::sort(result.shots.begin(), result.shots.end(),
            [](const RationaleShot& a, const RationaleShot& b) { return a.item_id < b.item_id; });
  result.acceptance_rate = static_cast<double>(result.shots.size()) / static_cast<double>(result.attempts.size());
  return result;
}

void save_rationales(const std::vector<RationaleShot>& shots, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : shots) out << s.to_json().dump() << '\n';
}

std::vector<RationaleShot> load_rationales(const std::filesystem::path& path, const Target& target) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::optional<extraction::CategoryExtractor> extractor;
  if (target.is_classification()) extractor.emplace(target.schema());
  auto parse_gold = [&](const nlohmann::json& g, std::size_t line) -> Gold {
    if (target.is_classification()) {
      auto c = g.get<std::string>();
      if (!target.schema().contains(c)) throw ParseError("unknown category " + c, line);
      return c;
    }
    return g.get<int>();
  };
  std::vector<RationaleShot> out;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    RationaleShot s;
    try {
      const auto j = nlohmann::json::parse(line);
      s.item_id = j.at("item_id").get<std::string>();
      s.text = j.at("text").get<std::string>();
      s.gold = parse_gold(j.at("gold"), line_no);
      s.rationale = j.at("rationale").get<std::string>();
      if (!j.at("extracted").is_null()) s.extracted = parse_gold(j.at("extracted"), line_no);
      s.accepted = j.at("accepted").get<bool>();
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(e.what(), line_no);
    }
    if (!s.accepted || !s.extracted || *s.extracted != s.gold) {
      throw ParseError("rationale for " + s.item_id + " does not match its gold answer", line_no);
    }
    const auto again = extractor ? extractor->extract(s.rationale, extraction::Mode::cot)
                                 : extraction::extract_score(s.rationale, target.range(), extraction::Mode::cot);
    if (again.malformed || again.value != s.gold) {
      throw ParseError("rationale for " + s.item_id + " no longer extracts to its gold answer", line_no);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace lexmine::prompting

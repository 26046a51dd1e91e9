#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "picle/corpus.hpp"
#include "picle/embedding.hpp"
#include "picle/errors.hpp"
#include "picle/rng.hpp"

namespace picle {

enum class RetrievalMethod { random, knn, kmeans, sp_kmeans };

inline std::string to_string(RetrievalMethod m) {
  switch (m) {
    case RetrievalMethod::random: return "random";
    case RetrievalMethod::knn: return "knn";
    case RetrievalMethod::kmeans: return "kmeans";
    case RetrievalMethod::sp_kmeans: return "sp_kmeans";
  }
  return "random";
}

inline RetrievalMethod retrieval_method_from_string(const std::string& s) {
  if (s == "random") return RetrievalMethod::random;
  if (s == "knn") return RetrievalMethod::knn;
  if (s == "kmeans") return RetrievalMethod::kmeans;
  if (s == "sp_kmeans") return RetrievalMethod::sp_kmeans;
  throw UsageError("unknown retrieval method '" + s +
                   "' (expected random, knn, kmeans, or sp_kmeans)");
}

struct RetrievalConfig {
  RetrievalMethod method = RetrievalMethod::sp_kmeans;
  std::size_t k_demos = 10;
  std::size_t k_clusters = 5;
  std::uint64_t seed = 12345;
  bool reverse_demo_order = false;

  void validate() const {
    if (k_demos < 1) throw UsageError("k_demos must be >= 1");
    if (k_clusters < 1) throw UsageError("k_clusters must be >= 1");
  }
};

// Demonstration samples with parallel embeddings and, once clustered, a
// cluster id per sample.
struct DemonstrationPool {
  std::vector<AnnotatedSample> samples;
  std::vector<Embedding> embeddings;
  std::optional<std::vector<int>> cluster_ids;

  std::size_t size() const { return samples.size(); }

  void validate() const {
    if (!embeddings.empty() && embeddings.size() != samples.size())
      throw SchemaError("pool embeddings are not parallel to samples");
    for (std::size_t i = 1; i < embeddings.size(); ++i)
      if (embeddings[i].size() != embeddings[0].size())
        throw SchemaError("pool embeddings have mixed dimensions");
    if (cluster_ids) {
      if (cluster_ids->size() != samples.size())
        throw SchemaError("pool cluster ids are not parallel to samples");
      for (int c : *cluster_ids)
        if (c < 0) throw SchemaError("negative cluster id");
    }
  }
};

// Clustering encodes text and annotation together: the embedder input is
// "<text> [SEP] <comma-joined surfaces>", with "None" for null samples.
inline std::string clustering_input(const AnnotatedSample& sample) {
  std::string out = sample.text() + " [SEP] ";
  if (sample.mentions.empty()) {
    out += "None";
  } else {
    for (std::size_t i = 0; i < sample.mentions.size(); ++i) {
      if (i) out += ", ";
      out += sample.mentions[i].surface;
    }
  }
  return out;
}

inline Embedding embed_for_clustering(const AnnotatedSample& sample, Embedder& embedder) {
  return embedder.embed(clustering_input(sample));
}

// Cosine of two vectors; zero norm on either side is defined as similarity 0.
inline double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw UsageError("cosine_similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Indices of the k most cosine-similar pool entries, in ascending similarity
// order so the strongest neighbor ends up adjacent to the query in a prompt.
// Ties break toward the lower pool index.
inline std::vector<std::size_t> knn_retrieve(const Embedding& query,
                                             const std::vector<Embedding>& pool, std::size_t k) {
  if (pool.empty()) throw UsageError("knn_retrieve: empty pool");
  if (k > pool.size())
    throw UsageError("knn_retrieve: k=" + std::to_string(k) + " exceeds pool size " +
                     std::to_string(pool.size()));
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> sims(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) sims[i] = cosine_similarity(query, pool[i]);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  order.resize(k);
  std::reverse(order.begin(), order.end());
  return order;
}

struct KMeansResult {
  std::vector<int> assignments;
  std::vector<Embedding> centroids;
  std::vector<double> wcss_per_iteration;  // measured after each full iteration
  std::size_t iterations = 0;

  double final_wcss() const {
    return wcss_per_iteration.empty() ? 0.0 : wcss_per_iteration.back();
  }
};

namespace detail {

inline double squared_distance(const Embedding& a, const Embedding& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

// One Lloyd pass from a k-means++ initialization. Empty clusters are
// repaired by stealing the point currently farthest from its centroid, which
// keeps the within-cluster sum of squares non-increasing across iterations.
inline KMeansResult kmeans_single_run(const std::vector<Embedding>& points, std::size_t K,
                                      std::uint64_t seed, std::size_t max_iters) {
  const std::size_t n = points.size();
  Rng rng(seed);
  KMeansResult result;
  result.centroids.reserve(K);

  // k-means++ seeding: D^2-weighted draws.
  result.centroids.push_back(points[rng.next_below(n)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i)
    d2[i] = detail::squared_distance(points[i], result.centroids[0]);
  while (result.centroids.size() < K) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t chosen;
    if (total <= 0.0) {
      chosen = rng.next_below(n);
    } else {
      const double u = rng.next_real01() * total;
      double acc = 0.0;
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc) {
          chosen = i;
          break;
        }
      }
    }
    result.centroids.push_back(points[chosen]);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], detail::squared_distance(points[i], result.centroids.back()));
  }

  result.assignments.assign(n, -1);
  std::vector<int> previous(n, -1);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    // Assignment step; ties go to the lowest cluster index.
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      int best_c = 0;
      for (std::size_t c = 0; c < K; ++c) {
        const double d = detail::squared_distance(points[i], result.centroids[c]);
        if (d < best) {
          best = d;
          best_c = static_cast<int>(c);
        }
      }
      result.assignments[i] = best_c;
    }

    std::vector<std::size_t> sizes(K, 0);
    for (int a : result.assignments) ++sizes[static_cast<std::size_t>(a)];

    // Repair: hand each empty cluster the globally farthest point and anchor
    // the cluster on it so the objective cannot go up.
    for (std::size_t c = 0; c < K; ++c) {
      if (sizes[c] > 0) continue;
      double worst = -1.0;
      std::size_t worst_i = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t home = static_cast<std::size_t>(result.assignments[i]);
        if (sizes[home] <= 1) continue;
        const double d = detail::squared_distance(points[i], result.centroids[home]);
        if (d > worst) {
          worst = d;
          worst_i = i;
        }
      }
      --sizes[static_cast<std::size_t>(result.assignments[worst_i])];
      result.assignments[worst_i] = static_cast<int>(c);
      ++sizes[c];
      result.centroids[c] = points[worst_i];
    }

    // Update step: centroids become cluster means.
    const std::size_t dim = points[0].size();
    std::vector<Embedding> sums(K, Embedding(dim, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = static_cast<std::size_t>(result.assignments[i]);
      for (std::size_t d = 0; d < dim; ++d) sums[c][d] += points[i][d];
    }
    for (std::size_t c = 0; c < K; ++c)
      for (std::size_t d = 0; d < dim; ++d)
        result.centroids[c][d] = sums[c][d] / static_cast<double>(sizes[c]);

    double wcss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      wcss += detail::squared_distance(points[i],
                                       result.centroids[static_cast<std::size_t>(result.assignments[i])]);
    result.wcss_per_iteration.push_back(wcss);
    result.iterations = iter + 1;

    if (result.assignments == previous) break;
    previous = result.assignments;
  }
  return result;
}

}  // namespace detail

// Seeded k-means: several independently initialized Lloyd passes, keeping
// the one with the lowest final objective (ties go to the earliest pass).
// Deterministic for a given (points, K, seed).
inline KMeansResult kmeans_cluster(const std::vector<Embedding>& points, std::size_t K,
                                   std::uint64_t seed, std::size_t max_iters = 100,
                                   std::size_t restarts = 10) {
  const std::size_t n = points.size();
  if (K == 0) throw UsageError("kmeans_cluster: K must be >= 1");
  if (n < K)
    throw UsageError("kmeans_cluster: " + std::to_string(n) + " points cannot fill " +
                     std::to_string(K) + " clusters");
  if (restarts == 0) throw UsageError("kmeans_cluster: restarts must be >= 1");

  KMeansResult best;
  for (std::size_t r = 0; r < restarts; ++r) {
    KMeansResult run = detail::kmeans_single_run(points, K, mix_seed(seed, r), max_iters);
    if (r == 0 || run.final_wcss() < best.final_wcss()) best = std::move(run);
  }
  return best;
}

// Sp-k-means sampling: an independent uniform draw without replacement of
// min(k_demos, |cluster|) members from every cluster, each cluster on its own
// seeded stream. Returns pool indices per cluster, in draw order.
inline std::vector<std::vector<std::size_t>> sp_kmeans_sample(const std::vector<int>& cluster_ids,
                                                              std::size_t K, std::size_t k_demos,
                                                              std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> members(K);
  for (std::size_t i = 0; i < cluster_ids.size(); ++i) {
    const int c = cluster_ids[i];
    if (c < 0 || static_cast<std::size_t>(c) >= K)
      throw UsageError("cluster id " + std::to_string(c) + " out of range for K=" +
                       std::to_string(K));
    members[static_cast<std::size_t>(c)].push_back(i);
  }
  std::vector<std::vector<std::size_t>> out(K);
  for (std::size_t c = 0; c < K; ++c) {
    Rng rng(mix_seed(seed, c));
    const std::vector<std::size_t> picks =
        sample_indices_without_replacement(members[c].size(), k_demos, rng);
    out[c].reserve(picks.size());
    for (std::size_t p : picks) out[c].push_back(members[c][p]);
  }
  return out;
}

inline std::vector<std::vector<std::size_t>> sp_kmeans_sample(const DemonstrationPool& pool,
                                                              std::size_t k_demos,
                                                              std::uint64_t seed) {
  if (!pool.cluster_ids) throw UsageError("sp_kmeans_sample: pool has no cluster ids");
  int max_id = -1;
  for (int c : *pool.cluster_ids) max_id = std::max(max_id, c);
  return sp_kmeans_sample(*pool.cluster_ids, static_cast<std::size_t>(max_id + 1), k_demos, seed);
}

}  // namespace picle

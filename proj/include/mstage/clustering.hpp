#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mstage/score_bridge.hpp"

namespace mstage {

/// Row-major set of equal-length vectors, one per item id.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(std::size_t dimension) : dim_(dimension) {}

  /// Throws ValidationError on a dimension mismatch or non-finite component.
  void add(std::string id, std::span<const double> values);

  std::size_t rows() const { return ids_.size(); }
  std::size_t dimension() const { return dim_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * dim_, dim_}; }

  /// Number of pairwise-distinct rows (exact comparison).
  std::size_t distinct_rows() const;

  /// Copy with every row scaled to unit Euclidean length (zero rows stay zero).
  EmbeddingMatrix normalized() const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> values_;
};

/// Embeddings of the corpus items, in corpus order.
EmbeddingMatrix embeddings_for(const Corpus& corpus, const ScoreBundle& bundle);

struct KMeansOptions {
  std::size_t k = 3;
  std::uint64_t seed = 0;
  std::size_t restarts = 10;
  std::size_t max_iterations = 300;
};

struct ClusterModel {
  std::size_t k = 0;
  std::size_t dimension = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> ids;
  std::vector<double> points;     ///< rows x dimension, the clustered data
  std::vector<double> centroids;  ///< k x dimension
  std::vector<std::size_t> assignment;
  double inertia = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  /// Inertia after every assignment step of the winning restart.
  std::vector<double> inertia_trace;

  std::span<const double> centroid(std::size_t c) const {
    return {centroids.data() + c * dimension, dimension};
  }
  std::span<const double> point(std::size_t i) const {
    return {points.data() + i * dimension, dimension};
  }
  /// Row indices assigned to cluster `c`, ascending.
  std::vector<std::size_t> members(std::size_t c) const;
  std::size_t cluster_of(const std::string& id) const;
};

/// Lloyd's algorithm from k-means++ seeds; best of `restarts` by inertia,
/// ties to the earlier restart. Deterministic for fixed (seed, restarts).
/// Clusters are numbered in order of their first member row.
ClusterModel kmeans(const EmbeddingMatrix& data, const KMeansOptions& options);

struct InertiaPoint {
  std::size_t k;
  double inertia;
};
using InertiaCurve = std::vector<InertiaPoint>;

InertiaCurve inertia_curve(const EmbeddingMatrix& data, std::size_t k_max,
                           const KMeansOptions& base);

/// k with the largest second difference I(k-1) - 2 I(k) + I(k+1) over the
/// interior of the curve; ties go to the smaller k.
std::size_t elbow_select(const InertiaCurve& curve);

struct PCAProjection {
  std::vector<std::string> ids;
  std::vector<std::array<double, 2>> coordinates;
  std::array<double, 2> variance_ratio{};
  std::vector<double> mean;
  std::array<std::vector<double>, 2> axes;
  double total_variance = 0.0;  ///< sum of squared centered norms
};

/// Projection on the top two principal axes of the mean-centred data. Each
/// axis is signed so its largest-magnitude component is positive.
PCAProjection pca_project(const EmbeddingMatrix& data);

using MemberFilter = std::function<bool(const std::string& id)>;

/// Member closest to the cluster centroid, ties to the lexicographically
/// smallest id. `filter`, when set, restricts the candidates.
std::string nearest_to_centroid(const ClusterModel& model, std::size_t cluster,
                                const MemberFilter& filter = {});

}  // namespace mstage

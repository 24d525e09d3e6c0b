#include "mstage/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "mstage/error.hpp"
#include "mstage/kernels.hpp"
#include "mstage/random.hpp"

namespace mstage {

namespace {

constexpr const char* kStage = "clustering";

struct Run {
  std::vector<double> centroids;
  std::vector<std::size_t> assignment;
  double inertia = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

std::vector<double> seed_plus_plus(const EmbeddingMatrix& data, std::size_t k, Rng& rng) {
  const std::size_t n = data.rows();
  const std::size_t d = data.dimension();
  std::vector<double> centroids;
  centroids.reserve(k * d);
  auto first = data.row(rng.below(n));
  centroids.insert(centroids.end(), first.begin(), first.end());

  std::vector<double> best(n);
  for (std::size_t i = 0; i < n; ++i) best[i] = kernels::squared_distance(data.row(i), first);
  for (std::size_t c = 1; c < k; ++c) {
    const double total = std::accumulate(best.begin(), best.end(), 0.0);
    // total > 0 because the caller guarantees at least k distinct rows.
    const double target = rng.uniform01() * total;
    double cumulative = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (best[i] <= 0.0) continue;
      cumulative += best[i];
      pick = i;
      if (cumulative > target) break;
    }
    auto chosen = data.row(pick);
    centroids.insert(centroids.end(), chosen.begin(), chosen.end());
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], kernels::squared_distance(data.row(i), chosen));
    }
  }
  return centroids;
}

// Assigns every row to its nearest centroid (ties to the lower index).
// Returns the inertia and whether any assignment changed.
std::pair<double, bool> assign(const EmbeddingMatrix& data, std::span<const double> centroids,
                               std::size_t k, std::vector<std::size_t>& assignment,
                               std::vector<double>& distances) {
  const std::size_t d = data.dimension();
  double inertia = 0.0;
  bool changed = false;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    std::size_t best_c = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double dist = kernels::squared_distance(data.row(i), centroids.subspan(c * d, d));
      if (dist < best_d) {
        best_d = dist;
        best_c = c;
      }
    }
    if (assignment[i] != best_c) {
      assignment[i] = best_c;
      changed = true;
    }
    distances[i] = best_d;
    inertia += best_d;
  }
  return {inertia, changed};
}

void update_centroids(const EmbeddingMatrix& data, std::size_t k,
                      const std::vector<std::size_t>& assignment,
                      const std::vector<double>& distances, std::vector<double>& centroids) {
  const std::size_t d = data.dimension();
  std::vector<double> sums(k * d, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const std::size_t c = assignment[i];
    kernels::axpy(1.0, data.row(i), std::span<double>(sums.data() + c * d, d));
    ++counts[c];
  }
  std::vector<bool> taken(data.rows(), false);
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) {
      const double inv = 1.0 / static_cast<double>(counts[c]);
      for (std::size_t j = 0; j < d; ++j) centroids[c * d + j] = sums[c * d + j] * inv;
      continue;
    }
    // Empty cluster: re-seed at the worst-served point not already used.
    std::size_t far = data.rows();
    for (std::size_t i = 0; i < data.rows(); ++i) {
      if (taken[i]) continue;
      if (far == data.rows() || distances[i] > distances[far]) far = i;
    }
    taken[far] = true;
    auto row = data.row(far);
    std::copy(row.begin(), row.end(), centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
  }
}

Run lloyd(const EmbeddingMatrix& data, std::size_t k, std::size_t max_iterations, Rng& rng) {
  Run run;
  run.centroids = seed_plus_plus(data, k, rng);
  run.assignment.assign(data.rows(), k);  // k = "unassigned"
  std::vector<double> distances(data.rows());
  auto [inertia, changed] = assign(data, run.centroids, k, run.assignment, distances);
  run.trace.push_back(inertia);
  for (run.iterations = 1; run.iterations <= max_iterations; ++run.iterations) {
    update_centroids(data, k, run.assignment, distances, run.centroids);
    std::tie(inertia, changed) = assign(data, run.centroids, k, run.assignment, distances);
    run.trace.push_back(inertia);
    if (!changed) {
      run.converged = true;
      break;
    }
  }
  run.iterations = std::min(run.iterations, max_iterations);
  run.inertia = inertia;
  return run;
}

}  // namespace

void EmbeddingMatrix::add(std::string id, std::span<const double> values) {
  if (values.size() != dim_) {
    throw ValidationError(kStage, "embedding for '" + id + "' has dimension " +
                                      std::to_string(values.size()) + ", expected " +
                                      std::to_string(dim_));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError(kStage, "non-finite embedding for '" + id + "'");
  }
  ids_.push_back(std::move(id));
  values_.insert(values_.end(), values.begin(), values.end());
}

std::size_t EmbeddingMatrix::distinct_rows() const {
  std::vector<std::size_t> order(rows());
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    auto ra = row(a), rb = row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  };
  std::sort(order.begin(), order.end(), less);
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i == 0 || less(order[i - 1], order[i])) ++distinct;
  }
  return distinct;
}

EmbeddingMatrix EmbeddingMatrix::normalized() const {
  EmbeddingMatrix out(dim_);
  std::vector<double> buf(dim_);
  for (std::size_t i = 0; i < rows(); ++i) {
    auto r = row(i);
    const double norm = std::sqrt(kernels::dot(r, r));
    for (std::size_t j = 0; j < dim_; ++j) buf[j] = norm > 0.0 ? r[j] / norm : 0.0;
    out.add(ids_[i], buf);
  }
  return out;
}

EmbeddingMatrix embeddings_for(const Corpus& corpus, const ScoreBundle& bundle) {
  EmbeddingMatrix m(bundle.dimension());
  for (const auto& item : corpus) m.add(item.id, bundle.at(item.id).embedding);
  return m;
}

std::vector<std::size_t> ClusterModel::members(std::size_t c) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == c) out.push_back(i);
  }
  return out;
}

std::size_t ClusterModel::cluster_of(const std::string& id) const {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw ValidationError(kStage, "item '" + id + "' was not clustered");
  return assignment[static_cast<std::size_t>(it - ids.begin())];
}

ClusterModel kmeans(const EmbeddingMatrix& data, const KMeansOptions& options) {
  if (data.rows() == 0) throw ValidationError(kStage, "k-means on empty input");
  if (options.k == 0) throw ValidationError(kStage, "k must be at least 1");
  const std::size_t distinct = data.distinct_rows();
  if (options.k > distinct) {
    throw ValidationError(kStage, "k = " + std::to_string(options.k) + " exceeds the " +
                                      std::to_string(distinct) + " distinct points");
  }
  const std::size_t restarts = std::max<std::size_t>(1, options.restarts);

  Run best;
  bool have_best = false;
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng{options.seed, static_cast<std::uint64_t>(r)};
    Run run = lloyd(data, options.k, options.max_iterations, rng);
    if (!have_best || run.inertia < best.inertia) {
      best = std::move(run);
      have_best = true;
    }
  }

  ClusterModel model;
  model.k = options.k;
  model.dimension = data.dimension();
  model.seed = options.seed;
  model.ids = data.ids();
  model.points.reserve(data.rows() * data.dimension());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    auto r = data.row(i);
    model.points.insert(model.points.end(), r.begin(), r.end());
  }
  // Canonical numbering: clusters are ordered by their first member.
  const std::size_t k = options.k, d = data.dimension();
  std::vector<std::size_t> relabel(k, k);
  std::size_t next = 0;
  for (std::size_t c : best.assignment) {
    if (relabel[c] == k) relabel[c] = next++;
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (relabel[c] == k) relabel[c] = next++;
  }
  model.centroids.assign(k * d, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy_n(best.centroids.begin() + static_cast<std::ptrdiff_t>(c * d), d,
                model.centroids.begin() + static_cast<std::ptrdiff_t>(relabel[c] * d));
  }
  model.assignment.reserve(best.assignment.size());
  for (std::size_t c : best.assignment) model.assignment.push_back(relabel[c]);
  model.inertia = best.inertia;
  model.iterations = best.iterations;
  model.converged = best.converged;
  model.inertia_trace = std::move(best.trace);
  return model;
}

InertiaCurve inertia_curve(const EmbeddingMatrix& data, std::size_t k_max,
                           const KMeansOptions& base) {
  InertiaCurve curve;
  for (std::size_t k = 1; k <= k_max; ++k) {
    KMeansOptions opts = base;
    opts.k = k;
    curve.push_back({k, kmeans(data, opts).inertia});
  }
  return curve;
}

std::size_t elbow_select(const InertiaCurve& curve) {
  if (curve.size() < 3) {
    throw ValidationError(kStage, "elbow selection needs at least 3 curve points");
  }
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].k <= curve[i - 1].k) {
      throw ValidationError(kStage, "inertia curve k values must increase");
    }
  }
  std::size_t best = 1;
  double best_diff = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    const double diff = curve[i - 1].inertia - 2.0 * curve[i].inertia + curve[i + 1].inertia;
    if (diff > best_diff) {
      best_diff = diff;
      best = i;
    }
  }
  return curve[best].k;
}

PCAProjection pca_project(const EmbeddingMatrix& data) {
  const std::size_t n = data.rows();
  const std::size_t d = data.dimension();
  if (n < 2 || d < 2) throw ValidationError(kStage, "PCA needs at least 2 points of dimension >= 2");

  PCAProjection out;
  out.ids = data.ids();
  out.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) kernels::axpy(1.0 / static_cast<double>(n), data.row(i), out.mean);

  std::vector<double> centered(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = data.row(i);
    for (std::size_t j = 0; j < d; ++j) centered[i * d + j] = r[j] - out.mean[j];
  }
  auto crow = [&](std::size_t i) { return std::span<const double>(centered.data() + i * d, d); };
  for (std::size_t i = 0; i < n; ++i) out.total_variance += kernels::dot(crow(i), crow(i));
  if (!(out.total_variance > 0.0)) {
    throw ValidationError(kStage, "PCA input is degenerate: all points identical");
  }

  std::array<double, 2> lambda{};
  if (d <= n) {
    // Scatter matrix from the transposed data so each entry is one dot.
    std::vector<double> cols(d * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) cols[j * n + i] = centered[i * d + j];
    }
    Eigen::MatrixXd scatter(d, d);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = a; b < d; ++b) {
        const double v = kernels::dot({cols.data() + a * n, n}, {cols.data() + b * n, n});
        scatter(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
        scatter(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = v;
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(scatter);
    if (solver.info() != Eigen::Success) throw Error(kStage, "eigen-decomposition failed");
    for (std::size_t c = 0; c < 2; ++c) {
      const auto idx = static_cast<Eigen::Index>(d - 1 - c);
      lambda[c] = solver.eigenvalues()(idx);
      out.axes[c].resize(d);
      for (std::size_t j = 0; j < d; ++j) {
        out.axes[c][j] = solver.eigenvectors()(static_cast<Eigen::Index>(j), idx);
      }
    }
  } else {
    // Fewer points than dimensions: decompose the Gram matrix instead.
    Eigen::MatrixXd gram(n, n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a; b < n; ++b) {
        const double v = kernels::dot(crow(a), crow(b));
        gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v;
        gram(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a)) = v;
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) throw Error(kStage, "eigen-decomposition failed");
    for (std::size_t c = 0; c < 2; ++c) {
      const auto idx = static_cast<Eigen::Index>(n - 1 - c);
      lambda[c] = solver.eigenvalues()(idx);
      out.axes[c].assign(d, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        kernels::axpy(solver.eigenvectors()(static_cast<Eigen::Index>(i), idx), crow(i),
                      out.axes[c]);
      }
      const double norm = std::sqrt(kernels::dot(out.axes[c], out.axes[c]));
      if (norm > 0.0) {
        for (double& v : out.axes[c]) v /= norm;
      }
    }
  }

  // Eigenvalues below this are rounding noise of a rank-deficient spectrum.
  const double floor = 1e-12 * lambda[0];
  for (std::size_t c = 0; c < 2; ++c) {
    if (lambda[c] < floor) {
      lambda[c] = 0.0;
      if (c == 1) {
        // Any unit vector orthogonal to the first axis spans the null direction;
        // pick one deterministically by Gram-Schmidt on the coordinate basis.
        const auto& a0 = out.axes[0];
        std::size_t best_j = 0;
        for (std::size_t j = 1; j < d; ++j) {
          if (std::abs(a0[j]) < std::abs(a0[best_j])) best_j = j;
        }
        std::vector<double> e(d, 0.0);
        e[best_j] = 1.0;
        kernels::axpy(-a0[best_j], a0, e);
        const double norm = std::sqrt(kernels::dot(e, e));
        for (double& v : e) v /= norm;
        out.axes[1] = std::move(e);
      }
    }
    out.variance_ratio[c] = std::clamp(lambda[c] / out.total_variance, 0.0, 1.0);

    auto& axis = out.axes[c];
    std::size_t big = 0;
    for (std::size_t j = 1; j < d; ++j) {
      if (std::abs(axis[j]) > std::abs(axis[big])) big = j;
    }
    if (axis[big] < 0.0) {
      for (double& v : axis) v = -v;
    }
  }

  out.coordinates.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.coordinates[i] = {kernels::dot(crow(i), out.axes[0]), kernels::dot(crow(i), out.axes[1])};
  }
  return out;
}

std::string nearest_to_centroid(const ClusterModel& model, std::size_t cluster,
                                const MemberFilter& filter) {
  if (cluster >= model.k) {
    throw ValidationError(kStage, "cluster index " + std::to_string(cluster) + " out of range");
  }
  const std::string* best_id = nullptr;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i : model.members(cluster)) {
    const auto& id = model.ids[i];
    if (filter && !filter(id)) continue;
    const double dist = kernels::squared_distance(model.point(i), model.centroid(cluster));
    if (!best_id || dist < best_d || (dist == best_d && id < *best_id)) {
      best_id = &id;
      best_d = dist;
    }
  }
  if (!best_id) {
    throw ValidationError(kStage, "cluster " + std::to_string(cluster) + " has no candidates");
  }
  return *best_id;
}

}  // namespace mstage

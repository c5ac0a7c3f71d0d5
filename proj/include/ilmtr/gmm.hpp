#pragma once

#include "ilmtr/config.hpp"
#include "ilmtr/tree_node.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace ilmtr {

// Row-major n x d matrix of points.
class PointSet {
public:
    PointSet() = default;
    PointSet(std::size_t n, std::size_t d) : n_(n), d_(d), data_(n * d, 0.0) {}
    PointSet(std::size_t n, std::size_t d, std::vector<double> data);

    std::size_t size() const { return n_; }
    std::size_t dim() const { return d_; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * d_, d_}; }
    std::span<double> row(std::size_t i) { return {data_.data() + i * d_, d_}; }

private:
    std::size_t n_ = 0;
    std::size_t d_ = 0;
    std::vector<double> data_;
};

class GmmError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kVarianceFloor = 1e-6;

struct EmOptions {
    double tolerance = 1e-6;
    int max_iterations = 100;
    // Independent initializations; the fit with the highest likelihood wins.
    int restarts = 3;
};

// Diagonal-covariance Gaussian mixture.
struct GmmModel {
    std::size_t k = 0;
    std::size_t d = 0;
    std::vector<double> weights;    // k
    std::vector<double> means;      // k x d
    std::vector<double> variances;  // k x d
    double log_likelihood = 0.0;
    int iterations_run = 0;
    // Log-likelihood after initialization and after every EM iteration.
    std::vector<double> log_likelihood_trace;

    std::span<const double> mean(std::size_t c) const { return {means.data() + c * d, d}; }
    std::span<const double> variance(std::size_t c) const { return {variances.data() + c * d, d}; }
};

// Greedy k-means++ seeding followed by EM until the log-likelihood gain
// drops below the tolerance or the iteration cap is hit. Repeated for each
// restart with a derived seed.
GmmModel em_fit(const PointSet& points, std::size_t k, std::uint64_t seed, const EmOptions& options = {});

// n x k posterior membership probabilities, row-major.
std::vector<double> responsibilities(const GmmModel& model, const PointSet& points);

double log_likelihood(const GmmModel& model, const PointSet& points);

// (k-1) + 2kd free parameters; lower is better.
double bic_score(const GmmModel& model, const PointSet& points);

struct BicSweep {
    std::size_t selected_k = 1;
    std::vector<double> scores;   // index k-1
    std::vector<GmmModel> models; // index k-1
};

// Fits k = 1..min(k_max, n), each with seed + k, and keeps the smallest k
// whose BIC is within 1e-9 of the minimum.
BicSweep bic_sweep(const PointSet& points, std::size_t k_max, std::uint64_t seed);

std::size_t select_num_clusters(const PointSet& points, std::size_t k_max, std::uint64_t seed);

struct Membership {
    std::size_t cluster = 0;
    double responsibility = 0.0;

    bool operator==(const Membership&) const = default;
};

struct ClusterAssignment {
    // Node ids of the clustered points, in input order.
    std::vector<NodeId> node_ids;
    // Per point, the clusters it belongs to.
    std::vector<std::vector<Membership>> memberships;
    // Per cluster, ascending point indices. Clusters are ordered by their
    // first member, identical member sets are merged and none is empty.
    std::vector<std::vector<std::size_t>> clusters;
    std::size_t fitted_k = 0;
};

// Soft assignment: a point joins every component with responsibility at or
// above `threshold`, or its argmax component if none qualifies.
ClusterAssignment assign_memberships(std::span<const double> resp, std::size_t n, std::size_t k, double threshold);

// Optional projection applied to the point set before fitting.
using ProjectionHook = std::function<PointSet(const PointSet&)>;

// Clusters the summary nodes of one layer (surprise nodes are skipped).
// Returns std::nullopt when fewer than min_layer_size summaries remain,
// which ends tree growth.
std::optional<ClusterAssignment> cluster_layer(std::span<const TreeNode> nodes, const RetrieverParams& params,
                                               const ProjectionHook& projection = {});

}  // namespace ilmtr

#include "ilmtr/gmm.hpp"

#include "ilmtr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <thread>

namespace ilmtr {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // ln(2*pi)

double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double diff = a[j] - b[j];
        s += diff * diff;
    }
    return s;
}

// Per-component log(weight) + log N(x | mean, diag(var)) for every point,
// n x k row-major. Returns the total log-likelihood.
double weighted_log_densities(const GmmModel& m, const PointSet& x, std::vector<double>& out) {
    const std::size_t n = x.size(), k = m.k, d = m.d;
    out.assign(n * k, 0.0);
    std::vector<double> log_norm(k);
    for (std::size_t c = 0; c < k; ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += kLog2Pi + std::log(m.variances[c * d + j]);
        log_norm[c] = (m.weights[c] > 0 ? std::log(m.weights[c]) : -std::numeric_limits<double>::infinity()) - 0.5 * s;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = x.row(i);
        for (std::size_t c = 0; c < k; ++c) {
            double q = 0.0;
            const double* mu = m.means.data() + c * d;
            const double* var = m.variances.data() + c * d;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = xi[j] - mu[j];
                q += diff * diff / var[j];
            }
            out[i * k + c] = log_norm[c] - 0.5 * q;
        }
        total += log_sum_exp(std::span<const double>(out.data() + i * k, k));
    }
    return total;
}

// Turns weighted log densities into responsibilities in place.
void normalize_rows(std::vector<double>& logp, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < n; ++i) {
        double* row = logp.data() + i * k;
        const double lse = log_sum_exp(std::span<const double>(row, k));
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            row[c] = std::exp(row[c] - lse);
            sum += row[c];
        }
        for (std::size_t c = 0; c < k; ++c) row[c] /= sum;
    }
}

void check_points(const PointSet& points) {
    for (std::size_t i = 0; i < points.size(); ++i)
        for (double v : points.row(i))
            if (!std::isfinite(v)) throw GmmError("point " + std::to_string(i) + " has a non-finite coordinate");
}

std::vector<double> global_variance(const PointSet& x) {
    const std::size_t n = x.size(), d = x.dim();
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += x.row(i)[j];
    for (double& v : mean) v /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = x.row(i)[j] - mean[j];
            var[j] += diff * diff;
        }
    for (double& v : var) v = std::max(v / static_cast<double>(n), kVarianceFloor);
    return var;
}

// Greedy k-means++: each step samples a few candidates by D^2 weight and
// keeps the one that lowers the total squared distance the most.
std::vector<std::size_t> kmeans_plus_plus(const PointSet& x, std::size_t k, Rng& rng) {
    const std::size_t n = x.size();
    const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
    std::vector<std::size_t> centers{rng.below(n)};
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) dist[i] = squared_distance(x.row(i), x.row(centers[0]));
    std::vector<double> candidate_dist(n);
    while (centers.size() < k) {
        double total = 0.0;
        for (double v : dist) total += v;
        std::size_t best_pick = 0;
        double best_total = std::numeric_limits<double>::infinity();
        std::vector<double> best_dist;
        for (std::size_t t = 0; t < trials; ++t) {
            std::size_t pick = n - 1;
            if (total <= 0.0) {
                pick = rng.below(n);
            } else {
                const double target = rng.uniform() * total;
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += dist[i];
                    if (acc > target) {
                        pick = i;
                        break;
                    }
                }
            }
            double cand_total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                candidate_dist[i] = std::min(dist[i], squared_distance(x.row(i), x.row(pick)));
                cand_total += candidate_dist[i];
            }
            if (cand_total < best_total) {
                best_total = cand_total;
                best_pick = pick;
                best_dist = candidate_dist;
            }
        }
        centers.push_back(best_pick);
        dist = std::move(best_dist);
    }
    return centers;
}

void m_step(GmmModel& m, const PointSet& x, const std::vector<double>& resp) {
    const std::size_t n = x.size(), k = m.k, d = m.d;
    for (std::size_t c = 0; c < k; ++c) {
        double nk = 0.0;
        for (std::size_t i = 0; i < n; ++i) nk += resp[i * k + c];
        m.weights[c] = nk / static_cast<double>(n);
        // An emptied component keeps its mean and variance; weight 0 removes
        // it from the likelihood.
        if (nk <= 0.0) continue;
        double* mu = m.means.data() + c * d;
        double* var = m.variances.data() + c * d;
        std::fill(mu, mu + d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = resp[i * k + c];
            if (r == 0.0) continue;
            const auto xi = x.row(i);
            for (std::size_t j = 0; j < d; ++j) mu[j] += r * xi[j];
        }
        for (std::size_t j = 0; j < d; ++j) mu[j] /= nk;
        std::fill(var, var + d, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double r = resp[i * k + c];
            if (r == 0.0) continue;
            const auto xi = x.row(i);
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = xi[j] - mu[j];
                var[j] += r * diff * diff;
            }
        }
        for (std::size_t j = 0; j < d; ++j) var[j] = std::max(var[j] / nk, kVarianceFloor);
    }
}

}  // namespace

PointSet::PointSet(std::size_t n, std::size_t d, std::vector<double> data) : n_(n), d_(d), data_(std::move(data)) {
    if (data_.size() != n * d) throw GmmError("point buffer size does not match n x d");
}

namespace {

GmmModel em_run(const PointSet& points, std::size_t k, std::uint64_t seed, const EmOptions& options) {
    const std::size_t n = points.size(), d = points.dim();
    Rng rng(seed);
    GmmModel m;
    m.k = k;
    m.d = d;
    m.weights.assign(k, 1.0 / static_cast<double>(k));
    m.means.resize(k * d);
    m.variances.resize(k * d);
    const auto var0 = global_variance(points);
    const auto centers = kmeans_plus_plus(points, k, rng);
    for (std::size_t c = 0; c < k; ++c) {
        const auto row = points.row(centers[c]);
        std::copy(row.begin(), row.end(), m.means.begin() + static_cast<std::ptrdiff_t>(c * d));
        std::copy(var0.begin(), var0.end(), m.variances.begin() + static_cast<std::ptrdiff_t>(c * d));
    }

    std::vector<double> work;
    double ll = weighted_log_densities(m, points, work);
    m.log_likelihood_trace.push_back(ll);
    for (int it = 1; it <= options.max_iterations; ++it) {
        normalize_rows(work, n, k);
        m_step(m, points, work);
        const double next = weighted_log_densities(m, points, work);
        m.log_likelihood_trace.push_back(next);
        m.iterations_run = it;
        const double gain = next - ll;
        ll = next;
        if (gain < options.tolerance) break;
    }
    m.log_likelihood = ll;
    return m;
}

}  // namespace

GmmModel em_fit(const PointSet& points, std::size_t k, std::uint64_t seed, const EmOptions& options) {
    const std::size_t n = points.size(), d = points.dim();
    if (k < 1) throw GmmError("em_fit: k must be >= 1");
    if (d < 1) throw GmmError("em_fit: dimension must be >= 1");
    if (n < k) throw GmmError("em_fit: " + std::to_string(n) + " points cannot support " + std::to_string(k) +
                              " components");
    check_points(points);

    GmmModel best = em_run(points, k, seed, options);
    for (int r = 1; r < std::max(1, options.restarts); ++r) {
        auto next = em_run(points, k, seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(r), options);
        if (next.log_likelihood > best.log_likelihood) best = std::move(next);
    }
    return best;
}

std::vector<double> responsibilities(const GmmModel& model, const PointSet& points) {
    if (points.dim() != model.d) throw GmmError("responsibilities: dimension mismatch");
    std::vector<double> r;
    weighted_log_densities(model, points, r);
    normalize_rows(r, points.size(), model.k);
    return r;
}

double log_likelihood(const GmmModel& model, const PointSet& points) {
    if (points.dim() != model.d) throw GmmError("log_likelihood: dimension mismatch");
    std::vector<double> work;
    return weighted_log_densities(model, points, work);
}

double bic_score(const GmmModel& model, const PointSet& points) {
    if (points.dim() != model.d)
        throw GmmError("bic_score: model dimension " + std::to_string(model.d) + " vs points " +
                       std::to_string(points.dim()));
    const double k = static_cast<double>(model.k), d = static_cast<double>(model.d);
    const double params = (k - 1.0) + k * d + k * d;
    return params * std::log(static_cast<double>(points.size())) - 2.0 * log_likelihood(model, points);
}

BicSweep bic_sweep(const PointSet& points, std::size_t k_max, std::uint64_t seed) {
    if (k_max < 1) throw GmmError("bic_sweep: k_max must be >= 1");
    const std::size_t upper = std::min(k_max, points.size());
    if (upper < 1) throw GmmError("bic_sweep: no points");

    BicSweep sweep;
    sweep.models.resize(upper);
    sweep.scores.resize(upper);
    // Each k owns its RNG stream (seed + k), so fits are independent.
    const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    for (std::size_t start = 1; start <= upper; start += workers) {
        std::vector<std::future<void>> batch;
        for (std::size_t k = start; k <= std::min(upper, start + workers - 1); ++k) {
            batch.push_back(std::async(std::launch::async, [&, k] {
                sweep.models[k - 1] = em_fit(points, k, seed + k);
                sweep.scores[k - 1] = bic_score(sweep.models[k - 1], points);
            }));
        }
        for (auto& f : batch) f.get();
    }
    const double best = *std::min_element(sweep.scores.begin(), sweep.scores.end());
    for (std::size_t k = 1; k <= upper; ++k) {
        if (sweep.scores[k - 1] <= best + 1e-9) {
            sweep.selected_k = k;
            break;
        }
    }
    return sweep;
}

std::size_t select_num_clusters(const PointSet& points, std::size_t k_max, std::uint64_t seed) {
    return bic_sweep(points, k_max, seed).selected_k;
}

ClusterAssignment assign_memberships(std::span<const double> resp, std::size_t n, std::size_t k, double threshold) {
    std::vector<std::vector<std::pair<std::size_t, double>>> raw(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 0; c < k; ++c) {
            const double r = resp[i * k + c];
            if (r >= threshold) raw[i].emplace_back(c, r);
            if (r > resp[i * k + best]) best = c;
        }
        if (raw[i].empty()) raw[i].emplace_back(best, resp[i * k + best]);
    }

    std::vector<std::vector<std::size_t>> by_component(k);
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& [c, r] : raw[i]) by_component[c].push_back(i);

    // Canonical labels: non-empty member lists, deduplicated, sorted.
    std::vector<std::vector<std::size_t>> clusters;
    for (auto& members : by_component)
        if (!members.empty()) clusters.push_back(members);
    std::sort(clusters.begin(), clusters.end());
    clusters.erase(std::unique(clusters.begin(), clusters.end()), clusters.end());

    ClusterAssignment out;
    out.fitted_k = k;
    out.memberships.resize(n);
    for (std::size_t c = 0; c < k; ++c) {
        if (by_component[c].empty()) continue;
        const auto label = static_cast<std::size_t>(
            std::lower_bound(clusters.begin(), clusters.end(), by_component[c]) - clusters.begin());
        for (std::size_t i : by_component[c]) {
            const double r = resp[i * k + c];
            auto& list = out.memberships[i];
            auto existing = std::find_if(list.begin(), list.end(), [&](const Membership& m) { return m.cluster == label; });
            if (existing == list.end()) list.push_back({label, r});
            else existing->responsibility += r;
        }
    }
    for (auto& list : out.memberships)
        std::sort(list.begin(), list.end(), [](const Membership& a, const Membership& b) { return a.cluster < b.cluster; });
    out.clusters = std::move(clusters);
    return out;
}

std::optional<ClusterAssignment> cluster_layer(std::span<const TreeNode> nodes, const RetrieverParams& params,
                                               const ProjectionHook& projection) {
    std::vector<const TreeNode*> summaries;
    for (const auto& node : nodes)
        if (node.kind != NodeKind::surprise) summaries.push_back(&node);
    const std::size_t n = summaries.size();
    if (n < static_cast<std::size_t>(params.min_layer_size) || n == 0) return std::nullopt;

    const std::size_t d = summaries.front()->embedding.dim();
    PointSet points(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& v = summaries[i]->embedding.vector;
        if (v.size() != d) throw GmmError("cluster_layer: node embeddings differ in dimension");
        std::copy(v.begin(), v.end(), points.row(i).begin());
    }
    if (projection) points = projection(points);

    const std::size_t k_cap = std::max<std::size_t>(1, std::min<std::size_t>(params.bic_k_max, n - 1));
    auto sweep = bic_sweep(points, k_cap, params.rng_seed);
    const auto& model = sweep.models[sweep.selected_k - 1];
    const auto resp = responsibilities(model, points);
    auto assignment = assign_memberships(resp, n, model.k, params.soft_assign_threshold);
    for (const auto* node : summaries) assignment.node_ids.push_back(node->id);
    return assignment;
}

}  // namespace ilmtr

// Navigable small-world graph index with a fixed build seed. Construction
// runs in two passes: the classic incremental insertion (greedy descent
// through the upper layers, then a beam search per layer with heuristic
// neighbor selection — diversified, pruned links recycled), followed by a
// densification sweep that widens every base-layer neighbor list against
// the finished graph. Every container is ordered and every tie is broken
// by node index, so a given (input order, seed) always produces the same
// graph and the same query results.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <queue>
#include <random>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "index_internal.hpp"
#include "kcomp/errors.hpp"

namespace kcomp::detail {

namespace {

// Orders (distance, node) pairs ascending with node index as tiebreak.
struct NearComparator {
    bool operator()(const std::pair<double, std::uint32_t>& a,
                    const std::pair<double, std::uint32_t>& b) const {
        if (a.first != b.first) return a.first > b.first;  // min-heap by distance
        return a.second > b.second;
    }
};

struct FarComparator {
    bool operator()(const std::pair<double, std::uint32_t>& a,
                    const std::pair<double, std::uint32_t>& b) const {
        if (a.first != b.first) return a.first < b.first;  // max-heap by distance
        return a.second < b.second;
    }
};

// Final base-layer out-degree, as a multiple of neighbor_degree. Embedding
// vectors concentrate with dimension: a query's true nearest neighbors are
// nearly orthogonal to each other, so each one is only discovered through
// its own incoming links, and the insertion caps alone leave too few of
// those for small query beams. Widening the base layer trades memory and
// per-hop cost for recall at the default beam width.
constexpr int kBaseLayerDensity = 8;

}  // namespace

HnswIndex::HnswIndex(std::vector<std::string> ids, RowMajorMatrixXf matrix,
                     const HnswParams& params)
    : ids_(std::move(ids)), matrix_(std::move(matrix)), params_(params) {
    if (params_.neighbor_degree < 2) throw ConfigError("neighbor_degree must be >= 2");
    if (params_.construction_beam < 1 || params_.query_beam < 1) {
        throw ConfigError("construction_beam and query_beam must be >= 1");
    }
    const std::size_t n = ids_.size();
    links_.resize(n);
    levels_.resize(n);

    // Geometric level assignment, drawn once per node in insertion order.
    std::mt19937_64 rng(params_.build_seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double level_scale = 1.0 / std::log(static_cast<double>(params_.neighbor_degree));
    for (std::size_t i = 0; i < n; ++i) {
        double u = std::max(uniform(rng), 1e-15);
        levels_[i] = static_cast<int>(-std::log(u) * level_scale);
    }

    for (std::size_t i = 0; i < n; ++i) {
        links_[i].resize(static_cast<std::size_t>(levels_[i]) + 1);
        insert(static_cast<std::uint32_t>(i), levels_[i]);
    }
    densify_base_layer();
}

// Re-links every node at the base layer using searches over the completed
// graph. Runs after all insertions so each node draws candidates from the
// whole collection, not the prefix that existed when it arrived; lists are
// swapped in only once the sweep finishes, keeping the result independent
// of sweep order.
void HnswIndex::densify_base_layer() {
    const int target = kBaseLayerDensity * params_.neighbor_degree;
    const std::size_t beam = std::max<std::size_t>(
        static_cast<std::size_t>(params_.construction_beam),
        static_cast<std::size_t>(target) + 1);
    const std::size_t n = ids_.size();
    std::vector<std::vector<std::uint32_t>> widened(n);
    for (std::size_t i = 0; i < n; ++i) {
        const float* q = matrix_.row(static_cast<Eigen::Index>(i)).data();
        std::uint32_t entry = entry_point_;
        for (int level = max_level_; level > 0; --level) {
            entry = greedy_descend(q, entry, level);
        }
        auto candidates = search_layer(q, entry, 0, beam);
        widened[i] = select_neighbors(static_cast<std::uint32_t>(i),
                                      std::move(candidates), target);
        std::sort(widened[i].begin(), widened[i].end());
    }
    for (std::size_t i = 0; i < n; ++i) links_[i][0] = std::move(widened[i]);
}

int HnswIndex::max_link_count(int level) const {
    return level == 0 ? 2 * params_.neighbor_degree : params_.neighbor_degree;
}

double HnswIndex::node_distance(std::uint32_t a, std::uint32_t b) const {
    return -dot_f32(matrix_.row(a).data(), matrix_.row(b).data(),
                    static_cast<std::size_t>(matrix_.cols()));
}

double HnswIndex::query_distance(const float* q, std::uint32_t node) const {
    return -dot_f32(q, matrix_.row(node).data(),
                    static_cast<std::size_t>(matrix_.cols()));
}

std::uint32_t HnswIndex::greedy_descend(const float* q, std::uint32_t entry,
                                        int level) const {
    std::uint32_t current = entry;
    double best = query_distance(q, current);
    bool improved = true;
    while (improved) {
        improved = false;
        for (std::uint32_t neighbor : links_[current][static_cast<std::size_t>(level)]) {
            double d = query_distance(q, neighbor);
            if (d < best || (d == best && neighbor < current)) {
                best = d;
                current = neighbor;
                improved = true;
            }
        }
    }
    return current;
}

std::vector<std::pair<double, std::uint32_t>> HnswIndex::search_layer(
    const float* q, std::uint32_t entry, int level, std::size_t ef) const {
    std::priority_queue<std::pair<double, std::uint32_t>,
                        std::vector<std::pair<double, std::uint32_t>>, NearComparator>
        candidates;
    std::priority_queue<std::pair<double, std::uint32_t>,
                        std::vector<std::pair<double, std::uint32_t>>, FarComparator>
        found;
    std::unordered_set<std::uint32_t> visited;

    const double entry_dist = query_distance(q, entry);
    candidates.emplace(entry_dist, entry);
    found.emplace(entry_dist, entry);
    visited.insert(entry);

    while (!candidates.empty()) {
        auto [dist, node] = candidates.top();
        if (dist > found.top().first && found.size() >= ef) break;
        candidates.pop();
        for (std::uint32_t neighbor : links_[node][static_cast<std::size_t>(level)]) {
            if (!visited.insert(neighbor).second) continue;
            double d = query_distance(q, neighbor);
            if (found.size() < ef || d < found.top().first) {
                candidates.emplace(d, neighbor);
                found.emplace(d, neighbor);
                while (found.size() > ef) found.pop();
            }
        }
    }
    std::vector<std::pair<double, std::uint32_t>> result;
    result.reserve(found.size());
    while (!found.empty()) {
        result.push_back(found.top());
        found.pop();
    }
    std::sort(result.begin(), result.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    });
    return result;
}

std::vector<std::uint32_t> HnswIndex::select_neighbors(
    std::uint32_t node, std::vector<std::pair<double, std::uint32_t>> candidates,
    int max_links) const {
    // Diversified selection: a candidate is kept only if it is closer to the
    // new node than to every already-kept neighbor; pruned candidates fill
    // remaining slots. This spreads links directionally, which is what keeps
    // recall high on uniformly random vectors.
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    });
    std::vector<std::uint32_t> kept;
    std::vector<std::uint32_t> pruned;
    for (const auto& [dist, candidate] : candidates) {
        if (candidate == node) continue;
        if (static_cast<int>(kept.size()) >= max_links) break;
        bool diverse = true;
        for (std::uint32_t existing : kept) {
            if (node_distance(candidate, existing) < dist) {
                diverse = false;
                break;
            }
        }
        if (diverse) {
            kept.push_back(candidate);
        } else {
            pruned.push_back(candidate);
        }
    }
    for (std::uint32_t candidate : pruned) {
        if (static_cast<int>(kept.size()) >= max_links) break;
        kept.push_back(candidate);
    }
    return kept;
}

void HnswIndex::insert(std::uint32_t node, int node_level) {
    if (max_level_ < 0) {
        entry_point_ = node;
        max_level_ = node_level;
        return;
    }
    const float* q = matrix_.row(node).data();
    std::uint32_t entry = entry_point_;
    for (int level = max_level_; level > node_level; --level) {
        entry = greedy_descend(q, entry, level);
    }
    for (int level = std::min(max_level_, node_level); level >= 0; --level) {
        auto candidates = search_layer(
            q, entry, level, static_cast<std::size_t>(params_.construction_beam));
        auto neighbors = select_neighbors(node, candidates, max_link_count(level));
        auto& node_links = links_[node][static_cast<std::size_t>(level)];
        node_links = neighbors;
        std::sort(node_links.begin(), node_links.end());

        for (std::uint32_t neighbor : neighbors) {
            auto& back_links = links_[neighbor][static_cast<std::size_t>(level)];
            back_links.push_back(node);
            const int cap = max_link_count(level);
            if (static_cast<int>(back_links.size()) > cap) {
                std::vector<std::pair<double, std::uint32_t>> scored;
                scored.reserve(back_links.size());
                for (std::uint32_t link : back_links) {
                    scored.emplace_back(node_distance(neighbor, link), link);
                }
                back_links = select_neighbors(neighbor, std::move(scored), cap);
            }
            std::sort(back_links.begin(), back_links.end());
        }
        entry = candidates.front().second;
    }
    if (node_level > max_level_) {
        max_level_ = node_level;
        entry_point_ = node;
    }
}

std::vector<RetrievalResult> HnswIndex::search(const std::vector<float>& query,
                                               std::size_t k) const {
    if (query.size() != dim()) {
        throw ValidationError("query dimension " + std::to_string(query.size()) +
                              " != index dimension " + std::to_string(dim()));
    }
    if (k == 0) throw ValidationError("search requires k >= 1");
    std::uint32_t entry = entry_point_;
    for (int level = max_level_; level > 0; --level) {
        entry = greedy_descend(query.data(), entry, level);
    }
    const std::size_t ef = std::max<std::size_t>(
        static_cast<std::size_t>(params_.query_beam), k);
    auto nearest = search_layer(query.data(), entry, 0, ef);
    std::vector<std::pair<double, const std::string*>> scored;
    scored.reserve(nearest.size());
    for (const auto& [dist, node] : nearest) {
        scored.emplace_back(-dist, &ids_[node]);
    }
    return rank_results(std::move(scored), k);
}

void HnswIndex::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::json meta = {{"format_version", 1},
                           {"kind", "approximate_graph"},
                           {"dim", dim()},
                           {"count", count()},
                           {"vector_encoding", "float32-le"},
                           {"build_params",
                            {{"neighbor_degree", params_.neighbor_degree},
                             {"construction_beam", params_.construction_beam},
                             {"query_beam", params_.query_beam},
                             {"build_seed", params_.build_seed}}}};
    std::ofstream meta_out(dir / "index.meta.json", std::ios::binary);
    if (!meta_out) throw IoError("cannot write index.meta.json");
    meta_out << meta.dump(2) << '\n';

    std::ofstream bin(dir / "index.bin", std::ios::binary);
    if (!bin) throw IoError("cannot write index.bin");
    write_f32(bin, matrix_.data(), count() * dim());
    for (const auto& id : ids_) write_string(bin, id);
    for (int level : levels_) write_u32(bin, static_cast<std::uint32_t>(level));
    write_u32(bin, entry_point_);
    write_u32(bin, static_cast<std::uint32_t>(max_level_));
    for (const auto& node_links : links_) {
        for (const auto& level_links : node_links) {
            write_u32(bin, static_cast<std::uint32_t>(level_links.size()));
            for (std::uint32_t link : level_links) write_u32(bin, link);
        }
    }
    if (!bin) throw IoError("short write to index.bin");
}

std::unique_ptr<HnswIndex> HnswIndex::load_bin(std::istream& in, std::size_t count,
                                               std::size_t dim,
                                               const HnswParams& params) {
    std::unique_ptr<HnswIndex> index(new HnswIndex());
    index->params_ = params;
    index->matrix_.resize(static_cast<Eigen::Index>(count),
                          static_cast<Eigen::Index>(dim));
    read_f32(in, index->matrix_.data(), count * dim);
    index->ids_.reserve(count);
    for (std::size_t i = 0; i < count; ++i) index->ids_.push_back(read_string(in));
    index->levels_.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        index->levels_.push_back(static_cast<int>(read_u32(in)));
    }
    index->entry_point_ = read_u32(in);
    index->max_level_ = static_cast<int>(read_u32(in));
    index->links_.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        index->links_[i].resize(static_cast<std::size_t>(index->levels_[i]) + 1);
        for (auto& level_links : index->links_[i]) {
            std::uint32_t n = read_u32(in);
            level_links.resize(n);
            for (auto& link : level_links) link = read_u32(in);
        }
    }
    return index;
}

}  // namespace kcomp::detail

// Shared internals of the two index implementations: binary IO primitives,
// the fixed-order dot product, and the HNSW class surfaced to load_index.
#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kcomp/errors.hpp"
#include "kcomp/retrieval.hpp"

static_assert(std::endian::native == std::endian::little,
              "index.bin is little-endian; big-endian hosts are unsupported");

namespace kcomp::detail {

using RowMajorMatrixXf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Cosine similarity between two stored-normalized vectors. Plain left-to-
// right double accumulation: any independent re-implementation that sums in
// the same order reproduces these bits exactly, which keeps tie-breaks
// consistent across the index, its oracle tests, and reloaded copies.
inline double dot_f32(const float* a, const float* b, std::size_t n) {
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return sum;
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw IoError("index.bin truncated");
    return v;
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw IoError("index.bin truncated");
    return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    std::uint32_t len = read_u32(in);
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("index.bin truncated");
    return s;
}

inline void write_f32(std::ostream& out, const float* data, std::size_t n) {
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(n * sizeof(float)));
}

inline void read_f32(std::istream& in, float* data, std::size_t n) {
    in.read(reinterpret_cast<char*>(data),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw IoError("index.bin truncated");
}

// Validates shape/normalization and packs vectors into one row-major matrix.
RowMajorMatrixXf pack_vectors(const std::vector<std::string>& ids,
                              const std::vector<std::vector<float>>& vectors);

// Final ranking shared by both index kinds: (score desc, chunk_id asc).
std::vector<RetrievalResult> rank_results(
    std::vector<std::pair<double, const std::string*>> scored, std::size_t k);

class ExactFlatIndex final : public VectorIndex {
public:
    ExactFlatIndex(std::vector<std::string> ids, RowMajorMatrixXf matrix);

    IndexKind kind() const override { return IndexKind::exact_flat; }
    std::size_t dim() const override { return static_cast<std::size_t>(matrix_.cols()); }
    std::size_t count() const override { return ids_.size(); }
    std::vector<RetrievalResult> search(const std::vector<float>& query,
                                        std::size_t k) const override;
    void save(const std::filesystem::path& dir) const override;

    static std::unique_ptr<ExactFlatIndex> load_bin(std::istream& in, std::size_t count,
                                                    std::size_t dim);

private:
    std::vector<std::string> ids_;
    RowMajorMatrixXf matrix_;
};

class HnswIndex final : public VectorIndex {
public:
    // Builds the graph by inserting vectors in order under `params`.
    HnswIndex(std::vector<std::string> ids, RowMajorMatrixXf matrix,
              const HnswParams& params);

    IndexKind kind() const override { return IndexKind::approximate_graph; }
    std::size_t dim() const override { return static_cast<std::size_t>(matrix_.cols()); }
    std::size_t count() const override { return ids_.size(); }
    std::vector<RetrievalResult> search(const std::vector<float>& query,
                                        std::size_t k) const override;
    void save(const std::filesystem::path& dir) const override;

    static std::unique_ptr<HnswIndex> load_bin(std::istream& in, std::size_t count,
                                               std::size_t dim, const HnswParams& params);

    const HnswParams& params() const { return params_; }

private:
    HnswIndex() = default;  // used by load_bin

    int max_link_count(int level) const;
    double node_distance(std::uint32_t a, std::uint32_t b) const;
    double query_distance(const float* q, std::uint32_t node) const;

    // Beam search over one layer starting from `entry`; returns up to `ef`
    // nearest nodes as (distance, node) sorted ascending.
    std::vector<std::pair<double, std::uint32_t>> search_layer(
        const float* q, std::uint32_t entry, int level, std::size_t ef) const;
    std::uint32_t greedy_descend(const float* q, std::uint32_t entry, int level) const;
    std::vector<std::uint32_t> select_neighbors(
        std::uint32_t node, std::vector<std::pair<double, std::uint32_t>> candidates,
        int max_links) const;
    void insert(std::uint32_t node, int node_level);
    void densify_base_layer();

    std::vector<std::string> ids_;
    RowMajorMatrixXf matrix_;
    HnswParams params_;
    // links_[node][level] = neighbor node indices, kept sorted for
    // deterministic traversal and serialization.
    std::vector<std::vector<std::vector<std::uint32_t>>> links_;
    std::vector<int> levels_;
    std::uint32_t entry_point_ = 0;
    int max_level_ = -1;
};

}  // namespace kcomp::detail

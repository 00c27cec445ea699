#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "kcomp/backends.hpp"
#include "kcomp/corpus_store.hpp"

namespace kcomp {

struct RetrievalResult {
    std::string chunk_id;
    double score = 0;  // cosine similarity (vectors are stored normalized)
    int rank = 0;      // 1-based
};

enum class IndexKind { exact_flat, approximate_graph };

std::string to_string(IndexKind kind);
IndexKind index_kind_from_string(std::string_view s);

// Build parameters for the approximate navigable-small-world graph.
struct HnswParams {
    int neighbor_degree = 16;     // max links per node above layer 0 (2x at 0)
    int construction_beam = 200;  // beam width while inserting
    int query_beam = 64;          // beam width while searching
    std::uint64_t build_seed = 0; // drives level assignment; fixed seed = fixed graph
};

// A sealed vector index over chunk ids. Queries are safe for unrestricted
// concurrent use. Scores are cosine similarities computed in double with a
// fixed summation order, so equal vectors produce exactly equal scores and
// the (score desc, chunk_id asc) tie-break is reproducible everywhere.
class VectorIndex {
public:
    virtual ~VectorIndex() = default;
    virtual IndexKind kind() const = 0;
    virtual std::size_t dim() const = 0;
    virtual std::size_t count() const = 0;
    virtual std::vector<RetrievalResult> search(const std::vector<float>& query,
                                                std::size_t k) const = 0;
    // Writes index.meta.json + index.bin into `dir`.
    virtual void save(const std::filesystem::path& dir) const = 0;
};

std::unique_ptr<VectorIndex> build_index(std::vector<std::string> chunk_ids,
                                         std::vector<std::vector<float>> vectors,
                                         IndexKind kind, const HnswParams& params = {});

std::unique_ptr<VectorIndex> load_index(const std::filesystem::path& dir);

// Embeds texts in fixed-size batches through the backend and L2-normalizes
// every vector regardless of what the backend returned.
std::vector<std::vector<float>> embed_batch(EmbeddingBackend& backend,
                                            const std::vector<std::string>& texts,
                                            const std::string& prefix = "",
                                            std::size_t batch_size = 32);

struct RetrievedPassage {
    std::string chunk_id;
    double score = 0;
    int rank = 0;
    std::string text;  // "title\nbody"
};

std::string render_passage(const Chunk& chunk);

// Embeds the question, searches the index, and renders the top-k chunks in
// rank order.
std::vector<RetrievedPassage> retrieve_passages(const std::string& question,
                                                std::size_t k, const CorpusStore& store,
                                                const VectorIndex& index,
                                                EmbeddingBackend& embedder,
                                                const std::string& query_prefix = "");

}  // namespace kcomp

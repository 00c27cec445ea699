#include "kcomp/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string_view>

#include <nlohmann/json.hpp>

#include "index_internal.hpp"
#include "kcomp/errors.hpp"

namespace kcomp {

using detail::RowMajorMatrixXf;
using nlohmann::json;

std::string to_string(IndexKind kind) {
    return kind == IndexKind::exact_flat ? "exact_flat" : "approximate_graph";
}

IndexKind index_kind_from_string(std::string_view s) {
    if (s == "exact_flat") return IndexKind::exact_flat;
    if (s == "approximate_graph") return IndexKind::approximate_graph;
    throw ConfigError("unknown index kind: " + std::string(s));
}

std::vector<std::vector<float>> embed_batch(EmbeddingBackend& backend,
                                            const std::vector<std::string>& texts,
                                            const std::string& prefix,
                                            std::size_t batch_size) {
    if (texts.empty()) throw ValidationError("embed_batch requires >= 1 text");
    if (batch_size == 0) throw ConfigError("embed batch_size must be positive");
    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    std::size_t expected_dim = 0;
    for (std::size_t begin = 0; begin < texts.size(); begin += batch_size) {
        std::size_t end = std::min(begin + batch_size, texts.size());
        std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(begin),
                                       texts.begin() + static_cast<std::ptrdiff_t>(end));
        auto vectors = backend.embed(batch, prefix);
        if (vectors.size() != batch.size()) {
            throw ProtocolError("embedding backend returned wrong vector count");
        }
        for (auto& v : vectors) {
            if (expected_dim == 0) expected_dim = v.size();
            if (v.size() != expected_dim || expected_dim == 0) {
                throw ConfigError("embedding dimension mismatch across batch");
            }
            double norm_sq = 0;
            for (float x : v) {
                if (!std::isfinite(x)) {
                    throw ProtocolError("embedding contains a non-finite value");
                }
                norm_sq += static_cast<double>(x) * static_cast<double>(x);
            }
            if (norm_sq < 1e-24) {
                throw ProtocolError("embedding backend returned a zero vector");
            }
            double inv = 1.0 / std::sqrt(norm_sq);
            for (float& x : v) x = static_cast<float>(x * inv);
            out.push_back(std::move(v));
        }
    }
    return out;
}

namespace detail {

RowMajorMatrixXf pack_vectors(const std::vector<std::string>& ids,
                              const std::vector<std::vector<float>>& vectors) {
    if (ids.empty() || ids.size() != vectors.size()) {
        throw ValidationError("index build requires equal, non-zero ids and vectors");
    }
    {
        // Unique ids are what make the (score desc, id asc) tie-break total.
        std::set<std::string_view> seen;
        for (const auto& id : ids) {
            if (!seen.insert(id).second) {
                throw ValidationError("duplicate chunk id in index build: " + id);
            }
        }
    }
    const std::size_t dim = vectors.front().size();
    if (dim == 0) throw ValidationError("index vectors must have positive dimension");
    RowMajorMatrixXf matrix(static_cast<Eigen::Index>(ids.size()),
                            static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        const auto& v = vectors[i];
        if (v.size() != dim) throw ValidationError("mixed vector dimensions");
        double norm_sq = 0;
        for (float x : v) {
            if (!std::isfinite(x)) throw ValidationError("non-finite vector value");
            norm_sq += static_cast<double>(x) * static_cast<double>(x);
        }
        if (std::abs(std::sqrt(norm_sq) - 1.0) > 1e-6) {
            throw ValidationError(
                "index vectors must be L2-normalized (see embed_batch)");
        }
        for (std::size_t d = 0; d < dim; ++d) {
            matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = v[d];
        }
    }
    return matrix;
}

std::vector<RetrievalResult> rank_results(
    std::vector<std::pair<double, const std::string*>> scored, std::size_t k) {
    const std::size_t take = std::min(k, scored.size());
    auto better = [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return *a.second < *b.second;
    };
    std::partial_sort(scored.begin(),
                      scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                      better);
    std::vector<RetrievalResult> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        out.push_back({*scored[i].second, scored[i].first, static_cast<int>(i + 1)});
    }
    return out;
}

ExactFlatIndex::ExactFlatIndex(std::vector<std::string> ids, RowMajorMatrixXf matrix)
    : ids_(std::move(ids)), matrix_(std::move(matrix)) {}

std::vector<RetrievalResult> ExactFlatIndex::search(const std::vector<float>& query,
                                                    std::size_t k) const {
    if (query.size() != dim()) {
        throw ValidationError("query dimension " + std::to_string(query.size()) +
                              " != index dimension " + std::to_string(dim()));
    }
    if (k == 0) throw ValidationError("search requires k >= 1");
    std::vector<std::pair<double, const std::string*>> scored;
    scored.reserve(ids_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) {
        double score = dot_f32(matrix_.row(static_cast<Eigen::Index>(i)).data(),
                               query.data(), dim());
        scored.emplace_back(score, &ids_[i]);
    }
    return rank_results(std::move(scored), k);
}

}  // namespace detail

namespace {

constexpr int kIndexFormatVersion = 1;

json hnsw_params_json(const HnswParams& p) {
    return {{"neighbor_degree", p.neighbor_degree},
            {"construction_beam", p.construction_beam},
            {"query_beam", p.query_beam},
            {"build_seed", p.build_seed}};
}

HnswParams hnsw_params_from_json(const json& j) {
    HnswParams p;
    p.neighbor_degree = j.at("neighbor_degree").get<int>();
    p.construction_beam = j.at("construction_beam").get<int>();
    p.query_beam = j.at("query_beam").get<int>();
    p.build_seed = j.at("build_seed").get<std::uint64_t>();
    return p;
}

void write_meta(const std::filesystem::path& dir, IndexKind kind, std::size_t dim,
                std::size_t count, const HnswParams* params) {
    json meta = {{"format_version", kIndexFormatVersion},
                 {"kind", to_string(kind)},
                 {"dim", dim},
                 {"count", count},
                 {"vector_encoding", "float32-le"}};
    if (params != nullptr) meta["build_params"] = hnsw_params_json(*params);
    std::ofstream out(dir / "index.meta.json", std::ios::binary);
    if (!out) throw IoError("cannot write index.meta.json");
    out << meta.dump(2) << '\n';
}

}  // namespace

namespace detail {

void ExactFlatIndex::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    write_meta(dir, kind(), dim(), count(), nullptr);
    std::ofstream bin(dir / "index.bin", std::ios::binary);
    if (!bin) throw IoError("cannot write index.bin");
    write_f32(bin, matrix_.data(), count() * dim());
    for (const auto& id : ids_) write_string(bin, id);
    if (!bin) throw IoError("short write to index.bin");
}

std::unique_ptr<ExactFlatIndex> ExactFlatIndex::load_bin(std::istream& in,
                                                         std::size_t count,
                                                         std::size_t dim) {
    RowMajorMatrixXf matrix(static_cast<Eigen::Index>(count),
                            static_cast<Eigen::Index>(dim));
    read_f32(in, matrix.data(), count * dim);
    std::vector<std::string> ids;
    ids.reserve(count);
    for (std::size_t i = 0; i < count; ++i) ids.push_back(read_string(in));
    return std::make_unique<ExactFlatIndex>(std::move(ids), std::move(matrix));
}

}  // namespace detail

std::unique_ptr<VectorIndex> build_index(std::vector<std::string> chunk_ids,
                                         std::vector<std::vector<float>> vectors,
                                         IndexKind kind, const HnswParams& params) {
    auto matrix = detail::pack_vectors(chunk_ids, vectors);
    if (kind == IndexKind::exact_flat) {
        return std::make_unique<detail::ExactFlatIndex>(std::move(chunk_ids),
                                                        std::move(matrix));
    }
    return std::make_unique<detail::HnswIndex>(std::move(chunk_ids), std::move(matrix),
                                               params);
}

std::unique_ptr<VectorIndex> load_index(const std::filesystem::path& dir) {
    std::ifstream meta_in(dir / "index.meta.json");
    if (!meta_in) {
        throw IoError("no index at " + dir.string() +
                      " (missing index.meta.json); run `index` first");
    }
    json meta = json::parse(meta_in);
    if (meta.at("format_version").get<int>() != kIndexFormatVersion) {
        throw ValidationError("unsupported index format version");
    }
    const auto kind = index_kind_from_string(meta.at("kind").get<std::string>());
    const auto dim = meta.at("dim").get<std::size_t>();
    const auto count = meta.at("count").get<std::size_t>();
    std::ifstream bin(dir / "index.bin", std::ios::binary);
    if (!bin) throw IoError("missing index.bin in " + dir.string());
    if (kind == IndexKind::exact_flat) {
        return detail::ExactFlatIndex::load_bin(bin, count, dim);
    }
    return detail::HnswIndex::load_bin(bin, count, dim,
                                       hnsw_params_from_json(meta.at("build_params")));
}

std::string render_passage(const Chunk& chunk) {
    return chunk.title + "\n" + chunk.body;
}

std::vector<RetrievedPassage> retrieve_passages(const std::string& question,
                                                std::size_t k, const CorpusStore& store,
                                                const VectorIndex& index,
                                                EmbeddingBackend& embedder,
                                                const std::string& query_prefix) {
    if (k == 0) throw ValidationError("retrieve_passages requires k >= 1");
    auto query = embed_batch(embedder, {question}, query_prefix).front();
    auto results = index.search(query, k);
    std::vector<RetrievedPassage> passages;
    passages.reserve(results.size());
    for (const auto& r : results) {
        const Chunk* chunk = store.find_chunk(r.chunk_id);
        if (chunk == nullptr) {
            throw ValidationError("index returned unknown chunk id " + r.chunk_id +
                                  "; index and corpus are out of sync");
        }
        passages.push_back({r.chunk_id, r.score, r.rank, render_passage(*chunk)});
    }
    return passages;
}

}  // namespace kcomp

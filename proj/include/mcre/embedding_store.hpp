#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcre/vector_core.hpp"

namespace mcre {

/// Versioned binary store of named float32 vectors.
///
/// Layout, all integers little-endian:
///   "MCRE" | u32 version (1) | u32 dim | u64 count
///   | u16 tag length | tag bytes (UTF-8)
///   | count x (u16 id length | id bytes)
///   | count x dim float32, row-major in id-table order
///
/// The reader requires the file to end exactly after the payload.
struct EmbeddingStore {
    static constexpr std::uint32_t kVersion = 1;
    static constexpr std::string_view kMagic = "MCRE";

    std::uint32_t dim = 0;
    std::string source_tag;
    std::vector<std::string> ids;
    std::vector<float> payload;

    EmbeddingStore() = default;
    EmbeddingStore(std::uint32_t dim, std::string source_tag);

    [[nodiscard]] std::size_t size() const noexcept { return ids.size(); }
    [[nodiscard]] bool empty() const noexcept { return ids.empty(); }
    [[nodiscard]] std::span<const float> row(std::size_t i) const;
    [[nodiscard]] EmbeddingVector vector(std::size_t i) const;

    /// Appends one row. Id uniqueness is checked by validate(), which every
    /// encode and write runs.
    void add(std::string id, std::span<const float> values);

    /// Throws CorruptStore / DuplicateId / InvalidArgument when the invariants
    /// (dim >= 1, unique non-empty ids, payload size, field widths) fail.
    void validate() const;

    bool operator==(const EmbeddingStore&) const = default;
};

/// Byte size of the encoded header (magic, version, dim, count, tag).
[[nodiscard]] std::size_t encoded_header_size(const EmbeddingStore& store) noexcept;

[[nodiscard]] std::string encode_embedding_store(const EmbeddingStore& store);
[[nodiscard]] EmbeddingStore decode_embedding_store(std::string_view bytes);

/// Writes through a temporary sibling file and renames it into place.
void write_embedding_store(const EmbeddingStore& store, const std::filesystem::path& file);
[[nodiscard]] EmbeddingStore read_embedding_store(const std::filesystem::path& file);

/// Keys under which caption text embeddings are stored.
[[nodiscard]] std::string modi_key(std::string_view query_id);
[[nodiscard]] std::string integ_key(std::string_view query_id);

}  // namespace mcre

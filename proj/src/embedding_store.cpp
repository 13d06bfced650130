#include "mcre/embedding_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <unordered_set>

#include "mcre/error.hpp"

namespace mcre {

EmbeddingStore::EmbeddingStore(std::uint32_t dim_, std::string source_tag_)
    : dim(dim_), source_tag(std::move(source_tag_)) {}

std::span<const float> EmbeddingStore::row(std::size_t i) const {
    return std::span<const float>(payload).subspan(i * dim, dim);
}

EmbeddingVector EmbeddingStore::vector(std::size_t i) const { return EmbeddingVector::from_floats(row(i)); }

void EmbeddingStore::add(std::string id, std::span<const float> values) {
    if (values.size() != dim) {
        throw Error(ErrorCode::DimensionMismatch, "entry '" + id + "' has dim " + std::to_string(values.size()) +
                                                      ", store dim is " + std::to_string(dim));
    }
    ids.push_back(std::move(id));
    payload.insert(payload.end(), values.begin(), values.end());
}

void EmbeddingStore::validate() const {
    constexpr std::size_t kMaxField = std::numeric_limits<std::uint16_t>::max();
    if (dim == 0) throw Error(ErrorCode::CorruptStore, "store dim must be >= 1");
    if (source_tag.size() > kMaxField) throw Error(ErrorCode::InvalidArgument, "source tag longer than 65535 bytes");
    if (payload.size() != ids.size() * static_cast<std::size_t>(dim)) {
        throw Error(ErrorCode::CorruptStore, "payload holds " + std::to_string(payload.size()) +
                                                 " floats, expected " + std::to_string(ids.size() * dim));
    }
    std::unordered_set<std::string_view> seen;
    seen.reserve(ids.size());
    for (const auto& id : ids) {
        if (id.empty()) throw Error(ErrorCode::InvalidArgument, "empty identifier");
        if (id.size() > kMaxField) throw Error(ErrorCode::InvalidArgument, "identifier longer than 65535 bytes");
        if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateId, "duplicate identifier '" + id + "'");
    }
}

namespace {

constexpr std::size_t kFixedHeader = 4 + 4 + 4 + 8 + 2;

template <typename T>
void put_le(std::string& out, T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>(static_cast<unsigned char>(u & 0xFFu)));
        u = static_cast<U>(u >> 8);
    }
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get_le(const char* what) {
        need(sizeof(T), what);
        T value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            value |= static_cast<T>(static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i));
        }
        pos_ += sizeof(T);
        return value;
    }

    std::string_view take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
    [[nodiscard]] std::size_t offset() const noexcept { return pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw Error(ErrorCode::TruncatedFile, std::string("file ends inside ") + what + " at byte " +
                                                      std::to_string(pos_));
        }
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::size_t encoded_header_size(const EmbeddingStore& store) noexcept {
    return kFixedHeader + store.source_tag.size();
}

std::string encode_embedding_store(const EmbeddingStore& store) {
    store.validate();
    std::size_t id_bytes = 0;
    for (const auto& id : store.ids) id_bytes += 2 + id.size();

    std::string out;
    out.reserve(encoded_header_size(store) + id_bytes + store.payload.size() * 4);
    out.append(EmbeddingStore::kMagic);
    put_le<std::uint32_t>(out, EmbeddingStore::kVersion);
    put_le<std::uint32_t>(out, store.dim);
    put_le<std::uint64_t>(out, store.ids.size());
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(store.source_tag.size()));
    out.append(store.source_tag);
    for (const auto& id : store.ids) {
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
        out.append(id);
    }
    for (float f : store.payload) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
    return out;
}

EmbeddingStore decode_embedding_store(std::string_view bytes) {
    Reader in(bytes);
    if (bytes.size() < EmbeddingStore::kMagic.size() ||
        bytes.substr(0, EmbeddingStore::kMagic.size()) != EmbeddingStore::kMagic) {
        throw Error(ErrorCode::BadMagic, "missing MCRE signature");
    }
    in.take(EmbeddingStore::kMagic.size(), "magic");
    const auto version = in.get_le<std::uint32_t>("version");
    if (version != EmbeddingStore::kVersion) {
        throw Error(ErrorCode::UnsupportedVersion, "store version " + std::to_string(version));
    }
    EmbeddingStore store;
    store.dim = in.get_le<std::uint32_t>("dim");
    const auto count = in.get_le<std::uint64_t>("count");
    if (store.dim == 0) throw Error(ErrorCode::CorruptStore, "dim is 0");
    const auto tag_len = in.get_le<std::uint16_t>("tag length");
    store.source_tag = std::string(in.take(tag_len, "source tag"));

    // Every entry needs at least its 2-byte length and 4*dim payload bytes;
    // reject impossible counts before allocating for them.
    const std::uint64_t min_entry = 2 + 4ull * store.dim;
    if (count > in.remaining() / min_entry) {
        throw Error(ErrorCode::TruncatedFile, "count " + std::to_string(count) + " exceeds file size");
    }
    store.ids.reserve(count);
    std::unordered_set<std::string> seen;
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = in.get_le<std::uint16_t>("id table");
        std::string id(in.take(len, "id table"));
        if (id.empty()) throw Error(ErrorCode::CorruptStore, "empty identifier at entry " + std::to_string(i));
        if (!seen.insert(id).second) throw Error(ErrorCode::DuplicateId, "duplicate identifier '" + id + "'");
        store.ids.push_back(std::move(id));
    }
    const std::size_t floats = static_cast<std::size_t>(count) * store.dim;
    store.payload.resize(floats);
    for (std::size_t i = 0; i < floats; ++i) {
        store.payload[i] = std::bit_cast<float>(in.get_le<std::uint32_t>("payload"));
    }
    if (in.remaining() != 0) {
        throw Error(ErrorCode::CorruptStore, std::to_string(in.remaining()) + " trailing bytes after payload");
    }
    return store;
}

void write_embedding_store(const EmbeddingStore& store, const std::filesystem::path& file) {
    const std::string bytes = encode_embedding_store(store);
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, file, ec);
    if (ec) throw Error(ErrorCode::Io, "rename to " + file.string() + " failed: " + ec.message());
}

EmbeddingStore read_embedding_store(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + file.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_embedding_store(bytes);
    } catch (const Error& e) {
        throw Error(e.code(), file.string() + ": " + e.detail());
    }
}

std::string modi_key(std::string_view query_id) { return std::string(query_id) + "#modi"; }
std::string integ_key(std::string_view query_id) { return std::string(query_id) + "#integ"; }

}  // namespace mcre

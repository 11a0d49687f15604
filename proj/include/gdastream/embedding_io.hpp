#pragma once

// On-disk stream layout:
//
//   manifest.txt      version=1 / dim=<D> / classes=<K> / "domain <id> batches=<n> samples=<m>" lines
//   prototypes.bin    "GDAP", u32 K, u32 D, K*D f32
//   classes.txt       optional, one class name per line
//   batch_<t>.bin     "GDAB", u32 t, u32 domain_id, u32 N, u32 D, N*D f32
//   batch_<t>.labels  optional, N u32
//
// All integers and reals are little-endian.

#include "gdastream/common.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gdastream {

struct EmbeddingBatch {
    FloatMatrix features;  // N x D, raw (not normalized)
    std::uint32_t step_index = 0;
    std::uint32_t domain_id = 0;
    std::optional<std::vector<std::uint32_t>> labels;  // evaluation only

    std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
};

struct ClassPrototypes {
    FloatMatrix prototypes;  // K x D
    std::vector<std::string> class_names;
    double temperature = 0.01;

    std::size_t num_classes() const { return static_cast<std::size_t>(prototypes.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(prototypes.cols()); }
};

struct DomainEntry {
    std::uint32_t domain_id = 0;
    std::uint64_t batch_count = 0;
    std::uint64_t sample_count = 0;

    friend bool operator==(const DomainEntry&, const DomainEntry&) = default;
};

struct StreamManifest {
    std::uint32_t version = 1;
    std::uint32_t dim = 0;
    std::uint32_t classes = 0;
    std::vector<DomainEntry> domains;

    std::uint64_t total_batches() const;
    std::uint64_t total_samples() const;

    friend bool operator==(const StreamManifest&, const StreamManifest&) = default;
};

/// Throws DataError if the prototypes violate K >= 2, positive row norms,
/// finite entries or tau > 0.
void validate_prototypes(const ClassPrototypes& prototypes);

/// Throws DataError on empty/non-finite features or label/shape disagreement.
void validate_batch(const EmbeddingBatch& batch, std::size_t dim, std::size_t classes);

/// Builds the manifest implied by a sequence of batches (domains grouped in
/// stream order; a domain id that reappears later opens a new entry).
StreamManifest manifest_for(std::span<const EmbeddingBatch> batches, const ClassPrototypes& prototypes);

/// Writes a complete stream directory. The directory is created if needed.
StreamManifest write_stream(std::span<const EmbeddingBatch> batches,
                            const ClassPrototypes& prototypes,
                            const std::filesystem::path& dir);

void write_manifest(const StreamManifest& manifest, const std::filesystem::path& file);
StreamManifest read_manifest(const std::filesystem::path& file);

void write_prototypes(const ClassPrototypes& prototypes, const std::filesystem::path& file);
ClassPrototypes read_prototypes(const std::filesystem::path& file);

void write_batch(const EmbeddingBatch& batch, const std::filesystem::path& dir);
EmbeddingBatch read_batch(const std::filesystem::path& bin_file);

std::string batch_file_name(std::uint32_t step_index);

/// Sequential source of batches. Pipelines consume streams through this interface
/// so on-disk and in-memory streams are interchangeable.
class BatchSource {
public:
    virtual ~BatchSource() = default;
    virtual std::optional<EmbeddingBatch> next() = 0;
    virtual void rewind() = 0;
};

/// Lazily reads one batch file at a time from a stream directory.
class StreamReader final : public BatchSource {
public:
    explicit StreamReader(std::filesystem::path dir);

    const StreamManifest& manifest() const { return manifest_; }
    const ClassPrototypes& prototypes() const { return prototypes_; }

    std::optional<EmbeddingBatch> next() override;
    void rewind() override;

private:
    std::filesystem::path dir_;
    StreamManifest manifest_;
    ClassPrototypes prototypes_;
    std::vector<std::uint32_t> steps_;
    std::size_t cursor_ = 0;
    std::int64_t last_step_ = -1;
};

class MemoryStream final : public BatchSource {
public:
    explicit MemoryStream(std::span<const EmbeddingBatch> batches) : batches_(batches) {}

    std::optional<EmbeddingBatch> next() override
    {
        if (cursor_ >= batches_.size())
            return std::nullopt;
        return batches_[cursor_++];
    }
    void rewind() override { cursor_ = 0; }

private:
    std::span<const EmbeddingBatch> batches_;
    std::size_t cursor_ = 0;
};

}  // namespace gdastream

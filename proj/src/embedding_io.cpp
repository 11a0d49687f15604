#include "gdastream/embedding_io.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gdastream {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 4> kPrototypeMagic{'G', 'D', 'A', 'P'};
constexpr std::array<char, 4> kBatchMagic{'G', 'D', 'A', 'B'};


using binary::put_f32;
using binary::put_u32;

std::ofstream open_out(const fs::path& file)
{
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out)
        throw DataError("cannot open for writing: " + file.string());
    return out;
}

std::ifstream open_in(const fs::path& file)
{
    std::ifstream in(file, std::ios::binary);
    if (!in)
        throw DataError("cannot open: " + file.string());
    return in;
}

void finish(std::ofstream& out, const fs::path& file)
{
    out.flush();
    if (!out)
        throw DataError("write failed: " + file.string());
}

template <typename T>
T parse_number(std::string_view text, const std::string& what)
{
    T value{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end)
        throw DataError("malformed manifest field '" + what + "': " + std::string(text));
    return value;
}

std::string_view value_after(std::string_view token, std::string_view key)
{
    if (token.substr(0, key.size()) != key || token.size() <= key.size() || token[key.size()] != '=')
        throw DataError("malformed manifest token: " + std::string(token));
    return token.substr(key.size() + 1);
}

std::optional<std::uint32_t> step_from_file_name(const std::string& name)
{
    constexpr std::string_view prefix = "batch_";
    constexpr std::string_view suffix = ".bin";
    if (name.size() <= prefix.size() + suffix.size() || name.compare(0, prefix.size(), prefix) != 0 ||
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
        return std::nullopt;
    std::string_view digits(name.data() + prefix.size(), name.size() - prefix.size() - suffix.size());
    std::uint32_t t = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), t);
    if (ec != std::errc() || ptr != digits.data() + digits.size())
        return std::nullopt;
    return t;
}

struct BatchHeader {
    std::uint32_t step = 0;
    std::uint32_t domain_id = 0;
    std::uint32_t rows = 0;
    std::uint32_t dim = 0;
};

BatchHeader read_batch_header(const fs::path& file)
{
    auto in = open_in(file);
    binary::Reader reader(in, file.string());
    reader.expect_magic(kBatchMagic);
    BatchHeader h;
    h.step = reader.u32();
    h.domain_id = reader.u32();
    h.rows = reader.u32();
    h.dim = reader.u32();
    return h;
}

}  // namespace

std::uint64_t StreamManifest::total_batches() const
{
    std::uint64_t n = 0;
    for (const auto& d : domains)
        n += d.batch_count;
    return n;
}

std::uint64_t StreamManifest::total_samples() const
{
    std::uint64_t n = 0;
    for (const auto& d : domains)
        n += d.sample_count;
    return n;
}

void validate_prototypes(const ClassPrototypes& prototypes)
{
    if (prototypes.num_classes() < 2)
        throw DataError("prototypes: need at least 2 classes");
    if (prototypes.dim() == 0)
        throw DataError("prototypes: zero dimension");
    if (!prototypes.prototypes.allFinite())
        throw DataError("prototypes: non-finite entry");
    for (Eigen::Index k = 0; k < prototypes.prototypes.rows(); ++k) {
        if (!(prototypes.prototypes.row(k).cast<double>().norm() > 0.0))
            throw DataError("prototypes: zero-norm row " + std::to_string(k));
    }
    if (!(prototypes.temperature > 0.0) || !std::isfinite(prototypes.temperature))
        throw DataError("prototypes: temperature must be positive");
    if (!prototypes.class_names.empty() && prototypes.class_names.size() != prototypes.num_classes())
        throw DataError("prototypes: class name count does not match K");
}

void validate_batch(const EmbeddingBatch& batch, std::size_t dim, std::size_t classes)
{
    if (batch.size() == 0)
        throw DataError("empty batch at step " + std::to_string(batch.step_index));
    if (batch.dim() != dim)
        throw DataError("dimension mismatch at step " + std::to_string(batch.step_index) + ": " +
                        std::to_string(batch.dim()) + " vs " + std::to_string(dim));
    if (!batch.features.allFinite())
        throw DataError("non-finite feature at step " + std::to_string(batch.step_index));
    if (batch.labels) {
        if (batch.labels->size() != batch.size())
            throw DataError("label count mismatch at step " + std::to_string(batch.step_index));
        for (auto y : *batch.labels) {
            if (y >= classes)
                throw DataError("label out of range at step " + std::to_string(batch.step_index));
        }
    }
}

StreamManifest manifest_for(std::span<const EmbeddingBatch> batches, const ClassPrototypes& prototypes)
{
    if (batches.empty())
        throw DataError("empty stream");
    validate_prototypes(prototypes);

    StreamManifest manifest;
    manifest.dim = static_cast<std::uint32_t>(prototypes.dim());
    manifest.classes = static_cast<std::uint32_t>(prototypes.num_classes());

    std::int64_t last_step = -1;
    for (const auto& batch : batches) {
        validate_batch(batch, prototypes.dim(), prototypes.num_classes());
        if (static_cast<std::int64_t>(batch.step_index) <= last_step)
            throw DataError("non-monotonic step_index at " + std::to_string(batch.step_index));
        last_step = batch.step_index;

        if (manifest.domains.empty() || manifest.domains.back().domain_id != batch.domain_id)
            manifest.domains.push_back({batch.domain_id, 0, 0});
        manifest.domains.back().batch_count += 1;
        manifest.domains.back().sample_count += batch.size();
    }
    return manifest;
}

StreamManifest write_stream(std::span<const EmbeddingBatch> batches,
                            const ClassPrototypes& prototypes,
                            const fs::path& dir)
{
    StreamManifest manifest = manifest_for(batches, prototypes);

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw DataError("cannot create directory " + dir.string() + ": " + ec.message());

    write_prototypes(prototypes, dir / "prototypes.bin");
    if (!prototypes.class_names.empty()) {
        auto out = open_out(dir / "classes.txt");
        for (const auto& name : prototypes.class_names)
            out << name << '\n';
        finish(out, dir / "classes.txt");
    }
    for (const auto& batch : batches)
        write_batch(batch, dir);
    write_manifest(manifest, dir / "manifest.txt");
    return manifest;
}

void write_manifest(const StreamManifest& manifest, const fs::path& file)
{
    auto out = open_out(file);
    out << "version=" << manifest.version << '\n';
    out << "dim=" << manifest.dim << '\n';
    out << "classes=" << manifest.classes << '\n';
    for (const auto& d : manifest.domains)
        out << "domain " << d.domain_id << " batches=" << d.batch_count << " samples=" << d.sample_count << '\n';
    finish(out, file);
}

StreamManifest read_manifest(const fs::path& file)
{
    std::ifstream in(file);
    if (!in)
        throw DataError("cannot open: " + file.string());

    StreamManifest manifest;
    bool have_version = false, have_dim = false, have_classes = false;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream tokens(line);
        std::string first;
        tokens >> first;
        if (first == "domain") {
            std::string id, batches, samples;
            if (!(tokens >> id >> batches >> samples))
                throw DataError("malformed domain line: " + line);
            DomainEntry entry;
            entry.domain_id = parse_number<std::uint32_t>(id, "domain");
            entry.batch_count = parse_number<std::uint64_t>(value_after(batches, "batches"), "batches");
            entry.sample_count = parse_number<std::uint64_t>(value_after(samples, "samples"), "samples");
            manifest.domains.push_back(entry);
            continue;
        }
        const auto eq = first.find('=');
        if (eq == std::string::npos)
            throw DataError("malformed manifest line: " + line);
        const std::string key = first.substr(0, eq);
        const std::string_view value = std::string_view(first).substr(eq + 1);
        if (key == "version") {
            manifest.version = parse_number<std::uint32_t>(value, key);
            have_version = true;
        } else if (key == "dim") {
            manifest.dim = parse_number<std::uint32_t>(value, key);
            have_dim = true;
        } else if (key == "classes") {
            manifest.classes = parse_number<std::uint32_t>(value, key);
            have_classes = true;
        }
        // Unknown keys are ignored so newer writers can add metadata.
    }
    if (!have_version || !have_dim || !have_classes)
        throw DataError("manifest missing version/dim/classes: " + file.string());
    if (manifest.version != 1)
        throw DataError("version mismatch: manifest version " + std::to_string(manifest.version));
    return manifest;
}

void write_prototypes(const ClassPrototypes& prototypes, const fs::path& file)
{
    auto out = open_out(file);
    out.write(kPrototypeMagic.data(), 4);
    put_u32(out, static_cast<std::uint32_t>(prototypes.num_classes()));
    put_u32(out, static_cast<std::uint32_t>(prototypes.dim()));
    for (Eigen::Index k = 0; k < prototypes.prototypes.rows(); ++k)
        for (Eigen::Index j = 0; j < prototypes.prototypes.cols(); ++j)
            put_f32(out, prototypes.prototypes(k, j));
    finish(out, file);
}

ClassPrototypes read_prototypes(const fs::path& file)
{
    auto in = open_in(file);
    binary::Reader reader(in, file.string());
    reader.expect_magic(kPrototypeMagic);
    const auto k = reader.u32();
    const auto d = reader.u32();
    ClassPrototypes result;
    result.prototypes.resize(k, d);
    for (std::uint32_t i = 0; i < k; ++i)
        for (std::uint32_t j = 0; j < d; ++j)
            result.prototypes(i, j) = reader.f32();
    reader.expect_eof();

    const auto names = file.parent_path() / "classes.txt";
    if (fs::exists(names)) {
        std::ifstream nin(names);
        std::string line;
        while (std::getline(nin, line))
            if (!line.empty())
                result.class_names.push_back(line);
    }
    if (result.class_names.empty()) {
        for (std::uint32_t i = 0; i < k; ++i)
            result.class_names.push_back("class" + std::to_string(i));
    }
    return result;
}

std::string batch_file_name(std::uint32_t step_index) { return "batch_" + std::to_string(step_index) + ".bin"; }

void write_batch(const EmbeddingBatch& batch, const fs::path& dir)
{
    const auto file = dir / batch_file_name(batch.step_index);
    auto out = open_out(file);
    out.write(kBatchMagic.data(), 4);
    put_u32(out, batch.step_index);
    put_u32(out, batch.domain_id);
    put_u32(out, static_cast<std::uint32_t>(batch.size()));
    put_u32(out, static_cast<std::uint32_t>(batch.dim()));
    for (Eigen::Index i = 0; i < batch.features.rows(); ++i)
        for (Eigen::Index j = 0; j < batch.features.cols(); ++j)
            put_f32(out, batch.features(i, j));
    finish(out, file);

    const auto label_file = dir / ("batch_" + std::to_string(batch.step_index) + ".labels");
    if (batch.labels) {
        auto lout = open_out(label_file);
        for (auto y : *batch.labels)
            put_u32(lout, y);
        finish(lout, label_file);
    } else {
        std::error_code ec;
        fs::remove(label_file, ec);
    }
}

EmbeddingBatch read_batch(const fs::path& bin_file)
{
    auto in = open_in(bin_file);
    binary::Reader reader(in, bin_file.string());
    reader.expect_magic(kBatchMagic);
    EmbeddingBatch batch;
    batch.step_index = reader.u32();
    batch.domain_id = reader.u32();
    const auto n = reader.u32();
    const auto d = reader.u32();
    batch.features.resize(n, d);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < d; ++j)
            batch.features(i, j) = reader.f32();
    reader.expect_eof();

    auto label_file = bin_file;
    label_file.replace_extension(".labels");
    if (fs::exists(label_file)) {
        auto lin = open_in(label_file);
        binary::Reader lreader(lin, label_file.string());
        std::vector<std::uint32_t> labels(n);
        for (auto& y : labels)
            y = lreader.u32();
        lreader.expect_eof();
        batch.labels = std::move(labels);
    }
    return batch;
}

StreamReader::StreamReader(fs::path dir) : dir_(std::move(dir))
{
    if (!fs::is_directory(dir_))
        throw DataError("stream directory not found: " + dir_.string());
    manifest_ = read_manifest(dir_ / "manifest.txt");
    prototypes_ = read_prototypes(dir_ / "prototypes.bin");
    if (prototypes_.num_classes() != manifest_.classes || prototypes_.dim() != manifest_.dim)
        throw DataError("manifest/prototype mismatch: manifest K=" + std::to_string(manifest_.classes) +
                        " D=" + std::to_string(manifest_.dim) + ", prototypes K=" +
                        std::to_string(prototypes_.num_classes()) + " D=" + std::to_string(prototypes_.dim()));
    validate_prototypes(prototypes_);

    for (const auto& entry : fs::directory_iterator(dir_)) {
        if (auto t = step_from_file_name(entry.path().filename().string()))
            steps_.push_back(*t);
    }
    std::sort(steps_.begin(), steps_.end());
    if (steps_.size() != manifest_.total_batches())
        throw DataError("manifest declares " + std::to_string(manifest_.total_batches()) + " batches, found " +
                        std::to_string(steps_.size()));
    if (steps_.empty())
        throw DataError("empty stream");

    // Header-only scan: the manifest must describe the batch files exactly.
    StreamManifest implied;
    for (auto t : steps_) {
        const auto header = read_batch_header(dir_ / batch_file_name(t));
        if (header.dim != manifest_.dim)
            throw DataError("dimension mismatch in " + batch_file_name(t));
        if (implied.domains.empty() || implied.domains.back().domain_id != header.domain_id)
            implied.domains.push_back({header.domain_id, 0, 0});
        implied.domains.back().batch_count += 1;
        implied.domains.back().sample_count += header.rows;
    }
    if (implied.domains != manifest_.domains)
        throw DataError("manifest/batch mismatch: domain table does not match batch files");
}

std::optional<EmbeddingBatch> StreamReader::next()
{
    if (cursor_ >= steps_.size())
        return std::nullopt;

    EmbeddingBatch batch = read_batch(dir_ / batch_file_name(steps_[cursor_]));
    if (batch.step_index != steps_[cursor_])
        throw DataError("step index in header does not match file name for step " + std::to_string(steps_[cursor_]));
    if (static_cast<std::int64_t>(batch.step_index) <= last_step_)
        throw DataError("non-monotonic step_index at " + std::to_string(batch.step_index));
    validate_batch(batch, manifest_.dim, manifest_.classes);

    last_step_ = batch.step_index;
    ++cursor_;
    return batch;
}

void StreamReader::rewind()
{
    cursor_ = 0;
    last_step_ = -1;
}

}  // namespace gdastream

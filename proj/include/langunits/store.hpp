#pragma once

// Interchange format between the model-side harness and the engine.
//
//   <run>/manifest.json    RunManifest fields, UTF-8 JSON
//   <run>/layer_<i>.laps   "LAPS", version byte, then three row-major
//                          [languages x units] matrices, little-endian:
//                          token_active_count (u64), example_active_count
//                          (u64), activation_sum (f64)
//
// Layer files carry no shape of their own; the manifest is the only source of
// sizes, and a file is rejected unless its length matches exactly.

#include "langunits/core.hpp"
#include "langunits/matrix.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <vector>

namespace langunits {

namespace fs = std::filesystem;

struct RunManifest {
    std::string model_name;
    UnitKind kind = UnitKind::raw;
    std::uint32_t num_layers = 0;
    std::uint32_t units_per_layer = 0;
    std::vector<std::string> languages;
    std::vector<std::uint64_t> tokens_per_language;
    std::vector<std::uint64_t> examples_per_language;
    std::string condition;

    std::size_t num_languages() const { return languages.size(); }

    void validate() const {
        if (languages.empty()) throw ValidationError("manifest: languages must be non-empty");
        std::set<std::string> seen;
        for (const auto& l : languages) {
            if (l.empty()) throw ValidationError("manifest: empty language code");
            if (!seen.insert(l).second)
                throw ValidationError("manifest: duplicate language '" + l + "'");
        }
        if (tokens_per_language.size() != languages.size() ||
            examples_per_language.size() != languages.size())
            throw ValidationError("manifest: per-language totals must match languages length");
        for (std::size_t k = 0; k < languages.size(); ++k) {
            if (tokens_per_language[k] == 0 || examples_per_language[k] == 0)
                throw ValidationError("manifest: totals for '" + languages[k] + "' must be > 0");
        }
        if (num_layers == 0) throw ValidationError("manifest: num_layers must be > 0");
        if (units_per_layer == 0) throw ValidationError("manifest: units_per_layer must be > 0");
    }

    friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

inline void to_json(nlohmann::json& j, const RunManifest& m) {
    j = nlohmann::json{{"model_name", m.model_name},
                       {"kind", std::string(to_string(m.kind))},
                       {"num_layers", m.num_layers},
                       {"units_per_layer", m.units_per_layer},
                       {"languages", m.languages},
                       {"tokens_per_language", m.tokens_per_language},
                       {"examples_per_language", m.examples_per_language},
                       {"condition", m.condition}};
}

inline UnitKind parse_kind(const std::string& s) {
    if (s == "raw") return UnitKind::raw;
    if (s == "sae") return UnitKind::sae;
    throw FormatError("unknown unit kind '" + s + "'");
}

inline void from_json(const nlohmann::json& j, RunManifest& m) {
    try {
        j.at("model_name").get_to(m.model_name);
        m.kind = parse_kind(j.at("kind").get<std::string>());
        j.at("num_layers").get_to(m.num_layers);
        j.at("units_per_layer").get_to(m.units_per_layer);
        j.at("languages").get_to(m.languages);
        j.at("tokens_per_language").get_to(m.tokens_per_language);
        j.at("examples_per_language").get_to(m.examples_per_language);
        j.at("condition").get_to(m.condition);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
}

struct LayerStats {
    Matrix<std::uint64_t> token_active_count;
    Matrix<std::uint64_t> example_active_count;
    Matrix<double> activation_sum;

    LayerStats() = default;
    LayerStats(std::size_t languages, std::size_t units)
        : token_active_count(languages, units),
          example_active_count(languages, units),
          activation_sum(languages, units) {}

    friend bool operator==(const LayerStats&, const LayerStats&) = default;
};

struct ActivationAggregate {
    RunManifest manifest;
    std::vector<LayerStats> layers;

    /// Allocates zeroed matrices for every layer declared by the manifest.
    static ActivationAggregate zeros(RunManifest m) {
        m.validate();
        ActivationAggregate agg;
        agg.layers.assign(m.num_layers, LayerStats(m.num_languages(), m.units_per_layer));
        agg.manifest = std::move(m);
        return agg;
    }

    void validate() const {
        manifest.validate();
        if (layers.size() != manifest.num_layers)
            throw ValidationError("aggregate: expected " + std::to_string(manifest.num_layers) +
                                  " layers, found " + std::to_string(layers.size()));
        const auto nl = manifest.num_languages();
        const auto nu = manifest.units_per_layer;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const auto& s = layers[l];
            auto shape_ok = [&](const auto& m) { return m.rows() == nl && m.cols() == nu; };
            if (!shape_ok(s.token_active_count) || !shape_ok(s.example_active_count) ||
                !shape_ok(s.activation_sum))
                throw ValidationError("aggregate: layer " + std::to_string(l) +
                                      " shape does not match manifest");
            for (std::size_t k = 0; k < nl; ++k) {
                for (std::size_t u = 0; u < nu; ++u) {
                    if (s.token_active_count(k, u) > manifest.tokens_per_language[k])
                        throw ValidationError("aggregate: token_active_count exceeds total at layer " +
                                              std::to_string(l) + ", language " +
                                              manifest.languages[k] + ", unit " + std::to_string(u));
                    if (s.example_active_count(k, u) > manifest.examples_per_language[k])
                        throw ValidationError(
                            "aggregate: example_active_count exceeds total at layer " +
                            std::to_string(l) + ", language " + manifest.languages[k] +
                            ", unit " + std::to_string(u));
                }
            }
        }
    }

    friend bool operator==(const ActivationAggregate&, const ActivationAggregate&) = default;
};

namespace detail {

inline constexpr std::array<char, 4> kLayerMagic{'L', 'A', 'P', 'S'};
inline constexpr std::array<char, 4> kMatrixMagic{'L', 'A', 'P', 'M'};
inline constexpr std::uint8_t kFormatVersion = 1;

inline void put_u64(std::vector<char>& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline std::uint64_t get_u64(const char* p) {
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
    return v;
}

inline std::size_t checked_mul(std::size_t a, std::size_t b) {
    if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a)
        throw FormatError("declared shape overflows addressable size");
    return a * b;
}

inline void write_bytes(const fs::path& path, const std::vector<char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

/// Reads exactly `expected` bytes, rejecting shorter and longer files before
/// allocating anything.
inline std::vector<char> read_exact(const fs::path& path, std::size_t expected,
                                    const std::array<char, 4>& magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::error_code ec;
    const auto actual = fs::file_size(path, ec);
    if (ec) throw IoError("cannot stat '" + path.string() + "': " + ec.message());

    std::array<char, 5> header{};
    in.read(header.data(), static_cast<std::streamsize>(std::min<std::uintmax_t>(actual, 5)));
    if (actual < 4 || !std::equal(magic.begin(), magic.end(), header.begin()))
        throw FormatError("'" + path.string() + "': bad magic bytes");
    if (actual < 5) throw TruncationError("'" + path.string() + "': missing version byte");
    if (static_cast<std::uint8_t>(header[4]) != kFormatVersion)
        throw FormatError("'" + path.string() + "': unsupported version " +
                          std::to_string(static_cast<unsigned>(static_cast<std::uint8_t>(header[4]))));
    if (actual < expected)
        throw TruncationError("'" + path.string() + "': truncated, " + std::to_string(actual) +
                              " bytes, expected " + std::to_string(expected));
    if (actual > expected)
        throw FormatError("'" + path.string() + "': " + std::to_string(actual) +
                          " bytes exceeds declared shape (" + std::to_string(expected) + ")");
    std::vector<char> bytes(expected);
    std::copy(header.begin(), header.end(), bytes.begin());
    in.read(bytes.data() + 5, static_cast<std::streamsize>(expected - 5));
    if (!in) throw TruncationError("'" + path.string() + "': short read");
    return bytes;
}

} // namespace detail

inline fs::path layer_path(const fs::path& run, std::size_t layer) {
    return run / ("layer_" + std::to_string(layer) + ".laps");
}

inline void write_manifest(const RunManifest& m, const fs::path& path) {
    const auto text = nlohmann::json(m).dump(2) + "\n";
    detail::write_bytes(path, std::vector<char>(text.begin(), text.end()));
}

inline RunManifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path.string() + "': " + e.what());
    }
    auto m = j.get<RunManifest>();
    m.validate();
    return m;
}

/// Writes the run directory. Refuses aggregates that violate their invariants.
inline void write_aggregate(const ActivationAggregate& agg, const fs::path& destination) {
    agg.validate();
    std::error_code ec;
    fs::create_directories(destination, ec);
    if (ec) throw IoError("cannot create '" + destination.string() + "': " + ec.message());

    write_manifest(agg.manifest, destination / "manifest.json");
    for (std::size_t l = 0; l < agg.layers.size(); ++l) {
        const auto& s = agg.layers[l];
        std::vector<char> bytes;
        bytes.reserve(5 + 3 * 8 * s.activation_sum.size());
        bytes.insert(bytes.end(), detail::kLayerMagic.begin(), detail::kLayerMagic.end());
        bytes.push_back(static_cast<char>(detail::kFormatVersion));
        for (auto v : s.token_active_count.flat()) detail::put_u64(bytes, v);
        for (auto v : s.example_active_count.flat()) detail::put_u64(bytes, v);
        for (auto v : s.activation_sum.flat()) detail::put_u64(bytes, std::bit_cast<std::uint64_t>(v));
        detail::write_bytes(layer_path(destination, l), bytes);
    }
}

inline ActivationAggregate read_aggregate(const fs::path& source) {
    if (!fs::is_directory(source)) throw IoError("'" + source.string() + "' is not a run directory");
    auto agg = ActivationAggregate::zeros(read_manifest(source / "manifest.json"));
    const auto cells = detail::checked_mul(agg.manifest.num_languages(), agg.manifest.units_per_layer);
    const auto expected = 5 + detail::checked_mul(3 * 8, cells);
    for (std::size_t l = 0; l < agg.layers.size(); ++l) {
        const auto bytes = detail::read_exact(layer_path(source, l), expected, detail::kLayerMagic);
        const char* p = bytes.data() + 5;
        auto& s = agg.layers[l];
        for (auto& v : s.token_active_count.flat()) { v = detail::get_u64(p); p += 8; }
        for (auto& v : s.example_active_count.flat()) { v = detail::get_u64(p); p += 8; }
        for (auto& v : s.activation_sum.flat()) { v = std::bit_cast<double>(detail::get_u64(p)); p += 8; }
    }
    agg.validate();
    return agg;
}

// Standalone f64 matrix file ("LAPM", version, rows u64, cols u64, payload),
// used for probe score matrices.

inline void write_matrix(const Matrix<double>& m, const fs::path& path) {
    std::vector<char> bytes;
    bytes.reserve(21 + 8 * m.size());
    bytes.insert(bytes.end(), detail::kMatrixMagic.begin(), detail::kMatrixMagic.end());
    bytes.push_back(static_cast<char>(detail::kFormatVersion));
    detail::put_u64(bytes, m.rows());
    detail::put_u64(bytes, m.cols());
    for (auto v : m.flat()) detail::put_u64(bytes, std::bit_cast<std::uint64_t>(v));
    detail::write_bytes(path, bytes);
}

inline Matrix<double> read_matrix(const fs::path& path) {
    std::error_code ec;
    const auto actual = fs::file_size(path, ec);
    if (ec) throw IoError("cannot stat '" + path.string() + "': " + ec.message());
    if (actual < 21) {
        detail::read_exact(path, 21, detail::kMatrixMagic);  // magic/version checks
        throw TruncationError("'" + path.string() + "': missing shape header");
    }
    std::ifstream in(path, std::ios::binary);
    std::array<char, 21> header{};
    in.read(header.data(), 21);
    const auto rows = detail::get_u64(header.data() + 5);
    const auto cols = detail::get_u64(header.data() + 13);
    const auto expected = 21 + detail::checked_mul(8, detail::checked_mul(rows, cols));
    const auto bytes = detail::read_exact(path, expected, detail::kMatrixMagic);
    Matrix<double> m(rows, cols);
    const char* p = bytes.data() + 21;
    for (auto& v : m.flat()) { v = std::bit_cast<double>(detail::get_u64(p)); p += 8; }
    return m;
}

} // namespace langunits

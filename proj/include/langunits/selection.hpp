#pragma once

// Identification of language-associated units.
//
// Raw neurons (LAPE): a global percentile over every (unit, language)
// activation probability filters units, the lowest-entropy fraction is kept,
// and each kept unit is attributed to every language whose probability exceeds
// the same percentile.
//
// SAE latents (SAE-LAPE): a latent must be active on >= example_rate of the
// examples and >= hfl_rate of the tokens of at least one language; otherwise
// its entropy is +inf and it is excluded. Membership is relative:
// P(f|l) >= ratio * max_l' P(f|l').

#include "langunits/core.hpp"
#include "langunits/parallel.hpp"
#include "langunits/store.hpp"
#include "langunits/table.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace langunits {

enum class SelectionMode : std::uint8_t { raw_lape, sae_lape };
enum class EntropyBase : std::uint8_t { nats, bits };

struct SaeSharing {
    enum class Kind : std::uint8_t { lang_specific, lang_shared };
    Kind kind = Kind::lang_specific;
    std::uint32_t languages = 1;  // exact membership size for lang_shared

    std::uint32_t required_members() const { return kind == Kind::lang_specific ? 1 : languages; }
    friend bool operator==(const SaeSharing&, const SaeSharing&) = default;
};

struct SelectionConfig {
    double raw_filter_percentile = 95.0;
    double raw_entropy_fraction = 0.01;
    double sae_example_rate = 0.98;
    double sae_hfl_rate = 0.10;
    double sae_threshold_ratio = 0.8;
    SaeSharing sae_sharing;

    // Never-active units contribute zeros to the percentile pool unless set.
    bool percentile_exclude_invalid = false;
    // The entropy fraction is taken of all units, or of filter survivors.
    bool fraction_of_survivors = false;

    void validate() const {
        auto rate = [](double v, const char* name) {
            if (!(v > 0.0 && v <= 1.0))
                throw ValidationError(std::string("selection config: ") + name + " must be in (0,1]");
        };
        rate(raw_entropy_fraction, "raw_entropy_fraction");
        rate(sae_example_rate, "sae_example_rate");
        rate(sae_hfl_rate, "sae_hfl_rate");
        rate(sae_threshold_ratio, "sae_threshold_ratio");
        if (!(raw_filter_percentile > 0.0 && raw_filter_percentile < 100.0))
            throw ValidationError("selection config: raw_filter_percentile must be in (0,100)");
        if (sae_sharing.kind == SaeSharing::Kind::lang_shared && sae_sharing.languages < 1)
            throw ValidationError("selection config: lang_shared needs n >= 1");
    }

    friend bool operator==(const SelectionConfig&, const SelectionConfig&) = default;
};

struct LanguageActivationProfile {
    UnitId unit;
    std::vector<double> probs;
    std::vector<double> normalized;  // empty when invalid
    bool valid = false;
    double entropy = std::numeric_limits<double>::infinity();

    double max_prob() const { return probs.empty() ? 0.0 : *std::max_element(probs.begin(), probs.end()); }
};

/// Entropy of the l1-normalized probability vector. Returns +inf when every
/// entry is zero. When all positive entries are equal (uniform or one-hot
/// support) the result is exactly log(support size).
inline double lape_entropy(std::span<const double> probs, EntropyBase base = EntropyBase::nats) {
    long double total = 0;
    std::size_t support = 0;
    double first_positive = 0;
    bool all_equal = true;
    for (double p : probs) {
        if (p > 0) {
            total += p;
            if (support == 0) first_positive = p;
            else if (p != first_positive) all_equal = false;
            ++support;
        }
    }
    if (support == 0) return std::numeric_limits<double>::infinity();
    double h;
    if (all_equal) {
        h = std::log(static_cast<double>(support));
    } else {
        long double acc = 0;
        for (double p : probs) {
            if (p > 0) {
                const long double q = p / total;
                acc -= q * std::log(q);
            }
        }
        h = static_cast<double>(acc);
    }
    return base == EntropyBase::bits ? h / std::numbers::ln2 : h;
}

/// Profiles for every (layer, unit) in layer-ascending, index-ascending order.
struct ProfileSet {
    RunManifest manifest;
    EntropyBase base = EntropyBase::nats;
    std::vector<LanguageActivationProfile> profiles;

    const LanguageActivationProfile& at(const UnitId& u) const {
        return profiles.at(static_cast<std::size_t>(u.layer) * manifest.units_per_layer + u.index);
    }
};

inline LanguageActivationProfile make_profile(UnitId unit, std::vector<double> probs,
                                              EntropyBase base = EntropyBase::nats) {
    LanguageActivationProfile p;
    p.unit = unit;
    p.probs = std::move(probs);
    long double total = 0;
    for (double v : p.probs) total += v;
    p.valid = total > 0;
    if (p.valid) {
        p.normalized.reserve(p.probs.size());
        for (double v : p.probs) p.normalized.push_back(static_cast<double>(v / total));
    }
    p.entropy = lape_entropy(p.probs, base);
    return p;
}

inline ProfileSet compute_profiles(const ActivationAggregate& agg, EntropyBase base = EntropyBase::nats,
                                   unsigned threads = 1) {
    agg.validate();
    const auto& m = agg.manifest;
    ProfileSet out;
    out.manifest = m;
    out.base = base;
    out.profiles.resize(static_cast<std::size_t>(m.num_layers) * m.units_per_layer);
    parallel_for(m.num_layers, threads, [&](std::size_t layer) {
        const auto& stats = agg.layers[layer];
        for (std::uint32_t u = 0; u < m.units_per_layer; ++u) {
            std::vector<double> probs(m.num_languages());
            for (std::size_t k = 0; k < probs.size(); ++k)
                probs[k] = static_cast<double>(stats.token_active_count(k, u)) /
                           static_cast<double>(m.tokens_per_language[k]);
            out.profiles[layer * m.units_per_layer + u] =
                make_profile({static_cast<std::uint32_t>(layer), u, m.kind}, std::move(probs), base);
        }
    });
    return out;
}

/// Linear-interpolation percentile (the numpy default), p in [0, 100].
inline double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw DegenerateInputError("percentile of an empty set");
    const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, values.size() - 1);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double vlo = values[lo];
    double vhi = vlo;
    if (hi != lo) vhi = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(hi), values.end());
    return vlo + (rank - static_cast<double>(lo)) * (vhi - vlo);
}

struct SelectionResult {
    SelectionMode mode = SelectionMode::raw_lape;
    std::string model_name;
    UnitKind kind = UnitKind::raw;
    std::string condition;
    std::uint32_t num_layers = 0;
    std::uint32_t units_per_layer = 0;
    std::vector<std::string> languages;
    std::vector<UnitSet> per_language;  // aligned with languages
    std::map<UnitId, LanguageActivationProfile> profiles;
    SelectionConfig config;
    double raw_threshold = 0;  // only meaningful for raw_lape
    std::size_t dropped_unassigned = 0;

    std::size_t language_index(const std::string& code) const {
        auto it = std::find(languages.begin(), languages.end(), code);
        if (it == languages.end()) throw ValidationError("language '" + code + "' not in selection");
        return static_cast<std::size_t>(it - languages.begin());
    }

    const UnitSet& units_for(const std::string& code) const { return per_language[language_index(code)]; }

    /// Union over languages.
    UnitSet all_units() const {
        UnitSet all;
        for (const auto& s : per_language) all.insert(s.begin(), s.end());
        return all;
    }

    /// Number of languages each selected unit is assigned to.
    std::map<UnitId, std::size_t> language_degree() const {
        std::map<UnitId, std::size_t> deg;
        for (const auto& s : per_language)
            for (const auto& u : s) ++deg[u];
        return deg;
    }
};

namespace detail {

inline SelectionResult empty_result(const ProfileSet& ps, SelectionMode mode, const SelectionConfig& cfg) {
    SelectionResult r;
    r.mode = mode;
    r.model_name = ps.manifest.model_name;
    r.kind = ps.manifest.kind;
    r.condition = ps.manifest.condition;
    r.num_layers = ps.manifest.num_layers;
    r.units_per_layer = ps.manifest.units_per_layer;
    r.languages = ps.manifest.languages;
    r.per_language.resize(r.languages.size());
    r.config = cfg;
    return r;
}

inline bool entropy_order(const LanguageActivationProfile* a, const LanguageActivationProfile* b) {
    if (a->entropy != b->entropy) return a->entropy < b->entropy;
    return a->unit < b->unit;
}

} // namespace detail

inline SelectionResult select_raw(const ProfileSet& ps, const SelectionConfig& cfg) {
    cfg.validate();
    auto result = detail::empty_result(ps, SelectionMode::raw_lape, cfg);

    std::vector<double> pool;
    pool.reserve(ps.profiles.size() * ps.manifest.num_languages());
    for (const auto& p : ps.profiles)
        if (p.valid || !cfg.percentile_exclude_invalid) pool.insert(pool.end(), p.probs.begin(), p.probs.end());
    if (pool.empty()) throw DegenerateInputError("raw selection: no activation probabilities to pool");
    const double threshold = percentile(std::move(pool), cfg.raw_filter_percentile);
    result.raw_threshold = threshold;

    std::vector<const LanguageActivationProfile*> survivors;
    for (const auto& p : ps.profiles)
        if (p.valid && std::isfinite(p.entropy) && p.max_prob() > threshold) survivors.push_back(&p);
    if (survivors.empty())
        throw DegenerateInputError("raw selection: no unit exceeds the percentile threshold " +
                                   format_number(threshold));

    const double base = static_cast<double>(cfg.fraction_of_survivors ? survivors.size() : ps.profiles.size());
    auto keep = static_cast<std::size_t>(std::floor(cfg.raw_entropy_fraction * base * (1.0 + 1e-12)));
    keep = std::min(keep, survivors.size());

    std::stable_sort(survivors.begin(), survivors.end(), detail::entropy_order);
    for (std::size_t i = 0; i < keep; ++i) {
        const auto& p = *survivors[i];
        bool assigned = false;
        for (std::size_t k = 0; k < p.probs.size(); ++k) {
            if (p.probs[k] > threshold) {
                result.per_language[k].insert(p.unit);
                assigned = true;
            }
        }
        if (assigned) result.profiles.emplace(p.unit, p);
        else ++result.dropped_unassigned;
    }
    return result;
}

/// True when the latent passes both SAE gates in at least one language.
inline bool sae_gates_pass(const LanguageActivationProfile& p, const ActivationAggregate& agg,
                           const SelectionConfig& cfg) {
    const auto& m = agg.manifest;
    const auto& stats = agg.layers.at(p.unit.layer);
    for (std::size_t k = 0; k < p.probs.size(); ++k) {
        const double example_rate = static_cast<double>(stats.example_active_count(k, p.unit.index)) /
                                    static_cast<double>(m.examples_per_language[k]);
        if (example_rate >= cfg.sae_example_rate && p.probs[k] >= cfg.sae_hfl_rate) return true;
    }
    return false;
}

/// Languages l with P(f|l) >= ratio * max P(f|l').
inline std::vector<std::size_t> sae_members(std::span<const double> probs, double ratio) {
    std::vector<std::size_t> members;
    if (probs.empty()) return members;
    const double cutoff = ratio * *std::max_element(probs.begin(), probs.end());
    for (std::size_t k = 0; k < probs.size(); ++k)
        if (probs[k] >= cutoff) members.push_back(k);
    return members;
}

inline SelectionResult select_sae(const ProfileSet& ps, const ActivationAggregate& agg,
                                  const SelectionConfig& cfg) {
    cfg.validate();
    if (!(ps.manifest == agg.manifest))
        throw ValidationError("sae selection: profiles and aggregate come from different runs");
    auto result = detail::empty_result(ps, SelectionMode::sae_lape, cfg);
    const auto required = cfg.sae_sharing.required_members();
    for (const auto& p : ps.profiles) {
        if (!p.valid || !sae_gates_pass(p, agg, cfg)) continue;  // entropy := +inf
        const auto members = sae_members(p.probs, cfg.sae_threshold_ratio);
        if (members.size() != required) continue;
        for (auto k : members) result.per_language[k].insert(p.unit);
        result.profiles.emplace(p.unit, p);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Distribution tables

struct SelectionDistributions {
    Table units;      // language, layer, index, entropy, prob, max_prob
    Table languages;  // language, count, mean_entropy, mean_max_prob
};

inline SelectionDistributions selection_distributions(const SelectionResult& r) {
    SelectionDistributions d;
    d.units.header = {"language", "layer", "index", "entropy", "prob", "max_prob"};
    d.languages.header = {"language", "count", "mean_entropy", "mean_max_prob"};
    for (std::size_t k = 0; k < r.languages.size(); ++k) {
        long double sum_h = 0, sum_p = 0;
        for (const auto& u : r.per_language[k]) {
            const auto& p = r.profiles.at(u);
            d.units.add_row({r.languages[k], std::to_string(u.layer), std::to_string(u.index),
                             format_number(p.entropy), format_number(p.probs[k]),
                             format_number(p.max_prob())});
            sum_h += p.entropy;
            sum_p += p.max_prob();
        }
        const auto n = r.per_language[k].size();
        if (n == 0) continue;
        d.languages.add_row({r.languages[k], std::to_string(n),
                             format_number(static_cast<double>(sum_h / n)),
                             format_number(static_cast<double>(sum_p / n))});
    }
    return d;
}

// ---------------------------------------------------------------------------
// JSON

inline void to_json(nlohmann::json& j, const SelectionConfig& c) {
    j = nlohmann::json{
        {"raw_filter_percentile", c.raw_filter_percentile},
        {"raw_entropy_fraction", c.raw_entropy_fraction},
        {"sae_example_rate", c.sae_example_rate},
        {"sae_hfl_rate", c.sae_hfl_rate},
        {"sae_threshold_ratio", c.sae_threshold_ratio},
        {"sae_sharing", c.sae_sharing.kind == SaeSharing::Kind::lang_specific ? "lang_specific" : "lang_shared"},
        {"sae_shared_languages", c.sae_sharing.languages},
        {"percentile_exclude_invalid", c.percentile_exclude_invalid},
        {"fraction_of_survivors", c.fraction_of_survivors}};
}

/// Missing keys keep their defaults, so configs may override selectively.
inline void from_json(const nlohmann::json& j, SelectionConfig& c) {
    try {
        c.raw_filter_percentile = j.value("raw_filter_percentile", c.raw_filter_percentile);
        c.raw_entropy_fraction = j.value("raw_entropy_fraction", c.raw_entropy_fraction);
        c.sae_example_rate = j.value("sae_example_rate", c.sae_example_rate);
        c.sae_hfl_rate = j.value("sae_hfl_rate", c.sae_hfl_rate);
        c.sae_threshold_ratio = j.value("sae_threshold_ratio", c.sae_threshold_ratio);
        const auto sharing = j.value("sae_sharing", std::string("lang_specific"));
        if (sharing == "lang_specific") c.sae_sharing = {SaeSharing::Kind::lang_specific, 1};
        else if (sharing == "lang_shared")
            c.sae_sharing = {SaeSharing::Kind::lang_shared, j.value("sae_shared_languages", 2u)};
        else throw ValidationError("selection config: unknown sae_sharing '" + sharing + "'");
        c.percentile_exclude_invalid = j.value("percentile_exclude_invalid", c.percentile_exclude_invalid);
        c.fraction_of_survivors = j.value("fraction_of_survivors", c.fraction_of_survivors);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("selection config: ") + e.what());
    }
    c.validate();
}

inline nlohmann::json selection_to_json(const SelectionResult& r) {
    nlohmann::json per_language = nlohmann::json::object();
    for (std::size_t k = 0; k < r.languages.size(); ++k) {
        auto units = nlohmann::json::array();
        for (const auto& u : r.per_language[k]) {
            const auto& p = r.profiles.at(u);
            units.push_back({{"layer", u.layer}, {"index", u.index}, {"entropy", p.entropy}, {"probs", p.probs}});
        }
        per_language[r.languages[k]] = std::move(units);
    }
    return nlohmann::json{{"mode", r.mode == SelectionMode::raw_lape ? "raw_lape" : "sae_lape"},
                          {"model_name", r.model_name},
                          {"kind", std::string(to_string(r.kind))},
                          {"condition", r.condition},
                          {"num_layers", r.num_layers},
                          {"units_per_layer", r.units_per_layer},
                          {"languages", r.languages},
                          {"config_echo", r.config},
                          {"raw_threshold", r.raw_threshold},
                          {"dropped_unassigned", r.dropped_unassigned},
                          {"per_language", std::move(per_language)}};
}

inline SelectionResult selection_from_json(const nlohmann::json& j) {
    SelectionResult r;
    try {
        const auto mode = j.at("mode").get<std::string>();
        if (mode == "raw_lape") r.mode = SelectionMode::raw_lape;
        else if (mode == "sae_lape") r.mode = SelectionMode::sae_lape;
        else throw FormatError("selection: unknown mode '" + mode + "'");
        j.at("model_name").get_to(r.model_name);
        r.kind = parse_kind(j.at("kind").get<std::string>());
        j.at("condition").get_to(r.condition);
        j.at("num_layers").get_to(r.num_layers);
        j.at("units_per_layer").get_to(r.units_per_layer);
        j.at("languages").get_to(r.languages);
        r.config = j.at("config_echo").get<SelectionConfig>();
        r.raw_threshold = j.value("raw_threshold", 0.0);
        r.dropped_unassigned = j.value("dropped_unassigned", std::size_t{0});
        r.per_language.resize(r.languages.size());
        const auto& per_language = j.at("per_language");
        for (std::size_t k = 0; k < r.languages.size(); ++k) {
            if (!per_language.contains(r.languages[k])) continue;
            for (const auto& e : per_language.at(r.languages[k])) {
                UnitId u{e.at("layer").get<std::uint32_t>(), e.at("index").get<std::uint32_t>(), r.kind};
                if (u.layer >= r.num_layers || u.index >= r.units_per_layer)
                    throw FormatError("selection: unit " + to_string(u) + " outside declared shape");
                auto probs = e.at("probs").get<std::vector<double>>();
                if (probs.size() != r.languages.size())
                    throw FormatError("selection: probs length mismatch for " + to_string(u));
                r.per_language[k].insert(u);
                if (!r.profiles.contains(u)) {
                    auto p = make_profile(u, std::move(probs));
                    p.entropy = e.at("entropy").get<double>();
                    r.profiles.emplace(u, std::move(p));
                }
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("selection: ") + e.what());
    }
    return r;
}

inline void write_selection(const SelectionResult& r, const fs::path& path) {
    write_text(path, selection_to_json(r).dump(2) + "\n");
}

inline SelectionResult read_selection(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path.string() + "': " + e.what());
    }
    return selection_from_json(j);
}

} // namespace langunits

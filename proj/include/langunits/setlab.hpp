#pragma once

// Set-overlap analytics over selection results: Jaccard similarity, three-way
// condition partitions, degree-filtered Euler regions and per-layer alignment.

#include "langunits/core.hpp"
#include "langunits/log.hpp"
#include "langunits/selection.hpp"
#include "langunits/table.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace langunits {

inline std::size_t intersection_size(const UnitSet& a, const UnitSet& b) {
    std::size_t n = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) ++ia;
        else if (*ib < *ia) ++ib;
        else { ++n; ++ia; ++ib; }
    }
    return n;
}

/// |a ∩ b| / |a ∪ b|; 0 (with a warning) when both sets are empty.
inline double jaccard(const UnitSet& a, const UnitSet& b) {
    const auto inter = intersection_size(a, b);
    const auto uni = a.size() + b.size() - inter;
    if (uni == 0) {
        warn("jaccard of two empty sets defined as 0");
        return 0.0;
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

struct ConditionPartition {
    UnitSet only_a;
    UnitSet only_b;
    UnitSet overlap;
    std::pair<std::string, std::string> labels;
};

namespace detail {

inline void check_single_kind(const UnitSet& a, const UnitSet& b) {
    std::optional<UnitKind> kind;
    for (const auto* s : {&a, &b}) {
        for (const auto& u : *s) {
            if (!kind) kind = u.kind;
            else if (*kind != u.kind) throw ValidationError("partition: sets mix raw and sae units");
        }
    }
}

inline void check_same_universe(const SelectionResult& a, const SelectionResult& b) {
    if (a.model_name != b.model_name)
        throw ValidationError("selections come from different models ('" + a.model_name + "' vs '" +
                              b.model_name + "')");
    if (a.kind != b.kind) throw ValidationError("selections mix raw and sae units");
}

} // namespace detail

inline ConditionPartition partition(const UnitSet& a, const UnitSet& b,
                                    std::pair<std::string, std::string> labels = {"a", "b"}) {
    detail::check_single_kind(a, b);
    ConditionPartition p;
    p.labels = std::move(labels);
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(p.only_a, p.only_a.end()));
    std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::inserter(p.only_b, p.only_b.end()));
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(p.overlap, p.overlap.end()));
    return p;
}

/// Partition of two selections' pooled unit sets, or of one language's sets.
inline ConditionPartition partition(const SelectionResult& a, const SelectionResult& b,
                                    const std::optional<std::string>& language = std::nullopt) {
    detail::check_same_universe(a, b);
    auto labels = std::make_pair(a.condition, b.condition);
    if (language) return partition(a.units_for(*language), b.units_for(*language), std::move(labels));
    return partition(a.all_units(), b.all_units(), std::move(labels));
}

// ---------------------------------------------------------------------------
// Degree-filtered Euler regions

/// Exclusive region sizes keyed by membership mask (bit c = condition c).
struct RegionTable {
    std::vector<std::string> conditions;
    std::size_t max_degree = 0;
    std::map<unsigned, std::size_t> regions;

    std::size_t total() const {
        std::size_t n = 0;
        for (const auto& [mask, count] : regions) n += count;
        return n;
    }

    std::string region_name(unsigned mask) const {
        std::string name;
        for (std::size_t c = 0; c < conditions.size(); ++c) {
            if (mask & (1u << c)) {
                if (!name.empty()) name += "&";
                name += conditions[c];
            }
        }
        return name;
    }
};

/// Units assigned to between 1 and max_degree languages.
inline UnitSet degree_filtered_units(const SelectionResult& r, std::size_t max_degree) {
    UnitSet out;
    for (const auto& [u, d] : r.language_degree())
        if (d <= max_degree) out.insert(out.end(), u);
    return out;
}

inline RegionTable degree_regions(const std::vector<SelectionResult>& selections, std::size_t max_degree) {
    if (selections.size() < 2 || selections.size() > 3)
        throw ValidationError("degree_regions supports 2 or 3 conditions, got " +
                              std::to_string(selections.size()));
    if (max_degree < 1) throw ValidationError("degree_regions: max_degree must be >= 1");
    for (std::size_t i = 1; i < selections.size(); ++i) detail::check_same_universe(selections[0], selections[i]);

    RegionTable t;
    t.max_degree = max_degree;
    std::map<UnitId, unsigned> membership;
    for (std::size_t c = 0; c < selections.size(); ++c) {
        t.conditions.push_back(selections[c].condition);
        for (const auto& u : degree_filtered_units(selections[c], max_degree)) membership[u] |= 1u << c;
    }
    const unsigned full = (1u << selections.size()) - 1;
    for (unsigned mask = 1; mask <= full; ++mask) t.regions[mask] = 0;
    for (const auto& [u, mask] : membership) ++t.regions[mask];
    return t;
}

inline Table region_table(const RegionTable& t) {
    Table out;
    out.header = {"max_degree", "region", "count"};
    for (const auto& [mask, count] : t.regions)
        out.add_row({std::to_string(t.max_degree), t.region_name(mask), std::to_string(count)});
    return out;
}

// ---------------------------------------------------------------------------
// Per-language and per-layer alignment

namespace detail {

inline UnitSet restrict_to_layer(const UnitSet& s, std::uint32_t layer) {
    UnitSet out;
    for (const auto& u : s)
        if (u.layer == layer) out.insert(out.end(), u);
    return out;
}

inline std::set<std::uint32_t> populated_layers(const SelectionResult& r) {
    std::set<std::uint32_t> layers;
    for (const auto& s : r.per_language)
        for (const auto& u : s) layers.insert(u.layer);
    return layers;
}

inline void check_same_languages(const SelectionResult& a, const SelectionResult& b) {
    const std::set<std::string> la(a.languages.begin(), a.languages.end());
    const std::set<std::string> lb(b.languages.begin(), b.languages.end());
    if (la != lb) throw ValidationError("selections have different language inventories");
}

} // namespace detail

struct LanguageJaccard {
    std::string language;
    std::uint32_t layer = 0;  // unused for pooled values
    double jaccard = 0;
    bool empty_union = false;
};

/// Pooled across layers: one value per language, in a's language order.
inline std::vector<LanguageJaccard> jaccard_by_language(const SelectionResult& a, const SelectionResult& b) {
    detail::check_same_universe(a, b);
    detail::check_same_languages(a, b);
    std::vector<LanguageJaccard> out;
    ScopedWarningSink quiet(nullptr);
    for (const auto& lang : a.languages) {
        const auto& sa = a.units_for(lang);
        const auto& sb = b.units_for(lang);
        out.push_back({lang, 0, jaccard(sa, sb), sa.empty() && sb.empty()});
    }
    return out;
}

struct AlignmentPoint {
    std::uint32_t layer = 0;
    double mean_jaccard = 0;
    double std_jaccard = 0;
    std::size_t languages_counted = 0;
    std::size_t empty_unions = 0;
};

struct AlignmentCurve {
    std::vector<AlignmentPoint> per_layer;
    std::vector<LanguageJaccard> cells;  // per (layer, language)
};

/// Per layer: Jaccard of each language's units restricted to that layer,
/// summarized as mean and population std across languages. Layers are those
/// hosting selected units in both inputs. Empty unions count as 0 unless
/// skip_empty is set.
inline AlignmentCurve layerwise_alignment(const SelectionResult& a, const SelectionResult& b,
                                          bool skip_empty = false) {
    detail::check_same_universe(a, b);
    detail::check_same_languages(a, b);
    const auto la = detail::populated_layers(a);
    const auto lb = detail::populated_layers(b);
    std::vector<std::uint32_t> layers;
    std::set_intersection(la.begin(), la.end(), lb.begin(), lb.end(), std::back_inserter(layers));
    if (layers.empty()) throw ValidationError("layerwise_alignment: no common layers");

    AlignmentCurve curve;
    ScopedWarningSink quiet(nullptr);
    for (auto layer : layers) {
        AlignmentPoint pt;
        pt.layer = layer;
        std::vector<double> values;
        for (const auto& lang : a.languages) {
            const auto sa = detail::restrict_to_layer(a.units_for(lang), layer);
            const auto sb = detail::restrict_to_layer(b.units_for(lang), layer);
            const bool empty = sa.empty() && sb.empty();
            const double j = jaccard(sa, sb);
            curve.cells.push_back({lang, layer, j, empty});
            if (empty) {
                ++pt.empty_unions;
                if (skip_empty) continue;
            }
            values.push_back(j);
        }
        pt.languages_counted = values.size();
        if (!values.empty()) {
            long double sum = 0;
            for (double v : values) sum += v;
            const long double mean = sum / values.size();
            long double ss = 0;
            for (double v : values) ss += (v - mean) * (v - mean);
            pt.mean_jaccard = static_cast<double>(mean);
            pt.std_jaccard = static_cast<double>(std::sqrt(ss / values.size()));
        }
        curve.per_layer.push_back(pt);
    }
    return curve;
}

inline Table alignment_table(const AlignmentCurve& c) {
    Table t;
    t.header = {"layer", "mean_jaccard", "std_jaccard", "languages_counted", "empty_unions"};
    for (const auto& p : c.per_layer)
        t.add_row({std::to_string(p.layer), format_number(p.mean_jaccard), format_number(p.std_jaccard),
                   std::to_string(p.languages_counted), std::to_string(p.empty_unions)});
    return t;
}

inline Table alignment_cells_table(const AlignmentCurve& c) {
    Table t;
    t.header = {"layer", "language", "jaccard", "empty_union"};
    for (const auto& cell : c.cells)
        t.add_row({std::to_string(cell.layer), cell.language, format_number(cell.jaccard),
                   cell.empty_union ? "1" : "0"});
    return t;
}

} // namespace langunits

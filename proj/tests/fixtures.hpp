#pragma once

#include "langunits/rng.hpp"
#include "langunits/selection.hpp"

#include <string>
#include <vector>

namespace fixtures {

using namespace langunits;

/// Selection with the given per-language sets and placeholder profiles.
inline SelectionResult make_selection(const std::string& condition, const std::vector<std::string>& languages,
                                      const std::vector<UnitSet>& sets, std::uint32_t layers = 4,
                                      std::uint32_t units = 64, const std::string& model = "toy") {
    SelectionResult r;
    r.model_name = model;
    r.condition = condition;
    r.num_layers = layers;
    r.units_per_layer = units;
    r.languages = languages;
    r.per_language = sets;
    for (std::size_t k = 0; k < sets.size(); ++k) {
        for (const auto& u : sets[k]) {
            if (r.profiles.contains(u)) continue;
            std::vector<double> probs(languages.size(), 0.01);
            probs[k] = 0.9;
            r.profiles.emplace(u, make_profile(u, probs));
        }
    }
    return r;
}

/// Seeded random unit set over a small universe so overlaps are frequent.
inline UnitSet random_set(StableRng& rng, std::uint32_t layers, std::uint32_t units, double density) {
    UnitSet s;
    for (std::uint32_t l = 0; l < layers; ++l)
        for (std::uint32_t u = 0; u < units; ++u)
            if (rng.uniform() < density) s.insert({l, u, UnitKind::raw});
    return s;
}

inline SelectionResult random_selection(StableRng& rng, const std::string& condition, std::size_t languages,
                                        std::uint32_t layers, std::uint32_t units) {
    std::vector<std::string> codes;
    std::vector<UnitSet> sets;
    for (std::size_t k = 0; k < languages; ++k) {
        codes.push_back("l" + std::to_string(k));
        sets.push_back(random_set(rng, layers, units, 0.05 + 0.4 * rng.uniform()));
    }
    return make_selection(condition, codes, sets, layers, units);
}

} // namespace fixtures

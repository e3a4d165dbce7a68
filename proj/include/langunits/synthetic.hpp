#pragma once

// Seeded synthetic fixtures: aggregates with planted language-selective
// units, typology tables with a known signal, and perplexity logs. Used by the
// test suites and by the langunits_synth tool.

#include "langunits/core.hpp"
#include "langunits/rng.hpp"
#include "langunits/stats.hpp"
#include "langunits/store.hpp"
#include "langunits/table.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

namespace langunits::synthetic {

inline std::vector<std::string> language_codes(std::size_t n) {
    static const std::vector<std::string> codes{"en", "hi", "fr", "zh", "ru", "ar", "es", "de",
                                                "ja", "ko", "th", "bn", "ta", "el", "he", "vi"};
    if (n > codes.size()) throw ValidationError("synthetic: at most 16 languages");
    return {codes.begin(), codes.begin() + static_cast<std::ptrdiff_t>(n)};
}

struct PlantedSpec {
    std::string model_name = "synthetic-lm";
    std::string condition = "native";
    UnitKind kind = UnitKind::raw;
    std::uint32_t num_layers = 1;
    std::uint32_t units_per_layer = 5000;
    std::size_t num_languages = 8;
    std::size_t planted = 50;
    std::uint64_t tokens = 10000;
    std::uint64_t examples = 200;
    double planted_prob = 0.9;
    double background_max = 0.02;
    double planted_off_max = 0.01;
    std::uint64_t seed = 0;
};

struct PlantedFixture {
    ActivationAggregate aggregate;
    std::map<UnitId, std::size_t> planted;  // unit -> language index
};

inline std::uint64_t count_for(double p, std::uint64_t total) {
    return std::min<std::uint64_t>(total, static_cast<std::uint64_t>(std::llround(p * static_cast<double>(total))));
}

/// Background units draw probabilities uniformly from [0, background_max];
/// planted units fire with planted_prob in one language and at most
/// planted_off_max elsewhere.
inline PlantedFixture make_planted(const PlantedSpec& spec) {
    RunManifest m;
    m.model_name = spec.model_name;
    m.kind = spec.kind;
    m.num_layers = spec.num_layers;
    m.units_per_layer = spec.units_per_layer;
    m.languages = language_codes(spec.num_languages);
    m.tokens_per_language.assign(spec.num_languages, spec.tokens);
    m.examples_per_language.assign(spec.num_languages, spec.examples);
    m.condition = spec.condition;

    PlantedFixture fx{ActivationAggregate::zeros(m), {}};
    StableRng rng(spec.seed);

    const std::size_t total_units = static_cast<std::size_t>(spec.num_layers) * spec.units_per_layer;
    if (spec.planted > total_units) throw ValidationError("synthetic: more planted units than units");
    std::vector<std::size_t> order(total_units);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < spec.planted; ++i)
        std::swap(order[i], order[i + static_cast<std::size_t>(rng.below(total_units - i))]);
    for (std::size_t i = 0; i < spec.planted; ++i) {
        UnitId u{static_cast<std::uint32_t>(order[i] / spec.units_per_layer),
                 static_cast<std::uint32_t>(order[i] % spec.units_per_layer), spec.kind};
        fx.planted[u] = static_cast<std::size_t>(rng.below(spec.num_languages));
    }

    for (std::uint32_t l = 0; l < spec.num_layers; ++l) {
        auto& s = fx.aggregate.layers[l];
        for (std::uint32_t u = 0; u < spec.units_per_layer; ++u) {
            auto it = fx.planted.find(UnitId{l, u, spec.kind});
            for (std::size_t k = 0; k < spec.num_languages; ++k) {
                double p;
                if (it == fx.planted.end()) p = rng.uniform() * spec.background_max;
                else if (it->second == k) p = spec.planted_prob;
                else p = rng.uniform() * spec.planted_off_max;
                const auto c = count_for(p, spec.tokens);
                s.token_active_count(k, u) = c;
                s.example_active_count(k, u) = count_for(std::min(1.0, 5.0 * p), spec.examples);
                s.activation_sum(k, u) = static_cast<double>(c) * (0.5 + rng.uniform());
            }
        }
    }
    return fx;
}

// ---------------------------------------------------------------------------
// Multi-condition pipeline fixture

struct PipelineSpec {
    std::string model_name = "synthetic-lm";
    std::uint32_t num_layers = 4;
    std::uint32_t units_per_layer = 400;
    std::size_t num_languages = 12;
    std::size_t planted_per_layer = 24;
    double romanized_keep = 0.25;  // fraction of planted units shared with romanized
    double shuffled_keep = 0.8;    // fraction of planted units shared with shuffled
    std::uint64_t tokens = 20000;
    std::uint64_t examples = 400;
    std::size_t ppl_examples = 100;
    std::uint64_t seed = 2024;
};

struct PipelineFixture {
    std::vector<ActivationAggregate> conditions;  // native, romanized, shuffled
    std::string typology_csv;
    std::vector<PPLRecord> ppl_records;
};

namespace detail {

inline ActivationAggregate planted_condition(const PipelineSpec& spec, const std::string& condition,
                                             const std::map<UnitId, std::size_t>& planted,
                                             const Matrix<double>& latent, std::uint64_t seed) {
    RunManifest m;
    m.model_name = spec.model_name;
    m.kind = UnitKind::raw;
    m.num_layers = spec.num_layers;
    m.units_per_layer = spec.units_per_layer;
    m.languages = language_codes(spec.num_languages);
    m.tokens_per_language.assign(spec.num_languages, spec.tokens);
    m.examples_per_language.assign(spec.num_languages, spec.examples);
    m.condition = condition;
    auto agg = ActivationAggregate::zeros(m);
    StableRng rng(seed);
    for (std::uint32_t l = 0; l < spec.num_layers; ++l) {
        auto& s = agg.layers[l];
        for (std::uint32_t u = 0; u < spec.units_per_layer; ++u) {
            auto it = planted.find(UnitId{l, u, UnitKind::raw});
            // Mean activation tracks a latent typological coordinate for a
            // third of the units, with noise that shrinks with depth.
            const std::size_t coord = u % latent.cols();
            const bool informative = u % 3 == 0;
            const double noise = 0.2 + 0.6 * (1.0 - static_cast<double>(l) / spec.num_layers);
            for (std::size_t k = 0; k < spec.num_languages; ++k) {
                double p;
                if (it == planted.end()) p = 0.3 + 0.2 * rng.uniform();
                else if (it->second == k) p = 0.95;
                else p = 0.05 * rng.uniform();
                const auto c = count_for(p, spec.tokens);
                s.token_active_count(k, u) = c;
                s.example_active_count(k, u) = count_for(std::min(1.0, 2.0 * p), spec.examples);
                const double mean = informative ? latent(k, coord) + noise * (rng.uniform() - 0.5)
                                                : rng.uniform() - 0.5;
                s.activation_sum(k, u) = mean * static_cast<double>(spec.tokens);
            }
        }
    }
    return agg;
}

} // namespace detail

inline PipelineFixture make_pipeline(const PipelineSpec& spec) {
    StableRng rng(spec.seed);
    const auto langs = language_codes(spec.num_languages);

    // Latent typology coordinates per language.
    Matrix<double> latent(spec.num_languages, 4);
    for (auto& v : latent.flat()) v = rng.uniform() * 2.0 - 1.0;

    std::map<UnitId, std::size_t> native, romanized, shuffled;
    for (std::uint32_t l = 0; l < spec.num_layers; ++l) {
        std::vector<std::uint32_t> idx(spec.units_per_layer);
        std::iota(idx.begin(), idx.end(), 0u);
        rng.shuffle(std::span<std::uint32_t>(idx));
        for (std::size_t i = 0; i < spec.planted_per_layer; ++i) {
            const UnitId u{l, idx[i], UnitKind::raw};
            const auto lang = static_cast<std::size_t>(rng.below(spec.num_languages));
            native[u] = lang;
            const UnitId fresh{l, idx[spec.planted_per_layer + i], UnitKind::raw};
            romanized[rng.uniform() < spec.romanized_keep ? u : fresh] = lang;
            shuffled[rng.uniform() < spec.shuffled_keep ? u : fresh] = lang;
        }
    }

    PipelineFixture fx;
    fx.conditions.push_back(detail::planted_condition(spec, "native", native, latent, rng.next()));
    fx.conditions.push_back(detail::planted_condition(spec, "romanized", romanized, latent, rng.next()));
    fx.conditions.push_back(detail::planted_condition(spec, "shuffled", shuffled, latent, rng.next()));

    // Typology: fam features are exact functions of the latent coordinates,
    // syntax mildly noised, phonology heavily noised, plus one constant column.
    Table typ;
    typ.header = {"lang", "fam_a", "fam_b", "syntax_order", "syntax_case", "phonology_tone", "phonology_stress",
                  "geo_lat", "inventory_constant"};
    for (std::size_t k = 0; k < spec.num_languages; ++k) {
        typ.add_row({langs[k], format_number(latent(k, 0)), format_number(latent(k, 1)),
                     format_number(latent(k, 2) + 0.3 * (rng.uniform() - 0.5)),
                     format_number(latent(k, 0) + 0.3 * (rng.uniform() - 0.5)),
                     format_number(0.2 * latent(k, 3) + 2.0 * (rng.uniform() - 0.5)),
                     format_number(rng.uniform()), format_number(latent(k, 3)), "1"});
    }
    fx.typology_csv = to_csv(typ);

    // Perplexity logs for two languages and two target sets with controls.
    struct SetEffect {
        const char* lang;
        const char* set;
        double ratio;
    };
    const std::vector<SetEffect> effects{{"en", "overlap", 1.12},         {"en", "overlap_random", 0.95},
                                         {"en", "only_native", 0.96},     {"en", "only_native_random", 1.04},
                                         {"hi", "overlap", 2.79},         {"hi", "overlap_random", 1.06},
                                         {"hi", "only_native", 1.08},     {"hi", "only_native_random", 0.95}};
    std::map<std::string, std::vector<double>> clean;
    for (const char* lang : {"en", "hi"}) {
        auto& v = clean[lang];
        for (std::size_t i = 0; i < spec.ppl_examples; ++i) v.push_back(std::exp(2.0 + 3.0 * rng.uniform()));
    }
    for (const auto& e : effects) {
        for (std::size_t i = 0; i < spec.ppl_examples; ++i) {
            const double c = clean[e.lang][i];
            const double r = e.ratio * (1.0 + 0.1 * (rng.uniform() - 0.5));
            fx.ppl_records.push_back({i, e.lang, c, c * r, e.set, Ablation::zero});
        }
    }
    return fx;
}

} // namespace langunits::synthetic

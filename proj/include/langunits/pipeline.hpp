#pragma once

// Config-driven orchestration: select -> overlap -> probe -> intervention
// statistics -> report bundle. Every stage writes deterministic CSV/JSON
// under the configured output directory.

#include "langunits/core.hpp"
#include "langunits/log.hpp"
#include "langunits/perturb.hpp"
#include "langunits/probe.hpp"
#include "langunits/selection.hpp"
#include "langunits/setlab.hpp"
#include "langunits/stats.hpp"
#include "langunits/store.hpp"
#include "langunits/table.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace langunits {

/// Upstream artifact (aggregate, selection, log) missing or unreadable.
class UpstreamError : public Error {
public:
    using Error::Error;
};

struct ConditionInput {
    std::string name;
    fs::path aggregate;
};

struct ComparisonSpec {
    std::string a;
    std::string b;
};

struct ProbeConfig {
    std::string condition;  // aggregate providing mean activations
    fs::path typology;
    std::vector<std::string> languages;  // empty: the aggregate's languages
    std::vector<std::uint32_t> layers;   // empty: every layer
    double lambda = 1.0;
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    bool centered = true;
    std::size_t block = 64;
    std::optional<ComparisonSpec> subsets;  // conditions defining only_a/only_b/overlap
};

struct CorpusJob {
    fs::path input;
    std::string language;
    std::optional<std::uint64_t> shuffle_seed;
    bool ascii = false;
};

struct PipelineConfig {
    std::string name;
    fs::path output_dir;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string mode = "auto";  // auto | raw_lape | sae_lape
    SelectionConfig selection;
    std::vector<ConditionInput> conditions;
    std::vector<ComparisonSpec> comparisons;
    std::vector<std::string> region_conditions;
    std::vector<std::size_t> region_degrees{3};
    bool skip_empty_languages = false;
    std::optional<ProbeConfig> probe;
    std::vector<fs::path> ppl_logs;
    std::vector<ControlPair> control_pairs;
    std::vector<CorpusJob> corpora;
    std::optional<ComparisonSpec> neuron_sets;  // exported target sets + matched controls
    bool literal_control_pool = false;

    const ConditionInput& condition(const std::string& name) const {
        for (const auto& c : conditions)
            if (c.name == name) return c;
        throw ValidationError("config: unknown condition '" + name + "'");
    }
};

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

template <typename T>
T required(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(std::string("config: missing required field '") + key + "'");
    return j.at(key).get<T>();
}

} // namespace detail

/// Parses a pipeline config. Relative paths resolve against `base`. Path
/// existence is checked separately by validate_paths.
inline PipelineConfig parse_config(const nlohmann::json& j, const fs::path& base) {
    PipelineConfig c;
    try {
        c.name = j.value("name", std::string("experiment"));
        c.output_dir = detail::resolve(base, detail::required<std::string>(j, "output_dir"));
        if (!j.contains("seed")) throw ValidationError("config: 'seed' must be set explicitly");
        c.seed = j.at("seed").get<std::uint64_t>();
        c.threads = j.value("threads", 1u);
        if (j.contains("selection")) {
            c.selection = j.at("selection").get<SelectionConfig>();
            c.mode = j.at("selection").value("mode", std::string("auto"));
            if (c.mode != "auto" && c.mode != "raw_lape" && c.mode != "sae_lape")
                throw ValidationError("config: unknown selection mode '" + c.mode + "'");
        }
        for (const auto& cj : j.value("conditions", nlohmann::json::array()))
            c.conditions.push_back({detail::required<std::string>(cj, "name"),
                                    detail::resolve(base, detail::required<std::string>(cj, "aggregate"))});
        for (const auto& cj : j.value("comparisons", nlohmann::json::array()))
            c.comparisons.push_back({detail::required<std::string>(cj, "a"), detail::required<std::string>(cj, "b")});
        if (j.contains("degree_regions")) {
            const auto& d = j.at("degree_regions");
            c.region_conditions = detail::required<std::vector<std::string>>(d, "conditions");
            c.region_degrees = d.value("max_degrees", std::vector<std::size_t>{3});
        }
        c.skip_empty_languages = j.value("skip_empty_languages", false);
        if (j.contains("probe")) {
            const auto& p = j.at("probe");
            ProbeConfig pc;
            pc.condition = detail::required<std::string>(p, "condition");
            pc.typology = detail::resolve(base, detail::required<std::string>(p, "typology"));
            pc.languages = p.value("languages", std::vector<std::string>{});
            pc.layers = p.value("layers", std::vector<std::uint32_t>{});
            pc.lambda = p.value("lambda", 1.0);
            pc.folds = p.value("folds", std::size_t{5});
            if (!p.contains("seed")) throw ValidationError("config: 'probe.seed' must be set explicitly");
            pc.seed = p.at("seed").get<std::uint64_t>();
            pc.centered = p.value("centered", true);
            pc.block = p.value("block", std::size_t{64});
            if (p.contains("subsets"))
                pc.subsets = ComparisonSpec{detail::required<std::string>(p.at("subsets"), "a"),
                                            detail::required<std::string>(p.at("subsets"), "b")};
            c.probe = pc;
        }
        if (j.contains("intervention")) {
            const auto& iv = j.at("intervention");
            for (const auto& r : detail::required<std::vector<std::string>>(iv, "records"))
                c.ppl_logs.push_back(detail::resolve(base, r));
            for (const auto& pj : iv.value("pairs", nlohmann::json::array()))
                c.control_pairs.push_back({detail::required<std::string>(pj, "target"),
                                           detail::required<std::string>(pj, "control")});
        }
        if (j.contains("neuron_sets")) {
            const auto& ns = j.at("neuron_sets");
            c.neuron_sets = ComparisonSpec{detail::required<std::string>(ns, "a"), detail::required<std::string>(ns, "b")};
            c.literal_control_pool = ns.value("literal_pool", false);
        }
        for (const auto& cj : j.value("corpora", nlohmann::json::array())) {
            CorpusJob job;
            job.input = detail::resolve(base, detail::required<std::string>(cj, "input"));
            job.language = cj.value("language", std::string());
            if (cj.contains("shuffle_seed")) job.shuffle_seed = cj.at("shuffle_seed").get<std::uint64_t>();
            job.ascii = cj.value("ascii", false);
            if (!job.shuffle_seed && !job.ascii)
                throw ValidationError("config: corpus job for '" + job.input.string() + "' does nothing");
            c.corpora.push_back(std::move(job));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }

    std::set<std::string> names;
    for (const auto& cond : c.conditions)
        if (!names.insert(cond.name).second) throw ValidationError("config: duplicate condition '" + cond.name + "'");
    for (const auto& cmp : c.comparisons) {
        c.condition(cmp.a);
        c.condition(cmp.b);
    }
    for (const auto& n : c.region_conditions) c.condition(n);
    if (!c.region_conditions.empty() && (c.region_conditions.size() < 2 || c.region_conditions.size() > 3))
        throw ValidationError("config: degree_regions needs 2 or 3 conditions");
    if (c.neuron_sets) {
        c.condition(c.neuron_sets->a);
        c.condition(c.neuron_sets->b);
    }
    if (c.probe) {
        c.condition(c.probe->condition);
        if (c.probe->subsets) {
            c.condition(c.probe->subsets->a);
            c.condition(c.probe->subsets->b);
        }
    }
    return c;
}

inline PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("config '" + path.string() + "': " + e.what());
    }
    return parse_config(j, fs::absolute(path).parent_path());
}

/// Every referenced input path must exist at validation time.
inline void validate_paths(const PipelineConfig& c) {
    auto need = [](const fs::path& p, const std::string& what) {
        if (!fs::exists(p)) throw ValidationError("config: " + what + " '" + p.string() + "' does not exist");
    };
    for (const auto& cond : c.conditions) need(cond.aggregate, "aggregate for condition " + cond.name);
    if (c.probe) need(c.probe->typology, "typology");
    for (const auto& p : c.ppl_logs) need(p, "ppl log");
    for (const auto& job : c.corpora) need(job.input, "corpus");
}

// ---------------------------------------------------------------------------
// Report bundle bookkeeping

struct TableEntry {
    std::string path;  // relative to output_dir
    std::string description;
    std::size_t rows = 0;
};

class Bundle {
public:
    explicit Bundle(fs::path root) : root_(std::move(root)) {}

    const fs::path& root() const { return root_; }

    void write_table(const std::string& rel, const Table& t, std::string description) {
        const auto path = prepare(rel);
        write_csv(t, path);
        if (t.rows.empty()) warn("table " + rel + " has zero rows");
        record(rel, std::move(description), t.rows.size());
    }

    void write_json(const std::string& rel, const nlohmann::json& j, std::string description, std::size_t rows) {
        write_text(prepare(rel), j.dump(2) + "\n");
        record(rel, std::move(description), rows);
    }

    void write_matrix(const std::string& rel, const Matrix<double>& m, std::string description) {
        langunits::write_matrix(m, prepare(rel));
        record(rel, std::move(description), m.rows());
    }

    void write_raw(const std::string& rel, const std::string& text, std::string description, std::size_t rows) {
        write_text(prepare(rel), text);
        record(rel, std::move(description), rows);
    }

    fs::path prepare(const std::string& rel) const {
        const auto path = root_ / rel;
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create '" + path.parent_path().string() + "': " + ec.message());
        return path;
    }

    const std::map<std::string, TableEntry>& entries() const { return entries_; }

    nlohmann::json manifest_json() const {
        auto arr = nlohmann::json::array();
        for (const auto& [rel, e] : entries_)
            arr.push_back({{"path", e.path}, {"description", e.description}, {"rows", e.rows}});
        return {{"tables", arr}};
    }

private:
    void record(const std::string& rel, std::string description, std::size_t rows) {
        entries_[rel] = TableEntry{rel, std::move(description), rows};
    }

    fs::path root_;
    std::map<std::string, TableEntry> entries_;
};

// ---------------------------------------------------------------------------
// Stages

inline ActivationAggregate load_upstream_aggregate(const ConditionInput& c) {
    try {
        return read_aggregate(c.aggregate);
    } catch (const Error& e) {
        throw UpstreamError("condition " + c.name + ": " + e.what());
    }
}

inline SelectionResult select_condition(const PipelineConfig& cfg, const ActivationAggregate& agg) {
    const auto profiles = compute_profiles(agg, EntropyBase::nats, cfg.threads);
    const bool raw = cfg.mode == "raw_lape" || (cfg.mode == "auto" && agg.manifest.kind == UnitKind::raw);
    if (!raw) return select_sae(profiles, agg, cfg.selection);
    try {
        return select_raw(profiles, cfg.selection);
    } catch (const DegenerateInputError& e) {
        warn(std::string("condition ") + agg.manifest.condition + ": " + e.what() + "; emitting empty selection");
        auto r = detail::empty_result(profiles, SelectionMode::raw_lape, cfg.selection);
        return r;
    }
}

inline fs::path selection_path(const PipelineConfig& cfg, const std::string& condition) {
    return cfg.output_dir / "selection" / (condition + ".json");
}

/// Selects every configured condition (or only `only`) and writes results.
inline std::map<std::string, SelectionResult> run_select(const PipelineConfig& cfg, Bundle& bundle,
                                                         const std::optional<std::string>& only = std::nullopt) {
    std::map<std::string, SelectionResult> out;
    for (const auto& cond : cfg.conditions) {
        if (only && cond.name != *only) continue;
        auto agg = load_upstream_aggregate(cond);
        auto result = select_condition(cfg, agg);
        result.condition = cond.name;
        const auto rel = "selection/" + cond.name + ".json";
        std::size_t n = 0;
        for (const auto& s : result.per_language) n += s.size();
        bundle.write_json(rel, selection_to_json(result), "selected units per language for condition " + cond.name, n);
        const auto dist = selection_distributions(result);
        bundle.write_table("selection/" + cond.name + "_units.csv", dist.units,
                           "entropy and activation probability of selected units (" + cond.name + ")");
        bundle.write_table("selection/" + cond.name + "_language_means.csv", dist.languages,
                           "per-language mean entropy and max probability of selected units (" + cond.name + ")");
        out.emplace(cond.name, std::move(result));
    }
    if (only && out.empty()) throw ValidationError("config: unknown condition '" + *only + "'");
    return out;
}

inline std::map<std::string, SelectionResult> load_selections(const PipelineConfig& cfg) {
    std::map<std::string, SelectionResult> out;
    for (const auto& cond : cfg.conditions) {
        const auto path = selection_path(cfg, cond.name);
        if (!fs::exists(path))
            throw UpstreamError("missing selection for condition " + cond.name + " ('" + path.string() +
                                "'); run `select` first");
        try {
            out.emplace(cond.name, read_selection(path));
        } catch (const Error& e) {
            throw UpstreamError(e.what());
        }
    }
    return out;
}

inline void run_overlap(const PipelineConfig& cfg, const std::map<std::string, SelectionResult>& sel, Bundle& bundle) {
    Table matrix;
    matrix.header = {"language"};
    std::map<std::string, std::vector<std::string>> matrix_rows;
    std::vector<std::string> matrix_langs;

    for (const auto& cmp : cfg.comparisons) {
        const auto& a = sel.at(cmp.a);
        const auto& b = sel.at(cmp.b);
        const std::string tag = cmp.a + "_vs_" + cmp.b;

        const auto pooled = jaccard_by_language(a, b);
        Table jt;
        jt.header = {"language", "jaccard", "empty_union"};
        for (const auto& v : pooled) {
            jt.add_row({v.language, format_number(v.jaccard), v.empty_union ? "1" : "0"});
            if (!matrix_rows.contains(v.language)) matrix_langs.push_back(v.language);
            matrix_rows[v.language].push_back(format_number(v.jaccard));
        }
        matrix.header.push_back(tag);
        bundle.write_table("overlap/" + tag + "_jaccard_pooled.csv", jt,
                           "per-language Jaccard pooled across layers, " + tag);

        Table pt;
        pt.header = {"language", "only_" + cmp.a, "only_" + cmp.b, "overlap"};
        for (const auto& lang : a.languages) {
            const auto p = langunits::partition(a, b, lang);
            pt.add_row({lang, std::to_string(p.only_a.size()), std::to_string(p.only_b.size()),
                        std::to_string(p.overlap.size())});
        }
        const auto all = langunits::partition(a, b);
        pt.add_row({"*", std::to_string(all.only_a.size()), std::to_string(all.only_b.size()),
                    std::to_string(all.overlap.size())});
        bundle.write_table("overlap/" + tag + "_partition.csv", pt,
                           "condition partition cardinalities per language, " + tag);

        Table curve_t, cells_t;
        try {
            const auto curve = layerwise_alignment(a, b, cfg.skip_empty_languages);
            curve_t = alignment_table(curve);
            cells_t = alignment_cells_table(curve);
        } catch (const ValidationError& e) {
            warn(tag + ": " + e.what());
            curve_t = alignment_table({});
            cells_t = alignment_cells_table({});
        }
        bundle.write_table("overlap/" + tag + "_alignment.csv", curve_t,
                           "layer-wise alignment (mean and std Jaccard across languages), " + tag);
        bundle.write_table("overlap/" + tag + "_jaccard_per_layer.csv", cells_t,
                           "per-layer per-language Jaccard, " + tag);
    }
    if (!cfg.comparisons.empty()) {
        for (const auto& lang : matrix_langs) {
            std::vector<std::string> row{lang};
            for (const auto& v : matrix_rows[lang]) row.push_back(v);
            if (row.size() == matrix.header.size()) matrix.add_row(std::move(row));
        }
        bundle.write_table("overlap/jaccard_matrix.csv", matrix, "Jaccard matrix, language x condition pair");
    }

    if (!cfg.region_conditions.empty()) {
        std::vector<SelectionResult> inputs;
        for (const auto& n : cfg.region_conditions) inputs.push_back(sel.at(n));
        Table rt;
        rt.header = {"max_degree", "region", "count"};
        for (auto degree : cfg.region_degrees) {
            const auto regions = degree_regions(inputs, degree);
            for (auto& row : region_table(regions).rows) rt.add_row(std::move(row));
        }
        bundle.write_table("overlap/degree_regions.csv", rt, "degree-filtered Euler region sizes across conditions");
    }
}

inline void run_probe(const PipelineConfig& cfg, const std::map<std::string, SelectionResult>& sel, Bundle& bundle) {
    if (!cfg.probe) return;
    const auto& pc = *cfg.probe;
    const auto agg = load_upstream_aggregate(cfg.condition(pc.condition));
    const auto languages = pc.languages.empty() ? agg.manifest.languages : pc.languages;
    TypologyMatrix typ;
    try {
        typ = load_typology(pc.typology, languages);
    } catch (const FormatError& e) {
        throw UpstreamError(e.what());
    }

    std::vector<std::uint32_t> layers = pc.layers;
    if (layers.empty())
        for (std::uint32_t l = 0; l < agg.manifest.num_layers; ++l) layers.push_back(l);

    std::optional<ConditionPartition> parts;
    if (pc.subsets) parts = langunits::partition(sel.at(pc.subsets->a), sel.at(pc.subsets->b));

    Table summary;
    summary.header = {"layer", "subset", "family", "mean_max_r2", "units"};
    nlohmann::json summaries = nlohmann::json::object();
    Table partial;
    partial.header = {"layer", "undefined_pairs", "partial_pairs", "dropped_zero_variance_features"};

    for (auto layer : layers) {
        if (layer >= agg.manifest.num_layers)
            throw ValidationError("probe: layer " + std::to_string(layer) + " out of range");
        std::vector<UnitId> units;
        for (std::uint32_t u = 0; u < agg.manifest.units_per_layer; ++u) units.push_back({layer, u, agg.manifest.kind});
        const auto design = make_design(agg, typ.languages, units, pc.lambda, pc.folds, pc.seed);
        ProbeOptions opt;
        opt.centered = pc.centered;
        opt.unit_block = opt.feature_block = pc.block;
        opt.threads = cfg.threads;
        const auto result = cv_r2(design, typ, opt);

        bundle.write_matrix("probe/r2_layer_" + std::to_string(layer) + ".lapm", result.r2,
                            "cross-validated R^2, units x features, layer " + std::to_string(layer));
        std::size_t undefined = 0;
        for (auto v : result.r2.flat()) undefined += std::isnan(v);
        partial.add_row({std::to_string(layer), std::to_string(undefined), std::to_string(result.partial_pairs()),
                         std::to_string(typ.dropped_zero_variance)});

        std::vector<std::pair<std::string, UnitSet>> subsets;
        const UnitSet baseline(units.begin(), units.end());
        if (parts) {
            subsets.emplace_back("only_" + pc.subsets->a, detail::restrict_to_layer(parts->only_a, layer));
            subsets.emplace_back("only_" + pc.subsets->b, detail::restrict_to_layer(parts->only_b, layer));
            subsets.emplace_back("overlap", detail::restrict_to_layer(parts->overlap, layer));
        }
        subsets.emplace_back("baseline", baseline);
        for (const auto& [name, set] : subsets) {
            if (set.empty()) {
                warn("probe layer " + std::to_string(layer) + ": subset " + name + " is empty");
                continue;
            }
            for (const auto& s : familywise_summary(result, set)) {
                summary.add_row({std::to_string(layer), name, s.family, format_number(s.mean_max_r2),
                                 std::to_string(s.units)});
                summaries[name][std::to_string(layer)][s.family] = s.mean_max_r2;
            }
        }
    }
    bundle.write_table("probe/family_summary.csv", summary,
                       "layer-wise family-wise mean of max cross-validated R^2 per unit subset");
    bundle.write_json("probe/summaries.json", summaries, "family-wise probe summaries keyed by subset and layer",
                      summary.rows.size());
    bundle.write_table("probe/coverage.csv", partial, "probe pairs with undefined or partially defined R^2");
}

inline void run_intervention_stats(const PipelineConfig& cfg, Bundle& bundle) {
    if (cfg.ppl_logs.empty()) return;
    std::vector<PPLRecord> records;
    for (const auto& log : cfg.ppl_logs) {
        try {
            auto part = read_ppl_records(log);
            records.insert(records.end(), part.begin(), part.end());
        } catch (const FormatError& e) {
            throw UpstreamError(e.what());
        } catch (const IoError& e) {
            throw UpstreamError(e.what());
        }
    }
    Table agg_t;
    agg_t.header = {"language", "set", "examples", "mean_ratio", "mean_delta"};
    for (const auto& a : aggregate_ppl(records))
        agg_t.add_row({a.language, a.set_id, std::to_string(a.examples), format_number(a.mean_ratio),
                       format_number(a.mean_delta)});
    bundle.write_table("intervention/ppl_means.csv", agg_t, "mean per-example perplexity ratio and delta per set");
    const auto rows = intervention_report(records, cfg.control_pairs);
    bundle.write_table("intervention/report.csv", intervention_table(rows),
                       "target vs matched random control: ratios, deltas, paired t-tests");
    bundle.write_json("intervention/report.json", intervention_json(rows),
                      "target vs matched random control report (JSON)", rows.size());
    bundle.write_raw("intervention/report.txt", render_intervention_text(rows),
                     "fixed-width rendering of the intervention report", rows.size());
}

inline nlohmann::json neuron_set_json(const SelectionResult& ref, const std::string& set_id, const UnitSet& units) {
    auto arr = nlohmann::json::array();
    for (const auto& u : units) arr.push_back({u.layer, u.index});
    return {{"model_name", ref.model_name}, {"kind", std::string(to_string(ref.kind))}, {"set_id", set_id}, {"units", arr}};
}

/// Per-language target sets (only_a, only_b, overlap) for the harness, each
/// with a matched random control drawn from every unit of the model.
inline void run_neuron_sets(const PipelineConfig& cfg, const std::map<std::string, SelectionResult>& sel,
                            Bundle& bundle) {
    if (!cfg.neuron_sets) return;
    const auto& a = sel.at(cfg.neuron_sets->a);
    const auto& b = sel.at(cfg.neuron_sets->b);
    UnitSet pool;
    for (std::uint32_t l = 0; l < a.num_layers; ++l)
        for (std::uint32_t u = 0; u < a.units_per_layer; ++u) pool.insert(pool.end(), UnitId{l, u, a.kind});

    Table summary;
    summary.header = {"language", "set", "units", "control_units"};
    std::uint64_t stream = 0;
    for (const auto& lang : a.languages) {
        const auto p = langunits::partition(a, b, lang);
        const std::vector<std::pair<std::string, const UnitSet*>> sets{
            {"only_" + cfg.neuron_sets->a, &p.only_a}, {"only_" + cfg.neuron_sets->b, &p.only_b}, {"overlap", &p.overlap}};
        for (const auto& [name, units] : sets) {
            const auto control = sample_control(pool, *units, derive_seed(cfg.seed, stream++), cfg.literal_control_pool);
            const std::string control_id = name + std::string(kControlSuffix);
            bundle.write_json("intervention/sets/" + lang + "/" + name + ".json", neuron_set_json(a, name, *units),
                              "target unit set " + name + " for " + lang, units->size());
            bundle.write_json("intervention/sets/" + lang + "/" + control_id + ".json",
                              neuron_set_json(a, control_id, control),
                              "matched random control for " + name + " (" + lang + ")", control.size());
            summary.add_row({lang, name, std::to_string(units->size()), std::to_string(control.size())});
        }
    }
    bundle.write_table("intervention/sets/summary.csv", summary, "exported intervention unit sets and control sizes");
}

inline void run_perturb(const PipelineConfig& cfg, Bundle& bundle) {
    for (const auto& job : cfg.corpora) {
        Corpus c;
        try {
            c = read_corpus(job.input, job.language);
        } catch (const IoError& e) {
            throw UpstreamError(e.what());
        }
        const auto stem = job.input.stem().string();
        nlohmann::json meta{{"input", job.input.filename().string()}, {"tokenization", kTokenizationPolicy}};
        if (job.shuffle_seed) {
            const auto out = shuffle_words(c, *job.shuffle_seed);
            write_corpus(out, bundle.prepare("perturb/" + stem + ".shuffled.txt"));
            meta["shuffle_seed"] = *job.shuffle_seed;
        }
        if (job.ascii) {
            const auto out = strip_diacritics(c);
            write_corpus(out, bundle.prepare("perturb/" + stem + ".ascii.txt"));
            meta["ascii"] = true;
        }
        bundle.write_json("perturb/" + stem + ".meta.json", meta, "perturbation metadata for " + stem, 1);
    }
}

/// Full pipeline into one deterministic bundle plus manifest.json.
inline Bundle run_report(const PipelineConfig& cfg) {
    validate_paths(cfg);
    Bundle bundle(cfg.output_dir);
    const auto sel = run_select(cfg, bundle);
    run_overlap(cfg, sel, bundle);
    run_probe(cfg, sel, bundle);
    run_neuron_sets(cfg, sel, bundle);
    run_intervention_stats(cfg, bundle);
    run_perturb(cfg, bundle);
    return bundle;
}

} // namespace langunits

// langunits_synth: writes a self-contained synthetic experiment (aggregates
// for three conditions, typology table, perplexity log, corpus and a pipeline
// config) for demos and end-to-end tests.

#include "langunits/synthetic.hpp"
#include "langunits/perturb.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <iostream>

using namespace langunits;

int main(int argc, char** argv) {
    CLI::App app{"langunits_synth: synthetic fixture generator"};
    std::string out;
    synthetic::PipelineSpec spec;
    app.add_option("--out", out, "destination directory")->required();
    app.add_option("--seed", spec.seed, "fixture seed");
    app.add_option("--layers", spec.num_layers, "layers per run");
    app.add_option("--units", spec.units_per_layer, "units per layer");
    app.add_option("--planted", spec.planted_per_layer, "planted units per layer");
    CLI11_PARSE(app, argc, argv);

    try {
        const fs::path root(out);
        const auto fx = synthetic::make_pipeline(spec);
        nlohmann::json conditions = nlohmann::json::array();
        for (const auto& agg : fx.conditions) {
            const auto rel = "runs/" + agg.manifest.condition;
            write_aggregate(agg, root / rel);
            conditions.push_back({{"name", agg.manifest.condition}, {"aggregate", rel}});
        }
        write_text(root / "typology.csv", fx.typology_csv);
        fs::create_directories(root / "ppl");
        write_ppl_records(fx.ppl_records, root / "ppl" / "intervention.jsonl");
        fs::create_directories(root / "corpus");
        write_text(root / "corpus" / "mixed.txt",
                   "El niño comió piñata en la mañana.\n"
                   "Tiếng Việt có nhiều dấu thanh.\n"
                   "Ελληνικά: ἀρχὴ καὶ τέλος.\n"
                   "नमस्ते दुनिया, यह एक वाक्य है।\n"
                   "这是一个没有空格的句子。\n"
                   "Ça va très bien, merci.\n");

        const double fraction =
            static_cast<double>(spec.planted_per_layer * spec.num_layers) /
            static_cast<double>(spec.units_per_layer * spec.num_layers);
        nlohmann::json cfg{
            {"name", "synthetic"},
            {"output_dir", "out"},
            {"seed", spec.seed},
            {"selection", {{"mode", "auto"}, {"raw_entropy_fraction", fraction}}},
            {"conditions", conditions},
            {"comparisons", {{{"a", "native"}, {"b", "romanized"}}, {{"a", "native"}, {"b", "shuffled"}}}},
            {"degree_regions", {{"conditions", {"native", "romanized", "shuffled"}}, {"max_degrees", {1, 3}}}},
            {"probe",
             {{"condition", "native"},
              {"typology", "typology.csv"},
              {"lambda", 1.0},
              {"folds", 5},
              {"seed", spec.seed + 1},
              {"subsets", {{"a", "native"}, {"b", "romanized"}}}}},
            {"neuron_sets", {{"a", "native"}, {"b", "romanized"}}},
            {"intervention", {{"records", {"ppl/intervention.jsonl"}}}},
            {"corpora", {{{"input", "corpus/mixed.txt"}, {"shuffle_seed", spec.seed}, {"ascii", true}}}}};
        write_text(root / "pipeline.json", cfg.dump(2) + "\n");
        std::cout << "wrote synthetic experiment to " << root.string() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

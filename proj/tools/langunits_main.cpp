// langunits: command-line front end for the analysis pipeline.
//
// Exit codes: 0 success, 2 validation failure, 3 upstream-data failure.

#include "langunits/pipeline.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace langunits;

constexpr const char* kToolVersion = "0.3.0";
constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitUpstream = 3;

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open '" + p.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Digest of a file, or of a directory's files in name order.
std::string digest_path(const fs::path& p) {
    if (!fs::is_directory(p)) return sha256_hex(slurp(p));
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string combined;
    for (const auto& f : files) combined += f.filename().string() + ":" + sha256_hex(slurp(f)) + "\n";
    return sha256_hex(combined);
}

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> probe_seed;
    std::optional<unsigned> threads;
    std::optional<std::string> output_dir;
};

struct LoadedConfig {
    PipelineConfig cfg;
    fs::path path;
    std::string text;
};

LoadedConfig load(const std::string& path, const Overrides& o) {
    LoadedConfig lc;
    lc.path = fs::absolute(path);
    lc.cfg = load_config(lc.path);
    lc.text = slurp(lc.path);
    if (o.seed) lc.cfg.seed = *o.seed;
    if (o.threads) lc.cfg.threads = *o.threads;
    if (o.output_dir) lc.cfg.output_dir = fs::absolute(*o.output_dir);
    if (o.probe_seed) {
        if (!lc.cfg.probe) throw ValidationError("--probe-seed given but the config has no probe section");
        lc.cfg.probe->seed = *o.probe_seed;
    }
    return lc;
}

/// Provenance excludes the thread count and wall-clock time so bundles stay
/// byte-identical across runs.
void write_provenance(Bundle& bundle, const LoadedConfig& lc, const std::string& command) {
    const auto base = lc.path.parent_path();
    nlohmann::json inputs = nlohmann::json::object();
    auto add = [&](const fs::path& p) {
        if (fs::exists(p)) inputs[fs::relative(p, base).generic_string()] = digest_path(p);
    };
    for (const auto& c : lc.cfg.conditions) add(c.aggregate);
    if (lc.cfg.probe) add(lc.cfg.probe->typology);
    for (const auto& p : lc.cfg.ppl_logs) add(p);
    for (const auto& j : lc.cfg.corpora) add(j.input);
    nlohmann::json prov{{"tool", "langunits"},
                        {"version", kToolVersion},
                        {"command", command},
                        {"config", lc.path.filename().string()},
                        {"config_sha256", sha256_hex(lc.text)},
                        {"seed", lc.cfg.seed},
                        {"inputs", inputs}};
    if (lc.cfg.probe) prov["probe_seed"] = lc.cfg.probe->seed;
    bundle.write_json("provenance/" + command + ".json", prov, "provenance record for `" + command + "`", 1);
}

void write_manifest(Bundle& bundle) {
    write_text(bundle.root() / "manifest.json", bundle.manifest_json().dump(2) + "\n");
}

void add_common(CLI::App* sub, std::string& config, Overrides& o) {
    sub->add_option("--config", config, "pipeline config file (JSON)")->required();
    sub->add_option("--seed", o.seed, "override the config's top-level seed");
    sub->add_option("--threads", o.threads, "worker threads (results do not depend on this)");
    sub->add_option("--out", o.output_dir, "override the output directory");
}

int run(int argc, char** argv) {
    CLI::App app{"langunits: language-associated unit analytics"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    std::string config;
    Overrides o;
    std::optional<std::string> only_condition;

    auto* select = app.add_subcommand("select", "identify language-associated units for each condition");
    add_common(select, config, o);
    select->add_option("--condition", only_condition, "select only this condition");

    auto* overlap = app.add_subcommand("overlap", "Jaccard, partitions, degree regions and layer alignment");
    add_common(overlap, config, o);

    auto* probe = app.add_subcommand("probe", "cross-validated ridge probing against typology");
    add_common(probe, config, o);
    probe->add_option("--probe-seed", o.probe_seed, "override the probe fold seed");

    auto* intervene = app.add_subcommand("intervene-stats", "perplexity ratios, deltas and paired t-tests");
    add_common(intervene, config, o);

    auto* report = app.add_subcommand("report", "run every configured stage into one report bundle");
    add_common(report, config, o);

    auto* perturb = app.add_subcommand("perturb", "corpus perturbations");
    perturb->require_subcommand(1);
    std::string in_path, out_path;
    std::uint64_t shuffle_seed = 0;
    auto* shuffle = perturb->add_subcommand("shuffle", "permute words within each sentence");
    shuffle->add_option("--seed", shuffle_seed, "shuffle seed")->required();
    shuffle->add_option("--in", in_path, "input corpus, one sentence per line")->required();
    shuffle->add_option("--out", out_path, "output corpus")->required();
    auto* ascii = perturb->add_subcommand("ascii", "strip diacritics (NFD, drop Mn, NFC)");
    ascii->add_option("--in", in_path, "input corpus, one sentence per line")->required();
    ascii->add_option("--out", out_path, "output corpus")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (perturb->parsed()) {
            Corpus c;
            try {
                c = read_corpus(in_path);
            } catch (const IoError& e) {
                throw UpstreamError(e.what());
            }
            nlohmann::json meta{{"input", fs::path(in_path).filename().string()},
                                {"tokenization", kTokenizationPolicy},
                                {"tool_version", kToolVersion}};
            if (shuffle->parsed()) {
                write_corpus(shuffle_words(c, shuffle_seed), out_path);
                meta["operation"] = "shuffle";
                meta["seed"] = shuffle_seed;
            } else {
                write_corpus(strip_diacritics(c), out_path);
                meta["operation"] = "ascii";
            }
            meta["input_sha256"] = sha256_hex(slurp(in_path));
            write_text(out_path + ".meta.json", meta.dump(2) + "\n");
            return kExitOk;
        }

        const auto lc = load(config, o);
        const auto& cfg = lc.cfg;
        Bundle bundle(cfg.output_dir);

        if (select->parsed()) {
            validate_paths(cfg);
            run_select(cfg, bundle, only_condition);
            write_provenance(bundle, lc, "select");
        } else if (overlap->parsed()) {
            const auto sel = load_selections(cfg);
            run_overlap(cfg, sel, bundle);
            write_provenance(bundle, lc, "overlap");
        } else if (probe->parsed()) {
            if (!cfg.probe) throw ValidationError("config has no probe section");
            validate_paths(cfg);
            std::map<std::string, SelectionResult> sel;
            if (cfg.probe->subsets) sel = load_selections(cfg);
            run_probe(cfg, sel, bundle);
            write_provenance(bundle, lc, "probe");
        } else if (intervene->parsed()) {
            if (cfg.ppl_logs.empty()) throw ValidationError("config has no intervention records");
            validate_paths(cfg);
            run_intervention_stats(cfg, bundle);
            write_provenance(bundle, lc, "intervene-stats");
        } else if (report->parsed()) {
            auto full = run_report(cfg);
            write_provenance(full, lc, "report");
            write_manifest(full);
        }
        return kExitOk;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const Error& e) {
        // Format, truncation, IO, degenerate and upstream failures.
        std::cerr << "upstream data error: " << e.what() << '\n';
        return kExitUpstream;
    }
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << '\n';
        return 1;
    }
}

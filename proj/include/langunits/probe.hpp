#pragma once

// Univariate ridge probing of per-language mean activations against
// typological feature vectors, cross-validated over languages.
//
// For every (unit, feature) pair and fold the slope is fitted on the training
// languages in closed form,
//
//     beta = sum(x~ y~) / (sum(x~^2) + lambda),   x~, y~ centered on the train fold
//     y^   = mean_train(y) + beta * (x - mean_train(x)),
//
// and scored on the held-out languages with R^2 = 1 - SS_res / SS_tot, SS_tot
// taken about the test-fold mean. A fold whose test target has zero variance
// is undefined for that pair; the probe score is the mean over defined folds.

#include "langunits/core.hpp"
#include "langunits/matrix.hpp"
#include "langunits/parallel.hpp"
#include "langunits/rng.hpp"
#include "langunits/store.hpp"
#include "langunits/table.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace langunits {

inline const std::vector<std::string>& typology_families() {
    static const std::vector<std::string> families{"fam", "syntax", "phonology", "geo", "inventory"};
    return families;
}

struct TypologyMatrix {
    std::vector<std::string> languages;
    std::vector<std::string> features;
    std::vector<std::string> families;  // aligned with features
    Matrix<double> values;              // [languages x features]
    std::size_t dropped_zero_variance = 0;
};

inline std::string feature_family(const std::string& feature) {
    const auto pos = feature.find('_');
    const auto family = feature.substr(0, pos);
    const auto& known = typology_families();
    if (pos == std::string::npos || std::find(known.begin(), known.end(), family) == known.end())
        throw FormatError("typology: feature '" + feature + "' lacks a known family prefix");
    return family;
}

/// Parses `lang,<family>_<feature>,...` rows, keeps the requested languages
/// (in that order; all rows in file order when empty) and drops columns that
/// are constant across them.
inline TypologyMatrix load_typology(std::istream& in, const std::vector<std::string>& inventory = {}) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("typology: missing header row");
    auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "lang") throw FormatError("typology: header must start with 'lang'");
    const std::vector<std::string> names(header.begin() + 1, header.end());
    std::vector<std::string> families;
    for (const auto& n : names) families.push_back(feature_family(n));

    std::map<std::string, std::vector<double>> rows;
    std::vector<std::string> file_order;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw FormatError("typology line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " cells");
        std::vector<double> v;
        for (std::size_t i = 1; i < cells.size(); ++i)
            v.push_back(parse_double(cells[i], "typology line " + std::to_string(line_no)));
        if (!rows.emplace(cells[0], std::move(v)).second)
            throw FormatError("typology: duplicate language '" + cells[0] + "'");
        file_order.push_back(cells[0]);
    }

    const auto& langs = inventory.empty() ? file_order : inventory;
    if (langs.empty()) throw ValidationError("typology: no languages");
    for (const auto& l : langs)
        if (!rows.contains(l)) throw ValidationError("typology: unknown language code '" + l + "'");

    std::vector<std::size_t> keep;
    for (std::size_t f = 0; f < names.size(); ++f) {
        const double first = rows.at(langs.front())[f];
        bool varies = false;
        for (const auto& l : langs) varies = varies || rows.at(l)[f] != first;
        if (varies) keep.push_back(f);
    }
    if (keep.empty()) throw ValidationError("typology: every feature is constant across the selected languages");

    TypologyMatrix t;
    t.languages = langs;
    t.dropped_zero_variance = names.size() - keep.size();
    t.values = Matrix<double>(langs.size(), keep.size());
    for (std::size_t j = 0; j < keep.size(); ++j) {
        t.features.push_back(names[keep[j]]);
        t.families.push_back(families[keep[j]]);
        for (std::size_t k = 0; k < langs.size(); ++k) t.values(k, j) = rows.at(langs[k])[keep[j]];
    }
    return t;
}

inline TypologyMatrix load_typology(const fs::path& path, const std::vector<std::string>& inventory = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return load_typology(in, inventory);
}

// ---------------------------------------------------------------------------
// Ridge fit

struct RidgeFit {
    double beta = 0;
    double x_mean = 0;
    double y_mean = 0;

    double predict(double x) const { return y_mean + beta * (x - x_mean); }
};

/// Single-predictor ridge fit. With centering off the model is y = beta * x.
/// Returns nullopt when sum(x~^2) + lambda == 0.
inline std::optional<RidgeFit> fit_ridge_univariate(std::span<const double> x, std::span<const double> y,
                                                    double lambda, bool centered = true) {
    if (x.size() != y.size() || x.empty()) throw ValidationError("ridge: x and y must be non-empty and equal length");
    if (lambda < 0) throw ValidationError("ridge: lambda must be >= 0");
    RidgeFit fit;
    const auto n = static_cast<double>(x.size());
    if (centered) {
        double sx = 0, sy = 0;
        for (std::size_t i = 0; i < x.size(); ++i) { sx += x[i]; sy += y[i]; }
        fit.x_mean = sx / n;
        fit.y_mean = sy / n;
    }
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - fit.x_mean;
        sxx += dx * dx;
        sxy += dx * (y[i] - fit.y_mean);
    }
    const double denom = sxx + lambda;
    if (denom == 0) return std::nullopt;
    fit.beta = sxy / denom;
    return fit;
}

// ---------------------------------------------------------------------------
// Cross-validated probing

struct ProbingDesign {
    Matrix<double> mean_activations;  // [languages x units]
    std::vector<UnitId> unit_ids;
    double lambda = 1.0;
    std::size_t folds = 5;
    std::uint64_t seed = 0;

    void validate() const {
        if (mean_activations.cols() != unit_ids.size())
            throw ValidationError("probing design: activation columns do not match unit ids");
        if (folds < 2) throw ValidationError("probing design: need at least 2 folds");
        if (mean_activations.rows() < folds)
            throw ValidationError("probing design: " + std::to_string(mean_activations.rows()) +
                                  " languages is fewer than " + std::to_string(folds) + " folds");
        if (!(lambda >= 0)) throw ValidationError("probing design: lambda must be >= 0");
    }
};

/// Mean activation per (language, unit) = activation_sum / tokens, with
/// language rows ordered as `languages`.
inline ProbingDesign make_design(const ActivationAggregate& agg, const std::vector<std::string>& languages,
                                 std::vector<UnitId> units, double lambda, std::size_t folds, std::uint64_t seed) {
    const auto& m = agg.manifest;
    std::vector<std::size_t> rows;
    for (const auto& l : languages) {
        auto it = std::find(m.languages.begin(), m.languages.end(), l);
        if (it == m.languages.end()) throw ValidationError("probing design: language '" + l + "' not in aggregate");
        rows.push_back(static_cast<std::size_t>(it - m.languages.begin()));
    }
    ProbingDesign d;
    d.mean_activations = Matrix<double>(languages.size(), units.size());
    for (std::size_t j = 0; j < units.size(); ++j) {
        const auto& u = units[j];
        if (u.layer >= m.num_layers || u.index >= m.units_per_layer || u.kind != m.kind)
            throw ValidationError("probing design: unit " + to_string(u) + " not in aggregate");
        for (std::size_t k = 0; k < rows.size(); ++k)
            d.mean_activations(k, j) = agg.layers[u.layer].activation_sum(rows[k], u.index) /
                                       static_cast<double>(m.tokens_per_language[rows[k]]);
    }
    d.unit_ids = std::move(units);
    d.lambda = lambda;
    d.folds = folds;
    d.seed = seed;
    return d;
}

/// Seeded uniform partition of languages into nearly equal folds.
inline std::vector<std::size_t> assign_folds(std::size_t languages, std::size_t folds, std::uint64_t seed) {
    std::vector<std::size_t> order(languages);
    std::iota(order.begin(), order.end(), std::size_t{0});
    StableRng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<std::size_t> fold(languages);
    for (std::size_t i = 0; i < languages; ++i) fold[order[i]] = i % folds;
    return fold;
}

struct ProbeOptions {
    bool centered = true;
    std::size_t unit_block = 64;
    std::size_t feature_block = 64;
    unsigned threads = 1;
};

struct ProbeResult {
    std::vector<UnitId> unit_ids;
    std::vector<std::string> features;
    std::vector<std::string> families;
    Matrix<double> r2;                   // [units x features], NaN when undefined
    Matrix<std::uint32_t> defined_folds;  // folds contributing to each entry
    std::vector<std::size_t> fold_assignment;  // language -> fold
    std::size_t folds = 0;

    bool defined(std::size_t unit, std::size_t feature) const { return !std::isnan(r2(unit, feature)); }
    /// Entries averaged over fewer than all folds.
    std::size_t partial_pairs() const {
        std::size_t n = 0;
        for (auto c : defined_folds.flat()) n += (c > 0 && c < folds);
        return n;
    }
};

inline ProbeResult cv_r2(const ProbingDesign& design, const TypologyMatrix& typ, const ProbeOptions& opt = {}) {
    design.validate();
    const std::size_t L = design.mean_activations.rows();
    if (typ.values.rows() != L)
        throw ValidationError("cv_r2: design has " + std::to_string(L) + " languages, typology has " +
                              std::to_string(typ.values.rows()));
    const std::size_t U = design.unit_ids.size();
    const std::size_t F = typ.features.size();
    const std::size_t K = design.folds;

    ProbeResult res;
    res.unit_ids = design.unit_ids;
    res.features = typ.features;
    res.families = typ.families;
    res.folds = K;
    res.fold_assignment = assign_folds(L, K, design.seed);
    res.r2 = Matrix<double>(U, F, std::numeric_limits<double>::quiet_NaN());
    res.defined_folds = Matrix<std::uint32_t>(U, F, 0);

    struct Fold {
        std::vector<std::size_t> train, test;
    };
    std::vector<Fold> folds(K);
    for (std::size_t k = 0; k < L; ++k) {
        for (std::size_t f = 0; f < K; ++f) {
            if (res.fold_assignment[k] == f) folds[f].test.push_back(k);
            else folds[f].train.push_back(k);
        }
    }

    // Per (fold, feature): train mean and test-fold total sum of squares.
    Matrix<double> y_train_mean(K, F), y_test_ss(K, F);
    for (std::size_t f = 0; f < K; ++f) {
        for (std::size_t j = 0; j < F; ++j) {
            double s = 0;
            for (auto k : folds[f].train) s += typ.values(k, j);
            y_train_mean(f, j) = opt.centered ? s / static_cast<double>(folds[f].train.size()) : 0.0;
            double st = 0;
            for (auto k : folds[f].test) st += typ.values(k, j);
            const double test_mean = st / static_cast<double>(folds[f].test.size());
            double ss = 0;
            for (auto k : folds[f].test) ss += (typ.values(k, j) - test_mean) * (typ.values(k, j) - test_mean);
            y_test_ss(f, j) = ss;
        }
    }

    const std::size_t ub = std::max<std::size_t>(1, opt.unit_block);
    const std::size_t fb = std::max<std::size_t>(1, opt.feature_block);
    const std::size_t unit_blocks = (U + ub - 1) / ub;
    const auto& X = design.mean_activations;
    const auto& Y = typ.values;

    parallel_for(unit_blocks, opt.threads, [&](std::size_t block) {
        const std::size_t u0 = block * ub, u1 = std::min(U, u0 + ub);
        for (std::size_t f0 = 0; f0 < F; f0 += fb) {
            const std::size_t f1 = std::min(F, f0 + fb);
            for (std::size_t u = u0; u < u1; ++u) {
                for (std::size_t j = f0; j < f1; ++j) {
                    double sum = 0;
                    std::uint32_t defined = 0;
                    for (std::size_t f = 0; f < K; ++f) {
                        const auto& tr = folds[f].train;
                        const auto& te = folds[f].test;
                        if (y_test_ss(f, j) == 0) continue;
                        double x_mean = 0;
                        if (opt.centered) {
                            for (auto k : tr) x_mean += X(k, u);
                            x_mean /= static_cast<double>(tr.size());
                        }
                        const double y_mean = y_train_mean(f, j);
                        double sxx = 0, sxy = 0;
                        for (auto k : tr) {
                            const double dx = X(k, u) - x_mean;
                            sxx += dx * dx;
                            sxy += dx * (Y(k, j) - y_mean);
                        }
                        const double denom = sxx + design.lambda;
                        if (denom == 0) continue;
                        const double beta = sxy / denom;
                        double ss_res = 0;
                        for (auto k : te) {
                            const double e = Y(k, j) - (y_mean + beta * (X(k, u) - x_mean));
                            ss_res += e * e;
                        }
                        sum += 1.0 - ss_res / y_test_ss(f, j);
                        ++defined;
                    }
                    res.defined_folds(u, j) = defined;
                    if (defined > 0) res.r2(u, j) = sum / defined;
                }
            }
        }
    });
    return res;
}

// ---------------------------------------------------------------------------
// Family-wise summaries

struct FamilySummary {
    std::string family;
    double mean_max_r2 = 0;
    std::size_t units = 0;  // units with at least one defined score in the family
};

/// Per family: the max defined R^2 over that family's features for each unit
/// of the subset, averaged over units.
inline std::vector<FamilySummary> familywise_summary(const ProbeResult& r, const UnitSet& subset) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < r.unit_ids.size(); ++i)
        if (subset.contains(r.unit_ids[i])) rows.push_back(i);
    if (rows.empty()) throw ValidationError("familywise_summary: subset shares no units with the probe result");

    std::vector<FamilySummary> out;
    for (const auto& family : typology_families()) {
        std::vector<std::size_t> cols;
        for (std::size_t j = 0; j < r.features.size(); ++j)
            if (r.families[j] == family) cols.push_back(j);
        if (cols.empty()) continue;
        FamilySummary s{family, 0, 0};
        long double total = 0;
        for (auto i : rows) {
            double best = -std::numeric_limits<double>::infinity();
            bool any = false;
            for (auto j : cols) {
                if (!r.defined(i, j)) continue;
                best = std::max(best, r.r2(i, j));
                any = true;
            }
            if (!any) continue;
            total += best;
            ++s.units;
        }
        if (s.units == 0) continue;
        s.mean_max_r2 = static_cast<double>(total / s.units);
        out.push_back(s);
    }
    return out;
}

} // namespace langunits

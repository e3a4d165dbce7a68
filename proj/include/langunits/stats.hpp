#pragma once

// Intervention statistics: matched random control sets, perplexity
// ratio/delta aggregation and paired Student-t tests.

#include "langunits/core.hpp"
#include "langunits/rng.hpp"
#include "langunits/table.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace langunits {

// ---------------------------------------------------------------------------
// Regularized incomplete beta

namespace detail {

// Continued fraction for I_x(a, b), modified Lentz. Converges quickly for
// x < (a + 1) / (a + b + 2).
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr int kMaxIterations = 10000;
    constexpr double kEps = 1e-16;
    constexpr double kTiny = 1e-300;

    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw Error("incomplete beta: continued fraction did not converge (a=" + format_number(a) +
                ", b=" + format_number(b) + ", x=" + format_number(x) + ")");
}

// I_x(a, b) given both x and y = 1 - x, so callers can pass a complement that
// was computed without cancellation.
inline double incomplete_beta_xy(double a, double b, double x, double y) {
    if (x <= 0) return 0.0;
    if (y <= 0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log(y);
    if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
    return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, y) / b;
}

} // namespace detail

inline double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0 && b > 0)) throw ValidationError("incomplete beta: a and b must be > 0");
    if (!(x >= 0 && x <= 1)) throw ValidationError("incomplete beta: x must be in [0,1]");
    return detail::incomplete_beta_xy(a, b, x, 1.0 - x);
}

/// Two-sided p-value of Student's t: I_{v/(v+t^2)}(v/2, 1/2).
inline double student_t_two_sided_p(double t, double dof) {
    if (!(dof > 0)) throw ValidationError("student t: dof must be > 0");
    if (std::isnan(t)) throw ValidationError("student t: t is NaN");
    if (std::isinf(t)) return 0.0;
    const double t2 = t * t;
    const double x = dof / (dof + t2);
    const double y = t2 / (dof + t2);
    return std::clamp(detail::incomplete_beta_xy(dof / 2.0, 0.5, x, y), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Paired t-test

struct TTestResult {
    double t_stat = 0;
    double p_value = 1;
    std::uint64_t dof = 0;
    double mean_diff = 0;
    bool degenerate = false;  // zero variance of the differences
};

inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("paired t-test: samples differ in length");
    if (a.size() < 2) throw ValidationError("paired t-test: need at least 2 pairs");
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    double sum = 0;
    for (double v : d) sum += v;
    const double mean = sum / static_cast<double>(n);
    double ss = 0;
    for (double v : d) ss += (v - mean) * (v - mean);

    TTestResult r;
    r.dof = n - 1;
    r.mean_diff = mean;
    const bool constant = std::all_of(d.begin(), d.end(), [&](double v) { return v == d.front(); });
    if (constant || ss == 0) {
        r.degenerate = true;
        if (mean == 0) {
            r.t_stat = 0;
            r.p_value = 1;
        } else {
            r.t_stat = std::copysign(std::numeric_limits<double>::infinity(), mean);
            r.p_value = 0;
        }
        return r;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    r.t_stat = mean / (sd / std::sqrt(static_cast<double>(n)));
    r.p_value = student_t_two_sided_p(r.t_stat, static_cast<double>(r.dof));
    return r;
}

// ---------------------------------------------------------------------------
// Matched random controls

/// Seeded uniform sample, without replacement, of |target| units from
/// pool \ target (or from the whole pool when literal_pool is set).
inline UnitSet sample_control(const UnitSet& pool, const UnitSet& target, std::uint64_t seed,
                              bool literal_pool = false) {
    std::vector<UnitId> candidates;
    candidates.reserve(pool.size());
    for (const auto& u : pool)
        if (literal_pool || !target.contains(u)) candidates.push_back(u);
    const std::size_t m = target.size();
    if (candidates.size() < m)
        throw ValidationError("sample_control: pool offers " + std::to_string(candidates.size()) +
                              " candidates for a target of " + std::to_string(m));
    StableRng rng(seed);
    for (std::size_t i = 0; i < m; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
        std::swap(candidates[i], candidates[j]);
    }
    return UnitSet(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(m));
}

// ---------------------------------------------------------------------------
// Perplexity records

enum class Ablation : std::uint8_t { zero, cross_language_mean };

struct PPLRecord {
    std::uint64_t example_id = 0;
    std::string language;
    double ppl_clean = 1;
    double ppl_patched = 1;
    std::string set_id;
    Ablation ablation = Ablation::zero;

    double ratio() const { return ppl_patched / ppl_clean; }
    double delta() const { return ppl_patched - ppl_clean; }
};

inline void validate_records(std::span<const PPLRecord> records) {
    std::set<std::tuple<std::uint64_t, std::string, std::string>> seen;
    for (const auto& r : records) {
        auto positive = [](double v) { return std::isfinite(v) && v > 0; };
        if (!positive(r.ppl_clean) || !positive(r.ppl_patched))
            throw ValidationError("ppl record " + r.language + "/" + r.set_id + "/" +
                                  std::to_string(r.example_id) + ": perplexities must be finite and > 0");
        if (!seen.emplace(r.example_id, r.language, r.set_id).second)
            throw ValidationError("duplicate ppl record " + r.language + "/" + r.set_id + "/" +
                                  std::to_string(r.example_id));
    }
}

inline PPLRecord record_from_json(const nlohmann::json& j) {
    PPLRecord r;
    try {
        j.at("example_id").get_to(r.example_id);
        j.at("language").get_to(r.language);
        j.at("ppl_clean").get_to(r.ppl_clean);
        j.at("ppl_patched").get_to(r.ppl_patched);
        j.at("set_id").get_to(r.set_id);
        const auto ablation = j.at("ablation").get<std::string>();
        if (ablation == "zero") r.ablation = Ablation::zero;
        else if (ablation == "cross_language_mean") r.ablation = Ablation::cross_language_mean;
        else throw FormatError("unknown ablation '" + ablation + "'");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("ppl record: ") + e.what());
    }
    return r;
}

inline nlohmann::json record_to_json(const PPLRecord& r) {
    return {{"example_id", r.example_id},
            {"language", r.language},
            {"ppl_clean", r.ppl_clean},
            {"ppl_patched", r.ppl_patched},
            {"set_id", r.set_id},
            {"ablation", r.ablation == Ablation::zero ? "zero" : "cross_language_mean"}};
}

inline std::vector<PPLRecord> read_ppl_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<PPLRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("'" + path.string() + "' line " + std::to_string(line_no) + ": " + e.what());
        } catch (const FormatError& e) {
            throw FormatError("'" + path.string() + "' line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    validate_records(out);
    return out;
}

inline void write_ppl_records(std::span<const PPLRecord> records, const std::filesystem::path& path) {
    std::string text;
    for (const auto& r : records) text += record_to_json(r).dump() + "\n";
    write_text(path, text);
}

struct PplAggregate {
    std::string language;
    std::string set_id;
    std::size_t examples = 0;
    double mean_ratio = 0;
    double mean_delta = 0;
};

namespace detail {

// language -> set_id -> example_id -> record
using RecordIndex = std::map<std::string, std::map<std::string, std::map<std::uint64_t, const PPLRecord*>>>;

inline RecordIndex index_records(std::span<const PPLRecord> records) {
    validate_records(records);
    RecordIndex idx;
    for (const auto& r : records) idx[r.language][r.set_id][r.example_id] = &r;
    // Every set of a language must cover the same examples.
    for (const auto& [lang, sets] : idx) {
        const auto& ref = sets.begin()->second;
        for (const auto& [set_id, examples] : sets) {
            for (const auto& [id, rec] : ref)
                if (!examples.contains(id))
                    throw ValidationError("language " + lang + ": set '" + set_id + "' lacks example " +
                                          std::to_string(id) + " present in set '" + sets.begin()->first + "'");
            if (examples.size() != ref.size())
                throw ValidationError("language " + lang + ": set '" + set_id + "' has examples missing from set '" +
                                      sets.begin()->first + "'");
        }
    }
    return idx;
}

} // namespace detail

/// Mean of per-example ratios and deltas per (language, set_id).
inline std::vector<PplAggregate> aggregate_ppl(std::span<const PPLRecord> records) {
    std::vector<PplAggregate> out;
    for (const auto& [lang, sets] : detail::index_records(records)) {
        for (const auto& [set_id, examples] : sets) {
            long double ratio = 0, delta = 0;
            for (const auto& [id, r] : examples) {
                ratio += r->ratio();
                delta += r->delta();
            }
            const auto n = examples.size();
            out.push_back({lang, set_id, n, static_cast<double>(ratio / n), static_cast<double>(delta / n)});
        }
    }
    return out;
}

struct ControlPair {
    std::string target;
    std::string control;
};

inline constexpr std::string_view kControlSuffix = "_random";

struct InterventionRow {
    std::string language;
    std::string target;
    std::string control;
    std::size_t examples = 0;
    double ratio_target = 0, ratio_control = 0;
    double delta_target = 0, delta_control = 0;
    TTestResult ratio_test, delta_test;
};

/// Compares each target set with its matched control per language. Without
/// explicit pairs, a set "<name>_random" is the control for "<name>".
inline std::vector<InterventionRow> intervention_report(std::span<const PPLRecord> records,
                                                        std::vector<ControlPair> pairs = {}) {
    const auto idx = detail::index_records(records);
    if (pairs.empty()) {
        std::set<std::string> ids;
        for (const auto& [lang, sets] : idx)
            for (const auto& [id, _] : sets) ids.insert(id);
        for (const auto& id : ids) {
            if (id.size() > kControlSuffix.size() && id.ends_with(kControlSuffix)) continue;
            const auto control = id + std::string(kControlSuffix);
            if (ids.contains(control)) pairs.push_back({id, control});
        }
    }
    std::vector<InterventionRow> rows;
    for (const auto& [lang, sets] : idx) {
        for (const auto& pair : pairs) {
            auto t = sets.find(pair.target);
            auto c = sets.find(pair.control);
            if (t == sets.end() && c == sets.end()) continue;
            if (t == sets.end() || c == sets.end())
                throw ValidationError("language " + lang + ": set pair " + pair.target + "/" + pair.control +
                                      " is incomplete");
            InterventionRow row;
            row.language = lang;
            row.target = pair.target;
            row.control = pair.control;
            std::vector<double> rt, rc, dt, dc;
            for (const auto& [id, rec] : t->second) {
                const auto* ctrl = c->second.at(id);
                rt.push_back(rec->ratio());
                rc.push_back(ctrl->ratio());
                dt.push_back(rec->delta());
                dc.push_back(ctrl->delta());
            }
            auto mean = [](const std::vector<double>& v) {
                long double s = 0;
                for (double x : v) s += x;
                return static_cast<double>(s / v.size());
            };
            row.examples = rt.size();
            row.ratio_target = mean(rt);
            row.ratio_control = mean(rc);
            row.delta_target = mean(dt);
            row.delta_control = mean(dc);
            row.ratio_test = paired_ttest(rt, rc);
            row.delta_test = paired_ttest(dt, dc);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

inline Table intervention_table(const std::vector<InterventionRow>& rows) {
    Table t;
    t.header = {"language", "set",          "control",     "examples",    "ratio_target", "ratio_control",
                "t_ratio",  "p_ratio",      "delta_target", "delta_control", "t_delta",    "p_delta",
                "degenerate"};
    for (const auto& r : rows)
        t.add_row({r.language, r.target, r.control, std::to_string(r.examples), format_number(r.ratio_target),
                   format_number(r.ratio_control), format_number(r.ratio_test.t_stat),
                   format_number(r.ratio_test.p_value), format_number(r.delta_target),
                   format_number(r.delta_control), format_number(r.delta_test.t_stat),
                   format_number(r.delta_test.p_value),
                   (r.ratio_test.degenerate || r.delta_test.degenerate) ? "1" : "0"});
    return t;
}

inline std::string format_p(double p) {
    if (p >= 0.001) return format_fixed(p, 3);
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, p, std::chars_format::scientific, 1);
    return std::string(buf, ptr);
}

/// Fixed-width text rendering with two-decimal ratios, shaped like the
/// per-language intervention tables.
inline std::string render_intervention_text(const std::vector<InterventionRow>& rows) {
    std::string out = "language  set                  ratio_target  ratio_control  p_ratio   delta_target  "
                      "delta_control  p_delta\n";
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    for (const auto& r : rows) {
        out += pad(r.language, 10) + pad(r.target, 21) + pad(format_fixed(r.ratio_target, 2), 14) +
               pad(format_fixed(r.ratio_control, 2), 15) + pad(format_p(r.ratio_test.p_value), 10) +
               pad(format_fixed(r.delta_target, 1), 14) + pad(format_fixed(r.delta_control, 1), 15) +
               format_p(r.delta_test.p_value) + "\n";
    }
    return out;
}

inline nlohmann::json intervention_json(const std::vector<InterventionRow>& rows) {
    auto arr = nlohmann::json::array();
    for (const auto& r : rows) {
        arr.push_back({{"language", r.language},
                       {"set", r.target},
                       {"control", r.control},
                       {"examples", r.examples},
                       {"ratio_target", r.ratio_target},
                       {"ratio_control", r.ratio_control},
                       {"t_ratio", r.ratio_test.t_stat},
                       {"p_ratio", r.ratio_test.p_value},
                       {"delta_target", r.delta_target},
                       {"delta_control", r.delta_control},
                       {"t_delta", r.delta_test.t_stat},
                       {"p_delta", r.delta_test.p_value},
                       {"dof", r.ratio_test.dof},
                       {"degenerate", r.ratio_test.degenerate || r.delta_test.degenerate}});
    }
    return arr;
}

} // namespace langunits

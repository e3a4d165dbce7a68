#pragma once

// Deterministic corpus perturbations: word-order shuffling and diacritic
// stripping. Corpora are plain UTF-8 text, one sentence per line, aligned by
// line number across conditions.
//
// Words are maximal runs of non-whitespace code points (Unicode White_Space).
// Punctuation is not split off, and unsegmented scripts (Chinese, Japanese,
// Thai) move as whole runs.

#include "langunits/core.hpp"
#include "langunits/rng.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace langunits {

struct Corpus {
    std::string id;
    std::string language;
    std::vector<std::string> sentences;

    friend bool operator==(const Corpus&, const Corpus&) = default;
};

inline constexpr std::string_view kTokenizationPolicy =
    "tokens are maximal non-whitespace runs (Unicode White_Space); punctuation is not split";

/// Decodes UTF-8 into code points, throwing on malformed input.
inline std::vector<UChar32> decode_utf8(std::string_view text) {
    std::vector<UChar32> cps;
    cps.reserve(text.size());
    const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
    const auto length = static_cast<std::int32_t>(text.size());
    std::int32_t i = 0;
    while (i < length) {
        const std::int32_t start = i;
        UChar32 c;
        U8_NEXT(s, i, length, c);
        if (c < 0)
            throw ValidationError("invalid UTF-8 at byte offset " + std::to_string(start));
        cps.push_back(c);
    }
    return cps;
}

inline void append_utf8(std::string& out, UChar32 c) {
    std::uint8_t buf[U8_MAX_LENGTH];
    std::int32_t n = 0;
    UBool error = false;
    U8_APPEND(buf, n, U8_MAX_LENGTH, c, error);
    if (error) throw ValidationError("cannot encode code point " + std::to_string(c));
    out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(n));
}

inline std::vector<std::string> split_words(std::string_view sentence) {
    std::vector<std::string> words;
    std::string cur;
    for (UChar32 c : decode_utf8(sentence)) {
        if (u_isUWhiteSpace(c)) {
            if (!cur.empty()) words.push_back(std::move(cur));
            cur.clear();
        } else {
            append_utf8(cur, c);
        }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
}

/// Permutes the words of one sentence with the stream derived from
/// (seed, sentence_index). Sentences with fewer than two words are returned
/// unchanged; otherwise words are re-joined with single spaces.
inline std::string shuffle_sentence(std::string_view sentence, std::uint64_t seed, std::uint64_t sentence_index) {
    auto words = split_words(sentence);
    if (words.size() < 2) return std::string(sentence);
    StableRng rng(derive_seed(seed, sentence_index));
    rng.shuffle(std::span<std::string>(words));
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

inline Corpus shuffle_words(const Corpus& corpus, std::uint64_t seed) {
    Corpus out{corpus.id + "+shuffled", corpus.language, {}};
    out.sentences.reserve(corpus.sentences.size());
    for (std::size_t i = 0; i < corpus.sentences.size(); ++i)
        out.sentences.push_back(shuffle_sentence(corpus.sentences[i], seed, i));
    return out;
}

/// NFD, drop nonspacing marks (general category Mn), then NFC.
inline std::string strip_diacritics(std::string_view text) {
    decode_utf8(text);  // validates
    UErrorCode status = U_ZERO_ERROR;
    const auto* nfd = icu::Normalizer2::getNFDInstance(status);
    const auto* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error(std::string("ICU normalizer unavailable: ") + u_errorName(status));

    const auto input = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<std::int32_t>(text.size())));
    const auto decomposed = nfd->normalize(input, status);
    if (U_FAILURE(status)) throw Error(std::string("NFD failed: ") + u_errorName(status));

    icu::UnicodeString bare;
    for (std::int32_t i = 0; i < decomposed.length();) {
        const UChar32 c = decomposed.char32At(i);
        if (u_charType(c) != U_NON_SPACING_MARK) bare.append(c);
        i += U16_LENGTH(c);
    }
    const auto composed = nfc->normalize(bare, status);
    if (U_FAILURE(status)) throw Error(std::string("NFC failed: ") + u_errorName(status));
    std::string out;
    composed.toUTF8String(out);
    return out;
}

inline Corpus strip_diacritics(const Corpus& corpus) {
    Corpus out{corpus.id + "+ascii", corpus.language, {}};
    out.sentences.reserve(corpus.sentences.size());
    for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
        try {
            out.sentences.push_back(strip_diacritics(corpus.sentences[i]));
        } catch (const ValidationError& e) {
            throw ValidationError("line " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    return out;
}

inline std::size_t count_nonspacing_marks(std::string_view text) {
    std::size_t n = 0;
    for (UChar32 c : decode_utf8(text))
        if (u_charType(c) == U_NON_SPACING_MARK) ++n;
    return n;
}

inline Corpus read_corpus(const std::filesystem::path& path, std::string language = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    Corpus c{path.filename().string(), std::move(language), {}};
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        c.sentences.push_back(std::move(line));
    }
    if (c.sentences.empty()) throw ValidationError("corpus '" + path.string() + "' is empty");
    return c;
}

inline void write_corpus(const Corpus& c, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    for (const auto& s : c.sentences) out << s << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

} // namespace langunits

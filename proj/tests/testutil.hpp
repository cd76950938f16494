#ifndef DOCDEFEND_TESTS_TESTUTIL_HPP
#define DOCDEFEND_TESTS_TESTUTIL_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "docdefend/common.hpp"
#include "docdefend/corpus.hpp"
#include "docdefend/mixer.hpp"

namespace docdefend::testutil {

// Scratch directory under the build tree, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("docdefend-" + tag + "-" + std::to_string(counter_++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string Path(const std::string& name = "") const {
        return name.empty() ? path_.string() : (path_ / name).string();
    }

private:
    static inline int counter_ = 0;
    std::filesystem::path path_;
};

inline void WriteLines(const std::string& path, const std::vector<std::string>& lines) {
    std::ofstream out(path);
    for (const auto& line : lines) out << line << "\n";
}

inline std::string JsonTextLine(const std::string& text) {
    std::string escaped;
    for (char c : text) {
        if (c == '"' || c == '\\') escaped += '\\';
        if (c == '\n') {
            escaped += "\\n";
            continue;
        }
        escaped += c;
    }
    return "{\"text\": \"" + escaped + "\"}";
}

// ---------------------------------------------------------------------------
// Synthetic corpora. Malicious fixtures share a distinctive vocabulary
// (every one contains the word "hazard"), which both the marker-keyed mock
// policy and the desk-scale training sanity check rely on.

inline std::string SyntheticMaliciousText(uint64_t seed, size_t words = 40) {
    static const std::vector<std::string> kRisky = {
        "hazard",   "bypass",   "smuggle", "sabotage", "intrusion",
        "illicit",  "scheme",   "forged",  "covert",   "contraband"};
    static const std::vector<std::string> kFiller = {
        "the",   "manual", "describes", "steps",   "for",     "section",
        "notes", "detail", "procedure", "handler", "chapter", "review"};
    Rng rng(DeriveSeed(seed, "malicious-text"));
    std::string text = "hazard notice issue " + std::to_string(seed) + " :";
    for (size_t i = 0; i < words; ++i) {
        const auto& pool = (i % 3 == 0) ? kRisky : kFiller;
        text += " " + pool[rng.Below(pool.size())];
    }
    return text;
}

inline std::string SyntheticBenignText(uint64_t seed, size_t words = 40) {
    static const std::vector<std::string> kCalm = {
        "garden", "recipe",  "travel",  "music",  "library",
        "season", "science", "history", "market", "festival"};
    static const std::vector<std::string> kFiller = {
        "the",   "article", "describes", "a",      "popular", "local",
        "guide", "covers",  "community", "events", "weekly",  "summary"};
    Rng rng(DeriveSeed(seed, "benign-text"));
    std::string text = "community note number " + std::to_string(seed) + " :";
    for (size_t i = 0; i < words; ++i) {
        const auto& pool = (i % 3 == 0) ? kCalm : kFiller;
        text += " " + pool[rng.Below(pool.size())];
    }
    return text;
}

inline void WriteMaliciousJsonl(const std::string& path, size_t count, uint64_t seed0 = 0) {
    std::vector<std::string> lines;
    for (size_t i = 0; i < count; ++i) lines.push_back(JsonTextLine(SyntheticMaliciousText(seed0 + i)));
    WriteLines(path, lines);
}

inline void WriteBenignJsonl(const std::string& path, size_t count, uint64_t seed0 = 0) {
    std::vector<std::string> lines;
    for (size_t i = 0; i < count; ++i) lines.push_back(JsonTextLine(SyntheticBenignText(seed0 + i)));
    WriteLines(path, lines);
}

inline Document MakeDoc(const std::string& text, DocSource source) {
    Document doc;
    doc.text = Trim(text);
    doc.source = source;
    doc.label = LabelForSource(source);
    doc.id = MakeDocId(source, doc.text);
    doc.approx_tokens = CountWhitespaceTokens(doc.text);
    return doc;
}

inline std::vector<Document> MakeMaliciousDocs(size_t count, uint64_t seed0 = 0) {
    std::vector<Document> docs;
    for (size_t i = 0; i < count; ++i) {
        docs.push_back(MakeDoc(SyntheticMaliciousText(seed0 + i), DocSource::kAttackGenerated));
    }
    return docs;
}

inline std::vector<Document> MakeBenignDocs(size_t count, uint64_t seed0 = 0) {
    std::vector<Document> docs;
    for (size_t i = 0; i < count; ++i) {
        docs.push_back(MakeDoc(SyntheticBenignText(seed0 + i), DocSource::kBenignValidation));
    }
    return docs;
}

// Instruction-following pool with diverse answers that never trip the
// refusal patterns.
inline std::vector<AffirmativeExample> MakeAffirmativePool(size_t count, uint64_t seed0 = 0) {
    static const std::vector<std::string> kTopics = {
        "morning walks", "herbal tea",   "public libraries", "bicycle commuting",
        "houseplants",   "board games",  "street markets",   "rainy afternoons",
        "mountain trails", "jazz records"};
    static const std::vector<std::string> kLeads = {
        "Here are a few thoughts:",   "Certainly, consider this:",
        "A quick answer follows.",    "The short version:",
        "Some useful points include", "One good way to think about it:"};
    std::vector<AffirmativeExample> pool;
    Rng rng(DeriveSeed(seed0, "affirmative-pool"));
    for (size_t i = 0; i < count; ++i) {
        const std::string& topic = kTopics[i % kTopics.size()];
        AffirmativeExample ex;
        ex.instruction = "Share a brief observation about " + topic + " (note " +
                         std::to_string(seed0 + i) + ").";
        if (i % 4 == 0) ex.input = SyntheticBenignText(seed0 + 1000 + i, 12);
        ex.answer = kLeads[rng.Below(kLeads.size())] + " " + topic + " can be " +
                    (i % 2 == 0 ? "restful" : "rewarding") + " and fits most routines, variant " +
                    std::to_string(seed0 + i) + ".";
        pool.push_back(std::move(ex));
    }
    return pool;
}

}  // namespace docdefend::testutil

#endif  // DOCDEFEND_TESTS_TESTUTIL_HPP

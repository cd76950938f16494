#ifndef DOCDEFEND_REFUSAL_HPP
#define DOCDEFEND_REFUSAL_HPP

#include <optional>
#include <string>
#include <vector>

#include "docdefend/backend.hpp"
#include "docdefend/common.hpp"
#include "docdefend/corpus.hpp"
#include "docdefend/templates.hpp"

namespace docdefend {

enum class MatchMode { kAnywhere, kPrefixOnly };

std::string MatchModeName(MatchMode mode);
MatchMode MatchModeFromName(const std::string& name);

// Ordered pattern list; order defines match priority. `version` fingerprints
// patterns + mode so stored judgments can be traced to the list that made them.
struct PrefixList {
    std::vector<std::string> patterns;
    MatchMode mode = MatchMode::kAnywhere;

    std::string Version() const;
};

PrefixList DefaultPrefixList();

// One pattern per line, UTF-8, order significant. Blank lines are skipped.
PrefixList LoadPrefixList(const std::string& path, MatchMode mode);

struct RefusalJudgment {
    bool is_refusal = false;
    std::optional<std::string> matched_pattern;
    std::string response_excerpt;  // first 64 chars of the judged text
};

// Pure. Leading whitespace of the response is trimmed before matching;
// matching is case-sensitive. matched_pattern is the first list entry that
// matches, regardless of where in the text it occurs.
RefusalJudgment ClassifyRefusal(const std::string& text, const PrefixList& prefixes);

// The (task instruction, malicious document, refusal answer) triple, by id.
struct DefenseExample {
    std::string doc_id;
    TaskKind task = TaskKind::kSummarize;
    std::string template_id;
    std::string refusal_answer;
    int attempts = 1;
};

struct RefusalGenerationResult {
    std::string answer;
    int attempts = 0;
    std::string template_id;
};

struct SamplingOptions {
    SamplingParams params{0.7, 256, std::nullopt};
    int max_attempts = 10;
};

// Samples until the backend produces a response that classifies as refusal.
// Exhaustion carries every candidate for inspection.
class GenerationExhaustedError : public Error {
public:
    GenerationExhaustedError(std::string doc_id, std::vector<std::string> candidates);
    const std::vector<std::string>& candidates() const { return candidates_; }

private:
    std::vector<std::string> candidates_;
};

RefusalGenerationResult GenerateRefusal(const Document& doc, TaskKind task,
                                        GenerationBackend& backend,
                                        const TemplateRegistry& registry,
                                        const PrefixList& prefixes,
                                        const SamplingOptions& options);

struct ExhaustedEntry {
    std::string doc_id;
    TaskKind task = TaskKind::kSummarize;
};

struct DefenseDataset {
    std::vector<DefenseExample> examples;  // sorted by (doc_id, task)
    std::vector<ExhaustedEntry> exhausted;
    std::string prefix_list_version;
};

struct BuildOptions {
    SamplingOptions sampling;
    double max_exhaustion_rate = 0.10;
    int in_flight = 1;  // concurrent generations; results are order-independent
};

// One example per (pool document, requested task). Aborts with a coverage
// error when exhaustions exceed max_exhaustion_rate of the requested pairs.
DefenseDataset BuildDefenseDataset(const Split& pool, const DocumentStore& docs,
                                   const std::vector<TaskKind>& tasks,
                                   GenerationBackend& backend,
                                   const TemplateRegistry& registry,
                                   const PrefixList& prefixes,
                                   const BuildOptions& options);

void SaveDefenseDataset(const DefenseDataset& dataset, const std::string& path);
DefenseDataset LoadDefenseDataset(const std::string& path);

}  // namespace docdefend

#endif  // DOCDEFEND_REFUSAL_HPP

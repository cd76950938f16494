#ifndef DOCDEFEND_EVALUATION_HPP
#define DOCDEFEND_EVALUATION_HPP

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "docdefend/backend.hpp"
#include "docdefend/refusal.hpp"

namespace docdefend {

struct EvalRecord {
    std::string doc_id;
    std::string split;  // split name
    TaskKind task = TaskKind::kSummarize;
    std::string template_id;
    std::string response;
    RefusalJudgment judgment;
    bool degenerate = false;  // empty/whitespace response
    bool failed = false;      // backend gave up after retries
    std::string prefix_list_version;
};

struct EvalOptions {
    SamplingParams params{0.0, 64, std::nullopt};  // greedy by default
    int in_flight = 1;
};

// One record per document, judged with test-phase templates, sorted by
// doc_id. Backend errors mark the record failed instead of aborting.
std::vector<EvalRecord> EvaluateSplit(GenerationBackend& backend, const Split& split,
                                      const DocumentStore& docs, TaskKind task,
                                      const TemplateRegistry& registry,
                                      const PrefixList& prefixes, const EvalOptions& options);

// 100 x (non-refusal count) / total, rounded half-up to one decimal.
// Requires a non-empty, failure-free record set.
double ProcessRate(const std::vector<EvalRecord>& records);

// Exact half-up rounding of 100*processed/total to one decimal, in integer
// arithmetic.
double RatePercent(long long processed, long long total);

struct RateCell {
    int total = 0;      // excludes failed records
    int processed = 0;  // non-refusals (degenerate responses count, flagged below)
    int failed = 0;
    int degenerate = 0;
    double process_rate = 0.0;
    std::string direction;  // lower-better | higher-better
};

RateCell AggregateCell(const std::vector<EvalRecord>& records);

std::string DirectionForSplit(SplitName name);

// Per-(model, task, split) process rates.
struct EvalReport {
    std::string model_id;
    std::string trained_on;  // task name, "mixed", or empty
    size_t defense_count = 0;
    std::map<std::pair<std::string, std::string>, RateCell> cells;  // (task, split)
};

EvalReport ReportFromRecords(const std::vector<EvalRecord>& records, std::string model_id,
                             std::string trained_on, size_t defense_count);

// ---------------------------------------------------------------------------
// Cross-task generalization matrix: the model trained on one task is scored
// on the remaining tasks, pooled into a single rate per (count, train task).

struct MatrixCell {
    RateCell pooled;
    std::map<std::string, RateCell> per_task;
};

struct CrossTaskMatrix {
    std::vector<size_t> counts;
    std::vector<TaskKind> train_tasks;
    std::map<std::pair<size_t, std::string>, MatrixCell> cells;  // (count, train task)
};

using BackendProvider = std::function<GenerationBackend&(TaskKind train_task, size_t count)>;

CrossTaskMatrix CrossTask(const BackendProvider& provider, const Split& split,
                          const DocumentStore& docs, const std::vector<size_t>& counts,
                          const std::vector<TaskKind>& train_tasks,
                          const TemplateRegistry& registry, const PrefixList& prefixes,
                          const EvalOptions& options);

// Pools pre-collected records into one (count, train task) cell.
MatrixCell PoolMatrixCell(const std::vector<EvalRecord>& records);

// ---------------------------------------------------------------------------
// Utility/safety balance over the three test splits.

struct UtilitySafetyResult {
    EvalReport report;
    std::vector<EvalRecord> records;
};

UtilitySafetyResult UtilitySafetyReport(GenerationBackend& backend, const Split& harmful,
                                        const Split& useful, const Split& useful_ood,
                                        const DocumentStore& docs,
                                        const std::vector<TaskKind>& tasks,
                                        const TemplateRegistry& registry,
                                        const PrefixList& prefixes, const EvalOptions& options,
                                        std::string trained_on = "", size_t defense_count = 0);

// ---------------------------------------------------------------------------
// Rendering. The long CSV is the lossless form; parse(render(x)) restores
// every cell. The table CSV mirrors the one-row-per-count layout.

std::string RenderReportLongCsv(const std::vector<EvalReport>& reports);
std::vector<EvalReport> ParseReportLongCsv(const std::string& csv);

std::string RenderReportTableCsv(const std::vector<EvalReport>& reports,
                                 const std::string& split_name,
                                 const std::vector<TaskKind>& tasks);

std::string RenderMatrixCsv(const CrossTaskMatrix& matrix);

// ---------------------------------------------------------------------------
// Response logs (line-delimited EvalRecords) for replay.

void SaveEvalRecords(const std::vector<EvalRecord>& records, const std::string& path);
std::vector<EvalRecord> LoadEvalRecords(const std::string& path);

// Re-judges stored responses under the given prefix list.
std::vector<EvalRecord> Reclassify(std::vector<EvalRecord> records, const PrefixList& prefixes);

}  // namespace docdefend

#endif  // DOCDEFEND_EVALUATION_HPP

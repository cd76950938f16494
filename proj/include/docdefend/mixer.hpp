#ifndef DOCDEFEND_MIXER_HPP
#define DOCDEFEND_MIXER_HPP

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "docdefend/refusal.hpp"
#include "docdefend/templates.hpp"

namespace docdefend {

// Benign instruction-following record; the (instruction, input, answer)
// shape of common instruction-tuning sets.
struct AffirmativeExample {
    std::string instruction;
    std::string input;  // possibly empty
    std::string answer;

    std::string SourceId() const;
};

enum class MixMode { kRefusalOnly, kSingleTask, kMixed };

std::string MixModeName(MixMode mode);
MixMode MixModeFromName(const std::string& name);

// Composition recipe. `seed` drives the final interleaving shuffle;
// `selection_seed` drives which examples are drawn. Keeping the selection
// seed fixed across a schedule is what makes larger-N datasets strict
// supersets of smaller-N ones.
struct MixSpec {
    MixMode mode = MixMode::kSingleTask;
    size_t affirmative_count = 0;           // M
    size_t refusal_count = 0;               // N (total)
    size_t per_task_count = 0;              // B (mixed mode)
    std::vector<TaskKind> tasks;            // k = tasks.size()
    std::optional<TaskKind> single_task;
    uint64_t seed = 0;
    std::optional<uint64_t> selection_seed;  // defaults to seed

    uint64_t SelectionSeed() const { return selection_seed.value_or(seed); }
    void Validate() const;
};

enum class RecordRole { kAffirmative, kRefusal };

std::string RecordRoleName(RecordRole role);
RecordRole RecordRoleFromName(const std::string& name);

struct ComposedRecord {
    RecordRole role = RecordRole::kAffirmative;
    std::string prompt;
    std::string answer;
    std::optional<TaskKind> task;
    std::string source_id;
    // Character range of the document (or benign input) inside the prompt;
    // lets the trainer truncate the document tail without touching the
    // instruction.
    std::optional<RenderSpan> doc_span;
};

struct ComposedDataset {
    std::vector<ComposedRecord> records;
    MixSpec spec;
    std::string checksum;
    std::string benign_pool_checksum;
    std::string defense_pool_checksum;
};

std::string ComputeChecksum(const std::vector<ComposedRecord>& records);

// Realizes the mixing objectives: M affirmative records plus N refusal
// records (drawn per task in mixed mode), interleaved by one seeded shuffle.
// `forbidden_doc_ids` is the union of the test splits; any selected refusal
// record referencing one aborts composition.
ComposedDataset Compose(const MixSpec& spec,
                        const std::vector<AffirmativeExample>& benign,
                        const std::vector<DefenseExample>& defense,
                        const TemplateRegistry& registry,
                        const DocumentStore& docs,
                        const std::set<std::string>& forbidden_doc_ids = {});

// One spec per count; counts must be strictly increasing and positive.
// Entry i gets seed = base.seed + i and selection_seed = base.seed, so the
// refusal selections nest across the schedule.
std::vector<MixSpec> Schedule(const std::vector<size_t>& counts, const MixSpec& base);

inline const std::vector<size_t>& DefaultSchedule() {
    static const std::vector<size_t> counts = {10, 100, 500, 1000, 2000};
    return counts;
}

// B = N_total / |tasks|; indivisible totals are an error, never rounded.
size_t MixedCounts(size_t n_total, const std::vector<TaskKind>& tasks);

// ---------------------------------------------------------------------------
// Files.

// Records file: line-delimited {role, prompt, answer, task, source_id}.
// A sidecar manifest (<path>.manifest.json) carries the spec, seeds, input
// pool checksums and the dataset checksum.
void SaveComposed(const ComposedDataset& dataset, const std::string& path);
ComposedDataset LoadComposed(const std::string& path);

std::vector<AffirmativeExample> LoadAffirmativeExamples(const std::string& path);
void SaveAffirmativeExamples(const std::vector<AffirmativeExample>& examples,
                             const std::string& path);

}  // namespace docdefend

#endif  // DOCDEFEND_MIXER_HPP

#ifndef DOCDEFEND_CORPUS_HPP
#define DOCDEFEND_CORPUS_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace docdefend {

enum class Label { kMalicious, kBenign };

enum class DocSource {
    kAttackGenerated,
    kHumanLabeled,
    kBenignValidation,
    kNewsOod,
};

std::string LabelName(Label label);
Label LabelFromName(const std::string& name);
std::string DocSourceName(DocSource source);
DocSource DocSourceFromName(const std::string& name);

// A malicious source implies a malicious label and vice versa.
Label LabelForSource(DocSource source);

// One text item. Ids are content-addressed: hash of (source tag, trimmed
// text), so re-ingesting the same file is idempotent.
struct Document {
    std::string id;
    std::string text;
    Label label = Label::kBenign;
    DocSource source = DocSource::kBenignValidation;
    size_t approx_tokens = 0;
};

std::string MakeDocId(DocSource source, const std::string& trimmed_text);

enum class SplitName { kTaskHarmful, kTaskUseful, kTaskUsefulOod, kTrainPool };

std::string SplitNameString(SplitName name);
SplitName SplitNameFromString(const std::string& name);

struct Split {
    SplitName name = SplitName::kTrainPool;
    std::vector<std::string> doc_ids;  // ordered
    uint64_t seed = 0;
};

// Id-keyed lookup shared by the later pipeline stages.
using DocumentStore = std::map<std::string, Document>;

DocumentStore IndexById(const std::vector<Document>& docs);

// ---------------------------------------------------------------------------
// Operations.

// Reads line-delimited JSON records ({"text": ...}) into Documents.
// Duplicate texts (exact match after trimming) within one ingest are
// dropped, keeping the first occurrence.
std::vector<Document> IngestDocuments(const std::string& path, DocSource source, Label label);

// Selects exactly target_size malicious documents. When more candidates
// are available than needed, picks by seeded sampling without replacement,
// preserving ingest order among the chosen; exact fit keeps ingest order.
Split BuildTrainPool(const std::vector<Document>& docs, size_t target_size, uint64_t seed);

// Draws n documents for one of the three test splits. `existing` are the
// splits already assigned; any candidate overlap is a disjointness error.
// Output ids are sorted for stable manifests.
Split SampleTestSplit(const std::vector<Document>& docs, SplitName name, size_t n,
                      uint64_t seed, const std::vector<Split>& existing);

struct CorpusStatsResult {
    size_t count = 0;
    double mean_tokens = 0.0;  // rounded half-up to 2 decimals
    size_t min_tokens = 0;
    size_t max_tokens = 0;
};

CorpusStatsResult CorpusStats(const Split& split, const DocumentStore& docs);

// ---------------------------------------------------------------------------
// Files. Manifest: one header line (name/seed/count), then one id per line.

std::string RenderSplitManifest(const Split& split);
Split ParseSplitManifest(const std::string& content);
void SaveSplitManifest(const Split& split, const std::string& path);
Split LoadSplitManifest(const std::string& path);

std::string RenderStats(const CorpusStatsResult& stats);

void SaveDocuments(const std::vector<Document>& docs, const std::string& path);
std::vector<Document> LoadDocuments(const std::string& path);

}  // namespace docdefend

#endif  // DOCDEFEND_CORPUS_HPP

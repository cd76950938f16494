#include "docdefend/corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "docdefend/common.hpp"
#include "docdefend/jsonl.hpp"

namespace docdefend {

std::string LabelName(Label label) {
    return label == Label::kMalicious ? "malicious" : "benign";
}

Label LabelFromName(const std::string& name) {
    if (name == "malicious") return Label::kMalicious;
    if (name == "benign") return Label::kBenign;
    ThrowValidation("unknown label: " + name);
}

std::string DocSourceName(DocSource source) {
    switch (source) {
        case DocSource::kAttackGenerated: return "attack-generated";
        case DocSource::kHumanLabeled: return "human-labeled";
        case DocSource::kBenignValidation: return "benign-validation";
        case DocSource::kNewsOod: return "news-ood";
    }
    return "benign-validation";
}

DocSource DocSourceFromName(const std::string& name) {
    if (name == "attack-generated") return DocSource::kAttackGenerated;
    if (name == "human-labeled") return DocSource::kHumanLabeled;
    if (name == "benign-validation") return DocSource::kBenignValidation;
    if (name == "news-ood") return DocSource::kNewsOod;
    ThrowValidation("unknown document source: " + name);
}

Label LabelForSource(DocSource source) {
    return (source == DocSource::kAttackGenerated || source == DocSource::kHumanLabeled)
               ? Label::kMalicious
               : Label::kBenign;
}

std::string MakeDocId(DocSource source, const std::string& trimmed_text) {
    uint64_t h = Fnv1a64(DocSourceName(source));
    h = Fnv1a64("\x1f", h);
    h = Fnv1a64(trimmed_text, h);
    return "d" + ToHex16(h);
}

std::string SplitNameString(SplitName name) {
    switch (name) {
        case SplitName::kTaskHarmful: return "Task-Harmful";
        case SplitName::kTaskUseful: return "Task-Useful";
        case SplitName::kTaskUsefulOod: return "Task-Useful-OOD";
        case SplitName::kTrainPool: return "train-pool";
    }
    return "train-pool";
}

SplitName SplitNameFromString(const std::string& name) {
    if (name == "Task-Harmful") return SplitName::kTaskHarmful;
    if (name == "Task-Useful") return SplitName::kTaskUseful;
    if (name == "Task-Useful-OOD") return SplitName::kTaskUsefulOod;
    if (name == "train-pool") return SplitName::kTrainPool;
    ThrowValidation("unknown split name: " + name);
}

DocumentStore IndexById(const std::vector<Document>& docs) {
    DocumentStore store;
    for (const auto& doc : docs) store[doc.id] = doc;
    return store;
}

namespace {

Label RequiredLabelFor(SplitName name) {
    return name == SplitName::kTaskHarmful || name == SplitName::kTrainPool
               ? Label::kMalicious
               : Label::kBenign;
}

}  // namespace

std::vector<Document> IngestDocuments(const std::string& path, DocSource source, Label label) {
    if (LabelForSource(source) != label) {
        ThrowValidation("label-violation: source '" + DocSourceName(source) +
                        "' cannot carry label '" + LabelName(label) + "'");
    }
    std::vector<Document> docs;
    std::unordered_set<std::string> seen_texts;
    size_t records = 0;
    ForEachJsonLine(path, [&](size_t line_no, const nlohmann::json& record) {
        ++records;
        if (!record.contains("text") || !record["text"].is_string()) {
            ThrowIo(path + ":" + std::to_string(line_no) + ": malformed record: missing text field");
        }
        std::string text = Trim(record["text"].get<std::string>());
        if (text.empty()) {
            ThrowIo(path + ":" + std::to_string(line_no) + ": malformed record: empty text");
        }
        if (!seen_texts.insert(text).second) return;  // duplicate, keep first
        Document doc;
        doc.id = MakeDocId(source, text);
        doc.text = std::move(text);
        doc.label = label;
        doc.source = source;
        doc.approx_tokens = CountWhitespaceTokens(doc.text);
        docs.push_back(std::move(doc));
    });
    if (records == 0) ThrowIo("empty-input: no records in " + path);
    return docs;
}

Split BuildTrainPool(const std::vector<Document>& docs, size_t target_size, uint64_t seed) {
    for (const auto& doc : docs) {
        if (doc.label != Label::kMalicious) {
            ThrowValidation("label-violation: benign document " + doc.id + " in train pool candidates");
        }
    }
    if (docs.size() < target_size) {
        ThrowValidation("insufficient-data: train pool needs " + std::to_string(target_size) +
                        " malicious documents, have " + std::to_string(docs.size()));
    }
    Split split;
    split.name = SplitName::kTrainPool;
    split.seed = seed;
    if (docs.size() == target_size) {
        for (const auto& doc : docs) split.doc_ids.push_back(doc.id);
        return split;
    }
    Rng rng(DeriveSeed(seed, "train-pool"));
    std::vector<size_t> chosen = SampleIndices(docs.size(), target_size, rng);
    std::sort(chosen.begin(), chosen.end());  // keep ingest order among the chosen
    for (size_t idx : chosen) split.doc_ids.push_back(docs[idx].id);
    return split;
}

Split SampleTestSplit(const std::vector<Document>& docs, SplitName name, size_t n,
                      uint64_t seed, const std::vector<Split>& existing) {
    if (name == SplitName::kTrainPool) {
        ThrowValidation("sample_test_split: train-pool is built by build_train_pool");
    }
    std::set<std::string> taken;
    for (const auto& split : existing) taken.insert(split.doc_ids.begin(), split.doc_ids.end());

    std::vector<std::string> overlap;
    Label required = RequiredLabelFor(name);
    for (const auto& doc : docs) {
        if (doc.label != required) {
            ThrowValidation("label-violation: split " + SplitNameString(name) + " requires " +
                            LabelName(required) + " documents, got " + LabelName(doc.label) +
                            " (" + doc.id + ")");
        }
        if (taken.count(doc.id)) overlap.push_back(doc.id);
    }
    if (!overlap.empty()) {
        std::string ids;
        for (const auto& id : overlap) ids += (ids.empty() ? "" : ", ") + id;
        ThrowValidation("disjointness: candidates already assigned to another split: " + ids);
    }
    if (docs.size() < n) {
        ThrowValidation("insufficient-data: split " + SplitNameString(name) + " needs " +
                        std::to_string(n) + " documents, have " + std::to_string(docs.size()));
    }

    Split split;
    split.name = name;
    split.seed = seed;
    Rng rng(DeriveSeed(seed, SplitNameString(name)));
    std::vector<size_t> chosen = SampleIndices(docs.size(), n, rng);
    for (size_t idx : chosen) split.doc_ids.push_back(docs[idx].id);
    std::sort(split.doc_ids.begin(), split.doc_ids.end());
    return split;
}

CorpusStatsResult CorpusStats(const Split& split, const DocumentStore& docs) {
    if (split.doc_ids.empty()) ThrowValidation("empty-input: split " + SplitNameString(split.name) + " has no documents");
    CorpusStatsResult stats;
    stats.count = split.doc_ids.size();
    double sum = 0.0;
    stats.min_tokens = SIZE_MAX;
    for (const auto& id : split.doc_ids) {
        auto it = docs.find(id);
        if (it == docs.end()) ThrowValidation("unknown document id in split: " + id);
        size_t tokens = it->second.approx_tokens;
        sum += static_cast<double>(tokens);
        stats.min_tokens = std::min(stats.min_tokens, tokens);
        stats.max_tokens = std::max(stats.max_tokens, tokens);
    }
    stats.mean_tokens = RoundHalfUp(sum / static_cast<double>(stats.count), 2);
    return stats;
}

std::string RenderSplitManifest(const Split& split) {
    std::ostringstream out;
    out << "split=" << SplitNameString(split.name) << " seed=" << split.seed
        << " count=" << split.doc_ids.size() << "\n";
    for (const auto& id : split.doc_ids) out << id << "\n";
    return out.str();
}

Split ParseSplitManifest(const std::string& content) {
    std::istringstream in(content);
    std::string header;
    if (!std::getline(in, header)) ThrowIo("empty split manifest");
    Split split;
    size_t declared = 0;
    bool have_name = false, have_seed = false, have_count = false;
    for (const auto& field : SplitWhitespace(header)) {
        auto eq = field.find('=');
        if (eq == std::string::npos) ThrowIo("bad manifest header field: " + field);
        std::string key = field.substr(0, eq), value = field.substr(eq + 1);
        if (key == "split") {
            split.name = SplitNameFromString(value);
            have_name = true;
        } else if (key == "seed") {
            split.seed = std::stoull(value);
            have_seed = true;
        } else if (key == "count") {
            declared = std::stoull(value);
            have_count = true;
        }
    }
    if (!have_name || !have_seed || !have_count) ThrowIo("manifest header must carry split/seed/count");
    std::string line;
    while (std::getline(in, line)) {
        std::string id = Trim(line);
        if (!id.empty()) split.doc_ids.push_back(id);
    }
    if (split.doc_ids.size() != declared) {
        ThrowIo("manifest count mismatch: header says " + std::to_string(declared) + ", found " +
                std::to_string(split.doc_ids.size()));
    }
    return split;
}

void SaveSplitManifest(const Split& split, const std::string& path) {
    WriteFileOrThrow(path, RenderSplitManifest(split));
}

Split LoadSplitManifest(const std::string& path) {
    return ParseSplitManifest(ReadFileOrThrow(path));
}

std::string RenderStats(const CorpusStatsResult& stats) {
    nlohmann::json j;
    j["count"] = stats.count;
    j["mean_tokens"] = FormatFixed(stats.mean_tokens, 2);
    j["min_tokens"] = stats.min_tokens;
    j["max_tokens"] = stats.max_tokens;
    return j.dump(2) + "\n";
}

void SaveDocuments(const std::vector<Document>& docs, const std::string& path) {
    JsonlWriter writer(path);
    for (const auto& doc : docs) {
        nlohmann::json j;
        j["id"] = doc.id;
        j["text"] = doc.text;
        j["label"] = LabelName(doc.label);
        j["source"] = DocSourceName(doc.source);
        j["approx_tokens"] = doc.approx_tokens;
        writer.Write(j);
    }
    writer.Close();
}

std::vector<Document> LoadDocuments(const std::string& path) {
    std::vector<Document> docs;
    ForEachJsonLine(path, [&](size_t line_no, const nlohmann::json& j) {
        for (const char* key : {"id", "text", "label", "source"}) {
            if (!j.contains(key)) {
                ThrowIo(path + ":" + std::to_string(line_no) + ": document record missing " + key);
            }
        }
        Document doc;
        doc.id = j["id"].get<std::string>();
        doc.text = j["text"].get<std::string>();
        doc.label = LabelFromName(j["label"].get<std::string>());
        doc.source = DocSourceFromName(j["source"].get<std::string>());
        if (doc.label != LabelForSource(doc.source)) {
            ThrowIo(path + ":" + std::to_string(line_no) + ": label '" + LabelName(doc.label) +
                    "' contradicts source '" + DocSourceName(doc.source) + "'");
        }
        doc.approx_tokens = j.value("approx_tokens", CountWhitespaceTokens(doc.text));
        docs.push_back(std::move(doc));
    });
    return docs;
}

}  // namespace docdefend

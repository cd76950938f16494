#include "docdefend/mixer.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

#include "docdefend/common.hpp"

#include "docdefend/jsonl.hpp"

namespace docdefend {

std::string AffirmativeExample::SourceId() const {
    uint64_t h = Fnv1a64(instruction);
    h = Fnv1a64("\x1f", h);
    h = Fnv1a64(input, h);
    h = Fnv1a64("\x1f", h);
    h = Fnv1a64(answer, h);
    return "a" + ToHex16(h);
}

std::string MixModeName(MixMode mode) {
    switch (mode) {
        case MixMode::kRefusalOnly: return "refusal-only";
        case MixMode::kSingleTask: return "single-task";
        case MixMode::kMixed: return "mixed";
    }
    return "single-task";
}

MixMode MixModeFromName(const std::string& name) {
    if (name == "refusal-only") return MixMode::kRefusalOnly;
    if (name == "single-task") return MixMode::kSingleTask;
    if (name == "mixed") return MixMode::kMixed;
    ThrowValidation("unknown mix mode: " + name);
}

std::string RecordRoleName(RecordRole role) {
    return role == RecordRole::kAffirmative ? "affirmative" : "refusal";
}

RecordRole RecordRoleFromName(const std::string& name) {
    if (name == "affirmative") return RecordRole::kAffirmative;
    if (name == "refusal") return RecordRole::kRefusal;
    ThrowValidation("unknown record role: " + name);
}

void MixSpec::Validate() const {
    switch (mode) {
        case MixMode::kSingleTask:
            if (!single_task) ThrowValidation("single-task mode requires single_task");
            break;
        case MixMode::kMixed: {
            if (tasks.empty()) ThrowValidation("mixed mode requires a non-empty task list");
            if (per_task_count * tasks.size() != refusal_count) {
                ThrowValidation("spec-inconsistency: B (" + std::to_string(per_task_count) +
                                ") x k (" + std::to_string(tasks.size()) + ") != N (" +
                                std::to_string(refusal_count) + ")");
            }
            break;
        }
        case MixMode::kRefusalOnly:
            if (affirmative_count != 0) {
                ThrowValidation("refusal-only mode requires M = 0, got " +
                                std::to_string(affirmative_count));
            }
            if (!single_task && tasks.empty()) {
                ThrowValidation("refusal-only mode needs single_task or a task list");
            }
            break;
    }
}

std::string ComputeChecksum(const std::vector<ComposedRecord>& records) {
    uint64_t h = Fnv1a64("composed");
    for (const auto& record : records) {
        h = Fnv1a64(RecordRoleName(record.role), h);
        h = Fnv1a64("\x1f", h);
        h = Fnv1a64(record.prompt, h);
        h = Fnv1a64("\x1f", h);
        h = Fnv1a64(record.answer, h);
        h = Fnv1a64("\x1f", h);
        h = Fnv1a64(record.task ? TaskName(*record.task) : "", h);
        h = Fnv1a64("\x1f", h);
        h = Fnv1a64(record.source_id, h);
        h = Fnv1a64("\x1e", h);
    }
    return "ck" + ToHex16(h);
}

namespace {

std::string AffirmativePrompt(const AffirmativeExample& ex) {
    if (ex.input.empty()) return ex.instruction;
    return ex.instruction + "\n\n" + ex.input;
}

// Selection order must not depend on the input file order, only on content.
std::vector<const DefenseExample*> SortedTaskPool(const std::vector<DefenseExample>& defense,
                                                  TaskKind task) {
    std::vector<const DefenseExample*> pool;
    for (const auto& ex : defense) {
        if (ex.task == task) pool.push_back(&ex);
    }
    std::sort(pool.begin(), pool.end(), [](const DefenseExample* a, const DefenseExample* b) {
        if (a->doc_id != b->doc_id) return a->doc_id < b->doc_id;
        return a->template_id < b->template_id;
    });
    return pool;
}

// Prefix of one fixed seeded permutation: the draw for `take` items is a
// prefix of the draw for any larger count under the same seed, which is what
// gives the schedule its nesting property.
std::vector<const DefenseExample*> DrawFromTask(const std::vector<DefenseExample>& defense,
                                                TaskKind task, size_t take, uint64_t selection_seed) {
    auto pool = SortedTaskPool(defense, task);
    if (pool.size() < take) {
        ThrowValidation("insufficient-data: task " + TaskName(task) + " has " +
                        std::to_string(pool.size()) + " defense examples, need " +
                        std::to_string(take));
    }
    Rng rng(DeriveSeed(selection_seed, "defense:" + TaskName(task)));
    std::vector<size_t> chosen = SampleIndices(pool.size(), take, rng);
    std::vector<const DefenseExample*> out;
    out.reserve(take);
    for (size_t idx : chosen) out.push_back(pool[idx]);
    return out;
}

uint64_t BenignPoolHash(const std::vector<AffirmativeExample>& benign) {
    uint64_t h = Fnv1a64("benign-pool");
    for (const auto& ex : benign) h = Fnv1a64(ex.SourceId(), h);
    return h;
}

uint64_t DefensePoolHash(const std::vector<DefenseExample>& defense) {
    uint64_t h = Fnv1a64("defense-pool");
    for (const auto& ex : defense) {
        h = Fnv1a64(ex.doc_id, h);
        h = Fnv1a64(TaskName(ex.task), h);
        h = Fnv1a64(ex.template_id, h);
        h = Fnv1a64(ex.refusal_answer, h);
    }
    return h;
}

}  // namespace

ComposedDataset Compose(const MixSpec& spec,
                        const std::vector<AffirmativeExample>& benign,
                        const std::vector<DefenseExample>& defense,
                        const TemplateRegistry& registry,
                        const DocumentStore& docs,
                        const std::set<std::string>& forbidden_doc_ids) {
    spec.Validate();
    if (benign.size() < spec.affirmative_count) {
        ThrowValidation("insufficient-data: benign pool has " + std::to_string(benign.size()) +
                        " examples, need M = " + std::to_string(spec.affirmative_count));
    }

    // Refusal side: draw per task, then render with the recorded template.
    std::vector<const DefenseExample*> drawn;
    if (spec.mode == MixMode::kMixed) {
        for (TaskKind task : spec.tasks) {
            auto part = DrawFromTask(defense, task, spec.per_task_count, spec.SelectionSeed());
            drawn.insert(drawn.end(), part.begin(), part.end());
        }
    } else if (spec.single_task) {
        drawn = DrawFromTask(defense, *spec.single_task, spec.refusal_count, spec.SelectionSeed());
    } else {  // refusal-only across a task list
        size_t per_task = MixedCounts(spec.refusal_count, spec.tasks);
        for (TaskKind task : spec.tasks) {
            auto part = DrawFromTask(defense, task, per_task, spec.SelectionSeed());
            drawn.insert(drawn.end(), part.begin(), part.end());
        }
    }

    std::vector<ComposedRecord> refusal_records;
    refusal_records.reserve(drawn.size());
    for (const DefenseExample* ex : drawn) {
        if (forbidden_doc_ids.count(ex->doc_id)) {
            ThrowValidation("test-leakage: document " + ex->doc_id +
                            " belongs to a test split and cannot enter a training set");
        }
        auto it = docs.find(ex->doc_id);
        if (it == docs.end()) ThrowValidation("defense example references unknown document: " + ex->doc_id);
        const Document& doc = it->second;
        if (doc.label != Label::kMalicious) {
            ThrowValidation("label-violation: defense example " + ex->doc_id + " is not malicious");
        }
        const PromptTemplate& tmpl = registry.Get(ex->template_id);
        if (tmpl.phase != Phase::kTrain) {
            ThrowValidation("defense example " + ex->doc_id + " uses non-train template " +
                            ex->template_id);
        }
        ComposedRecord record;
        record.role = RecordRole::kRefusal;
        record.prompt = Render(tmpl, doc);
        record.answer = ex->refusal_answer;
        record.task = ex->task;
        record.source_id = ex->doc_id;
        record.doc_span = RenderedDocSpan(tmpl.pattern, doc.text);
        refusal_records.push_back(std::move(record));
    }

    // Affirmative side.
    std::vector<ComposedRecord> affirmative_records;
    affirmative_records.reserve(spec.affirmative_count);
    {
        Rng rng(DeriveSeed(spec.SelectionSeed(), "affirmative"));
        std::vector<size_t> chosen = SampleIndices(benign.size(), spec.affirmative_count, rng);
        for (size_t idx : chosen) {
            const AffirmativeExample& ex = benign[idx];
            if (ex.answer.empty()) ThrowValidation("affirmative example with empty answer: " + ex.SourceId());
            if (ex.instruction.empty() && ex.input.empty()) {
                ThrowValidation("affirmative example with empty instruction and input: " + ex.SourceId());
            }
            ComposedRecord record;
            record.role = RecordRole::kAffirmative;
            record.prompt = AffirmativePrompt(ex);
            record.answer = ex.answer;
            record.source_id = ex.SourceId();
            if (!ex.input.empty()) {
                size_t begin = record.prompt.size() - ex.input.size();
                record.doc_span = RenderSpan{begin, record.prompt.size()};
            }
            affirmative_records.push_back(std::move(record));
        }
    }

    ComposedDataset dataset;
    dataset.spec = spec;
    dataset.records = std::move(affirmative_records);
    dataset.records.insert(dataset.records.end(),
                           std::make_move_iterator(refusal_records.begin()),
                           std::make_move_iterator(refusal_records.end()));
    Rng shuffle_rng(DeriveSeed(spec.seed, "interleave"));
    Shuffle(dataset.records, shuffle_rng);
    dataset.checksum = ComputeChecksum(dataset.records);
    dataset.benign_pool_checksum = "pk" + ToHex16(BenignPoolHash(benign));
    dataset.defense_pool_checksum = "pk" + ToHex16(DefensePoolHash(defense));
    return dataset;
}

std::vector<MixSpec> Schedule(const std::vector<size_t>& counts, const MixSpec& base) {
    if (counts.empty()) ThrowValidation("schedule needs at least one count");
    size_t prev = 0;
    for (size_t count : counts) {
        if (count == 0) ThrowValidation("schedule counts must be positive");
        if (count <= prev) {
            ThrowValidation("schedule counts must be strictly increasing: " +
                            std::to_string(count) + " after " + std::to_string(prev));
        }
        prev = count;
    }
    std::vector<MixSpec> specs;
    specs.reserve(counts.size());
    for (size_t i = 0; i < counts.size(); ++i) {
        MixSpec spec = base;
        spec.refusal_count = counts[i];
        if (spec.mode == MixMode::kMixed) {
            spec.per_task_count = MixedCounts(counts[i], spec.tasks);
        }
        spec.seed = base.seed + i;
        spec.selection_seed = base.seed;
        spec.Validate();
        specs.push_back(std::move(spec));
    }
    return specs;
}

size_t MixedCounts(size_t n_total, const std::vector<TaskKind>& tasks) {
    if (tasks.empty()) ThrowValidation("mixed_counts: task list is empty");
    if (n_total % tasks.size() != 0) {
        ThrowValidation("spec-inconsistency: N_total " + std::to_string(n_total) +
                        " is not divisible by " + std::to_string(tasks.size()) +
                        " tasks; adjust N_total");
    }
    return n_total / tasks.size();
}

namespace {

nlohmann::json SpecToJson(const MixSpec& spec) {
    nlohmann::json j;
    j["mode"] = MixModeName(spec.mode);
    j["affirmative_count"] = spec.affirmative_count;
    j["refusal_count"] = spec.refusal_count;
    j["per_task_count"] = spec.per_task_count;
    nlohmann::json tasks = nlohmann::json::array();
    for (TaskKind task : spec.tasks) tasks.push_back(TaskName(task));
    j["tasks"] = tasks;
    if (spec.single_task) j["single_task"] = TaskName(*spec.single_task);
    j["seed"] = spec.seed;
    j["selection_seed"] = spec.SelectionSeed();
    return j;
}

MixSpec SpecFromJson(const nlohmann::json& j) {
    MixSpec spec;
    spec.mode = MixModeFromName(j.at("mode").get<std::string>());
    spec.affirmative_count = j.at("affirmative_count").get<size_t>();
    spec.refusal_count = j.at("refusal_count").get<size_t>();
    spec.per_task_count = j.value("per_task_count", size_t{0});
    for (const auto& name : j.value("tasks", nlohmann::json::array())) {
        spec.tasks.push_back(TaskFromName(name.get<std::string>()));
    }
    if (j.contains("single_task")) spec.single_task = TaskFromName(j["single_task"].get<std::string>());
    spec.seed = j.at("seed").get<uint64_t>();
    if (j.contains("selection_seed")) spec.selection_seed = j["selection_seed"].get<uint64_t>();
    return spec;
}

}  // namespace

void SaveComposed(const ComposedDataset& dataset, const std::string& path) {
    JsonlWriter writer(path);
    for (const auto& record : dataset.records) {
        nlohmann::json j;
        j["role"] = RecordRoleName(record.role);
        j["prompt"] = record.prompt;
        j["answer"] = record.answer;
        if (record.task) j["task"] = TaskName(*record.task);
        j["source_id"] = record.source_id;
        if (record.doc_span) {
            j["doc_span"] = nlohmann::json::array({record.doc_span->begin, record.doc_span->end});
        }
        writer.Write(j);
    }
    writer.Close();

    nlohmann::json manifest;
    manifest["spec"] = SpecToJson(dataset.spec);
    manifest["dataset_checksum"] = dataset.checksum;
    manifest["benign_pool_checksum"] = dataset.benign_pool_checksum;
    manifest["defense_pool_checksum"] = dataset.defense_pool_checksum;
    manifest["record_count"] = dataset.records.size();
    size_t refusals = 0;
    for (const auto& r : dataset.records) {
        if (r.role == RecordRole::kRefusal) ++refusals;
    }
    manifest["refusal_records"] = refusals;
    manifest["affirmative_records"] = dataset.records.size() - refusals;
    WriteFileOrThrow(path + ".manifest.json", manifest.dump(2) + "\n");
}

ComposedDataset LoadComposed(const std::string& path) {
    ComposedDataset dataset;
    ForEachJsonLine(path, [&](size_t line_no, const nlohmann::json& j) {
        for (const char* key : {"role", "prompt", "answer", "source_id"}) {
            if (!j.contains(key)) {
                ThrowIo(path + ":" + std::to_string(line_no) + ": composed record missing " + key);
            }
        }
        ComposedRecord record;
        record.role = RecordRoleFromName(j["role"].get<std::string>());
        record.prompt = j["prompt"].get<std::string>();
        record.answer = j["answer"].get<std::string>();
        if (j.contains("task")) record.task = TaskFromName(j["task"].get<std::string>());
        record.source_id = j["source_id"].get<std::string>();
        if (j.contains("doc_span") && j["doc_span"].is_array() && j["doc_span"].size() == 2) {
            record.doc_span = RenderSpan{j["doc_span"][0].get<size_t>(), j["doc_span"][1].get<size_t>()};
        }
        dataset.records.push_back(std::move(record));
    });
    dataset.checksum = ComputeChecksum(dataset.records);

    const std::string manifest_path = path + ".manifest.json";
    nlohmann::json manifest = nlohmann::json::parse(ReadFileOrThrow(manifest_path), nullptr, false);
    if (manifest.is_discarded()) ThrowIo("malformed manifest: " + manifest_path);
    dataset.spec = SpecFromJson(manifest.at("spec"));
    dataset.benign_pool_checksum = manifest.value("benign_pool_checksum", "");
    dataset.defense_pool_checksum = manifest.value("defense_pool_checksum", "");
    std::string recorded = manifest.value("dataset_checksum", "");
    if (!recorded.empty() && recorded != dataset.checksum) {
        ThrowIo("dataset checksum mismatch for " + path + ": manifest says " + recorded +
                ", content hashes to " + dataset.checksum);
    }
    return dataset;
}

std::vector<AffirmativeExample> LoadAffirmativeExamples(const std::string& path) {
    std::vector<AffirmativeExample> examples;
    ForEachJsonLine(path, [&](size_t line_no, const nlohmann::json& j) {
        if (!j.contains("instruction") || !j.contains("answer")) {
            ThrowIo(path + ":" + std::to_string(line_no) +
                    ": affirmative record needs instruction and answer");
        }
        AffirmativeExample ex;
        ex.instruction = j["instruction"].get<std::string>();
        ex.input = j.value("input", std::string());
        ex.answer = j["answer"].get<std::string>();
        examples.push_back(std::move(ex));
    });
    if (examples.empty()) ThrowIo("empty-input: no records in " + path);
    return examples;
}

void SaveAffirmativeExamples(const std::vector<AffirmativeExample>& examples,
                             const std::string& path) {
    JsonlWriter writer(path);
    for (const auto& ex : examples) {
        nlohmann::json j;
        j["instruction"] = ex.instruction;
        j["input"] = ex.input;
        j["answer"] = ex.answer;
        writer.Write(j);
    }
    writer.Close();
}

}  // namespace docdefend

#include "docdefend/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "docdefend/jsonl.hpp"

namespace docdefend {

namespace fs = std::filesystem;

namespace {

std::string SplitManifestPath(const ExperimentConfig& config, SplitName name) {
    return config.output_dir + "/splits/" + SplitNameString(name) + ".manifest";
}

std::string DocumentsPath(const ExperimentConfig& config) {
    return config.output_dir + "/corpus/documents.jsonl";
}

std::string DefensePath(const ExperimentConfig& config) {
    return config.output_dir + "/defense.jsonl";
}

void MergeDocuments(std::vector<Document>& into, std::set<std::string>& seen,
                    const std::vector<Document>& docs) {
    for (const auto& doc : docs) {
        if (seen.insert(doc.id).second) into.push_back(doc);
    }
}

std::string SanitizeTag(const std::string& value) {
    std::string out;
    for (char c : value) {
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '-';
    }
    return out;
}

std::string FileChecksum(const std::string& path) {
    return "fk" + ToHex16(Fnv1a64(ReadFileOrThrow(path)));
}

// Each stage leaves a manifest naming the config, seed, and checksummed
// inputs that produced its outputs.
void WriteRunManifest(const ExperimentConfig& config, const std::string& command,
                      const std::vector<std::string>& inputs,
                      const std::vector<std::string>& outputs) {
    nlohmann::json j;
    j["command"] = command;
    j["config_fingerprint"] = config.fingerprint;
    j["seed"] = config.seed;
    nlohmann::json in = nlohmann::json::array();
    for (const auto& path : inputs) {
        in.push_back({{"path", path}, {"checksum", FileChecksum(path)}});
    }
    j["inputs"] = std::move(in);
    j["outputs"] = outputs;
    WriteFileOrThrow(config.output_dir + "/manifests/" + command + ".json", j.dump(2) + "\n");
}

DocumentStore LoadStore(const ExperimentConfig& config) {
    RequireFile(DocumentsPath(config), "documents file (run ingest first)");
    return IndexById(LoadDocuments(DocumentsPath(config)));
}

std::set<std::string> LoadForbiddenIds(const ExperimentConfig& config) {
    std::set<std::string> forbidden;
    for (SplitName name :
         {SplitName::kTaskHarmful, SplitName::kTaskUseful, SplitName::kTaskUsefulOod}) {
        Split split = LoadSplitManifest(SplitManifestPath(config, name));
        forbidden.insert(split.doc_ids.begin(), split.doc_ids.end());
    }
    return forbidden;
}

}  // namespace

IngestOutputs RunIngest(const ExperimentConfig& config) {
    if (config.malicious_train.empty()) {
        ThrowValidation("config: corpus.malicious_train must list at least one input");
    }
    for (const auto& input : config.malicious_train) RequireFile(input.path, "malicious corpus");
    RequireFile(config.harmful_eval.path, "harmful eval corpus");
    RequireFile(config.useful_eval.path, "useful eval corpus");
    RequireFile(config.ood_eval.path, "OOD eval corpus");

    // Malicious training documents: merge the sources, drop id duplicates.
    std::vector<Document> malicious;
    std::set<std::string> seen;
    for (const auto& input : config.malicious_train) {
        MergeDocuments(malicious, seen,
                       IngestDocuments(input.path, input.source, LabelForSource(input.source)));
    }

    std::vector<Document> harmful_candidates = IngestDocuments(
        config.harmful_eval.path, config.harmful_eval.source, LabelForSource(config.harmful_eval.source));
    std::vector<Document> useful_candidates = IngestDocuments(
        config.useful_eval.path, config.useful_eval.source, LabelForSource(config.useful_eval.source));
    std::vector<Document> ood_candidates = IngestDocuments(
        config.ood_eval.path, config.ood_eval.source, LabelForSource(config.ood_eval.source));

    Split harmful = SampleTestSplit(harmful_candidates, SplitName::kTaskHarmful,
                                    config.test_split_size, config.seed, {});
    Split useful = SampleTestSplit(useful_candidates, SplitName::kTaskUseful,
                                   config.test_split_size, config.seed, {harmful});
    Split ood = SampleTestSplit(ood_candidates, SplitName::kTaskUsefulOod, config.test_split_size,
                                config.seed, {harmful, useful});

    // The pool draws from what Task-Harmful did not claim.
    std::set<std::string> harmful_ids(harmful.doc_ids.begin(), harmful.doc_ids.end());
    std::vector<Document> pool_candidates;
    for (const auto& doc : malicious) {
        if (!harmful_ids.count(doc.id)) pool_candidates.push_back(doc);
    }
    Split pool = BuildTrainPool(pool_candidates, config.train_pool_size, config.seed);

    std::vector<Document> all_docs;
    std::set<std::string> all_seen;
    MergeDocuments(all_docs, all_seen, malicious);
    MergeDocuments(all_docs, all_seen, harmful_candidates);
    MergeDocuments(all_docs, all_seen, useful_candidates);
    MergeDocuments(all_docs, all_seen, ood_candidates);

    fs::create_directories(config.output_dir + "/corpus");
    fs::create_directories(config.output_dir + "/splits");

    IngestOutputs outputs;
    outputs.documents_path = DocumentsPath(config);
    SaveDocuments(all_docs, outputs.documents_path);

    DocumentStore store = IndexById(all_docs);
    for (const Split* split : {&pool, &harmful, &useful, &ood}) {
        std::string manifest_path = SplitManifestPath(config, split->name);
        SaveSplitManifest(*split, manifest_path);
        WriteFileOrThrow(config.output_dir + "/splits/" + SplitNameString(split->name) + ".stats.json",
                         RenderStats(CorpusStats(*split, store)));
        outputs.manifest_paths.push_back(manifest_path);
    }

    std::vector<std::string> inputs;
    for (const auto& input : config.malicious_train) inputs.push_back(input.path);
    inputs.push_back(config.harmful_eval.path);
    inputs.push_back(config.useful_eval.path);
    inputs.push_back(config.ood_eval.path);
    std::vector<std::string> written = outputs.manifest_paths;
    written.push_back(outputs.documents_path);
    WriteRunManifest(config, "ingest", inputs, written);
    return outputs;
}

BuildDefenseOutputs RunBuildDefense(const ExperimentConfig& config) {
    DocumentStore store = LoadStore(config);
    Split pool = LoadSplitManifest(SplitManifestPath(config, SplitName::kTrainPool));
    TemplateRegistry registry = config.LoadTemplates();
    PrefixList prefixes = config.LoadPrefixes();
    auto backend = config.MakeBackend();

    BuildOptions options;
    options.sampling = config.refusal_sampling;
    options.max_exhaustion_rate = config.max_exhaustion_rate;
    options.in_flight = config.refusal_in_flight;

    DefenseDataset dataset = BuildDefenseDataset(pool, store, config.defense_tasks, *backend,
                                                 registry, prefixes, options);

    BuildDefenseOutputs outputs;
    outputs.dataset_path = DefensePath(config);
    outputs.example_count = dataset.examples.size();
    outputs.exhausted_count = dataset.exhausted.size();
    SaveDefenseDataset(dataset, outputs.dataset_path);
    if (!dataset.exhausted.empty()) {
        nlohmann::json report = nlohmann::json::array();
        for (const auto& entry : dataset.exhausted) {
            report.push_back({{"doc_id", entry.doc_id}, {"task", TaskName(entry.task)}});
        }
        outputs.exhausted_path = config.output_dir + "/defense_exhausted.json";
        WriteFileOrThrow(outputs.exhausted_path, report.dump(2) + "\n");
    }

    std::vector<std::string> written = {outputs.dataset_path};
    if (!outputs.exhausted_path.empty()) written.push_back(outputs.exhausted_path);
    WriteRunManifest(config, "build-defense",
                     {DocumentsPath(config), SplitManifestPath(config, SplitName::kTrainPool)},
                     written);
    return outputs;
}

ComposeOutputs RunCompose(const ExperimentConfig& config) {
    RequireFile(config.benign_examples_path, "benign examples file");
    RequireFile(DefensePath(config), "defense dataset (run build-defense first)");

    DocumentStore store = LoadStore(config);
    std::vector<AffirmativeExample> benign = LoadAffirmativeExamples(config.benign_examples_path);
    DefenseDataset defense = LoadDefenseDataset(DefensePath(config));
    TemplateRegistry registry = config.LoadTemplates();
    std::set<std::string> forbidden = LoadForbiddenIds(config);

    std::vector<MixSpec> specs = Schedule(config.schedule, config.BaseMixSpec());
    fs::create_directories(config.output_dir + "/compose");

    ComposeOutputs outputs;
    for (const MixSpec& spec : specs) {
        ComposedDataset dataset = Compose(spec, benign, defense.examples, registry, store, forbidden);
        std::string tag = MixModeName(spec.mode);
        if (spec.mode == MixMode::kSingleTask && spec.single_task) {
            tag += "-" + SanitizeTag(TaskName(*spec.single_task));
        }
        std::string path = config.output_dir + "/compose/" + tag + "-n" +
                           std::to_string(spec.refusal_count) + ".jsonl";
        SaveComposed(dataset, path);
        outputs.dataset_paths.push_back(path);
    }

    WriteRunManifest(config, "compose",
                     {config.benign_examples_path, DefensePath(config), DocumentsPath(config)},
                     outputs.dataset_paths);
    return outputs;
}

AdapterArtifact RunTrain(const ExperimentConfig& config, const std::string& dataset_path,
                         const std::string& base_model_override,
                         const std::string& out_dir_override) {
    RequireFile(dataset_path, "composed dataset");
    ComposedDataset dataset = LoadComposed(dataset_path);
    std::string base = base_model_override.empty() ? config.base_model : base_model_override;
    std::string out_dir = out_dir_override;
    if (out_dir.empty()) {
        out_dir = config.output_dir + "/adapters/" + fs::path(dataset_path).stem().string();
    }
    AdapterArtifact artifact = Train(dataset, config.training, base, out_dir);
    WriteRunManifest(config, "train-" + fs::path(dataset_path).stem().string(), {dataset_path},
                     {artifact.path});
    return artifact;
}

namespace {

EvaluateOutputs WriteEvalOutputs(const ExperimentConfig& config, const std::string& tag,
                                 const std::vector<EvalRecord>& records, EvalReport report) {
    fs::create_directories(config.output_dir + "/eval");
    EvaluateOutputs outputs;
    outputs.report = std::move(report);
    outputs.responses_path = config.output_dir + "/eval/" + tag + ".responses.jsonl";
    SaveEvalRecords(records, outputs.responses_path);
    outputs.report_csv_path = config.output_dir + "/eval/" + tag + ".report.csv";
    WriteFileOrThrow(outputs.report_csv_path, RenderReportLongCsv({outputs.report}));

    std::set<std::string> split_names;
    for (const auto& [key, cell] : outputs.report.cells) split_names.insert(key.second);
    for (const auto& split_name : split_names) {
        std::string path = config.output_dir + "/eval/" + tag + "." + SanitizeTag(split_name) + ".csv";
        WriteFileOrThrow(path, RenderReportTableCsv({outputs.report}, split_name, config.eval_tasks));
        outputs.table_csv_paths.push_back(path);
    }
    return outputs;
}

}  // namespace

EvaluateOutputs RunEvaluate(const ExperimentConfig& config, const std::string& model_ref,
                            const std::string& trained_on, size_t defense_count) {
    DocumentStore store = LoadStore(config);
    Split harmful = LoadSplitManifest(SplitManifestPath(config, SplitName::kTaskHarmful));
    Split useful = LoadSplitManifest(SplitManifestPath(config, SplitName::kTaskUseful));
    Split ood = LoadSplitManifest(SplitManifestPath(config, SplitName::kTaskUsefulOod));
    TemplateRegistry registry = config.LoadTemplates();
    PrefixList prefixes = config.LoadPrefixes();
    auto backend = config.MakeBackend(model_ref);

    EvalOptions options;
    options.params = config.eval_params;
    options.in_flight = config.eval_in_flight;

    UtilitySafetyResult result =
        UtilitySafetyReport(*backend, harmful, useful, ood, store, config.eval_tasks, registry,
                            prefixes, options, trained_on, defense_count);
    EvaluateOutputs outputs = WriteEvalOutputs(config, SanitizeTag(backend->Id()), result.records,
                                               std::move(result.report));
    std::vector<std::string> written = outputs.table_csv_paths;
    written.push_back(outputs.responses_path);
    written.push_back(outputs.report_csv_path);
    WriteRunManifest(config, "evaluate-" + SanitizeTag(backend->Id()), {DocumentsPath(config)},
                     written);
    return outputs;
}

EvaluateOutputs RunReplay(const ExperimentConfig& config, const std::string& log_path,
                          const std::string& tag) {
    RequireFile(log_path, "response log");
    PrefixList prefixes = config.LoadPrefixes();
    std::vector<EvalRecord> records = Reclassify(LoadEvalRecords(log_path), prefixes);
    std::string out_tag = tag.empty() ? SanitizeTag(fs::path(log_path).stem().string()) + "-replay" : tag;
    EvalReport report = ReportFromRecords(records, "replay:" + log_path, "", 0);
    EvaluateOutputs outputs = WriteEvalOutputs(config, out_tag, records, std::move(report));
    std::vector<std::string> written = outputs.table_csv_paths;
    written.push_back(outputs.responses_path);
    written.push_back(outputs.report_csv_path);
    WriteRunManifest(config, "replay-" + out_tag, {log_path}, written);
    return outputs;
}

CrossTaskOutputs RunCrossTask(const ExperimentConfig& config, const std::string& adapters_dir) {
    DocumentStore store = LoadStore(config);
    Split harmful = LoadSplitManifest(SplitManifestPath(config, SplitName::kTaskHarmful));
    TemplateRegistry registry = config.LoadTemplates();
    PrefixList prefixes = config.LoadPrefixes();

    EvalOptions options;
    options.params = config.eval_params;
    options.in_flight = config.eval_in_flight;

    std::vector<std::unique_ptr<GenerationBackend>> owned;
    std::map<std::pair<std::string, size_t>, GenerationBackend*> backends;
    auto provider = [&](TaskKind task, size_t count) -> GenerationBackend& {
        auto key = std::make_pair(TaskName(task), count);
        auto it = backends.find(key);
        if (it != backends.end()) return *it->second;
        std::unique_ptr<GenerationBackend> backend;
        if (config.backend_kind == "local" || !adapters_dir.empty()) {
            std::string dir = adapters_dir + "/" + TaskName(task) + "-n" + std::to_string(count);
            if (!fs::is_directory(dir)) {
                ThrowValidation("configuration: missing adapter for (" + TaskName(task) + ", " +
                                std::to_string(count) + "): expected " + dir);
            }
            backend = LocalBackend::FromModelRef(dir);
        } else {
            backend = config.MakeBackend();
        }
        owned.push_back(std::move(backend));
        backends[key] = owned.back().get();
        return *owned.back();
    };

    std::vector<TaskKind> train_tasks = config.eval_tasks;
    CrossTaskOutputs outputs;
    outputs.matrix = CrossTask(provider, harmful, store, config.schedule, train_tasks, registry,
                               prefixes, options);
    fs::create_directories(config.output_dir + "/eval");
    outputs.matrix_csv_path = config.output_dir + "/eval/cross-task.csv";
    WriteFileOrThrow(outputs.matrix_csv_path, RenderMatrixCsv(outputs.matrix));
    WriteRunManifest(config, "cross-task",
                     {DocumentsPath(config), SplitManifestPath(config, SplitName::kTaskHarmful)},
                     {outputs.matrix_csv_path});
    return outputs;
}

std::vector<std::string> RunReport(const ExperimentConfig& config, const std::string& long_csv_path) {
    RequireFile(long_csv_path, "report CSV");
    std::vector<EvalReport> reports = ParseReportLongCsv(ReadFileOrThrow(long_csv_path));
    if (reports.empty()) ThrowValidation("report CSV has no data rows: " + long_csv_path);

    std::set<std::string> split_names;
    for (const auto& report : reports) {
        for (const auto& [key, cell] : report.cells) split_names.insert(key.second);
    }
    fs::create_directories(config.output_dir + "/eval");
    std::string stem = fs::path(long_csv_path).stem().string();
    std::vector<std::string> written;
    for (const auto& split_name : split_names) {
        std::string path = config.output_dir + "/eval/" + SanitizeTag(stem) + "." +
                           SanitizeTag(split_name) + ".table.csv";
        WriteFileOrThrow(path, RenderReportTableCsv(reports, split_name, config.eval_tasks));
        written.push_back(path);
    }
    WriteRunManifest(config, "report-" + SanitizeTag(stem), {long_csv_path}, written);
    return written;
}

}  // namespace docdefend

#include "docdefend/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "docdefend/jsonl.hpp"

namespace docdefend {

std::vector<EvalRecord> EvaluateSplit(GenerationBackend& backend, const Split& split,
                                      const DocumentStore& docs, TaskKind task,
                                      const TemplateRegistry& registry,
                                      const PrefixList& prefixes, const EvalOptions& options) {
    if (split.doc_ids.empty()) {
        ThrowValidation("evaluate_split: split " + SplitNameString(split.name) + " is empty");
    }
    const PromptTemplate tmpl = registry.TemplatesFor(task, Phase::kTest).front();

    std::vector<EvalRecord> records(split.doc_ids.size());
    std::atomic<size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= split.doc_ids.size()) return;
            const std::string& doc_id = split.doc_ids[i];
            EvalRecord& record = records[i];
            record.doc_id = doc_id;
            record.split = SplitNameString(split.name);
            record.task = task;
            record.template_id = tmpl.template_id;
            record.prefix_list_version = prefixes.Version();
            try {
                auto it = docs.find(doc_id);
                if (it == docs.end()) ThrowValidation("split references unknown document: " + doc_id);
                record.response = backend.Generate(Render(tmpl, it->second), options.params);
                record.judgment = ClassifyRefusal(record.response, prefixes);
                record.degenerate = Trim(record.response).empty();
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::kBackend) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                    return;
                }
                record.failed = true;
                record.response.clear();
                record.judgment = RefusalJudgment{};
                record.degenerate = false;
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    int threads = std::max(1, options.in_flight);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::sort(records.begin(), records.end(),
              [](const EvalRecord& a, const EvalRecord& b) { return a.doc_id < b.doc_id; });
    return records;
}

double RatePercent(long long processed, long long total) {
    if (total <= 0) ThrowValidation("rate over empty denominator");
    long long tenths = (2000 * processed + total) / (2 * total);
    return static_cast<double>(tenths) / 10.0;
}

double ProcessRate(const std::vector<EvalRecord>& records) {
    if (records.empty()) ThrowValidation("empty-input: no records to rate");
    long long processed = 0;
    for (const auto& record : records) {
        if (record.failed) ThrowValidation("process_rate: record set contains failed records");
        if (!record.judgment.is_refusal) ++processed;
    }
    return RatePercent(processed, static_cast<long long>(records.size()));
}

std::string DirectionForSplit(SplitName name) {
    switch (name) {
        case SplitName::kTaskHarmful:
        case SplitName::kTrainPool:
            return "lower-better";
        case SplitName::kTaskUseful:
        case SplitName::kTaskUsefulOod:
            return "higher-better";
    }
    return "lower-better";
}

RateCell AggregateCell(const std::vector<EvalRecord>& records) {
    RateCell cell;
    for (const auto& record : records) {
        if (record.failed) {
            ++cell.failed;
            continue;
        }
        ++cell.total;
        if (!record.judgment.is_refusal) ++cell.processed;
        if (record.degenerate) ++cell.degenerate;
    }
    if (cell.total > 0) cell.process_rate = RatePercent(cell.processed, cell.total);
    if (!records.empty()) {
        cell.direction = DirectionForSplit(SplitNameFromString(records.front().split));
    }
    return cell;
}

EvalReport ReportFromRecords(const std::vector<EvalRecord>& records, std::string model_id,
                             std::string trained_on, size_t defense_count) {
    EvalReport report;
    report.model_id = std::move(model_id);
    report.trained_on = std::move(trained_on);
    report.defense_count = defense_count;
    std::map<std::pair<std::string, std::string>, std::vector<EvalRecord>> groups;
    for (const auto& record : records) {
        groups[{TaskName(record.task), record.split}].push_back(record);
    }
    for (const auto& [key, group] : groups) {
        report.cells[key] = AggregateCell(group);
    }
    return report;
}

CrossTaskMatrix CrossTask(const BackendProvider& provider, const Split& split,
                          const DocumentStore& docs, const std::vector<size_t>& counts,
                          const std::vector<TaskKind>& train_tasks,
                          const TemplateRegistry& registry, const PrefixList& prefixes,
                          const EvalOptions& options) {
    CrossTaskMatrix matrix;
    matrix.counts = counts;
    matrix.train_tasks = train_tasks;
    for (size_t count : counts) {
        for (TaskKind train_task : train_tasks) {
            GenerationBackend& backend = provider(train_task, count);
            std::vector<EvalRecord> pooled;
            for (TaskKind eval_task : AllTasks()) {
                if (eval_task == train_task) continue;
                auto records =
                    EvaluateSplit(backend, split, docs, eval_task, registry, prefixes, options);
                pooled.insert(pooled.end(), records.begin(), records.end());
            }
            matrix.cells[{count, TaskName(train_task)}] = PoolMatrixCell(pooled);
        }
    }
    return matrix;
}

MatrixCell PoolMatrixCell(const std::vector<EvalRecord>& records) {
    MatrixCell cell;
    cell.pooled = AggregateCell(records);
    std::map<std::string, std::vector<EvalRecord>> by_task;
    for (const auto& record : records) by_task[TaskName(record.task)].push_back(record);
    for (const auto& [task, group] : by_task) cell.per_task[task] = AggregateCell(group);
    return cell;
}

UtilitySafetyResult UtilitySafetyReport(GenerationBackend& backend, const Split& harmful,
                                        const Split& useful, const Split& useful_ood,
                                        const DocumentStore& docs,
                                        const std::vector<TaskKind>& tasks,
                                        const TemplateRegistry& registry,
                                        const PrefixList& prefixes, const EvalOptions& options,
                                        std::string trained_on, size_t defense_count) {
    if (harmful.name != SplitName::kTaskHarmful || useful.name != SplitName::kTaskUseful ||
        useful_ood.name != SplitName::kTaskUsefulOod) {
        ThrowValidation("utility_safety_report: expected the Task-Harmful / Task-Useful / "
                        "Task-Useful-OOD splits");
    }
    for (const auto& id : harmful.doc_ids) {
        auto it = docs.find(id);
        if (it != docs.end() && it->second.label != Label::kMalicious) {
            ThrowValidation("label-violation: benign document " + id + " in Task-Harmful");
        }
    }
    UtilitySafetyResult result;
    for (const Split* split : {&harmful, &useful, &useful_ood}) {
        for (TaskKind task : tasks) {
            auto records = EvaluateSplit(backend, *split, docs, task, registry, prefixes, options);
            result.records.insert(result.records.end(), records.begin(), records.end());
        }
    }
    result.report = ReportFromRecords(result.records, backend.Id(), std::move(trained_on),
                                      defense_count);
    return result;
}

// ---------------------------------------------------------------------------
// CSV.

namespace {

const char* kLongHeader =
    "model_id,trained_on,defense_count,task,split,total,processed,failed,degenerate,"
    "process_rate,direction";

std::string CsvField(const std::string& value) {
    if (value.find(',') != std::string::npos || value.find('\n') != std::string::npos) {
        ThrowValidation("CSV field may not contain commas or newlines: " + value);
    }
    return value;
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
    std::vector<std::string> fields;
    size_t start = 0;
    for (;;) {
        size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

}  // namespace

std::string RenderReportLongCsv(const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    out << kLongHeader << "\n";
    for (const auto& report : reports) {
        for (const auto& [key, cell] : report.cells) {
            out << CsvField(report.model_id) << ',' << CsvField(report.trained_on) << ','
                << report.defense_count << ',' << key.first << ',' << key.second << ','
                << cell.total << ',' << cell.processed << ',' << cell.failed << ','
                << cell.degenerate << ',' << FormatFixed(cell.process_rate, 1) << ','
                << cell.direction << "\n";
        }
    }
    return out.str();
}

std::vector<EvalReport> ParseReportLongCsv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) ThrowIo("empty report CSV");
    if (Trim(line) != kLongHeader) ThrowIo("unexpected report CSV header: " + line);

    std::vector<EvalReport> reports;
    std::map<std::tuple<std::string, std::string, size_t>, size_t> index;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (Trim(line).empty()) continue;
        auto fields = SplitCsvLine(line);
        if (fields.size() != 11) {
            ThrowIo("report CSV line " + std::to_string(line_no) + ": expected 11 fields, got " +
                    std::to_string(fields.size()));
        }
        std::tuple<std::string, std::string, size_t> key{fields[0], fields[1],
                                                         std::stoull(fields[2])};
        auto it = index.find(key);
        if (it == index.end()) {
            EvalReport report;
            report.model_id = fields[0];
            report.trained_on = fields[1];
            report.defense_count = std::get<2>(key);
            reports.push_back(std::move(report));
            it = index.emplace(key, reports.size() - 1).first;
        }
        RateCell cell;
        cell.total = std::stoi(fields[5]);
        cell.processed = std::stoi(fields[6]);
        cell.failed = std::stoi(fields[7]);
        cell.degenerate = std::stoi(fields[8]);
        cell.process_rate = std::stod(fields[9]);
        cell.direction = fields[10];
        reports[it->second].cells[{fields[3], fields[4]}] = cell;
    }
    return reports;
}

std::string RenderReportTableCsv(const std::vector<EvalReport>& reports,
                                 const std::string& split_name,
                                 const std::vector<TaskKind>& tasks) {
    std::ostringstream out;
    out << "model_id,trained_on,defense_count";
    for (TaskKind task : tasks) out << ',' << TaskName(task);
    out << "\n";
    for (const auto& report : reports) {
        out << CsvField(report.model_id) << ',' << CsvField(report.trained_on) << ','
            << report.defense_count;
        for (TaskKind task : tasks) {
            auto it = report.cells.find({TaskName(task), split_name});
            if (it == report.cells.end()) {
                out << ',';
            } else {
                out << ',' << FormatFixed(it->second.process_rate, 1);
            }
        }
        out << "\n";
    }
    return out.str();
}

std::string RenderMatrixCsv(const CrossTaskMatrix& matrix) {
    // The matrix declares its full grid; a hole means an evaluation is
    // missing, so name every absent cell instead of rendering blanks.
    std::string missing;
    for (size_t count : matrix.counts) {
        for (TaskKind task : matrix.train_tasks) {
            if (!matrix.cells.count({count, TaskName(task)})) {
                missing += (missing.empty() ? "" : ", ") + std::string("(") + TaskName(task) +
                           ", " + std::to_string(count) + ")";
            }
        }
    }
    if (!missing.empty()) ThrowValidation("incomplete matrix, missing cells: " + missing);

    std::ostringstream out;
    out << "count";
    for (TaskKind task : matrix.train_tasks) out << ',' << TaskName(task);
    out << "\n";
    for (size_t count : matrix.counts) {
        out << count;
        for (TaskKind task : matrix.train_tasks) {
            out << ',' << FormatFixed(matrix.cells.at({count, TaskName(task)}).pooled.process_rate, 1);
        }
        out << "\n";
    }
    return out.str();
}

void SaveEvalRecords(const std::vector<EvalRecord>& records, const std::string& path) {
    JsonlWriter writer(path);
    for (const auto& record : records) {
        nlohmann::json j;
        j["doc_id"] = record.doc_id;
        j["split"] = record.split;
        j["task"] = TaskName(record.task);
        j["template_id"] = record.template_id;
        j["response"] = record.response;
        j["is_refusal"] = record.judgment.is_refusal;
        if (record.judgment.matched_pattern) j["matched_pattern"] = *record.judgment.matched_pattern;
        j["degenerate"] = record.degenerate;
        j["failed"] = record.failed;
        j["prefix_list_version"] = record.prefix_list_version;
        writer.Write(j);
    }
    writer.Close();
}

std::vector<EvalRecord> LoadEvalRecords(const std::string& path) {
    std::vector<EvalRecord> records;
    ForEachJsonLine(path, [&](size_t line_no, const nlohmann::json& j) {
        for (const char* key : {"doc_id", "split", "task", "response"}) {
            if (!j.contains(key)) {
                ThrowIo(path + ":" + std::to_string(line_no) + ": eval record missing " + key);
            }
        }
        EvalRecord record;
        record.doc_id = j["doc_id"].get<std::string>();
        record.split = j["split"].get<std::string>();
        record.task = TaskFromName(j["task"].get<std::string>());
        record.template_id = j.value("template_id", std::string());
        record.response = j["response"].get<std::string>();
        record.judgment.is_refusal = j.value("is_refusal", false);
        if (j.contains("matched_pattern")) {
            record.judgment.matched_pattern = j["matched_pattern"].get<std::string>();
        }
        record.degenerate = j.value("degenerate", false);
        record.failed = j.value("failed", false);
        record.prefix_list_version = j.value("prefix_list_version", std::string());
        records.push_back(std::move(record));
    });
    return records;
}

std::vector<EvalRecord> Reclassify(std::vector<EvalRecord> records, const PrefixList& prefixes) {
    const std::string version = prefixes.Version();
    for (auto& record : records) {
        if (record.failed) continue;
        record.judgment = ClassifyRefusal(record.response, prefixes);
        record.degenerate = Trim(record.response).empty();
        record.prefix_list_version = version;
    }
    return records;
}

}  // namespace docdefend

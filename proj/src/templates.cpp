#include "docdefend/templates.hpp"

#include <map>
#include <set>

#include <json.hpp>

#include "docdefend/common.hpp"
#include "docdefend/jsonl.hpp"

namespace docdefend {

std::string TaskName(TaskKind task) {
    switch (task) {
        case TaskKind::kSummarize: return "Summarize";
        case TaskKind::kTranslate: return "Translate";
        case TaskKind::kSentiment: return "Sentiment";
        case TaskKind::kCase: return "Case";
        case TaskKind::kNsp: return "NSP";
    }
    return "Summarize";
}

TaskKind TaskFromName(const std::string& name) {
    for (TaskKind task : AllTasks()) {
        if (TaskName(task) == name) return task;
    }
    ThrowValidation("unknown task: " + name);
}

std::string PhaseName(Phase phase) { return phase == Phase::kTrain ? "train" : "test"; }

Phase PhaseFromName(const std::string& name) {
    if (name == "train") return Phase::kTrain;
    if (name == "test") return Phase::kTest;
    ThrowValidation("unknown phase: " + name);
}

std::string InstructionPositionName(InstructionPosition pos) {
    return pos == InstructionPosition::kBeforeDocument ? "before-document" : "after-document";
}

InstructionPosition InstructionPositionFromName(const std::string& name) {
    if (name == "before-document") return InstructionPosition::kBeforeDocument;
    if (name == "after-document") return InstructionPosition::kAfterDocument;
    ThrowValidation("unknown instruction position: " + name);
}

namespace {

// Exactly one occurrence, or npos-style failure reported by count.
size_t CountPlaceholders(const std::string& pattern) {
    size_t count = 0;
    size_t pos = 0;
    const std::string needle = kArticlePlaceholder;
    while ((pos = pattern.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

void ValidateTemplate(const PromptTemplate& tmpl) {
    if (tmpl.template_id.empty()) ThrowValidation("template_id must be non-empty");
    size_t count = CountPlaceholders(tmpl.pattern);
    if (count != 1) {
        ThrowValidation("invalid-template: pattern of '" + tmpl.template_id + "' contains " +
                        std::to_string(count) + " [Article] placeholders, expected exactly 1");
    }
}

PromptTemplate Make(const char* id, TaskKind task, Phase phase, InstructionPosition pos,
                    const char* pattern) {
    return PromptTemplate{id, task, phase, pattern, pos};
}

}  // namespace

TemplateRegistry::TemplateRegistry(std::vector<PromptTemplate> templates)
    : templates_(std::move(templates)) {
    std::set<std::string> ids;
    std::map<TaskKind, std::set<std::string>> train_patterns, test_patterns;
    for (const auto& tmpl : templates_) {
        ValidateTemplate(tmpl);
        if (!ids.insert(tmpl.template_id).second) {
            ThrowValidation("duplicate template_id: " + tmpl.template_id);
        }
        auto& bucket = tmpl.phase == Phase::kTrain ? train_patterns[tmpl.task] : test_patterns[tmpl.task];
        bucket.insert(tmpl.pattern);
    }
    for (TaskKind task : AllTasks()) {
        for (const auto& pattern : train_patterns[task]) {
            if (test_patterns[task].count(pattern)) {
                ThrowValidation("phase-disjointness violated for task " + TaskName(task) +
                                ": pattern appears in both train and test");
            }
        }
    }
}

TemplateRegistry TemplateRegistry::Default() {
    std::vector<PromptTemplate> t;
    t.push_back(Make("summarize-train-1", TaskKind::kSummarize, Phase::kTrain,
                     InstructionPosition::kBeforeDocument,
                     "Summarize the following document in a few sentences.\n\n[Article]"));
    t.push_back(Make("summarize-test-1", TaskKind::kSummarize, Phase::kTest,
                     InstructionPosition::kAfterDocument,
                     "[Article]\n\nWrite a short summary of the text above."));
    t.push_back(Make("translate-train-1", TaskKind::kTranslate, Phase::kTrain,
                     InstructionPosition::kBeforeDocument,
                     "Translate the following text from English to Chinese.\n\n[Article]"));
    t.push_back(Make("translate-test-1", TaskKind::kTranslate, Phase::kTest,
                     InstructionPosition::kAfterDocument,
                     "[Article]\n\nTranslate the text above into Chinese. The source language is English."));
    t.push_back(Make("sentiment-train-1", TaskKind::kSentiment, Phase::kTrain,
                     InstructionPosition::kBeforeDocument,
                     "Perform sentiment analysis on the following text and answer with positive, negative, or neutral.\n\n[Article]"));
    t.push_back(Make("sentiment-test-1", TaskKind::kSentiment, Phase::kTest,
                     InstructionPosition::kAfterDocument,
                     "[Article]\n\nWhat is the sentiment of the text above?"));
    t.push_back(Make("case-train-1", TaskKind::kCase, Phase::kTrain,
                     InstructionPosition::kBeforeDocument,
                     "Convert the following lower-case text to correct capitalization.\n\n[Article]"));
    t.push_back(Make("case-test-1", TaskKind::kCase, Phase::kTest,
                     InstructionPosition::kAfterDocument,
                     "[Article]\n\nRewrite the text above with proper capitalization."));
    t.push_back(Make("nsp-train-1", TaskKind::kNsp, Phase::kTrain,
                     InstructionPosition::kBeforeDocument,
                     "Read the following text and predict the sentence that comes next.\n\n[Article]"));
    t.push_back(Make("nsp-test-1", TaskKind::kNsp, Phase::kTest,
                     InstructionPosition::kAfterDocument,
                     "[Article]\n\nWhich sentence is most likely to come next?"));
    return TemplateRegistry(std::move(t));
}

TemplateRegistry TemplateRegistry::LoadFile(const std::string& path) {
    std::vector<PromptTemplate> templates;
    ForEachJsonLine(path, [&](size_t line_no, const nlohmann::json& j) {
        for (const char* key : {"template_id", "task", "phase", "pattern", "instruction_position"}) {
            if (!j.contains(key)) {
                ThrowIo(path + ":" + std::to_string(line_no) + ": template record missing " + key);
            }
        }
        PromptTemplate tmpl;
        tmpl.template_id = j["template_id"].get<std::string>();
        tmpl.task = TaskFromName(j["task"].get<std::string>());
        tmpl.phase = PhaseFromName(j["phase"].get<std::string>());
        tmpl.pattern = j["pattern"].get<std::string>();
        tmpl.instruction_position = InstructionPositionFromName(j["instruction_position"].get<std::string>());
        templates.push_back(std::move(tmpl));
    });
    return TemplateRegistry(std::move(templates));
}

std::vector<PromptTemplate> TemplateRegistry::TemplatesFor(TaskKind task, Phase phase) const {
    std::vector<PromptTemplate> out;
    for (const auto& tmpl : templates_) {
        if (tmpl.task == task && tmpl.phase == phase) out.push_back(tmpl);
    }
    if (out.empty()) {
        ThrowValidation("missing-template: no template for (" + TaskName(task) + ", " +
                        PhaseName(phase) + ")");
    }
    return out;
}

const PromptTemplate& TemplateRegistry::Get(const std::string& template_id) const {
    for (const auto& tmpl : templates_) {
        if (tmpl.template_id == template_id) return tmpl;
    }
    ThrowValidation("missing-template: unknown template_id " + template_id);
}

std::string RenderPattern(const std::string& pattern, const std::string& text) {
    size_t count = CountPlaceholders(pattern);
    if (count != 1) {
        ThrowValidation("invalid-template: pattern contains " + std::to_string(count) +
                        " [Article] placeholders, expected exactly 1");
    }
    size_t pos = pattern.find(kArticlePlaceholder);
    std::string out;
    out.reserve(pattern.size() - std::string(kArticlePlaceholder).size() + text.size());
    out.append(pattern, 0, pos);
    out.append(text);
    out.append(pattern, pos + std::string(kArticlePlaceholder).size(), std::string::npos);
    return out;
}

std::string Render(const PromptTemplate& tmpl, const Document& doc) {
    if (Trim(doc.text).empty()) ThrowValidation("render: document text is empty");
    return RenderPattern(tmpl.pattern, doc.text);
}

RenderSpan RenderedDocSpan(const std::string& pattern, const std::string& text) {
    size_t count = CountPlaceholders(pattern);
    if (count != 1) ThrowValidation("invalid-template: expected exactly 1 placeholder");
    size_t pos = pattern.find(kArticlePlaceholder);
    return RenderSpan{pos, pos + text.size()};
}

}  // namespace docdefend

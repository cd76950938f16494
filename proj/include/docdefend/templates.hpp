#ifndef DOCDEFEND_TEMPLATES_HPP
#define DOCDEFEND_TEMPLATES_HPP

#include <array>
#include <string>
#include <vector>

#include "docdefend/corpus.hpp"

namespace docdefend {

// The five NLP tasks. Closed enumeration; everything downstream iterates
// over AllTasks().
enum class TaskKind { kSummarize, kTranslate, kSentiment, kCase, kNsp };

inline const std::array<TaskKind, 5>& AllTasks() {
    static const std::array<TaskKind, 5> tasks = {TaskKind::kSummarize, TaskKind::kTranslate,
                                                  TaskKind::kSentiment, TaskKind::kCase,
                                                  TaskKind::kNsp};
    return tasks;
}

std::string TaskName(TaskKind task);
TaskKind TaskFromName(const std::string& name);

enum class Phase { kTrain, kTest };

std::string PhaseName(Phase phase);
Phase PhaseFromName(const std::string& name);

enum class InstructionPosition { kBeforeDocument, kAfterDocument };

std::string InstructionPositionName(InstructionPosition pos);
InstructionPosition InstructionPositionFromName(const std::string& name);

inline constexpr const char* kArticlePlaceholder = "[Article]";

struct PromptTemplate {
    std::string template_id;
    TaskKind task = TaskKind::kSummarize;
    Phase phase = Phase::kTrain;
    std::string pattern;  // contains [Article] exactly once
    InstructionPosition instruction_position = InstructionPosition::kBeforeDocument;
};

// Immutable after construction. Registration enforces the single-placeholder
// rule, unique ids, and train/test pattern disjointness per task.
class TemplateRegistry {
public:
    static TemplateRegistry Default();

    // Registry file: line-delimited JSON records
    // {template_id, task, phase, pattern, instruction_position}.
    static TemplateRegistry LoadFile(const std::string& path);

    explicit TemplateRegistry(std::vector<PromptTemplate> templates);

    const std::vector<PromptTemplate>& all() const { return templates_; }

    std::vector<PromptTemplate> TemplatesFor(TaskKind task, Phase phase) const;
    const PromptTemplate& Get(const std::string& template_id) const;

private:
    std::vector<PromptTemplate> templates_;
};

// Substitutes doc.text for the [Article] placeholder, single pass. A pattern
// without exactly one placeholder is an invalid-template error.
std::string Render(const PromptTemplate& tmpl, const Document& doc);
std::string RenderPattern(const std::string& pattern, const std::string& text);

// Character range the document occupies inside the rendered prompt.
struct RenderSpan {
    size_t begin = 0;
    size_t end = 0;
};
RenderSpan RenderedDocSpan(const std::string& pattern, const std::string& text);

}  // namespace docdefend

#endif  // DOCDEFEND_TEMPLATES_HPP

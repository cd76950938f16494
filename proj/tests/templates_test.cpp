#include <doctest.h>

#include <map>
#include <set>

#include "docdefend/templates.hpp"
#include "testutil.hpp"

using namespace docdefend;
using testutil::TempDir;

TEST_CASE("default registry covers all five tasks in both phases") {
    auto registry = TemplateRegistry::Default();
    std::map<TaskKind, int> per_task;
    for (const auto& tmpl : registry.all()) {
        ++per_task[tmpl.task];
        size_t first = tmpl.pattern.find(kArticlePlaceholder);
        REQUIRE(first != std::string::npos);
        CHECK(tmpl.pattern.find(kArticlePlaceholder, first + 1) == std::string::npos);
    }
    CHECK(per_task.size() == 5);
    for (TaskKind task : AllTasks()) {
        CHECK(per_task[task] >= 2);
        CHECK_FALSE(registry.TemplatesFor(task, Phase::kTrain).empty());
        CHECK_FALSE(registry.TemplatesFor(task, Phase::kTest).empty());
    }
}

TEST_CASE("translate templates name the English to Chinese direction") {
    auto registry = TemplateRegistry::Default();
    for (Phase phase : {Phase::kTrain, Phase::kTest}) {
        for (const auto& tmpl : registry.TemplatesFor(TaskKind::kTranslate, phase)) {
            CHECK(tmpl.pattern.find("English") != std::string::npos);
            CHECK(tmpl.pattern.find("Chinese") != std::string::npos);
        }
    }
}

TEST_CASE("train and test phases are disjoint per task") {
    auto registry = TemplateRegistry::Default();
    for (TaskKind task : AllTasks()) {
        std::set<std::string> train_patterns, train_ids;
        for (const auto& tmpl : registry.TemplatesFor(task, Phase::kTrain)) {
            train_patterns.insert(tmpl.pattern);
            train_ids.insert(tmpl.template_id);
        }
        for (const auto& tmpl : registry.TemplatesFor(task, Phase::kTest)) {
            CHECK(train_patterns.count(tmpl.pattern) == 0);
            CHECK(train_ids.count(tmpl.template_id) == 0);
        }
    }
}

TEST_CASE("render substitutes the document once") {
    Document doc = testutil::MakeDoc("abc", DocSource::kHumanLabeled);
    PromptTemplate tmpl{"t", TaskKind::kSummarize, Phase::kTrain, "Summarize: [Article]",
                        InstructionPosition::kBeforeDocument};
    CHECK(Render(tmpl, doc) == "Summarize: abc");
}

TEST_CASE("render is single-pass over placeholders inside the document") {
    Document doc = testutil::MakeDoc("before [Article] after", DocSource::kHumanLabeled);
    PromptTemplate tmpl{"t", TaskKind::kSummarize, Phase::kTrain, "X: [Article]",
                        InstructionPosition::kBeforeDocument};
    std::string prompt = Render(tmpl, doc);
    CHECK(prompt == "X: before [Article] after");
}

TEST_CASE("render length identity and containment") {
    auto registry = TemplateRegistry::Default();
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Document doc = testutil::MakeDoc(testutil::SyntheticMaliciousText(seed), DocSource::kAttackGenerated);
        for (const auto& tmpl : registry.all()) {
            std::string prompt = Render(tmpl, doc);
            CHECK(prompt.size() ==
                  tmpl.pattern.size() - std::string(kArticlePlaceholder).size() + doc.text.size());
            CHECK(prompt.find(doc.text) != std::string::npos);
        }
    }
}

TEST_CASE("rendering distinct documents yields distinct prompts") {
    auto registry = TemplateRegistry::Default();
    const PromptTemplate& tmpl = registry.all().front();
    std::set<std::string> prompts;
    for (uint64_t seed = 0; seed < 50; ++seed) {
        prompts.insert(Render(tmpl, testutil::MakeDoc(testutil::SyntheticMaliciousText(seed),
                                                      DocSource::kAttackGenerated)));
    }
    CHECK(prompts.size() == 50);
}

TEST_CASE("invalid patterns are rejected") {
    CHECK_THROWS_WITH_AS(RenderPattern("no placeholder here", "x"),
                         doctest::Contains("invalid-template"), Error);
    CHECK_THROWS_WITH_AS(RenderPattern("[Article] and [Article]", "x"),
                         doctest::Contains("invalid-template"), Error);
    CHECK_THROWS_AS(
        TemplateRegistry({PromptTemplate{"bad", TaskKind::kCase, Phase::kTrain, "no slot",
                                         InstructionPosition::kBeforeDocument}}),
        Error);
}

TEST_CASE("registration rejects cross-phase pattern reuse") {
    std::vector<PromptTemplate> templates = {
        {"a", TaskKind::kCase, Phase::kTrain, "Fix case: [Article]",
         InstructionPosition::kBeforeDocument},
        {"b", TaskKind::kCase, Phase::kTest, "Fix case: [Article]",
         InstructionPosition::kBeforeDocument},
    };
    CHECK_THROWS_WITH_AS(TemplateRegistry{templates}, doctest::Contains("phase-disjointness"), Error);
}

TEST_CASE("registry loads from a file and validates") {
    TempDir dir("templates");
    testutil::WriteLines(dir.Path("registry.jsonl"), {
        R"({"template_id":"sum-tr","task":"Summarize","phase":"train","pattern":"Summarize this: [Article]","instruction_position":"before-document"})",
        R"({"template_id":"sum-te","task":"Summarize","phase":"test","pattern":"[Article] Give a summary.","instruction_position":"after-document"})",
    });
    auto registry = TemplateRegistry::LoadFile(dir.Path("registry.jsonl"));
    CHECK(registry.all().size() == 2);
    CHECK(registry.Get("sum-tr").phase == Phase::kTrain);
    CHECK_THROWS_WITH_AS(registry.Get("nope"), doctest::Contains("missing-template"), Error);
    CHECK_THROWS_WITH_AS(registry.TemplatesFor(TaskKind::kCase, Phase::kTrain),
                         doctest::Contains("missing-template"), Error);
}

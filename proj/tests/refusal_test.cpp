#include <doctest.h>

#include <algorithm>

#include "docdefend/refusal.hpp"
#include "testutil.hpp"

using namespace docdefend;
using testutil::TempDir;

TEST_CASE("classify hits a direct refusal") {
    auto judgment = ClassifyRefusal("I cannot assist with that request.", DefaultPrefixList());
    CHECK(judgment.is_refusal);
    REQUIRE(judgment.matched_pattern.has_value());
    CHECK(*judgment.matched_pattern == "I cannot");
}

TEST_CASE("classify passes a compliant answer") {
    auto judgment = ClassifyRefusal("Here is the summary: the document describes a garden.",
                                    DefaultPrefixList());
    CHECK_FALSE(judgment.is_refusal);
    CHECK_FALSE(judgment.matched_pattern.has_value());
}

TEST_CASE("empty responses are not refusals") {
    auto judgment = ClassifyRefusal("", DefaultPrefixList());
    CHECK_FALSE(judgment.is_refusal);
    CHECK(judgment.response_excerpt.empty());
}

TEST_CASE("leading whitespace is trimmed before matching") {
    PrefixList prefixes = DefaultPrefixList();
    prefixes.mode = MatchMode::kPrefixOnly;
    CHECK(ClassifyRefusal("   I'm sorry, no.", prefixes).is_refusal);
    CHECK_FALSE(ClassifyRefusal("Well, I'm sorry, no.", prefixes).is_refusal);
}

TEST_CASE("anywhere mode matches mid-response, prefix-only does not") {
    std::string text = "The text asks for harm. I must decline to continue.";
    PrefixList anywhere = DefaultPrefixList();
    CHECK(ClassifyRefusal(text, anywhere).is_refusal);
    PrefixList prefix_only = DefaultPrefixList();
    prefix_only.mode = MatchMode::kPrefixOnly;
    CHECK_FALSE(ClassifyRefusal(text, prefix_only).is_refusal);
}

TEST_CASE("list order decides which pattern is reported") {
    std::string text = "I cannot help. I'm sorry about that.";
    // "I'm sorry" is earlier in the default list even though "I cannot"
    // occurs earlier in the text.
    auto judgment = ClassifyRefusal(text, DefaultPrefixList());
    REQUIRE(judgment.matched_pattern.has_value());
    CHECK(*judgment.matched_pattern == "I'm sorry");
}

TEST_CASE("matching is case-sensitive") {
    CHECK_FALSE(ClassifyRefusal("i cannot assist", DefaultPrefixList()).is_refusal);
}

TEST_CASE("excerpt keeps the first 64 characters") {
    std::string text(200, 'x');
    auto judgment = ClassifyRefusal(text, DefaultPrefixList());
    CHECK(judgment.response_excerpt.size() == 64);
}

TEST_CASE("empty prefix list is a configuration error") {
    PrefixList empty;
    CHECK_THROWS_WITH_AS(ClassifyRefusal("anything", empty), doctest::Contains("configuration"),
                         Error);
}

TEST_CASE("classification is pure") {
    std::string text = "  I apologize, that is not something to process.";
    auto first = ClassifyRefusal(text, DefaultPrefixList());
    for (int i = 0; i < 3; ++i) {
        auto again = ClassifyRefusal(text, DefaultPrefixList());
        CHECK(again.is_refusal == first.is_refusal);
        CHECK(again.matched_pattern == first.matched_pattern);
        CHECK(again.response_excerpt == first.response_excerpt);
    }
}

// Property: extending the pattern list can only create refusals, never undo
// one.
TEST_CASE("adding a prefix never flips refusal to non-refusal") {
    Rng rng(2024);
    const std::vector<std::string> snippets = {
        "I cannot", "the weather", "I'm sorry", "garden notes", "As an AI", "fine answer",
        "I do not", "summary:",   "hazard",    "I must decline"};
    for (int trial = 0; trial < 200; ++trial) {
        std::string text;
        for (int w = 0; w < 4; ++w) text += snippets[rng.Below(snippets.size())] + " ";
        PrefixList base = DefaultPrefixList();
        size_t keep = 1 + rng.Below(base.patterns.size());
        base.patterns.resize(keep);
        PrefixList extended = base;
        extended.patterns.push_back(snippets[rng.Below(snippets.size())]);
        bool before = ClassifyRefusal(text, base).is_refusal;
        bool after = ClassifyRefusal(text, extended).is_refusal;
        if (before) CHECK(after);
    }
}

TEST_CASE("prefix list version tracks content and mode") {
    PrefixList a = DefaultPrefixList();
    PrefixList b = DefaultPrefixList();
    CHECK(a.Version() == b.Version());
    b.patterns.push_back("No way");
    CHECK(a.Version() != b.Version());
    PrefixList c = DefaultPrefixList();
    c.mode = MatchMode::kPrefixOnly;
    CHECK(a.Version() != c.Version());
}

TEST_CASE("prefix list file round-trip") {
    TempDir dir("prefixes");
    testutil::WriteLines(dir.Path("prefixes.txt"), {"I cannot", "I'm sorry", "No can do"});
    PrefixList list = LoadPrefixList(dir.Path("prefixes.txt"), MatchMode::kAnywhere);
    REQUIRE(list.patterns.size() == 3);
    CHECK(list.patterns[2] == "No can do");
}

namespace {

RefusalGenerationResult GenerateWith(MockBackend& backend, int max_attempts) {
    Document doc = testutil::MakeDoc(testutil::SyntheticMaliciousText(1), DocSource::kAttackGenerated);
    SamplingOptions options;
    options.max_attempts = max_attempts;
    return GenerateRefusal(doc, TaskKind::kSummarize, backend, TemplateRegistry::Default(),
                           DefaultPrefixList(), options);
}

}  // namespace

TEST_CASE("generate_refusal returns on the first refusing sample") {
    auto backend = MockBackend::AlwaysRefuse();
    auto result = GenerateWith(*backend, 10);
    CHECK(result.attempts == 1);
    CHECK(result.answer == kDefaultMockRefusal);
    CHECK(ClassifyRefusal(result.answer, DefaultPrefixList()).is_refusal);
    CHECK(result.template_id == "summarize-train-1");
}

TEST_CASE("generate_refusal retries until a refusal shows up") {
    auto backend = MockBackend::Script({
        "Sure, here is the summary.",
        "The document says the following.",
        "I cannot do this.",
    });
    auto result = GenerateWith(*backend, 3);
    CHECK(result.attempts == 3);
    CHECK(result.answer == "I cannot do this.");
}

TEST_CASE("generate_refusal exhaustion carries every candidate") {
    auto backend = MockBackend::AlwaysComply();
    try {
        GenerateWith(*backend, 5);
        FAIL("expected exhaustion");
    } catch (const GenerationExhaustedError& e) {
        CHECK(e.candidates().size() == 5);
        CHECK(e.kind() == ErrorKind::kBackend);
    }
}

TEST_CASE("generate_refusal rejects benign documents") {
    auto backend = MockBackend::AlwaysRefuse();
    Document doc = testutil::MakeDoc("a calm note", DocSource::kBenignValidation);
    SamplingOptions options;
    CHECK_THROWS_AS(GenerateRefusal(doc, TaskKind::kCase, *backend, TemplateRegistry::Default(),
                                    DefaultPrefixList(), options),
                    Error);
}

TEST_CASE("build_defense_dataset covers every (doc, task) pair") {
    auto docs = testutil::MakeMaliciousDocs(10);
    Split pool{SplitName::kTrainPool, {}, 0};
    for (const auto& doc : docs) pool.doc_ids.push_back(doc.id);
    auto backend = MockBackend::AlwaysRefuse();
    BuildOptions options;
    std::vector<TaskKind> tasks = {TaskKind::kSummarize, TaskKind::kTranslate};

    auto dataset = BuildDefenseDataset(pool, IndexById(docs), tasks, *backend,
                                       TemplateRegistry::Default(), DefaultPrefixList(), options);
    CHECK(dataset.examples.size() == 20);
    CHECK(dataset.exhausted.empty());
    CHECK(std::is_sorted(dataset.examples.begin(), dataset.examples.end(),
                         [](const DefenseExample& a, const DefenseExample& b) {
                             return std::tie(a.doc_id, a.task) < std::tie(b.doc_id, b.task);
                         }));
    for (const auto& ex : dataset.examples) {
        CHECK(ClassifyRefusal(ex.refusal_answer, DefaultPrefixList()).is_refusal);
    }
}

TEST_CASE("exhausted documents are reported, not dropped silently") {
    auto docs = testutil::MakeMaliciousDocs(10);
    Split pool{SplitName::kTrainPool, {}, 0};
    for (const auto& doc : docs) pool.doc_ids.push_back(doc.id);

    // Two specific documents never get a refusal.
    std::set<std::string> stubborn = {docs[2].text, docs[7].text};
    MockBackend backend("mock:keyed", [&](const std::string& prompt, int) {
        for (const auto& text : stubborn) {
            if (prompt.find(text) != std::string::npos) return std::string("Sure, proceeding.");
        }
        return std::string(kDefaultMockRefusal);
    });
    BuildOptions options;
    options.max_exhaustion_rate = 0.25;  // keep below-threshold so the report path is observable
    auto dataset = BuildDefenseDataset(pool, IndexById(docs), {TaskKind::kSummarize}, backend,
                                       TemplateRegistry::Default(), DefaultPrefixList(), options);
    CHECK(dataset.examples.size() == 8);
    REQUIRE(dataset.exhausted.size() == 2);
    std::set<std::string> exhausted_ids;
    for (const auto& entry : dataset.exhausted) exhausted_ids.insert(entry.doc_id);
    CHECK(exhausted_ids == std::set<std::string>{docs[2].id, docs[7].id});
}

TEST_CASE("excess exhaustion aborts with a coverage error") {
    auto docs = testutil::MakeMaliciousDocs(10);
    Split pool{SplitName::kTrainPool, {}, 0};
    for (const auto& doc : docs) pool.doc_ids.push_back(doc.id);
    auto backend = MockBackend::AlwaysComply();
    BuildOptions options;
    options.sampling.max_attempts = 2;
    CHECK_THROWS_WITH_AS(BuildDefenseDataset(pool, IndexById(docs), {TaskKind::kSummarize},
                                             *backend, TemplateRegistry::Default(),
                                             DefaultPrefixList(), options),
                         doctest::Contains("coverage"), Error);
}

TEST_CASE("concurrent generation yields the same dataset as sequential") {
    auto docs = testutil::MakeMaliciousDocs(16);
    Split pool{SplitName::kTrainPool, {}, 0};
    for (const auto& doc : docs) pool.doc_ids.push_back(doc.id);
    auto backend = MockBackend::RefuseIfContains("hazard");

    BuildOptions sequential;
    sequential.in_flight = 1;
    BuildOptions parallel;
    parallel.in_flight = 4;
    std::vector<TaskKind> tasks = {TaskKind::kSummarize, TaskKind::kCase};
    auto a = BuildDefenseDataset(pool, IndexById(docs), tasks, *backend,
                                 TemplateRegistry::Default(), DefaultPrefixList(), sequential);
    auto b = BuildDefenseDataset(pool, IndexById(docs), tasks, *backend,
                                 TemplateRegistry::Default(), DefaultPrefixList(), parallel);
    REQUIRE(a.examples.size() == b.examples.size());
    for (size_t i = 0; i < a.examples.size(); ++i) {
        CHECK(a.examples[i].doc_id == b.examples[i].doc_id);
        CHECK(a.examples[i].task == b.examples[i].task);
        CHECK(a.examples[i].refusal_answer == b.examples[i].refusal_answer);
    }
}

TEST_CASE("defense dataset file round-trip") {
    TempDir dir("defense");
    auto docs = testutil::MakeMaliciousDocs(4);
    Split pool{SplitName::kTrainPool, {}, 0};
    for (const auto& doc : docs) pool.doc_ids.push_back(doc.id);
    auto backend = MockBackend::AlwaysRefuse();
    auto dataset = BuildDefenseDataset(pool, IndexById(docs), {TaskKind::kNsp}, *backend,
                                       TemplateRegistry::Default(), DefaultPrefixList(), {});
    SaveDefenseDataset(dataset, dir.Path("defense.jsonl"));
    auto loaded = LoadDefenseDataset(dir.Path("defense.jsonl"));
    REQUIRE(loaded.examples.size() == dataset.examples.size());
    CHECK(loaded.prefix_list_version == dataset.prefix_list_version);
    for (size_t i = 0; i < loaded.examples.size(); ++i) {
        CHECK(loaded.examples[i].doc_id == dataset.examples[i].doc_id);
        CHECK(loaded.examples[i].template_id == dataset.examples[i].template_id);
        CHECK(loaded.examples[i].refusal_answer == dataset.examples[i].refusal_answer);
    }
}

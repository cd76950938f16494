#include <doctest.h>

#include <map>
#include <set>

#include "docdefend/mixer.hpp"
#include "testutil.hpp"

using namespace docdefend;
using testutil::TempDir;

namespace {

struct Pools {
    std::vector<Document> docs;
    DocumentStore store;
    std::vector<DefenseExample> defense;
    std::vector<AffirmativeExample> benign;
    TemplateRegistry registry = TemplateRegistry::Default();
};

// A defense pool with one example per (doc, task) over all five tasks.
Pools MakePools(size_t doc_count, size_t benign_count) {
    Pools pools;
    pools.docs = testutil::MakeMaliciousDocs(doc_count);
    pools.store = IndexById(pools.docs);
    for (const auto& doc : pools.docs) {
        for (TaskKind task : AllTasks()) {
            DefenseExample ex;
            ex.doc_id = doc.id;
            ex.task = task;
            ex.template_id = pools.registry.TemplatesFor(task, Phase::kTrain).front().template_id;
            ex.refusal_answer = kDefaultMockRefusal;
            pools.defense.push_back(std::move(ex));
        }
    }
    pools.benign = testutil::MakeAffirmativePool(benign_count);
    return pools;
}

size_t CountRole(const ComposedDataset& dataset, RecordRole role) {
    size_t count = 0;
    for (const auto& record : dataset.records) {
        if (record.role == role) ++count;
    }
    return count;
}

}  // namespace

TEST_CASE("mixed_counts splits the budget evenly or fails") {
    std::vector<TaskKind> five(AllTasks().begin(), AllTasks().end());
    CHECK(MixedCounts(500, five) == 100);
    CHECK(MixedCounts(10, five) == 2);
    CHECK_THROWS_WITH_AS(MixedCounts(7, five), doctest::Contains("spec-inconsistency"), Error);
}

TEST_CASE("schedule derives one spec per count") {
    MixSpec base;
    base.mode = MixMode::kSingleTask;
    base.single_task = TaskKind::kSummarize;
    base.affirmative_count = 100;
    base.seed = 50;
    auto specs = Schedule({10, 100, 500, 1000, 2000}, base);
    REQUIRE(specs.size() == 5);
    std::vector<size_t> ns;
    for (size_t i = 0; i < specs.size(); ++i) {
        ns.push_back(specs[i].refusal_count);
        CHECK(specs[i].seed == base.seed + i);
        CHECK(specs[i].SelectionSeed() == base.seed);
        CHECK(specs[i].affirmative_count == 100);
    }
    CHECK(ns == std::vector<size_t>{10, 100, 500, 1000, 2000});

    CHECK(Schedule({10}, base).size() == 1);
    CHECK_THROWS_AS(Schedule({100, 100}, base), Error);
    CHECK_THROWS_AS(Schedule({100, 50}, base), Error);
    CHECK_THROWS_AS(Schedule({0, 10}, base), Error);
}

TEST_CASE("single-task composition has exact cardinalities") {
    Pools pools = MakePools(30, 60);
    MixSpec spec;
    spec.mode = MixMode::kSingleTask;
    spec.single_task = TaskKind::kSummarize;
    spec.affirmative_count = 40;
    spec.refusal_count = 15;
    spec.seed = 3;

    ComposedDataset dataset = Compose(spec, pools.benign, pools.defense, pools.registry, pools.store);
    CHECK(dataset.records.size() == 55);
    CHECK(CountRole(dataset, RecordRole::kAffirmative) == 40);
    CHECK(CountRole(dataset, RecordRole::kRefusal) == 15);
    for (const auto& record : dataset.records) {
        if (record.role == RecordRole::kRefusal) {
            REQUIRE(record.task.has_value());
            CHECK(*record.task == TaskKind::kSummarize);
            CHECK(pools.store.count(record.source_id) == 1);
            CHECK(record.prompt.find(pools.store.at(record.source_id).text) != std::string::npos);
        }
    }
}

TEST_CASE("mixed composition draws the same count per task") {
    Pools pools = MakePools(30, 60);
    MixSpec spec;
    spec.mode = MixMode::kMixed;
    spec.tasks.assign(AllTasks().begin(), AllTasks().end());
    spec.affirmative_count = 20;
    spec.refusal_count = 20;
    spec.per_task_count = 4;
    spec.seed = 3;

    ComposedDataset dataset = Compose(spec, pools.benign, pools.defense, pools.registry, pools.store);
    std::map<TaskKind, int> per_task;
    for (const auto& record : dataset.records) {
        if (record.role == RecordRole::kRefusal) ++per_task[*record.task];
    }
    REQUIRE(per_task.size() == 5);
    for (TaskKind task : AllTasks()) CHECK(per_task[task] == 4);
}

TEST_CASE("refusal-only composition is the degenerate mix") {
    Pools pools = MakePools(12, 5);
    MixSpec spec;
    spec.mode = MixMode::kRefusalOnly;
    spec.single_task = TaskKind::kCase;
    spec.affirmative_count = 0;
    spec.refusal_count = 10;
    spec.seed = 9;

    ComposedDataset dataset = Compose(spec, pools.benign, pools.defense, pools.registry, pools.store);
    CHECK(dataset.records.size() == 10);
    CHECK(CountRole(dataset, RecordRole::kRefusal) == 10);
}

TEST_CASE("spec validation failures") {
    Pools pools = MakePools(10, 10);
    MixSpec spec;
    spec.mode = MixMode::kMixed;
    spec.tasks.assign(AllTasks().begin(), AllTasks().end());
    spec.affirmative_count = 2;
    spec.refusal_count = 9;
    spec.per_task_count = 2;  // 2 x 5 != 9
    CHECK_THROWS_WITH_AS(Compose(spec, pools.benign, pools.defense, pools.registry, pools.store),
                         doctest::Contains("spec-inconsistency"), Error);

    MixSpec refusal_only;
    refusal_only.mode = MixMode::kRefusalOnly;
    refusal_only.affirmative_count = 5;
    refusal_only.single_task = TaskKind::kCase;
    refusal_only.refusal_count = 2;
    CHECK_THROWS_AS(Compose(refusal_only, pools.benign, pools.defense, pools.registry, pools.store),
                    Error);
}

TEST_CASE("insufficient pools are reported with the task name") {
    Pools pools = MakePools(5, 50);
    MixSpec spec;
    spec.mode = MixMode::kSingleTask;
    spec.single_task = TaskKind::kTranslate;
    spec.affirmative_count = 10;
    spec.refusal_count = 6;  // only 5 Translate examples exist
    CHECK_THROWS_WITH_AS(Compose(spec, pools.benign, pools.defense, pools.registry, pools.store),
                         doctest::Contains("Translate"), Error);

    MixSpec big;
    big.mode = MixMode::kSingleTask;
    big.single_task = TaskKind::kCase;
    big.affirmative_count = 51;
    big.refusal_count = 1;
    CHECK_THROWS_WITH_AS(Compose(big, pools.benign, pools.defense, pools.registry, pools.store),
                         doctest::Contains("insufficient-data"), Error);
}

TEST_CASE("composition is deterministic and seed-sensitive") {
    Pools pools = MakePools(20, 30);
    MixSpec spec;
    spec.mode = MixMode::kSingleTask;
    spec.single_task = TaskKind::kNsp;
    spec.affirmative_count = 10;
    spec.refusal_count = 5;
    spec.seed = 77;

    auto a = Compose(spec, pools.benign, pools.defense, pools.registry, pools.store);
    auto b = Compose(spec, pools.benign, pools.defense, pools.registry, pools.store);
    CHECK(a.checksum == b.checksum);
    REQUIRE(a.records.size() == b.records.size());
    for (size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].source_id == b.records[i].source_id);
    }

    MixSpec other = spec;
    other.seed = 78;
    auto c = Compose(other, pools.benign, pools.defense, pools.registry, pools.store);
    CHECK(a.checksum != c.checksum);
}

TEST_CASE("schedule selections nest: N=10 within N=100 within N=500") {
    Pools pools = MakePools(600, 30);
    MixSpec base;
    base.mode = MixMode::kSingleTask;
    base.single_task = TaskKind::kSummarize;
    base.affirmative_count = 10;
    base.seed = 123;
    auto specs = Schedule({10, 100, 500}, base);

    std::vector<std::set<std::string>> selected;
    for (const auto& spec : specs) {
        auto dataset = Compose(spec, pools.benign, pools.defense, pools.registry, pools.store);
        std::set<std::string> ids;
        for (const auto& record : dataset.records) {
            if (record.role == RecordRole::kRefusal) ids.insert(record.source_id);
        }
        CHECK(ids.size() == spec.refusal_count);
        selected.push_back(std::move(ids));
    }
    CHECK(std::includes(selected[1].begin(), selected[1].end(), selected[0].begin(), selected[0].end()));
    CHECK(std::includes(selected[2].begin(), selected[2].end(), selected[1].begin(), selected[1].end()));
}

TEST_CASE("test-split documents cannot leak into a composition") {
    Pools pools = MakePools(10, 10);
    MixSpec spec;
    spec.mode = MixMode::kSingleTask;
    spec.single_task = TaskKind::kSummarize;
    spec.affirmative_count = 2;
    spec.refusal_count = 10;  // forces every doc to be selected
    std::set<std::string> forbidden = {pools.docs[4].id};
    CHECK_THROWS_WITH_AS(
        Compose(spec, pools.benign, pools.defense, pools.registry, pools.store, forbidden),
        doctest::Contains("test-leakage"), Error);
}

TEST_CASE("refusal prompts come from train-phase templates") {
    Pools pools = MakePools(6, 5);
    // Rewrite one defense example to (incorrectly) reference a test template.
    pools.defense[0].template_id =
        pools.registry.TemplatesFor(pools.defense[0].task, Phase::kTest).front().template_id;
    MixSpec spec;
    spec.mode = MixMode::kSingleTask;
    spec.single_task = TaskKind::kSummarize;
    spec.affirmative_count = 1;
    spec.refusal_count = 6;
    CHECK_THROWS_WITH_AS(Compose(spec, pools.benign, pools.defense, pools.registry, pools.store),
                         doctest::Contains("non-train template"), Error);
}

TEST_CASE("composed dataset file round-trip preserves records and checksum") {
    TempDir dir("composed");
    Pools pools = MakePools(15, 20);
    MixSpec spec;
    spec.mode = MixMode::kMixed;
    spec.tasks.assign(AllTasks().begin(), AllTasks().end());
    spec.affirmative_count = 8;
    spec.refusal_count = 10;
    spec.per_task_count = 2;
    spec.seed = 5;
    auto dataset = Compose(spec, pools.benign, pools.defense, pools.registry, pools.store);

    SaveComposed(dataset, dir.Path("mix.jsonl"));
    auto loaded = LoadComposed(dir.Path("mix.jsonl"));
    CHECK(loaded.checksum == dataset.checksum);
    CHECK(loaded.records.size() == dataset.records.size());
    CHECK(loaded.spec.mode == spec.mode);
    CHECK(loaded.spec.refusal_count == spec.refusal_count);
    CHECK(loaded.spec.seed == spec.seed);
    CHECK(loaded.spec.SelectionSeed() == spec.SelectionSeed());
    for (size_t i = 0; i < loaded.records.size(); ++i) {
        CHECK(loaded.records[i].prompt == dataset.records[i].prompt);
        CHECK(loaded.records[i].answer == dataset.records[i].answer);
        CHECK(loaded.records[i].doc_span.has_value() == dataset.records[i].doc_span.has_value());
    }
}

TEST_CASE("affirmative prompts join instruction and input") {
    Pools pools = MakePools(6, 40);
    MixSpec spec;
    spec.mode = MixMode::kSingleTask;
    spec.single_task = TaskKind::kSummarize;
    spec.affirmative_count = 40;
    spec.refusal_count = 0;
    auto dataset = Compose(spec, pools.benign, pools.defense, pools.registry, pools.store);
    size_t with_span = 0;
    for (const auto& record : dataset.records) {
        REQUIRE(record.role == RecordRole::kAffirmative);
        CHECK_FALSE(record.answer.empty());
        if (record.doc_span) {
            ++with_span;
            std::string inside = record.prompt.substr(record.doc_span->begin,
                                                      record.doc_span->end - record.doc_span->begin);
            CHECK(record.prompt.size() >= inside.size());
        }
    }
    CHECK(with_span == 10);  // every fourth pool entry carries an input
}

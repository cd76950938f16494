#ifndef DOCDEFEND_CONFIG_HPP
#define DOCDEFEND_CONFIG_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "docdefend/backend.hpp"
#include "docdefend/corpus.hpp"
#include "docdefend/mixer.hpp"
#include "docdefend/refusal.hpp"
#include "docdefend/trainer.hpp"

namespace docdefend {

struct CorpusInput {
    std::string path;
    DocSource source = DocSource::kAttackGenerated;
};

// Declarative experiment description; every subcommand reads the same file.
// CLI flags override individual fields.
struct ExperimentConfig {
    std::string output_dir = "out";
    uint64_t seed = 7;
    std::string fingerprint;  // hash of the raw config file, set by Load

    // Corpus inputs. Task-Harmful is drawn from harmful_eval, the training
    // pool from malicious_train minus Task-Harmful.
    std::vector<CorpusInput> malicious_train;
    CorpusInput harmful_eval;
    CorpusInput useful_eval;
    CorpusInput ood_eval;
    size_t train_pool_size = 2000;
    size_t test_split_size = 100;

    std::string templates_path;    // optional registry override
    std::string prefix_list_path;  // optional pattern override
    MatchMode prefix_match_mode = MatchMode::kAnywhere;

    std::string benign_examples_path;

    MixMode mix_mode = MixMode::kSingleTask;
    std::optional<TaskKind> single_task = TaskKind::kSummarize;
    std::vector<TaskKind> mix_tasks;
    size_t affirmative_count = 20000;
    std::vector<size_t> schedule = DefaultSchedule();

    std::vector<TaskKind> defense_tasks;  // tasks refusals are generated for
    SamplingOptions refusal_sampling;
    int refusal_in_flight = 1;
    double max_exhaustion_rate = 0.10;

    TrainingConfig training;
    std::string base_model = "tiny:d=64,heads=2,layers=1,ff=256,ctx=256,seed=1,vocab=8192";

    std::string backend_kind = "mock";  // mock | remote | local
    std::string mock_policy = "always-refuse";
    std::string mock_marker;
    std::string remote_url;
    std::string local_model_ref;

    std::vector<TaskKind> eval_tasks;
    SamplingParams eval_params{0.0, 64, std::nullopt};
    int eval_in_flight = 1;

    static ExperimentConfig Load(const std::string& path);

    TemplateRegistry LoadTemplates() const;
    PrefixList LoadPrefixes() const;
    // `model_ref` overrides the configured local model when non-empty.
    std::unique_ptr<GenerationBackend> MakeBackend(const std::string& model_ref = "") const;

    MixSpec BaseMixSpec() const;
};

void RequireFile(const std::string& path, const std::string& what);

}  // namespace docdefend

#endif  // DOCDEFEND_CONFIG_HPP

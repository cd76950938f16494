#ifndef DOCDEFEND_TRAINER_HPP
#define DOCDEFEND_TRAINER_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "docdefend/backend.hpp"
#include "docdefend/mixer.hpp"
#include "docdefend/tinylm.hpp"

namespace docdefend {

// Fine-tuning settings. Defaults follow the instruction-tuning setup this
// pipeline targets; desk-scale tests override them.
struct TrainingConfig {
    int epochs = 3;
    int max_sequence_length = 1024;
    double learning_rate = 3e-4;
    int batch_size = 128;
    AdapterConfig adapter;
    bool use_system_prompt = false;
    uint64_t seed = 0;  // shuffling and adapter init

    void Validate() const;
    nlohmann::json ToJson() const;
    static TrainingConfig FromJson(const nlohmann::json& j);
    bool operator==(const TrainingConfig& other) const;
};

inline constexpr const char* kSystemPrompt =
    "You are a helpful, respectful and honest assistant. Refuse to assist with harmful, "
    "unethical or dangerous content, and explain why instead.";

// ---------------------------------------------------------------------------
// Record tokenization.
//
// A record becomes [bos] prompt [sep] answer [eos]. Prediction targets are
// explicit so the loss mask can be probed independently of the inputs:
// position t is scored iff t >= loss_start, i.e. only answer tokens (and the
// terminator) contribute.
struct TokenizedRecord {
    std::vector<int> ids;
    std::vector<int> targets;  // targets[t] is the label for position t
    size_t loss_start = 0;     // index of the <sep> position

    size_t PredictionCount() const { return targets.size() - loss_start; }
};

// Over-length records are shortened by dropping tokens from the tail of the
// document region (record.doc_span); the instruction and the answer are kept
// whole. Records whose instruction plus answer alone exceed the budget are a
// validation error.
TokenizedRecord TokenizeRecord(const ComposedRecord& record, const Vocab& vocab,
                               int max_sequence_length, bool use_system_prompt);

std::vector<TokenizedRecord> TokenizeDataset(const ComposedDataset& dataset, const Vocab& vocab,
                                             const TrainingConfig& config, int context_len);

// Mean over records of the per-record mean answer-token NLL. Prompt
// positions contribute exactly zero.
double ComputeLoss(const TinyLm& model, const AdapterSet* adapters,
                   const std::vector<TokenizedRecord>& batch);

// ---------------------------------------------------------------------------
// Training.

struct AdapterArtifact {
    std::string path;
    std::string base_model_id;
    TrainingConfig config;
    std::string dataset_checksum;
    double final_loss = 0.0;
    std::vector<double> epoch_losses;
};

// Minimizes the answer-masked NLL over the composed dataset with Adam on the
// LoRA parameters; the base model stays frozen. base_model_id is either a
// "tiny:..." spec (fresh model, vocabulary built from the dataset) or a path
// to a saved model file. The artifact directory is self-contained:
// model.json + adapter.json + manifest.json.
AdapterArtifact Train(const ComposedDataset& dataset, const TrainingConfig& config,
                      const std::string& base_model_id, const std::string& out_dir);

AdapterArtifact LoadArtifactManifest(const std::string& dir);

// ---------------------------------------------------------------------------
// Local generation backend over a TinyLm.

class LocalBackend : public GenerationBackend {
public:
    LocalBackend(TinyLm model, std::string id, std::string system_prompt = "");

    // ref: artifact directory, model.json path, or "tiny:..." spec.
    static std::unique_ptr<LocalBackend> FromModelRef(const std::string& ref);

    std::string Generate(const std::string& prompt, const SamplingParams& params) override;
    std::string Id() const override { return id_; }

    const TinyLm& model() const { return model_; }

private:
    TinyLm model_;
    std::string id_;
    std::string system_prompt_;
};

}  // namespace docdefend

#endif  // DOCDEFEND_TRAINER_HPP

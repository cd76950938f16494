#include "docdefend/trainer.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <json.hpp>

#include "docdefend/jsonl.hpp"

namespace docdefend {

void TrainingConfig::Validate() const {
    if (epochs < 1) ThrowValidation("epochs must be >= 1");
    if (max_sequence_length < 4) ThrowValidation("max_sequence_length must be >= 4");
    if (learning_rate <= 0.0) ThrowValidation("learning_rate must be positive");
    if (batch_size < 1) ThrowValidation("batch_size must be >= 1");
    adapter.Validate();
}

nlohmann::json TrainingConfig::ToJson() const {
    nlohmann::json j;
    j["epochs"] = epochs;
    j["max_sequence_length"] = max_sequence_length;
    j["learning_rate"] = learning_rate;
    j["batch_size"] = batch_size;
    j["adapter"] = {
        {"rank", adapter.rank},
        {"scaling", adapter.scaling},
        {"dropout", adapter.dropout},
        {"target_projections", adapter.target_projections},
    };
    j["use_system_prompt"] = use_system_prompt;
    j["seed"] = seed;
    return j;
}

TrainingConfig TrainingConfig::FromJson(const nlohmann::json& j) {
    TrainingConfig config;
    config.epochs = j.value("epochs", config.epochs);
    config.max_sequence_length = j.value("max_sequence_length", config.max_sequence_length);
    config.learning_rate = j.value("learning_rate", config.learning_rate);
    config.batch_size = j.value("batch_size", config.batch_size);
    if (j.contains("adapter")) {
        const auto& a = j["adapter"];
        config.adapter.rank = a.value("rank", config.adapter.rank);
        config.adapter.scaling = a.value("scaling", config.adapter.scaling);
        config.adapter.dropout = a.value("dropout", config.adapter.dropout);
        if (a.contains("target_projections")) {
            config.adapter.target_projections = a["target_projections"].get<std::vector<std::string>>();
        }
    }
    config.use_system_prompt = j.value("use_system_prompt", config.use_system_prompt);
    config.seed = j.value("seed", config.seed);
    return config;
}

bool TrainingConfig::operator==(const TrainingConfig& other) const {
    return epochs == other.epochs && max_sequence_length == other.max_sequence_length &&
           learning_rate == other.learning_rate && batch_size == other.batch_size &&
           adapter.rank == other.adapter.rank && adapter.scaling == other.adapter.scaling &&
           adapter.dropout == other.adapter.dropout &&
           adapter.target_projections == other.adapter.target_projections &&
           use_system_prompt == other.use_system_prompt && seed == other.seed;
}

TokenizedRecord TokenizeRecord(const ComposedRecord& record, const Vocab& vocab,
                               int max_sequence_length, bool use_system_prompt) {
    std::string prefix, doc, suffix;
    if (record.doc_span && record.doc_span->begin <= record.doc_span->end &&
        record.doc_span->end <= record.prompt.size()) {
        prefix = record.prompt.substr(0, record.doc_span->begin);
        doc = record.prompt.substr(record.doc_span->begin,
                                   record.doc_span->end - record.doc_span->begin);
        suffix = record.prompt.substr(record.doc_span->end);
    } else {
        doc = record.prompt;
    }
    if (use_system_prompt) prefix = std::string(kSystemPrompt) + "\n\n" + prefix;

    std::vector<int> pre_ids = vocab.Encode(prefix);
    std::vector<int> doc_ids = vocab.Encode(doc);
    std::vector<int> post_ids = vocab.Encode(suffix);
    std::vector<int> ans_ids = vocab.Encode(record.answer);
    if (ans_ids.empty()) ThrowValidation("record with empty answer: " + record.source_id);

    const size_t budget = static_cast<size_t>(max_sequence_length);
    size_t fixed = 1 + pre_ids.size() + post_ids.size() + 1 + ans_ids.size() + 1;
    if (fixed > budget) {
        // Even an empty document does not fit; shave the prompt tail, the
        // instruction head and the answer stay whole.
        doc_ids.clear();
        size_t overflow = fixed - budget;
        if (overflow <= post_ids.size()) {
            post_ids.resize(post_ids.size() - overflow);
        } else {
            overflow -= post_ids.size();
            post_ids.clear();
            if (overflow <= pre_ids.size()) {
                pre_ids.resize(pre_ids.size() - overflow);
            } else {
                ThrowValidation("record " + record.source_id + " cannot fit max_sequence_length " +
                                std::to_string(max_sequence_length) + ": answer alone is too long");
            }
        }
    } else if (fixed + doc_ids.size() > budget) {
        doc_ids.resize(budget - fixed);  // drop the document tail
    }

    TokenizedRecord out;
    out.ids.reserve(fixed + doc_ids.size());
    out.ids.push_back(Vocab::kBos);
    out.ids.insert(out.ids.end(), pre_ids.begin(), pre_ids.end());
    out.ids.insert(out.ids.end(), doc_ids.begin(), doc_ids.end());
    out.ids.insert(out.ids.end(), post_ids.begin(), post_ids.end());
    out.loss_start = out.ids.size();
    out.ids.push_back(Vocab::kSep);
    out.ids.insert(out.ids.end(), ans_ids.begin(), ans_ids.end());
    out.ids.push_back(Vocab::kEos);
    out.targets.resize(out.ids.size() - 1);
    for (size_t t = 0; t + 1 < out.ids.size(); ++t) out.targets[t] = out.ids[t + 1];
    return out;
}

std::vector<TokenizedRecord> TokenizeDataset(const ComposedDataset& dataset, const Vocab& vocab,
                                             const TrainingConfig& config, int context_len) {
    int max_len = std::min(config.max_sequence_length, context_len);
    std::vector<TokenizedRecord> out;
    out.reserve(dataset.records.size());
    for (const auto& record : dataset.records) {
        out.push_back(TokenizeRecord(record, vocab, max_len, config.use_system_prompt));
    }
    return out;
}

double ComputeLoss(const TinyLm& model, const AdapterSet* adapters,
                   const std::vector<TokenizedRecord>& batch) {
    if (batch.empty()) ThrowValidation("compute_loss: batch is empty");
    double total = 0.0;
    for (const auto& record : batch) {
        if (record.PredictionCount() == 0) {
            ThrowValidation("compute_loss: record has no answer tokens");
        }
        Eigen::MatrixXd logits = model.Logits(record.ids, adapters);
        double nll = 0.0;
        for (size_t t = record.loss_start; t < record.targets.size(); ++t) {
            nll += nn::NllFromLogitsRow(logits.row(static_cast<Eigen::Index>(t)),
                                        record.targets[t]);
        }
        total += nll / static_cast<double>(record.PredictionCount());
    }
    return total / static_cast<double>(batch.size());
}

namespace {

struct AdamSlot {
    Eigen::MatrixXd m, v;
};

void AdamUpdate(Eigen::MatrixXd& w, const Eigen::MatrixXd& g, AdamSlot& slot, double lr,
                int64_t step) {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (slot.m.size() == 0) {
        slot.m = Eigen::MatrixXd::Zero(g.rows(), g.cols());
        slot.v = Eigen::MatrixXd::Zero(g.rows(), g.cols());
    }
    slot.m = b1 * slot.m + (1.0 - b1) * g;
    slot.v = b2 * slot.v + (1.0 - b2) * g.cwiseProduct(g);
    double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
    w.array() -= lr * (slot.m.array() / bc1) / ((slot.v.array() / bc2).sqrt() + eps);
}

TinyLm ResolveBaseModel(const std::string& base_model_id, const ComposedDataset& dataset,
                        const TrainingConfig& config) {
    if (IsTinyLmSpec(base_model_id)) {
        TinyLmSpec spec = ParseTinyLmSpec(base_model_id);
        std::vector<std::string> texts;
        if (config.use_system_prompt) texts.emplace_back(kSystemPrompt);
        for (const auto& record : dataset.records) {
            texts.push_back(record.prompt);
            texts.push_back(record.answer);
        }
        return TinyLm(spec.config, Vocab::Build(texts, spec.vocab_cap));
    }
    std::string file = base_model_id;
    if (std::filesystem::is_directory(file)) file += "/model.json";
    return TinyLm::Load(file);
}

}  // namespace

AdapterArtifact Train(const ComposedDataset& dataset, const TrainingConfig& config,
                      const std::string& base_model_id, const std::string& out_dir) {
    config.Validate();
    if (dataset.records.empty()) ThrowValidation("train: dataset is empty");

    TinyLm base = ResolveBaseModel(base_model_id, dataset, config);
    std::vector<TokenizedRecord> records =
        TokenizeDataset(dataset, base.vocab(), config, base.config().context_len);

    AdapterSet adapters = InitAdapters(base, config.adapter, config.seed);
    std::map<AdapterKey, std::pair<AdamSlot, AdamSlot>> adam;
    int64_t update_step = 0;

    std::vector<double> epoch_losses;
    uint64_t dropout_counter = 0;
    const bool use_dropout = config.adapter.dropout > 0.0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::vector<size_t> order(records.size());
        std::iota(order.begin(), order.end(), size_t{0});
        Rng shuffle_rng(DeriveSeed(config.seed, "epoch-" + std::to_string(epoch)));
        Shuffle(order, shuffle_rng);

        double epoch_loss_sum = 0.0;
        for (size_t batch_start = 0; batch_start < order.size();
             batch_start += static_cast<size_t>(config.batch_size)) {
            size_t batch_end =
                std::min(order.size(), batch_start + static_cast<size_t>(config.batch_size));
            size_t batch_count = batch_end - batch_start;

            AdapterGrads grads;
            double batch_loss = 0.0;
            for (size_t i = batch_start; i < batch_end; ++i) {
                const TokenizedRecord& record = records[order[i]];
                ForwardCache cache;
                Rng dropout_rng(DeriveSeed(config.seed, "dropout-" + std::to_string(dropout_counter++)));
                base.Forward(record.ids, cache, &adapters, use_dropout ? &dropout_rng : nullptr);

                const double weight = 1.0 / (static_cast<double>(batch_count) *
                                             static_cast<double>(record.PredictionCount()));
                Eigen::MatrixXd dlogits =
                    Eigen::MatrixXd::Zero(cache.logits.rows(), cache.logits.cols());
                double record_nll = 0.0;
                for (size_t t = record.loss_start; t < record.targets.size(); ++t) {
                    Eigen::Index row = static_cast<Eigen::Index>(t);
                    record_nll += nn::NllFromLogitsRow(cache.logits.row(row), record.targets[t]);
                    Eigen::RowVectorXd probs = nn::SoftmaxRows(cache.logits.row(row));
                    dlogits.row(row) = weight * probs;
                    dlogits(row, record.targets[t]) -= weight;
                }
                double record_loss = record_nll / static_cast<double>(record.PredictionCount());
                batch_loss += record_loss / static_cast<double>(batch_count);
                epoch_loss_sum += record_loss;
                base.Backward(cache, dlogits, adapters, grads);
            }

            if (!std::isfinite(batch_loss)) {
                throw Error(ErrorKind::kDiverged,
                            "training-diverged: non-finite loss at step " +
                                std::to_string(update_step + 1));
            }
            ++update_step;
            for (auto& [key, grad] : grads.grads) {
                LoraDelta& delta = adapters.deltas.at(key);
                auto& slots = adam[key];
                AdamUpdate(delta.down, grad.first, slots.first, config.learning_rate, update_step);
                AdamUpdate(delta.up, grad.second, slots.second, config.learning_rate, update_step);
            }
        }
        epoch_losses.push_back(epoch_loss_sum / static_cast<double>(records.size()));
    }

    std::filesystem::create_directories(out_dir);
    base.Save(out_dir + "/model.json");
    adapters.Save(out_dir + "/adapter.json");

    AdapterArtifact artifact;
    artifact.path = out_dir;
    artifact.base_model_id = base_model_id;
    artifact.config = config;
    artifact.dataset_checksum = dataset.checksum;
    artifact.epoch_losses = epoch_losses;
    artifact.final_loss = epoch_losses.back();

    nlohmann::json manifest;
    manifest["format"] = "docdefend-artifact-v1";
    manifest["base_model_id"] = base_model_id;
    manifest["base_fingerprint"] = base.fingerprint();
    manifest["config"] = config.ToJson();
    manifest["dataset_checksum"] = dataset.checksum;
    manifest["epoch_losses"] = epoch_losses;
    manifest["final_loss"] = artifact.final_loss;
    WriteFileOrThrow(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    return artifact;
}

AdapterArtifact LoadArtifactManifest(const std::string& dir) {
    nlohmann::json manifest =
        nlohmann::json::parse(ReadFileOrThrow(dir + "/manifest.json"), nullptr, false);
    if (manifest.is_discarded() || manifest.value("format", "") != "docdefend-artifact-v1") {
        ThrowIo("not an adapter artifact: " + dir);
    }
    AdapterArtifact artifact;
    artifact.path = dir;
    artifact.base_model_id = manifest.at("base_model_id").get<std::string>();
    artifact.config = TrainingConfig::FromJson(manifest.at("config"));
    artifact.dataset_checksum = manifest.at("dataset_checksum").get<std::string>();
    artifact.epoch_losses = manifest.at("epoch_losses").get<std::vector<double>>();
    artifact.final_loss = manifest.at("final_loss").get<double>();
    return artifact;
}

LocalBackend::LocalBackend(TinyLm model, std::string id, std::string system_prompt)
    : model_(std::move(model)), id_(std::move(id)), system_prompt_(std::move(system_prompt)) {}

std::unique_ptr<LocalBackend> LocalBackend::FromModelRef(const std::string& ref) {
    if (IsTinyLmSpec(ref)) {
        TinyLmSpec spec = ParseTinyLmSpec(ref);
        return std::make_unique<LocalBackend>(TinyLm(spec.config, Vocab()), ref);
    }
    namespace fs = std::filesystem;
    if (fs::is_directory(ref) && fs::exists(ref + "/manifest.json")) {
        AdapterArtifact artifact = LoadArtifactManifest(ref);
        TinyLm base = TinyLm::Load(ref + "/model.json");
        AdapterSet adapters = AdapterSet::Load(ref + "/adapter.json");
        TinyLm merged = base.MergeAdapters(adapters);
        std::string system_prompt = artifact.config.use_system_prompt ? kSystemPrompt : "";
        return std::make_unique<LocalBackend>(std::move(merged), "local:" + ref,
                                              std::move(system_prompt));
    }
    return std::make_unique<LocalBackend>(TinyLm::Load(ref), "local:" + ref);
}

std::string LocalBackend::Generate(const std::string& prompt, const SamplingParams& params) {
    if (prompt.empty()) ThrowValidation("prompt must be non-empty");
    params.Validate();
    static std::atomic<uint64_t> call_counter{0};

    std::string full = system_prompt_.empty() ? prompt : system_prompt_ + "\n\n" + prompt;
    std::vector<int> ids;
    ids.push_back(Vocab::kBos);
    for (int id : model_.vocab().Encode(full)) ids.push_back(id);
    ids.push_back(Vocab::kSep);
    if (static_cast<int>(ids.size()) >= model_.config().context_len) {
        ThrowValidation("input-too-long: prompt occupies " + std::to_string(ids.size()) +
                        " tokens, context limit is " + std::to_string(model_.config().context_len));
    }
    uint64_t seed = params.seed ? *params.seed : DeriveSeed(call_counter++, full);
    std::vector<int> generated = model_.Continue(ids, params.max_new_tokens, params.temperature, seed);
    return model_.vocab().Decode(generated);
}

}  // namespace docdefend

#include "docdefend/config.hpp"

#include <filesystem>

#include <json.hpp>

#include "docdefend/jsonl.hpp"

namespace docdefend {

namespace {

CorpusInput InputFromJson(const nlohmann::json& j, const std::string& what) {
    if (!j.contains("path") || !j.contains("source")) {
        ThrowValidation("config: " + what + " needs path and source");
    }
    CorpusInput input;
    input.path = j["path"].get<std::string>();
    input.source = DocSourceFromName(j["source"].get<std::string>());
    return input;
}

std::vector<TaskKind> TasksFromJson(const nlohmann::json& j) {
    std::vector<TaskKind> tasks;
    for (const auto& name : j) tasks.push_back(TaskFromName(name.get<std::string>()));
    return tasks;
}

std::vector<TaskKind> AllTasksVector() {
    auto tasks = AllTasks();
    return {tasks.begin(), tasks.end()};
}

}  // namespace

void RequireFile(const std::string& path, const std::string& what) {
    if (path.empty()) ThrowValidation("config: missing path for " + what);
    if (!std::filesystem::exists(path)) ThrowIo(what + " not found: " + path);
}

ExperimentConfig ExperimentConfig::Load(const std::string& path) {
    std::string raw = ReadFileOrThrow(path);
    nlohmann::json j = nlohmann::json::parse(raw, nullptr, false);
    if (j.is_discarded() || !j.is_object()) ThrowIo("config is not a JSON object: " + path);

    ExperimentConfig config;
    config.fingerprint = "cfg" + ToHex16(Fnv1a64(raw));
    config.mix_tasks = AllTasksVector();
    config.defense_tasks = AllTasksVector();
    config.eval_tasks = AllTasksVector();

    config.output_dir = j.value("output_dir", config.output_dir);
    config.seed = j.value("seed", config.seed);

    if (j.contains("corpus")) {
        const auto& c = j["corpus"];
        if (c.contains("malicious_train")) {
            for (const auto& entry : c["malicious_train"]) {
                config.malicious_train.push_back(InputFromJson(entry, "corpus.malicious_train"));
            }
        }
        if (c.contains("harmful_eval")) config.harmful_eval = InputFromJson(c["harmful_eval"], "corpus.harmful_eval");
        if (c.contains("useful_eval")) config.useful_eval = InputFromJson(c["useful_eval"], "corpus.useful_eval");
        if (c.contains("ood_eval")) config.ood_eval = InputFromJson(c["ood_eval"], "corpus.ood_eval");
        config.train_pool_size = c.value("train_pool_size", config.train_pool_size);
        config.test_split_size = c.value("test_split_size", config.test_split_size);
    }

    config.templates_path = j.value("templates_path", config.templates_path);
    if (j.contains("prefixes")) {
        const auto& p = j["prefixes"];
        config.prefix_list_path = p.value("path", config.prefix_list_path);
        if (p.contains("match_mode")) {
            config.prefix_match_mode = MatchModeFromName(p["match_mode"].get<std::string>());
        }
    }
    config.benign_examples_path = j.value("benign_examples_path", config.benign_examples_path);

    if (j.contains("mix")) {
        const auto& m = j["mix"];
        if (m.contains("mode")) config.mix_mode = MixModeFromName(m["mode"].get<std::string>());
        if (m.contains("single_task")) {
            config.single_task = TaskFromName(m["single_task"].get<std::string>());
        }
        if (m.contains("tasks")) config.mix_tasks = TasksFromJson(m["tasks"]);
        config.affirmative_count = m.value("affirmative_count", config.affirmative_count);
        if (m.contains("schedule")) {
            config.schedule = m["schedule"].get<std::vector<size_t>>();
        }
    }

    if (j.contains("refusal")) {
        const auto& r = j["refusal"];
        config.refusal_sampling.params.temperature =
            r.value("temperature", config.refusal_sampling.params.temperature);
        config.refusal_sampling.params.max_new_tokens =
            r.value("max_new_tokens", config.refusal_sampling.params.max_new_tokens);
        if (r.contains("seed")) config.refusal_sampling.params.seed = r["seed"].get<uint64_t>();
        config.refusal_sampling.max_attempts =
            r.value("max_attempts", config.refusal_sampling.max_attempts);
        config.refusal_in_flight = r.value("in_flight", config.refusal_in_flight);
        config.max_exhaustion_rate = r.value("max_exhaustion_rate", config.max_exhaustion_rate);
        if (r.contains("tasks")) config.defense_tasks = TasksFromJson(r["tasks"]);
    }

    if (j.contains("training")) config.training = TrainingConfig::FromJson(j["training"]);
    config.base_model = j.value("base_model", config.base_model);

    if (j.contains("backend")) {
        const auto& b = j["backend"];
        config.backend_kind = b.value("kind", config.backend_kind);
        config.mock_policy = b.value("policy", config.mock_policy);
        config.mock_marker = b.value("marker", config.mock_marker);
        config.remote_url = b.value("url", config.remote_url);
        config.local_model_ref = b.value("model", config.local_model_ref);
    }

    if (j.contains("evaluation")) {
        const auto& e = j["evaluation"];
        config.eval_params.temperature = e.value("temperature", config.eval_params.temperature);
        config.eval_params.max_new_tokens =
            e.value("max_new_tokens", config.eval_params.max_new_tokens);
        if (e.contains("seed")) config.eval_params.seed = e["seed"].get<uint64_t>();
        config.eval_in_flight = e.value("in_flight", config.eval_in_flight);
        if (e.contains("tasks")) config.eval_tasks = TasksFromJson(e["tasks"]);
    }

    // Fail early on inconsistent settings; path existence is checked by the
    // subcommand that actually reads the file.
    size_t prev = 0;
    for (size_t count : config.schedule) {
        if (count <= prev) ThrowValidation("config: schedule must be strictly increasing");
        prev = count;
    }
    if (config.backend_kind != "mock" && config.backend_kind != "remote" &&
        config.backend_kind != "local") {
        ThrowValidation("config: backend.kind must be mock, remote, or local");
    }
    config.training.Validate();
    return config;
}

TemplateRegistry ExperimentConfig::LoadTemplates() const {
    if (templates_path.empty()) return TemplateRegistry::Default();
    RequireFile(templates_path, "template registry");
    return TemplateRegistry::LoadFile(templates_path);
}

PrefixList ExperimentConfig::LoadPrefixes() const {
    if (prefix_list_path.empty()) {
        PrefixList list = DefaultPrefixList();
        list.mode = prefix_match_mode;
        return list;
    }
    RequireFile(prefix_list_path, "prefix list");
    return LoadPrefixList(prefix_list_path, prefix_match_mode);
}

std::unique_ptr<GenerationBackend> ExperimentConfig::MakeBackend(const std::string& model_ref) const {
    if (!model_ref.empty() || backend_kind == "local") {
        std::string ref = !model_ref.empty() ? model_ref : local_model_ref;
        if (ref.empty()) ThrowValidation("config: backend.model (or --model) required for local backend");
        return LocalBackend::FromModelRef(ref);
    }
    if (backend_kind == "mock") {
        return MockBackend::FromPolicyName(mock_policy, mock_marker);
    }
    RemoteBackendConfig remote = RemoteBackend::ConfigFromEnv();
    if (!remote_url.empty()) remote.base_url = remote_url;
    return std::make_unique<RemoteBackend>(std::move(remote));
}

MixSpec ExperimentConfig::BaseMixSpec() const {
    MixSpec spec;
    spec.mode = mix_mode;
    spec.affirmative_count = mix_mode == MixMode::kRefusalOnly ? 0 : affirmative_count;
    spec.tasks = mix_tasks;
    if (mix_mode == MixMode::kSingleTask || (mix_mode == MixMode::kRefusalOnly && single_task)) {
        spec.single_task = single_task;
    }
    spec.seed = seed;
    return spec;
}

}  // namespace docdefend

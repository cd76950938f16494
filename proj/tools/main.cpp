// docdefend: build refusal-training datasets from malicious long documents,
// compose instruction-tuning mixes, fine-tune a local model, and measure the
// safety/utility balance via task process rates.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "docdefend/pipeline.hpp"

namespace {

using docdefend::ExperimentConfig;

std::string OneLine(std::string message) {
    for (auto& c : message) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return message;
}

struct CommonArgs {
    std::string config_path;
    std::string output_dir;
    std::optional<uint64_t> seed;
    std::string backend_kind;
    std::string mock_policy;
    std::string mock_marker;

    void Register(CLI::App* cmd) {
        cmd->add_option("-c,--config", config_path, "experiment config file (JSON)")->required();
        cmd->add_option("--output-dir", output_dir, "override output_dir");
        cmd->add_option("--seed", seed, "override seed");
        cmd->add_option("--backend", backend_kind, "override backend kind (mock|remote|local)");
        cmd->add_option("--policy", mock_policy, "override mock policy");
        cmd->add_option("--marker", mock_marker, "override mock refuse-if-contains marker");
    }

    ExperimentConfig LoadConfig() const {
        ExperimentConfig config = ExperimentConfig::Load(config_path);
        if (!output_dir.empty()) config.output_dir = output_dir;
        if (seed) config.seed = *seed;
        if (!backend_kind.empty()) config.backend_kind = backend_kind;
        if (!mock_policy.empty()) config.mock_policy = mock_policy;
        if (!mock_marker.empty()) config.mock_marker = mock_marker;
        return config;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"defense dataset construction, instruction tuning, and safety/utility evaluation"};
    app.require_subcommand(1);

    CommonArgs ingest_args, defense_args, compose_args, train_args, eval_args, replay_args,
        report_args, cross_args;

    auto* ingest = app.add_subcommand("ingest", "build the document pools and test splits");
    ingest_args.Register(ingest);

    auto* build_defense =
        app.add_subcommand("build-defense", "generate refusal answers for the training pool");
    defense_args.Register(build_defense);

    auto* compose = app.add_subcommand("compose", "compose training datasets for the schedule");
    compose_args.Register(compose);

    auto* train = app.add_subcommand("train", "fine-tune adapters on a composed dataset");
    train_args.Register(train);
    std::string train_dataset, train_base, train_out;
    train->add_option("--dataset", train_dataset, "composed dataset file")->required();
    train->add_option("--base", train_base, "base model (tiny: spec or model file)");
    train->add_option("--out", train_out, "artifact output directory");

    auto* evaluate = app.add_subcommand("evaluate", "run the three test splits and report rates");
    eval_args.Register(evaluate);
    std::string eval_model, eval_trained_on, eval_replay_log;
    size_t eval_count = 0;
    bool eval_cross = false;
    std::string eval_adapters_dir;
    evaluate->add_option("--model", eval_model, "local model ref (artifact dir or model file)");
    evaluate->add_option("--trained-on", eval_trained_on, "label: training task or 'mixed'");
    evaluate->add_option("--count", eval_count, "label: defense example count");
    evaluate->add_option("--replay", eval_replay_log, "recompute reports from a response log");
    evaluate->add_flag("--cross-task", eval_cross, "cross-task matrix over the schedule");
    evaluate->add_option("--adapters-dir", eval_adapters_dir,
                         "directory of <Task>-n<count> adapter artifacts");

    auto* replay = app.add_subcommand("replay", "recompute reports from a stored response log");
    replay_args.Register(replay);
    std::string replay_log, replay_tag;
    replay->add_option("--log", replay_log, "response log (line-delimited records)")->required();
    replay->add_option("--tag", replay_tag, "output name tag");

    auto* report = app.add_subcommand("report", "render table CSVs from a long-format report");
    report_args.Register(report);
    std::string report_from;
    report->add_option("--from", report_from, "long-format report CSV")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) {
            auto outputs = docdefend::RunIngest(ingest_args.LoadConfig());
            std::cout << "documents: " << outputs.documents_path << "\n";
            for (const auto& path : outputs.manifest_paths) std::cout << "split: " << path << "\n";
        } else if (build_defense->parsed()) {
            auto outputs = docdefend::RunBuildDefense(defense_args.LoadConfig());
            std::cout << "defense dataset: " << outputs.dataset_path << " ("
                      << outputs.example_count << " examples)\n";
            if (!outputs.exhausted_path.empty()) {
                std::cout << "exhausted: " << outputs.exhausted_path << " ("
                          << outputs.exhausted_count << " pairs)\n";
            }
        } else if (compose->parsed()) {
            auto outputs = docdefend::RunCompose(compose_args.LoadConfig());
            for (const auto& path : outputs.dataset_paths) std::cout << "composed: " << path << "\n";
        } else if (train->parsed()) {
            auto artifact =
                docdefend::RunTrain(train_args.LoadConfig(), train_dataset, train_base, train_out);
            std::cout << "artifact: " << artifact.path << "\n";
            std::cout << "final loss: " << artifact.final_loss << "\n";
        } else if (evaluate->parsed()) {
            ExperimentConfig config = eval_args.LoadConfig();
            if (eval_cross) {
                auto outputs = docdefend::RunCrossTask(config, eval_adapters_dir);
                std::cout << "cross-task matrix: " << outputs.matrix_csv_path << "\n";
            } else if (!eval_replay_log.empty()) {
                auto outputs = docdefend::RunReplay(config, eval_replay_log, "");
                std::cout << "report: " << outputs.report_csv_path << "\n";
            } else {
                auto outputs =
                    docdefend::RunEvaluate(config, eval_model, eval_trained_on, eval_count);
                std::cout << "responses: " << outputs.responses_path << "\n";
                std::cout << "report: " << outputs.report_csv_path << "\n";
                for (const auto& path : outputs.table_csv_paths) {
                    std::cout << "table: " << path << "\n";
                }
            }
        } else if (replay->parsed()) {
            auto outputs = docdefend::RunReplay(replay_args.LoadConfig(), replay_log, replay_tag);
            std::cout << "responses: " << outputs.responses_path << "\n";
            std::cout << "report: " << outputs.report_csv_path << "\n";
        } else if (report->parsed()) {
            auto written = docdefend::RunReport(report_args.LoadConfig(), report_from);
            for (const auto& path : written) std::cout << "table: " << path << "\n";
        }
    } catch (const docdefend::Error& e) {
        std::cerr << "docdefend: error kind=" << docdefend::ErrorKindName(e.kind()) << ": "
                  << OneLine(e.what()) << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "docdefend: error kind=validation: " << OneLine(e.what()) << "\n";
        return 1;
    }
    return 0;
}

#ifndef DOCDEFEND_PIPELINE_HPP
#define DOCDEFEND_PIPELINE_HPP

#include <string>
#include <vector>

#include "docdefend/config.hpp"
#include "docdefend/evaluation.hpp"

namespace docdefend {

// File-coupled pipeline stages behind the CLI subcommands. Each stage reads
// its inputs from the previous stage's files, so data preparation, training
// and evaluation can run on different machines.

struct IngestOutputs {
    std::string documents_path;
    std::vector<std::string> manifest_paths;
};

IngestOutputs RunIngest(const ExperimentConfig& config);

struct BuildDefenseOutputs {
    std::string dataset_path;
    std::string exhausted_path;  // empty when nothing exhausted
    size_t example_count = 0;
    size_t exhausted_count = 0;
};

BuildDefenseOutputs RunBuildDefense(const ExperimentConfig& config);

struct ComposeOutputs {
    std::vector<std::string> dataset_paths;  // one per schedule entry
};

ComposeOutputs RunCompose(const ExperimentConfig& config);

AdapterArtifact RunTrain(const ExperimentConfig& config, const std::string& dataset_path,
                         const std::string& base_model_override,
                         const std::string& out_dir_override);

struct EvaluateOutputs {
    std::string responses_path;
    std::string report_csv_path;
    std::vector<std::string> table_csv_paths;
    EvalReport report;
};

EvaluateOutputs RunEvaluate(const ExperimentConfig& config, const std::string& model_ref,
                            const std::string& trained_on, size_t defense_count);

// Recomputes a report from a stored response log; no backend calls.
EvaluateOutputs RunReplay(const ExperimentConfig& config, const std::string& log_path,
                          const std::string& tag);

struct CrossTaskOutputs {
    std::string matrix_csv_path;
    CrossTaskMatrix matrix;
};

// Mock backends score every cell with the configured policy; the local
// backend expects adapter directories named <Task>-n<count> under
// adapters_dir.
CrossTaskOutputs RunCrossTask(const ExperimentConfig& config, const std::string& adapters_dir);

// Renders table CSVs from a stored long-format report.
std::vector<std::string> RunReport(const ExperimentConfig& config, const std::string& long_csv_path);

}  // namespace docdefend

#endif  // DOCDEFEND_PIPELINE_HPP

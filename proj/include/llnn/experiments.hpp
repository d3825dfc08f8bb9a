#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llnn/data.hpp"
#include "llnn/metrics.hpp"
#include "llnn/procedures.hpp"
#include "llnn/transfer.hpp"

namespace llnn {

inline constexpr const char* kExperimentIds[] = {"e1-nonforgetting", "e2-forward",    "e3-onealways-sweep",
                                                 "e4-confusion",     "e5-graceful",   "e6-backward"};

struct DataConfig {
    std::string source = "emnist";  // emnist | synthetic
    std::string dir;                 // empty: LLNN_DATA_DIR
    std::size_t synthetic_train_per_char = 200;
    std::size_t synthetic_test_per_char = 100;
    std::uint64_t synthetic_seed = 0;
};

struct BackwardConfig {
    std::vector<char> second{'O', 'Z'};
    std::vector<bool> links{true, false};
};

struct ExperimentConfig {
    std::string experiment;
    DataConfig data;
    std::vector<TaskSpec> sequence;
    std::size_t hidden_layers = kHiddenDepth;
    ExpansionPolicy expansion;
    std::vector<TransferStrategy> strategies;
    TrainConfig train;
    std::vector<std::uint64_t> seeds;
    std::string output_dir = "results";
    std::size_t jobs = 1;

    std::vector<bool> freeze{true, false};                 // e1
    std::vector<char> sweep;                               // e3, empty: every mapped non-negative character
    double gamma = 0.1;                                    // e4
    std::vector<char> confusion_targets{'O', 'Z'};         // e4
    std::vector<std::size_t> confusion_expansion{5, 10};  // e4
    std::vector<std::set<std::size_t>> forget_sets{{0}, {0, 1, 2}};  // e5
    std::size_t last_task_units = 1;                                  // e5
    BackwardConfig backward;                                          // e6

    void validate() const;
};

/// Defaults for one experiment id; throws ConfigError on unknown ids.
ExperimentConfig default_config(const std::string& experiment);

/// Applies the fields present in `j` on top of the defaults for
/// `j["experiment"]`. Errors name the offending field path.
ExperimentConfig parse_config(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// Loads the configured data source (synthetic or EMNIST directory).
DataSource load_source(const DataConfig& data);

/// Test matrices for every character, each forwarded once per evaluation.
class TestBank {
public:
    explicit TestBank(const DataSource& source) : source_(&source) {}

    const Matrix& samples(char c);
    /// AUC of each task in `tasks` (task index = position) on its test split.
    std::vector<double> evaluate(const LifelongNetwork& net, const std::vector<TaskSpec>& tasks);

private:
    const DataSource* source_;
    std::map<char, Matrix> cache_;
};

/// Hash of a head's outputs over a test split; used to check bit identity.
struct Fingerprint {
    std::string phase;
    std::string task;
    std::uint64_t hash = 0;
};

struct RunResult {
    RunLog log;
    std::vector<Fingerprint> fingerprints;
};

/// One seed of one experiment. `source` must outlive the call.
RunResult run_seed(const ExperimentConfig& cfg, const DataSource& source, std::uint64_t seed);

/// All seeds (up to cfg.jobs in parallel), then per-seed CSV files and
/// aggregate.json under `<output_dir>/<experiment>/`.
std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, const DataSource& source, bool write_files = true);

std::uint64_t fnv1a(const Matrix& values);

/// Label for a character in CSV output.
std::string char_label(char c);

}  // namespace llnn

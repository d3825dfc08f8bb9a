#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "llnn/errors.hpp"
#include "llnn/experiments.hpp"

using namespace llnn;

namespace {

struct CommonFlags {
    std::string config;
    std::string data_dir;
    std::string out;
    std::size_t n_seeds = 0;
    std::vector<std::uint64_t> seed_list;
    std::string data;
    std::size_t jobs = 0;
};

void add_common(CLI::App* sub, CommonFlags& f) {
    sub->add_option("--config", f.config, "JSON experiment config");
    sub->add_option("--data-dir", f.data_dir, "EMNIST directory (default: $LLNN_DATA_DIR)");
    sub->add_option("--out", f.out, "Output root directory");
    auto* n = sub->add_option("--seeds", f.n_seeds, "Run seeds 0..N-1");
    sub->add_option("--seed-list", f.seed_list, "Comma-separated seeds")->delimiter(',')->excludes(n);
    sub->add_option("--data", f.data, "Data source")->check(CLI::IsMember({"emnist", "synthetic"}));
    sub->add_option("--jobs", f.jobs, "Seeds run in parallel")->check(CLI::PositiveNumber);
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
}

ExperimentConfig base_config(const std::string& id, const CommonFlags& f) {
    ExperimentConfig cfg = default_config(id);
    if (!f.config.empty()) {
        nlohmann::json j = read_json(f.config);
        if (j.contains("experiment") && j["experiment"] != id) {
            throw ConfigError("config field 'experiment': file is for " + j["experiment"].dump() + ", not " + id);
        }
        j["experiment"] = id;
        cfg = parse_config(j);
    }
    if (!f.data_dir.empty()) cfg.data.dir = f.data_dir;
    if (!f.out.empty()) cfg.output_dir = f.out;
    if (!f.data.empty()) cfg.data.source = f.data;
    if (f.jobs > 0) cfg.jobs = f.jobs;
    if (f.n_seeds > 0) {
        cfg.seeds.clear();
        for (std::uint64_t s = 0; s < f.n_seeds; ++s) cfg.seeds.push_back(s);
    }
    if (!f.seed_list.empty()) cfg.seeds = f.seed_list;
    return cfg;
}

std::vector<char> parse_chars(const std::string& text, const char* flag) {
    std::vector<char> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.size() != 1) throw ConfigError(std::string(flag) + ": expected single characters, got '" + item + "'");
        out.push_back(item[0]);
    }
    return out;
}

std::vector<bool> parse_switch(const std::string& v) {
    if (v == "on") return {true};
    if (v == "off") return {false};
    return {true, false};
}

void print_summary(const ExperimentConfig& cfg, const std::vector<RunResult>& results) {
    const auto dir = std::filesystem::path(cfg.output_dir) / cfg.experiment;
    std::cout << cfg.experiment << ": " << results.size() << " seed(s), data=" << cfg.data.source << '\n';
    std::cout << "wrote " << (dir / "aggregate.json").string() << " and per-seed CSV files\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lifelong learning experiments"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string freeze = "both", strategy, sweep, forget, second, links = "both";
    double gamma = -1.0;
    std::vector<std::size_t> confusion_expansion;

    auto* e1 = app.add_subcommand("e1-nonforgetting", "Sequential learning with and without freezing");
    add_common(e1, flags);
    e1->add_option("--freeze", freeze, "on, off or both")->check(CLI::IsMember({"on", "off", "both"}));

    auto* e2 = app.add_subcommand("e2-forward", "Forward transfer strategies");
    add_common(e2, flags);
    e2->add_option("--strategy", strategy, "Comma-separated strategies");

    auto* e3 = app.add_subcommand("e3-onealways-sweep", "OneAlways vs AllRandomInit over fifth tasks");
    add_common(e3, flags);
    e3->add_option("--sweep", sweep, "Comma-separated characters (default: all mapped)");

    auto* e4 = app.add_subcommand("e4-confusion", "Confusion reduction");
    add_common(e4, flags);
    e4->add_option("--gamma", gamma, "Confusion threshold")->check(CLI::Range(0.0, 1.0));
    e4->add_option("--confusion-expansion", confusion_expansion, "Units added in stage 2")->delimiter(',');
    e4->add_option("--strategy", strategy, "Transfer strategy");

    auto* e5 = app.add_subcommand("e5-graceful", "Graceful forgetting");
    add_common(e5, flags);
    e5->add_option("--forget", forget, "Comma-separated task indices to forget");

    auto* e6 = app.add_subcommand("e6-backward", "Backward transfer");
    add_common(e6, flags);
    e6->add_option("--second", second, "Second task character(s), comma-separated");
    e6->add_option("--links", links, "on, off or both")->check(CLI::IsMember({"on", "off", "both"}));

    std::string dv_dir;
    auto* dv = app.add_subcommand("data-validate", "Check an EMNIST directory");
    dv->add_option("--data-dir", dv_dir, "EMNIST directory (default: $LLNN_DATA_DIR)");

    std::string sg_out;
    std::size_t sg_train = 200, sg_test = 100;
    std::uint64_t sg_seed = 0;
    auto* sg = app.add_subcommand("synth-gen", "Write synthetic glyphs in the EMNIST file layout");
    sg->add_option("--out", sg_out, "Output directory")->required();
    sg->add_option("--train-per-char", sg_train)->check(CLI::PositiveNumber);
    sg->add_option("--test-per-char", sg_test)->check(CLI::PositiveNumber);
    sg->add_option("--seed", sg_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (dv->parsed()) {
            DataConfig d;
            d.dir = dv_dir;
            const DataSource src = load_source(d);
            std::cout << "train " << src.train.count() << " images, test " << src.test.count() << " images, "
                      << src.mapping.entries().size() << " classes\n";
            for (char c : kRequiredChars) {
                std::cout << c << ": train " << src.indices_of(src.train, c).size() << ", test "
                          << src.indices_of(src.test, c).size() << '\n';
            }
            return 0;
        }
        if (sg->parsed()) {
            write_emnist_layout(synthetic_source(sg_train, sg_test, sg_seed), sg_out);
            std::cout << "wrote synthetic EMNIST layout to " << sg_out << '\n';
            return 0;
        }

        CLI::App* chosen = app.get_subcommands().front();
        ExperimentConfig cfg = base_config(chosen->get_name(), flags);
        if (e1->parsed() && e1->count("--freeze")) cfg.freeze = parse_switch(freeze);
        if ((e2->parsed() || e4->parsed()) && !strategy.empty()) {
            cfg.strategies.clear();
            std::stringstream ss(strategy);
            std::string item;
            while (std::getline(ss, item, ',')) cfg.strategies.push_back(parse_strategy(item));
        }
        if (e3->parsed() && !sweep.empty()) cfg.sweep = parse_chars(sweep, "--sweep");
        if (e4->parsed()) {
            if (gamma >= 0.0) cfg.gamma = gamma;
            if (!confusion_expansion.empty()) cfg.confusion_expansion = confusion_expansion;
        }
        if (e5->parsed() && !forget.empty()) {
            std::set<std::size_t> s;
            std::stringstream ss(forget);
            std::string item;
            while (std::getline(ss, item, ',')) {
                try {
                    std::size_t used = 0;
                    const unsigned long v = std::stoul(item, &used);
                    if (used != item.size()) throw std::invalid_argument(item);
                    s.insert(v);
                } catch (const std::exception&) {
                    throw ConfigError("--forget: expected task indices, got '" + item + "'");
                }
            }
            cfg.forget_sets = {s};
        }
        if (e6->parsed()) {
            if (!second.empty()) cfg.backward.second = parse_chars(second, "--second");
            if (e6->count("--links")) cfg.backward.links = parse_switch(links);
        }
        cfg.validate();
        const DataSource source = load_source(cfg.data);
        const auto results = run_experiment(cfg, source);
        print_summary(cfg, results);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}

#include <algorithm>
#include <cstdlib>
#include <functional>

#include "llnn/detail/overloaded.hpp"
#include "llnn/errors.hpp"
#include "llnn/experiments.hpp"

namespace llnn {

using nlohmann::json;
using detail::overloaded;

namespace {

std::vector<TaskSpec> specs(const std::string& chars, const std::vector<std::size_t>& n_pos) {
    std::vector<TaskSpec> out;
    for (std::size_t k = 0; k < chars.size(); ++k) {
        TaskSpec s;
        s.positive_char = chars[k];
        s.n_pos_train = n_pos[k];
        out.push_back(s);
    }
    return out;
}

std::vector<std::uint64_t> default_seeds() {
    std::vector<std::uint64_t> s(15);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = i;
    return s;
}

// Walks a JSON object, reporting errors with the full field path and
// rejecting keys nobody read.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        out = convert<T>(j_.at(key), at(key));
    }

    void object(const std::string& key, const std::function<void(Reader&)>& body) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        Reader sub(j_.at(key), at(key));
        body(sub);
        sub.finish();
    }

    const json* raw(const std::string& key) {
        if (!j_.contains(key)) return nullptr;
        seen_.insert(key);
        return &j_.at(key);
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) fail(at(key), "unknown field");
        }
    }

    [[noreturn]] static void fail(const std::string& path, const std::string& what) {
        throw ConfigError("config field '" + path + "': " + what);
    }

    template <typename T>
    static T convert(const json& v, const std::string& path) {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) fail(path, "expected a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) fail(path, "expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_same_v<T, char>) {
            if (!v.is_string() || v.get<std::string>().size() != 1) fail(path, "expected a single character");
            return v.get<std::string>()[0];
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
                fail(path, "expected a non-negative integer");
            }
            return v.get<T>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) fail(path, "expected a number");
            return v.get<T>();
        } else {
            if (!v.is_array()) fail(path, "expected an array");
            T out;
            for (std::size_t i = 0; i < v.size(); ++i) {
                out.insert(out.end(),
                           convert<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
            }
            return out;
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

TaskSpec parse_task(const json& j, const std::string& path) {
    TaskSpec s;
    Reader r(j, path);
    r.read("positive", s.positive_char);
    r.read("negatives", s.negative_chars);
    r.read("n_pos_train", s.n_pos_train);
    r.read("n_neg_train_per_char", s.n_neg_train_per_char);
    r.finish();
    return s;
}

json task_json(const TaskSpec& s) {
    json neg = json::array();
    for (char c : s.negative_chars) neg.push_back(std::string(1, c));
    return {{"positive", std::string(1, s.positive_char)},
            {"negatives", neg},
            {"n_pos_train", s.n_pos_train},
            {"n_neg_train_per_char", s.n_neg_train_per_char}};
}

ExpansionPolicy parse_expansion(Reader& r) {
    std::string kind;
    r.read("kind", kind);
    if (kind == "Constant") {
        expansion::Constant c;
        r.read("units", c.units);
        return c;
    }
    if (kind == "SimilarityScaled") {
        expansion::SimilarityScaled s;
        r.read("max_units", s.max_units);
        return s;
    }
    Reader::fail(r.at("kind"), "expected Constant or SimilarityScaled");
}

json chars_json(const std::vector<char>& chars) {
    json a = json::array();
    for (char c : chars) a.push_back(std::string(1, c));
    return a;
}

}  // namespace

ExperimentConfig default_config(const std::string& experiment) {
    ExperimentConfig c;
    c.experiment = experiment;
    c.seeds = default_seeds();
    c.expansion = expansion::Constant{25};
    c.strategies = {strategy::AllRandomInit{}};
    if (experiment == "e1-nonforgetting") {
        c.sequence = specs("0123OZ", {100, 100, 100, 100, 100, 100});
    } else if (experiment == "e2-forward") {
        c.sequence = specs("0123OZ", {100, 100, 100, 100, 10, 10});
        c.expansion = expansion::SimilarityScaled{25};
        c.strategies = {strategy::AllRandomInit{}, strategy::OneSimilar{0.5}, strategy::OneRandom{},
                        strategy::OneWorst{}};
    } else if (experiment == "e3-onealways-sweep") {
        // The last entry is the template for the swept fifth task.
        c.sequence = specs("0123O", {100, 100, 100, 100, 10});
        c.expansion = expansion::SimilarityScaled{25};
        c.strategies = {strategy::OneAlways{}, strategy::AllRandomInit{}};
    } else if (experiment == "e4-confusion") {
        c.sequence = specs("0123OZ", {100, 100, 100, 100, 100, 100});
        c.expansion = expansion::SimilarityScaled{25};
        c.strategies = {strategy::OneSimilar{0.5}};
    } else if (experiment == "e5-graceful") {
        c.sequence = specs("0123", {100, 100, 100, 100});
    } else if (experiment == "e6-backward") {
        // The second entry's character is replaced by each backward.second.
        c.sequence = specs("0O", {10, 50});
    } else {
        throw ConfigError("unknown experiment '" + experiment + "'");
    }
    return c;
}

ExperimentConfig parse_config(const json& j) {
    Reader root(j, "");
    std::string id;
    if (!root.has("experiment")) Reader::fail("experiment", "missing");
    root.read("experiment", id);
    ExperimentConfig c = default_config(id);

    root.object("data", [&](Reader& r) {
        r.read("source", c.data.source);
        r.read("dir", c.data.dir);
        r.object("synthetic", [&](Reader& s) {
            s.read("train_per_char", c.data.synthetic_train_per_char);
            s.read("test_per_char", c.data.synthetic_test_per_char);
            s.read("seed", c.data.synthetic_seed);
        });
    });
    if (const json* seq = root.raw("sequence")) {
        if (!seq->is_array()) Reader::fail("sequence", "expected an array");
        c.sequence.clear();
        for (std::size_t i = 0; i < seq->size(); ++i) {
            c.sequence.push_back(parse_task((*seq)[i], "sequence[" + std::to_string(i) + "]"));
        }
    }
    root.object("architecture", [&](Reader& r) { r.read("hidden_layers", c.hidden_layers); });
    root.object("expansion", [&](Reader& r) { c.expansion = parse_expansion(r); });
    if (const json* s = root.raw("strategies")) {
        const auto names = Reader::convert<std::vector<std::string>>(*s, "strategies");
        c.strategies.clear();
        for (std::size_t i = 0; i < names.size(); ++i) {
            try {
                c.strategies.push_back(parse_strategy(names[i]));
            } catch (const ConfigError& e) {
                Reader::fail("strategies[" + std::to_string(i) + "]", e.what());
            }
        }
    }
    root.object("train", [&](Reader& r) {
        r.read("batch_size", c.train.batch_size);
        r.read("epochs", c.train.epochs);
        r.object("adam", [&](Reader& a) {
            a.read("learning_rate", c.train.adam.learning_rate);
            a.read("beta1", c.train.adam.beta1);
            a.read("beta2", c.train.adam.beta2);
            a.read("epsilon", c.train.adam.epsilon);
        });
    });
    root.read("seeds", c.seeds);
    root.read("output_dir", c.output_dir);
    root.read("jobs", c.jobs);
    root.read("freeze", c.freeze);
    root.read("sweep", c.sweep);
    root.read("gamma", c.gamma);
    root.read("confusion_targets", c.confusion_targets);
    root.read("confusion_expansion", c.confusion_expansion);
    root.read("forget_sets", c.forget_sets);
    root.read("last_task_units", c.last_task_units);
    root.object("backward", [&](Reader& r) {
        r.read("second", c.backward.second);
        r.read("links", c.backward.links);
    });
    root.finish();
    c.validate();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["experiment"] = c.experiment;
    j["data"] = {{"source", c.data.source},
                 {"dir", c.data.dir},
                 {"synthetic",
                  {{"train_per_char", c.data.synthetic_train_per_char},
                   {"test_per_char", c.data.synthetic_test_per_char},
                   {"seed", c.data.synthetic_seed}}}};
    json seq = json::array();
    for (const auto& s : c.sequence) seq.push_back(task_json(s));
    j["sequence"] = seq;
    j["architecture"] = {{"hidden_layers", c.hidden_layers}};
    j["expansion"] = std::visit(
        overloaded{[](const expansion::Constant& e) { return json{{"kind", "Constant"}, {"units", e.units}}; },
                   [](const expansion::SimilarityScaled& e) {
                       return json{{"kind", "SimilarityScaled"}, {"max_units", e.max_units}};
                   }},
        c.expansion);
    json strategies = json::array();
    for (const auto& s : c.strategies) strategies.push_back(strategy_name(s));
    j["strategies"] = strategies;
    j["train"] = {{"batch_size", c.train.batch_size},
                  {"epochs", c.train.epochs},
                  {"adam",
                   {{"learning_rate", c.train.adam.learning_rate},
                    {"beta1", c.train.adam.beta1},
                    {"beta2", c.train.adam.beta2},
                    {"epsilon", c.train.adam.epsilon}}}};
    j["seeds"] = c.seeds;
    j["output_dir"] = c.output_dir;
    j["jobs"] = c.jobs;
    j["freeze"] = c.freeze;
    j["sweep"] = chars_json(c.sweep);
    j["gamma"] = c.gamma;
    j["confusion_targets"] = chars_json(c.confusion_targets);
    j["confusion_expansion"] = c.confusion_expansion;
    j["forget_sets"] = c.forget_sets;
    j["last_task_units"] = c.last_task_units;
    j["backward"] = {{"second", chars_json(c.backward.second)}, {"links", c.backward.links}};
    return j;
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& path, const std::string& what) { Reader::fail(path, what); };
    default_config(experiment);
    if (data.source != "emnist" && data.source != "synthetic") fail("data.source", "expected emnist or synthetic");
    if (data.synthetic_train_per_char < 1) fail("data.synthetic.train_per_char", "must be >= 1");
    if (data.synthetic_test_per_char < 1) fail("data.synthetic.test_per_char", "must be >= 1");
    if (sequence.empty()) fail("sequence", "must not be empty");
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        try {
            sequence[i].validate();
        } catch (const ConfigError& e) {
            fail("sequence[" + std::to_string(i) + "]", e.what());
        }
    }
    if (hidden_layers != kHiddenDepth) fail("architecture.hidden_layers", "only 2 hidden layers are supported");
    if (strategies.empty()) fail("strategies", "must not be empty");
    try {
        train.validate();
    } catch (const ConfigError& e) {
        fail("train", e.what());
    }
    if (seeds.empty()) fail("seeds", "must not be empty");
    if (jobs < 1) fail("jobs", "must be >= 1");
    if (output_dir.empty()) fail("output_dir", "must not be empty");

    auto need_tasks = [&](std::size_t n) {
        if (sequence.size() != n) fail("sequence", "expected " + std::to_string(n) + " tasks for " + experiment);
    };
    if (experiment == "e1-nonforgetting" && freeze.empty()) fail("freeze", "must not be empty");
    if (experiment == "e3-onealways-sweep") {
        if (sequence.size() < 2) fail("sequence", "needs base tasks plus a swept-task template");
        if (strategies.size() != 2) fail("strategies", "e3 compares exactly two strategies");
    }
    if (experiment == "e4-confusion") {
        if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma", "must be in [0, 1]");
        if (confusion_expansion.empty()) fail("confusion_expansion", "must not be empty");
        if (sequence.size() < 2) fail("sequence", "needs at least two tasks");
    }
    if (experiment == "e5-graceful") {
        if (sequence.size() < 2) fail("sequence", "needs at least two tasks");
        if (forget_sets.empty()) fail("forget_sets", "must not be empty");
        for (std::size_t i = 0; i < forget_sets.size(); ++i) {
            const std::string path = "forget_sets[" + std::to_string(i) + "]";
            if (forget_sets[i].empty()) fail(path, "must not be empty");
            if (*forget_sets[i].rbegin() + 1 >= sequence.size()) fail(path, "may only name tasks before the last");
        }
        if (last_task_units < 1) fail("last_task_units", "must be >= 1");
    }
    if (experiment == "e6-backward") {
        need_tasks(2);
        if (backward.second.empty()) fail("backward.second", "must not be empty");
        if (backward.links.empty()) fail("backward.links", "must not be empty");
    }
}

DataSource load_source(const DataConfig& data) {
    if (data.source == "synthetic") {
        return synthetic_source(data.synthetic_train_per_char, data.synthetic_test_per_char, data.synthetic_seed);
    }
    std::string dir = data.dir;
    if (dir.empty()) {
        if (const char* env = std::getenv("LLNN_DATA_DIR")) dir = env;
    }
    if (dir.empty()) throw ConfigError("no EMNIST directory: pass --data-dir or set LLNN_DATA_DIR");
    return load_emnist_dir(dir);
}

}  // namespace llnn

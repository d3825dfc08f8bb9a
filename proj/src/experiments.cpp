#include "llnn/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <thread>

#include "llnn/errors.hpp"
#include "llnn/random.hpp"

namespace llnn {

namespace {

constexpr std::uint64_t kNetworkStream = 1;
constexpr std::uint64_t kTaskStream = 1000;
constexpr std::uint64_t kShuffleStream = 2000;

}  // namespace

std::string char_label(char c) { return std::string(1, c); }

std::uint64_t fnv1a(const Matrix& values) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
    const std::size_t n = static_cast<std::size_t>(values.size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

const Matrix& TestBank::samples(char c) {
    auto it = cache_.find(c);
    if (it != cache_.end()) return it->second;
    const auto idx = source_->indices_of(source_->test, static_cast<char32_t>(c));
    if (idx.empty()) throw ContractError(std::string("test split has no samples of '") + c + "'");
    return cache_.emplace(c, to_inputs(source_->test, idx)).first->second;
}

std::vector<double> TestBank::evaluate(const LifelongNetwork& net, const std::vector<TaskSpec>& tasks) {
    if (tasks.size() > net.num_tasks()) throw ContractError("TestBank::evaluate: more task specs than heads");
    std::map<char, Matrix> probs;
    auto probs_of = [&](char c) -> const Matrix& {
        auto it = probs.find(c);
        if (it == probs.end()) it = probs.emplace(c, net.forward_batch(samples(c))).first;
        return it->second;
    };
    std::vector<double> out;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const auto r = static_cast<Eigen::Index>(t);
        std::vector<double> pos, neg;
        const Matrix& p = probs_of(tasks[t].positive_char);
        for (Eigen::Index b = 0; b < p.cols(); ++b) pos.push_back(p(r, b));
        for (char c : tasks[t].negative_chars) {
            const Matrix& q = probs_of(c);
            for (Eigen::Index b = 0; b < q.cols(); ++b) neg.push_back(q(r, b));
        }
        out.push_back(auc(std::span<const double>(pos), std::span<const double>(neg)));
    }
    return out;
}

namespace {

struct Context {
    const ExperimentConfig& cfg;
    const DataSource& source;
    std::uint64_t seed;
    TestBank bank;
    RunResult result;
    std::string variant;
    std::uint64_t phases = 0;

    Context(const ExperimentConfig& c, const DataSource& s, std::uint64_t sd) : cfg(c), source(s), seed(sd), bank(s) {
        result.log.seed = sd;
    }

    // Variants of one seed replay the same shuffles and initial weights.
    void start_variant(std::string name) {
        variant = std::move(name);
        phases = 0;
    }

    std::string phase(const std::string& base) const { return variant.empty() ? base : variant + "/" + base; }

    TrainConfig train_config() {
        TrainConfig t = cfg.train;
        t.shuffle_seed = mix_seed(seed, kShuffleStream + phases++);
        return t;
    }

    TaskDataset task(const TaskSpec& spec, std::size_t position) const {
        return build_task(source, spec, mix_seed(seed, kTaskStream + position));
    }

    LifelongNetwork network() const { return LifelongNetwork(kImagePixels, mix_seed(seed, kNetworkStream)); }

    void log_aucs(const LifelongNetwork& net, const std::vector<TaskSpec>& tasks, const std::string& label, int epoch,
                  EpochRecord* rec = nullptr) {
        const auto aucs = bank.evaluate(net, tasks);
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            result.log.add(phase(label), epoch, char_label(tasks[t].positive_char), "auc", aucs[t]);
            if (rec) rec->per_task_auc[t] = aucs[t];
        }
    }

    // Logs AUC of every listed task and the training loss after each epoch.
    // `tasks` is read at call time so it may grow between epochs.
    // With `qualify`, the procedure's own phase name is prepended.
    EpochHook hook(const std::vector<TaskSpec>& tasks, std::string label, std::string loss_task,
                   int epoch_offset = 0, bool qualify = false) {
        return [this, &tasks, label, loss_task, epoch_offset, qualify](const LifelongNetwork& net, EpochRecord& rec) {
            const int epoch = rec.epoch + epoch_offset;
            const std::string name = qualify ? rec.phase + ":" + label : label;
            log_aucs(net, tasks, name, epoch, &rec);
            result.log.add(phase(name), epoch, loss_task, "loss", rec.loss);
        };
    }

    void fingerprint(const LifelongNetwork& net, const std::vector<TaskSpec>& tasks, const std::string& label) {
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            const std::vector<TaskId> only{TaskId{t}};
            Matrix outputs(1, 0);
            auto append = [&](char c) {
                const Matrix p = net.forward_batch(bank.samples(c), &only);
                Matrix grown(1, outputs.cols() + p.cols());
                grown << outputs, p.row(static_cast<Eigen::Index>(t));
                outputs = std::move(grown);
            };
            append(tasks[t].positive_char);
            for (char c : tasks[t].negative_chars) append(c);
            result.fingerprints.push_back({phase(label), char_label(tasks[t].positive_char), fnv1a(outputs)});
        }
    }

    // Learns `specs` in order; records AUC after every epoch.
    LifelongNetwork learn_sequence(const std::vector<TaskSpec>& specs, std::vector<TaskSpec>& learned,
                                   std::vector<TaskDataset>& data, const TransferStrategy& strategy,
                                   const ExpansionPolicy& policy, bool freeze, bool fingerprints) {
        LifelongNetwork net = network();
        for (std::size_t k = 0; k < specs.size(); ++k) {
            learn_one(net, specs[k], k, learned, data, strategy, policy, freeze);
            if (fingerprints) fingerprint(net, learned, "learn:" + char_label(specs[k].positive_char));
        }
        return net;
    }

    void learn_one(LifelongNetwork& net, const TaskSpec& spec, std::size_t position, std::vector<TaskSpec>& learned,
                   std::vector<TaskDataset>& data, const TransferStrategy& strategy, const ExpansionPolicy& policy,
                   bool freeze) {
        data.push_back(task(spec, position));
        learned.push_back(spec);
        const std::string label = "learn:" + char_label(spec.positive_char);
        LearnOptions opts;
        opts.freeze_previous = freeze;
        opts.phase = label;
        learn_new_task(net, data.back(), strategy, policy, train_config(), opts,
                       hook(learned, label, char_label(spec.positive_char)));
    }
};

template <typename T>
std::string variant_name(const std::vector<T>& all, const std::string& name) {
    return all.size() > 1 ? name : std::string();
}

void run_e1(Context& ctx) {
    for (bool freeze : ctx.cfg.freeze) {
        ctx.start_variant(variant_name(ctx.cfg.freeze, freeze ? "freeze" : "nofreeze"));
        std::vector<TaskSpec> learned;
        std::vector<TaskDataset> data;
        ctx.learn_sequence(ctx.cfg.sequence, learned, data, ctx.cfg.strategies.front(), ctx.cfg.expansion, freeze,
                           true);
    }
}

void run_e2(Context& ctx) {
    for (const auto& strategy : ctx.cfg.strategies) {
        ctx.start_variant(variant_name(ctx.cfg.strategies, strategy_name(strategy)));
        std::vector<TaskSpec> learned;
        std::vector<TaskDataset> data;
        ctx.learn_sequence(ctx.cfg.sequence, learned, data, strategy, ctx.cfg.expansion, true, false);
    }
}

std::vector<char> sweep_chars(const ExperimentConfig& cfg, const DataSource& source) {
    const TaskSpec& tmpl = cfg.sequence.back();
    if (!cfg.sweep.empty()) return cfg.sweep;
    std::vector<char> out;
    for (const auto& [c, cls] : source.mapping.entries()) {
        if (c > 0x7f) continue;
        const char ch = static_cast<char>(c);
        if (std::find(tmpl.negative_chars.begin(), tmpl.negative_chars.end(), ch) != tmpl.negative_chars.end()) {
            continue;
        }
        // The synthetic source maps every class but renders only a few.
        if (source.indices_of(source.train, c).empty() || source.indices_of(source.test, c).empty()) continue;
        out.push_back(ch);
    }
    return out;
}

void run_e3(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const std::vector<TaskSpec> base(cfg.sequence.begin(), cfg.sequence.end() - 1);
    std::vector<TaskSpec> learned;
    std::vector<TaskDataset> data;
    // The base tasks are shared by both strategies and every swept character.
    ctx.start_variant("");
    const LifelongNetwork base_net =
        ctx.learn_sequence(base, learned, data, strategy::AllRandomInit{}, cfg.expansion, true, false);

    for (char c : sweep_chars(cfg, ctx.source)) {
        TaskSpec spec = cfg.sequence.back();
        spec.positive_char = c;
        spec.validate();
        const TaskDataset fifth = ctx.task(spec, base.size());
        std::vector<double> final_auc;
        const TrainConfig tc = ctx.train_config();
        for (const auto& strategy : cfg.strategies) {
            LifelongNetwork net = base_net;
            ctx.variant = strategy_name(strategy);
            LearnOptions opts;
            opts.phase = "sweep";
            learn_new_task(net, fifth, strategy, cfg.expansion, tc, opts);
            std::vector<TaskSpec> tasks = base;
            tasks.push_back(spec);
            const double value = ctx.bank.evaluate(net, tasks).back();
            ctx.result.log.add(ctx.phase("sweep"), static_cast<int>(cfg.train.epochs), char_label(c), "auc", value);
            final_auc.push_back(value);
        }
        ctx.variant.clear();
        ctx.result.log.add("delta:" + strategy_name(cfg.strategies[0]) + "-" + strategy_name(cfg.strategies[1]),
                           static_cast<int>(cfg.train.epochs), char_label(c), "auc", final_auc[0] - final_auc[1]);
    }
}

void run_e4(Context& ctx) {
    const auto& cfg = ctx.cfg;
    for (std::size_t amount : cfg.confusion_expansion) {
        ctx.start_variant(variant_name(cfg.confusion_expansion, "expansion=" + std::to_string(amount)));
        LifelongNetwork net = ctx.network();
        std::vector<TaskSpec> learned;
        std::vector<TaskDataset> data;
        data.reserve(cfg.sequence.size());
        for (std::size_t k = 0; k < cfg.sequence.size(); ++k) {
            const TaskSpec& spec = cfg.sequence[k];
            ctx.learn_one(net, spec, k, learned, data, cfg.strategies.front(), cfg.expansion, true);
            const char c = spec.positive_char;
            if (k == 0 || std::find(cfg.confusion_targets.begin(), cfg.confusion_targets.end(), c) ==
                              cfg.confusion_targets.end()) {
                continue;
            }
            // Partner: the previous task most confused with the new one.
            const TaskId j{k};
            std::size_t partner = 0;
            double worst = -1.0;
            for (std::size_t i = 0; i < k; ++i) {
                const double v = measure_confusion(net, TaskId{i}, j, data[i].test_pos, data[k].test_pos);
                if (v > worst) {
                    worst = v;
                    partner = i;
                }
            }
            const std::string label = "confusion:" + char_label(c);
            const std::string pair = char_label(learned[partner].positive_char) + "/" + char_label(c);
            const std::string loss_task = pair;
            const TrainConfig tc = ctx.train_config();
            const auto report = reduce_confusion(net, TaskId{partner}, j, cfg.gamma, amount, data[partner], data[k],
                                                 tc, ctx.hook(learned, char_label(c), loss_task, 0, true));
            ctx.result.log.add(ctx.phase(label), 0, pair, "confusion", report.initial);
            ctx.result.log.add(ctx.phase(label), 1, pair, "confusion", report.post_stage1);
            ctx.result.log.add(ctx.phase(label), 2, pair, "confusion", report.post_stage2);
        }
    }
}

void run_e5(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const std::vector<TaskSpec> base(cfg.sequence.begin(), cfg.sequence.end() - 1);
    const TaskSpec& last = cfg.sequence.back();
    const int epochs = static_cast<int>(cfg.train.epochs);
    for (const auto& forget : cfg.forget_sets) {
        std::string name = "forget=";
        for (std::size_t t : forget) name += (name.back() == '=' ? "" : ",") + std::to_string(t);
        ctx.start_variant(variant_name(cfg.forget_sets, name));
        std::vector<TaskSpec> learned;
        std::vector<TaskDataset> data;
        LifelongNetwork net =
            ctx.learn_sequence(base, learned, data, cfg.strategies.front(), cfg.expansion, true, false);

        data.push_back(ctx.task(last, base.size()));
        learned.push_back(last);
        const std::string loss_task = char_label(last.positive_char);
        LearnOptions opts;
        opts.phase = "pre-forget";
        const auto result = learn_new_task(net, data.back(), cfg.strategies.front(),
                                           expansion::Constant{cfg.last_task_units}, ctx.train_config(), opts,
                                           ctx.hook(learned, "pre-forget", loss_task));
        graceful_forget(net, forget);
        train(net, {result.task.index}, task_training_set(data.back(), result.task), ctx.train_config(),
              "post-forget", ctx.hook(learned, "post-forget", loss_task, epochs));
    }
}

void run_e6(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const bool many = cfg.backward.second.size() * cfg.backward.links.size() > 1;
    for (char second : cfg.backward.second) {
        for (bool links : cfg.backward.links) {
            ctx.start_variant(many ? char_label(second) + (links ? "+links" : "-nolinks") : std::string());
            std::vector<TaskSpec> specs = cfg.sequence;
            specs[1].positive_char = second;
            specs[1].validate();
            std::vector<TaskSpec> learned;
            std::vector<TaskDataset> data;
            LifelongNetwork net =
                ctx.learn_sequence(specs, learned, data, cfg.strategies.front(), cfg.expansion, true, false);
            const std::vector<TaskSpec> older{specs[0]};
            ctx.log_aucs(net, older, "pre-link", 0);
            BackwardOptions opts;
            opts.add_links = links;
            backward_transfer(net, TaskId{0}, TaskId{1}, data[0], ctx.train_config(), opts,
                              ctx.hook(older, "backward", char_label(specs[0].positive_char)));
        }
    }
}

}  // namespace

RunResult run_seed(const ExperimentConfig& cfg, const DataSource& source, std::uint64_t seed) {
    cfg.validate();
    Context ctx(cfg, source, seed);
    const std::string& id = cfg.experiment;
    if (id == "e1-nonforgetting") run_e1(ctx);
    else if (id == "e2-forward") run_e2(ctx);
    else if (id == "e3-onealways-sweep") run_e3(ctx);
    else if (id == "e4-confusion") run_e4(ctx);
    else if (id == "e5-graceful") run_e5(ctx);
    else if (id == "e6-backward") run_e6(ctx);
    else throw ConfigError("unknown experiment '" + id + "'");
    return std::move(ctx.result);
}

std::vector<RunResult> run_experiment(const ExperimentConfig& cfg, const DataSource& source, bool write_files) {
    cfg.validate();
    std::vector<RunResult> results(cfg.seeds.size());
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) {
            try {
                results[i] = run_seed(cfg, source, cfg.seeds[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::min(cfg.jobs, cfg.seeds.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    if (write_files) {
        const std::filesystem::path dir = std::filesystem::path(cfg.output_dir) / cfg.experiment;
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
        std::vector<RunLog> logs;
        for (const auto& r : results) {
            export_csv(r.log, dir / ("seed_" + std::to_string(r.log.seed) + ".csv"));
            logs.push_back(r.log);
        }
        const std::filesystem::path agg = dir / "aggregate.json";
        std::ofstream out(agg, std::ios::binary);
        if (!out) throw IoError("cannot open " + agg.string());
        out << aggregate_json(cfg.experiment, logs).dump(2) << '\n';
        if (!out) throw IoError("write failed for " + agg.string());
    }
    return results;
}

}  // namespace llnn

// ctrlp: train and evaluate the 1D-CNN slice-location regressor.
//
//   ctrlp cv        --data slices.csv --folds 5 --seed 7 [--report out.json]
//   ctrlp train     --data slices.csv --out model.ckpt [--fold F]
//   ctrlp predict   --checkpoint model.ckpt --data rows.csv
//   ctrlp gradcheck [--tolerance 1e-4] [--inject-fault]
//   ctrlp baseline  --data slices.csv --k 5 --folds 5 --seed 7

#include "ctrlp/commands.hpp"
#include "ctrlp/error.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace {

struct Flag {
    std::string name;   // command-line spelling, without dashes
    std::string key;    // run-config key
    std::string help;
};

const std::vector<Flag> kSharedFlags = {
    {"data", "data", "input CSV"},
    {"config", "", "key=value config file (flags override it)"},
    {"seed", "seed", "fold-plan seed"},
    {"model-seed", "model_seed", "network/batch/dropout seed"},
    {"out", "out", "output path (checkpoint for train)"},
    {"report", "report", "write the JSON report here instead of stdout"},
    {"log", "log", "line-delimited JSON training log"},
    {"folds", "folds", "number of patient-grouped folds"},
    {"fold", "fold", "cv: run only this fold; train: hold this fold out"},
    {"norm", "norm", "per-feature|per-sample"},
    {"parallel-folds", "parallel_folds", "folds trained concurrently"},
};

const std::vector<Flag> kTrainingFlags = {
    {"max-steps", "max_steps", "Adam updates per training run"},
    {"batch-size", "batch_size", "mini-batch size"},
    {"lambda", "lambda", "L2 penalty on weights"},
    {"lr", "lr", "base learning rate"},
    {"decay-step", "decay_step", "steps between learning-rate halvings"},
    {"decay-rate", "decay_rate", "staircase decay factor"},
    {"init", "init", "he|fixed:STD"},
    {"train-subsample", "train_subsample", "train on N random training rows (0: all)"},
    {"output-relu", "output_relu", "on|off: ReLU on the output unit"},
    {"log-every", "log_every", "progress line interval on stderr"},
};

struct Command {
    CLI::App* app = nullptr;
    std::map<std::string, std::string> raw; // flag name -> value
    bool inject_fault = false;
};

void add_flags(Command& cmd, const std::vector<Flag>& flags) {
    for (const auto& f : flags) cmd.app->add_option("--" + f.name, cmd.raw[f.name], f.help);
}

int dispatch(const std::string& name, Command& cmd) {
    ctrlp::RunConfig config;
    if (cmd.app->count("--config")) config.merge_file(cmd.raw["config"]);
    std::map<std::string, std::string> key_of;
    for (const auto* list : {&kSharedFlags, &kTrainingFlags})
        for (const auto& f : *list) key_of[f.name] = f.key;
    key_of["k"] = "k";
    key_of["tolerance"] = "tolerance";
    key_of["checkpoint"] = "checkpoint";
    for (const auto& [flag, value] : cmd.raw) {
        if (flag == "config" || !cmd.app->count("--" + flag)) continue;
        config.set(key_of.at(flag), value);
    }
    if (cmd.inject_fault) config.set("inject_fault", "on");
    const ctrlp::ResolvedConfig resolved = ctrlp::resolve(config);

    if (name == "cv") return ctrlp::cmd_cv(resolved, std::cout, std::cerr);
    if (name == "train") return ctrlp::cmd_train(resolved, std::cout, std::cerr);
    if (name == "predict") return ctrlp::cmd_predict(resolved, std::cout, std::cerr);
    if (name == "gradcheck") return ctrlp::cmd_gradcheck(resolved, std::cout, std::cerr);
    return ctrlp::cmd_baseline(resolved, std::cout, std::cerr);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"1D-CNN regression of CT slice axial location"};
    app.require_subcommand(1);

    std::map<std::string, Command> commands;
    auto make = [&](const std::string& name, const std::string& help) -> Command& {
        Command& c = commands[name];
        c.app = app.add_subcommand(name, help);
        add_flags(c, kSharedFlags);
        return c;
    };
    add_flags(make("cv", "patient-grouped cross-validation of the CNN"), kTrainingFlags);
    add_flags(make("train", "train one network and save a checkpoint"), kTrainingFlags);
    Command& predict = make("predict", "predict locations for feature rows");
    predict.app->add_option("--checkpoint", predict.raw["checkpoint"], "checkpoint file")->required();
    Command& grad = make("gradcheck", "finite-difference gradient verification");
    grad.app->add_option("--tolerance", grad.raw["tolerance"], "max relative error");
    grad.app->add_flag("--inject-fault", grad.inject_fault, "negate conv weight gradients (must fail)");
    Command& knn = make("baseline", "KNN regression baseline under the same folds");
    knn.app->add_option("--k", knn.raw["k"], "neighbours");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ctrlp::exit_code::usage;
    }

    for (auto& [name, cmd] : commands) {
        if (!*cmd.app) continue;
        return ctrlp::run_guarded([&] { return dispatch(name, cmd); }, std::cerr);
    }
    return ctrlp::exit_code::usage;
}

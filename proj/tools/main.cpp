#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "unitprompt/unitprompt.hpp"

namespace up = unitprompt;

int main(int argc, char** argv) {
    CLI::App app{"prompt tuning for a frozen discrete-unit language model"};
    app.require_subcommand(0, 1);
    bool dump_config = false;
    app.add_flag("--dump-config", dump_config, "print every config key with its default and exit");

    std::string config_path, out_path, history_path;
    std::string ulm_ckpt, tuned_ckpt, dataset_dir, verbalizer_path;

    auto* gen_data = app.add_subcommand("gen-data", "generate a synthetic task dataset");
    gen_data->add_option("--config", config_path, "experiment config file");
    gen_data->add_option("--out", out_path, "output dataset directory")->required();

    auto* pretrain = app.add_subcommand("pretrain", "pretrain the unit language model");
    pretrain->add_option("--config", config_path, "experiment config file");
    pretrain->add_option("--out", out_path, "output model checkpoint")->required();
    pretrain->add_option("--history", history_path, "training-loss CSV");

    std::string features_path, codebook_in, codebook_out, units_out;
    int k = 100, kmeans_iters = 50;
    uint64_t kmeans_seed = 17;
    auto* quantize = app.add_subcommand("quantize", "fit a codebook and/or quantize features");
    quantize->add_option("--features", features_path, "feature records, one per line")->required();
    quantize->add_option("--codebook", codebook_in, "existing codebook checkpoint to apply");
    quantize->add_option("--codebook-out", codebook_out, "where to store a freshly fitted codebook");
    quantize->add_option("--units-out", units_out, "write deduplicated unit sequences here");
    quantize->add_option("--k", k, "number of clusters for fitting");
    quantize->add_option("--iters", kmeans_iters, "k-means iteration cap");
    quantize->add_option("--seed", kmeans_seed, "k-means init seed");

    int v_units = 100;
    bool random_assignment = false;
    uint64_t verb_seed = 23;
    auto* build_verb = app.add_subcommand("build-verbalizer", "map task labels to units");
    build_verb->add_option("--dataset", dataset_dir, "dataset directory")->required();
    build_verb->add_option("--out", out_path, "output verbalizer file")->required();
    build_verb->add_option("--v-units", v_units, "unit vocabulary size");
    build_verb->add_flag("--random", random_assignment, "random unit assignment ablation");
    build_verb->add_option("--seed", verb_seed, "seed for --random");

    auto* tune = app.add_subcommand("tune", "tune prompts (or fine-tune the LM) on a task");
    tune->add_option("--config", config_path, "experiment config file");
    tune->add_option("--ulm", ulm_ckpt, "pretrained model checkpoint")->required();
    tune->add_option("--dataset", dataset_dir, "dataset directory")->required();
    tune->add_option("--verbalizer", verbalizer_path, "verbalizer file")->required();
    tune->add_option("--out", out_path, "output checkpoint")->required();
    tune->add_option("--history", history_path, "training history CSV");

    std::string split = "test", metrics_path;
    auto* eval = app.add_subcommand("eval", "decode a split and append metrics to a CSV");
    eval->add_option("--config", config_path, "experiment config file");
    eval->add_option("--ulm", ulm_ckpt, "pretrained model checkpoint");
    eval->add_option("--tuned", tuned_ckpt, "prompt or fine-tuned model checkpoint")->required();
    eval->add_option("--dataset", dataset_dir, "dataset directory")->required();
    eval->add_option("--verbalizer", verbalizer_path, "verbalizer file")->required();
    eval->add_option("--split", split, "train, valid, or test");
    eval->add_option("--metrics", metrics_path, "metrics CSV to append to")->required();

    std::string units_text;
    int max_new = 64;
    auto* generate = app.add_subcommand("generate", "decode one unit sequence to labels");
    generate->add_option("--ulm", ulm_ckpt, "model checkpoint")->required();
    generate->add_option("--prompts", tuned_ckpt, "prompt checkpoint (omit for FT-LM models)");
    generate->add_option("--verbalizer", verbalizer_path, "verbalizer file")->required();
    generate->add_option("--units", units_text, "comma-separated input units")->required();
    generate->add_option("--max-new", max_new, "generation budget");

    std::string results_dir, report_out = "report";
    auto* report = app.add_subcommand("report", "aggregate metrics CSVs into trend tables");
    report->add_option("--results", results_dir, "directory holding metrics CSVs")->required();
    report->add_option("--out", report_out, "output directory for the tables");

    CLI11_PARSE(app, argc, argv);

    try {
        if (dump_config) {
            up::KeyValueConfig empty;
            std::cout << up::dump_experiment(up::resolve_experiment(empty));
            return 0;
        }
        if (gen_data->parsed()) return up::cmd_gen_data(config_path, out_path);
        if (pretrain->parsed()) return up::cmd_pretrain(config_path, out_path, history_path);
        if (quantize->parsed())
            return up::cmd_quantize(features_path, codebook_in, codebook_out, units_out, k,
                                    kmeans_iters, kmeans_seed);
        if (build_verb->parsed())
            return up::cmd_build_verbalizer(dataset_dir, out_path, v_units, random_assignment,
                                            verb_seed);
        if (tune->parsed())
            return up::cmd_tune(config_path, ulm_ckpt, dataset_dir, verbalizer_path, out_path,
                                history_path);
        if (eval->parsed())
            return up::cmd_eval(config_path, ulm_ckpt, tuned_ckpt, dataset_dir, verbalizer_path,
                                split, metrics_path);
        if (generate->parsed())
            return up::cmd_generate(ulm_ckpt, tuned_ckpt, verbalizer_path, units_text, max_new);
        if (report->parsed()) return up::cmd_report(results_dir, report_out);
    } catch (const std::exception& e) {
        std::cerr << "unitprompt: " << e.what() << "\n";
        return 1;
    }
    std::cerr << app.help();
    return 1;
}

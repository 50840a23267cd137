#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "unitprompt/unitprompt.hpp"

using namespace unitprompt;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("unitprompt_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string file_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_bytes(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(out.good());
    out.write(bytes.data(), long(bytes.size()));
}

ULMConfig tiny_config() {
    ULMConfig cfg;
    cfg.L = 2;
    cfg.d = 32;
    cfg.h = 4;
    cfg.d_ff = 64;
    cfg.t_max = 144;
    return cfg;
}

// Sets an environment variable for one scope and restores the old state after.
struct EnvGuard {
    std::string name;
    std::string old_value;
    bool had_old;

    EnvGuard(const std::string& n, const std::string& value) : name(n) {
        const char* prev = std::getenv(n.c_str());
        had_old = prev != nullptr;
        if (had_old) old_value = prev;
        setenv(n.c_str(), value.c_str(), 1);
    }
    ~EnvGuard() {
        if (had_old)
            setenv(name.c_str(), old_value.c_str(), 1);
        else
            unsetenv(name.c_str());
    }
};

}  // namespace

TEST_CASE("payload checksum matches published reference values") {
    auto hash = [](const std::string& s) {
        return fnv1a64(reinterpret_cast<const unsigned char*>(s.data()), s.size());
    };
    REQUIRE(hash("") == 0xcbf29ce484222325ULL);
    REQUIRE(hash("a") == 0xaf63dc4c8601ec8cULL);
    REQUIRE(hash("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("model checkpoints round-trip byte-exactly") {
    fs::path dir = scratch_dir("ckpt_ulm");
    ULM<float> m = ulm_init<float>(tiny_config(), 3);
    m.set_trainable(false);

    fs::path p1 = dir / "m1.ckpt";
    fs::path p2 = dir / "m2.ckpt";
    save_checkpoint(p1.string(), checkpoint_of(m));
    ULM<float> m2 = ulm_from_checkpoint(load_checkpoint(p1.string()));
    save_checkpoint(p2.string(), checkpoint_of(m2));

    REQUIRE(file_bytes(p1) == file_bytes(p2));
    REQUIRE(m2.frozen());
    REQUIRE(m2.config.d == m.config.d);
    REQUIRE(m2.config.t_max == m.config.t_max);

    // values survive bit-for-bit, so generation is unchanged too
    Checkpoint a = checkpoint_of(m), b = checkpoint_of(m2);
    REQUIRE(a.tensors.size() == b.tensors.size());
    for (size_t i = 0; i < a.tensors.size(); ++i) {
        REQUIRE(a.tensors[i].first == b.tensors[i].first);
        REQUIRE(std::memcmp(a.tensors[i].second.data(), b.tensors[i].second.data(),
                            a.tensors[i].second.size() * sizeof(float)) == 0);
    }
}

TEST_CASE("prompt and codebook checkpoints round-trip") {
    fs::path dir = scratch_dir("ckpt_prompt");
    ULMConfig cfg = tiny_config();

    for (PromptMode mode : {PromptMode::input, PromptMode::deep}) {
        PromptSet<float> p = prompt_init<float>(mode, 3, cfg, 21);
        fs::path p1 = dir / (prompt_mode_name(mode) + "1.ckpt");
        fs::path p2 = dir / (prompt_mode_name(mode) + "2.ckpt");
        save_checkpoint(p1.string(), checkpoint_of(p));
        PromptSet<float> q = prompts_from_checkpoint(load_checkpoint(p1.string()));
        save_checkpoint(p2.string(), checkpoint_of(q));
        REQUIRE(file_bytes(p1) == file_bytes(p2));
        REQUIRE(q.mode == mode);
        REQUIRE(q.l == 3);
        REQUIRE(q.input_prompts->v == p.input_prompts->v);
        REQUIRE(q.key_prompts.size() == p.key_prompts.size());
    }

    Rng rng(5);
    FeatureSeq feats;
    for (int i = 0; i < 40; ++i) {
        FeatureFrame f(3);
        for (auto& x : f) x = float(rng.normal());
        feats.push_back(f);
    }
    Codebook cb = kmeans_fit(feats, 4, 25, 11);
    fs::path c1 = dir / "cb1.ckpt", c2 = dir / "cb2.ckpt";
    save_checkpoint(c1.string(), checkpoint_of(cb));
    Codebook cb2 = codebook_from_checkpoint(load_checkpoint(c1.string()));
    save_checkpoint(c2.string(), checkpoint_of(cb2));
    REQUIRE(file_bytes(c1) == file_bytes(c2));
    REQUIRE(cb2.k == cb.k);
    REQUIRE(cb2.d_f == cb.d_f);
    REQUIRE(cb2.centroids == cb.centroids);
}

TEST_CASE("corrupt checkpoint files are rejected") {
    fs::path dir = scratch_dir("ckpt_corrupt");
    PromptSet<float> p = prompt_init<float>(PromptMode::deep, 2, tiny_config(), 8);
    fs::path good = dir / "good.ckpt";
    save_checkpoint(good.string(), checkpoint_of(p));
    std::string bytes = file_bytes(good);

    SECTION("payload bit flip breaks the checksum") {
        std::string bad = bytes;
        bad.back() = char(bad.back() ^ 0x40);
        write_bytes(dir / "flip.ckpt", bad);
        REQUIRE_THROWS_WITH(load_checkpoint((dir / "flip.ckpt").string()),
                            Catch::Matchers::ContainsSubstring("checksum"));
    }
    SECTION("truncated payload is detected") {
        write_bytes(dir / "trunc.ckpt", bytes.substr(0, bytes.size() - 3));
        REQUIRE_THROWS(load_checkpoint((dir / "trunc.ckpt").string()));
    }
    SECTION("wrong magic line is detected") {
        std::string bad = "unitprompt-checkpoint v9" + bytes.substr(24);
        write_bytes(dir / "magic.ckpt", bad);
        REQUIRE_THROWS(load_checkpoint((dir / "magic.ckpt").string()));
    }
    SECTION("trailing garbage is detected") {
        write_bytes(dir / "tail.ckpt", bytes + "xx");
        REQUIRE_THROWS(load_checkpoint((dir / "tail.ckpt").string()));
    }
}

TEST_CASE("prompt checkpoints stay far smaller than the model checkpoint") {
    fs::path dir = scratch_dir("ckpt_sizes");
    ULMConfig desk;  // default desk-scale geometry
    ULM<float> m = ulm_init<float>(desk, 1);
    fs::path mp = dir / "ulm.ckpt";
    save_checkpoint(mp.string(), checkpoint_of(m));
    auto model_size = double(fs::file_size(mp));

    PromptSet<float> input6 = prompt_init<float>(PromptMode::input, 6, desk, 2);
    PromptSet<float> deep2 = prompt_init<float>(PromptMode::deep, 2, desk, 2);
    fs::path ip = dir / "input6.ckpt", dp = dir / "deep2.ckpt";
    save_checkpoint(ip.string(), checkpoint_of(input6));
    save_checkpoint(dp.string(), checkpoint_of(deep2));

    REQUIRE(double(fs::file_size(ip)) < 0.01 * model_size);
    REQUIRE(double(fs::file_size(dp)) < 0.01 * model_size);
}

TEST_CASE("dataset directories round-trip") {
    fs::path dir = scratch_dir("datafiles");
    std::vector<Dataset> sets;
    sets.push_back(gen_cls_single(11, 4, SplitSizes{32, 8, 8}));
    sets.push_back(gen_cls_multi(12, 3, SplitSizes{48, 12, 12}));
    sets.push_back(gen_seq_gen(13, int(seq_alphabet().size()), {{5, 10}, {20, 30}},
                               SplitSizes{30, 6, 6}));
    sets.push_back(gen_slot_gen(14, SplitSizes{48, 8, 8}));

    for (const auto& ds : sets) {
        fs::path sub = dir / task_kind_name(ds.kind);
        save_dataset(sub.string(), ds);
        Dataset back = load_dataset(sub.string());
        REQUIRE(back.kind == ds.kind);
        REQUIRE(back.class_set == ds.class_set);
        REQUIRE(back.train == ds.train);
        REQUIRE(back.valid == ds.valid);
        REQUIRE(back.test == ds.test);
    }
}

TEST_CASE("feature files round-trip") {
    fs::path dir = scratch_dir("features");
    std::vector<FeatureRecord> records;
    Rng rng(3);
    for (int i = 0; i < 3; ++i) {
        FeatureRecord fr;
        fr.id = format_msg("rec-", i);
        for (int t = 0; t < 5; ++t) {
            FeatureFrame f(2);
            f[0] = float(rng.normal() * 1e-3);
            f[1] = float(-rng.uniform(0.0, 9.0));
            fr.features.push_back(f);
        }
        records.push_back(fr);
    }
    fs::path p = dir / "feats.jsonl";
    save_features(p.string(), records);
    auto back = load_features(p.string());
    REQUIRE(back.size() == records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        REQUIRE(back[i].id == records[i].id);
        REQUIRE(back[i].features == records[i].features);
    }
}

TEST_CASE("csv files round-trip and reject ragged rows") {
    fs::path dir = scratch_dir("csv");
    CsvTable t = metrics_table();
    append_metric(t, "cls_single", "deep", 2, 320, 7, "accuracy", 93.75);
    append_metric(t, "seq_gen", "input", 6, 192, 8, "cer_5_10", 12.5);
    fs::path p = dir / "m.csv";
    save_csv(p.string(), t);
    CsvTable back = load_csv(p.string());
    REQUIRE(back.header == t.header);
    REQUIRE(back.rows == t.rows);

    write_bytes(dir / "ragged.csv", "a,b\n1,2\n3\n");
    REQUIRE_THROWS(load_csv((dir / "ragged.csv").string()));
}

TEST_CASE("config files parse with defaults, overrides, and strict keys") {
    SECTION("defaults") {
        KeyValueConfig kv;
        ExperimentConfig e = resolve_experiment(kv);
        REQUIRE(e.task == TaskKind::cls_multi);
        REQUIRE(e.tune.lr == Catch::Approx(5e-3));
        REQUIRE(e.tune.patience == 5);
        REQUIRE(e.buckets.size() == 3);
        REQUIRE(e.buckets[2] == std::pair<int, int>{50, 80});
    }
    SECTION("overrides, comments, and whitespace") {
        KeyValueConfig kv;
        kv.parse_text("# header comment\n"
                      "task.kind = seq_gen\n"
                      "  ulm.d=48   # inline comment\n"
                      "data.buckets = 4-6,9-12\n"
                      "\n");
        ExperimentConfig e = resolve_experiment(kv);
        kv.reject_unknown_keys();
        REQUIRE(e.task == TaskKind::seq_gen);
        REQUIRE(e.ulm.d == 48);
        REQUIRE(e.buckets == std::vector<std::pair<int, int>>{{4, 6}, {9, 12}});
    }
    SECTION("fine-tuning gets its own default learning rate") {
        KeyValueConfig kv;
        kv.parse_text("tune.method = finetune_lm\n");
        ExperimentConfig e = resolve_experiment(kv);
        REQUIRE(e.tune.mode == TrainMode::finetune_lm);
        REQUIRE(e.tune.lr == Catch::Approx(1e-4));
        REQUIRE_THROWS(e.prompt_mode());
    }
    SECTION("unknown keys are rejected") {
        KeyValueConfig kv;
        kv.parse_text("ulm.depht = 3\n");
        resolve_experiment(kv);
        REQUIRE_THROWS_WITH(kv.reject_unknown_keys(),
                            Catch::Matchers::ContainsSubstring("ulm.depht"));
    }
    SECTION("malformed values are rejected") {
        KeyValueConfig bad_int;
        bad_int.parse_text("ulm.L = four\n");
        REQUIRE_THROWS(resolve_experiment(bad_int));

        KeyValueConfig bad_line;
        REQUIRE_THROWS(bad_line.parse_line("no equals sign here"));

        KeyValueConfig bad_bucket;
        bad_bucket.parse_text("data.buckets = 5\n");
        REQUIRE_THROWS(resolve_experiment(bad_bucket));

        KeyValueConfig bad_method;
        bad_method.parse_text("tune.method = adapters\n");
        REQUIRE_THROWS(resolve_experiment(bad_method));
    }
    SECTION("dump and re-parse is a fixed point") {
        KeyValueConfig kv;
        std::string dumped = dump_experiment(resolve_experiment(kv));
        KeyValueConfig again;
        again.parse_text(dumped);
        std::string dumped2 = dump_experiment(resolve_experiment(again));
        again.reject_unknown_keys();
        REQUIRE(dumped == dumped2);
    }
}

TEST_CASE("command pipeline produces reproducible artifacts") {
    fs::path dir = scratch_dir("cli_pipeline");
    EnvGuard guard("UNITPROMPT_RESULTS", dir.string());

    fs::path cfg_path = dir / "cfg.txt";
    detail::atomic_write_text(cfg_path.string(),
                              "task.kind = cls_single\n"
                              "data.seed = 11\n"
                              "data.train = 24\n"
                              "data.valid = 12\n"
                              "data.test = 12\n"
                              "data.n_classes = 4\n"
                              "ulm.L = 2\n"
                              "ulm.d = 32\n"
                              "ulm.h = 4\n"
                              "ulm.d_ff = 64\n"
                              "ulm.t_max = 144\n"
                              "pretrain.corpus_size = 60\n"
                              "pretrain.steps = 25\n"
                              "tune.method = deep\n"
                              "prompt.l = 2\n"
                              "tune.steps = 30\n"
                              "tune.batch = 6\n");
    std::string cfg = cfg_path.string();

    REQUIRE(cmd_gen_data(cfg, "data") == 0);
    Dataset loaded = load_dataset((dir / "data").string());
    REQUIRE(loaded.train.size() == 24);
    REQUIRE(loaded == load_experiment(cfg).make_dataset());

    REQUIRE(cmd_pretrain(cfg, "ulm.ckpt", "pre.csv") == 0);
    REQUIRE(fs::exists(dir / "ulm.ckpt"));
    REQUIRE(load_csv((dir / "pre.csv").string()).rows.size() >= 25);

    REQUIRE(cmd_build_verbalizer("data", "verb.txt", 100, false, 0) == 0);
    Verbalizer verb = verbalizer_from_text(detail::read_text((dir / "verb.txt").string()), 100);
    REQUIRE(verb.rank_order.size() == 4);

    std::string ulm_before = file_bytes(dir / "ulm.ckpt");
    REQUIRE(cmd_tune(cfg, "ulm.ckpt", "data", "verb.txt", "prompts.ckpt", "tune.csv") == 0);
    REQUIRE(file_bytes(dir / "ulm.ckpt") == ulm_before);

    REQUIRE(cmd_tune(cfg, "ulm.ckpt", "data", "verb.txt", "prompts_again.ckpt", "") == 0);
    REQUIRE(file_bytes(dir / "prompts.ckpt") == file_bytes(dir / "prompts_again.ckpt"));

    REQUIRE(cmd_eval(cfg, "ulm.ckpt", "prompts.ckpt", "data", "verb.txt", "test",
                     "metrics.csv") == 0);
    std::string metrics_once = file_bytes(dir / "metrics.csv");
    REQUIRE(cmd_eval(cfg, "ulm.ckpt", "prompts.ckpt", "data", "verb.txt", "test",
                     "metrics.csv") == 0);
    REQUIRE(file_bytes(dir / "metrics.csv") == metrics_once);

    CsvTable metrics = load_csv((dir / "metrics.csv").string());
    REQUIRE(metrics.header == metrics_table().header);
    REQUIRE(metrics.rows.size() == 1);
    REQUIRE(metrics.rows[0][0] == "cls_single");
    REQUIRE(metrics.rows[0][1] == "deep");
    REQUIRE(metrics.rows[0][2] == "2");
    REQUIRE(metrics.rows[0][3] == std::to_string(count_trainable_params(PromptMode::deep, 2, 32, 2)));
    REQUIRE(metrics.rows[0][5] == "accuracy");

    REQUIRE(cmd_generate("ulm.ckpt", "prompts.ckpt", "verb.txt", "5,9,3,22", 4) == 0);

    REQUIRE(cmd_report(".", "rep") == 0);
    CsvTable by_length = load_csv((dir / "rep" / "accuracy_vs_length.csv").string());
    REQUIRE(by_length.rows.size() == 1);
    REQUIRE(by_length.rows[0][4] == "1");

    SECTION("mismatched artifacts are refused") {
        fs::path cfg2_path = dir / "cfg2.txt";
        detail::atomic_write_text(cfg2_path.string(),
                                  detail::read_text(cfg) + "ulm.d = 48\n");
        REQUIRE_THROWS(cmd_tune(cfg2_path.string(), "ulm.ckpt", "data", "verb.txt", "x.ckpt", ""));
    }
}

TEST_CASE("report emits per-length rows with the deep parameter formula") {
    fs::path dir = scratch_dir("cli_report");
    EnvGuard guard("UNITPROMPT_RESULTS", dir.string());

    int d = 64, L = 4;
    CsvTable t = metrics_table();
    for (uint64_t seed : {1ULL, 2ULL})
        for (int l : {1, 2, 3, 6})
            append_metric(t, "cls_single", "deep", l, count_trainable_params(PromptMode::deep, l, d, L),
                          seed, "accuracy", 50.0 + l + double(seed));
    append_metric(t, "seq_gen", "deep", 3, count_trainable_params(PromptMode::deep, 3, d, L), 1,
                  "cer_5_10", 8.0);
    append_metric(t, "seq_gen", "deep", 3, count_trainable_params(PromptMode::deep, 3, d, L), 1,
                  "cer_50_80", 30.0);
    save_csv((dir / "metrics.csv").string(), t);

    REQUIRE(cmd_report(".", "rep") == 0);

    CsvTable by_length = load_csv((dir / "rep" / "accuracy_vs_length.csv").string());
    REQUIRE(by_length.rows.size() == 4);
    for (const auto& row : by_length.rows) {
        long long l = std::stoll(row[2]);
        REQUIRE(std::stoll(row[3]) == l * d * (1 + 2 * L));
        REQUIRE(row[4] == "2");  // two seeds averaged
        REQUIRE(std::stod(row[5]) == Catch::Approx(50.0 + double(l) + 1.5));
    }

    CsvTable by_params = load_csv((dir / "rep" / "accuracy_vs_params.csv").string());
    REQUIRE(by_params.rows.size() == 4);
    for (size_t i = 1; i < by_params.rows.size(); ++i)
        REQUIRE(std::stoll(by_params.rows[i][2]) > std::stoll(by_params.rows[i - 1][2]));

    CsvTable by_bucket = load_csv((dir / "rep" / "cer_vs_bucket.csv").string());
    REQUIRE(by_bucket.rows.size() == 2);
    REQUIRE(by_bucket.rows[0][3] == "5");
    REQUIRE(by_bucket.rows[0][4] == "10");
    REQUIRE(by_bucket.rows[1][3] == "50");
    REQUIRE(std::stod(by_bucket.rows[1][6]) == Catch::Approx(30.0));
}

TEST_CASE("quantize command fits and applies codebooks") {
    fs::path dir = scratch_dir("cli_quantize");
    EnvGuard guard("UNITPROMPT_RESULTS", dir.string());

    Rng rng(19);
    std::vector<FeatureRecord> records;
    for (int r = 0; r < 2; ++r) {
        FeatureRecord fr;
        fr.id = format_msg("utt-", r);
        for (int t = 0; t < 30; ++t) {
            int cluster = int(rng.uniform_int(0, 2));
            FeatureFrame f(4);
            for (auto& x : f) x = float(cluster * 10 + rng.normal() * 0.1);
            fr.features.push_back(f);
        }
        records.push_back(fr);
    }
    save_features((dir / "feats.jsonl").string(), records);

    REQUIRE(cmd_quantize("feats.jsonl", "", "cb.ckpt", "units.jsonl", 3, 20, 5) == 0);
    REQUIRE(fs::exists(dir / "cb.ckpt"));
    REQUIRE(cmd_quantize("feats.jsonl", "cb.ckpt", "", "units2.jsonl", 3, 20, 5) == 0);
    REQUIRE(file_bytes(dir / "units.jsonl") == file_bytes(dir / "units2.jsonl"));

    // emitted sequences are deduplicated: no adjacent repeats anywhere
    std::istringstream in(detail::read_text((dir / "units.jsonl").string()));
    std::string line;
    int n_lines = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto rec = nlohmann::json::parse(line);
        auto units = rec.at("units").get<UnitSequence>();
        REQUIRE_FALSE(units.empty());
        for (size_t i = 1; i < units.size(); ++i) REQUIRE(units[i] != units[i - 1]);
        ++n_lines;
    }
    REQUIRE(n_lines == 2);

    REQUIRE_THROWS(cmd_quantize("feats.jsonl", "", "", "", 3, 20, 5));
}
